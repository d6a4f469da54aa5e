use super::{EchoFrame, LabelMap, StudyRecord};
use crate::error::{Error, Result};

/// Side length every study is resized to before training.
pub const WORKING_SIZE: usize = 256;

/// Source index whose pixel centre is closest to destination pixel `dst`.
fn nearest_index(dst: usize, src_len: usize, dst_len: usize) -> usize {
    ((2 * dst + 1) * src_len / (2 * dst_len)).min(src_len - 1)
}

/// Nearest-neighbour resize; every output label is copied from some input
/// pixel, so no new labels appear.
pub fn resize_nearest(mask: &LabelMap, width: usize, height: usize) -> LabelMap {
    let xs: Vec<usize> = (0..width).map(|x| nearest_index(x, mask.width(), width)).collect();
    let mut pixels = Vec::with_capacity(width * height);
    for y in 0..height {
        let sy = nearest_index(y, mask.height(), height);
        pixels.extend(xs.iter().map(|&sx| mask.get(sx, sy)));
    }
    LabelMap::new(width, height, pixels).expect("labels copied from a valid map")
}

/// Sample positions and weights for bilinear interpolation with
/// half-pixel centres.
fn bilinear_taps(dst_len: usize, src_len: usize) -> Vec<(usize, usize, f32)> {
    let scale = src_len as f64 / dst_len as f64;
    (0..dst_len)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(src_len - 1);
            (lo, hi, (s - lo as f64) as f32)
        })
        .collect()
}

pub fn resize_bilinear(frame: &EchoFrame, width: usize, height: usize) -> EchoFrame {
    let xs = bilinear_taps(width, frame.width());
    let ys = bilinear_taps(height, frame.height());
    let src = frame.pixels();
    let w = frame.width();
    let lerp = |a: f32, b: f32, t: f32| a + (b - a) * t;
    let mut pixels = Vec::with_capacity(width * height);
    for &(y0, y1, ty) in &ys {
        for &(x0, x1, tx) in &xs {
            let top = lerp(src[y0 * w + x0], src[y0 * w + x1], tx);
            let bottom = lerp(src[y1 * w + x0], src[y1 * w + x1], tx);
            pixels.push(lerp(top, bottom, ty).clamp(0.0, 1.0));
        }
    }
    EchoFrame::new(width, height, pixels).expect("interpolated values stay in [0, 1]")
}

/// Resizes a study to `size × size`: bilinear for the frame, nearest
/// neighbour for the mask. Nothing else is altered.
pub fn preprocess_to(record: &StudyRecord, size: usize) -> Result<StudyRecord> {
    if record.image.width() == 0 || record.image.height() == 0 || size == 0 {
        return Err(Error::InvalidDimensions(format!(
            "cannot resize {}x{} to {size}x{size}",
            record.image.width(),
            record.image.height()
        )));
    }
    StudyRecord::new(
        record.patient_id.clone(),
        resize_bilinear(&record.image, size, size),
        resize_nearest(&record.mask, size, size),
    )
}

/// [`preprocess_to`] at the 256×256 working resolution.
pub fn preprocess(record: &StudyRecord) -> Result<StudyRecord> {
    preprocess_to(record, WORKING_SIZE)
}
