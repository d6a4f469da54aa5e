use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, ImageFormat};

use super::{EchoFrame, LabelMap, StudyRecord};
use crate::error::{Error, Result};

pub fn image_path(root: &Path, patient_id: &str) -> PathBuf {
    root.join(patient_id).join(format!("{patient_id}_4CH_ED.png"))
}

pub fn mask_path(root: &Path, patient_id: &str) -> PathBuf {
    root.join(patient_id).join(format!("{patient_id}_4CH_ED_gt.png"))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

/// Decodes a single-channel 8-bit PNG whose pixel values are labels.
pub fn decode_mask_png(bytes: &[u8]) -> Result<LabelMap> {
    match image::load_from_memory_with_format(bytes, ImageFormat::Png)? {
        DynamicImage::ImageLuma8(buf) => {
            let (w, h) = buf.dimensions();
            LabelMap::new(w as usize, h as usize, buf.into_raw())
        }
        other => Err(Error::InvalidRaster(format!(
            "mask must be 8-bit single-channel, got {:?}",
            other.color()
        ))),
    }
}

pub fn encode_mask_png(mask: &LabelMap) -> Result<Vec<u8>> {
    encode_gray(mask.width(), mask.height(), mask.pixels().to_vec())
}

/// Decodes a grayscale PNG into a frame normalised by `v / 255`. Colour
/// inputs are converted to luma first.
pub fn decode_frame_png(bytes: &[u8]) -> Result<EchoFrame> {
    let gray = image::load_from_memory_with_format(bytes, ImageFormat::Png)?.into_luma8();
    let (w, h) = gray.dimensions();
    EchoFrame::from_u8(w as usize, h as usize, gray.as_raw())
}

/// Encodes a frame as an 8-bit grayscale PNG, rounding half up.
pub fn encode_frame_png(frame: &EchoFrame) -> Result<Vec<u8>> {
    encode_gray(frame.width(), frame.height(), frame.to_u8())
}

fn encode_gray(width: usize, height: usize, raw: Vec<u8>) -> Result<Vec<u8>> {
    let buf = GrayImage::from_raw(width as u32, height as u32, raw)
        .ok_or_else(|| Error::InvalidDimensions(format!("{width}x{height}")))?;
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn load_mask_file(path: &Path) -> Result<LabelMap> {
    decode_mask_png(&read_bytes(path)?)
}

/// Reads one patient's end-diastolic frame and mask at native resolution.
pub fn load_study(root: &Path, patient_id: &str) -> Result<StudyRecord> {
    let image = decode_frame_png(&read_bytes(&image_path(root, patient_id))?)?;
    let mask = load_mask_file(&mask_path(root, patient_id))?;
    StudyRecord::new(patient_id, image, mask)
}

pub fn write_study(root: &Path, record: &StudyRecord) -> Result<()> {
    fs::create_dir_all(root.join(&record.patient_id))?;
    fs::write(image_path(root, &record.patient_id), encode_frame_png(&record.image)?)?;
    fs::write(mask_path(root, &record.patient_id), encode_mask_png(&record.mask)?)?;
    Ok(())
}

/// Patient ids under `root` that have a frame file, sorted.
pub fn list_studies(root: &Path) -> Result<Vec<String>> {
    let entries = fs::read_dir(root).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(root.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let mut ids = Vec::new();
    for entry in entries {
        let entry = entry?;
        if !entry.file_type()?.is_dir() {
            continue;
        }
        if let Some(id) = entry.file_name().to_str() {
            if image_path(root, id).is_file() {
                ids.push(id.to_owned());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_pair(root: &Path, id: &str, image: &[u8], mask: &[u8], w: u32, h: u32) {
        fs::create_dir_all(root.join(id)).unwrap();
        GrayImage::from_raw(w, h, image.to_vec()).unwrap().save(image_path(root, id)).unwrap();
        GrayImage::from_raw(w, h, mask.to_vec()).unwrap().save(mask_path(root, id)).unwrap();
    }

    #[test]
    fn loads_full_anatomy_study() {
        let dir = tempfile::tempdir().unwrap();
        write_pair(dir.path(), "patient0001", &[0, 128, 255, 7], &[0, 1, 2, 3], 2, 2);
        let rec = load_study(dir.path(), "patient0001").unwrap();
        assert_eq!(rec.mask.value_set().into_iter().collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        assert_eq!(rec.image.pixels()[2], 1.0);
        assert_eq!(rec.image.pixels()[0], 0.0);
        assert_eq!(rec.image.pixels()[1], 128.0 / 255.0);
    }

    #[test]
    fn background_only_mask_is_fine() {
        let dir = tempfile::tempdir().unwrap();
        write_pair(dir.path(), "p", &[9; 6], &[0; 6], 3, 2);
        let rec = load_study(dir.path(), "p").unwrap();
        assert!(rec.mask.pixels().iter().all(|&v| v == 0));
    }

    #[test]
    fn label_four_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        write_pair(dir.path(), "p", &[9; 4], &[0, 1, 4, 0], 2, 2);
        assert!(matches!(load_study(dir.path(), "p"), Err(Error::CorruptLabel(4))));
    }

    #[test]
    fn missing_files_are_not_found() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_study(dir.path(), "nobody"), Err(Error::NotFound(_))));
    }

    #[test]
    fn colour_masks_are_rejected() {
        let rgb = image::RgbImage::from_raw(1, 1, vec![1, 1, 1]).unwrap();
        let mut bytes = Cursor::new(Vec::new());
        rgb.write_to(&mut bytes, ImageFormat::Png).unwrap();
        assert!(matches!(decode_mask_png(bytes.get_ref()), Err(Error::InvalidRaster(_))));
    }

    #[test]
    fn mask_png_round_trip_is_lossless() {
        let mask = LabelMap::new(3, 2, vec![0, 1, 2, 3, 2, 1]).unwrap();
        assert_eq!(decode_mask_png(&encode_mask_png(&mask).unwrap()).unwrap(), mask);
    }

    #[test]
    fn lists_only_complete_study_directories() {
        let dir = tempfile::tempdir().unwrap();
        write_pair(dir.path(), "b", &[0], &[0], 1, 1);
        write_pair(dir.path(), "a", &[0], &[0], 1, 1);
        fs::create_dir_all(dir.path().join("empty")).unwrap();
        fs::write(dir.path().join("split.toml"), "").unwrap();
        assert_eq!(list_studies(dir.path()).unwrap(), vec!["a", "b"]);
    }
}
