//! Procedural stand-ins for real studies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EchoFrame, LabelMap, StudyRecord, ATRIUM, BACKGROUND, MYOCARDIUM, VENTRICLE};
use crate::error::{Error, Result};

pub const MIN_FIXTURE_SIZE: usize = 32;

/// Mean intensity per label: dark blood pools, bright muscle wall.
const BASE_INTENSITY: [f32; 4] = [0.35, 0.06, 0.78, 0.10];
const SPECKLE: f32 = 0.08;

fn inside(x: f32, y: f32, cx: f32, cy: f32, rx: f32, ry: f32) -> bool {
    let dx = (x - cx) / rx;
    let dy = (y - cy) / ry;
    dx * dx + dy * dy <= 1.0
}

/// Draws `count` seeded studies of `size × size`: an elliptical ventricle
/// (1) wrapped in a myocardial ring (2), an atrium (3) below it, and a
/// matching frame of label-dependent intensity plus uniform speckle.
pub fn make_synthetic_fixture(count: usize, seed: u64, size: usize) -> Result<Vec<StudyRecord>> {
    if size < MIN_FIXTURE_SIZE {
        return Err(Error::InvalidDimensions(format!(
            "fixture size {size} is below {MIN_FIXTURE_SIZE}"
        )));
    }
    if count == 0 {
        return Err(Error::InvalidConfig("fixture count must be at least 1".into()));
    }
    (0..count).map(|i| fixture_record(i, seed, size)).collect()
}

fn fixture_record(index: usize, seed: u64, size: usize) -> Result<StudyRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let s = size as f32;
    let cx = s * rng.random_range(0.45..0.55);
    let cy = s * rng.random_range(0.34..0.42);
    let rx = s * rng.random_range(0.09..0.13);
    let ry = s * rng.random_range(0.16..0.22);
    let wall = s * rng.random_range(0.035..0.05);
    let ax = cx + s * rng.random_range(-0.03..0.03);
    let arx = s * rng.random_range(0.08..0.11);
    let ary = s * rng.random_range(0.07..0.10);
    let ay = cy + ry + wall + ary * 0.9;

    let mut labels = vec![BACKGROUND; size * size];
    for y in 0..size {
        for x in 0..size {
            let (px, py) = (x as f32 + 0.5, y as f32 + 0.5);
            labels[y * size + x] = if inside(px, py, cx, cy, rx, ry) {
                VENTRICLE
            } else if inside(px, py, cx, cy, rx + wall, ry + wall) {
                MYOCARDIUM
            } else if inside(px, py, ax, ay, arx, ary) {
                ATRIUM
            } else {
                BACKGROUND
            };
        }
    }
    let pixels: Vec<f32> = labels
        .iter()
        .map(|&l| (BASE_INTENSITY[l as usize] + rng.random_range(-SPECKLE..SPECKLE)).clamp(0.0, 1.0))
        .collect();
    StudyRecord::new(
        format!("fixture{:04}", index + 1),
        EchoFrame::new(size, size, pixels)?,
        LabelMap::new(size, size, labels)?,
    )
}
