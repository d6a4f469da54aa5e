//! Study ingestion and preparation.
//!
//! On disk a corpus is one directory per patient holding two single-channel
//! 8-bit PNGs:
//!
//! ```text
//! <root>/<id>/<id>_4CH_ED.png      grayscale frame
//! <root>/<id>/<id>_4CH_ED_gt.png   label map, pixel value = label 0..=3
//! ```
//!
//! [`camus`] converts the MetaImage layout of the public CAMUS release into
//! this form.

mod batch;
pub mod camus;
mod fixture;
mod io;
mod preprocess;
mod split;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use batch::{batch_iterator, Batch, BatchCursor, BatchIterator};
pub use fixture::{make_synthetic_fixture, MIN_FIXTURE_SIZE};
pub use io::{
    decode_frame_png, decode_mask_png, encode_frame_png, encode_mask_png, image_path, list_studies, load_mask_file,
    load_study, mask_path, write_study,
};
pub use preprocess::{preprocess, preprocess_to, resize_bilinear, resize_nearest, WORKING_SIZE};
pub use split::{make_split, SplitManifest, DEFAULT_TEST_COUNT};

use crate::error::{Error, Result};

pub const BACKGROUND: u8 = 0;
pub const VENTRICLE: u8 = 1;
pub const MYOCARDIUM: u8 = 2;
pub const ATRIUM: u8 = 3;
pub const MAX_LABEL: u8 = ATRIUM;

/// Integer label raster with values in `0..=3`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::InvalidDimensions(format!(
                "{} pixels for a {width}x{height} label map",
                pixels.len()
            )));
        }
        if let Some(&bad) = pixels.iter().find(|&&v| v > MAX_LABEL) {
            return Err(Error::CorruptLabel(bad));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![BACKGROUND; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn value_set(&self) -> BTreeSet<u8> {
        self.pixels.iter().copied().collect()
    }

    /// The generator's condition plane: raw label values as reals.
    pub fn to_condition(&self) -> Vec<f32> {
        self.pixels.iter().map(|&v| f32::from(v)).collect()
    }
}

/// Grayscale frame with intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EchoFrame {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
}

/// Maps `[0, 1]` to 8 bits, rounding half up.
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

impl EchoFrame {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::InvalidDimensions(format!(
                "{} pixels for a {width}x{height} frame",
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidRaster(format!("intensity {bad} outside [0, 1]")));
        }
        Ok(Self { width, height, pixels })
    }

    /// Linear normalisation of an 8-bit raster, `v / 255`.
    pub fn from_u8(width: usize, height: usize, raw: &[u8]) -> Result<Self> {
        Self::new(width, height, raw.iter().map(|&v| f32::from(v) / 255.0).collect())
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.pixels.iter().map(|&v| quantize(v)).collect()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }
}

/// The five condition sets: which anatomical labels the generator sees.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentName {
    A,
    B,
    C,
    D,
    E,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 5] = [Self::A, Self::B, Self::C, Self::D, Self::E];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::A => "a",
            Self::B => "b",
            Self::C => "c",
            Self::D => "d",
            Self::E => "e",
        }
    }
}

impl fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" => Ok(Self::A),
            "b" => Ok(Self::B),
            "c" => Ok(Self::C),
            "d" => Ok(Self::D),
            "e" => Ok(Self::E),
            other => Err(Error::InvalidConfig(format!("unknown experiment {other:?}, expected a-e"))),
        }
    }
}

/// Labels retained in the generator's condition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "SpecRepr", try_from = "SpecRepr")]
pub struct ConditionSpec {
    name: ExperimentName,
}

#[derive(Serialize, Deserialize)]
struct SpecRepr {
    name: ExperimentName,
    labels: Vec<u8>,
}

impl From<ConditionSpec> for SpecRepr {
    fn from(spec: ConditionSpec) -> Self {
        Self {
            name: spec.name,
            labels: spec.labels().to_vec(),
        }
    }
}

impl TryFrom<SpecRepr> for ConditionSpec {
    type Error = Error;

    fn try_from(repr: SpecRepr) -> Result<Self> {
        let spec = ConditionSpec::new(repr.name);
        if spec.labels() != repr.labels.as_slice() {
            return Err(Error::InvalidConfig(format!(
                "experiment {} keeps labels {:?}, not {:?}",
                repr.name,
                spec.labels(),
                repr.labels
            )));
        }
        Ok(spec)
    }
}

impl ConditionSpec {
    pub fn new(name: ExperimentName) -> Self {
        Self { name }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        name.parse().map(Self::new)
    }

    pub fn all() -> [ConditionSpec; 5] {
        ExperimentName::ALL.map(Self::new)
    }

    pub fn name(&self) -> ExperimentName {
        self.name
    }

    pub fn labels(&self) -> &'static [u8] {
        match self.name {
            ExperimentName::A => &[VENTRICLE],
            ExperimentName::B => &[ATRIUM],
            ExperimentName::C => &[VENTRICLE, MYOCARDIUM],
            ExperimentName::D => &[VENTRICLE, ATRIUM],
            ExperimentName::E => &[VENTRICLE, MYOCARDIUM, ATRIUM],
        }
    }

    pub fn contains(&self, label: u8) -> bool {
        self.labels().contains(&label)
    }
}

/// Keeps labels in `spec` at their original values and zeroes the rest.
pub fn filter_condition(mask: &LabelMap, spec: &ConditionSpec) -> LabelMap {
    let mut keep = [false; 4];
    for &label in spec.labels() {
        keep[label as usize] = true;
    }
    LabelMap {
        width: mask.width,
        height: mask.height,
        pixels: mask
            .pixels
            .iter()
            .map(|&v| if keep[v as usize] { v } else { BACKGROUND })
            .collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameTag {
    /// End-diastole.
    #[serde(rename = "ED")]
    Ed,
}

/// One patient's end-diastolic frame and its label map.
#[derive(Clone, Debug, PartialEq)]
pub struct StudyRecord {
    pub patient_id: String,
    pub frame: FrameTag,
    pub image: EchoFrame,
    pub mask: LabelMap,
}

impl StudyRecord {
    pub fn new(patient_id: impl Into<String>, image: EchoFrame, mask: LabelMap) -> Result<Self> {
        if image.width() != mask.width() || image.height() != mask.height() {
            return Err(Error::InvalidDimensions(format!(
                "image is {}x{} but mask is {}x{}",
                image.width(),
                image.height(),
                mask.width(),
                mask.height()
            )));
        }
        Ok(Self {
            patient_id: patient_id.into(),
            frame: FrameTag::Ed,
            image,
            mask,
        })
    }
}
