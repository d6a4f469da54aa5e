//! Adapter from the CAMUS MetaImage release to the PNG study layout.
//!
//! CAMUS ships `patientNNNN/patientNNNN_4CH_ED.mhd` (frame) and
//! `patientNNNN/patientNNNN_4CH_ED_gt.mhd` (labels), each a small text
//! header pointing at a raw 8-bit data file. Only uncompressed `MET_UCHAR`
//! data is supported.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{write_study, EchoFrame, LabelMap, StudyRecord};
use crate::error::{Error, Result};

/// An 8-bit 2-D MetaImage.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MetaImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

fn invalid(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::InvalidRaster(format!("{}: {msg}", path.display()))
}

pub fn read_metaimage(header_path: &Path) -> Result<MetaImage> {
    let text = fs::read_to_string(header_path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(header_path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let fields: HashMap<String, String> = text
        .lines()
        .filter_map(|line| line.split_once('='))
        .map(|(k, v)| (k.trim().to_owned(), v.trim().to_owned()))
        .collect();
    let get = |key: &str| fields.get(key).ok_or_else(|| invalid(header_path, format!("missing {key}")));

    if get("ElementType")? != "MET_UCHAR" {
        return Err(invalid(header_path, format!("unsupported element type {}", get("ElementType")?)));
    }
    if fields.get("CompressedData").is_some_and(|v| v.eq_ignore_ascii_case("true")) {
        return Err(invalid(header_path, "compressed data is not supported"));
    }
    if fields
        .get("ElementNumberOfChannels")
        .is_some_and(|v| v != "1")
    {
        return Err(invalid(header_path, "expected a single channel"));
    }
    let dims: Vec<usize> = get("DimSize")?
        .split_whitespace()
        .map(|d| d.parse().map_err(|_| invalid(header_path, format!("bad DimSize entry {d:?}"))))
        .collect::<Result<_>>()?;
    let (width, height) = match dims.as_slice() {
        [w, h] | [w, h, 1] => (*w, *h),
        other => return Err(invalid(header_path, format!("expected a 2-D image, got dims {other:?}"))),
    };
    let data_name = get("ElementDataFile")?;
    let data_path: PathBuf = header_path.parent().unwrap_or(Path::new(".")).join(data_name);
    let raw = fs::read(&data_path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(data_path.clone()),
        _ => Error::Io(e),
    })?;
    let header_size: usize = fields.get("HeaderSize").and_then(|v| v.parse().ok()).unwrap_or(0);
    let need = width * height;
    if raw.len() < header_size + need {
        return Err(invalid(&data_path, format!("{} bytes, expected {}", raw.len(), header_size + need)));
    }
    Ok(MetaImage {
        width,
        height,
        pixels: raw[header_size..header_size + need].to_vec(),
    })
}

/// Converts one CAMUS patient directory into a [`StudyRecord`].
pub fn read_camus_study(camus_root: &Path, patient_id: &str) -> Result<StudyRecord> {
    let dir = camus_root.join(patient_id);
    let image = read_metaimage(&dir.join(format!("{patient_id}_4CH_ED.mhd")))?;
    let mask = read_metaimage(&dir.join(format!("{patient_id}_4CH_ED_gt.mhd")))?;
    StudyRecord::new(
        patient_id,
        EchoFrame::from_u8(image.width, image.height, &image.pixels)?,
        LabelMap::new(mask.width, mask.height, mask.pixels)?,
    )
}

/// Converts every `patient*` directory under `camus_root` that has a 4CH ED
/// frame, writing PNG studies to `out_root`. Returns the converted ids.
pub fn import_camus(camus_root: &Path, out_root: &Path) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(camus_root)? {
        let entry = entry?;
        let Some(id) = entry.file_name().to_str().map(str::to_owned) else {
            continue;
        };
        if entry.file_type()?.is_dir() && entry.path().join(format!("{id}_4CH_ED.mhd")).is_file() {
            ids.push(id);
        }
    }
    ids.sort();
    for id in &ids {
        write_study(out_root, &read_camus_study(camus_root, id)?)?;
    }
    Ok(ids)
}
