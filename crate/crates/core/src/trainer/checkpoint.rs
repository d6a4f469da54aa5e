//! Binary checkpoint format.
//!
//! ```text
//! magic      8 bytes  "ECHOGANC"
//! version    u32 LE
//! header_len u64 LE
//! header     JSON (CheckpointHeader)
//! tensors    f32 LE, concatenated in header order
//! ```
//!
//! Every float is stored bit-exactly, so a reloaded trainer continues
//! exactly where the saved one stopped.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{TrainConfig, Trainer};
use crate::dataio::{BatchCursor, ConditionSpec, SplitManifest};
use crate::error::{Error, Result};
use crate::networks::{build_generator, Generator, ModelConfig};
use crate::nn::Adam;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"ECHOGANC";
const PREAMBLE: usize = 8 + 4 + 8;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub iteration: u64,
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub condition: ConditionSpec,
    pub manifest: Option<SplitManifest>,
    pub cursor: BatchCursor,
    pub generator_adam_step: u64,
    pub discriminator_adam_step: u64,
    pub tensors: Vec<TensorEntry>,
}

fn adam_tensors<'a>(prefix: &str, opt: &'a Adam) -> Vec<(String, &'a [f32])> {
    let mut out = Vec::new();
    for (i, m) in opt.first_moment.iter().enumerate() {
        out.push((format!("{prefix}.m.{i}"), m.as_slice()));
    }
    for (i, v) in opt.second_moment.iter().enumerate() {
        out.push((format!("{prefix}.v.{i}"), v.as_slice()));
    }
    out
}

fn adam_tensors_mut<'a>(prefix: &str, opt: &'a mut Adam) -> Vec<(String, &'a mut Vec<f32>)> {
    let mut out = Vec::new();
    for (i, m) in opt.first_moment.iter_mut().enumerate() {
        out.push((format!("{prefix}.m.{i}"), m));
    }
    for (i, v) in opt.second_moment.iter_mut().enumerate() {
        out.push((format!("{prefix}.v.{i}"), v));
    }
    out
}

fn prefixed<'a>(prefix: &str, tensors: Vec<(String, &'a [f32])>) -> Vec<(String, &'a [f32])> {
    tensors.into_iter().map(|(n, t)| (format!("{prefix}.{n}"), t)).collect()
}

fn all_tensors(t: &Trainer) -> Vec<(String, &[f32])> {
    let mut out = prefixed("generator", t.generator.network().named_tensors());
    out.extend(prefixed("discriminator", t.discriminator.network().named_tensors()));
    out.extend(adam_tensors("adam.generator", &t.opt_generator));
    out.extend(adam_tensors("adam.discriminator", &t.opt_discriminator));
    out
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, msg.into()))
}

pub fn save_checkpoint(state: &Trainer, path: &Path) -> Result<()> {
    let tensors = all_tensors(state);
    let header = CheckpointHeader {
        format_version: CHECKPOINT_VERSION,
        iteration: state.iteration,
        train: state.train.clone(),
        model: state.model.clone(),
        condition: state.spec,
        manifest: state.manifest.clone(),
        cursor: state.cursor,
        generator_adam_step: state.opt_generator.step,
        discriminator_adam_step: state.opt_discriminator.step,
        tensors: tensors
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.clone(),
                len: t.len(),
            })
            .collect(),
    };
    let header_json = serde_json::to_vec(&header)?;
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("ckpt.partial");
    {
        let mut out = std::io::BufWriter::new(fs::File::create(&tmp)?);
        out.write_all(MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        out.write_all(&(header_json.len() as u64).to_le_bytes())?;
        out.write_all(&header_json)?;
        for (_, t) in &tensors {
            for v in t.iter() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        out.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

/// Validates the preamble and parses the header; returns it with the
/// offset where tensor data starts.
fn parse_header(bytes: &[u8]) -> Result<(CheckpointHeader, usize)> {
    if bytes.len() < PREAMBLE || &bytes[..8] != MAGIC {
        return Err(corrupt("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::IncompatibleCheckpoint {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let end = PREAMBLE
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| corrupt("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[PREAMBLE..end])?;
    if header.format_version != version {
        return Err(corrupt("header version disagrees with preamble"));
    }
    let data_len: usize = header.tensors.iter().map(|t| t.len * 4).sum();
    if bytes.len() != end + data_len {
        return Err(corrupt(format!(
            "expected {} bytes of tensor data, found {}",
            data_len,
            bytes.len() - end
        )));
    }
    Ok((header, end))
}

pub fn read_header(path: &Path) -> Result<CheckpointHeader> {
    parse_header(&read_file(path)?).map(|(h, _)| h)
}

/// Copies stored tensors into `targets` by name; every target must be present
/// with a matching length.
fn restore(
    header: &CheckpointHeader,
    bytes: &[u8],
    offset: usize,
    targets: Vec<(String, &mut Vec<f32>)>,
) -> Result<()> {
    let mut index = std::collections::HashMap::new();
    let mut pos = offset;
    for entry in &header.tensors {
        index.insert(entry.name.as_str(), (pos, entry.len));
        pos += entry.len * 4;
    }
    for (name, target) in targets {
        let &(start, len) = index
            .get(name.as_str())
            .ok_or_else(|| corrupt(format!("missing tensor {name}")))?;
        if len != target.len() {
            return Err(corrupt(format!("tensor {name} has {len} values, expected {}", target.len())));
        }
        for (dst, chunk) in target.iter_mut().zip(bytes[start..start + 4 * len].chunks_exact(4)) {
            *dst = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        }
    }
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Trainer> {
    let bytes = read_file(path)?;
    let (header, offset) = parse_header(&bytes)?;
    if header.condition.name() != header.train.experiment {
        return Err(corrupt("condition spec disagrees with training config"));
    }
    let mut state = Trainer::new(header.train.clone(), header.model.clone())?;
    {
        let Trainer {
            generator,
            discriminator,
            opt_generator,
            opt_discriminator,
            ..
        } = &mut state;
        let mut targets: Vec<(String, &mut Vec<f32>)> = Vec::new();
        targets.extend(
            generator
                .network_mut()
                .named_tensors_mut()
                .into_iter()
                .map(|(n, t)| (format!("generator.{n}"), t)),
        );
        targets.extend(
            discriminator
                .network_mut()
                .named_tensors_mut()
                .into_iter()
                .map(|(n, t)| (format!("discriminator.{n}"), t)),
        );
        targets.extend(adam_tensors_mut("adam.generator", opt_generator));
        targets.extend(adam_tensors_mut("adam.discriminator", opt_discriminator));
        restore(&header, &bytes, offset, targets)?;
    }
    state.opt_generator.step = header.generator_adam_step;
    state.opt_discriminator.step = header.discriminator_adam_step;
    state.iteration = header.iteration;
    state.manifest = header.manifest;
    state.cursor = header.cursor;
    Ok(state)
}

/// Loads only the generator, for inference.
pub fn load_generator(path: &Path) -> Result<(Generator, CheckpointHeader)> {
    let bytes = read_file(path)?;
    let (header, offset) = parse_header(&bytes)?;
    let mut generator = build_generator(&header.model, 0)?;
    let targets = generator
        .network_mut()
        .named_tensors_mut()
        .into_iter()
        .map(|(n, t)| (format!("generator.{n}"), t))
        .collect();
    restore(&header, &bytes, offset, targets)?;
    Ok((generator, header))
}
