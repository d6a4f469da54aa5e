//! Mask-to-echo generation from trained checkpoints.
//!
//! Loaded generators are immutable; every request runs the eval-mode
//! forward pass, so the same mask always yields the same image.

mod server;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

pub use server::{router, serve, AppState};

use crate::dataio::{
    encode_frame_png, filter_condition, load_mask_file, resize_bilinear, resize_nearest, ConditionSpec, EchoFrame,
    LabelMap,
};
use crate::error::{Error, Result};
use crate::exec;
use crate::networks::Generator;
use crate::tensor::Tensor;
use crate::trainer::load_generator;

/// Default side length of generated images.
pub const DEFAULT_OUTPUT_SIZE: usize = 256;
const CHECKPOINT_EXTENSION: &str = "ckpt";

#[derive(Clone, Debug, PartialEq)]
pub struct GenerationRequest {
    pub mask: LabelMap,
    pub output_size: usize,
    pub checkpoint: String,
}

impl GenerationRequest {
    pub fn new(mask: LabelMap, checkpoint: impl Into<String>) -> Self {
        Self {
            mask,
            output_size: DEFAULT_OUTPUT_SIZE,
            checkpoint: checkpoint.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerationResponse {
    pub image: EchoFrame,
    pub checkpoint: String,
    pub condition_spec: ConditionSpec,
    pub latency_ms: f64,
}

/// What `/models` reports about one loaded generator.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelInfo {
    pub checkpoint: String,
    pub condition_spec: ConditionSpec,
    pub input_size: usize,
}

/// A generator together with the condition spec it was trained on.
#[derive(Clone, Debug)]
pub struct LoadedModel {
    id: String,
    generator: Generator,
    spec: ConditionSpec,
}

impl LoadedModel {
    pub fn new(id: impl Into<String>, generator: Generator, spec: ConditionSpec) -> Self {
        Self {
            id: id.into(),
            generator,
            spec,
        }
    }

    /// Loads the generator half of a checkpoint; the id is the file stem.
    pub fn load(path: &Path) -> Result<Self> {
        let (generator, header) = load_generator(path)?;
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::InvalidConfig(format!("checkpoint path {} has no usable name", path.display())))?;
        Ok(Self::new(id, generator, header.condition))
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn condition_spec(&self) -> ConditionSpec {
        self.spec
    }

    pub fn input_size(&self) -> usize {
        self.generator.config().image_size
    }

    pub fn info(&self) -> ModelInfo {
        ModelInfo {
            checkpoint: self.id.clone(),
            condition_spec: self.spec,
            input_size: self.input_size(),
        }
    }

    /// The condition tensor this model sees for `mask`: resized to the input
    /// grid, then restricted to the model's labels.
    pub fn condition_for(&self, mask: &LabelMap) -> Tensor {
        let s = self.input_size();
        let filtered = filter_condition(&resize_nearest(mask, s, s), &self.spec);
        Tensor::from_vec([1, 1, s, s], filtered.to_condition()).expect("resized mask matches the input grid")
    }

    /// Generates at the model's native resolution.
    pub fn generate_native(&self, mask: &LabelMap) -> Result<EchoFrame> {
        let s = self.input_size();
        let out = self.generator.infer(&self.condition_for(mask))?;
        EchoFrame::new(s, s, out.into_vec())
    }
}

/// Runs one request against `model`. Labels outside the model's spec are
/// zeroed rather than rejected.
pub fn generate_from_mask(request: &GenerationRequest, model: &LoadedModel) -> Result<GenerationResponse> {
    if request.output_size == 0 {
        return Err(Error::InvalidDimensions("output size must be positive".into()));
    }
    let start = Instant::now();
    let native = model.generate_native(&request.mask)?;
    let image = if request.output_size == model.input_size() {
        native
    } else {
        resize_bilinear(&native, request.output_size, request.output_size)
    };
    Ok(GenerationResponse {
        image,
        checkpoint: model.id.clone(),
        condition_spec: model.spec,
        latency_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Loaded models keyed by checkpoint id.
#[derive(Clone, Debug, Default)]
pub struct ModelRegistry {
    models: BTreeMap<String, LoadedModel>,
}

impl ModelRegistry {
    pub fn new(models: Vec<LoadedModel>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for m in models {
            let id = m.id.clone();
            if map.insert(id.clone(), m).is_some() {
                return Err(Error::InvalidConfig(format!("checkpoint id {id:?} appears twice")));
            }
        }
        Ok(Self { models: map })
    }

    /// Loads every path, skipping ones that fail with a warning. Fails only
    /// when nothing could be loaded.
    pub fn load(paths: &[PathBuf]) -> Result<Self> {
        let mut models = Vec::new();
        let mut last_error = None;
        for path in paths {
            match LoadedModel::load(path) {
                Ok(m) => models.push(m),
                Err(e) => {
                    log::warn!("skipping {}: {e}", path.display());
                    last_error = Some(e);
                }
            }
        }
        if models.is_empty() {
            return Err(last_error.unwrap_or_else(|| Error::ModelNotLoaded("no checkpoints given".into())));
        }
        Self::new(models)
    }

    pub fn get(&self, id: &str) -> Result<&LoadedModel> {
        self.models.get(id).ok_or_else(|| Error::ModelNotLoaded(id.to_owned()))
    }

    pub fn infos(&self) -> Vec<ModelInfo> {
        self.models.values().map(LoadedModel::info).collect()
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse> {
        generate_from_mask(request, self.get(&request.checkpoint)?)
    }
}

/// `*.ckpt` files directly inside `dir`, sorted.
pub fn checkpoints_in(dir: &Path) -> Result<Vec<PathBuf>> {
    files_with_extension(dir, CHECKPOINT_EXTENSION)
}

fn files_with_extension(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(dir.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext)) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Reads a mask PNG, generates, and writes an 8-bit grayscale PNG.
pub fn generate_file(model: &LoadedModel, mask_path: &Path, out_path: &Path, output_size: usize) -> Result<()> {
    let mask = load_mask_file(mask_path)?;
    let mut request = GenerationRequest::new(mask, model.id());
    request.output_size = output_size;
    let response = generate_from_mask(&request, model)?;
    if let Some(parent) = out_path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(out_path, encode_frame_png(&response.image)?)?;
    Ok(())
}

/// Generates one output per `*.png` mask in `mask_dir`, keeping file names.
/// Returns the written paths.
pub fn generate_directory(
    model: &LoadedModel,
    mask_dir: &Path,
    out_dir: &Path,
    output_size: usize,
) -> Result<Vec<PathBuf>> {
    let masks = files_with_extension(mask_dir, "png")?;
    fs::create_dir_all(out_dir)?;
    let outputs: Vec<PathBuf> = masks
        .iter()
        .map(|m| out_dir.join(m.file_name().expect("listed files have names")))
        .collect();
    exec::map_indexed(masks.len(), |i| generate_file(model, &masks[i], &outputs[i], output_size))
        .into_iter()
        .collect::<Result<Vec<()>>>()?;
    Ok(outputs)
}
