//! File-level driver: loads the training studies, runs the step loop, writes
//! the loss log and checkpoints, and resumes from a checkpoint.
//!
//! Output layout under `out_dir`:
//!
//! ```text
//! config.toml
//! losses.csv
//! checkpoints/iter-000500.ckpt
//! experiment-e.ckpt
//! ```

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{load_checkpoint, save_checkpoint, ExperimentConfig, SplitConfig, TrainConfig, Trainer};
use crate::dataio::{batch_iterator, load_study, preprocess_to, BatchIterator, SplitManifest, StudyRecord};
use crate::error::{Error, Result};
use crate::exec;
use crate::networks::ModelConfig;
use crate::objectives::LossReport;

pub const LOSS_LOG: &str = "losses.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const FINAL_CHECKPOINT_PREFIX: &str = "experiment-";
const RUN_CONFIG: &str = "config.toml";
const LOG_EVERY: u64 = 100;

/// Loads and resizes the listed studies, in the order given.
pub fn load_records(data_root: &Path, ids: &[String], size: usize) -> Result<Vec<StudyRecord>> {
    exec::map_indexed(ids.len(), |i| preprocess_to(&load_study(data_root, &ids[i])?, size))
        .into_iter()
        .collect()
}

fn periodic_path(out_dir: &Path, iteration: u64) -> PathBuf {
    out_dir.join(CHECKPOINT_DIR).join(format!("iter-{iteration:06}.ckpt"))
}

fn final_path(out_dir: &Path, state: &Trainer) -> PathBuf {
    out_dir.join(format!("{FINAL_CHECKPOINT_PREFIX}{}.ckpt", state.condition_spec().name()))
}

fn training_stream(state: &Trainer, data_root: &Path) -> Result<BatchIterator> {
    let manifest = state
        .manifest()
        .ok_or_else(|| Error::InvalidConfig("training state carries no split manifest".into()))?;
    if manifest.train_ids.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let records = load_records(data_root, &manifest.train_ids, state.model_config().image_size)?;
    let mut stream = batch_iterator(
        &records,
        &state.condition_spec(),
        state.train_config().batch_size,
        state.train_config().seed,
    )?;
    stream.seek(state.cursor());
    Ok(stream)
}

fn drive(state: &mut Trainer, stream: &mut BatchIterator, log: &mut impl Write, out_dir: &Path) -> Result<()> {
    let total = state.train_config().total_iterations;
    let interval = state.train_config().checkpoint_interval;
    while state.iteration() < total {
        let batch = stream.next_batch();
        let report: LossReport = match state.train_step(&batch) {
            Ok(r) => r,
            Err(e) => {
                log.flush()?;
                return Err(e);
            }
        };
        state.set_cursor(stream.cursor());
        writeln!(log, "{}", report.csv_row())?;
        if report.iteration.is_multiple_of(LOG_EVERY) {
            log::info!(
                "iteration {} d_loss {:.5} g_adv {:.5} g_recon {:.5}",
                report.iteration,
                report.d_loss,
                report.g_adv,
                report.g_recon
            );
        }
        if interval > 0 && report.iteration.is_multiple_of(interval) {
            log.flush()?;
            save_checkpoint(state, &periodic_path(out_dir, report.iteration))?;
        }
    }
    log.flush()?;
    save_checkpoint(state, &final_path(out_dir, state))?;
    Ok(())
}

/// Trains one experiment from scratch on `manifest.train_ids`.
pub fn run_experiment(
    train: &TrainConfig,
    model: &ModelConfig,
    manifest: &SplitManifest,
    data_root: &Path,
    out_dir: &Path,
) -> Result<Trainer> {
    let mut state = Trainer::new(train.clone(), model.clone())?;
    state.set_manifest(manifest.clone());
    let mut stream = training_stream(&state, data_root)?;
    fs::create_dir_all(out_dir)?;
    ExperimentConfig {
        model: model.clone(),
        train: train.clone(),
        split: SplitConfig {
            seed: manifest.seed,
            test_count: manifest.test_ids.len(),
        },
    }
    .save(&out_dir.join(RUN_CONFIG))?;
    let mut log = BufWriter::new(File::create(out_dir.join(LOSS_LOG))?);
    writeln!(log, "{}", LossReport::CSV_HEADER)?;
    drive(&mut state, &mut stream, &mut log, out_dir)?;
    Ok(state)
}

/// Drops loss-log rows past `iteration`, so a resumed run does not repeat
/// them.
fn truncate_log(path: &Path, iteration: u64) -> Result<()> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
        Err(e) => return Err(e.into()),
    };
    let mut kept = format!("{}\n", LossReport::CSV_HEADER);
    for line in text.lines().skip(1) {
        let row_iter = line.split(',').next().and_then(|v| v.parse::<u64>().ok());
        match row_iter {
            Some(i) if i <= iteration => {
                kept.push_str(line);
                kept.push('\n');
            }
            _ => break,
        }
    }
    fs::write(path, kept)?;
    Ok(())
}

/// Continues a run from `checkpoint` until its configured iteration count.
/// The data stream picks up at the saved cursor, so the result matches an
/// uninterrupted run.
pub fn resume_experiment(checkpoint: &Path, data_root: &Path, out_dir: &Path) -> Result<Trainer> {
    let mut state = load_checkpoint(checkpoint)?;
    let mut stream = training_stream(&state, data_root)?;
    fs::create_dir_all(out_dir)?;
    let log_path = out_dir.join(LOSS_LOG);
    truncate_log(&log_path, state.iteration())?;
    let mut log = BufWriter::new(fs::OpenOptions::new().append(true).open(&log_path)?);
    drive(&mut state, &mut stream, &mut log, out_dir)?;
    Ok(state)
}
