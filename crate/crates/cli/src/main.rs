use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use echogan::dataio::{self, camus, list_studies, make_synthetic_fixture, write_study, SplitManifest};
use echogan::inference::{self, checkpoints_in, LoadedModel, ModelRegistry};
use echogan::networks::architecture_summary;
use echogan::trainer::{resume_experiment, run_experiment, ExperimentConfig};
use echogan::{Error, ExperimentName};

#[derive(Parser)]
#[command(name = "echogan", version, about = "Mask-conditioned echocardiogram synthesis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    /// Full-size networks at 256x256, 100k iterations.
    Full,
    /// 128x128, narrow layers, batch 4, 2000 iterations.
    Desk,
}

#[derive(Subcommand)]
enum Command {
    /// Train one experiment.
    Train {
        /// Experiment config (TOML). Defaults to the chosen preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "full")]
        preset: Preset,
        #[arg(long)]
        experiment: ExperimentName,
        /// Study directory.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue from this checkpoint instead of starting over.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Split manifest; created if missing. Defaults to <data>/split.toml.
        #[arg(long)]
        split: Option<PathBuf>,
    },
    /// Generate echo frames from mask PNGs (a file or a directory of them).
    Generate {
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = inference::DEFAULT_OUTPUT_SIZE)]
        size: usize,
    },
    /// Serve the HTTP generation API.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Load every *.ckpt in this directory.
        #[arg(long)]
        models_dir: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Vec<PathBuf>,
    },
    /// Write the train/test split manifest for a study directory.
    Split {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = dataio::DEFAULT_TEST_COUNT)]
        test_count: usize,
    },
    /// Write synthetic studies in the on-disk study layout.
    Fixture {
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 128)]
        size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert CAMUS MetaImage studies to the PNG study layout.
    ImportCamus {
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a preset's config as TOML.
    Config {
        #[arg(long, value_enum, default_value = "full")]
        preset: Preset,
    },
    /// Print the layer table of both networks.
    Summary {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "full")]
        preset: Preset,
    },
}

fn preset_config(preset: Preset) -> ExperimentConfig {
    match preset {
        Preset::Full => ExperimentConfig::default(),
        Preset::Desk => ExperimentConfig::desk(),
    }
}

fn load_config(path: Option<&Path>, preset: Preset) -> anyhow::Result<ExperimentConfig> {
    match path {
        Some(p) => Ok(ExperimentConfig::load(p).with_context(|| format!("reading config {}", p.display()))?),
        None => Ok(preset_config(preset)),
    }
}

#[allow(clippy::too_many_arguments)]
fn train(
    config: Option<PathBuf>,
    preset: Preset,
    experiment: ExperimentName,
    data: PathBuf,
    out: PathBuf,
    resume: Option<PathBuf>,
    split: Option<PathBuf>,
) -> anyhow::Result<()> {
    if let Some(ckpt) = resume {
        let state = resume_experiment(&ckpt, &data, &out)?;
        if state.condition_spec().name() != experiment {
            bail!(
                "checkpoint belongs to experiment {}, not {experiment}",
                state.condition_spec().name()
            );
        }
        println!("resumed to iteration {}", state.iteration());
        return Ok(());
    }
    let mut cfg = load_config(config.as_deref(), preset)?;
    cfg.train.experiment = experiment;
    let split_path = split.unwrap_or_else(|| data.join("split.toml"));
    let ids = list_studies(&data)?;
    let manifest = SplitManifest::load_or_create(&split_path, &ids, cfg.split.seed, cfg.split.test_count)?;
    let state = run_experiment(&cfg.train, &cfg.model, &manifest, &data, &out)?;
    println!(
        "experiment {experiment}: {} iterations, {} training studies, output in {}",
        state.iteration(),
        manifest.train_ids.len(),
        out.display()
    );
    Ok(())
}

fn generate(mask: PathBuf, checkpoint: PathBuf, out: PathBuf, size: usize) -> anyhow::Result<()> {
    let model = LoadedModel::load(&checkpoint)?;
    if mask.is_dir() {
        let written = inference::generate_directory(&model, &mask, &out, size)?;
        println!("wrote {} images to {}", written.len(), out.display());
    } else {
        inference::generate_file(&model, &mask, &out, size)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn serve(host: String, port: u16, models_dir: Option<PathBuf>, mut checkpoints: Vec<PathBuf>) -> anyhow::Result<()> {
    if let Some(dir) = models_dir {
        checkpoints.extend(checkpoints_in(&dir)?);
    }
    if checkpoints.is_empty() {
        bail!("no checkpoints given; pass --checkpoint or --models-dir");
    }
    let registry = ModelRegistry::load(&checkpoints)?;
    for info in registry.infos() {
        log::info!("loaded {} (experiment {})", info.checkpoint, info.condition_spec.name());
    }
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(inference::serve(&host, port, registry))?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train {
            config,
            preset,
            experiment,
            data,
            out,
            resume,
            split,
        } => train(config, preset, experiment, data, out, resume, split),
        Command::Generate {
            mask,
            checkpoint,
            out,
            size,
        } => generate(mask, checkpoint, out, size),
        Command::Serve {
            host,
            port,
            models_dir,
            checkpoint,
        } => serve(host, port, models_dir, checkpoint),
        Command::Split {
            data,
            out,
            seed,
            test_count,
        } => {
            let ids = list_studies(&data)?;
            let manifest = dataio::make_split(&ids, seed, test_count)?;
            let path = out.unwrap_or_else(|| data.join("split.toml"));
            manifest.save(&path)?;
            println!(
                "{} train / {} test studies written to {}",
                manifest.train_ids.len(),
                manifest.test_ids.len(),
                path.display()
            );
            Ok(())
        }
        Command::Fixture { count, seed, size, out } => {
            for record in make_synthetic_fixture(count, seed, size)? {
                write_study(&out, &record)?;
            }
            println!("wrote {count} synthetic studies to {}", out.display());
            Ok(())
        }
        Command::ImportCamus { src, out } => {
            let ids = camus::import_camus(&src, &out)?;
            println!("imported {} studies into {}", ids.len(), out.display());
            Ok(())
        }
        Command::Config { preset } => {
            print!("{}", preset_config(preset).to_toml()?);
            Ok(())
        }
        Command::Summary { config, preset } => {
            let cfg = load_config(config.as_deref(), preset)?;
            print!("{}", architecture_summary(&cfg.model)?);
            Ok(())
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::NotFound(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
