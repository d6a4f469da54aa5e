//! Mask-conditioned echocardiogram synthesis.
//!
//! A deterministic encoder–decoder generator maps a cardiac label map
//! (0 background, 1 left ventricle, 2 myocardium, 3 left atrium) to a
//! grayscale apical four-chamber frame. Training is adversarial against a
//! patch-based conditional discriminator scored with a least-squares
//! criterion, plus an L1 reconstruction term.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`], [`exec`] and [`nn`]: a small CPU convolution engine with
//!   hand-written backward passes. Per-item work fans out over rayon when the
//!   `parallel` feature is on; all reductions run in a fixed order so results
//!   are bitwise identical in either mode.
//! * [`dataio`]: study loading, preprocessing, condition filtering, splits,
//!   batching and synthetic fixtures.
//! * [`networks`]: generator and discriminator built from a [`ModelConfig`].
//! * [`objectives`]: least-squares adversarial and L1 reconstruction losses.
//! * [`trainer`]: alternating optimisation, checkpoints and the experiment runner.
//! * [`inference`]: mask-to-echo generation for the CLI and HTTP service.

pub mod dataio;
pub mod error;
pub mod exec;
pub mod inference;
pub mod networks;
pub mod nn;
pub mod objectives;
pub mod tensor;
pub mod trainer;

pub use dataio::{ConditionSpec, EchoFrame, ExperimentName, LabelMap, SplitManifest, StudyRecord};
pub use error::{Error, Result};
pub use networks::{Discriminator, Generator, ModelConfig};
pub use nn::Mode;
pub use objectives::LossReport;
pub use tensor::Tensor;
pub use trainer::{TrainConfig, Trainer};
