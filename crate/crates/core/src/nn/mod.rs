//! Minimal CPU layers with explicit backward passes.
//!
//! Each layer owns its [`Param`]s; a train-mode forward through a
//! [`Sequential`] records a [`Tape`] that the matching backward call
//! consumes. Gradients accumulate into `Param::grad` until
//! [`Sequential::zero_grad`].

mod activation;
mod conv;
mod gemm;
mod norm;
mod optim;
mod sequential;

pub use activation::Activation;
pub use conv::{Conv2d, ConvTranspose2d, Geometry};
pub use norm::{BatchNorm2d, NormCache};
pub use optim::Adam;
pub use sequential::{Block, ConvLayer, LayerSummary, Sequential, Tape};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Whether normalisation uses batch statistics (and updates running
/// averages) or the accumulated running averages.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// A learnable tensor and its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Vec<f32>,
    pub grad: Vec<f32>,
}

impl Param {
    pub fn new(value: Vec<f32>) -> Self {
        let grad = vec![0.0; value.len()];
        Self { value, grad }
    }

    pub fn filled(len: usize, value: f32) -> Self {
        Self::new(vec![value; len])
    }

    /// Zero-mean Gaussian initialisation.
    pub fn normal<R: Rng + ?Sized>(len: usize, std: f32, rng: &mut R) -> Self {
        let dist = Normal::new(0.0f32, std).expect("standard deviation must be finite");
        Self::new((0..len).map(|_| dist.sample(rng)).collect())
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    /// Adds per-item gradient contributions in item order.
    pub(crate) fn accumulate<'a>(&mut self, parts: impl IntoIterator<Item = &'a [f32]>) {
        for part in parts {
            debug_assert_eq!(part.len(), self.grad.len());
            for (g, p) in self.grad.iter_mut().zip(part) {
                *g += p;
            }
        }
    }
}
