//! Generator and patch discriminator.
//!
//! The generator is a plain encoder–decoder with no skip connections and no
//! noise input: seven stride-2 4×4 convolutions take a 256×256 condition down
//! to 2×2 (channels 64, 128, 256, 512, 512, 512, 512 at base 64), seven
//! stride-2 4×4 transposed convolutions mirror it back to 256×256, and a
//! stride-1 convolution with a sigmoid produces the frame in `[0, 1]`.
//!
//! The discriminator sees `condition ⊕ image` (condition channels first).
//! Four stride-2 convolutions (64, 128, 256, 512) reduce 256 to 16 and a
//! stride-1 convolution emits one raw score per 16-pixel stride cell.
//!
//! Every layer except the last of each network is batch-normalised and
//! followed by a LeakyReLU. Convolution weights start from N(0, 0.02).
//!
//! Parameter counts at the default configuration (base 64, 4×4 kernels,
//! one condition and one image channel):
//!
//! | network       | weights    | norm (γ, β) | bias | total      |
//! |---------------|-----------:|------------:|-----:|-----------:|
//! | generator     | 30 738 432 |       9 088 |    1 | 30 747 521 |
//! | discriminator |  2 762 752 |       1 920 |    1 |  2 764 673 |

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, BatchNorm2d, Block, Conv2d, ConvLayer, ConvTranspose2d, LayerSummary, Mode, Sequential, Tape};
use crate::tensor::Tensor;

/// Downsampling stages in the generator encoder (and upsampling stages in
/// its decoder).
pub const GENERATOR_STAGES: usize = 7;
/// Channel widths grow as `base · 2^i`, capped at `base · MAX_CHANNEL_MULTIPLIER`.
pub const MAX_CHANNEL_MULTIPLIER: usize = 8;
pub const INIT_STD: f32 = 0.02;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub image_size: usize,
    pub generator_base_channels: usize,
    pub discriminator_base_channels: usize,
    pub kernel_size: usize,
    pub leaky_slope: f32,
    pub patch_stride: usize,
    pub condition_channels: usize,
    pub image_channels: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            image_size: 256,
            generator_base_channels: 64,
            discriminator_base_channels: 64,
            kernel_size: 4,
            leaky_slope: 0.2,
            patch_stride: 16,
            condition_channels: 1,
            image_channels: 1,
        }
    }
}

impl ModelConfig {
    fn validate_common(&self) -> Result<()> {
        if self.kernel_size < 2 {
            return Err(Error::InvalidConfig(format!(
                "kernel size {} is smaller than the stride 2",
                self.kernel_size
            )));
        }
        if self.condition_channels == 0 || self.image_channels == 0 {
            return Err(Error::InvalidConfig("channel counts must be positive".into()));
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0) {
            return Err(Error::InvalidConfig(format!("leaky slope {}", self.leaky_slope)));
        }
        Ok(())
    }

    pub fn validate_generator(&self) -> Result<()> {
        self.validate_common()?;
        let factor = 1 << GENERATOR_STAGES;
        if self.image_size == 0 || !self.image_size.is_multiple_of(factor) {
            return Err(Error::InvalidConfig(format!(
                "image size {} is not divisible by 2^{GENERATOR_STAGES}",
                self.image_size
            )));
        }
        if self.generator_base_channels == 0 {
            return Err(Error::InvalidConfig("generator base channels must be positive".into()));
        }
        Ok(())
    }

    pub fn validate_discriminator(&self) -> Result<()> {
        self.validate_common()?;
        if self.patch_stride < 2 || !self.patch_stride.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "patch stride {} is not a power of two ≥ 2",
                self.patch_stride
            )));
        }
        if self.image_size == 0 || !self.image_size.is_multiple_of(self.patch_stride) {
            return Err(Error::InvalidConfig(format!(
                "image size {} is not divisible by patch stride {}",
                self.image_size, self.patch_stride
            )));
        }
        if self.discriminator_base_channels == 0 {
            return Err(Error::InvalidConfig("discriminator base channels must be positive".into()));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_generator()?;
        self.validate_discriminator()
    }

    /// Stride-2 stages in the discriminator, `log2(patch_stride)`.
    pub fn discriminator_stages(&self) -> usize {
        self.patch_stride.trailing_zeros() as usize
    }

    /// Side length of the discriminator's score grid.
    pub fn patch_grid(&self) -> usize {
        self.image_size / self.patch_stride
    }

    pub fn generator_encoder_channels(&self) -> Vec<usize> {
        (0..GENERATOR_STAGES)
            .map(|i| self.generator_base_channels * (1 << i).min(MAX_CHANNEL_MULTIPLIER))
            .collect()
    }

    pub fn discriminator_channels(&self) -> Vec<usize> {
        (0..self.discriminator_stages())
            .map(|i| self.discriminator_base_channels * (1 << i).min(MAX_CHANNEL_MULTIPLIER))
            .collect()
    }
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Deterministic mask-to-echo generator.
#[derive(Clone, Debug)]
pub struct Generator {
    config: ModelConfig,
    net: Sequential,
}

pub fn build_generator(config: &ModelConfig, seed: u64) -> Result<Generator> {
    config.validate_generator()?;
    let mut rng = rng_for(seed);
    let k = config.kernel_size;
    let act = Activation::LeakyRelu(config.leaky_slope);
    let enc = config.generator_encoder_channels();
    let mut blocks = Vec::with_capacity(2 * GENERATOR_STAGES + 1);
    let mut channels = config.condition_channels;
    for (i, &out) in enc.iter().enumerate() {
        blocks.push(Block {
            name: format!("enc{}", i + 1),
            conv: ConvLayer::Down(Conv2d::new(channels, out, k, 2, false, INIT_STD, &mut rng)),
            norm: Some(BatchNorm2d::new(out)),
            activation: act,
        });
        channels = out;
    }
    // Decoder stage j lands on the resolution of encoder stage 6 - j and
    // takes that stage's width; the last one returns to full resolution at
    // the base width.
    let dec: Vec<usize> = (0..GENERATOR_STAGES)
        .map(|j| {
            if j + 1 < GENERATOR_STAGES {
                enc[GENERATOR_STAGES - 2 - j]
            } else {
                config.generator_base_channels
            }
        })
        .collect();
    for (j, &out) in dec.iter().enumerate() {
        blocks.push(Block {
            name: format!("dec{}", j + 1),
            conv: ConvLayer::Up(ConvTranspose2d::new(channels, out, k, 2, false, INIT_STD, &mut rng)),
            norm: Some(BatchNorm2d::new(out)),
            activation: act,
        });
        channels = out;
    }
    blocks.push(Block {
        name: "out".into(),
        conv: ConvLayer::Down(Conv2d::new(channels, config.image_channels, k, 1, true, INIT_STD, &mut rng)),
        norm: None,
        activation: Activation::Sigmoid,
    });
    Ok(Generator {
        config: config.clone(),
        net: Sequential::new(blocks),
    })
}

impl Generator {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn network(&self) -> &Sequential {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Sequential {
        &mut self.net
    }

    fn check_condition(&self, condition: &Tensor) -> Result<()> {
        let size = self.config.image_size;
        if condition.height() != size || condition.width() != size || condition.channels() != self.config.condition_channels {
            return Err(Error::Shape(format!(
                "generator expects conditions of {}x{}x{}, got {:?} (NCHW)",
                self.config.condition_channels,
                size,
                size,
                condition.shape()
            )));
        }
        Ok(())
    }

    /// Eval-mode forward pass. Each batch item is computed independently, so
    /// results do not depend on how requests are batched.
    pub fn infer(&self, condition: &Tensor) -> Result<Tensor> {
        self.check_condition(condition)?;
        self.net.forward_eval(condition)
    }

    pub fn forward_train(&mut self, condition: &Tensor) -> Result<(Tensor, Tape)> {
        self.check_condition(condition)?;
        self.net.forward_train(condition.clone())
    }

    /// Accumulates parameter gradients for a recorded pass.
    pub fn backward(&mut self, tape: Tape, d_output: Tensor) {
        self.net.backward(tape, d_output, false, true);
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    pub fn summary(&self) -> Vec<LayerSummary> {
        let s = self.config.image_size;
        self.net.summary([1, self.config.condition_channels, s, s])
    }
}

pub fn generate(g: &mut Generator, condition: &Tensor, mode: Mode) -> Result<Tensor> {
    match mode {
        Mode::Eval => g.infer(condition),
        Mode::Train => g.forward_train(condition).map(|(y, _)| y),
    }
}

/// Conditional patch discriminator over `condition ⊕ image`.
#[derive(Clone, Debug)]
pub struct Discriminator {
    config: ModelConfig,
    net: Sequential,
}

pub fn build_discriminator(config: &ModelConfig, seed: u64) -> Result<Discriminator> {
    config.validate_discriminator()?;
    let mut rng = rng_for(seed);
    let k = config.kernel_size;
    let act = Activation::LeakyRelu(config.leaky_slope);
    let mut blocks = Vec::new();
    let mut channels = config.condition_channels + config.image_channels;
    for (i, out) in config.discriminator_channels().into_iter().enumerate() {
        blocks.push(Block {
            name: format!("conv{}", i + 1),
            conv: ConvLayer::Down(Conv2d::new(channels, out, k, 2, false, INIT_STD, &mut rng)),
            norm: Some(BatchNorm2d::new(out)),
            activation: act,
        });
        channels = out;
    }
    blocks.push(Block {
        name: "score".into(),
        conv: ConvLayer::Down(Conv2d::new(channels, 1, k, 1, true, INIT_STD, &mut rng)),
        norm: None,
        activation: Activation::Identity,
    });
    Ok(Discriminator {
        config: config.clone(),
        net: Sequential::new(blocks),
    })
}

impl Discriminator {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn network(&self) -> &Sequential {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Sequential {
        &mut self.net
    }

    fn join(&self, condition: &Tensor, image: &Tensor) -> Result<Tensor> {
        if condition.channels() != self.config.condition_channels || image.channels() != self.config.image_channels {
            return Err(Error::Shape(format!(
                "discriminator expects {} condition and {} image channels, got {} and {}",
                self.config.condition_channels,
                self.config.image_channels,
                condition.channels(),
                image.channels()
            )));
        }
        let stride = self.config.patch_stride;
        if !image.height().is_multiple_of(stride) || !image.width().is_multiple_of(stride) {
            return Err(Error::Shape(format!(
                "image {}x{} is not divisible by patch stride {stride}",
                image.height(),
                image.width()
            )));
        }
        Tensor::concat_channels(condition, image)
    }

    /// Eval-mode patch scores.
    pub fn score(&self, condition: &Tensor, image: &Tensor) -> Result<Tensor> {
        let input = self.join(condition, image)?;
        self.net.forward_eval(&input)
    }

    pub fn forward_train(&mut self, condition: &Tensor, image: &Tensor) -> Result<(Tensor, Tape)> {
        let input = self.join(condition, image)?;
        self.net.forward_train(input)
    }

    /// Backpropagates score gradients. Parameter gradients accumulate when
    /// `param_grad` is set; with `image_grad` the gradient with respect to the
    /// image half of the input is returned.
    pub fn backward(&mut self, tape: Tape, d_scores: Tensor, image_grad: bool, param_grad: bool) -> Option<Tensor> {
        let grad = self.net.backward(tape, d_scores, image_grad, param_grad)?;
        Some(grad.split_channels(self.config.condition_channels).1)
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    pub fn summary(&self) -> Vec<LayerSummary> {
        let s = self.config.image_size;
        self.net
            .summary([1, self.config.condition_channels + self.config.image_channels, s, s])
    }
}

pub fn discriminate(d: &mut Discriminator, condition: &Tensor, image: &Tensor, mode: Mode) -> Result<Tensor> {
    match mode {
        Mode::Eval => d.score(condition, image),
        Mode::Train => d.forward_train(condition, image).map(|(y, _)| y),
    }
}

fn format_table(out: &mut String, title: &str, rows: &[LayerSummary]) {
    let nhwc = |s: [usize; 4]| format!("{}x{}x{}", s[2], s[3], s[1]);
    let _ = writeln!(out, "{title}");
    let _ = writeln!(out, "{:<8} {:<7} {:<5} {:>14} {:>14} {:>12}", "layer", "kind", "norm", "input", "output", "params");
    let mut total = 0;
    for r in rows {
        total += r.params;
        let _ = writeln!(
            out,
            "{:<8} {:<7} {:<5} {:>14} {:>14} {:>12}",
            r.name,
            r.kind,
            if r.normalized { "bn" } else { "-" },
            nhwc(r.input),
            nhwc(r.output),
            r.params
        );
    }
    let _ = writeln!(out, "{:<8} {:>57}", "total", total);
}

/// Human-readable layer table for both networks.
pub fn architecture_summary(config: &ModelConfig) -> Result<String> {
    let g = build_generator(config, 0)?;
    let d = build_discriminator(config, 0)?;
    let mut out = String::new();
    format_table(&mut out, "generator", &g.summary());
    out.push('\n');
    format_table(&mut out, "discriminator", &d.summary());
    Ok(out)
}
