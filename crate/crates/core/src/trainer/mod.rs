//! Alternating adversarial optimisation.
//!
//! Each [`Trainer::train_step`] performs one discriminator update followed by
//! one generator update on the same batch. The generator's output is computed
//! once per step; during the discriminator update no gradient reaches the
//! generator, and during the generator update the discriminator only passes
//! gradients through without accumulating its own.

mod checkpoint;
mod config;
mod experiment;

pub use checkpoint::{
    load_checkpoint, load_generator, read_header, save_checkpoint, CheckpointHeader, TensorEntry, CHECKPOINT_VERSION,
};
pub use config::{ExperimentConfig, SplitConfig, TrainConfig, DESK_BASE_CHANNELS};
pub use experiment::{
    load_records, resume_experiment, run_experiment, CHECKPOINT_DIR, FINAL_CHECKPOINT_PREFIX, LOSS_LOG,
};

use crate::dataio::{Batch, BatchCursor, ConditionSpec, ExperimentName, SplitManifest};
use crate::error::{Error, Result};
use crate::networks::{build_discriminator, build_generator, Discriminator, Generator, ModelConfig};
use crate::nn::{Adam, Param};
use crate::objectives::{self, LossReport};
use crate::tensor::Tensor;

/// Offset between the generator and discriminator initialisation seeds.
const DISCRIMINATOR_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;
/// Per-experiment offset, so the five experiments start from different
/// weights under one configured seed.
const EXPERIMENT_SEED_STRIDE: u64 = 0xD1B5_4A32_D192_ED03;

fn init_seed(train: &TrainConfig) -> u64 {
    let index = ExperimentName::ALL
        .iter()
        .position(|&e| e == train.experiment)
        .expect("every experiment is listed") as u64;
    train.seed.wrapping_add(index.wrapping_mul(EXPERIMENT_SEED_STRIDE))
}

/// Complete training state: both networks, both optimisers, progress.
#[derive(Clone, Debug)]
pub struct Trainer {
    generator: Generator,
    discriminator: Discriminator,
    opt_generator: Adam,
    opt_discriminator: Adam,
    iteration: u64,
    train: TrainConfig,
    model: ModelConfig,
    spec: ConditionSpec,
    manifest: Option<SplitManifest>,
    cursor: BatchCursor,
}

fn param_lens(params: Vec<&mut Param>) -> Vec<usize> {
    params.iter().map(|p| p.len()).collect()
}

fn finite(value: f64, iteration: u64, term: &'static str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Divergence { iteration, term })
    }
}

impl Trainer {
    pub fn new(train: TrainConfig, model: ModelConfig) -> Result<Self> {
        train.validate()?;
        model.validate()?;
        let seed = init_seed(&train);
        let mut generator = build_generator(&model, seed)?;
        let mut discriminator = build_discriminator(&model, seed.wrapping_add(DISCRIMINATOR_SEED_OFFSET))?;
        let (b1, b2) = (train.adam_beta1 as f32, train.adam_beta2 as f32);
        let opt_generator = Adam::new(
            train.lr_generator as f32,
            b1,
            b2,
            &param_lens(generator.network_mut().params_mut()),
        );
        let opt_discriminator = Adam::new(
            train.lr_discriminator as f32,
            b1,
            b2,
            &param_lens(discriminator.network_mut().params_mut()),
        );
        Ok(Self {
            generator,
            discriminator,
            opt_generator,
            opt_discriminator,
            iteration: 0,
            spec: ConditionSpec::new(train.experiment),
            train,
            model,
            manifest: None,
            cursor: BatchCursor::default(),
        })
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn discriminator(&self) -> &Discriminator {
        &self.discriminator
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn train_config(&self) -> &TrainConfig {
        &self.train
    }

    pub fn model_config(&self) -> &ModelConfig {
        &self.model
    }

    pub fn condition_spec(&self) -> ConditionSpec {
        self.spec
    }

    pub fn manifest(&self) -> Option<&SplitManifest> {
        self.manifest.as_ref()
    }

    pub fn set_manifest(&mut self, manifest: SplitManifest) {
        self.manifest = Some(manifest);
    }

    /// Where the data stream stood after the last completed step.
    pub fn cursor(&self) -> BatchCursor {
        self.cursor
    }

    pub fn set_cursor(&mut self, cursor: BatchCursor) {
        self.cursor = cursor;
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        let s = self.model.image_size;
        let (c, x) = (&batch.conditions, &batch.images);
        if c.shape() != [c.batch(), self.model.condition_channels, s, s]
            || x.shape() != [c.batch(), self.model.image_channels, s, s]
            || c.batch() == 0
        {
            return Err(Error::Shape(format!(
                "batch of conditions {:?} and images {:?} does not match {s}x{s} inputs",
                c.shape(),
                x.shape()
            )));
        }
        Ok(())
    }

    /// One discriminator update then one generator update.
    pub fn train_step(&mut self, batch: &Batch) -> Result<LossReport> {
        self.check_batch(batch)?;
        let step = self.iteration + 1;
        let lambda = self.train.lambda;
        let (cond, real) = (&batch.conditions, &batch.images);

        let (fake, g_tape) = self.generator.forward_train(cond)?;

        // Discriminator: real patches toward 1, generated patches toward 0.
        self.discriminator.network_mut().zero_grad();
        let (real_scores, real_tape) = self.discriminator.forward_train(cond, real)?;
        let (fake_scores, fake_tape) = self.discriminator.forward_train(cond, &fake)?;
        let d_loss = finite(
            objectives::d_loss(&real_scores, &fake_scores)?,
            step,
            "discriminator loss",
        )?;
        let (d_real, d_fake) = objectives::d_loss_grad(real_scores.data(), fake_scores.data())?;
        self.discriminator
            .backward(real_tape, Tensor::from_vec(real_scores.shape(), d_real)?, false, true);
        self.discriminator
            .backward(fake_tape, Tensor::from_vec(fake_scores.shape(), d_fake)?, false, true);
        self.opt_discriminator
            .step(self.discriminator.network_mut().params_mut());

        // Generator: λ · adversarial + L1, scored by the updated discriminator.
        self.generator.network_mut().zero_grad();
        let (scores, tape) = self.discriminator.forward_train(cond, &fake)?;
        let g_adv = finite(objectives::g_adv_loss(&scores)?, step, "generator adversarial loss")?;
        let g_recon = finite(objectives::recon_loss(real, &fake)?, step, "reconstruction loss")?;
        let g_total = finite(objectives::g_total_loss(g_adv, g_recon, lambda)?, step, "generator loss")?;

        let mut d_output = Tensor::from_vec(fake.shape(), objectives::recon_grad(real.data(), fake.data())?)?;
        if lambda > 0.0 {
            let weight = lambda as f32;
            let d_scores: Vec<f32> = objectives::g_adv_grad(scores.data())?
                .into_iter()
                .map(|g| g * weight)
                .collect();
            let d_image = self
                .discriminator
                .backward(tape, Tensor::from_vec(scores.shape(), d_scores)?, true, false)
                .expect("image gradient requested");
            for (g, a) in d_output.data_mut().iter_mut().zip(d_image.data()) {
                *g += a;
            }
        }
        self.generator.backward(g_tape, d_output);
        self.opt_generator.step(self.generator.network_mut().params_mut());

        self.iteration = step;
        Ok(LossReport {
            iteration: step,
            d_loss,
            g_adv,
            g_recon,
            g_total,
            lambda,
        })
    }
}

/// Free-function form of [`Trainer::train_step`].
pub fn train_step(state: &mut Trainer, batch: &Batch) -> Result<LossReport> {
    state.train_step(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{batch_iterator, make_synthetic_fixture};

    fn small() -> (TrainConfig, ModelConfig) {
        let model = ModelConfig {
            image_size: 128,
            generator_base_channels: 4,
            discriminator_base_channels: 4,
            ..ModelConfig::default()
        };
        let train = TrainConfig {
            batch_size: 2,
            experiment: ExperimentName::C,
            ..TrainConfig::default()
        };
        (train, model)
    }

    fn batch(seed: u64) -> Batch {
        let recs = make_synthetic_fixture(2, seed, 128).unwrap();
        batch_iterator(&recs, &ConditionSpec::new(ExperimentName::C), 2, 0)
            .unwrap()
            .next_batch()
    }

    #[test]
    fn counts_iterations_and_reports_consistent_losses() {
        let (train, model) = small();
        let mut t = Trainer::new(train, model).unwrap();
        let b = batch(1);
        for n in 1..=3 {
            let r = t.train_step(&b).unwrap();
            assert_eq!(r.iteration, n);
            assert!(r.d_loss >= 0.0 && r.g_adv >= 0.0 && r.g_recon >= 0.0);
            assert!((r.g_total - (r.lambda * r.g_adv + r.g_recon)).abs() < 1e-6);
        }
        assert_eq!(t.iteration(), 3);
    }

    #[test]
    fn rejects_mismatched_batch() {
        let (train, model) = small();
        let mut t = Trainer::new(train, model).unwrap();
        let bad = Batch {
            conditions: Tensor::zeros(2, 1, 64, 64),
            images: Tensor::zeros(2, 1, 64, 64),
            ids: vec![],
        };
        assert!(matches!(t.train_step(&bad), Err(Error::Shape(_))));
    }

    #[test]
    fn non_finite_input_is_reported_as_divergence() {
        let (train, model) = small();
        let mut t = Trainer::new(train, model).unwrap();
        let mut b = batch(2);
        b.images.data_mut()[0] = f32::NAN;
        match t.train_step(&b) {
            Err(Error::Divergence { iteration, .. }) => assert_eq!(iteration, 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn updates_touch_only_their_own_network() {
        let (mut train, model) = small();
        train.lr_generator = 0.0;
        let mut t = Trainer::new(train, model).unwrap();
        let g_before: Vec<Vec<f32>> = t.generator.network().named_tensors().iter()
            .filter(|(n, _)| !n.contains("running"))
            .map(|(_, v)| v.to_vec())
            .collect();
        t.train_step(&batch(3)).unwrap();
        let g_after: Vec<Vec<f32>> = t.generator.network().named_tensors().iter()
            .filter(|(n, _)| !n.contains("running"))
            .map(|(_, v)| v.to_vec())
            .collect();
        assert_eq!(g_before, g_after);
    }
}
