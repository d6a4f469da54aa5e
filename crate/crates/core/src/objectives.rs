//! Least-squares adversarial and L1 reconstruction criteria.
//!
//! Every term is a mean over all elements of its batch of grids. The
//! discriminator minimises
//!
//! ```text
//! d_loss = mean((1 - D(y, x))²) + mean(D(y, G(y))²)
//! ```
//!
//! and the generator minimises `λ · mean((1 - D(y, G(y)))²) + mean(|x - G(y)|)`.
//!
//! The slice-level functions are generic over the float type so gradients
//! can be checked in `f64`; the [`Tensor`] wrappers add shape checks.

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_LAMBDA: f64 = 0.01;

/// One training step's losses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub iteration: u64,
    pub d_loss: f64,
    pub g_adv: f64,
    pub g_recon: f64,
    pub g_total: f64,
    pub lambda: f64,
}

impl LossReport {
    pub const CSV_HEADER: &'static str = "iteration,d_loss,g_adv,g_recon,g_total";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.iteration, self.d_loss, self.g_adv, self.g_recon, self.g_total
        )
    }
}

fn check_pair<T>(a: &[T], b: &[T]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("{} vs {} elements", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

fn count<T: Float>(n: usize) -> T {
    T::from(n).expect("element count fits the float type")
}

fn two<T: Float>() -> T {
    T::one() + T::one()
}

/// `mean((1 - real)²) + mean(fake²)`.
pub fn d_loss_values<T: Float>(real: &[T], fake: &[T]) -> Result<T> {
    check_pair(real, fake)?;
    let n = count::<T>(real.len());
    let real_term = real.iter().fold(T::zero(), |acc, &r| acc + (T::one() - r).powi(2)) / n;
    let fake_term = fake.iter().fold(T::zero(), |acc, &f| acc + f.powi(2)) / n;
    Ok(real_term + fake_term)
}

/// Gradients of [`d_loss_values`] with respect to the real and fake scores.
pub fn d_loss_grad<T: Float>(real: &[T], fake: &[T]) -> Result<(Vec<T>, Vec<T>)> {
    check_pair(real, fake)?;
    let scale = two::<T>() / count::<T>(real.len());
    Ok((
        real.iter().map(|&r| -scale * (T::one() - r)).collect(),
        fake.iter().map(|&f| scale * f).collect(),
    ))
}

/// `mean((1 - fake)²)`: the generator pulls its patch scores toward the
/// real target.
pub fn g_adv_values<T: Float>(fake: &[T]) -> Result<T> {
    if fake.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = count::<T>(fake.len());
    Ok(fake.iter().fold(T::zero(), |acc, &f| acc + (T::one() - f).powi(2)) / n)
}

pub fn g_adv_grad<T: Float>(fake: &[T]) -> Result<Vec<T>> {
    if fake.is_empty() {
        return Err(Error::EmptyInput);
    }
    let scale = two::<T>() / count::<T>(fake.len());
    Ok(fake.iter().map(|&f| -scale * (T::one() - f)).collect())
}

/// Mean absolute error.
pub fn recon_values<T: Float>(target: &[T], generated: &[T]) -> Result<T> {
    check_pair(target, generated)?;
    let n = count::<T>(target.len());
    Ok(target
        .iter()
        .zip(generated)
        .fold(T::zero(), |acc, (&t, &g)| acc + (t - g).abs())
        / n)
}

/// Gradient of [`recon_values`] with respect to `generated`; zero at ties.
pub fn recon_grad<T: Float>(target: &[T], generated: &[T]) -> Result<Vec<T>> {
    check_pair(target, generated)?;
    let n = count::<T>(target.len());
    Ok(target
        .iter()
        .zip(generated)
        .map(|(&t, &g)| {
            let d = g - t;
            if d > T::zero() {
                T::one() / n
            } else if d < T::zero() {
                -T::one() / n
            } else {
                T::zero()
            }
        })
        .collect())
}

fn check_shapes(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

pub fn d_loss(real_scores: &Tensor, fake_scores: &Tensor) -> Result<f64> {
    check_shapes(real_scores, fake_scores)?;
    d_loss_values(real_scores.data(), fake_scores.data()).map(f64::from)
}

pub fn g_adv_loss(fake_scores: &Tensor) -> Result<f64> {
    g_adv_values(fake_scores.data()).map(f64::from)
}

pub fn recon_loss(target: &Tensor, generated: &Tensor) -> Result<f64> {
    check_shapes(target, generated)?;
    recon_values(target.data(), generated.data()).map(f64::from)
}

/// `λ · adv + recon`.
pub fn g_total_loss(adv: f64, recon: f64, lambda: f64) -> Result<f64> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::InvalidConfig(format!("adversarial weight {lambda} is negative")));
    }
    Ok(lambda * adv + recon)
}
