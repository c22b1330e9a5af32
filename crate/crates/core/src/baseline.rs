//! Noise-to-data diffusion baseline under the same conditioning and network.
//!
//! Training regresses the injected noise of `z_i = √ᾱ_i·z_tgt + √(1−ᾱ_i)·ε`;
//! sampling starts from pure noise and runs deterministic DDIM.

use crate::data::RemovalTriplet;
use crate::model::{self, Example, ModelParams};
use crate::rng::{self, Domain};
use crate::sampler::Network;
use crate::{Error, Real, Result, Tensor};

/// Discrete schedule with `β_i` linear in `i` and `ᾱ_i = Π_{j≤i}(1 − β_j)`, `ᾱ_0 = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionSchedule {
    beta_start: f64,
    beta_end: f64,
    alpha_bar: Vec<f64>,
}

impl Default for DiffusionSchedule {
    fn default() -> Self {
        Self::linear(1000, 1e-4, 2e-2).expect("default schedule is valid")
    }
}

impl DiffusionSchedule {
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 || !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::argument(format!(
                "need steps >= 1 and 0 < beta_start <= beta_end < 1, got ({steps}, {beta_start}, {beta_end})"
            )));
        }
        let mut alpha_bar = Vec::with_capacity(steps + 1);
        alpha_bar.push(1.0);
        let mut acc = 1.0;
        for i in 1..=steps {
            let beta = if steps == 1 {
                beta_start
            } else {
                beta_start + (beta_end - beta_start) * (i - 1) as f64 / (steps - 1) as f64
            };
            acc *= 1.0 - beta;
            alpha_bar.push(acc);
        }
        Ok(Self {
            beta_start,
            beta_end,
            alpha_bar,
        })
    }

    pub fn steps(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    pub fn beta_range(&self) -> (f64, f64) {
        (self.beta_start, self.beta_end)
    }

    /// `ᾱ_i` for `0 ≤ i ≤ T`.
    pub fn alpha_bar(&self, i: usize) -> Result<f64> {
        self.alpha_bar
            .get(i)
            .copied()
            .ok_or_else(|| Error::domain(format!("step {i} outside [0, {}]", self.steps())))
    }

    /// Network time input for step `i`.
    pub fn time_of(&self, i: usize) -> f64 {
        i as f64 / self.steps() as f64
    }
}

/// `√ᾱ·z + √(1 − ᾱ)·ε`.
pub fn mix<T: Real>(z: &Tensor<T>, eps: &Tensor<T>, alpha_bar: f64) -> Result<Tensor<T>> {
    Tensor::lincomb(&[
        (T::of(alpha_bar.sqrt()), z),
        (T::of((1.0 - alpha_bar).sqrt()), eps),
    ])
}

pub fn diffusion_forward_sample<T: Real>(
    z_tgt: &Tensor<T>,
    i: usize,
    eps: &Tensor<T>,
    d: &DiffusionSchedule,
) -> Result<Tensor<T>> {
    if i == 0 || i > d.steps() {
        return Err(Error::domain(format!("step {i} outside [1, {}]", d.steps())));
    }
    mix(z_tgt, eps, d.alpha_bar(i)?)
}

pub fn noise_example<T: Real>(
    triplet: &RemovalTriplet<T>,
    i: usize,
    eps: &Tensor<T>,
    d: &DiffusionSchedule,
) -> Result<Example<T>> {
    Ok(Example {
        z_t: diffusion_forward_sample(&triplet.target, i, eps, d)?,
        t: d.time_of(i),
        z_src: triplet.source.clone(),
        mask: triplet.mask.clone(),
        target: eps.clone(),
    })
}

/// `mean ‖ε̂ − ε‖²` with the network output read as `ε̂`.
pub fn noise_loss<T: Real>(
    p: &ModelParams<T>,
    triplet: &RemovalTriplet<T>,
    i: usize,
    eps: &Tensor<T>,
    d: &DiffusionSchedule,
) -> Result<f64> {
    let ex = noise_example(triplet, i, eps, d)?;
    let l = model::loss(p, std::slice::from_ref(&ex), 1.0)?;
    if !l.is_finite() {
        return Err(Error::NonFinite { what: "loss", step: 0 });
    }
    Ok(l)
}

/// Descending DDIM steps `round(k·T/N)` for `k = N, …, 0`.
pub fn ddim_grid(n: usize, d: &DiffusionSchedule) -> Result<Vec<usize>> {
    let total = d.steps();
    if n == 0 || n > total {
        return Err(Error::argument(format!(
            "DDIM steps must lie in [1, {total}], got {n}"
        )));
    }
    Ok((0..=n)
        .rev()
        .map(|k| ((k * total) as f64 / n as f64).round() as usize)
        .collect())
}

/// DDIM from pure Gaussian noise drawn from `seed`.
pub fn ddim_sample<T: Real>(
    model: &impl Network<T>,
    z_src: &Tensor<T>,
    mask: &Tensor<T>,
    n: usize,
    d: &DiffusionSchedule,
    seed: u64,
) -> Result<Tensor<T>> {
    let mut rng = rng::stream(seed, Domain::Sampler, 1, 0);
    let z_init = rng::normal_tensor(&mut rng, z_src.dims());
    ddim_sample_from(model, z_init, z_src, mask, n, d)
}

/// DDIM from a given initial state at step `T`.
pub fn ddim_sample_from<T: Real>(
    model: &impl Network<T>,
    z_init: Tensor<T>,
    z_src: &Tensor<T>,
    mask: &Tensor<T>,
    n: usize,
    d: &DiffusionSchedule,
) -> Result<Tensor<T>> {
    z_init.ensure_same_shape(z_src)?;
    z_src.ensure_same_shape(mask)?;
    let grid = ddim_grid(n, d)?;
    let mut z = z_init;
    for (k, w) in grid.windows(2).enumerate() {
        let (i, i_prev) = (w[0], w[1]);
        let ab = d.alpha_bar(i)?;
        let eps_hat = model.predict(&z, d.time_of(i), z_src, mask)?;
        z.ensure_same_shape(&eps_hat)?;
        let z0_hat = Tensor::lincomb(&[
            (T::of(1.0 / ab.sqrt()), &z),
            (T::of(-(1.0 - ab).sqrt() / ab.sqrt()), &eps_hat),
        ])?;
        z = if i_prev == 0 {
            z0_hat
        } else {
            mix(&z0_hat, &eps_hat, d.alpha_bar(i_prev)?)?
        };
        if !z.is_finite() {
            return Err(Error::NonFinite {
                what: "DDIM state",
                step: k,
            });
        }
    }
    Ok(z)
}

/// Returns the exact noise that separates the current state from a known target.
pub struct OracleNoise<T: Real> {
    pub z_tgt: Tensor<T>,
    pub schedule: DiffusionSchedule,
}

impl<T: Real> Network<T> for OracleNoise<T> {
    fn predict(
        &self,
        z_t: &Tensor<T>,
        t: f64,
        _z_src: &Tensor<T>,
        _mask: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        let i = (t * self.schedule.steps() as f64).round() as usize;
        let ab = self.schedule.alpha_bar(i)?;
        let k = 1.0 / (1.0 - ab).sqrt();
        Tensor::lincomb(&[(T::of(k), z_t), (T::of(-k * ab.sqrt()), &self.z_tgt)])
    }
}
