//! Reverse-time generation from the source toward the target.
//!
//! Each step predicts a velocity, inverts it to a target estimate `ẑ₀`, then
//! draws `z_{t'}` from the Gaussian bridge posterior given `z_t` and `ẑ₀`.
//! Because the bridge is a time-changed Brownian bridge in the clock `σ²`,
//! that posterior is the Brownian bridge between `ẑ₀` (clock 0) and `z_t`
//! (clock `σ_t²`):
//!
//! ```text
//! w1 = σ_{t'}²/σ_t²,   w2 = 1 − w1,   w3 = σ_{t'}·√(1 − w1)
//! ```

use crate::bridge::{self, recover_target_with};
use crate::rng::{self, Domain};
use crate::schedule::{make_time_grid, NoiseSchedule};
use crate::{Error, Real, Result, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplerConfig {
    pub steps: usize,
    /// Largest time at which the network is queried; the grid itself starts at 1.
    pub t_max: f64,
    pub stochastic: bool,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            steps: 50,
            t_max: 1.0 - 1e-4,
            stochastic: true,
            seed: 0,
        }
    }
}

/// A conditional predictor `(z_t, t, z_src, mask) -> output` of the shape of `z_t`.
///
/// For the bridge the output is a velocity; for the diffusion baseline it is a
/// noise estimate.
pub trait Network<T: Real> {
    fn predict(
        &self,
        z_t: &Tensor<T>,
        t: f64,
        z_src: &Tensor<T>,
        mask: &Tensor<T>,
    ) -> Result<Tensor<T>>;
}

impl<T: Real, F> Network<T> for F
where
    F: Fn(&Tensor<T>, f64, &Tensor<T>, &Tensor<T>) -> Result<Tensor<T>>,
{
    fn predict(
        &self,
        z_t: &Tensor<T>,
        t: f64,
        z_src: &Tensor<T>,
        mask: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        self(z_t, t, z_src, mask)
    }
}

fn check_step(t: f64, t_next: f64) -> Result<()> {
    if !(0.0 <= t_next && t_next < t && t <= 1.0) {
        return Err(Error::argument(format!(
            "need 0 <= t_next < t <= 1, got t = {t}, t_next = {t_next}"
        )));
    }
    Ok(())
}

pub fn posterior_weights(t: f64, t_next: f64, s: &NoiseSchedule) -> Result<SolverWeights> {
    check_step(t, t_next)?;
    let var = s.sigma_sq_at(t)?;
    let var_next = s.sigma_sq_at(t_next)?;
    let w1 = (var_next / var).clamp(0.0, 1.0);
    Ok(SolverWeights {
        w1,
        w2: 1.0 - w1,
        w3: var_next.sqrt() * (1.0 - w1).sqrt(),
    })
}

/// Noise-free variant: the residual `z_t − ẑ₀` is rescaled by `σ_{t'}/σ_t`
/// instead of being partly replaced by fresh noise.
pub fn deterministic_weights(t: f64, t_next: f64, s: &NoiseSchedule) -> Result<SolverWeights> {
    check_step(t, t_next)?;
    let w1 = (s.sigma_sq_at(t_next)? / s.sigma_sq_at(t)?).sqrt().clamp(0.0, 1.0);
    Ok(SolverWeights {
        w1,
        w2: 1.0 - w1,
        w3: 0.0,
    })
}

pub fn sde_step<T: Real>(
    z: &Tensor<T>,
    z0_hat: &Tensor<T>,
    t: f64,
    t_next: f64,
    noise: &Tensor<T>,
    s: &NoiseSchedule,
) -> Result<Tensor<T>> {
    let w = posterior_weights(t, t_next, s)?;
    apply_weights(&w, z, z0_hat, noise)
}

pub fn apply_weights<T: Real>(
    w: &SolverWeights,
    z: &Tensor<T>,
    z0_hat: &Tensor<T>,
    noise: &Tensor<T>,
) -> Result<Tensor<T>> {
    Tensor::lincomb(&[(T::of(w.w1), z), (T::of(w.w2), z0_hat), (T::of(w.w3), noise)])
}

/// Generate `ẑ_tgt` from `z_src`, starting the state at the source.
///
/// The grid runs uniformly from 1 to 0; the network is queried at
/// `min(t, cfg.t_max)` so the velocity inversion stays defined at the first
/// step. The last step assigns `ẑ₀` directly.
pub fn sample<T: Real>(
    model: &impl Network<T>,
    z_src: &Tensor<T>,
    mask: &Tensor<T>,
    cfg: &SamplerConfig,
    s: &NoiseSchedule,
) -> Result<Tensor<T>> {
    z_src.ensure_same_shape(mask)?;
    if !(cfg.t_max > 0.0 && cfg.t_max < 1.0) {
        return Err(Error::argument(format!(
            "sampler t_max {} must lie in (0, 1)",
            cfg.t_max
        )));
    }
    let grid = make_time_grid(cfg.steps, 1.0)?;
    let mut rng = rng::stream(cfg.seed, Domain::Sampler, 0, 0);
    let mut z = z_src.clone();
    let mut noise = Tensor::zeros(z.dims());
    for (k, (t, t_next)) in grid.steps_iter().enumerate() {
        let t = t.min(cfg.t_max);
        let v = model.predict(&z, t, z_src, mask)?;
        z.ensure_same_shape(&v)?;
        let coef = s.coefficients_at(t)?;
        let z0_hat = recover_target_with(&coef, &z, &v, z_src)?;
        z = if t_next == 0.0 {
            z0_hat
        } else {
            let w = if cfg.stochastic {
                rng::fill_normal(&mut rng, noise.data_mut());
                posterior_weights(t, t_next, s)?
            } else {
                deterministic_weights(t, t_next, s)?
            };
            apply_weights(&w, &z, &z0_hat, &noise)?
        };
        if !z.is_finite() {
            return Err(Error::NonFinite {
                what: "sampler state",
                step: k,
            });
        }
    }
    Ok(z)
}

/// A network that returns the exact velocity for a known target by reading
/// the noise back out of the current state. Used to check the sampler.
pub struct OracleVelocity<T: Real> {
    pub z_tgt: Tensor<T>,
    pub schedule: NoiseSchedule,
}

impl<T: Real> Network<T> for OracleVelocity<T> {
    fn predict(
        &self,
        z_t: &Tensor<T>,
        t: f64,
        z_src: &Tensor<T>,
        _mask: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        let k = self.schedule.coefficients_at(t)?;
        if k.c <= 0.0 {
            return Err(Error::domain(format!("oracle velocity undefined at t = {t}")));
        }
        let inv = 1.0 / k.c;
        let eps = Tensor::lincomb(&[
            (T::of(inv), z_t),
            (T::of(-k.a * inv), &self.z_tgt),
            (T::of(-k.b * inv), z_src),
        ])?;
        bridge::velocity_target(&self.z_tgt, &eps, t, &self.schedule)
    }
}
