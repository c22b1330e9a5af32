//! Variance clock of the bridge.
//!
//! The bridge is driftless with `g(t)² = β(t)`, so the cumulative variance is
//! `σ_t² = ∫₀ᵗ β(u) du = β_min·t + ½(β_max − β_min)·t²`. With `σ̄_t² = σ₁² − σ_t²`
//! the marginal `z_t = a·z_tgt + b·z_src + c·ε` has
//!
//! ```text
//! a = σ̄_t²/σ₁²,   b = σ_t²/σ₁²,   c = σ̄_t·σ_t/σ₁,   ρ = √(a² + c²)
//! ```
//!
//! In normalized mode every variance is divided by the raw `σ₁²`, so `σ₁ = 1`
//! and `ρ² = a`.

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ScheduleKind {
    #[default]
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSchedule {
    pub beta_min: f64,
    pub beta_max: f64,
    pub kind: ScheduleKind,
    pub normalized: bool,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self {
            beta_min: 0.01,
            beta_max: 50.0,
            kind: ScheduleKind::Linear,
            normalized: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BridgeCoefficients {
    pub t: f64,
    /// Weight of the target.
    pub a: f64,
    /// Weight of the source.
    pub b: f64,
    /// Noise standard deviation.
    pub c: f64,
    pub rho: f64,
}

/// Coefficients `(A, B, C)` of a general diffusion bridge `z_t = A·z₀ + B·z_T + C·ε`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneralCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

fn check_time(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::domain(format!("time {t} outside [0, 1]")));
    }
    Ok(())
}

impl NoiseSchedule {
    pub fn new(beta_min: f64, beta_max: f64, normalized: bool) -> Result<Self> {
        if !(beta_min >= 0.0 && beta_max > beta_min && beta_max.is_finite()) {
            return Err(Error::argument(format!(
                "need 0 <= beta_min < beta_max, got ({beta_min}, {beta_max})"
            )));
        }
        // β must stay strictly positive on [0, 1]; β(1) = β_max > 0 always, so
        // only β(0) = β_min can vanish. σ² is still strictly increasing then.
        Ok(Self {
            beta_min,
            beta_max,
            kind: ScheduleKind::Linear,
            normalized,
        })
    }

    pub fn beta_at(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.beta_min + t * (self.beta_max - self.beta_min))
    }

    fn raw_sigma_sq(&self, t: f64) -> f64 {
        self.beta_min * t + 0.5 * (self.beta_max - self.beta_min) * t * t
    }

    /// `σ₁²` in the units of this schedule (exactly 1 when normalized).
    pub fn sigma_one_sq(&self) -> f64 {
        if self.normalized {
            1.0
        } else {
            self.raw_sigma_sq(1.0)
        }
    }

    pub fn sigma_sq_at(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        let raw = self.raw_sigma_sq(t);
        Ok(if self.normalized {
            raw / self.raw_sigma_sq(1.0)
        } else {
            raw
        })
    }

    /// `σ̄_t² = σ₁² − σ_t²`, the variance still to accumulate before `t = 1`.
    pub fn sigma_bar_sq_at(&self, t: f64) -> Result<f64> {
        Ok(self.sigma_one_sq() - self.sigma_sq_at(t)?)
    }

    /// Squared diffusion coefficient `g(t)² = dσ_t²/dt` in schedule units.
    pub fn g_sq_at(&self, t: f64) -> Result<f64> {
        let beta = self.beta_at(t)?;
        Ok(if self.normalized {
            beta / self.raw_sigma_sq(1.0)
        } else {
            beta
        })
    }

    pub fn coefficients_at(&self, t: f64) -> Result<BridgeCoefficients> {
        let s1 = self.sigma_one_sq();
        let s = self.sigma_sq_at(t)?;
        let sbar = s1 - s;
        let a = sbar / s1;
        let b = s / s1;
        let c = sbar.sqrt() * s.sqrt() / s1.sqrt();
        Ok(BridgeCoefficients {
            t,
            a,
            b,
            c,
            rho: (a * a + c * c).sqrt(),
        })
    }
}

/// General bridge coefficients for a diffusion with signal scale `α` and noise
/// std `σ`, pinned at `T`:
/// `A = α_t(1 − SNR_T/SNR_t)`, `B = (SNR_T/SNR_t)·α_t/α_T`, `C = σ_t·√(1 − SNR_T/SNR_t)`.
pub fn general_coefficients_at(
    alpha_t: f64,
    sigma_t: f64,
    alpha_end: f64,
    sigma_end: f64,
) -> Result<GeneralCoefficients> {
    if !(alpha_t > 0.0 && alpha_end > 0.0 && sigma_end > 0.0 && sigma_t >= 0.0) {
        return Err(Error::domain(format!(
            "need α_t, α_T, σ_T > 0 and σ_t >= 0, got ({alpha_t}, {sigma_t}, {alpha_end}, {sigma_end})"
        )));
    }
    // SNR_T / SNR_t, written to stay finite at σ_t = 0.
    let ratio = (alpha_end * alpha_end * sigma_t * sigma_t)
        / (sigma_end * sigma_end * alpha_t * alpha_t);
    if ratio > 1.0 + 1e-12 {
        return Err(Error::domain(format!(
            "SNR_T exceeds SNR_t (ratio {ratio}); the bridge would run backward in SNR"
        )));
    }
    let ratio = ratio.min(1.0);
    Ok(GeneralCoefficients {
        a: alpha_t * (1.0 - ratio),
        b: ratio * alpha_t / alpha_end,
        c: sigma_t * (1.0 - ratio).sqrt(),
    })
}

/// Descending inference times `t_N = t_max, …, t_0 = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn t_max(&self) -> f64 {
        self.times[0]
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Consecutive `(t, t_next)` pairs from `t_max` down to 0.
    pub fn steps_iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.windows(2).map(|w| (w[0], w[1]))
    }
}

pub fn make_time_grid(steps: usize, t_max: f64) -> Result<TimeGrid> {
    if steps == 0 {
        return Err(Error::argument("time grid needs at least one step"));
    }
    if !(t_max > 0.0 && t_max <= 1.0) {
        return Err(Error::argument(format!("t_max {t_max} outside (0, 1]")));
    }
    let n = steps as f64;
    let times = (0..=steps).rev().map(|k| t_max * (k as f64 / n)).collect();
    Ok(TimeGrid { times })
}
