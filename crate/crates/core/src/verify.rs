//! Invariant battery: closed-form identities, Monte-Carlo marginals, solver
//! consistency and gradient correctness, each reported as measured error
//! against a fixed tolerance.

use std::fmt;
use std::time::Instant;

use rand::Rng;

use crate::baseline::{self, DiffusionSchedule, OracleNoise};
use crate::bridge::{self, interpolate_with, recover_target_with, velocity_target_with};
use crate::data::{generate_triplet, GenSpec};
use crate::model::{self, gradient_check, ModelParams};
use crate::rng::{self, Domain};
use crate::sampler::{self, OracleVelocity, SamplerConfig};
use crate::schedule::{make_time_grid, BridgeCoefficients, NoiseSchedule};
use crate::training::bridge_example;
use crate::{Error, Result, Tensor};

pub const CHECKS: [&str; 7] = [
    "schedule",
    "mc-marginal",
    "score-velocity",
    "roundtrip",
    "chain-marginal",
    "gradcheck",
    "ddim-oracle",
];

/// Deliberate defects used to show that the battery can fail.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Fault {
    /// Negate `c_t` wherever the forward marginal is built.
    pub flip_c_sign: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyConfig {
    pub schedule: NoiseSchedule,
    pub seed: u64,
    pub mc_paths: usize,
    pub mc_steps: usize,
    pub fault: Fault,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            schedule: NoiseSchedule::default(),
            seed: 0,
            mc_paths: 100_000,
            mc_steps: 500,
            fault: Fault::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Metric {
    pub label: &'static str,
    pub measured: f64,
    pub tolerance: f64,
}

impl Metric {
    fn new(label: &'static str, measured: f64, tolerance: f64) -> Self {
        Self {
            label,
            measured,
            tolerance,
        }
    }

    pub fn passed(&self) -> bool {
        self.measured <= self.tolerance
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub metrics: Vec<Metric>,
    pub seconds: f64,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.metrics.iter().all(Metric::passed)
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {:<15}", self.name)?;
        for m in &self.metrics {
            write!(f, " {}={:.3e} (tol {:.1e})", m.label, m.measured, m.tolerance)?;
        }
        write!(f, " [{:.2}s]", self.seconds)
    }
}

/// Run every check, or only `only` when given.
pub fn run_suite(only: Option<&str>, cfg: &VerifyConfig) -> Result<Vec<CheckOutcome>> {
    match only {
        Some(name) => Ok(vec![run_check(name, cfg)?]),
        None => CHECKS.iter().map(|n| run_check(n, cfg)).collect(),
    }
}

pub fn run_check(name: &str, cfg: &VerifyConfig) -> Result<CheckOutcome> {
    let start = Instant::now();
    let (name, metrics) = match name {
        "schedule" => ("schedule", schedule_identities(&cfg.schedule)?),
        "mc-marginal" => ("mc-marginal", mc_marginal(cfg)?),
        "score-velocity" => ("score-velocity", score_velocity(cfg)?),
        "roundtrip" => ("roundtrip", roundtrip(cfg)?),
        "chain-marginal" => ("chain-marginal", chain_marginal(cfg)?),
        "gradcheck" => ("gradcheck", gradcheck(cfg)?),
        "ddim-oracle" => ("ddim-oracle", ddim_oracle(cfg)?),
        other => {
            return Err(Error::argument(format!(
                "unknown check `{other}`; expected one of {}",
                CHECKS.join(", ")
            )))
        }
    };
    Ok(CheckOutcome {
        name,
        metrics,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn forward_coefficients(cfg: &VerifyConfig, t: f64) -> Result<BridgeCoefficients> {
    let mut k = cfg.schedule.coefficients_at(t)?;
    if cfg.fault.flip_c_sign {
        k.c = -k.c;
    }
    Ok(k)
}

fn rel(x: f64, y: f64) -> f64 {
    let d = (x - y).abs();
    if d == 0.0 {
        0.0
    } else {
        d / x.abs().max(y.abs())
    }
}

fn random_tensor(seed: u64, counter: u64, dims: &[usize]) -> Tensor<f64> {
    rng::normal_tensor(&mut rng::stream(seed, Domain::Verify, counter, 0), dims)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn schedule_identities(s: &NoiseSchedule) -> Result<Vec<Metric>> {
    let normalized = NoiseSchedule::new(s.beta_min, s.beta_max, true)?;
    let s1 = s.sigma_one_sq();
    let (mut sum, mut c2, mut rho2) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..1000 {
        let t = i as f64 / 999.0;
        let k = s.coefficients_at(t)?;
        sum = sum.max((k.a + k.b - 1.0).abs());
        c2 = c2.max(rel(k.c * k.c, k.a * k.b * s1));
        let n = normalized.coefficients_at(t)?;
        rho2 = rho2.max(rel(n.rho * n.rho, n.a));
    }
    let k0 = s.coefficients_at(0.0)?;
    let k1 = s.coefficients_at(1.0)?;
    let boundary = [k0.a - 1.0, k0.b, k0.c, k1.a, k1.b - 1.0, k1.c]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(vec![
        Metric::new("a+b-1", sum, 1e-12),
        Metric::new("c2_vs_ab", c2, 1e-12),
        Metric::new("rho2_vs_a", rho2, 1e-12),
        Metric::new("boundary", boundary, 1e-12),
    ])
}

/// Simulated forward-bridge paths against the closed-form marginal.
fn mc_marginal(cfg: &VerifyConfig) -> Result<Vec<Metric>> {
    let n = cfg.mc_paths;
    if n < 2 || !cfg.mc_steps.is_multiple_of(10) {
        return Err(Error::argument("mc_paths >= 2 and mc_steps divisible by 10 required"));
    }
    let (zt, zs) = (0.5, -0.5);
    let states = bridge::simulate_forward_bridge(
        &Tensor::full(&[n], zt),
        &Tensor::full(&[n], zs),
        cfg.mc_steps,
        cfg.mc_steps / 10,
        &cfg.schedule,
        cfg.seed,
    )?;
    let (mut worst_se, mut worst_std) = (0.0f64, 0.0f64);
    for st in &states[1..10] {
        let k = forward_coefficients(cfg, st.t)?;
        let (mean, std) = mean_std(st.z.data());
        let se = std / (n as f64).sqrt();
        worst_se = worst_se.max((mean - (k.a * zt + k.b * zs)).abs() / se);
        worst_std = worst_std.max((std - k.c).abs() / k.c.abs());
    }
    Ok(vec![
        Metric::new("mean_dev_se", worst_se, 4.0),
        Metric::new("std_rel_err", worst_std, 0.1),
    ])
}

fn score_velocity(cfg: &VerifyConfig) -> Result<Vec<Metric>> {
    let dims = [2, 8, 8];
    let (zt, zs) = (random_tensor(cfg.seed, 1, &dims), random_tensor(cfg.seed, 2, &dims));
    let mut worst = 0.0f64;
    for i in 1..=99 {
        let t = i as f64 / 100.0;
        let eps = random_tensor(cfg.seed, 100 + i, &dims);
        let k = forward_coefficients(cfg, t)?;
        let z = interpolate_with(&k, &zt, &zs, &eps)?;
        let v = bridge::velocity_target(&zt, &eps, t, &cfg.schedule)?;
        let from_v = bridge::score_from_velocity(&z, &v, &zs, t, &cfg.schedule)?;
        let exact = bridge::analytic_score(&z, &zt, &zs, t, &cfg.schedule)?;
        for (a, b) in from_v.data().iter().zip(exact.data()) {
            worst = worst.max((a - b).abs() / b.abs().max(1.0));
        }
    }
    Ok(vec![Metric::new("score_rel_err", worst, 1e-9)])
}

fn roundtrip(cfg: &VerifyConfig) -> Result<Vec<Metric>> {
    let dims = [2, 8, 8];
    let (zt, zs) = (random_tensor(cfg.seed, 3, &dims), random_tensor(cfg.seed, 4, &dims));
    let mut worst = 0.0f64;
    for i in 1..=99 {
        let t = i as f64 / 100.0;
        let eps = random_tensor(cfg.seed, 200 + i, &dims);
        let truth = cfg.schedule.coefficients_at(t)?;
        let z = interpolate_with(&forward_coefficients(cfg, t)?, &zt, &zs, &eps)?;
        let v = velocity_target_with(&truth, &zt, &eps)?;
        let back = recover_target_with(&truth, &z, &v, &zs)?;
        worst = worst.max(back.max_abs_diff(&zt)?);
    }
    Ok(vec![Metric::new("max_abs_err", worst, 1e-9)])
}

/// Stochastic solver chains with `ẑ₀ ≡ z_tgt` against the closed-form
/// marginal at every grid time, plus oracle-velocity convergence.
fn chain_marginal(cfg: &VerifyConfig) -> Result<Vec<Metric>> {
    let n = cfg.mc_paths;
    let (zt, zs) = (0.5, -0.5);
    let target = Tensor::full(&[n], zt);
    let mut z = Tensor::full(&[n], zs);
    let mut rng = rng::stream(cfg.seed, Domain::Verify, 5, 0);
    let mut noise = Tensor::zeros(&[n]);
    let (mut worst_se, mut worst_var) = (0.0f64, 0.0f64);
    for (t, t_next) in make_time_grid(10, 1.0)?.steps_iter() {
        if t_next == 0.0 {
            break;
        }
        rng::fill_normal(&mut rng, noise.data_mut());
        z = sampler::sde_step(&z, &target, t, t_next, &noise, &cfg.schedule)?;
        let k = forward_coefficients(cfg, t_next)?;
        let (mean, std) = mean_std(z.data());
        worst_se = worst_se.max((mean - (k.a * zt + k.b * zs)).abs() / (std / (n as f64).sqrt()));
        worst_var = worst_var.max((std * std - k.c * k.c).abs() / (k.c * k.c));
    }

    let dims = [2, 8, 8];
    let z_tgt = random_tensor(cfg.seed, 6, &dims);
    let z_src = random_tensor(cfg.seed, 7, &dims);
    let mask = Tensor::zeros(&dims);
    let oracle = OracleVelocity {
        z_tgt: z_tgt.clone(),
        schedule: cfg.schedule,
    };
    let mut errs = Vec::new();
    for steps in [1, 5, 10, 25, 50] {
        let sc = SamplerConfig {
            steps,
            stochastic: false,
            seed: cfg.seed,
            ..SamplerConfig::default()
        };
        let out = sampler::sample(&oracle, &z_src, &mask, &sc, &cfg.schedule)?;
        errs.push(out.max_abs_diff(&z_tgt)?);
    }
    let increase = errs.windows(2).fold(0.0f64, |m, w| m.max(w[1] - w[0]));
    Ok(vec![
        Metric::new("mean_dev_se", worst_se, 4.0),
        Metric::new("var_rel_err", worst_var, 0.1),
        Metric::new("oracle_err_n50", errs[4], 1e-6),
        Metric::new("err_increase", increase, 1e-9),
    ])
}

fn gradcheck(cfg: &VerifyConfig) -> Result<Vec<Metric>> {
    let mut params = ModelParams::<f64>::init(2, true, cfg.seed)?;
    // γ and β start at zero, which would leave the mask embedding without
    // gradient; give them random values so every tensor is exercised.
    let mut rng = rng::stream(cfg.seed, Domain::Verify, 8, 0);
    if let Some(amm) = params.amm.as_mut() {
        for t in [&mut amm.gamma_w, &mut amm.gamma_b, &mut amm.beta_w, &mut amm.beta_b] {
            *t = rng::normal_tensor::<f64, _>(&mut rng, t.dims()).scale(0.3);
        }
    }
    let spec = GenSpec {
        frames: 2,
        height: 8,
        width: 8,
        radius_max: 2.5,
        seed: cfg.seed,
        ..GenSpec::default()
    };
    let mut batch = Vec::new();
    for j in 0..2 {
        let tr = generate_triplet(&spec, j)?.cast::<f64>();
        let eps = rng::normal_tensor(&mut rng, tr.dims());
        let t = rng.random_range(0.05..0.95);
        batch.push(bridge_example(&tr, t, &eps, &cfg.schedule)?);
    }
    let report = gradient_check(&params, &batch, 1e-4)?;
    let (_, grads) = model::backward(&params, &batch, 1.0)?;
    let untouched = grads
        .tensors()
        .iter()
        .filter(|(_, g)| g.max_abs() == 0.0)
        .count();
    Ok(vec![
        Metric::new("max_rel_err", report.max_rel_err, 1e-4),
        Metric::new("untouched", untouched as f64, 0.0),
    ])
}

fn ddim_oracle(cfg: &VerifyConfig) -> Result<Vec<Metric>> {
    let d = DiffusionSchedule::default();
    let dims = [2, 8, 8];
    let z_tgt = random_tensor(cfg.seed, 9, &dims);
    let eps = random_tensor(cfg.seed, 10, &dims);
    let mask = Tensor::zeros(&dims);
    let oracle = OracleNoise {
        z_tgt: z_tgt.clone(),
        schedule: d.clone(),
    };
    let mut worst = 0.0f64;
    for n in [10, 50, 1000] {
        let z_init = baseline::diffusion_forward_sample(&z_tgt, d.steps(), &eps, &d)?;
        let out = baseline::ddim_sample_from(&oracle, z_init, &z_tgt, &mask, n, &d)?;
        worst = worst.max(out.max_abs_diff(&z_tgt)?);
    }
    Ok(vec![Metric::new("max_abs_err", worst, 1e-9)])
}
