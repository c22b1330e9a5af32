//! Velocity-matching training with AdamW.
//!
//! Each batch element is drawn from its own random stream keyed by
//! `(seed, step, position in batch)`, so batches do not depend on the order in
//! which elements are built. The reference loop is single-threaded and reduces
//! gradients in batch order, which makes loss curves bitwise reproducible.

use rand::Rng;

use crate::baseline::{self, DiffusionSchedule};
use crate::bridge;
use crate::data::RemovalTriplet;
use crate::model::{self, Example, Gradients, ModelParams};
use crate::rng::{self, Domain};
use crate::schedule::NoiseSchedule;
use crate::{Error, Real, Result, Tensor};

/// Loss above which training is aborted as diverged.
pub const DIVERGENCE_LOSS: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LossKind {
    /// Regress the bridge velocity `u_t` from `z_t` on the source–target bridge.
    #[default]
    BridgeVelocity,
    /// Regress the injected noise of a noise-to-data diffusion.
    DiffusionNoise,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub batch_size: usize,
    pub total_steps: usize,
    /// Bridge times are drawn from `U(0, t_clamp_hi)`.
    pub t_clamp_hi: f64,
    pub seed: u64,
    pub loss_kind: LossKind,
    pub log_every: usize,
    pub amm_enabled: bool,
    pub diffusion: DiffusionSchedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            batch_size: 8,
            total_steps: 2000,
            t_clamp_hi: 1.0 - 1e-4,
            seed: 0,
            loss_kind: LossKind::BridgeVelocity,
            log_every: 1,
            amm_enabled: true,
            diffusion: DiffusionSchedule::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.weight_decay >= 0.0
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.eps_adam > 0.0
            && self.batch_size >= 1
            && self.log_every >= 1
            && self.t_clamp_hi > 0.0
            && self.t_clamp_hi < 1.0;
        if !ok {
            return Err(Error::argument(format!("invalid training config {self:?}")));
        }
        Ok(())
    }
}

/// First and second moments plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState<T = f32> {
    pub m: ModelParams<T>,
    pub v: ModelParams<T>,
    pub step: u64,
}

impl<T: Real> OptimState<T> {
    pub fn new(params: &ModelParams<T>) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// `p ← p − lr·(m̂/(√v̂ + ε) + λ·p)` with bias-corrected moments.
pub fn adamw_step<T: Real>(
    p: &mut ModelParams<T>,
    g: &Gradients<T>,
    o: &mut OptimState<T>,
    cfg: &TrainConfig,
) {
    o.step += 1;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let bc1 = 1.0 - b1.powi(o.step as i32);
    let bc2 = 1.0 - b2.powi(o.step as i32);
    let (tb1, tb2) = (T::of(b1), T::of(b2));
    let (one_b1, one_b2) = (T::of(1.0 - b1), T::of(1.0 - b2));
    let (ibc1, ibc2) = (T::of(1.0 / bc1), T::of(1.0 / bc2));
    let (lr, wd, eps) = (T::of(cfg.lr), T::of(cfg.weight_decay), T::of(cfg.eps_adam));

    let grads = g.tensors();
    let ms = o.m.tensors_mut();
    let vs = o.v.tensors_mut();
    for ((((_, pt), (_, gt)), (_, mt)), (_, vt)) in
        p.tensors_mut().into_iter().zip(grads).zip(ms).zip(vs)
    {
        let it = pt
            .data_mut()
            .iter_mut()
            .zip(gt.data())
            .zip(mt.data_mut().iter_mut())
            .zip(vt.data_mut().iter_mut());
        for (((w, &gr), m), v) in it {
            *m = tb1 * *m + one_b1 * gr;
            *v = tb2 * *v + one_b2 * gr * gr;
            let mhat = *m * ibc1;
            let vhat = *v * ibc2;
            *w = *w - lr * (mhat / (vhat.sqrt() + eps) + wd * *w);
        }
    }
}

/// Training pair for the bridge: `z_t` from the marginal, target `u_t`.
pub fn bridge_example<T: Real>(
    triplet: &RemovalTriplet<T>,
    t: f64,
    eps: &Tensor<T>,
    s: &NoiseSchedule,
) -> Result<Example<T>> {
    let z_t = bridge::interpolate(&triplet.target, &triplet.source, t, eps, s)?;
    let target = bridge::velocity_target(&triplet.target, eps, t, s)?;
    Ok(Example {
        z_t,
        t,
        z_src: triplet.source.clone(),
        mask: triplet.mask.clone(),
        target,
    })
}

/// `mean ‖v_θ(z_t, t, y) − u_t‖²` for one triplet, time and noise draw.
pub fn bridge_loss<T: Real>(
    p: &ModelParams<T>,
    triplet: &RemovalTriplet<T>,
    t: f64,
    eps: &Tensor<T>,
    s: &NoiseSchedule,
) -> Result<f64> {
    let ex = bridge_example(triplet, t, eps, s)?;
    let l = model::loss(p, std::slice::from_ref(&ex), 1.0)?;
    if !l.is_finite() {
        return Err(Error::NonFinite { what: "loss", step: 0 });
    }
    Ok(l)
}

/// Build batch element `slot` of training step `step`.
pub fn draw_example<T: Real>(
    dataset: &[RemovalTriplet<T>],
    cfg: &TrainConfig,
    s: &NoiseSchedule,
    step: usize,
    slot: usize,
) -> Result<Example<T>> {
    let mut rng = rng::stream(cfg.seed, Domain::Train, step as u64, slot as u64);
    let tr = &dataset[rng.random_range(0..dataset.len())];
    let eps = rng::normal_tensor(&mut rng, tr.dims());
    match cfg.loss_kind {
        LossKind::BridgeVelocity => {
            let t = rng.random::<f64>() * cfg.t_clamp_hi;
            bridge_example(tr, t, &eps, s)
        }
        LossKind::DiffusionNoise => {
            let i = rng.random_range(1..=cfg.diffusion.steps());
            baseline::noise_example(tr, i, &eps, &cfg.diffusion)
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T = f32> {
    pub params: ModelParams<T>,
    /// `(step, batch loss)` every `log_every` steps.
    pub curve: Vec<(usize, f64)>,
}

impl<T> TrainOutcome<T> {
    pub fn curve_csv(&self) -> String {
        let mut s = String::from("step,loss\n");
        for (step, loss) in &self.curve {
            s.push_str(&format!("{step},{loss}\n"));
        }
        s
    }
}

pub fn train<T: Real>(
    dataset: &[RemovalTriplet<T>],
    cfg: &TrainConfig,
    s: &NoiseSchedule,
) -> Result<TrainOutcome<T>> {
    let first = dataset
        .first()
        .ok_or_else(|| Error::argument("training dataset is empty"))?;
    let params = ModelParams::init(first.dims()[0], cfg.amm_enabled, cfg.seed)?;
    train_from(params, dataset, cfg, s)
}

/// Continue training from given parameters with a fresh optimizer state.
pub fn train_from<T: Real>(
    mut params: ModelParams<T>,
    dataset: &[RemovalTriplet<T>],
    cfg: &TrainConfig,
    s: &NoiseSchedule,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::argument("training dataset is empty"));
    }
    let mut opt = OptimState::new(&params);
    let mut curve = Vec::with_capacity(cfg.total_steps / cfg.log_every + 1);
    for step in 0..cfg.total_steps {
        let batch = (0..cfg.batch_size)
            .map(|slot| draw_example(dataset, cfg, s, step, slot))
            .collect::<Result<Vec<_>>>()?;
        let (loss, grads) = match model::backward(&params, &batch, 1.0) {
            Ok(r) => r,
            Err(Error::NonFinite { .. }) => {
                return Err(Error::Diverged { step, loss: f64::NAN })
            }
            Err(e) => return Err(e),
        };
        if !loss.is_finite() || loss > DIVERGENCE_LOSS {
            return Err(Error::Diverged { step, loss });
        }
        if step % cfg.log_every == 0 {
            curve.push((step, loss));
        }
        adamw_step(&mut params, &grads, &mut opt, cfg);
    }
    Ok(TrainOutcome { params, curve })
}

#[cfg(test)]
mod tests;
