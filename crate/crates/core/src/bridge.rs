//! Closed-form bridge math: marginal sampling, velocity targets, scores, the
//! guidance term, target recovery, and an Euler–Maruyama simulation oracle.

use crate::rng::{self, Domain};
use crate::schedule::{BridgeCoefficients, NoiseSchedule};
use crate::{Error, Real, Result, Tensor};

/// An intermediate bridge state `z_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct BridgeState<T = f64> {
    pub z: Tensor<T>,
    pub t: f64,
}

/// `z_t = a_t·z_tgt + b_t·z_src + c_t·ε`.
pub fn interpolate<T: Real>(
    z_tgt: &Tensor<T>,
    z_src: &Tensor<T>,
    t: f64,
    eps: &Tensor<T>,
    s: &NoiseSchedule,
) -> Result<Tensor<T>> {
    let k = s.coefficients_at(t)?;
    interpolate_with(&k, z_tgt, z_src, eps)
}

pub(crate) fn interpolate_with<T: Real>(
    k: &BridgeCoefficients,
    z_tgt: &Tensor<T>,
    z_src: &Tensor<T>,
    eps: &Tensor<T>,
) -> Result<Tensor<T>> {
    Tensor::lincomb(&[(T::of(k.a), z_tgt), (T::of(k.b), z_src), (T::of(k.c), eps)])
}

/// The plain Brownian bridge `(1−t)·x₀ + t·x₁ + √(t(1−t))·ε`.
pub fn brownian_interpolate<T: Real>(
    x0: &Tensor<T>,
    x1: &Tensor<T>,
    t: f64,
    eps: &Tensor<T>,
) -> Result<Tensor<T>> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::domain(format!("time {t} outside [0, 1]")));
    }
    let sd = (t * (1.0 - t)).sqrt();
    Tensor::lincomb(&[(T::of(1.0 - t), x0), (T::of(t), x1), (T::of(sd), eps)])
}

/// `u_t = (a/ρ)·ε − (c/ρ)·z_tgt`.
pub fn velocity_target<T: Real>(
    z_tgt: &Tensor<T>,
    eps: &Tensor<T>,
    t: f64,
    s: &NoiseSchedule,
) -> Result<Tensor<T>> {
    let k = s.coefficients_at(t)?;
    velocity_target_with(&k, z_tgt, eps)
}

pub(crate) fn velocity_target_with<T: Real>(
    k: &BridgeCoefficients,
    z_tgt: &Tensor<T>,
    eps: &Tensor<T>,
) -> Result<Tensor<T>> {
    if k.rho <= 0.0 {
        return Err(Error::domain(format!(
            "velocity target undefined at t = {} (rho = 0)",
            k.t
        )));
    }
    Tensor::lincomb(&[(T::of(k.a / k.rho), eps), (T::of(-k.c / k.rho), z_tgt)])
}

/// Score of the bridge marginal, `−(z_t − a·z_tgt − b·z_src)/c²`.
pub fn analytic_score<T: Real>(
    z_t: &Tensor<T>,
    z_tgt: &Tensor<T>,
    z_src: &Tensor<T>,
    t: f64,
    s: &NoiseSchedule,
) -> Result<Tensor<T>> {
    let k = s.coefficients_at(t)?;
    if k.c <= 0.0 {
        return Err(Error::domain(format!("score undefined at t = {t} (c = 0)")));
    }
    let inv = 1.0 / (k.c * k.c);
    Tensor::lincomb(&[
        (T::of(-inv), z_t),
        (T::of(k.a * inv), z_tgt),
        (T::of(k.b * inv), z_src),
    ])
}

/// Guidance term `h = ∇ log p(z_src | z_t) = (z_src − z_t)/σ̄_t²` of the driftless bridge.
pub fn guidance_h<T: Real>(
    z_t: &Tensor<T>,
    z_src: &Tensor<T>,
    t: f64,
    s: &NoiseSchedule,
) -> Result<Tensor<T>> {
    z_t.ensure_same_shape(z_src)?;
    let sbar = s.sigma_bar_sq_at(t)?;
    if sbar <= 0.0 {
        return Err(Error::domain(format!("guidance undefined at t = {t}")));
    }
    let inv = T::of(1.0 / sbar);
    Tensor::lincomb(&[(inv, z_src), (-inv, z_t)])
}

/// Predicted target from a velocity:
/// `ẑ₀ = (a/ρ²)·z_t − (a·b/ρ²)·z_src − (c/ρ)·v̂`.
pub fn recover_target<T: Real>(
    z_t: &Tensor<T>,
    v_hat: &Tensor<T>,
    z_src: &Tensor<T>,
    t: f64,
    s: &NoiseSchedule,
) -> Result<Tensor<T>> {
    let k = s.coefficients_at(t)?;
    recover_target_with(&k, z_t, v_hat, z_src)
}

pub(crate) fn recover_target_with<T: Real>(
    k: &BridgeCoefficients,
    z_t: &Tensor<T>,
    v_hat: &Tensor<T>,
    z_src: &Tensor<T>,
) -> Result<Tensor<T>> {
    if k.c <= 0.0 || k.rho <= 0.0 {
        return Err(Error::domain(format!(
            "target recovery undefined at t = {} (c = {}, rho = {})",
            k.t, k.c, k.rho
        )));
    }
    let r2 = k.rho * k.rho;
    Tensor::lincomb(&[
        (T::of(k.a / r2), z_t),
        (T::of(-k.a * k.b / r2), z_src),
        (T::of(-k.c / k.rho), v_hat),
    ])
}

/// Score `∇ log p_t(z | z_src)` implied by a predicted velocity: recover
/// `ẑ_tgt`, then evaluate the Gaussian score of the marginal around it.
pub fn score_from_velocity<T: Real>(
    z_t: &Tensor<T>,
    v_hat: &Tensor<T>,
    z_src: &Tensor<T>,
    t: f64,
    s: &NoiseSchedule,
) -> Result<Tensor<T>> {
    let k = s.coefficients_at(t)?;
    let z0 = recover_target_with(&k, z_t, v_hat, z_src)?;
    let c2 = k.c * k.c;
    Tensor::lincomb(&[
        (T::of(-1.0 / c2), z_t),
        (T::of(k.a / c2), &z0),
        (T::of(k.b / c2), z_src),
    ])
}

/// Euler–Maruyama simulation of `dz = g²·h dt + g dw` from `z_tgt` at `t = 0`
/// toward the pin `z_src` at `t = 1`, with `g² = dσ²/dt`.
///
/// Records the state at `t = 0`, after every `record_every` steps, and at the
/// end. Each element of the tensors is an independent path.
pub fn simulate_forward_bridge(
    z_tgt: &Tensor<f64>,
    z_src: &Tensor<f64>,
    n_steps: usize,
    record_every: usize,
    s: &NoiseSchedule,
    seed: u64,
) -> Result<Vec<BridgeState<f64>>> {
    z_tgt.ensure_same_shape(z_src)?;
    if n_steps < 10 {
        return Err(Error::argument(format!(
            "simulation needs at least 10 steps, got {n_steps}"
        )));
    }
    if record_every == 0 {
        return Err(Error::argument("record_every must be positive"));
    }
    let dt = 1.0 / n_steps as f64;
    let mut rng = rng::stream(seed, Domain::Simulation, 0, 0);
    let mut z = z_tgt.clone();
    let mut noise = vec![0.0f64; z.len()];
    let mut out = vec![BridgeState { z: z.clone(), t: 0.0 }];
    for k in 0..n_steps {
        let t = k as f64 * dt;
        let g2 = s.g_sq_at(t)?;
        let pull = g2 * dt / s.sigma_bar_sq_at(t)?;
        let sd = (g2 * dt).sqrt();
        rng::fill_normal(&mut rng, &mut noise);
        for ((zi, &si), &ni) in z.data_mut().iter_mut().zip(z_src.data()).zip(&noise) {
            *zi += pull * (si - *zi) + sd * ni;
        }
        let step = k + 1;
        if step % record_every == 0 || step == n_steps {
            out.push(BridgeState {
                z: z.clone(),
                t: step as f64 * dt,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sc(x: f64) -> Tensor<f64> {
        Tensor::scalar(x)
    }

    fn s() -> NoiseSchedule {
        NoiseSchedule::default()
    }

    #[test]
    fn interpolate_boundaries_and_midpoint() {
        let (tgt, src) = (sc(0.0), sc(1.0));
        assert_eq!(interpolate(&tgt, &src, 0.0, &sc(5.0), &s()).unwrap().data(), &[0.0]);
        assert_eq!(interpolate(&tgt, &src, 1.0, &sc(5.0), &s()).unwrap().data(), &[1.0]);
        let mid = interpolate(&tgt, &src, 0.5, &sc(0.0), &s()).unwrap().data()[0];
        assert!((mid - 0.250_099_980_003_999_2).abs() < 1e-12);
        assert!(interpolate(&tgt, &Tensor::zeros(&[2]), 0.5, &sc(0.0), &s()).is_err());
    }

    #[test]
    fn brownian_bridge_values() {
        let v = |x0, x1, t, e| brownian_interpolate(&sc(x0), &sc(x1), t, &sc(e)).unwrap().data()[0];
        assert_eq!(v(2.0, 4.0, 0.5, 0.0), 3.0);
        assert_eq!(v(2.0, 4.0, 0.0, 7.0), 2.0);
        assert_eq!(v(0.0, 0.0, 0.5, 1.0), 0.5);
        assert!(brownian_interpolate(&sc(0.0), &Tensor::zeros(&[3]), 0.5, &sc(0.0)).is_err());
    }

    #[test]
    fn brownian_bridge_is_unit_clock_instance() {
        // σ_t² = t, σ₁² = 1 gives a = 1 − t, b = t, c = √(t(1 − t)).
        for k in 0..=100 {
            let t = k as f64 / 100.0;
            let kc = BridgeCoefficients {
                t,
                a: 1.0 - t,
                b: t,
                c: (t * (1.0 - t)).sqrt(),
                rho: 0.0,
            };
            let (x0, x1, e) = (sc(-0.7), sc(1.3), sc(0.4));
            let lhs = brownian_interpolate(&x0, &x1, t, &e).unwrap().data()[0];
            let rhs = interpolate_with(&kc, &x0, &x1, &e).unwrap().data()[0];
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn velocity_target_values() {
        let u0 = velocity_target(&sc(3.0), &sc(1.25), 0.0, &s()).unwrap();
        assert_eq!(u0.data(), &[1.25]);
        // Frozen: a/ρ − 2c/ρ with quadrature-derived coefficients at t = 0.5.
        let u = velocity_target(&sc(2.0), &sc(1.0), 0.5, &s()).unwrap().data()[0];
        assert!((u - (-0.134_232_261_641_636_04)).abs() < 1e-12, "{u}");
        let u = velocity_target(&sc(2.0), &sc(1.0), 1.0 - 1e-6, &s()).unwrap().data()[0];
        assert!((u + 2.0).abs() < 1e-2, "{u}");
        assert!(matches!(
            velocity_target(&sc(2.0), &sc(1.0), 1.0, &s()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn score_values() {
        let st = s();
        let k = st.coefficients_at(0.3).unwrap();
        let (tgt, src) = (sc(0.4), sc(-1.1));
        let mu = k.a * 0.4 + k.b * -1.1;
        let zero = analytic_score(&sc(mu), &tgt, &src, 0.3, &st).unwrap().data()[0];
        assert!(zero.abs() < 1e-12);
        let one = analytic_score(&sc(mu + k.c), &tgt, &src, 0.3, &st).unwrap().data()[0];
        assert!((one + 1.0 / k.c).abs() < 1e-9);
        assert!(analytic_score(&sc(0.0), &tgt, &src, 0.0, &st).is_err());
        assert!(analytic_score(&sc(0.0), &tgt, &src, 1.0, &st).is_err());
    }

    #[test]
    fn score_of_interpolated_state_is_scaled_noise() {
        let st = s();
        let (tgt, src, eps) = (sc(0.2), sc(0.9), sc(-0.6));
        for t in [0.05, 0.5, 0.95] {
            let z = interpolate(&tgt, &src, t, &eps, &st).unwrap();
            let sc_ = analytic_score(&z, &tgt, &src, t, &st).unwrap().data()[0];
            let c = st.coefficients_at(t).unwrap().c;
            assert!((sc_ + -0.6 / c).abs() < 1e-9 * (1.0 / c), "t={t}");
        }
    }

    #[test]
    fn guidance_values() {
        let st = s();
        assert_eq!(guidance_h(&sc(0.3), &sc(0.3), 0.4, &st).unwrap().data(), &[0.0]);
        // σ̄² = 2 at raw-mode time where σ² = σ₁² − 2.
        let raw = NoiseSchedule { normalized: false, ..st };
        let target = raw.sigma_one_sq() - 2.0;
        let t = (-raw.beta_min + (raw.beta_min.powi(2) + 2.0 * (raw.beta_max - raw.beta_min) * target).sqrt())
            / (raw.beta_max - raw.beta_min);
        let h = guidance_h(&sc(0.0), &sc(1.0), t, &raw).unwrap().data()[0];
        assert!((h - 0.5).abs() < 1e-9, "{h}");
        let zt = Tensor::new(vec![3], vec![-1.0, 0.5, 2.0]).unwrap();
        let zs = Tensor::new(vec![3], vec![0.0, 0.0, 0.0]).unwrap();
        let h = guidance_h(&zt, &zs, 0.5, &st).unwrap();
        for (hv, zv) in h.data().iter().zip(zt.data()) {
            assert!(hv * (0.0 - zv) > 0.0);
        }
        assert!(guidance_h(&sc(0.0), &sc(1.0), 1.0, &st).is_err());
    }

    #[test]
    fn recover_target_inverts_interpolation() {
        let st = s();
        for t in [0.01, 0.3, 0.5, 0.9, 0.9999] {
            let (tgt, src, eps) = (sc(0.7), sc(-0.2), sc(1.4));
            let z = interpolate(&tgt, &src, t, &eps, &st).unwrap();
            let v = velocity_target(&tgt, &eps, t, &st).unwrap();
            let back = recover_target(&z, &v, &src, t, &st).unwrap().data()[0];
            assert!((back - 0.7).abs() < 1e-9, "t={t} back={back}");
        }
        let k = st.coefficients_at(0.5).unwrap();
        let zero = recover_target(&sc(k.b * 3.0), &sc(0.0), &sc(3.0), 0.5, &st).unwrap();
        assert!(zero.data()[0].abs() < 1e-15);
        // ρ² = a in normalized mode, so the z_t weight is exactly one.
        let one = recover_target(&sc(1.0), &sc(0.0), &sc(0.0), 0.5, &st).unwrap().data()[0];
        assert!((one - 1.0).abs() < 1e-9);
        assert!(recover_target(&sc(1.0), &sc(0.0), &sc(0.0), 0.0, &st).is_err());
        assert!(recover_target(&sc(1.0), &sc(0.0), &sc(0.0), 1.0, &st).is_err());
    }

    #[test]
    fn simulation_is_deterministic_and_pinned() {
        let st = s();
        let tgt = Tensor::full(&[4000], 0.5);
        let a = simulate_forward_bridge(&tgt, &tgt, 100, 50, &st, 3).unwrap();
        let b = simulate_forward_bridge(&tgt, &tgt, 100, 50, &st, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().map(|s| s.t).collect::<Vec<_>>(), vec![0.0, 0.5, 1.0]);
        let end = &a.last().unwrap().z;
        let n = end.len() as f64;
        let mean = end.mean();
        let sd = (end.data().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((mean - 0.5).abs() <= 3.0 * sd / n.sqrt() + 1e-12, "{mean} {sd}");
        assert!(simulate_forward_bridge(&tgt, &tgt, 9, 1, &st, 0).is_err());
    }

    #[test]
    fn simulation_pin_error_shrinks_with_steps() {
        let st = s();
        let (tgt, src) = (Tensor::full(&[2000], -1.0), Tensor::full(&[2000], 1.0));
        let pin_err = |n| {
            let traj = simulate_forward_bridge(&tgt, &src, n, n, &st, 11).unwrap();
            let end = &traj.last().unwrap().z;
            end.data().iter().map(|z| (z - 1.0).powi(2)).sum::<f64>() / end.len() as f64
        };
        let (e1, e2) = (pin_err(100), pin_err(200));
        assert!(e2 < e1, "{e1} {e2}");
    }
}
