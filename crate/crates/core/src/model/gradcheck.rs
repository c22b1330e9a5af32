//! Central finite-difference check of the hand-written gradients.

use super::{backward, loss, Example, ModelParams};
use crate::Result;

/// Smallest magnitude used as the denominator of a relative error, so that
/// gradients that vanish analytically are compared in absolute terms.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// `(tensor name, entries checked, max relative error)`.
    pub per_tensor: Vec<(&'static str, usize, f64)>,
    pub max_rel_err: f64,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compare every parameter entry's analytic gradient with
/// `(L(θ + h) − L(θ − h)) / 2h`.
pub fn gradient_check(
    params: &ModelParams<f64>,
    batch: &[Example<f64>],
    step: f64,
) -> Result<GradCheckReport> {
    let (_, grads) = backward(params, batch, 1.0)?;
    let analytic: Vec<(&'static str, Vec<f64>)> = grads
        .tensors()
        .into_iter()
        .map(|(n, t)| (n, t.data().to_vec()))
        .collect();
    let mut probe = params.clone();
    let mut per_tensor = Vec::with_capacity(analytic.len());
    let mut max_rel_err = 0.0f64;
    for (ti, (name, g)) in analytic.iter().enumerate() {
        let mut worst = 0.0f64;
        for (j, &ga) in g.iter().enumerate() {
            let orig = params.tensors()[ti].1.data()[j];
            set(&mut probe, ti, j, orig + step);
            let up = loss(&probe, batch, 1.0)?;
            set(&mut probe, ti, j, orig - step);
            let down = loss(&probe, batch, 1.0)?;
            set(&mut probe, ti, j, orig);
            worst = worst.max(relative_error(ga, (up - down) / (2.0 * step)));
        }
        max_rel_err = max_rel_err.max(worst);
        per_tensor.push((*name, g.len(), worst));
    }
    Ok(GradCheckReport {
        per_tensor,
        max_rel_err,
    })
}

fn set(p: &mut ModelParams<f64>, tensor: usize, index: usize, value: f64) {
    p.tensors_mut()[tensor].1.data_mut()[index] = value;
}
