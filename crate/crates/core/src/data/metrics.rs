use super::RemovalTriplet;
use crate::{Error, Result, Tensor};

/// Data range of the synthetic frames (`[−1, 1]`).
pub const PSNR_PEAK: f64 = 2.0;

/// Removal metrics; a field is `None` when the pixel set it averages over is empty.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalReport {
    pub unmasked_mse: Option<f64>,
    /// In dB; `+∞` for a perfect match.
    pub unmasked_psnr: Option<f64>,
    pub masked_mse: Option<f64>,
    /// `1 − masked_mse(output, target) / masked_mse(source, target)`.
    pub removal_ratio: Option<f64>,
    /// Mean `|Δ_f output − Δ_f target|` over pixels unmasked in both frames.
    pub temporal_consistency: Option<f64>,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str =
        "unmasked_mse,unmasked_psnr,masked_mse,removal_ratio,temporal_consistency";

    pub fn csv_row(&self) -> String {
        [
            self.unmasked_mse,
            self.unmasked_psnr,
            self.masked_mse,
            self.removal_ratio,
            self.temporal_consistency,
        ]
        .iter()
        .map(|v| v.map(|x| format!("{x}")).unwrap_or_default())
        .collect::<Vec<_>>()
        .join(",")
    }
}

pub fn psnr(mse: f64) -> f64 {
    10.0 * (PSNR_PEAK * PSNR_PEAK / mse).log10()
}

fn masked_mean(a: &[f32], b: &[f32], mask: &[f32], want: f32) -> Option<f64> {
    let (mut acc, mut n) = (0.0f64, 0usize);
    for ((&x, &y), &m) in a.iter().zip(b).zip(mask) {
        if m == want {
            let d = (x - y) as f64;
            acc += d * d;
            n += 1;
        }
    }
    (n > 0).then(|| acc / n as f64)
}

pub fn evaluate(output: &Tensor<f32>, triplet: &RemovalTriplet<f32>) -> Result<EvalReport> {
    output.ensure_same_shape(&triplet.target)?;
    output.ensure_same_shape(&triplet.source)?;
    output.ensure_same_shape(&triplet.mask)?;
    let dims = output.dims();
    if dims.len() != 3 {
        return Err(Error::argument(format!("expected F×H×W, got {dims:?}")));
    }
    let (out, tgt, src, mask) = (
        output.data(),
        triplet.target.data(),
        triplet.source.data(),
        triplet.mask.data(),
    );
    let unmasked_mse = masked_mean(out, tgt, mask, 0.0);
    let masked_mse = masked_mean(out, tgt, mask, 1.0);
    let removal_ratio = match (masked_mse, masked_mean(src, tgt, mask, 1.0)) {
        (Some(m), Some(base)) if base > 0.0 => Some(1.0 - m / base),
        _ => None,
    };

    let per = dims[1] * dims[2];
    let (mut acc, mut n) = (0.0f64, 0usize);
    for f in 1..dims[0] {
        for p in 0..per {
            let (i, j) = (f * per + p, (f - 1) * per + p);
            if mask[i] == 0.0 && mask[j] == 0.0 {
                acc += (((out[i] - out[j]) - (tgt[i] - tgt[j])) as f64).abs();
                n += 1;
            }
        }
    }

    Ok(EvalReport {
        unmasked_mse,
        unmasked_psnr: unmasked_mse.map(psnr),
        masked_mse,
        removal_ratio,
        temporal_consistency: (n > 0).then(|| acc / n as f64),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_triplet, GenSpec};
    use proptest::prelude::*;

    fn triplet() -> RemovalTriplet<f32> {
        generate_triplet(&GenSpec::default(), 5).unwrap()
    }

    #[test]
    fn perfect_and_null_removal() {
        let tr = triplet();
        let r = evaluate(&tr.target, &tr).unwrap();
        assert_eq!(r.unmasked_mse, Some(0.0));
        assert_eq!(r.unmasked_psnr, Some(f64::INFINITY));
        assert_eq!(r.removal_ratio, Some(1.0));
        assert_eq!(r.temporal_consistency, Some(0.0));
        let r = evaluate(&tr.source, &tr).unwrap();
        assert_eq!(r.removal_ratio, Some(0.0));
    }

    #[test]
    fn psnr_arithmetic() {
        assert!((psnr(0.01) - 26.020_599_913_279_625).abs() < 1e-12);
    }

    #[test]
    fn full_mask_reports_absent_unmasked_metrics() {
        let mut tr = triplet();
        tr.mask = Tensor::full(tr.mask.dims(), 1.0);
        let r = evaluate(&tr.source, &tr).unwrap();
        assert_eq!(r.unmasked_mse, None);
        assert_eq!(r.unmasked_psnr, None);
        assert_eq!(r.temporal_consistency, None);
        assert!(r.masked_mse.is_some());
        assert!(r.csv_row().starts_with(",,"));
    }

    proptest! {
        #[test]
        fn region_invariance(noise in prop::collection::vec(-3.0f32..3.0, 1024)) {
            let tr = triplet();
            let base = tr.target.map(|v| v * 0.5);
            let r0 = evaluate(&base, &tr).unwrap();
            let perturb = |want: f32| {
                let mut o = base.clone();
                for ((v, &m), &e) in o.data_mut().iter_mut().zip(tr.mask.data()).zip(&noise) {
                    if m == want { *v += e; }
                }
                evaluate(&o, &tr).unwrap()
            };
            let outside = perturb(0.0);
            prop_assert_eq!(outside.removal_ratio, r0.removal_ratio);
            prop_assert_eq!(outside.masked_mse, r0.masked_mse);
            let inside = perturb(1.0);
            prop_assert_eq!(inside.unmasked_mse, r0.unmasked_mse);
            prop_assert_eq!(inside.unmasked_psnr, r0.unmasked_psnr);
            prop_assert!(inside.removal_ratio.unwrap() <= 1.0);
        }
    }
}
