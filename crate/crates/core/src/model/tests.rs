use super::*;
use crate::model::checkpoint::{decode_checkpoint, encode_checkpoint};
use crate::rng::{normal_tensor, stream, Domain};

fn inputs<T: Real>(frames: usize, h: usize, w: usize, seed: u64) -> [Tensor<T>; 3] {
    let mut rng = stream(seed, Domain::Verify, 0, 0);
    let d = [frames, h, w];
    let z = normal_tensor(&mut rng, &d);
    let src = normal_tensor(&mut rng, &d);
    let mask = Tensor::from_fn(&d, |i| if (i * 7 + 3) % 5 < 2 { T::one() } else { T::zero() });
    [z, src, mask]
}

fn randomize_amm<T: Real>(p: &mut ModelParams<T>, seed: u64) {
    let mut rng = stream(seed, Domain::Verify, 1, 0);
    let amm = p.amm.as_mut().unwrap();
    for t in [&mut amm.gamma_w, &mut amm.gamma_b, &mut amm.beta_w, &mut amm.beta_b] {
        *t = normal_tensor::<T, _>(&mut rng, t.dims()).scale(T::of(0.3));
    }
}

fn batch(frames: usize, h: usize, w: usize, n: usize) -> Vec<Example<f64>> {
    (0..n)
        .map(|j| {
            let [z_t, z_src, mask] = inputs(frames, h, w, 10 + j as u64);
            let mut rng = stream(99, Domain::Verify, 2, j as u64);
            Example {
                z_t,
                t: 0.15 + 0.6 * j as f64,
                z_src,
                mask,
                target: normal_tensor(&mut rng, &[frames, h, w]),
            }
        })
        .collect()
}

#[test]
fn time_embedding_values() {
    let e = time_embedding(0.0, 16).unwrap();
    assert!(e[..8].iter().all(|&v| v == 0.0));
    assert!(e[8..].iter().all(|&v| v == 1.0));
    for t in [0.0, 0.3, 0.9999] {
        let e = time_embedding(t, 16).unwrap();
        let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 8f64.sqrt()).abs() < 1e-12);
    }
    assert_ne!(time_embedding(0.2, 16).unwrap(), time_embedding(0.3, 16).unwrap());
    assert!((time_embedding(0.5, 16).unwrap()[0] - 0.5f64.sin()).abs() < 1e-15);
    assert!(time_embedding(0.5, 15).is_err());
    assert!(time_embedding(0.5, 0).is_err());
}

#[test]
fn output_shape_and_param_count() {
    let p = ModelParams::<f32>::init(4, true, 0).unwrap();
    let [z, s, m] = inputs::<f32>(4, 16, 16, 0);
    assert_eq!(p.forward(&z, 0.5, &s, &m).unwrap().dims(), &[4, 16, 16]);
    let without = ModelParams::<f32>::init(4, false, 0).unwrap();
    assert_eq!(without.num_params(), 12 * 32 * 9 + 32 + 16 * 32 + 32 + 32 * 32 * 9 + 32 + 32 * 4 * 9 + 4);
    assert_eq!(p.num_params() - without.num_params(), 4 * 8 * 9 + 8 + 2 * (8 * 32 + 32));
    assert!(p.num_params() < 20_000);
}

#[test]
fn amm_is_identity_at_init() {
    let with = ModelParams::<f64>::init(2, true, 4).unwrap();
    let without = ModelParams::<f64>::init(2, false, 4).unwrap();
    let [z, s, m] = inputs::<f64>(2, 8, 8, 1);
    let ones = Tensor::full(&[2, 8, 8], 1.0);
    let a = with.forward(&z, 0.4, &s, &m).unwrap();
    let b = with.forward(&z, 0.4, &s, &ones).unwrap();
    assert_eq!(a, without.forward(&z, 0.4, &s, &m).unwrap());
    assert_eq!(b, without.forward(&z, 0.4, &s, &ones).unwrap());
}

#[test]
fn modulation_changes_output_once_trained() {
    let plain = ModelParams::<f64>::init(2, true, 4).unwrap();
    let mut p = plain.clone();
    randomize_amm(&mut p, 5);
    let [z, s, m] = inputs::<f64>(2, 8, 8, 1);
    let a = plain.forward(&z, 0.4, &s, &m).unwrap();
    let b = p.forward(&z, 0.4, &s, &m).unwrap();
    assert!(a.max_abs_diff(&b).unwrap() > 1e-6);
}

#[test]
fn gamma_minus_one_passes_only_beta() {
    // With γ ≡ −1 the modulated features equal β, so the output cannot depend on z_t.
    let mut p = ModelParams::<f64>::init(2, true, 4).unwrap();
    randomize_amm(&mut p, 5);
    let amm = p.amm.as_mut().unwrap();
    amm.gamma_w.data_mut().fill(0.0);
    amm.gamma_b.data_mut().fill(-1.0);
    let [z, s, m] = inputs::<f64>(2, 8, 8, 1);
    let [z2, _, _] = inputs::<f64>(2, 8, 8, 2);
    let a = p.forward(&z, 0.4, &s, &m).unwrap();
    let b = p.forward(&z2, 0.9, &z2, &m).unwrap();
    assert!(a.max_abs_diff(&b).unwrap() < 1e-12);
}

#[test]
fn zero_params_give_zero_output() {
    let p = ModelParams::<f64>::init(2, true, 0).unwrap().zeros_like();
    let [z, s, m] = inputs::<f64>(2, 8, 8, 1);
    assert!(p.forward(&z, 0.4, &s, &m).unwrap().data().iter().all(|&v| v == 0.0));
}

#[test]
fn rejects_bad_inputs() {
    let p = ModelParams::<f64>::init(2, true, 0).unwrap();
    let [z, s, m] = inputs::<f64>(2, 8, 8, 1);
    let [z3, _, _] = inputs::<f64>(3, 8, 8, 1);
    assert!(matches!(p.forward(&z3, 0.4, &z3, &z3), Err(Error::Shape { .. })));
    let [z_small, _, _] = inputs::<f64>(2, 8, 4, 1);
    assert!(p.forward(&z_small, 0.4, &s, &m).is_err());
    let mut bad = p.clone();
    bad.conv2_w.data_mut()[3] = f64::NAN;
    assert!(matches!(bad.forward(&z, 0.4, &s, &m), Err(Error::NonFinite { .. })));
    assert!(ModelParams::<f64>::init(0, true, 0).is_err());
}

#[test]
fn init_is_seeded() {
    let a = ModelParams::<f32>::init(4, true, 11).unwrap();
    assert_eq!(a, ModelParams::init(4, true, 11).unwrap());
    assert_ne!(a, ModelParams::init(4, true, 12).unwrap());
    let w = a.conv2_w.data();
    let var = w.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / w.len() as f64;
    assert!((var * 288.0 - 1.0).abs() < 0.1, "{var}");
}

#[test]
fn golden_forward_checksum() {
    let p = ModelParams::<f64>::init(4, true, 0).unwrap();
    let [z, s, m] = inputs::<f64>(4, 16, 16, 0);
    let out = p.forward(&z, 0.5, &s, &m).unwrap();
    let sum: f64 = out.data().iter().sum();
    let sq: f64 = out.data().iter().map(|v| v * v).sum();
    assert!((sum - GOLDEN_SUM).abs() < 1e-9 * GOLDEN_SQ.sqrt(), "{sum}");
    assert!((sq - GOLDEN_SQ).abs() < 1e-9 * GOLDEN_SQ, "{sq}");
}

const GOLDEN_SUM: f64 = -53.011_601_433_213_1;
const GOLDEN_SQ: f64 = 3.224285606612865e2;

#[test]
fn perfect_prediction_has_zero_loss_and_gradient() {
    let p = ModelParams::<f64>::init(2, true, 0).unwrap().zeros_like();
    let mut b = batch(2, 4, 4, 2);
    for ex in &mut b {
        ex.target = Tensor::zeros(ex.z_t.dims());
    }
    let (l, g) = backward(&p, &b, 1.0).unwrap();
    assert_eq!(l, 0.0);
    assert!(g.tensors().iter().all(|(_, t)| t.data().iter().all(|&v| v == 0.0)));
}

#[test]
fn loss_matches_backward_and_scales_linearly() {
    let p = ModelParams::<f64>::init(2, true, 3).unwrap();
    let b = batch(2, 4, 4, 2);
    let (l1, g1) = backward(&p, &b, 1.0).unwrap();
    let (l2, g2) = backward(&p, &b, 2.0).unwrap();
    assert_eq!(l1, loss(&p, &b, 1.0).unwrap());
    assert!((l2 - 2.0 * l1).abs() < 1e-12 * l1);
    for ((_, a), (_, b)) in g1.tensors().into_iter().zip(g2.tensors()) {
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((2.0 * x - y).abs() <= 1e-12 * x.abs().max(1e-300));
        }
    }
    assert!(loss(&p, &[], 1.0).is_err());
}

#[test]
fn gradients_match_finite_differences() {
    let mut p = ModelParams::<f64>::init(2, true, 3).unwrap();
    randomize_amm(&mut p, 8);
    let b = batch(2, 8, 8, 2);
    let r = gradient_check(&p, &b, 1e-4).unwrap();
    assert_eq!(r.per_tensor.len(), 14);
    assert!(r.max_rel_err < 1e-4, "{:?}", r.per_tensor);

    let plain = ModelParams::<f64>::init(2, false, 3).unwrap();
    let r = gradient_check(&plain, &batch(2, 4, 4, 1), 1e-4).unwrap();
    assert_eq!(r.per_tensor.len(), 8);
    assert!(r.max_rel_err < 1e-4, "{:?}", r.per_tensor);
}

#[test]
fn checkpoint_round_trip() {
    for amm in [true, false] {
        let mut p = ModelParams::<f32>::init(3, amm, 1).unwrap();
        if amm {
            randomize_amm(&mut p, 2);
        }
        let bytes = encode_checkpoint(&p);
        assert_eq!(&bytes[..4], b"BRW1");
        assert_eq!(decode_checkpoint(&bytes).unwrap(), p);
    }
    let p = ModelParams::<f32>::init(3, true, 1).unwrap();
    let mut bytes = encode_checkpoint(&p);
    assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
    bytes[0] = b'X';
    assert!(matches!(decode_checkpoint(&bytes), Err(Error::Format(_))));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.brw");
    write_checkpoint(&path, &p).unwrap();
    assert_eq!(read_checkpoint(&path).unwrap(), p);
}

#[test]
fn from_named_validates() {
    let p = ModelParams::<f32>::init(2, true, 1).unwrap();
    let named: Vec<(String, Tensor<f32>)> =
        p.tensors().into_iter().map(|(n, t)| (n.to_string(), t.clone())).collect();
    assert_eq!(ModelParams::from_named(named.clone()).unwrap(), p);
    let mut swapped = named.clone();
    swapped.swap(0, 1);
    assert!(ModelParams::from_named(swapped).is_err());
    assert!(ModelParams::from_named(named[..10].to_vec()).is_err());
    assert!(ModelParams::<f32>::from_named(Vec::new()).is_err());
}
