use super::*;
use crate::data::{generate_triplet, GenSpec};

fn tiny_spec() -> GenSpec {
    GenSpec {
        frames: 2,
        height: 8,
        width: 8,
        radius_max: 2.5,
        ..GenSpec::default()
    }
}

fn dataset(n: usize) -> Vec<RemovalTriplet<f32>> {
    (0..n).map(|i| generate_triplet(&tiny_spec(), i as u64).unwrap()).collect()
}

fn quick(steps: usize) -> TrainConfig {
    TrainConfig {
        total_steps: steps,
        batch_size: 4,
        ..TrainConfig::default()
    }
}

#[test]
fn bridge_loss_of_zero_network_is_target_energy() {
    let s = NoiseSchedule::default();
    let tr = generate_triplet(&tiny_spec(), 0).unwrap().cast::<f64>();
    let eps = Tensor::full(tr.dims(), 1.0);
    let zero = ModelParams::<f64>::init(2, true, 0).unwrap().zeros_like();
    let u = bridge::velocity_target(&tr.target, &eps, 0.5, &s).unwrap();
    let l = bridge_loss(&zero, &tr, 0.5, &eps, &s).unwrap();
    assert!((l - u.mse(&Tensor::zeros(tr.dims())).unwrap()).abs() < 1e-12);
    assert!(bridge_loss(&zero, &tr, 1.5, &eps, &s).is_err());
}

#[test]
fn adamw_first_step_moves_by_lr() {
    let mut p = ModelParams::<f64>::init(2, false, 0).unwrap();
    let mut g = p.zeros_like();
    g.conv1_b.data_mut()[0] = 3.0;
    g.conv1_b.data_mut()[1] = -1e-3;
    let before = p.clone();
    let cfg = TrainConfig { weight_decay: 0.0, ..TrainConfig::default() };
    let mut o = OptimState::new(&p);
    adamw_step(&mut p, &g, &mut o, &cfg);
    assert_eq!(o.step, 1);
    assert!((p.conv1_b.data()[0] + 1e-3).abs() < 1e-9);
    assert!((p.conv1_b.data()[1] - 1e-3).abs() < 1e-6);
    assert_eq!(p.conv2_w, before.conv2_w);
}

#[test]
fn adamw_decay_is_decoupled() {
    let mut p = ModelParams::<f64>::init(2, false, 0).unwrap();
    let g = p.zeros_like();
    let before = p.clone();
    let cfg = TrainConfig { lr: 0.1, weight_decay: 0.5, ..TrainConfig::default() };
    let mut o = OptimState::new(&p);
    adamw_step(&mut p, &g, &mut o, &cfg);
    for ((_, a), (_, b)) in p.tensors().into_iter().zip(before.tensors()) {
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - 0.95 * y).abs() < 1e-15);
        }
    }
}

#[test]
fn small_step_reduces_loss_on_fixed_batch() {
    let s = NoiseSchedule::default();
    let data = dataset(2);
    let cfg = TrainConfig { lr: 1e-5, ..quick(1) };
    let batch: Vec<_> = (0..4).map(|j| draw_example(&data, &cfg, &s, 0, j).unwrap()).collect();
    let mut p = ModelParams::<f32>::init(2, true, 0).unwrap();
    let (l0, g) = model::backward(&p, &batch, 1.0).unwrap();
    let mut o = OptimState::new(&p);
    adamw_step(&mut p, &g, &mut o, &cfg);
    assert!(model::loss(&p, &batch, 1.0).unwrap() < l0);
}

#[test]
fn training_is_reproducible_and_learns() {
    let s = NoiseSchedule::default();
    let data = dataset(4);
    let cfg = quick(60);
    let a = train(&data, &cfg, &s).unwrap();
    let b = train(&data, &cfg, &s).unwrap();
    assert_eq!(a.curve.len(), 60);
    assert_eq!(a.params, b.params);
    let bits = |c: &[(usize, f64)]| c.iter().map(|x| x.1.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.curve), bits(&b.curve));
    let head: f64 = a.curve[..10].iter().map(|x| x.1).sum();
    let tail: f64 = a.curve[50..].iter().map(|x| x.1).sum();
    assert!(tail < head, "{head} -> {tail}");
    assert!(a.curve_csv().starts_with("step,loss\n0,"));
}

#[test]
fn diffusion_objective_trains() {
    let s = NoiseSchedule::default();
    let data = dataset(2);
    let cfg = TrainConfig { loss_kind: LossKind::DiffusionNoise, log_every: 5, ..quick(20) };
    let out = train(&data, &cfg, &s).unwrap();
    assert_eq!(out.curve.len(), 4);
    assert!(out.params.is_finite());
}

#[test]
fn divergence_is_reported() {
    let s = NoiseSchedule::default();
    let data = dataset(2);
    let cfg = TrainConfig { lr: 1e12, ..quick(20) };
    match train(&data, &cfg, &s) {
        Err(Error::Diverged { step, .. }) => assert!(step >= 1),
        other => panic!("expected divergence, got {:?}", other.map(|o| o.curve)),
    }
}

#[test]
fn rejects_bad_config() {
    let s = NoiseSchedule::default();
    let data = dataset(1);
    assert!(train(&data, &TrainConfig { batch_size: 0, ..quick(1) }, &s).is_err());
    assert!(train(&data, &TrainConfig { t_clamp_hi: 1.0, ..quick(1) }, &s).is_err());
    assert!(train::<f32>(&[], &quick(1), &s).is_err());
}
