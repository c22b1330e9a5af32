//! Counter-keyed random streams.
//!
//! Every draw in the crate comes from a ChaCha8 stream whose key is built from
//! `(seed, domain, counter, index)`, so any sample can be regenerated without
//! replaying the ones before it.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{Real, Tensor};

/// Domain tags that keep independent consumers on disjoint streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Data = 1,
    Init = 2,
    Train = 3,
    Sampler = 4,
    Simulation = 5,
    Verify = 6,
}

pub fn stream(seed: u64, domain: Domain, counter: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(domain as u64).to_le_bytes());
    key[16..24].copy_from_slice(&counter.to_le_bytes());
    key[24..].copy_from_slice(&index.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

pub fn fill_normal<T: Real, R: Rng>(rng: &mut R, out: &mut [T]) {
    for v in out {
        let x: f64 = rng.sample(StandardNormal);
        *v = T::of(x);
    }
}

pub fn normal_tensor<T: Real, R: Rng>(rng: &mut R, dims: &[usize]) -> Tensor<T> {
    let mut t = Tensor::zeros(dims);
    fill_normal(rng, t.data_mut());
    t
}
