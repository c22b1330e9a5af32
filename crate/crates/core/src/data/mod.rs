//! Synthetic removal triplets: a drifting sinusoidal background with a moving
//! Gaussian blob composited on top.

pub mod io;
mod metrics;

pub use io::{
    read_manifest, read_tensor, read_triplet, write_manifest, write_tensor, write_triplet,
};
pub use metrics::{evaluate, EvalReport};

use std::f64::consts::TAU;

use rand::Rng;

use crate::rng::{self, Domain};
use crate::{Error, Result, Tensor};

/// `(source, target, mask)`, each `F×H×W`.
#[derive(Clone, Debug, PartialEq)]
pub struct RemovalTriplet<T = f32> {
    pub source: Tensor<T>,
    pub target: Tensor<T>,
    pub mask: Tensor<T>,
}

impl<T: crate::Real> RemovalTriplet<T> {
    pub fn cast<U: crate::Real>(&self) -> RemovalTriplet<U> {
        RemovalTriplet {
            source: self.source.cast(),
            target: self.target.cast(),
            mask: self.mask.cast(),
        }
    }

    pub fn dims(&self) -> &[usize] {
        self.source.dims()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Variant {
    #[default]
    Normal,
    /// Blob large enough that the mask covers at least half of every frame.
    Large,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenSpec {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub n_waves: usize,
    pub blob_amp: f64,
    /// Radius of the masked disc, in pixels (normal variant).
    pub radius_min: f64,
    pub radius_max: f64,
    /// Background translation per frame, in pixels.
    pub drift: f64,
    /// Upper bound on blob speed, in pixels per frame.
    pub speed: f64,
    pub variant: Variant,
    pub seed: u64,
}

impl Default for GenSpec {
    fn default() -> Self {
        Self {
            frames: 4,
            height: 16,
            width: 16,
            n_waves: 3,
            blob_amp: 1.5,
            radius_min: 1.5,
            radius_max: 4.0,
            drift: 0.5,
            speed: 1.0,
            variant: Variant::Normal,
            seed: 0,
        }
    }
}

/// Minimum mask coverage per frame in the large variant.
pub const LARGE_COVERAGE: f64 = 0.5;

/// Composite weight above which a pixel is masked. The background lies in
/// `[−1, 1]`, so outside the mask `|source − target| = w·|amp − bg| ≤ τ·(|amp| + 1)`;
/// choosing `τ = 0.1·|amp|/(|amp| + 1)` bounds that by `0.1·|amp|`.
pub fn mask_threshold(blob_amp: f64) -> f64 {
    let a = blob_amp.abs();
    if a == 0.0 {
        0.1
    } else {
        0.1 * a / (a + 1.0)
    }
}

impl GenSpec {
    /// Defaults for a `frames × height × width` clip, with blob radii scaled
    /// in proportion to the shorter side (the defaults are sized for 16).
    pub fn for_shape(frames: usize, height: usize, width: usize, variant: Variant, seed: u64) -> Self {
        let d = Self::default();
        let k = height.min(width) as f64 / 16.0;
        Self {
            frames,
            height,
            width,
            radius_min: d.radius_min * k,
            radius_max: d.radius_max * k,
            variant,
            seed,
            ..d
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::argument(m));
        if self.frames == 0 || self.height == 0 || self.width == 0 {
            return bad(format!(
                "extents must be positive, got {}x{}x{}",
                self.frames, self.height, self.width
            ));
        }
        if self.n_waves == 0 {
            return bad("need at least one background wave".into());
        }
        if !self.blob_amp.is_finite() || !self.drift.is_finite() || !self.speed.is_finite() {
            return bad("blob_amp, drift and speed must be finite".into());
        }
        if !(self.radius_min > 0.0 && self.radius_max >= self.radius_min) {
            return bad(format!(
                "radius range [{}, {}] is empty or non-positive",
                self.radius_min, self.radius_max
            ));
        }
        let half = self.height.min(self.width) as f64 / 2.0;
        if self.variant == Variant::Normal && self.radius_max >= half {
            return bad(format!(
                "radius_max {} must be below min(H, W)/2 = {half}",
                self.radius_max
            ));
        }
        Ok(())
    }
}

struct Blob {
    cx: f64,
    cy: f64,
    vx: f64,
    vy: f64,
    radius: f64,
}

/// Deterministic in `(spec.seed, index)`.
pub fn generate_triplet(spec: &GenSpec, index: u64) -> Result<RemovalTriplet<f32>> {
    spec.validate()?;
    let (f, h, w) = (spec.frames, spec.height, spec.width);
    let mut rng = rng::stream(spec.seed, Domain::Data, 0, index);

    let waves: Vec<[f64; 4]> = (0..spec.n_waves)
        .map(|_| {
            let dir = rng.random_range(0.0..TAU);
            let k = rng.random_range(0.25..0.9);
            [k * dir.cos(), k * dir.sin(), rng.random_range(0.0..TAU), rng.random_range(0.5..1.0)]
        })
        .collect();
    let drift_dir = rng.random_range(0.0..TAU);
    let (dx, dy) = (spec.drift * drift_dir.cos(), spec.drift * drift_dir.sin());

    let mut bg = Tensor::<f64>::from_fn(&[f, h, w], |i| {
        let (fi, y, x) = ((i / (h * w)) as f64, ((i / w) % h) as f64, (i % w) as f64);
        waves
            .iter()
            .map(|[kx, ky, ph, amp]| amp * (kx * (x - dx * fi) + ky * (y - dy * fi) + ph).sin())
            .sum()
    });
    let (lo, hi) = bg
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), &v| (l.min(v), u.max(v)));
    for v in bg.data_mut() {
        *v = if hi > lo { 2.0 * (*v - lo) / (hi - lo) - 1.0 } else { 0.0 };
    }

    let min_side = h.min(w) as f64;
    let heading = rng.random_range(0.0..TAU);
    let mut blob = match spec.variant {
        Variant::Normal => {
            let speed = rng.random_range(0.5..=1.0) * spec.speed;
            Blob {
                cx: rng.random_range(0.0..w as f64),
                cy: rng.random_range(0.0..h as f64),
                vx: speed * heading.cos(),
                vy: speed * heading.sin(),
                radius: rng.random_range(spec.radius_min..=spec.radius_max),
            }
        }
        Variant::Large => {
            let speed = rng.random_range(0.0..=0.5) * spec.speed;
            Blob {
                cx: (w as f64 - 1.0) / 2.0 + rng.random_range(-1.5..=1.5),
                cy: (h as f64 - 1.0) / 2.0 + rng.random_range(-1.5..=1.5),
                vx: speed * heading.cos(),
                vy: speed * heading.sin(),
                radius: rng.random_range(0.5..=0.6) * min_side,
            }
        }
    };

    let tau = mask_threshold(spec.blob_amp);
    loop {
        let triplet = composite(&bg, &blob, spec.blob_amp, tau, [f, h, w]);
        if spec.variant == Variant::Normal || min_coverage(&triplet.mask, f) >= LARGE_COVERAGE {
            return Ok(triplet);
        }
        blob.radius *= 1.05;
    }
}

fn composite(bg: &Tensor<f64>, blob: &Blob, amp: f64, tau: f64, [f, h, w]: [usize; 3]) -> RemovalTriplet<f32> {
    let sigma = blob.radius / (2.0 * (1.0 / tau).ln()).sqrt();
    let n = f * h * w;
    let (mut src, mut mask) = (vec![0f32; n], vec![0f32; n]);
    for (i, &b) in bg.data().iter().enumerate() {
        let (fi, y, x) = ((i / (h * w)) as f64, ((i / w) % h) as f64, (i % w) as f64);
        let ddx = x - (blob.cx + blob.vx * fi);
        let ddy = y - (blob.cy + blob.vy * fi);
        let wgt = (-(ddx * ddx + ddy * ddy) / (2.0 * sigma * sigma)).exp();
        // A zero-amplitude blob is absent rather than a black occluder.
        let opacity = if amp == 0.0 { 0.0 } else { wgt };
        src[i] = ((1.0 - opacity) * b + opacity * amp) as f32;
        mask[i] = if wgt > tau { 1.0 } else { 0.0 };
    }
    let dims = vec![f, h, w];
    RemovalTriplet {
        source: Tensor::new(dims.clone(), src).expect("sized above"),
        target: bg.cast(),
        mask: Tensor::new(dims, mask).expect("sized above"),
    }
}

fn min_coverage(mask: &Tensor<f32>, frames: usize) -> f64 {
    let per = mask.len() / frames;
    mask.data()
        .chunks(per)
        .map(|c| c.iter().map(|&m| m as f64).sum::<f64>() / per as f64)
        .fold(f64::INFINITY, f64::min)
}

/// Fraction of masked pixels in each frame.
pub fn mask_coverage(mask: &Tensor<f32>) -> Vec<f64> {
    let frames = mask.dims()[0];
    let per = mask.len() / frames;
    mask.data()
        .chunks(per)
        .map(|c| c.iter().map(|&m| m as f64).sum::<f64>() / per as f64)
        .collect()
}
