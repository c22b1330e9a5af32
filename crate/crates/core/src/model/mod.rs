//! Toy velocity network `v_θ(z_t, t, y)` with adaptive mask modulation.
//!
//! Frames are folded into channels. The pipeline is
//!
//! ```text
//! x  = concat(z_t, z_src, mask)                 3F channels
//! h  = conv1(x) + time_mlp(emb(t))              32 channels, 3×3
//! h' = h ⊙ (1 + γ) + β,  (γ, β) = f(φ(mask))     φ: 3×3 F→8, f_γ, f_β: 1×1 8→32
//! v  = conv_out(tanh(conv2(tanh(h'))))          F channels
//! ```
//!
//! `f_γ` and `f_β` start at zero so the modulation is the identity at
//! initialization.

mod checkpoint;
mod gradcheck;
mod layers;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint};
pub use gradcheck::{gradient_check, GradCheckReport};

use layers::{conv3x3_backward, conv3x3_forward, pointwise_backward, pointwise_forward, Plane};

use crate::rng::{self, Domain};
use crate::sampler::Network;
use crate::{Error, Real, Result, Tensor};

pub const HIDDEN: usize = 32;
pub const TIME_DIM: usize = 16;
pub const MASK_DIM: usize = 8;

/// Mask branch: `φ_M` followed by the `f_γ`/`f_β` projections.
#[derive(Clone, Debug, PartialEq)]
pub struct AmmParams<T> {
    pub embed_w: Tensor<T>,
    pub embed_b: Tensor<T>,
    pub gamma_w: Tensor<T>,
    pub gamma_b: Tensor<T>,
    pub beta_w: Tensor<T>,
    pub beta_b: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T = f32> {
    frames: usize,
    pub conv1_w: Tensor<T>,
    pub conv1_b: Tensor<T>,
    pub time_w: Tensor<T>,
    pub time_b: Tensor<T>,
    pub conv2_w: Tensor<T>,
    pub conv2_b: Tensor<T>,
    pub out_w: Tensor<T>,
    pub out_b: Tensor<T>,
    pub amm: Option<AmmParams<T>>,
}

/// Gradients share the parameter layout.
pub type Gradients<T = f32> = ModelParams<T>;

/// Parameter names in checkpoint order.
pub const PARAM_NAMES: [&str; 14] = [
    "conv1.weight",
    "conv1.bias",
    "time.weight",
    "time.bias",
    "conv2.weight",
    "conv2.bias",
    "out.weight",
    "out.bias",
    "amm.embed.weight",
    "amm.embed.bias",
    "amm.gamma.weight",
    "amm.gamma.bias",
    "amm.beta.weight",
    "amm.beta.bias",
];

fn param_dims(frames: usize) -> [Vec<usize>; 14] {
    let f = frames;
    [
        vec![HIDDEN, 3 * f, 3, 3],
        vec![HIDDEN],
        vec![HIDDEN, TIME_DIM],
        vec![HIDDEN],
        vec![HIDDEN, HIDDEN, 3, 3],
        vec![HIDDEN],
        vec![f, HIDDEN, 3, 3],
        vec![f],
        vec![MASK_DIM, f, 3, 3],
        vec![MASK_DIM],
        vec![HIDDEN, MASK_DIM],
        vec![HIDDEN],
        vec![HIDDEN, MASK_DIM],
        vec![HIDDEN],
    ]
}

/// Sinusoidal features `[sin(ω_k t)…, cos(ω_k t)…]`, `ω_k` geometric from 1 to 10⁴.
pub fn time_embedding(t: f64, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || dim % 2 == 1 {
        return Err(Error::argument(format!(
            "time embedding dim must be even and positive, got {dim}"
        )));
    }
    let half = dim / 2;
    let freq = |k: usize| {
        if half == 1 {
            1.0
        } else {
            10f64.powf(4.0 * k as f64 / (half - 1) as f64)
        }
    };
    let mut out = Vec::with_capacity(dim);
    out.extend((0..half).map(|k| (freq(k) * t).sin()));
    out.extend((0..half).map(|k| (freq(k) * t).cos()));
    Ok(out)
}

impl<T: Real> ModelParams<T> {
    /// Seeded initialization: weights `N(0, 1/fan_in)`, biases zero, `f_γ`/`f_β` zero.
    pub fn init(frames: usize, amm_enabled: bool, seed: u64) -> Result<Self> {
        if frames == 0 {
            return Err(Error::argument("model needs at least one frame"));
        }
        let dims = param_dims(frames);
        let mut rng = rng::stream(seed, Domain::Init, 0, 0);
        let mut weight = |d: &[usize]| {
            let fan_in: usize = d[1..].iter().product();
            rng::normal_tensor::<T, _>(&mut rng, d).scale(T::of(1.0 / (fan_in as f64).sqrt()))
        };
        let mut p = Self {
            frames,
            conv1_w: weight(&dims[0]),
            conv1_b: Tensor::zeros(&dims[1]),
            time_w: weight(&dims[2]),
            time_b: Tensor::zeros(&dims[3]),
            conv2_w: weight(&dims[4]),
            conv2_b: Tensor::zeros(&dims[5]),
            out_w: weight(&dims[6]),
            out_b: Tensor::zeros(&dims[7]),
            amm: None,
        };
        if amm_enabled {
            p.amm = Some(AmmParams {
                embed_w: weight(&dims[8]),
                embed_b: Tensor::zeros(&dims[9]),
                gamma_w: Tensor::zeros(&dims[10]),
                gamma_b: Tensor::zeros(&dims[11]),
                beta_w: Tensor::zeros(&dims[12]),
                beta_b: Tensor::zeros(&dims[13]),
            });
        }
        Ok(p)
    }

    /// All-zero tensors of this layout (also the empty gradient accumulator).
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.data_mut().fill(T::zero());
        }
        z
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn amm_enabled(&self) -> bool {
        self.amm.is_some()
    }

    pub fn tensors(&self) -> Vec<(&'static str, &Tensor<T>)> {
        let mut v = vec![
            (PARAM_NAMES[0], &self.conv1_w),
            (PARAM_NAMES[1], &self.conv1_b),
            (PARAM_NAMES[2], &self.time_w),
            (PARAM_NAMES[3], &self.time_b),
            (PARAM_NAMES[4], &self.conv2_w),
            (PARAM_NAMES[5], &self.conv2_b),
            (PARAM_NAMES[6], &self.out_w),
            (PARAM_NAMES[7], &self.out_b),
        ];
        if let Some(a) = &self.amm {
            v.extend([
                (PARAM_NAMES[8], &a.embed_w),
                (PARAM_NAMES[9], &a.embed_b),
                (PARAM_NAMES[10], &a.gamma_w),
                (PARAM_NAMES[11], &a.gamma_b),
                (PARAM_NAMES[12], &a.beta_w),
                (PARAM_NAMES[13], &a.beta_b),
            ]);
        }
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        let mut v = vec![
            (PARAM_NAMES[0], &mut self.conv1_w),
            (PARAM_NAMES[1], &mut self.conv1_b),
            (PARAM_NAMES[2], &mut self.time_w),
            (PARAM_NAMES[3], &mut self.time_b),
            (PARAM_NAMES[4], &mut self.conv2_w),
            (PARAM_NAMES[5], &mut self.conv2_b),
            (PARAM_NAMES[6], &mut self.out_w),
            (PARAM_NAMES[7], &mut self.out_b),
        ];
        if let Some(a) = &mut self.amm {
            v.extend([
                (PARAM_NAMES[8], &mut a.embed_w),
                (PARAM_NAMES[9], &mut a.embed_b),
                (PARAM_NAMES[10], &mut a.gamma_w),
                (PARAM_NAMES[11], &mut a.gamma_b),
                (PARAM_NAMES[12], &mut a.beta_w),
                (PARAM_NAMES[13], &mut a.beta_b),
            ]);
        }
        v
    }

    /// Rebuild from named tensors in checkpoint order. The AMM block is either
    /// fully present or fully absent.
    pub fn from_named(named: Vec<(String, Tensor<T>)>) -> Result<Self> {
        if named.len() != 8 && named.len() != 14 {
            return Err(Error::Format(format!(
                "expected 8 or 14 parameter tensors, found {}",
                named.len()
            )));
        }
        for (i, (name, _)) in named.iter().enumerate() {
            if name != PARAM_NAMES[i] {
                return Err(Error::Format(format!(
                    "tensor {i} is named {name:?}, expected {:?}",
                    PARAM_NAMES[i]
                )));
            }
        }
        let frames = named[7].1.dims()[0];
        let dims = param_dims(frames);
        for (i, (name, t)) in named.iter().enumerate() {
            if t.dims() != dims[i].as_slice() {
                return Err(Error::Format(format!(
                    "{name} has dims {:?}, expected {:?} for {frames} frames",
                    t.dims(),
                    dims[i]
                )));
            }
        }
        let mut it = named.into_iter().map(|(_, t)| t);
        let mut next = || it.next().expect("length checked above");
        let mut p = Self {
            frames,
            conv1_w: next(),
            conv1_b: next(),
            time_w: next(),
            time_b: next(),
            conv2_w: next(),
            conv2_b: next(),
            out_w: next(),
            out_b: next(),
            amm: None,
        };
        if let Some(embed_w) = it.next() {
            let rest = it.by_ref();
            let mut next = || rest.next().expect("length checked above");
            p.amm = Some(AmmParams {
                embed_w,
                embed_b: next(),
                gamma_w: next(),
                gamma_b: next(),
                beta_w: next(),
                beta_b: next(),
            });
        }
        Ok(p)
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.is_finite())
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        let named = self
            .tensors()
            .into_iter()
            .map(|(n, t)| (n.to_string(), t.cast()))
            .collect();
        ModelParams::from_named(named).expect("layout preserved by cast")
    }

    /// Forward pass; output has the shape of `z_t`.
    pub fn forward(
        &self,
        z_t: &Tensor<T>,
        t: f64,
        z_src: &Tensor<T>,
        mask: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        let cache = self.forward_cached(z_t, t, z_src, mask)?;
        Tensor::new(z_t.dims().to_vec(), cache.out)
    }

    fn check_inputs(&self, z_t: &Tensor<T>, z_src: &Tensor<T>, mask: &Tensor<T>) -> Result<Plane> {
        let d = z_t.dims();
        if d.len() != 3 || d[0] != self.frames {
            return Err(Error::Shape {
                expected: vec![self.frames, d.get(1).copied().unwrap_or(0), d.get(2).copied().unwrap_or(0)],
                actual: d.to_vec(),
            });
        }
        z_t.ensure_same_shape(z_src)?;
        z_t.ensure_same_shape(mask)?;
        if !self.is_finite() {
            return Err(Error::NonFinite {
                what: "model parameter",
                step: 0,
            });
        }
        Ok(Plane { h: d[1], w: d[2] })
    }

    fn forward_cached(
        &self,
        z_t: &Tensor<T>,
        t: f64,
        z_src: &Tensor<T>,
        mask: &Tensor<T>,
    ) -> Result<Cache<T>> {
        let plane = self.check_inputs(z_t, z_src, mask)?;
        let (f, hw) = (self.frames, plane.area());

        let mut x = Vec::with_capacity(3 * f * hw);
        x.extend_from_slice(z_t.data());
        x.extend_from_slice(z_src.data());
        x.extend_from_slice(mask.data());

        let emb: Vec<T> = time_embedding(t, TIME_DIM)?.into_iter().map(T::of).collect();
        let mut time_bias = vec![T::zero(); HIDDEN];
        pointwise_forward(&emb, TIME_DIM, self.time_w.data(), self.time_b.data(), HIDDEN, 1, &mut time_bias);

        let mut pre1 = vec![T::zero(); HIDDEN * hw];
        conv3x3_forward(&x, 3 * f, self.conv1_w.data(), self.conv1_b.data(), HIDDEN, plane, &mut pre1);
        for (c, chunk) in pre1.chunks_mut(hw).enumerate() {
            for v in chunk {
                *v += time_bias[c];
            }
        }

        let mut a1 = pre1.clone();
        let amm = if let Some(p) = &self.amm {
            let mut embed = vec![T::zero(); MASK_DIM * hw];
            conv3x3_forward(mask.data(), f, p.embed_w.data(), p.embed_b.data(), MASK_DIM, plane, &mut embed);
            let mut gamma = vec![T::zero(); HIDDEN * hw];
            let mut beta = vec![T::zero(); HIDDEN * hw];
            pointwise_forward(&embed, MASK_DIM, p.gamma_w.data(), p.gamma_b.data(), HIDDEN, hw, &mut gamma);
            pointwise_forward(&embed, MASK_DIM, p.beta_w.data(), p.beta_b.data(), HIDDEN, hw, &mut beta);
            for ((h, &g), &b) in a1.iter_mut().zip(&gamma).zip(&beta) {
                *h = *h * (T::one() + g) + b;
            }
            Some(AmmCache { embed, gamma })
        } else {
            None
        };
        for v in a1.iter_mut() {
            *v = v.tanh();
        }

        let mut a2 = vec![T::zero(); HIDDEN * hw];
        conv3x3_forward(&a1, HIDDEN, self.conv2_w.data(), self.conv2_b.data(), HIDDEN, plane, &mut a2);
        for v in a2.iter_mut() {
            *v = v.tanh();
        }

        let mut out = vec![T::zero(); f * hw];
        conv3x3_forward(&a2, HIDDEN, self.out_w.data(), self.out_b.data(), f, plane, &mut out);

        Ok(Cache {
            plane,
            x,
            emb,
            pre1,
            amm,
            a1,
            a2,
            out,
        })
    }

    /// Accumulate `∂L/∂θ` for one example given `∂L/∂out`.
    fn backward_one(&self, cache: &Cache<T>, mask: &Tensor<T>, dout: &[T], g: &mut Gradients<T>) {
        let plane = cache.plane;
        let (f, hw) = (self.frames, plane.area());

        let mut da2 = vec![T::zero(); HIDDEN * hw];
        conv3x3_backward(&cache.a2, HIDDEN, self.out_w.data(), f, plane, dout, g.out_w.data_mut(), g.out_b.data_mut(), Some(&mut da2));
        for (d, &a) in da2.iter_mut().zip(&cache.a2) {
            *d *= T::one() - a * a;
        }

        let mut da1 = vec![T::zero(); HIDDEN * hw];
        conv3x3_backward(&cache.a1, HIDDEN, self.conv2_w.data(), HIDDEN, plane, &da2, g.conv2_w.data_mut(), g.conv2_b.data_mut(), Some(&mut da1));
        // da1 becomes ∂L/∂h'.
        for (d, &a) in da1.iter_mut().zip(&cache.a1) {
            *d *= T::one() - a * a;
        }

        let dpre1 = match (&self.amm, &cache.amm, g.amm.as_mut()) {
            (Some(p), Some(ac), Some(ga)) => {
                let mut dpre1 = vec![T::zero(); HIDDEN * hw];
                let mut dgamma = vec![T::zero(); HIDDEN * hw];
                for i in 0..HIDDEN * hw {
                    dpre1[i] = da1[i] * (T::one() + ac.gamma[i]);
                    dgamma[i] = da1[i] * cache.pre1[i];
                }
                let mut dembed = vec![T::zero(); MASK_DIM * hw];
                pointwise_backward(&ac.embed, MASK_DIM, p.gamma_w.data(), HIDDEN, hw, &dgamma, ga.gamma_w.data_mut(), ga.gamma_b.data_mut(), &mut dembed);
                pointwise_backward(&ac.embed, MASK_DIM, p.beta_w.data(), HIDDEN, hw, &da1, ga.beta_w.data_mut(), ga.beta_b.data_mut(), &mut dembed);
                conv3x3_backward(mask.data(), f, p.embed_w.data(), MASK_DIM, plane, &dembed, ga.embed_w.data_mut(), ga.embed_b.data_mut(), None);
                dpre1
            }
            _ => da1,
        };

        let mut dtime = vec![T::zero(); HIDDEN];
        for (c, chunk) in dpre1.chunks(hw).enumerate() {
            dtime[c] = chunk.iter().copied().sum();
        }
        let mut demb = vec![T::zero(); TIME_DIM];
        pointwise_backward(&cache.emb, TIME_DIM, self.time_w.data(), HIDDEN, 1, &dtime, g.time_w.data_mut(), g.time_b.data_mut(), &mut demb);
        conv3x3_backward(&cache.x, 3 * f, self.conv1_w.data(), HIDDEN, plane, &dpre1, g.conv1_w.data_mut(), g.conv1_b.data_mut(), None);
    }
}

struct AmmCache<T> {
    embed: Vec<T>,
    gamma: Vec<T>,
}

struct Cache<T> {
    plane: Plane,
    x: Vec<T>,
    emb: Vec<T>,
    pre1: Vec<T>,
    amm: Option<AmmCache<T>>,
    a1: Vec<T>,
    a2: Vec<T>,
    out: Vec<T>,
}

/// One regression example: network inputs and the output it should produce.
#[derive(Clone, Debug, PartialEq)]
pub struct Example<T = f32> {
    pub z_t: Tensor<T>,
    pub t: f64,
    pub z_src: Tensor<T>,
    pub mask: Tensor<T>,
    pub target: Tensor<T>,
}

/// `scale · mean_batch mean_elements (v_θ − target)²`.
pub fn loss<T: Real>(p: &ModelParams<T>, batch: &[Example<T>], scale: f64) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::argument("empty batch"));
    }
    let mut total = 0.0;
    for ex in batch {
        let out = p.forward(&ex.z_t, ex.t, &ex.z_src, &ex.mask)?;
        total += out.mse(&ex.target)?;
    }
    Ok(scale * total / batch.len() as f64)
}

/// Loss and its exact gradient. Examples are reduced in batch order.
pub fn backward<T: Real>(
    p: &ModelParams<T>,
    batch: &[Example<T>],
    scale: f64,
) -> Result<(f64, Gradients<T>)> {
    if batch.is_empty() {
        return Err(Error::argument("empty batch"));
    }
    let mut grads = p.zeros_like();
    let mut total = 0.0;
    let nb = batch.len() as f64;
    for ex in batch {
        let cache = p.forward_cached(&ex.z_t, ex.t, &ex.z_src, &ex.mask)?;
        ex.z_t.ensure_same_shape(&ex.target)?;
        let n = cache.out.len() as f64;
        let k = T::of(2.0 * scale / (n * nb));
        let mut sq = 0.0;
        let dout: Vec<T> = cache
            .out
            .iter()
            .zip(ex.target.data())
            .map(|(&o, &y)| {
                let d = o - y;
                sq += d.f64() * d.f64();
                k * d
            })
            .collect();
        total += sq / n;
        p.backward_one(&cache, &ex.mask, &dout, &mut grads);
    }
    let value = scale * total / nb;
    if !value.is_finite() {
        return Err(Error::NonFinite { what: "loss", step: 0 });
    }
    Ok((value, grads))
}

impl<T: Real> Network<T> for ModelParams<T> {
    fn predict(
        &self,
        z_t: &Tensor<T>,
        t: f64,
        z_src: &Tensor<T>,
        mask: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        self.forward(z_t, t, z_src, mask)
    }
}

#[cfg(test)]
mod tests;
