use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, NumAssign};

use crate::{Error, Result};

/// Scalar type of tensors: `f64` for verification, `f32` for training.
pub trait Real: Float + NumAssign + Sum + Debug + Default + Send + Sync + 'static {
    fn of(x: f64) -> Self;
    fn f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }
    #[inline]
    fn f64(self) -> f64 {
        self
    }
}

/// Dense row-major n-dimensional array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f64> {
    dims: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(dims: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n = checked_len(&dims)?;
        if n != data.len() {
            return Err(Error::argument(format!(
                "dims {dims:?} hold {n} elements but data has {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Self::full(dims, T::zero())
    }

    pub fn full(dims: &[usize], value: T) -> Self {
        let n = dims.iter().product();
        Self {
            dims: dims.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: T) -> Self {
        Self::full(&[1], value)
    }

    pub fn from_fn(dims: &[usize], f: impl FnMut(usize) -> T) -> Self {
        let n = dims.iter().product();
        Self {
            dims: dims.to_vec(),
            data: (0..n).map(f).collect(),
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ensure_same_shape(&self, other: &Self) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::Shape {
                expected: self.dims.clone(),
                actual: other.dims.clone(),
            });
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|v| v * k)
    }

    /// `Σ wᵢ·xᵢ` over tensors of one shape.
    pub fn lincomb(terms: &[(T, &Tensor<T>)]) -> Result<Self> {
        let (_, first) = terms
            .first()
            .ok_or_else(|| Error::argument("empty linear combination"))?;
        for (_, t) in &terms[1..] {
            first.ensure_same_shape(t)?;
        }
        let mut out = Self::zeros(&first.dims);
        for (w, t) in terms {
            for (o, &v) in out.data.iter_mut().zip(&t.data) {
                *o += *w * v;
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        Self::lincomb(&[(T::one(), self), (-T::one(), other)])
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn mean(&self) -> T {
        self.sum() / T::of(self.len() as f64)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        self.ensure_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs())))
    }

    pub fn mse(&self, other: &Self) -> Result<f64> {
        self.ensure_same_shape(other)?;
        let s: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| {
                let d = (a - b).f64();
                d * d
            })
            .sum();
        Ok(s / self.len() as f64)
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|v| U::of(v.f64())).collect(),
        }
    }
}

pub(crate) fn checked_len(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() {
        return Err(Error::argument("tensor must have at least one dimension"));
    }
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::argument(format!("dims {dims:?} overflow")))
}
