//! Same-padded 3×3 and 1×1 convolutions over channel-major planes
//! (`[channels][height][width]`), with their reverse-mode passes.

use crate::Real;

/// Output columns `[x0, x1)` whose input column `x + dx` is inside the plane.
#[inline]
fn span(len: usize, d: isize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (len as isize - d).min(len as isize).max(0) as usize;
    (lo, hi.max(lo))
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Plane {
    pub h: usize,
    pub w: usize,
}

impl Plane {
    pub fn area(self) -> usize {
        self.h * self.w
    }
}

/// `out[co] = b[co] + Σ_ci w[co, ci] ⋆ input[ci]`.
pub(crate) fn conv3x3_forward<T: Real>(
    input: &[T],
    cin: usize,
    weight: &[T],
    bias: &[T],
    cout: usize,
    plane: Plane,
    out: &mut [T],
) {
    let (h, w, hw) = (plane.h, plane.w, plane.area());
    for co in 0..cout {
        let o = &mut out[co * hw..(co + 1) * hw];
        o.fill(bias[co]);
        for ci in 0..cin {
            let inp = &input[ci * hw..(ci + 1) * hw];
            let kernel = &weight[(co * cin + ci) * 9..(co * cin + ci + 1) * 9];
            for ky in 0..3 {
                let dy = ky as isize - 1;
                let (y0, y1) = span(h, dy);
                for kx in 0..3 {
                    let dx = kx as isize - 1;
                    let (x0, x1) = span(w, dx);
                    let wv = kernel[ky * 3 + kx];
                    for y in y0..y1 {
                        let iy = (y as isize + dy) as usize;
                        let ix0 = (x0 as isize + dx) as usize;
                        let orow = &mut o[y * w + x0..y * w + x1];
                        let irow = &inp[iy * w + ix0..iy * w + ix0 + (x1 - x0)];
                        for (a, &b) in orow.iter_mut().zip(irow) {
                            *a += wv * b;
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates weight and bias gradients, and input gradients when `din` is given.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv3x3_backward<T: Real>(
    input: &[T],
    cin: usize,
    weight: &[T],
    cout: usize,
    plane: Plane,
    dout: &[T],
    dweight: &mut [T],
    dbias: &mut [T],
    mut din: Option<&mut [T]>,
) {
    let (h, w, hw) = (plane.h, plane.w, plane.area());
    for co in 0..cout {
        let g = &dout[co * hw..(co + 1) * hw];
        dbias[co] += g.iter().copied().sum::<T>();
        for ci in 0..cin {
            let base = (co * cin + ci) * 9;
            let inp = &input[ci * hw..(ci + 1) * hw];
            for ky in 0..3 {
                let dy = ky as isize - 1;
                let (y0, y1) = span(h, dy);
                for kx in 0..3 {
                    let dx = kx as isize - 1;
                    let (x0, x1) = span(w, dx);
                    let wv = weight[base + ky * 3 + kx];
                    let mut acc = T::zero();
                    for y in y0..y1 {
                        let iy = (y as isize + dy) as usize;
                        let ix0 = (x0 as isize + dx) as usize;
                        let grow = &g[y * w + x0..y * w + x1];
                        let irow = &inp[iy * w + ix0..iy * w + ix0 + (x1 - x0)];
                        for (&a, &b) in grow.iter().zip(irow) {
                            acc += a * b;
                        }
                        if let Some(din) = din.as_deref_mut() {
                            let drow = &mut din[ci * hw + iy * w + ix0..ci * hw + iy * w + ix0 + (x1 - x0)];
                            for (d, &a) in drow.iter_mut().zip(grow) {
                                *d += wv * a;
                            }
                        }
                    }
                    dweight[base + ky * 3 + kx] += acc;
                }
            }
        }
    }
}

/// 1×1 convolution: `out[co] = b[co] + Σ_ci w[co, ci]·input[ci]`.
pub(crate) fn pointwise_forward<T: Real>(
    input: &[T],
    cin: usize,
    weight: &[T],
    bias: &[T],
    cout: usize,
    hw: usize,
    out: &mut [T],
) {
    for co in 0..cout {
        let o = &mut out[co * hw..(co + 1) * hw];
        o.fill(bias[co]);
        for ci in 0..cin {
            let wv = weight[co * cin + ci];
            for (a, &b) in o.iter_mut().zip(&input[ci * hw..(ci + 1) * hw]) {
                *a += wv * b;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn pointwise_backward<T: Real>(
    input: &[T],
    cin: usize,
    weight: &[T],
    cout: usize,
    hw: usize,
    dout: &[T],
    dweight: &mut [T],
    dbias: &mut [T],
    din: &mut [T],
) {
    for co in 0..cout {
        let g = &dout[co * hw..(co + 1) * hw];
        dbias[co] += g.iter().copied().sum::<T>();
        for ci in 0..cin {
            let inp = &input[ci * hw..(ci + 1) * hw];
            dweight[co * cin + ci] += g.iter().zip(inp).map(|(&a, &b)| a * b).sum::<T>();
            let wv = weight[co * cin + ci];
            for (d, &a) in din[ci * hw..(ci + 1) * hw].iter_mut().zip(g) {
                *d += wv * a;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct definition with explicit bounds checks.
    fn naive_conv(input: &[f64], cin: usize, weight: &[f64], cout: usize, h: usize, w: usize) -> Vec<f64> {
        let mut out = vec![0.0; cout * h * w];
        for co in 0..cout {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0;
                    for ci in 0..cin {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = y as isize + ky as isize - 1;
                                let ix = x as isize + kx as isize - 1;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                    acc += weight[((co * cin + ci) * 3 + ky) * 3 + kx]
                                        * input[(ci * h + iy as usize) * w + ix as usize];
                                }
                            }
                        }
                    }
                    out[(co * h + y) * w + x] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_naive_definition() {
        let (cin, cout, h, w) = (2, 3, 5, 4);
        let input: Vec<f64> = (0..cin * h * w).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let weight: Vec<f64> = (0..cout * cin * 9).map(|i| ((i * 5) % 7) as f64 * 0.1 - 0.3).collect();
        let mut out = vec![0.0; cout * h * w];
        conv3x3_forward(&input, cin, &weight, &[0.0; 3], cout, Plane { h, w }, &mut out);
        let naive = naive_conv(&input, cin, &weight, cout, h, w);
        for (a, b) in out.iter().zip(&naive) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_input_gradient_is_adjoint() {
        // <conv(x), g> = <x, convᵀ(g)> for any x, g.
        let (cin, cout, h, w) = (2, 2, 4, 6);
        let x: Vec<f64> = (0..cin * h * w).map(|i| (i as f64 * 0.37).sin()).collect();
        let g: Vec<f64> = (0..cout * h * w).map(|i| (i as f64 * 0.11).cos()).collect();
        let weight: Vec<f64> = (0..cout * cin * 9).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut y = vec![0.0; cout * h * w];
        conv3x3_forward(&x, cin, &weight, &[0.0; 2], cout, Plane { h, w }, &mut y);
        let mut dx = vec![0.0; cin * h * w];
        let (mut dw, mut db) = (vec![0.0; weight.len()], vec![0.0; cout]);
        conv3x3_backward(&x, cin, &weight, cout, Plane { h, w }, &g, &mut dw, &mut db, Some(&mut dx));
        let lhs: f64 = y.iter().zip(&g).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&dx).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
        // Linearity in the weights: <conv_w(x), g> = <w, dW>.
        let rhs_w: f64 = weight.iter().zip(&dw).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs_w).abs() < 1e-10);
    }
}
