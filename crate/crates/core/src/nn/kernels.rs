//! Per-sample layer kernels, generic over the float type so the same code
//! can be checked against finite differences in `f64` and trained in `f32`.
//!
//! Activations use `(h, w, c)` layout, channels fastest. Convolution weights
//! are `(kh, kw, c_in, filters)`, dense weights are `(inputs, units)`.

use num_traits::Float;
use rand::Rng;

#[inline]
pub fn axpy<T: Float>(y: &mut [T], a: T, x: &[T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + a * xi;
    }
}

/// Dot product with eight independent partial sums (fixed order).
#[inline]
pub fn dot<T: Float>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let mut acc = [T::zero(); 8];
    let chunks = n / 8;
    for k in 0..chunks {
        let a8 = &a[k * 8..k * 8 + 8];
        let b8 = &b[k * 8..k * 8 + 8];
        for l in 0..8 {
            acc[l] = acc[l] + a8[l] * b8[l];
        }
    }
    let mut tail = T::zero();
    for i in chunks * 8..n {
        tail = tail + a[i] * b[i];
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub in_shape: [usize; 3],
    pub kernel: (usize, usize),
    pub filters: usize,
    /// Zero padding before (top, left); the padded size keeps the output
    /// spatially equal to the input for odd kernels.
    pub pad: (usize, usize),
}

impl ConvGeom {
    pub fn padded(&self) -> [usize; 3] {
        let [h, w, c] = self.in_shape;
        if self.pad == (0, 0) {
            [h, w, c]
        } else {
            [h + self.kernel.0 - 1, w + self.kernel.1 - 1, c]
        }
    }

    pub fn out_shape(&self) -> [usize; 3] {
        let [ph, pw, _] = self.padded();
        [ph + 1 - self.kernel.0, pw + 1 - self.kernel.1, self.filters]
    }

    fn pad_input<T: Float>(&self, x: &[T]) -> Vec<T> {
        let [h, w, c] = self.in_shape;
        let [_, pw, _] = self.padded();
        let [ph_, _, _] = self.padded();
        let mut out = vec![T::zero(); ph_ * pw * c];
        for i in 0..h {
            let src = &x[i * w * c..(i + 1) * w * c];
            let dst = ((i + self.pad.0) * pw + self.pad.1) * c;
            out[dst..dst + w * c].copy_from_slice(src);
        }
        out
    }
}

pub fn conv_forward<T: Float>(g: &ConvGeom, x: &[T], w: &[T], b: &[T]) -> Vec<T> {
    let padded;
    let x = if g.pad == (0, 0) {
        x
    } else {
        padded = g.pad_input(x);
        &padded
    };
    let [_, pw, c] = g.padded();
    let [ho, wo, f] = g.out_shape();
    let (kh, kw) = g.kernel;
    let row = kw * c;
    let mut out = vec![T::zero(); ho * wo * f];
    for i in 0..ho {
        for j in 0..wo {
            let o = &mut out[(i * wo + j) * f..(i * wo + j + 1) * f];
            o.copy_from_slice(b);
            for di in 0..kh {
                let base = ((i + di) * pw + j) * c;
                let patch = &x[base..base + row];
                let wrow = &w[di * row * f..(di + 1) * row * f];
                for (k, &xv) in patch.iter().enumerate() {
                    if xv != T::zero() {
                        axpy(o, xv, &wrow[k * f..(k + 1) * f]);
                    }
                }
            }
        }
    }
    out
}

/// Accumulates weight and bias gradients into `dw`, `db`; returns the input gradient.
pub fn conv_backward<T: Float>(
    g: &ConvGeom,
    x: &[T],
    w: &[T],
    dout: &[T],
    dw: &mut [T],
    db: &mut [T],
    need_dx: bool,
) -> Vec<T> {
    let padded;
    let xp = if g.pad == (0, 0) {
        x
    } else {
        padded = g.pad_input(x);
        &padded
    };
    let [phh, pw, c] = g.padded();
    let [ho, wo, f] = g.out_shape();
    let (kh, kw) = g.kernel;
    let row = kw * c;
    let mut dxp = if need_dx { vec![T::zero(); phh * pw * c] } else { Vec::new() };
    for i in 0..ho {
        for j in 0..wo {
            let go = &dout[(i * wo + j) * f..(i * wo + j + 1) * f];
            axpy(db, T::one(), go);
            for di in 0..kh {
                let base = ((i + di) * pw + j) * c;
                let patch = &xp[base..base + row];
                let off = di * row * f;
                for (k, &xv) in patch.iter().enumerate() {
                    let r = off + k * f..off + (k + 1) * f;
                    if xv != T::zero() {
                        axpy(&mut dw[r.clone()], xv, go);
                    }
                    if need_dx {
                        dxp[base + k] = dxp[base + k] + dot(&w[r], go);
                    }
                }
            }
        }
    }
    if !need_dx || g.pad == (0, 0) {
        return dxp;
    }
    let [h, wd, _] = g.in_shape;
    let mut dx = vec![T::zero(); h * wd * c];
    for i in 0..h {
        let src = ((i + g.pad.0) * pw + g.pad.1) * c;
        dx[i * wd * c..(i + 1) * wd * c].copy_from_slice(&dxp[src..src + wd * c]);
    }
    dx
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolGeom {
    pub in_shape: [usize; 3],
    pub pool: (usize, usize),
    pub stride: (usize, usize),
}

impl PoolGeom {
    pub fn out_shape(&self) -> [usize; 3] {
        let [h, w, c] = self.in_shape;
        [
            (h - self.pool.0) / self.stride.0 + 1,
            (w - self.pool.1) / self.stride.1 + 1,
            c,
        ]
    }
}

/// Max over each window; also returns the flat input index of each maximum
/// (first occurrence in row-major window order on ties).
pub fn pool_forward<T: Float>(g: &PoolGeom, x: &[T]) -> (Vec<T>, Vec<u32>) {
    let [_, w, c] = g.in_shape;
    let [ho, wo, _] = g.out_shape();
    let mut out = Vec::with_capacity(ho * wo * c);
    let mut arg = Vec::with_capacity(ho * wo * c);
    for i in 0..ho {
        for j in 0..wo {
            for ch in 0..c {
                let mut best = T::neg_infinity();
                let mut best_idx = 0usize;
                for di in 0..g.pool.0 {
                    for dj in 0..g.pool.1 {
                        let idx = ((i * g.stride.0 + di) * w + j * g.stride.1 + dj) * c + ch;
                        if x[idx] > best {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                }
                out.push(best);
                arg.push(best_idx as u32);
            }
        }
    }
    (out, arg)
}

pub fn pool_backward<T: Float>(in_len: usize, argmax: &[u32], dout: &[T]) -> Vec<T> {
    let mut dx = vec![T::zero(); in_len];
    for (&a, &g) in argmax.iter().zip(dout) {
        dx[a as usize] = dx[a as usize] + g;
    }
    dx
}

pub fn dense_forward<T: Float>(x: &[T], w: &[T], b: &[T]) -> Vec<T> {
    let units = b.len();
    let mut out = b.to_vec();
    for (i, &xv) in x.iter().enumerate() {
        if xv != T::zero() {
            axpy(&mut out, xv, &w[i * units..(i + 1) * units]);
        }
    }
    out
}

pub fn dense_backward<T: Float>(
    x: &[T],
    w: &[T],
    dout: &[T],
    dw: &mut [T],
    db: &mut [T],
    need_dx: bool,
) -> Vec<T> {
    let units = dout.len();
    axpy(db, T::one(), dout);
    let mut dx = if need_dx { vec![T::zero(); x.len()] } else { Vec::new() };
    for (i, &xv) in x.iter().enumerate() {
        let r = i * units..(i + 1) * units;
        if xv != T::zero() {
            axpy(&mut dw[r.clone()], xv, dout);
        }
        if need_dx {
            dx[i] = dot(&w[r], dout);
        }
    }
    dx
}

pub fn relu_forward<T: Float>(x: &[T]) -> Vec<T> {
    x.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect()
}

/// Gradient passes only where the input was strictly positive.
pub fn relu_backward<T: Float>(x: &[T], dout: &[T]) -> Vec<T> {
    x.iter()
        .zip(dout)
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect()
}

pub fn softmax_forward<T: Float>(x: &[T]) -> Vec<T> {
    let m = x.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = x.iter().map(|&v| (v - m).exp()).collect();
    let s = e.iter().copied().fold(T::zero(), |a, b| a + b);
    e.into_iter().map(|v| v / s).collect()
}

/// Vector-Jacobian product of softmax given its output `y`.
pub fn softmax_backward<T: Float>(y: &[T], dout: &[T]) -> Vec<T> {
    let s = dot(y, dout);
    y.iter().zip(dout).map(|(&yi, &gi)| yi * (gi - s)).collect()
}

/// Inverted-dropout mask: 0 with probability `p`, otherwise `1 / (1 - p)`.
pub fn dropout_mask<T: Float, R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Vec<T> {
    let keep = T::from(1.0 / (1.0 - p)).unwrap();
    (0..n)
        .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
        .collect()
}

/// Elementwise product; serves as both the forward and backward pass of a
/// fixed dropout mask.
pub fn apply_mask<T: Float>(x: &[T], mask: &[T]) -> Vec<T> {
    x.iter().zip(mask).map(|(&a, &m)| a * m).collect()
}

pub const LOG_CLAMP: f64 = 1e-12;

pub fn cross_entropy<T: Float>(probs: &[T], label: usize) -> T {
    let p = probs[label].max(T::from(LOG_CLAMP).unwrap());
    -p.ln()
}

/// Gradient of softmax + cross-entropy with respect to the logits.
pub fn cross_entropy_logit_grad<T: Float>(probs: &[T], label: usize) -> Vec<T> {
    probs
        .iter()
        .enumerate()
        .map(|(i, &p)| if i == label { p - T::one() } else { p })
        .collect()
}
