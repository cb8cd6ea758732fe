// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dense kernels used by the forward pass.
//!
//! Every kernel computes each output element with a fixed reduction order,
//! so results do not depend on how rayon splits the work.

use rayon::prelude::*;

use crate::model::bundle::Tensor;
use crate::model::config::Activation;

/// Work (multiply-adds) above which a linear layer is split across threads.
const PAR_THRESHOLD: usize = 1 << 18;

/// Eight-lane dot product. Products of two `f32` are exact in `f64`, so
/// accumulating there leaves a single rounding for the caller.
#[inline]
pub(crate) fn dot_f64(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0f64; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for lane in 0..8 {
            acc[lane] += f64::from(x[lane]) * f64::from(y[lane]);
        }
    }
    let mut tail = 0f64;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += f64::from(*x) * f64::from(*y);
    }
    let lo = (acc[0] + acc[4]) + (acc[1] + acc[5]);
    let hi = (acc[2] + acc[6]) + (acc[3] + acc[7]);
    lo + hi + tail
}

/// `y[t] = W x[t] + b` for a `[out, in]` weight and `rows` input rows.
pub(crate) fn linear(x: &[f32], rows: usize, weight: &Tensor, bias: &[f32]) -> Vec<f32> {
    let (out_dim, in_dim) = (weight.shape()[0], weight.shape()[1]);
    debug_assert_eq!(x.len(), rows * in_dim);
    let mut y = vec![0f32; rows * out_dim];
    let w = weight.data();
    let fill = |(idx, slot): (usize, &mut f32), xr: &[f32], base: usize| {
        let j = base + idx;
        *slot = (dot_f64(&w[j * in_dim..(j + 1) * in_dim], xr) + f64::from(bias[j])) as f32;
    };
    for (t, yr) in y.chunks_mut(out_dim).enumerate() {
        let xr = &x[t * in_dim..(t + 1) * in_dim];
        if out_dim * in_dim >= PAR_THRESHOLD {
            yr.par_chunks_mut(256).enumerate().for_each(|(c, chunk)| {
                chunk
                    .iter_mut()
                    .enumerate()
                    .for_each(|slot| fill(slot, xr, c * 256));
            });
        } else {
            yr.iter_mut().enumerate().for_each(|slot| fill(slot, xr, 0));
        }
    }
    y
}

/// Row-wise layer norm with statistics in `f64`.
pub(crate) fn layer_norm(x: &mut [f32], width: usize, gamma: &[f32], beta: &[f32], eps: f64) {
    for row in x.chunks_mut(width) {
        let n = width as f64;
        let mean = row.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
        let var = row
            .iter()
            .map(|&v| {
                let d = f64::from(v) - mean;
                d * d
            })
            .sum::<f64>()
            / n;
        let inv = 1.0 / (var + eps).sqrt();
        for ((v, g), b) in row.iter_mut().zip(gamma).zip(beta) {
            *v = ((f64::from(*v) - mean) * inv * f64::from(*g) + f64::from(*b)) as f32;
        }
    }
}

pub(crate) fn activate(x: &mut [f32], activation: Activation) {
    for v in x.iter_mut() {
        *v = gelu(f64::from(*v), activation) as f32;
    }
}

pub(crate) fn gelu(x: f64, activation: Activation) -> f64 {
    match activation {
        Activation::Gelu => 0.5 * x * (1.0 + statrs::function::erf::erf(x / std::f64::consts::SQRT_2)),
        Activation::GeluTanh => {
            let c = (2.0 / std::f64::consts::PI).sqrt();
            0.5 * x * (1.0 + (c * (x + 0.044_715 * x * x * x)).tanh())
        }
    }
}

/// Log-softmax of one logit row, accumulated in `f64`.
pub fn log_softmax(row: &[f32]) -> Vec<f64> {
    let max = row
        .iter()
        .map(|&v| f64::from(v))
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = row.iter().map(|&v| (f64::from(v) - max).exp()).sum();
    let log_z = max + sum.ln();
    row.iter().map(|&v| f64::from(v) - log_z).collect()
}
