//! Slow, literal reference implementations used to check the fast paths.
//!
//! Nothing here shares code with the kernels it checks: every function is a
//! direct loop over the defining sum, accumulated in `f64`.

use crate::network::{ForwardTrace, LayerKind, NetworkDef};
use crate::ops::{ConvParams, PoolParams};
use crate::tensor::{Scalar, Tensor};

/// Convolution by explicit loops over every output and every tap.
pub fn conv2d_nested<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    params: ConvParams,
) -> Tensor<T> {
    let (cin, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (cout, _, kh, kw) = (
        kernel.shape()[0],
        kernel.shape()[1],
        kernel.shape()[2],
        kernel.shape()[3],
    );
    let (s, p) = (params.stride as isize, params.padding as isize);
    let oh = (h as isize + 2 * p - kh as isize) / s + 1;
    let ow = (w as isize + 2 * p - kw as isize) / s + 1;
    let (oh, ow) = (oh as usize, ow as usize);
    let mut out = vec![T::zero(); cout * oh * ow];
    for co in 0..cout {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bias.map_or(0.0, |b| b.at(&[co]).as_f64());
                for ci in 0..cin {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = oy as isize * s + ky as isize - p;
                            let ix = ox as isize * s + kx as isize - p;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            acc += input.at(&[ci, iy as usize, ix as usize]).as_f64()
                                * kernel.at(&[co, ci, ky, kx]).as_f64();
                        }
                    }
                }
                out[(co * oh + oy) * ow + ox] = T::from_f64(acc);
            }
        }
    }
    Tensor::new(vec![cout, oh, ow], out).unwrap()
}

fn pool_scan<T: Scalar>(
    input: &Tensor<T>,
    params: PoolParams,
    reduce: impl Fn(&[f64]) -> f64,
) -> Tensor<T> {
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let oh = (h - params.window) / params.stride + 1;
    let ow = (w - params.window) / params.stride + 1;
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut window = Vec::new();
                for dy in 0..params.window {
                    for dx in 0..params.window {
                        window.push(
                            input
                                .at(&[ch, oy * params.stride + dy, ox * params.stride + dx])
                                .as_f64(),
                        );
                    }
                }
                out.push(T::from_f64(reduce(&window)));
            }
        }
    }
    Tensor::new(vec![c, oh, ow], out).unwrap()
}

pub fn maxpool_scan<T: Scalar>(input: &Tensor<T>, params: PoolParams) -> Tensor<T> {
    pool_scan(input, params, |w| {
        w.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    })
}

pub fn avgpool_scan<T: Scalar>(input: &Tensor<T>, params: PoolParams) -> Tensor<T> {
    pool_scan(input, params, |w| w.iter().sum::<f64>() / w.len() as f64)
}

/// Central differences of a scalar function at every coordinate of `x`.
pub fn finite_difference(x: &Tensor<f64>, h: f64, f: impl Fn(&Tensor<f64>) -> f64) -> Tensor<f64> {
    let mut probe = x.clone();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe);
        probe.data_mut()[i] = orig - h;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        grad.push((up - down) / (2.0 * h));
    }
    Tensor::new(x.shape().to_vec(), grad).unwrap()
}

/// `||a - b|| / ||b||` in the Euclidean norm; zero when both are zero.
pub fn relative_error<A: Scalar, B: Scalar>(a: &[A], b: &[B]) -> f64 {
    assert_eq!(a.len(), b.len(), "relative_error length mismatch");
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x.as_f64() - y.as_f64()).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm: f64 = b.iter().map(|y| y.as_f64().powi(2)).sum::<f64>().sqrt();
    if diff == 0.0 {
        0.0
    } else {
        diff / norm.max(f64::MIN_POSITIVE)
    }
}

/// z-rule on a dense layer `w[out, in]` without bias or stabiliser:
/// `R_i = sum_j x_i w_ji / (sum_k x_k w_jk) * R_j`.
pub fn lrp_dense_z(x: &[f64], w: &Tensor<f64>, r: &[f64]) -> Vec<f64> {
    let (outs, ins) = (w.shape()[0], w.shape()[1]);
    let mut out = vec![0.0; ins];
    for j in 0..outs {
        let z: f64 = (0..ins).map(|k| x[k] * w.at(&[j, k])).sum();
        for i in 0..ins {
            out[i] += x[i] * w.at(&[j, i]) / z * r[j];
        }
    }
    out
}

/// zB-rule on a dense layer `w[out, in]` with per-input bounds.
pub fn lrp_dense_zb(a: &[f64], w: &Tensor<f64>, r: &[f64], low: &[f64], high: &[f64]) -> Vec<f64> {
    let (outs, ins) = (w.shape()[0], w.shape()[1]);
    let term = |j: usize, i: usize| {
        let wji = w.at(&[j, i]);
        a[i] * wji - low[i] * wji.max(0.0) - high[i] * wji.min(0.0)
    };
    let mut out = vec![0.0; ins];
    for j in 0..outs {
        let z: f64 = (0..ins).map(|k| term(j, k)).sum();
        for i in 0..ins {
            out[i] += term(j, i) / z * r[j];
        }
    }
    out
}

/// z-rule (or, with `bounds`, zB-rule) for a convolution, evaluated as the
/// explicit double sum over every (input, output) pair the kernel connects.
/// The bias contributes to the denominator only; `sign(0)` is taken as +1.
pub fn lrp_conv_nested(
    x: &Tensor<f64>,
    kernel: &Tensor<f64>,
    bias: Option<&Tensor<f64>>,
    params: ConvParams,
    r: &Tensor<f64>,
    epsilon: f64,
    bounds: Option<(&[f64], &[f64])>,
) -> Tensor<f64> {
    let (cin, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (cout, _, kh, kw) = (
        kernel.shape()[0],
        kernel.shape()[1],
        kernel.shape()[2],
        kernel.shape()[3],
    );
    let (oh, ow) = (r.shape()[1], r.shape()[2]);
    let (s, p) = (params.stride as isize, params.padding as isize);
    let contribution = |ci: usize, iy: usize, ix: usize, wv: f64| match bounds {
        None => x.at(&[ci, iy, ix]) * wv,
        Some((low, high)) => {
            x.at(&[ci, iy, ix]) * wv - low[ci] * wv.max(0.0) - high[ci] * wv.min(0.0)
        }
    };
    let taps = |oy: usize, ox: usize| {
        let mut v = Vec::new();
        for ci in 0..cin {
            for ky in 0..kh {
                for kx in 0..kw {
                    let iy = oy as isize * s + ky as isize - p;
                    let ix = ox as isize * s + kx as isize - p;
                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                        v.push((ci, iy as usize, ix as usize, ky, kx));
                    }
                }
            }
        }
        v
    };
    let mut out = vec![0.0; cin * h * w];
    for co in 0..cout {
        for oy in 0..oh {
            for ox in 0..ow {
                let list = taps(oy, ox);
                let mut z = bias.map_or(0.0, |b| b.at(&[co]));
                for &(ci, iy, ix, ky, kx) in &list {
                    z += contribution(ci, iy, ix, kernel.at(&[co, ci, ky, kx]));
                }
                let denom = if z >= 0.0 { z + epsilon } else { z - epsilon };
                let rj = r.at(&[co, oy, ox]);
                if rj == 0.0 {
                    continue;
                }
                for &(ci, iy, ix, ky, kx) in &list {
                    out[(ci * h + iy) * w + ix] +=
                        contribution(ci, iy, ix, kernel.at(&[co, ci, ky, kx])) / denom * rj;
                }
            }
        }
    }
    Tensor::new(vec![cin, h, w], out).unwrap()
}

/// Probability that a random positive outscores a random negative, counting
/// ties as one half, by comparing every pair.
pub fn auc_pairs(labels: &[bool], scores: &[f64]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Confusion counts `m[true][pred]` by direct tallying.
pub fn confusion_counts(truth: &[usize], predicted: &[usize], classes: usize) -> Vec<Vec<u64>> {
    let mut m = vec![vec![0u64; classes]; classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        m[t][p] += 1;
    }
    m
}

/// Distance of a forward pass from the nearest point where it stops being
/// differentiable: the smallest |pre-activation| entering a ReLU, or the
/// smallest gap between the two largest entries of a max-pool window.
/// A window of ReLU zeros is not a kink: the ReLU margin keeps it at zero.
pub fn kink_distance<T: Scalar>(net: &NetworkDef, trace: &ForwardTrace<T>) -> f64 {
    let mut best = f64::INFINITY;
    for (index, layer) in net.layers().iter().enumerate() {
        let x = &trace.activations()[index];
        let after_relu = index > 0 && net.layers()[index - 1].kind == LayerKind::Relu;
        match layer.kind {
            LayerKind::Relu => {
                for v in x.data() {
                    best = best.min(v.as_f64().abs());
                }
            }
            LayerKind::MaxPool { window, stride } => {
                let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
                for ch in 0..c {
                    for oy in 0..(h - window) / stride + 1 {
                        for ox in 0..(w - window) / stride + 1 {
                            let mut vals = Vec::new();
                            for dy in 0..window {
                                for dx in 0..window {
                                    vals.push(
                                        x.at(&[ch, oy * stride + dy, ox * stride + dx]).as_f64(),
                                    );
                                }
                            }
                            vals.sort_by(|a, b| b.total_cmp(a));
                            if vals.len() > 1 && !(after_relu && vals[0] == 0.0) {
                                best = best.min(vals[0] - vals[1]);
                            }
                        }
                    }
                }
            }
            _ => {}
        }
    }
    best
}
