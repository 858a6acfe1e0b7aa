//! Forward and vector-Jacobian kernels for convolution, pooling, ReLU and softmax.
//!
//! Every output element is accumulated in a fixed order, `(cin, ky, kx)` for the
//! convolution and `(cout, ky, kx)` for its input gradient, regardless of which
//! loop nest computes it. Work is split across output channels only, so results
//! are bitwise reproducible with any thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvParams {
    pub stride: usize,
    pub padding: usize,
}

impl ConvParams {
    pub const fn new(stride: usize, padding: usize) -> Self {
        Self { stride, padding }
    }

    /// 3x3 "same" convolution used throughout VGG.
    pub const VGG: ConvParams = ConvParams::new(1, 1);

    pub const VALID: ConvParams = ConvParams::new(1, 0);
}

impl Default for ConvParams {
    fn default() -> Self {
        Self::VALID
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolParams {
    pub window: usize,
    pub stride: usize,
}

impl PoolParams {
    pub const VGG: PoolParams = PoolParams {
        window: 2,
        stride: 2,
    };
}

impl Default for PoolParams {
    fn default() -> Self {
        Self::VGG
    }
}

/// Output extent of a convolution along one axis, or `None` if the kernel
/// does not fit in the padded input.
pub fn conv_extent(input: usize, kernel: usize, params: ConvParams) -> Option<usize> {
    let padded = input + 2 * params.padding;
    if params.stride == 0 || kernel == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / params.stride + 1)
}

/// Output extent of a pooling window along one axis. Windows must tile the
/// input exactly; there is no implicit padding.
pub fn pool_extent(input: usize, params: PoolParams) -> Option<usize> {
    if params.window == 0 || params.stride == 0 || input < params.window {
        return None;
    }
    let span = input - params.window;
    span.is_multiple_of(params.stride)
        .then(|| span / params.stride + 1)
}

fn conv_shapes<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    params: ConvParams,
) -> Result<(usize, usize, usize, usize, usize, usize, usize, usize)> {
    let (cin, h, w) = input.dims3("conv2d")?;
    let (cout, kcin, kh, kw) = kernel.dims4("conv2d")?;
    if kcin != cin {
        return Err(Error::dim("conv2d", "input channels", kcin, cin));
    }
    if params.stride == 0 {
        return Err(Error::Argument("conv2d: stride must be positive".into()));
    }
    let oh = conv_extent(h, kh, params).ok_or_else(|| {
        Error::dim(
            "conv2d",
            "height",
            format!("padded height >= kernel height {kh}"),
            h + 2 * params.padding,
        )
    })?;
    let ow = conv_extent(w, kw, params).ok_or_else(|| {
        Error::dim(
            "conv2d",
            "width",
            format!("padded width >= kernel width {kw}"),
            w + 2 * params.padding,
        )
    })?;
    Ok((cin, h, w, cout, kh, kw, oh, ow))
}

/// Direct 2-D convolution with symmetric zero padding.
///
/// `input` is `[Cin, H, W]`, `kernel` is `[Cout, Cin, kh, kw]`, `bias` is `[Cout]`.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    params: ConvParams,
) -> Result<Tensor<T>> {
    let (cin, h, w, cout, kh, kw, oh, ow) = conv_shapes(input, kernel, params)?;
    if let Some(b) = bias {
        if b.len() != cout {
            return Err(Error::dim("conv2d", "bias length", cout, b.len()));
        }
    }
    let geom = Geometry {
        cin,
        h,
        w,
        kh,
        kw,
        oh,
        ow,
        params,
    };
    let plane = oh * ow;
    let ksize = cin * kh * kw;
    let mut out = vec![T::zero(); cout * plane];
    let x = input.data();
    let k = kernel.data();
    out.par_chunks_mut(plane).enumerate().for_each(|(co, dst)| {
        let kco = &k[co * ksize..(co + 1) * ksize];
        if geom.is_dense() {
            dst[0] = dot_in_order(kco, x);
        } else if params.stride == 1 {
            conv_plane_unit_stride(dst, x, kco, &geom);
        } else {
            conv_plane_direct(dst, x, kco, &geom);
        }
        if let Some(b) = bias {
            let bv = b.data()[co];
            dst.iter_mut().for_each(|v| *v = *v + bv);
        }
    });
    Tensor::new(vec![cout, oh, ow], out)
}

#[derive(Clone, Copy)]
struct Geometry {
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    params: ConvParams,
}

impl Geometry {
    /// Kernel covers the whole unpadded input: a converted dense layer.
    fn is_dense(&self) -> bool {
        self.params.padding == 0 && self.kh == self.h && self.kw == self.w
    }

    /// Output rows `[lo, hi)` whose input row `oy*stride + k - pad` is in range.
    fn valid_out_range(&self, k: usize, input: usize, out: usize) -> (usize, usize) {
        let pad = self.params.padding;
        let s = self.params.stride;
        // smallest o with o*s + k >= pad
        let lo = if k >= pad { 0 } else { (pad - k).div_ceil(s) };
        // largest o with o*s + k - pad < input
        let hi = if input + pad <= k {
            0
        } else {
            ((input + pad - k - 1) / s + 1).min(out)
        };
        (lo.min(hi), hi)
    }
}

#[inline]
fn dot_in_order<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn conv_plane_unit_stride<T: Scalar>(dst: &mut [T], x: &[T], kco: &[T], g: &Geometry) {
    let pad = g.params.padding;
    for ci in 0..g.cin {
        let xp = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            let (oy_lo, oy_hi) = g.valid_out_range(ky, g.h, g.oh);
            for oy in oy_lo..oy_hi {
                let iy = oy + ky - pad;
                let orow = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                let irow = &xp[iy * g.w..(iy + 1) * g.w];
                for kx in 0..g.kw {
                    let (ox_lo, ox_hi) = g.valid_out_range(kx, g.w, g.ow);
                    if ox_lo >= ox_hi {
                        continue;
                    }
                    let wv = kco[(ci * g.kh + ky) * g.kw + kx];
                    let ix_lo = ox_lo + kx - pad;
                    let src = &irow[ix_lo..ix_lo + (ox_hi - ox_lo)];
                    for (o, &v) in orow[ox_lo..ox_hi].iter_mut().zip(src) {
                        *o = *o + wv * v;
                    }
                }
            }
        }
    }
}

fn conv_plane_direct<T: Scalar>(dst: &mut [T], x: &[T], kco: &[T], g: &Geometry) {
    let pad = g.params.padding as isize;
    let s = g.params.stride as isize;
    for oy in 0..g.oh {
        for ox in 0..g.ow {
            let mut acc = T::zero();
            for ci in 0..g.cin {
                for ky in 0..g.kh {
                    let iy = oy as isize * s + ky as isize - pad;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    for kx in 0..g.kw {
                        let ix = ox as isize * s + kx as isize - pad;
                        if ix < 0 || ix >= g.w as isize {
                            continue;
                        }
                        let xv = x[(ci * g.h + iy as usize) * g.w + ix as usize];
                        acc = acc + kco[(ci * g.kh + ky) * g.kw + kx] * xv;
                    }
                }
            }
            dst[oy * g.ow + ox] = acc;
        }
    }
}

/// Gradient of `conv2d` with respect to its input.
///
/// Only the kernel, parameters and input shape of the forward call are needed;
/// `upstream` must have the forward output shape.
pub fn conv2d_vjp<T: Scalar>(
    kernel: &Tensor<T>,
    params: ConvParams,
    input_shape: [usize; 3],
    upstream: &Tensor<T>,
) -> Result<Tensor<T>> {
    let probe = Tensor::<T>::zeros(&input_shape);
    let (cin, h, w, cout, kh, kw, oh, ow) = conv_shapes(&probe, kernel, params)?;
    upstream.expect_shape(&[cout, oh, ow], "conv2d_vjp upstream")?;
    let g = Geometry {
        cin,
        h,
        w,
        kh,
        kw,
        oh,
        ow,
        params,
    };
    let k = kernel.data();
    let up = upstream.data();
    let mut grad = vec![T::zero(); cin * h * w];
    grad.par_chunks_mut(h * w)
        .enumerate()
        .for_each(|(ci, dst)| {
            if g.is_dense() {
                // Each input position meets exactly one kernel tap per output channel.
                for co in 0..cout {
                    let u = up[co];
                    let kp = &k[(co * cin + ci) * kh * kw..(co * cin + ci + 1) * kh * kw];
                    for (d, &wv) in dst.iter_mut().zip(kp) {
                        *d = *d + wv * u;
                    }
                }
            } else if params.stride == 1 {
                vjp_plane_unit_stride(dst, up, k, ci, cout, &g);
            } else {
                vjp_plane_scatter(dst, up, k, ci, cout, &g);
            }
        });
    Tensor::new(input_shape.to_vec(), grad)
}

fn vjp_plane_unit_stride<T: Scalar>(
    dst: &mut [T],
    up: &[T],
    k: &[T],
    ci: usize,
    cout: usize,
    g: &Geometry,
) {
    let pad = g.params.padding;
    for co in 0..cout {
        let up_plane = &up[co * g.oh * g.ow..(co + 1) * g.oh * g.ow];
        let kp = &k[(co * g.cin + ci) * g.kh * g.kw..(co * g.cin + ci + 1) * g.kh * g.kw];
        for ky in 0..g.kh {
            let (oy_lo, oy_hi) = g.valid_out_range(ky, g.h, g.oh);
            for oy in oy_lo..oy_hi {
                let iy = oy + ky - pad;
                let urow = &up_plane[oy * g.ow..(oy + 1) * g.ow];
                let grow = &mut dst[iy * g.w..(iy + 1) * g.w];
                for kx in 0..g.kw {
                    let (ox_lo, ox_hi) = g.valid_out_range(kx, g.w, g.ow);
                    if ox_lo >= ox_hi {
                        continue;
                    }
                    let wv = kp[ky * g.kw + kx];
                    let ix_lo = ox_lo + kx - pad;
                    let target = &mut grow[ix_lo..ix_lo + (ox_hi - ox_lo)];
                    for (d, &u) in target.iter_mut().zip(&urow[ox_lo..ox_hi]) {
                        *d = *d + wv * u;
                    }
                }
            }
        }
    }
}

fn vjp_plane_scatter<T: Scalar>(
    dst: &mut [T],
    up: &[T],
    k: &[T],
    ci: usize,
    cout: usize,
    g: &Geometry,
) {
    let pad = g.params.padding as isize;
    let s = g.params.stride as isize;
    for co in 0..cout {
        let kp = &k[(co * g.cin + ci) * g.kh * g.kw..(co * g.cin + ci + 1) * g.kh * g.kw];
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let u = up[(co * g.oh + oy) * g.ow + ox];
                for ky in 0..g.kh {
                    let iy = oy as isize * s + ky as isize - pad;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    for kx in 0..g.kw {
                        let ix = ox as isize * s + kx as isize - pad;
                        if ix < 0 || ix >= g.w as isize {
                            continue;
                        }
                        let d = &mut dst[iy as usize * g.w + ix as usize];
                        *d = *d + kp[ky * g.kw + kx] * u;
                    }
                }
            }
        }
    }
}

fn pool_shapes<T: Scalar>(
    op: &'static str,
    input: &Tensor<T>,
    params: PoolParams,
) -> Result<(usize, usize, usize, usize, usize)> {
    let (c, h, w) = input.dims3(op)?;
    let oh = pool_extent(h, params).ok_or_else(|| {
        Error::dim(
            op,
            "height",
            format!(
                "window {} tiling with stride {}",
                params.window, params.stride
            ),
            h,
        )
    })?;
    let ow = pool_extent(w, params).ok_or_else(|| {
        Error::dim(
            op,
            "width",
            format!(
                "window {} tiling with stride {}",
                params.window, params.stride
            ),
            w,
        )
    })?;
    Ok((c, h, w, oh, ow))
}

/// Max pooling. Returns the pooled tensor and, per output element, the flat
/// input index of the maximum (first in row-major window order on ties).
pub fn maxpool2d<T: Scalar>(
    input: &Tensor<T>,
    params: PoolParams,
) -> Result<(Tensor<T>, Vec<usize>)> {
    let (c, h, w, oh, ow) = pool_shapes("maxpool2d", input, params)?;
    let x = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best_idx = (ch * h + oy * params.stride) * w + ox * params.stride;
                let mut best = x[best_idx];
                for dy in 0..params.window {
                    for dx in 0..params.window {
                        let idx = (ch * h + oy * params.stride + dy) * w + ox * params.stride + dx;
                        if x[idx] > best {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                }
                out.push(best);
                argmax.push(best_idx);
            }
        }
    }
    Ok((Tensor::new(vec![c, oh, ow], out)?, argmax))
}

/// Routes each upstream value to its window's saved argmax.
pub fn maxpool2d_vjp<T: Scalar>(
    argmax: &[usize],
    input_shape: [usize; 3],
    upstream: &Tensor<T>,
) -> Result<Tensor<T>> {
    if argmax.len() != upstream.len() {
        return Err(Error::dim(
            "maxpool2d_vjp",
            "upstream length",
            argmax.len(),
            upstream.len(),
        ));
    }
    let mut grad = Tensor::zeros(&input_shape);
    let g = grad.data_mut();
    for (&idx, &u) in argmax.iter().zip(upstream.data()) {
        let slot = g
            .get_mut(idx)
            .ok_or_else(|| Error::Usage("maxpool2d_vjp: argmax outside input".into()))?;
        *slot = *slot + u;
    }
    Ok(grad)
}

pub fn avgpool2d<T: Scalar>(input: &Tensor<T>, params: PoolParams) -> Result<Tensor<T>> {
    let (c, h, w, oh, ow) = pool_shapes("avgpool2d", input, params)?;
    let x = input.data();
    let count = T::from_f64((params.window * params.window) as f64);
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = T::zero();
                for dy in 0..params.window {
                    let row = (ch * h + oy * params.stride + dy) * w + ox * params.stride;
                    for &v in &x[row..row + params.window] {
                        acc = acc + v;
                    }
                }
                out.push(acc / count);
            }
        }
    }
    Tensor::new(vec![c, oh, ow], out)
}

/// Spreads each upstream value uniformly over its window.
pub fn avgpool2d_vjp<T: Scalar>(
    params: PoolParams,
    input_shape: [usize; 3],
    upstream: &Tensor<T>,
) -> Result<Tensor<T>> {
    let [c, h, w] = input_shape;
    let probe = Tensor::<T>::zeros(&input_shape);
    let (_, _, _, oh, ow) = pool_shapes("avgpool2d_vjp", &probe, params)?;
    upstream.expect_shape(&[c, oh, ow], "avgpool2d_vjp upstream")?;
    let count = T::from_f64((params.window * params.window) as f64);
    let mut grad = Tensor::zeros(&input_shape);
    let g = grad.data_mut();
    let up = upstream.data();
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let share = up[(ch * oh + oy) * ow + ox] / count;
                for dy in 0..params.window {
                    let row = (ch * h + oy * params.stride + dy) * w + ox * params.stride;
                    for d in &mut g[row..row + params.window] {
                        *d = *d + share;
                    }
                }
            }
        }
    }
    Ok(grad)
}

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| v.max(T::zero()))
}

/// Masks `upstream` by the positivity of the forward input.
pub fn relu_vjp<T: Scalar>(forward_input: &Tensor<T>, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    forward_input.zip_map(upstream, "relu_vjp", |x, u| {
        if x > T::zero() {
            u
        } else {
            T::zero()
        }
    })
}

/// Softmax over a flat score vector, stabilised by subtracting the maximum.
pub fn softmax<T: Scalar>(scores: &Tensor<T>) -> Tensor<T> {
    let mut out = scores.clone();
    softmax_in_place(out.data_mut());
    out
}

/// Softmax over the channel axis of a `[K, H, W]` score map, independently at
/// each spatial position.
pub fn softmax_channels<T: Scalar>(scores: &Tensor<T>) -> Result<Tensor<T>> {
    let (k, h, w) = scores.dims3("softmax")?;
    let plane = h * w;
    let mut out = scores.clone();
    let mut column = vec![T::zero(); k];
    for p in 0..plane {
        for (c, slot) in column.iter_mut().enumerate() {
            *slot = scores.data()[c * plane + p];
        }
        softmax_in_place(&mut column);
        for (c, &v) in column.iter().enumerate() {
            out.data_mut()[c * plane + p] = v;
        }
    }
    Ok(out)
}

fn softmax_in_place<T: Scalar>(values: &mut [T]) {
    let max = values.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let mut total = T::zero();
    for v in values.iter_mut() {
        *v = (*v - max).exp();
        total = total + *v;
    }
    for v in values.iter_mut() {
        *v = *v / total;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t3(c: usize, h: usize, w: usize, v: &[f64]) -> Tensor<f64> {
        Tensor::new(vec![c, h, w], v.to_vec()).unwrap()
    }

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn conv_scalar_product() {
        let x = t3(1, 1, 1, &[2.0]);
        let k = Tensor::new(vec![1, 1, 1, 1], vec![3.0]).unwrap();
        let b = Tensor::new(vec![1], vec![0.0]).unwrap();
        let y = conv2d(&x, &k, Some(&b), ConvParams::VALID).unwrap();
        assert_eq!(y.data(), &[6.0]);
    }

    #[test]
    fn conv_overlap_counts() {
        let x = Tensor::<f32>::full(&[1, 3, 3], 1.0);
        let k = Tensor::<f32>::full(&[1, 1, 3, 3], 1.0);
        let y = conv2d(&x, &k, None, ConvParams::VGG).unwrap();
        assert_eq!(y.shape(), &[1, 3, 3]);
        assert_eq!(y.data(), &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    }

    #[test]
    fn conv_matches_nested_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random(&[2, 4, 4], &mut rng);
        let k = random(&[3, 2, 3, 3], &mut rng);
        let b = random(&[3], &mut rng);
        let got = conv2d(&x, &k, Some(&b), ConvParams::VGG).unwrap();
        let want = oracle::conv2d_nested(&x, &k, Some(&b), ConvParams::VGG);
        assert_eq!(got.shape(), want.shape());
        for (g, w) in got.data().iter().zip(want.data()) {
            assert!((g - w).abs() <= 1e-12 * w.abs().max(1.0));
        }
    }

    #[test]
    fn unit_stride_path_matches_direct_path_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for pad in 0..3 {
            let x = Tensor::<f32>::from_fn(&[3, 7, 6], |_| rng.gen_range(-1.0..1.0));
            let k = Tensor::<f32>::from_fn(&[4, 3, 3, 2], |_| rng.gen_range(-1.0..1.0));
            let (cin, h, w, cout, kh, kw, oh, ow) =
                conv_shapes(&x, &k, ConvParams::new(1, pad)).unwrap();
            let g = Geometry {
                cin,
                h,
                w,
                kh,
                kw,
                oh,
                ow,
                params: ConvParams::new(1, pad),
            };
            for co in 0..cout {
                let kco = &k.data()[co * cin * kh * kw..(co + 1) * cin * kh * kw];
                let mut a = vec![0.0f32; oh * ow];
                let mut b = vec![0.0f32; oh * ow];
                conv_plane_unit_stride(&mut a, x.data(), kco, &g);
                conv_plane_direct(&mut b, x.data(), kco, &g);
                assert_eq!(
                    a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                    b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
                );
            }
        }
    }

    #[test]
    fn strided_conv_matches_nested_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&[2, 7, 7], &mut rng);
        let k = random(&[2, 2, 3, 3], &mut rng);
        let p = ConvParams::new(2, 1);
        let got = conv2d(&x, &k, None, p).unwrap();
        let want = oracle::conv2d_nested(&x, &k, None, p);
        assert_eq!(got.shape(), &[2, 4, 4]);
        for (g, w) in got.data().iter().zip(want.data()) {
            assert!((g - w).abs() <= 1e-12);
        }
    }

    #[test]
    fn conv_channel_mismatch_names_axis() {
        let x = Tensor::<f32>::zeros(&[2, 4, 4]);
        let k = Tensor::<f32>::zeros(&[1, 3, 3, 3]);
        match conv2d(&x, &k, None, ConvParams::VGG).unwrap_err() {
            Error::Dimension { axis, .. } => assert_eq!(axis, "input channels"),
            e => panic!("unexpected {e}"),
        }
        let small = Tensor::<f32>::zeros(&[3, 1, 1]);
        assert!(conv2d(&small, &k, None, ConvParams::VALID).is_err());
    }

    #[test]
    fn pooling_small_cases() {
        let x = t3(1, 2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let (m, arg) = maxpool2d(&x, PoolParams::VGG).unwrap();
        assert_eq!(m.data(), &[4.0]);
        assert_eq!(arg, vec![3]);
        assert_eq!(avgpool2d(&x, PoolParams::VGG).unwrap().data(), &[2.5]);

        let c = Tensor::<f64>::full(&[2, 4, 4], 1.75);
        assert_eq!(
            maxpool2d(&c, PoolParams::VGG).unwrap().0,
            Tensor::full(&[2, 2, 2], 1.75)
        );
        assert_eq!(
            avgpool2d(&c, PoolParams::VGG).unwrap(),
            Tensor::full(&[2, 2, 2], 1.75)
        );
    }

    #[test]
    fn pooling_rejects_odd_extent() {
        let x = Tensor::<f32>::zeros(&[1, 3, 4]);
        assert!(matches!(
            maxpool2d(&x, PoolParams::VGG),
            Err(Error::Dimension { .. })
        ));
        assert!(avgpool2d(&x, PoolParams::VGG).is_err());
    }

    #[test]
    fn maxpool_ties_pick_first() {
        let x = t3(1, 2, 2, &[5.0, 5.0, 5.0, 5.0]);
        let (_, arg) = maxpool2d(&x, PoolParams::VGG).unwrap();
        assert_eq!(arg, vec![0]);
    }

    #[test]
    fn pooling_matches_window_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&[3, 8, 8], &mut rng);
        let (m, _) = maxpool2d(&x, PoolParams::VGG).unwrap();
        assert_eq!(m, oracle::maxpool_scan(&x, PoolParams::VGG));
        let a = avgpool2d(&x, PoolParams::VGG).unwrap();
        for (g, w) in a
            .data()
            .iter()
            .zip(oracle::avgpool_scan(&x, PoolParams::VGG).data())
        {
            assert!((g - w).abs() <= f64::EPSILON * 4.0 * w.abs().max(1.0));
        }
    }

    #[test]
    fn relu_cases() {
        let x = Tensor::<f32>::new(vec![3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let neg = Tensor::<f32>::full(&[4], -3.0);
        assert_eq!(relu(&neg), Tensor::zeros(&[4]));
    }

    #[test]
    fn softmax_cases() {
        let s = softmax(&Tensor::<f64>::new(vec![2], vec![0.0, 0.0]).unwrap());
        assert_eq!(s.data(), &[0.5, 0.5]);
        let s = softmax(&Tensor::<f32>::new(vec![2], vec![1000.0, 0.0]).unwrap());
        assert!(s.all_finite());
        assert!((s.data()[0] - 1.0).abs() < 1e-6 && s.data()[1] < 1e-30);
    }

    #[test]
    fn vjp_small_cases() {
        let fwd = Tensor::<f32>::new(vec![2], vec![-1.0, 2.0]).unwrap();
        let up = Tensor::new(vec![2], vec![5.0, 7.0]).unwrap();
        assert_eq!(relu_vjp(&fwd, &up).unwrap().data(), &[0.0, 7.0]);

        let x = t3(1, 2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let (_, arg) = maxpool2d(&x, PoolParams::VGG).unwrap();
        let up = t3(1, 1, 1, &[10.0]);
        let g = maxpool2d_vjp(&arg, [1, 2, 2], &up).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 0.0, 10.0]);

        let g = avgpool2d_vjp(PoolParams::VGG, [1, 2, 2], &up).unwrap();
        assert_eq!(g.data(), &[2.5; 4]);
    }

    #[test]
    fn conv_vjp_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = random(&[2, 6, 6], &mut rng);
        let k = random(&[3, 2, 3, 3], &mut rng);
        let up = random(&[3, 6, 6], &mut rng);
        let got = conv2d_vjp(&k, ConvParams::VGG, [2, 6, 6], &up).unwrap();
        let fd = oracle::finite_difference(&x, 1e-4, |probe| {
            let y = conv2d(probe, &k, None, ConvParams::VGG).unwrap();
            y.data().iter().zip(up.data()).map(|(a, b)| a * b).sum()
        });
        assert!(oracle::relative_error(got.data(), fd.data()) <= 1e-6);
    }

    #[test]
    fn dense_vjp_path_matches_scatter() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let k = random(&[5, 3, 2, 2], &mut rng);
        let up = random(&[5, 1, 1], &mut rng);
        let got = conv2d_vjp(&k, ConvParams::VALID, [3, 2, 2], &up).unwrap();
        let mut want = [0.0; 12];
        let g = Geometry {
            cin: 3,
            h: 2,
            w: 2,
            kh: 2,
            kw: 2,
            oh: 1,
            ow: 1,
            params: ConvParams::VALID,
        };
        for ci in 0..3 {
            vjp_plane_scatter(
                &mut want[ci * 4..ci * 4 + 4],
                up.data(),
                k.data(),
                ci,
                5,
                &g,
            );
        }
        assert_eq!(got.data(), &want[..]);
    }
}
