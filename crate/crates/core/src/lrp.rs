//! Layer-wise relevance propagation.
//!
//! Relevance starts as the target class's pre-softmax score and is pushed
//! down one layer at a time. Each linear layer (convolution, or average pooling
//! standing in for max pooling) redistributes relevance with the z-rule
//!
//! ```text
//! R_i = x_i * sum_j w_ij * R_j / (z_j + eps * sign(z_j)),   z_j = sum_i x_i w_ij (+ b_j)
//! ```
//!
//! evaluated as forward pass, divide, vector-Jacobian product, multiply. The
//! input-adjacent convolution may instead use the zB-rule, which accounts for
//! the box `[l, h]` that pixel values live in. ReLU layers pass relevance
//! through unchanged.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::image::encode_ppm;
use crate::network::{self, ForwardTrace, LayerKind, NetworkDef};
use crate::ops::{self, ConvParams, PoolParams};
use crate::saliency::{render_heatmap, SaliencyMap};
use crate::tensor::{Scalar, Tensor};
use crate::weights::WeightStore;

pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum Rule {
    /// Basic rule with a sign-matched stabiliser.
    Z { epsilon: f64 },
    /// Pixel-box rule for the input layer; bounds are per input channel.
    ZB {
        epsilon: f64,
        low: Vec<f64>,
        high: Vec<f64>,
    },
}

impl Rule {
    fn epsilon(&self) -> f64 {
        match self {
            Rule::Z { epsilon } | Rule::ZB { epsilon, .. } => *epsilon,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Rule::Z { epsilon } => format!("z(eps={epsilon:e})"),
            Rule::ZB { epsilon, low, high } => {
                format!("zB(eps={epsilon:e}, l={low:?}, h={high:?})")
            }
        }
    }
}

/// Which rule each conv layer uses, plus the stabiliser for pooling layers.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleAssignment {
    rules: BTreeMap<String, Rule>,
    pool_epsilon: f64,
}

impl RuleAssignment {
    pub fn empty(pool_epsilon: f64) -> Self {
        Self {
            rules: BTreeMap::new(),
            pool_epsilon,
        }
    }

    /// z-rule with the same stabiliser on every layer.
    pub fn uniform(net: &NetworkDef, epsilon: f64) -> Self {
        let mut a = Self::empty(epsilon);
        for layer in net.conv_layers() {
            a.set(&layer.name, Rule::Z { epsilon });
        }
        a
    }

    /// z-rule everywhere except the zB-rule on the first convolution, with
    /// pixel bounds `low`/`high` per input channel.
    pub fn standard(net: &NetworkDef, epsilon: f64, low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        let mut a = Self::uniform(net, epsilon);
        let first = input_conv(net)?;
        a.set(first, Rule::ZB { epsilon, low, high });
        a.validate()?;
        Ok(a)
    }

    pub fn set(&mut self, layer: &str, rule: Rule) -> &mut Self {
        self.rules.insert(layer.to_string(), rule);
        self
    }

    pub fn get(&self, layer: &str) -> Option<&Rule> {
        self.rules.get(layer)
    }

    pub fn pool_epsilon(&self) -> f64 {
        self.pool_epsilon
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pool_epsilon >= 0.0) {
            return Err(Error::Config(format!(
                "pool epsilon {} must be >= 0",
                self.pool_epsilon
            )));
        }
        for (name, rule) in &self.rules {
            if !(rule.epsilon() >= 0.0) || !rule.epsilon().is_finite() {
                return Err(Error::Config(format!(
                    "layer {name:?}: epsilon must be finite and >= 0"
                )));
            }
            if let Rule::ZB { low, high, .. } = rule {
                if low.len() != high.len() || low.iter().zip(high).any(|(l, h)| !(l <= h)) {
                    return Err(Error::Config(format!(
                        "layer {name:?}: zB bounds must pair up with low <= high"
                    )));
                }
            }
        }
        Ok(())
    }

    fn check_covers(&self, net: &NetworkDef) -> Result<()> {
        for layer in net.conv_layers() {
            if !self.rules.contains_key(&layer.name) {
                return Err(Error::Config(format!(
                    "no LRP rule assigned to layer {:?}",
                    layer.name
                )));
            }
        }
        Ok(())
    }
}

/// Name of the first convolution, the one that sees pixels.
pub fn input_conv(net: &NetworkDef) -> Result<&str> {
    net.conv_layers()
        .next()
        .map(|l| l.name.as_str())
        .ok_or_else(|| Error::Config("network has no convolution".into()))
}

/// Replaces every max-pool with an average pool of the same window and stride.
pub fn canonicalize_for_lrp(net: &NetworkDef) -> NetworkDef {
    net.map_layers(|l| match l.kind {
        LayerKind::MaxPool { window, stride } => LayerKind::AvgPool { window, stride },
        ref other => other.clone(),
    })
    .expect("pool substitution preserves shapes")
}

/// Keeps the target class's scores and zeroes all others. The class axis is
/// the leading axis, so `[K]` vectors and `[K, H, W]` score maps both work.
pub fn mask_top_relevance<T: Scalar>(scores: &Tensor<T>, target: usize) -> Result<Tensor<T>> {
    let k = scores.shape()[0];
    if target >= k {
        return Err(Error::Argument(format!(
            "target class {target} out of range for {k} classes"
        )));
    }
    let plane = scores.len() / k;
    Ok(Tensor::from_fn(scores.shape(), |i| {
        if i / plane == target {
            scores.data()[i]
        } else {
            T::zero()
        }
    }))
}

/// A layer that is linear in its input, as seen by the relevance rules.
#[derive(Debug, Clone, Copy)]
pub enum LinearLayer<'a, T> {
    Conv {
        kernel: &'a Tensor<T>,
        bias: Option<&'a Tensor<T>>,
        params: ConvParams,
    },
    AvgPool(PoolParams),
}

impl<T: Scalar> LinearLayer<'_, T> {
    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match *self {
            LinearLayer::Conv {
                kernel,
                bias,
                params,
            } => ops::conv2d(x, kernel, bias, params),
            LinearLayer::AvgPool(p) => ops::avgpool2d(x, p),
        }
    }

    fn vjp(&self, input_shape: [usize; 3], upstream: &Tensor<T>) -> Result<Tensor<T>> {
        match *self {
            LinearLayer::Conv { kernel, params, .. } => {
                ops::conv2d_vjp(kernel, params, input_shape, upstream)
            }
            LinearLayer::AvgPool(p) => ops::avgpool2d_vjp(p, input_shape, upstream),
        }
    }
}

/// `R_j / (z_j + eps * sign(z_j))`, with `sign(0) = +1`. A zero denominator is
/// only accepted when the relevance it divides is itself zero.
fn stabilized_quotient<T: Scalar>(z: &Tensor<T>, r: &Tensor<T>, epsilon: f64) -> Result<Tensor<T>> {
    r.expect_shape(z.shape(), "lrp upstream relevance")?;
    let eps = T::from_f64(epsilon);
    let mut out = Vec::with_capacity(z.len());
    for (i, (&zj, &rj)) in z.data().iter().zip(r.data()).enumerate() {
        let denom = if zj >= T::zero() { zj + eps } else { zj - eps };
        if denom == T::zero() {
            if rj != T::zero() {
                return Err(Error::Numerical(format!(
                    "zero denominator at output {i} with nonzero relevance; use epsilon > 0"
                )));
            }
            out.push(T::zero());
        } else {
            out.push(rj / denom);
        }
    }
    Tensor::new(z.shape().to_vec(), out)
}

/// z-rule redistribution through one linear layer.
pub fn lrp_linear_rule<T: Scalar>(
    activations: &Tensor<T>,
    layer: LinearLayer<'_, T>,
    upstream: &Tensor<T>,
    epsilon: f64,
) -> Result<Tensor<T>> {
    let (c, h, w) = activations.dims3("lrp_linear_rule")?;
    let z = layer.forward(activations)?;
    let s = stabilized_quotient(&z, upstream, epsilon)?;
    let contrib = layer.vjp([c, h, w], &s)?;
    activations.mul(&contrib)
}

/// zB-rule redistribution onto pixels bounded per channel by `low`/`high`.
pub fn lrp_zb_rule<T: Scalar>(
    pixels: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    params: ConvParams,
    upstream: &Tensor<T>,
    low: &[f64],
    high: &[f64],
    epsilon: f64,
) -> Result<Tensor<T>> {
    let (c, h, w) = pixels.dims3("lrp_zb_rule")?;
    if low.len() != c || high.len() != c {
        return Err(Error::dim(
            "lrp_zb_rule",
            "bound channels",
            c,
            format!("{}/{}", low.len(), high.len()),
        ));
    }
    let plane = h * w;
    for (i, &v) in pixels.data().iter().enumerate() {
        let ch = i / plane;
        let (l, u) = (T::from_f64(low[ch]), T::from_f64(high[ch]));
        if !(v >= l && v <= u) {
            return Err(Error::Argument(format!(
                "pixel {i} (channel {ch}) = {v} outside zB bounds [{l}, {u}]"
            )));
        }
    }
    let lows = Tensor::from_fn(&[c, h, w], |i| T::from_f64(low[i / plane]));
    let highs = Tensor::from_fn(&[c, h, w], |i| T::from_f64(high[i / plane]));
    let positive = kernel.map(|v| v.max(T::zero()));
    let negative = kernel.map(|v| v.min(T::zero()));

    let z = ops::conv2d(pixels, kernel, bias, params)?
        .sub(&ops::conv2d(&lows, &positive, None, params)?)?
        .sub(&ops::conv2d(&highs, &negative, None, params)?)?;
    let s = stabilized_quotient(&z, upstream, epsilon)?;
    let shape = [c, h, w];
    let a = pixels.mul(&ops::conv2d_vjp(kernel, params, shape, &s)?)?;
    let l = lows.mul(&ops::conv2d_vjp(&positive, params, shape, &s)?)?;
    let u = highs.mul(&ops::conv2d_vjp(&negative, params, shape, &s)?)?;
    a.sub(&l)?.sub(&u)
}

/// Relevance at every activation of one LRP pass, from the masked scores
/// down to the input pixels. Entries are named like [`ForwardTrace`]
/// activations: the output of the named layer, `"input"` for pixels.
#[derive(Debug, Clone)]
pub struct RelevanceTrace<T = f32> {
    target: usize,
    target_score: f64,
    entries: Vec<(String, Tensor<T>)>,
    sums: Vec<f64>,
}

impl<T: Scalar> RelevanceTrace<T> {
    pub fn target(&self) -> usize {
        self.target
    }

    /// Sum of the target's pre-softmax scores (the relevance injected at the top).
    pub fn target_score(&self) -> f64 {
        self.target_score
    }

    pub fn entries(&self) -> &[(String, Tensor<T>)] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn top(&self) -> &Tensor<T> {
        &self.entries[0].1
    }

    pub fn pixels(&self) -> &Tensor<T> {
        &self.entries.last().unwrap().1
    }

    /// Total relevance per entry, in the same order as [`Self::entries`].
    pub fn sums(&self) -> &[f64] {
        &self.sums
    }

    pub fn layer_sums(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries
            .iter()
            .map(|(n, _)| n.as_str())
            .zip(self.sums.iter().copied())
    }

    /// Largest relative deviation of any entry's sum from the top relevance.
    pub fn max_conservation_error(&self) -> f64 {
        let top = self.sums[0];
        self.sums
            .iter()
            .map(|s| (s - top).abs() / top.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }

    /// Plain-text table of per-layer relevance sums.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        writeln!(out, "target_class\t{}", self.target).unwrap();
        writeln!(out, "target_score\t{:e}", self.target_score).unwrap();
        writeln!(out, "layer\trelevance_sum\trelative_to_top").unwrap();
        let top = self.sums[0];
        for (name, sum) in self.layer_sums() {
            let rel = if top != 0.0 {
                (sum - top) / top.abs()
            } else {
                0.0
            };
            writeln!(out, "{name}\t{sum:e}\t{rel:e}").unwrap();
        }
        out
    }
}

pub fn lrp<T: Scalar>(
    net: &NetworkDef,
    weights: &WeightStore<T>,
    input: &Tensor<T>,
    target: usize,
    rules: &RuleAssignment,
) -> Result<RelevanceTrace<T>> {
    if target >= net.num_classes() {
        return Err(Error::Argument(format!(
            "target class {target} out of range for {} classes",
            net.num_classes()
        )));
    }
    rules.validate()?;
    let canon = canonicalize_for_lrp(net);
    rules.check_covers(&canon)?;
    let trace = network::forward(&canon, weights, input)?;
    propagate(&canon, weights, &trace, target, rules)
}

fn propagate<T: Scalar>(
    canon: &NetworkDef,
    weights: &WeightStore<T>,
    trace: &ForwardTrace<T>,
    target: usize,
    rules: &RuleAssignment,
) -> Result<RelevanceTrace<T>> {
    let top_index = trace.score_index();
    let mut relevance = mask_top_relevance(trace.scores(), target)?;
    let target_score = relevance.sum_f64();
    let mut entries = vec![(trace.names()[top_index].clone(), relevance.clone())];
    for index in (0..top_index).rev() {
        let layer = &canon.layers()[index];
        let x = &trace.activations()[index];
        relevance = match layer.kind {
            LayerKind::Relu => relevance,
            LayerKind::AvgPool { window, stride } => lrp_linear_rule(
                x,
                LinearLayer::AvgPool(PoolParams { window, stride }),
                &relevance,
                rules.pool_epsilon(),
            )?,
            LayerKind::Conv { .. } => {
                let (kernel, bias) = network::conv_weights(layer, weights)?;
                let params = layer.kind.conv_params().unwrap();
                match rules.get(&layer.name) {
                    Some(Rule::Z { epsilon }) => lrp_linear_rule(
                        x,
                        LinearLayer::Conv {
                            kernel,
                            bias,
                            params,
                        },
                        &relevance,
                        *epsilon,
                    )?,
                    Some(Rule::ZB { epsilon, low, high }) => {
                        lrp_zb_rule(x, kernel, bias, params, &relevance, low, high, *epsilon)?
                    }
                    None => {
                        return Err(Error::Config(format!(
                            "no LRP rule assigned to layer {:?}",
                            layer.name
                        )))
                    }
                }
            }
            LayerKind::MaxPool { .. } | LayerKind::Softmax => {
                return Err(Error::Usage(format!(
                    "layer {:?} should not appear below the scores of a canonicalized network",
                    layer.name
                )))
            }
        };
        entries.push((trace.names()[index].clone(), relevance.clone()));
    }
    let sums = entries.iter().map(|(_, t)| t.sum_f64()).collect();
    Ok(RelevanceTrace {
        target,
        target_score,
        entries,
        sums,
    })
}

/// Channel-summed relevance of one traced activation.
pub fn pool_relevance_channels<T: Scalar>(
    trace: &RelevanceTrace<T>,
    layer_name: &str,
) -> Result<SaliencyMap> {
    let r = trace.get(layer_name).ok_or_else(|| {
        Error::Argument(format!("no relevance recorded for layer {layer_name:?}"))
    })?;
    let (_, h, w) = r.dims3("pool_relevance_channels")?;
    Ok(SaliencyMap::new(
        h,
        w,
        r.channel_sum()?,
        format!("lrp target={}", trace.target),
    )?
    .with_layer(layer_name))
}

/// Pixel relevance summed over the colour channels.
pub fn pixel_relevance<T: Scalar>(trace: &RelevanceTrace<T>) -> Result<SaliencyMap> {
    pool_relevance_channels(trace, network::INPUT)
}

/// One rendered heatmap per traced spatial activation, named `NN_<name>.ppm`.
pub fn render_relevance_layers<T: Scalar>(
    trace: &RelevanceTrace<T>,
    clip_percentile: f64,
) -> Result<Vec<(String, Vec<u8>)>> {
    let mut rendered = Vec::new();
    for (i, (name, r)) in trace.entries().iter().enumerate() {
        if r.rank() != 3 {
            continue;
        }
        let map = pool_relevance_channels(trace, name)?;
        let img = render_heatmap(&map, clip_percentile)?;
        rendered.push((format!("{i:02}_{name}.ppm"), encode_ppm(&img)));
    }
    Ok(rendered)
}

/// Writes [`render_relevance_layers`] output and `summary.txt` into `dir`.
pub fn export_relevance<T: Scalar>(
    trace: &RelevanceTrace<T>,
    dir: &Path,
    clip_percentile: f64,
) -> Result<()> {
    let rendered = render_relevance_layers(trace, clip_percentile)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, bytes) in rendered {
        write_atomic(&dir.join(name), &bytes)?;
    }
    write_atomic(&dir.join("summary.txt"), trace.summary().as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NetworkBuilder;
    use crate::oracle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn mask_keeps_only_target() {
        let s = t(&[2], &[2.0, 5.0]);
        let m = mask_top_relevance(&s, 1).unwrap();
        assert_eq!(m.data(), &[0.0, 5.0]);
        assert_eq!(m.sum_f64(), 5.0);
        let one = t(&[1], &[3.5]);
        assert_eq!(mask_top_relevance(&one, 0).unwrap(), one);
        assert!(mask_top_relevance(&s, 2).is_err());
    }

    #[test]
    fn linear_rule_small_cases() {
        // two inputs feeding one output with weights [1, 1]
        let k = t(&[1, 2, 1, 1], &[1.0, 1.0]);
        let layer = LinearLayer::Conv {
            kernel: &k,
            bias: None,
            params: ConvParams::VALID,
        };
        let r = lrp_linear_rule(
            &t(&[2, 1, 1], &[1.0, 1.0]),
            layer,
            &t(&[1, 1, 1], &[2.0]),
            0.0,
        )
        .unwrap();
        assert_eq!(r.data(), &[1.0, 1.0]);
        let r = lrp_linear_rule(
            &t(&[2, 1, 1], &[2.0, 1.0]),
            layer,
            &t(&[1, 1, 1], &[3.0]),
            0.0,
        )
        .unwrap();
        assert_eq!(r.data(), &[2.0, 1.0]);
    }

    #[test]
    fn zero_denominator_needs_epsilon() {
        let k = t(&[1, 2, 1, 1], &[1.0, -1.0]);
        let layer = LinearLayer::Conv {
            kernel: &k,
            bias: None,
            params: ConvParams::VALID,
        };
        let x = t(&[2, 1, 1], &[1.0, 1.0]);
        let err = lrp_linear_rule(&x, layer, &t(&[1, 1, 1], &[1.0]), 0.0).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
        let r = lrp_linear_rule(&x, layer, &t(&[1, 1, 1], &[1.0]), 1e-6).unwrap();
        assert!(r.all_finite());
        // zero relevance over a zero denominator is simply zero
        let r = lrp_linear_rule(&x, layer, &t(&[1, 1, 1], &[0.0]), 0.0).unwrap();
        assert_eq!(r.data(), &[0.0, 0.0]);
    }

    #[test]
    fn linear_rule_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Tensor::<f64>::from_fn(&[4, 1, 1], |_| rng.gen_range(0.0..1.0));
        let w = Tensor::<f64>::from_fn(&[3, 4], |_| rng.gen_range(-1.0..1.0));
        let r = Tensor::<f64>::from_fn(&[3, 1, 1], |_| rng.gen_range(-1.0..1.0));
        let k = w.clone().reshape(&[3, 4, 1, 1]).unwrap();
        let got = lrp_linear_rule(
            &x,
            LinearLayer::Conv {
                kernel: &k,
                bias: None,
                params: ConvParams::VALID,
            },
            &r,
            0.0,
        )
        .unwrap();
        let want = oracle::lrp_dense_z(x.data(), &w, r.data());
        for (g, w) in got.data().iter().zip(&want) {
            assert!((g - w).abs() <= 1e-10 * w.abs().max(1.0));
        }
    }

    #[test]
    fn zb_small_cases() {
        let k = t(&[1, 1, 1, 1], &[1.0]);
        let r = lrp_zb_rule(
            &t(&[1, 1, 1], &[0.5]),
            &k,
            None,
            ConvParams::VALID,
            &t(&[1, 1, 1], &[0.7]),
            &[0.0],
            &[1.0],
            0.0,
        )
        .unwrap();
        assert!((r.data()[0] - 0.7).abs() < 1e-15);

        let z = lrp_zb_rule(
            &Tensor::zeros(&[1, 2, 2]),
            &t(&[1, 1, 2, 2], &[1.0, -1.0, 0.5, 2.0]),
            None,
            ConvParams::VALID,
            &t(&[1, 1, 1], &[1.0]),
            &[0.0],
            &[0.0],
            1e-6,
        )
        .unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));

        let bad = lrp_zb_rule(
            &t(&[1, 1, 1], &[2.0]),
            &k,
            None,
            ConvParams::VALID,
            &t(&[1, 1, 1], &[1.0]),
            &[0.0],
            &[1.0],
            0.0,
        );
        assert!(matches!(bad, Err(Error::Argument(_))));
    }

    #[test]
    fn zb_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (low, high) = (-1.0, 2.0);
        let a: Vec<f64> = (0..3).map(|_| rng.gen_range(low..high)).collect();
        let w = Tensor::<f64>::from_fn(&[2, 3], |_| rng.gen_range(-1.0..1.0));
        let r: Vec<f64> = (0..2).map(|_| rng.gen_range(0.0..1.0)).collect();
        let got = lrp_zb_rule(
            &t(&[3, 1, 1], &a),
            &w.clone().reshape(&[2, 3, 1, 1]).unwrap(),
            None,
            ConvParams::VALID,
            &t(&[2, 1, 1], &r),
            &[low; 3],
            &[high; 3],
            0.0,
        )
        .unwrap();
        let want = oracle::lrp_dense_zb(&a, &w, &r, &[low; 3], &[high; 3]);
        for (g, w) in got.data().iter().zip(&want) {
            assert!((g - w).abs() <= 1e-10 * w.abs().max(1.0));
        }
    }

    #[test]
    fn canonicalization_swaps_only_max_pools() {
        let plain = NetworkBuilder::new([1, 2, 2])
            .conv("c", 2, 1, ConvParams::VALID, false)
            .build(vec!["a".into(), "b".into()])
            .unwrap();
        assert_eq!(canonicalize_for_lrp(&plain), plain);

        let vgg = network::build_vgg16(2, vec!["a".into(), "b".into()]).unwrap();
        let canon = canonicalize_for_lrp(&vgg);
        let swapped = vgg
            .layers()
            .iter()
            .zip(canon.layers())
            .filter(|(a, b)| a.kind != b.kind)
            .inspect(|(a, b)| {
                assert!(matches!(a.kind, LayerKind::MaxPool { .. }));
                assert!(matches!(b.kind, LayerKind::AvgPool { .. }));
            })
            .count();
        assert_eq!(swapped, 5);
        assert_eq!(
            vgg.infer_shapes([3, 224, 224]).unwrap(),
            canon.infer_shapes([3, 224, 224]).unwrap()
        );
    }

    #[test]
    fn identity_net_passes_score_to_pixel() {
        let net = NetworkBuilder::new([1, 1, 1])
            .conv("c", 1, 1, ConvParams::VALID, false)
            .build(vec!["only".into()])
            .unwrap();
        let mut w = WeightStore::<f64>::new("identity");
        w.insert("c", t(&[1, 1, 1, 1], &[1.0]), None);
        let x = t(&[1, 1, 1], &[0.8]);
        let trace = lrp(&net, &w, &x, 0, &RuleAssignment::uniform(&net, 0.0)).unwrap();
        assert_eq!(trace.pixels().data(), &[0.8]);
        assert_eq!(trace.top().data(), &[0.8]);
    }

    #[test]
    fn missing_rule_is_configuration_error() {
        let net = NetworkBuilder::new([1, 1, 1])
            .conv("c", 1, 1, ConvParams::VALID, false)
            .build(vec!["only".into()])
            .unwrap();
        let w = WeightStore::<f64>::random(&net, 0);
        let err = lrp(
            &net,
            &w,
            &t(&[1, 1, 1], &[1.0]),
            0,
            &RuleAssignment::empty(0.0),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn channel_pooling() {
        let net = NetworkBuilder::new([2, 2, 2])
            .conv("c", 1, 2, ConvParams::VALID, false)
            .build(vec!["x".into()])
            .unwrap();
        let mut w = WeightStore::<f64>::new("t");
        w.insert(
            "c",
            t(&[1, 2, 2, 2], &[1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0]),
            None,
        );
        let x = t(&[2, 2, 2], &[1.0, 2.0, 3.0, 4.0, 1.0, 2.0, 3.0, 4.0]);
        let trace = lrp(&net, &w, &x, 0, &RuleAssignment::uniform(&net, 1e-9)).unwrap();
        let map = pixel_relevance(&trace).unwrap();
        assert_eq!((map.height(), map.width()), (2, 2));
        assert!(map.values().iter().all(|v| v.abs() < 1e-12));
    }
}
