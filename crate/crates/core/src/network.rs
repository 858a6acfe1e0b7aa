//! Layer graphs, the VGG-16 builder, forward tracing and input/activation gradients.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops::{self, ConvParams, PoolParams};
use crate::tensor::{Scalar, Tensor};
use crate::weights::WeightStore;

/// Name of the pseudo-layer holding the network input in traces.
pub const INPUT: &str = "input";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerKind {
    Conv {
        /// `[Cout, Cin, kh, kw]`
        kernel: [usize; 4],
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
        #[serde(default)]
        bias: bool,
    },
    MaxPool {
        #[serde(default = "two")]
        window: usize,
        #[serde(default = "two")]
        stride: usize,
    },
    AvgPool {
        #[serde(default = "two")]
        window: usize,
        #[serde(default = "two")]
        stride: usize,
    },
    Relu,
    Softmax,
}

fn one() -> usize {
    1
}

fn two() -> usize {
    2
}

impl LayerKind {
    pub fn conv_params(&self) -> Option<ConvParams> {
        match *self {
            LayerKind::Conv {
                stride, padding, ..
            } => Some(ConvParams::new(stride, padding)),
            _ => None,
        }
    }

    pub fn pool_params(&self) -> Option<PoolParams> {
        match *self {
            LayerKind::MaxPool { window, stride } | LayerKind::AvgPool { window, stride } => {
                Some(PoolParams { window, stride })
            }
            _ => None,
        }
    }

    pub fn is_conv(&self) -> bool {
        matches!(self, LayerKind::Conv { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            LayerKind::Conv { .. } => "conv",
            LayerKind::MaxPool { .. } => "maxpool",
            LayerKind::AvgPool { .. } => "avgpool",
            LayerKind::Relu => "relu",
            LayerKind::Softmax => "softmax",
        }
    }

    /// Output shape for a given input shape.
    pub fn output_shape(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let [c, h, w] = input;
        match *self {
            LayerKind::Conv { kernel, .. } => {
                let params = self.conv_params().unwrap();
                if kernel[1] != c {
                    return Err(Error::dim("conv", "input channels", kernel[1], c));
                }
                let oh = ops::conv_extent(h, kernel[2], params)
                    .ok_or_else(|| Error::dim("conv", "height", format!(">= {}", kernel[2]), h))?;
                let ow = ops::conv_extent(w, kernel[3], params)
                    .ok_or_else(|| Error::dim("conv", "width", format!(">= {}", kernel[3]), w))?;
                Ok([kernel[0], oh, ow])
            }
            LayerKind::MaxPool { .. } | LayerKind::AvgPool { .. } => {
                let params = self.pool_params().unwrap();
                let oh = ops::pool_extent(h, params)
                    .ok_or_else(|| Error::dim("pool", "height", "window tiling", h))?;
                let ow = ops::pool_extent(w, params)
                    .ok_or_else(|| Error::dim("pool", "width", "window tiling", w))?;
                Ok([c, oh, ow])
            }
            LayerKind::Relu | LayerKind::Softmax => Ok(input),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: LayerKind,
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, kind: LayerKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }
}

/// An ordered, shape-checked stack of layers plus its class manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkDef {
    layers: Vec<LayerSpec>,
    input_shape: [usize; 3],
    classes: Vec<String>,
}

impl NetworkDef {
    pub fn new(
        layers: Vec<LayerSpec>,
        input_shape: [usize; 3],
        classes: Vec<String>,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network has no layers".into()));
        }
        if classes.is_empty() {
            return Err(Error::Argument("class manifest is empty".into()));
        }
        let mut seen = HashSet::new();
        for (i, layer) in layers.iter().enumerate() {
            if layer.name.is_empty() || layer.name == INPUT {
                return Err(Error::Config(format!(
                    "layer {i}: name {:?} is reserved or empty",
                    layer.name
                )));
            }
            if !seen.insert(layer.name.as_str()) {
                return Err(Error::Config(format!(
                    "duplicate layer name {:?}",
                    layer.name
                )));
            }
            if layer.kind == LayerKind::Softmax && i + 1 != layers.len() {
                return Err(Error::Config(format!(
                    "softmax layer {:?} must be the last layer",
                    layer.name
                )));
            }
        }
        let net = Self {
            layers,
            input_shape,
            classes,
        };
        let shapes = net.infer_shapes(input_shape)?;
        let out_channels = shapes.last().unwrap()[0];
        if out_channels != net.classes.len() {
            return Err(Error::dim(
                "NetworkDef",
                "output channels vs class manifest",
                net.classes.len(),
                out_channels,
            ));
        }
        Ok(net)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    /// Activation index for a layer name; `"input"` is index 0 and layer `k`
    /// produces activation `k + 1`.
    pub fn activation_index(&self, name: &str) -> Option<usize> {
        if name == INPUT {
            Some(0)
        } else {
            self.layer_index(name).map(|i| i + 1)
        }
    }

    /// Index of the pre-softmax score activation.
    pub fn score_index(&self) -> usize {
        match self.layers.last() {
            Some(l) if l.kind == LayerKind::Softmax => self.layers.len() - 1,
            _ => self.layers.len(),
        }
    }

    /// Activation shapes for an input of the given shape, input first.
    pub fn infer_shapes(&self, input: [usize; 3]) -> Result<Vec<[usize; 3]>> {
        let mut shapes = Vec::with_capacity(self.layers.len() + 1);
        shapes.push(input);
        for layer in &self.layers {
            let next = layer
                .kind
                .output_shape(*shapes.last().unwrap())
                .map_err(|e| annotate(e, &layer.name))?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l.kind {
                LayerKind::Conv { kernel, bias, .. } => {
                    kernel.iter().product::<usize>() + if bias { kernel[0] } else { 0 }
                }
                _ => 0,
            })
            .sum()
    }

    pub fn conv_layers(&self) -> impl Iterator<Item = &LayerSpec> {
        self.layers.iter().filter(|l| l.kind.is_conv())
    }

    /// Same network with each layer kind rewritten by `f`.
    pub fn map_layers(&self, f: impl Fn(&LayerSpec) -> LayerKind) -> Result<NetworkDef> {
        let layers = self
            .layers
            .iter()
            .map(|l| LayerSpec::new(l.name.clone(), f(l)))
            .collect();
        NetworkDef::new(layers, self.input_shape, self.classes.clone())
    }

    /// The sub-network consuming the output of `name`.
    pub fn tail_after(&self, name: &str) -> Result<NetworkDef> {
        let idx = self
            .activation_index(name)
            .ok_or_else(|| Error::Argument(format!("unknown layer {name:?}")))?;
        if idx >= self.layers.len() {
            return Err(Error::Argument(format!("no layers follow {name:?}")));
        }
        let shapes = self.infer_shapes(self.input_shape)?;
        NetworkDef::new(
            self.layers[idx..].to_vec(),
            shapes[idx],
            self.classes.clone(),
        )
    }
}

fn annotate(err: Error, layer: &str) -> Error {
    match err {
        Error::Dimension {
            op,
            axis,
            expected,
            actual,
        } => Error::Dimension {
            op,
            axis: format!("{axis} (layer {layer})"),
            expected,
            actual,
        },
        other => other,
    }
}

/// Incremental construction of a [`NetworkDef`], tracking channel counts.
#[derive(Debug, Clone)]
pub struct NetworkBuilder {
    input_shape: [usize; 3],
    channels: usize,
    layers: Vec<LayerSpec>,
}

impl NetworkBuilder {
    pub fn new(input_shape: [usize; 3]) -> Self {
        Self {
            input_shape,
            channels: input_shape[0],
            layers: Vec::new(),
        }
    }

    pub fn conv(
        mut self,
        name: &str,
        out_channels: usize,
        kernel: usize,
        params: ConvParams,
        bias: bool,
    ) -> Self {
        self.layers.push(LayerSpec::new(
            name,
            LayerKind::Conv {
                kernel: [out_channels, self.channels, kernel, kernel],
                stride: params.stride,
                padding: params.padding,
                bias,
            },
        ));
        self.channels = out_channels;
        self
    }

    pub fn relu(mut self, name: &str) -> Self {
        self.layers.push(LayerSpec::new(name, LayerKind::Relu));
        self
    }

    pub fn maxpool(mut self, name: &str) -> Self {
        let PoolParams { window, stride } = PoolParams::VGG;
        self.layers
            .push(LayerSpec::new(name, LayerKind::MaxPool { window, stride }));
        self
    }

    pub fn avgpool(mut self, name: &str) -> Self {
        let PoolParams { window, stride } = PoolParams::VGG;
        self.layers
            .push(LayerSpec::new(name, LayerKind::AvgPool { window, stride }));
        self
    }

    pub fn softmax(mut self, name: &str) -> Self {
        self.layers.push(LayerSpec::new(name, LayerKind::Softmax));
        self
    }

    pub fn build(self, classes: Vec<String>) -> Result<NetworkDef> {
        NetworkDef::new(self.layers, self.input_shape, classes)
    }
}

/// VGG-16 with its three dense layers already converted to convolutions:
/// fc6 is a 7x7 valid convolution over the 512x7x7 pool5 output, fc7 and fc8
/// are 1x1 convolutions.
pub fn build_vgg16(num_classes: usize, manifest: Vec<String>) -> Result<NetworkDef> {
    if num_classes < 1 {
        return Err(Error::Argument("num_classes must be at least 1".into()));
    }
    if manifest.len() != num_classes {
        return Err(Error::Argument(format!(
            "class manifest has {} labels for {num_classes} classes",
            manifest.len()
        )));
    }
    const BLOCKS: [&[usize]; 5] = [
        &[64, 64],
        &[128, 128],
        &[256, 256, 256],
        &[512, 512, 512],
        &[512, 512, 512],
    ];
    let mut b = NetworkBuilder::new([3, 224, 224]);
    for (bi, widths) in BLOCKS.iter().enumerate() {
        for (ci, &width) in widths.iter().enumerate() {
            let tag = format!("{}_{}", bi + 1, ci + 1);
            b = b
                .conv(&format!("conv{tag}"), width, 3, ConvParams::VGG, true)
                .relu(&format!("relu{tag}"));
        }
        b = b.maxpool(&format!("pool{}", bi + 1));
    }
    b.conv("fc6", 4096, 7, ConvParams::VALID, true)
        .relu("relu6")
        .conv("fc7", 4096, 1, ConvParams::VALID, true)
        .relu("relu7")
        .conv("fc8", num_classes, 1, ConvParams::VALID, true)
        .softmax("prob")
        .build(manifest)
}

/// Rewrites a dense `[out, in]` weight matrix as a valid convolution over an
/// input of exactly `input_shape`, producing a 1x1 spatial output.
pub fn densify_to_conv<T: Scalar>(
    name: &str,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    input_shape: [usize; 3],
) -> Result<(LayerSpec, Tensor<T>)> {
    let (out, inputs) = match weight.shape() {
        &[o, i] => (o, i),
        s => return Err(Error::dim("densify_to_conv", "rank", 2, s.len())),
    };
    let [c, h, w] = input_shape;
    if inputs != c * h * w {
        return Err(Error::dim(
            "densify_to_conv",
            "input features",
            format!("{} (= {c}x{h}x{w})", c * h * w),
            inputs,
        ));
    }
    if let Some(b) = bias {
        if b.len() != out {
            return Err(Error::dim("densify_to_conv", "bias length", out, b.len()));
        }
    }
    let kernel = weight.clone().reshape(&[out, c, h, w])?;
    let spec = LayerSpec::new(
        name,
        LayerKind::Conv {
            kernel: [out, c, h, w],
            stride: 1,
            padding: 0,
            bias: bias.is_some(),
        },
    );
    Ok((spec, kernel))
}

/// Every activation of one forward pass, input first.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T = f32> {
    names: Vec<String>,
    activations: Vec<Tensor<T>>,
    /// Saved argmax routing for max-pool layers, indexed by layer.
    argmax: Vec<Option<Vec<usize>>>,
    score_index: usize,
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn len(&self) -> usize {
        self.activations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.activations.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn activations(&self) -> &[Tensor<T>] {
        &self.activations
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.activations)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.activations[i])
    }

    /// Pre-softmax class scores.
    pub fn scores(&self) -> &Tensor<T> {
        &self.activations[self.score_index]
    }

    pub fn score_index(&self) -> usize {
        self.score_index
    }

    /// Final activation (softmax probabilities when the net ends in softmax).
    pub fn output(&self) -> &Tensor<T> {
        self.activations.last().unwrap()
    }

    fn argmax(&self, layer: usize) -> Option<&[usize]> {
        self.argmax.get(layer).and_then(|a| a.as_deref())
    }
}

fn check_input<T: Scalar>(net: &NetworkDef, input: &Tensor<T>) -> Result<()> {
    let (c, h, w) = input.dims3("forward")?;
    let [dc, dh, dw] = net.input_shape();
    if c != dc {
        return Err(Error::dim("forward", "input channels", dc, c));
    }
    if h < dh || w < dw {
        return Err(Error::dim(
            "forward",
            "input spatial size",
            format!("at least {dh}x{dw}"),
            format!("{h}x{w}"),
        ));
    }
    Ok(())
}

pub(crate) fn conv_weights<'a, T: Scalar>(
    layer: &LayerSpec,
    weights: &'a WeightStore<T>,
) -> Result<(&'a Tensor<T>, Option<&'a Tensor<T>>)> {
    let LayerKind::Conv { kernel, bias, .. } = layer.kind else {
        return Err(Error::Usage(format!("{} is not a conv layer", layer.name)));
    };
    let entry = weights
        .get(&layer.name)
        .ok_or_else(|| Error::WeightStore(format!("no weights for conv layer {:?}", layer.name)))?;
    if entry.kernel.shape() != kernel {
        return Err(Error::WeightStore(format!(
            "layer {:?}: kernel shape {:?} does not match definition {:?}",
            layer.name,
            entry.kernel.shape(),
            kernel
        )));
    }
    match (&entry.bias, bias) {
        (Some(b), true) if b.len() == kernel[0] => {}
        (None, false) => {}
        (b, _) => {
            return Err(Error::WeightStore(format!(
                "layer {:?}: bias {} does not match definition (bias = {bias}, {} channels)",
                layer.name,
                b.as_ref()
                    .map_or("absent".to_string(), |b| format!("of length {}", b.len())),
                kernel[0]
            )))
        }
    }
    Ok((&entry.kernel, entry.bias.as_ref()))
}

/// Runs one layer forward, returning the output and max-pool routing if any.
pub(crate) fn layer_forward<T: Scalar>(
    layer: &LayerSpec,
    weights: &WeightStore<T>,
    x: &Tensor<T>,
) -> Result<(Tensor<T>, Option<Vec<usize>>)> {
    let out = match layer.kind {
        LayerKind::Conv { .. } => {
            let (k, b) = conv_weights(layer, weights)?;
            (
                ops::conv2d(x, k, b, layer.kind.conv_params().unwrap())?,
                None,
            )
        }
        LayerKind::MaxPool { .. } => {
            let (y, arg) = ops::maxpool2d(x, layer.kind.pool_params().unwrap())?;
            (y, Some(arg))
        }
        LayerKind::AvgPool { .. } => (ops::avgpool2d(x, layer.kind.pool_params().unwrap())?, None),
        LayerKind::Relu => (ops::relu(x), None),
        LayerKind::Softmax => (ops::softmax_channels(x)?, None),
    };
    Ok(out)
}

pub fn forward<T: Scalar>(
    net: &NetworkDef,
    weights: &WeightStore<T>,
    input: &Tensor<T>,
) -> Result<ForwardTrace<T>> {
    check_input(net, input)?;
    let mut names = Vec::with_capacity(net.layers().len() + 1);
    let mut activations = Vec::with_capacity(net.layers().len() + 1);
    let mut argmax = Vec::with_capacity(net.layers().len());
    names.push(INPUT.to_string());
    activations.push(input.clone());
    for layer in net.layers() {
        let (y, arg) = layer_forward(layer, weights, activations.last().unwrap())
            .map_err(|e| annotate(e, &layer.name))?;
        names.push(layer.name.clone());
        activations.push(y);
        argmax.push(arg);
    }
    Ok(ForwardTrace {
        names,
        activations,
        argmax,
        score_index: net.score_index(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub index: usize,
    pub label: String,
    /// Pre-softmax score, averaged over spatial positions for larger inputs.
    pub score: f64,
    pub probability: f64,
}

/// Per-class scores from a `[K, H, W]` score map (spatial mean).
pub fn class_scores<T: Scalar>(scores: &Tensor<T>) -> Result<Vec<f64>> {
    let (k, h, w) = scores.dims3("class_scores")?;
    let plane = h * w;
    Ok((0..k)
        .map(|c| {
            let s = scores.data()[c * plane..(c + 1) * plane]
                .iter()
                .fold(0.0, |acc, v| acc + v.as_f64());
            s / plane as f64
        })
        .collect())
}

/// Ranks classes by score, descending, ties by ascending index.
pub fn rank_scores(classes: &[String], scores: &[f64], top_k: usize) -> Result<Vec<Prediction>> {
    if top_k < 1 || top_k > scores.len() {
        return Err(Error::Argument(format!(
            "top_k must be in 1..={}, got {top_k}",
            scores.len()
        )));
    }
    let probs = ops::softmax(&Tensor::new(vec![scores.len()], scores.to_vec())?);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    Ok(order
        .into_iter()
        .take(top_k)
        .map(|i| Prediction {
            index: i,
            label: classes[i].clone(),
            score: scores[i],
            probability: probs.data()[i],
        })
        .collect())
}

pub fn classify<T: Scalar>(
    net: &NetworkDef,
    weights: &WeightStore<T>,
    input: &Tensor<T>,
    top_k: usize,
) -> Result<Vec<Prediction>> {
    if top_k < 1 || top_k > net.num_classes() {
        return Err(Error::Argument(format!(
            "top_k must be in 1..={}, got {top_k}",
            net.num_classes()
        )));
    }
    let trace = forward(net, weights, input)?;
    rank_scores(net.classes(), &class_scores(trace.scores())?, top_k)
}

/// One-hot seed over the target channel of a score map (every spatial position).
pub fn score_seed<T: Scalar>(scores: &Tensor<T>, target: usize) -> Result<Tensor<T>> {
    let (k, h, w) = scores.dims3("score_seed")?;
    if target >= k {
        return Err(Error::Argument(format!(
            "target class {target} out of range for {k} classes"
        )));
    }
    let plane = h * w;
    Ok(Tensor::from_fn(&[k, h, w], |i| {
        if i / plane == target {
            T::one()
        } else {
            T::zero()
        }
    }))
}

/// Vector-Jacobian product through layer `index` of `net`.
pub fn layer_vjp<T: Scalar>(
    net: &NetworkDef,
    weights: &WeightStore<T>,
    trace: &ForwardTrace<T>,
    index: usize,
    upstream: &Tensor<T>,
) -> Result<Tensor<T>> {
    let layer = &net.layers()[index];
    let x = trace
        .activations
        .get(index)
        .ok_or_else(|| Error::Usage(format!("no forward context for layer {:?}", layer.name)))?;
    let y_shape = trace.activations[index + 1].shape();
    upstream.expect_shape(y_shape, "layer_vjp upstream")?;
    let (c, h, w) = x.dims3("layer_vjp")?;
    match layer.kind {
        LayerKind::Conv { .. } => {
            let (k, _) = conv_weights(layer, weights)?;
            ops::conv2d_vjp(k, layer.kind.conv_params().unwrap(), [c, h, w], upstream)
        }
        LayerKind::MaxPool { .. } => {
            let arg = trace.argmax(index).ok_or_else(|| {
                Error::Usage(format!(
                    "missing max-pool routing for layer {:?}; trace was not produced by this network",
                    layer.name
                ))
            })?;
            ops::maxpool2d_vjp(arg, [c, h, w], upstream)
        }
        LayerKind::AvgPool { .. } => {
            ops::avgpool2d_vjp(layer.kind.pool_params().unwrap(), [c, h, w], upstream)
        }
        LayerKind::Relu => ops::relu_vjp(x, upstream),
        LayerKind::Softmax => Err(Error::Usage(
            "gradients are taken of pre-softmax scores; softmax has no vjp here".into(),
        )),
    }
}

/// Chains layer vjps from activation `from` (seeded with `seed`) down to activation `to`.
pub fn backward<T: Scalar>(
    net: &NetworkDef,
    weights: &WeightStore<T>,
    trace: &ForwardTrace<T>,
    seed: Tensor<T>,
    from: usize,
    to: usize,
) -> Result<Tensor<T>> {
    if trace.len() != net.layers().len() + 1
        || trace.names[1..]
            .iter()
            .zip(net.layers())
            .any(|(n, l)| *n != l.name)
    {
        return Err(Error::Usage(
            "forward trace does not belong to this network".into(),
        ));
    }
    if to > from || from >= trace.len() {
        return Err(Error::Usage(format!(
            "invalid backward range {from} -> {to}"
        )));
    }
    let mut grad = seed;
    for index in (to..from).rev() {
        grad = layer_vjp(net, weights, trace, index, &grad)
            .map_err(|e| annotate(e, &net.layers()[index].name))?;
    }
    Ok(grad)
}

/// Gradient of the target pre-softmax score with respect to the input.
pub fn input_gradient<T: Scalar>(
    net: &NetworkDef,
    weights: &WeightStore<T>,
    input: &Tensor<T>,
    target: usize,
) -> Result<Tensor<T>> {
    activation_gradient(net, weights, input, target, INPUT)
}

/// Gradient of the target pre-softmax score with respect to the output of `layer_name`.
pub fn activation_gradient<T: Scalar>(
    net: &NetworkDef,
    weights: &WeightStore<T>,
    input: &Tensor<T>,
    target: usize,
    layer_name: &str,
) -> Result<Tensor<T>> {
    if target >= net.num_classes() {
        return Err(Error::Argument(format!(
            "target class {target} out of range for {} classes",
            net.num_classes()
        )));
    }
    let to = net
        .activation_index(layer_name)
        .ok_or_else(|| Error::Argument(format!("unknown layer {layer_name:?}")))?;
    let from = net.score_index();
    if to > from {
        return Err(Error::Argument(format!(
            "layer {layer_name:?} lies above the class scores"
        )));
    }
    let trace = forward(net, weights, input)?;
    let seed = score_seed(trace.scores(), target)?;
    backward(net, weights, &trace, seed, from, to)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn vgg16_structure() {
        let net = build_vgg16(1000, labels(1000)).unwrap();
        assert_eq!(net.conv_layers().count(), 16);
        let shapes = net.infer_shapes([3, 224, 224]).unwrap();
        let pooled: Vec<usize> = net
            .layers()
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l.kind, LayerKind::MaxPool { .. }))
            .map(|(i, _)| shapes[i + 1][1])
            .collect();
        assert_eq!(pooled, vec![112, 56, 28, 14, 7]);
        let fc: Vec<usize> = ["fc6", "fc7", "fc8"]
            .iter()
            .map(|n| shapes[net.activation_index(n).unwrap()][0])
            .collect();
        assert_eq!(fc, vec![4096, 4096, 1000]);
        assert_eq!(shapes.last().unwrap(), &[1000, 1, 1]);
        assert_eq!(net.parameter_count(), 138_357_544);
    }

    #[test]
    fn vgg16_is_fully_convolutional() {
        let net = build_vgg16(2, labels(2)).unwrap();
        let shapes = net.infer_shapes([3, 256, 256]).unwrap();
        assert_eq!(shapes[net.score_index()], [2, 2, 2]);
    }

    #[test]
    fn vgg16_rejects_bad_class_count() {
        assert!(matches!(build_vgg16(0, vec![]), Err(Error::Argument(_))));
        assert!(build_vgg16(2, labels(3)).is_err());
    }

    #[test]
    fn definition_validation() {
        let dup = NetworkBuilder::new([1, 2, 2])
            .conv("a", 1, 1, ConvParams::VALID, false)
            .relu("a")
            .build(labels(1));
        assert!(matches!(dup, Err(Error::Config(_))));

        let wrong_classes = NetworkBuilder::new([1, 2, 2])
            .conv("a", 3, 1, ConvParams::VALID, false)
            .build(labels(2));
        assert!(wrong_classes.is_err());

        let mid_softmax = NetworkBuilder::new([1, 2, 2])
            .softmax("s")
            .conv("a", 1, 1, ConvParams::VALID, false)
            .build(labels(1));
        assert!(mid_softmax.is_err());
    }

    #[test]
    fn densify_scalar_and_mismatch() {
        let w = Tensor::<f32>::new(vec![1, 1], vec![5.0]).unwrap();
        let (spec, k) = densify_to_conv("fc", &w, None, [1, 1, 1]).unwrap();
        assert_eq!(k.shape(), &[1, 1, 1, 1]);
        assert_eq!(k.data(), &[5.0]);
        assert!(spec.kind.is_conv());
        let x = Tensor::new(vec![1, 1, 1], vec![3.0]).unwrap();
        let y = ops::conv2d(&x, &k, None, spec.kind.conv_params().unwrap()).unwrap();
        assert_eq!(y.data(), &[15.0]);

        let w = Tensor::<f32>::zeros(&[4096, 25088]);
        let (_, k) = densify_to_conv("fc6", &w, None, [512, 7, 7]).unwrap();
        assert_eq!(k.shape(), &[4096, 512, 7, 7]);

        let w = Tensor::<f32>::zeros(&[3, 11]);
        assert!(matches!(
            densify_to_conv("fc", &w, None, [3, 2, 2]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn rank_scores_orders_and_breaks_ties() {
        let classes = vec!["nonsmoking".to_string(), "smoking".to_string()];
        let top = rank_scores(&classes, &[0.1, 0.9], 1).unwrap();
        assert_eq!(top[0].label, "smoking");
        assert_eq!(top[0].score, 0.9);
        let e = (0.9f64 - 0.1).exp();
        assert!((top[0].probability - e / (1.0 + e)).abs() < 1e-12);

        let tied = rank_scores(&classes, &[0.3, 0.3], 2).unwrap();
        assert_eq!(tied[0].index, 0);
        assert_eq!(tied[1].index, 1);

        assert!(rank_scores(&classes, &[0.0, 1.0], 0).is_err());
        assert!(rank_scores(&classes, &[0.0, 1.0], 3).is_err());
    }
}
