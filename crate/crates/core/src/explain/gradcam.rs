use crate::error::{Error, Result};
use crate::network::{self, LayerKind, NetworkDef};
use crate::saliency::SaliencyMap;
use crate::tensor::{Scalar, Tensor};
use crate::weights::WeightStore;

/// Activations of one conv layer and the target score's gradient at them.
#[derive(Debug, Clone)]
pub struct GradCamContext<T = f32> {
    layer: String,
    activations: Tensor<T>,
    gradients: Tensor<T>,
    spatial: usize,
}

impl<T: Scalar> GradCamContext<T> {
    pub fn new(
        layer: impl Into<String>,
        activations: Tensor<T>,
        gradients: Tensor<T>,
    ) -> Result<Self> {
        let (_, h, w) = activations.dims3("GradCamContext")?;
        gradients.expect_shape(activations.shape(), "GradCamContext gradients")?;
        Ok(Self {
            layer: layer.into(),
            activations,
            gradients,
            spatial: h * w,
        })
    }

    pub fn layer(&self) -> &str {
        &self.layer
    }

    pub fn activations(&self) -> &Tensor<T> {
        &self.activations
    }

    pub fn gradients(&self) -> &Tensor<T> {
        &self.gradients
    }

    pub fn spatial(&self) -> usize {
        self.spatial
    }

    /// Channel importances: the spatial mean of each gradient plane.
    pub fn channel_weights(&self) -> Vec<f64> {
        self.gradients
            .data()
            .chunks(self.spatial)
            .map(|plane| plane.iter().map(|g| g.as_f64()).sum::<f64>() / self.spatial as f64)
            .collect()
    }

    /// ReLU of the importance-weighted channel sum of the activations.
    pub fn map(&self, provenance: impl Into<String>) -> Result<SaliencyMap> {
        let (_, h, w) = self.activations.dims3("grad_cam")?;
        let mut values = vec![0.0; self.spatial];
        for (alpha, plane) in self
            .channel_weights()
            .iter()
            .zip(self.activations.data().chunks(self.spatial))
        {
            for (v, a) in values.iter_mut().zip(plane) {
                *v += alpha * a.as_f64();
            }
        }
        for v in &mut values {
            *v = v.max(0.0);
        }
        Ok(SaliencyMap::new(h, w, values, provenance)?.with_layer(self.layer.clone()))
    }
}

/// The deepest convolution before the last pooling layer (the start of the
/// classifier stage), or the last convolution if the network never pools.
pub fn default_gradcam_layer(net: &NetworkDef) -> Result<&str> {
    let layers = net.layers();
    let last_pool = layers
        .iter()
        .rposition(|l| {
            matches!(
                l.kind,
                LayerKind::MaxPool { .. } | LayerKind::AvgPool { .. }
            )
        })
        .unwrap_or(layers.len());
    layers[..last_pool]
        .iter()
        .rev()
        .find(|l| l.kind.is_conv())
        .map(|l| l.name.as_str())
        .ok_or_else(|| Error::Config("network has no convolution for Grad-CAM".into()))
}

pub fn gradcam_context<T: Scalar>(
    net: &NetworkDef,
    weights: &WeightStore<T>,
    input: &Tensor<T>,
    target: usize,
    layer_name: &str,
) -> Result<GradCamContext<T>> {
    let index = net
        .layer_index(layer_name)
        .ok_or_else(|| Error::Config(format!("Grad-CAM layer {layer_name:?} does not exist")))?;
    if !net.layers()[index].kind.is_conv() {
        return Err(Error::Config(format!(
            "Grad-CAM layer {layer_name:?} is a {} layer, not a convolution",
            net.layers()[index].kind.label()
        )));
    }
    if target >= net.num_classes() {
        return Err(Error::Argument(format!(
            "target class {target} out of range for {} classes",
            net.num_classes()
        )));
    }
    let trace = network::forward(net, weights, input)?;
    let seed = network::score_seed(trace.scores(), target)?;
    let to = index + 1;
    let gradients = network::backward(net, weights, &trace, seed, trace.score_index(), to)?;
    GradCamContext::new(layer_name, trace.activations()[to].clone(), gradients)
}

pub fn grad_cam<T: Scalar>(
    net: &NetworkDef,
    weights: &WeightStore<T>,
    input: &Tensor<T>,
    target: usize,
    layer_name: &str,
) -> Result<SaliencyMap> {
    gradcam_context(net, weights, input, target, layer_name)?
        .map(format!("gradcam layer={layer_name} target={target}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_vgg16, NetworkBuilder};
    use crate::ops::ConvParams;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn single_map_constant_gradient() {
        let a = t(&[1, 2, 2], &[1.0, -2.0, 3.0, 0.5]);
        let ctx = GradCamContext::new("c", a, Tensor::full(&[1, 2, 2], 0.5)).unwrap();
        assert_eq!(ctx.channel_weights(), vec![0.5]);
        assert_eq!(ctx.map("x").unwrap().values(), &[0.5, 0.0, 1.5, 0.25]);
    }

    #[test]
    fn opposing_channels_cancel() {
        let a = t(&[2, 1, 2], &[2.0, 4.0, 2.0, 4.0]);
        let g = t(&[2, 1, 2], &[1.0, 1.0, -1.0, -1.0]);
        let ctx = GradCamContext::new("c", a, g).unwrap();
        assert!(ctx.map("x").unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mismatched_context_is_rejected() {
        assert!(GradCamContext::new(
            "c",
            Tensor::<f64>::zeros(&[1, 2, 2]),
            Tensor::zeros(&[1, 2, 1])
        )
        .is_err());
    }

    #[test]
    fn default_layer_and_non_conv_rejection() {
        let vgg = build_vgg16(2, vec!["a".into(), "b".into()]).unwrap();
        assert_eq!(default_gradcam_layer(&vgg).unwrap(), "conv5_3");
        let net = NetworkBuilder::new([1, 4, 4])
            .conv("c1", 2, 3, ConvParams::VGG, true)
            .relu("r1")
            .conv("c2", 1, 4, ConvParams::VALID, true)
            .build(vec!["x".into()])
            .unwrap();
        assert_eq!(default_gradcam_layer(&net).unwrap(), "c2");
        let w = WeightStore::<f64>::random(&net, 1);
        let x = Tensor::full(&[1, 4, 4], 0.3);
        assert!(matches!(
            grad_cam(&net, &w, &x, 0, "r1"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            grad_cam(&net, &w, &x, 0, "nope"),
            Err(Error::Config(_))
        ));
        let m = grad_cam(&net, &w, &x, 0, "c1").unwrap();
        assert_eq!((m.height(), m.width()), (4, 4));
        assert!(m.values().iter().all(|&v| v >= 0.0));
    }
}
