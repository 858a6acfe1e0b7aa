use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::NormalizationSpec;
use crate::network::{self, NetworkDef};
use crate::saliency::SaliencyMap;
use crate::tensor::{Scalar, Tensor};
use crate::weights::WeightStore;

pub const DEFAULT_SAMPLES: usize = 25;
pub const DEFAULT_SIGMA_FRACTION: f64 = 0.15;

/// Default noise level: a fixed fraction of the normalised pixel range,
/// averaged over channels.
pub fn default_sigma(norm: &NormalizationSpec) -> f64 {
    let (lo, hi) = (norm.lower_bounds(), norm.upper_bounds());
    let mean_range = lo.iter().zip(&hi).map(|(l, h)| h - l).sum::<f64>() / 3.0;
    DEFAULT_SIGMA_FRACTION * mean_range
}

/// Mean input gradient over `samples` copies of the input with Gaussian
/// noise of standard deviation `sigma`, summed over channels.
pub fn smoothgrad<T: Scalar>(
    net: &NetworkDef,
    weights: &WeightStore<T>,
    input: &Tensor<T>,
    target: usize,
    samples: usize,
    sigma: f64,
    seed: u64,
) -> Result<SaliencyMap> {
    if samples == 0 {
        return Err(Error::Argument(
            "smoothgrad needs at least one sample".into(),
        ));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Argument(format!(
            "smoothgrad sigma {sigma} must be finite and >= 0"
        )));
    }
    let (_, h, w) = input.dims3("smoothgrad")?;

    let gradients: Vec<Tensor<T>> = if sigma == 0.0 {
        let g = network::input_gradient(net, weights, input, target)?;
        vec![g; samples]
    } else {
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::Argument(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noisy: Vec<Tensor<T>> = (0..samples)
            .map(|_| {
                let noise: Vec<T> = (0..input.len())
                    .map(|_| T::from_f64(normal.sample(&mut rng)))
                    .collect();
                Tensor::new(input.shape().to_vec(), noise).and_then(|n| input.add(&n))
            })
            .collect::<Result<_>>()?;
        noisy
            .par_iter()
            .map(|x| network::input_gradient(net, weights, x, target))
            .collect::<Result<_>>()?
    };

    let mut mean = vec![0.0f64; input.len()];
    for (k, g) in gradients.iter().enumerate() {
        let n = (k + 1) as f64;
        for (m, v) in mean.iter_mut().zip(g.data()) {
            *m += (v.as_f64() - *m) / n;
        }
    }
    let values = Tensor::new(input.shape().to_vec(), mean)?.channel_sum()?;
    SaliencyMap::new(
        h,
        w,
        values,
        format!("smoothgrad n={samples} sigma={sigma} seed={seed} target={target}"),
    )
}
