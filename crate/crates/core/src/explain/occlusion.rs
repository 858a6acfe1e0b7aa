use rayon::prelude::*;

use super::target_score;
use crate::error::{Error, Result};
use crate::network::{self, NetworkDef};
use crate::saliency::SaliencyMap;
use crate::tensor::{Scalar, Tensor};
use crate::weights::WeightStore;

pub const DEFAULT_PATCH: usize = 16;
pub const DEFAULT_STRIDE: usize = 8;

/// What an occluded patch is filled with.
#[derive(Debug, Clone, PartialEq)]
pub enum Baseline<T = f32> {
    /// Same value in every channel (in normalised input space).
    Scalar(f64),
    /// Pixelwise replacement, same shape as the input.
    Tensor(Tensor<T>),
}

/// Score drops per patch position and their per-pixel coverage average.
#[derive(Debug, Clone, PartialEq)]
pub struct Occlusion {
    pub grid: SaliencyMap,
    pub pixels: SaliencyMap,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

/// Patch origins along one axis: every `stride` step, plus one flush with the
/// far edge when the steps do not land there.
pub fn occlusion_positions(extent: usize, patch: usize, stride: usize) -> Result<Vec<usize>> {
    if patch == 0 || stride == 0 {
        return Err(Error::Argument(
            "occlusion patch and stride must be >= 1".into(),
        ));
    }
    if patch > extent {
        return Err(Error::Argument(format!(
            "occlusion patch {patch} larger than image extent {extent}"
        )));
    }
    let last = extent - patch;
    let mut out: Vec<usize> = (0..=last).step_by(stride).collect();
    if *out.last().unwrap() != last {
        out.push(last);
    }
    Ok(out)
}

pub fn occlusion<T: Scalar>(
    net: &NetworkDef,
    weights: &WeightStore<T>,
    input: &Tensor<T>,
    target: usize,
    patch: usize,
    stride: usize,
    baseline: &Baseline<T>,
) -> Result<Occlusion> {
    let (c, h, w) = input.dims3("occlusion")?;
    if let Baseline::Tensor(b) = baseline {
        b.expect_shape(input.shape(), "occlusion baseline")?;
    }
    let rows = occlusion_positions(h, patch, stride)?;
    let cols = occlusion_positions(w, patch, stride)?;
    let original = target_score(network::forward(net, weights, input)?.scores(), target)?;

    let positions: Vec<(usize, usize)> = rows
        .iter()
        .flat_map(|&y| cols.iter().map(move |&x| (y, x)))
        .collect();
    let drops = positions
        .par_iter()
        .map(|&(y0, x0)| {
            let mut probe = input.clone();
            let plane = h * w;
            for ch in 0..c {
                for y in y0..y0 + patch {
                    for x in x0..x0 + patch {
                        let i = ch * plane + y * w + x;
                        probe.data_mut()[i] = match baseline {
                            Baseline::Scalar(v) => T::from_f64(*v),
                            Baseline::Tensor(b) => b.data()[i],
                        };
                    }
                }
            }
            let occluded = target_score(network::forward(net, weights, &probe)?.scores(), target)?;
            Ok(original - occluded)
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut total = vec![0.0; h * w];
    let mut count = vec![0u32; h * w];
    for (&(y0, x0), d) in positions.iter().zip(&drops) {
        for y in y0..y0 + patch {
            for x in x0..x0 + patch {
                total[y * w + x] += d;
                count[y * w + x] += 1;
            }
        }
    }
    let pixels: Vec<f64> = total
        .iter()
        .zip(&count)
        .map(|(t, &n)| if n == 0 { 0.0 } else { t / n as f64 })
        .collect();
    let tag = format!("occlusion patch={patch} stride={stride} target={target}");
    Ok(Occlusion {
        grid: SaliencyMap::new(rows.len(), cols.len(), drops, tag.clone())?,
        pixels: SaliencyMap::new(h, w, pixels, tag)?,
        rows,
        cols,
    })
}

/// Grid of score drops, one cell per patch position.
pub fn occlusion_map<T: Scalar>(
    net: &NetworkDef,
    weights: &WeightStore<T>,
    input: &Tensor<T>,
    target: usize,
    patch: usize,
    stride: usize,
    baseline: &Baseline<T>,
) -> Result<SaliencyMap> {
    Ok(occlusion(net, weights, input, target, patch, stride, baseline)?.grid)
}
