//! Attribution methods other than LRP, and the metadata written next to
//! every rendered heatmap.

mod gradcam;
mod occlusion;
mod smoothgrad;

use std::fmt::Write as _;
use std::path::Path;

pub use gradcam::{default_gradcam_layer, grad_cam, gradcam_context, GradCamContext};
pub use occlusion::{
    occlusion, occlusion_map, occlusion_positions, Baseline, Occlusion, DEFAULT_PATCH,
    DEFAULT_STRIDE,
};
pub use smoothgrad::{default_sigma, smoothgrad, DEFAULT_SAMPLES, DEFAULT_SIGMA_FRACTION};

pub use crate::saliency::{render_heatmap, upsample_map};

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::tensor::{Scalar, Tensor};

pub const DEFAULT_CLIP_PERCENTILE: f64 = 99.0;

/// Total pre-softmax score of `target` over every spatial position.
pub fn target_score<T: Scalar>(scores: &Tensor<T>, target: usize) -> Result<f64> {
    let (k, h, w) = scores.dims3("target_score")?;
    if target >= k {
        return Err(Error::Argument(format!(
            "target class {target} out of range for {k} classes"
        )));
    }
    let plane = h * w;
    Ok(scores.data()[target * plane..(target + 1) * plane]
        .iter()
        .map(|v| v.as_f64())
        .sum())
}

/// What produced a heatmap, written as `key<TAB>value` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplainMetadata {
    pub method: String,
    pub parameters: Vec<(String, String)>,
    pub seed: Option<u64>,
    pub target_class: usize,
    pub target_label: String,
    pub score: f64,
}

impl ExplainMetadata {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "method\t{}", self.method).unwrap();
        for (k, v) in &self.parameters {
            writeln!(out, "{k}\t{v}").unwrap();
        }
        match self.seed {
            Some(s) => writeln!(out, "seed\t{s}").unwrap(),
            None => writeln!(out, "seed\tnone").unwrap(),
        }
        writeln!(out, "target_class\t{}", self.target_class).unwrap();
        writeln!(out, "target_label\t{}", self.target_label).unwrap();
        writeln!(out, "score\t{:e}", self.score).unwrap();
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_text().as_bytes())
    }
}
