//! Signed single-channel attribution maps and their red/blue rendering.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::image::{bilinear_plane, to_u8, RgbImage};

#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
    /// Method name and parameters that produced the map.
    provenance: String,
    layer: Option<String>,
}

impl SaliencyMap {
    pub fn new(
        height: usize,
        width: usize,
        values: Vec<f64>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Argument(
                "saliency map extents must be positive".into(),
            ));
        }
        if values.len() != height * width {
            return Err(Error::dim(
                "SaliencyMap::new",
                "value count",
                height * width,
                values.len(),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite saliency value at index {i}"
            )));
        }
        Ok(Self {
            height,
            width,
            values,
            provenance: provenance.into(),
            layer: None,
        })
    }

    pub fn with_layer(mut self, layer: impl Into<String>) -> Self {
        self.layer = Some(layer.into());
        self
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn layer(&self) -> Option<&str> {
        self.layer.as_deref()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn negate(&self) -> Self {
        Self {
            values: self.values.iter().map(|v| -v).collect(),
            ..self.clone()
        }
    }

    /// Bilinear resize with the same half-pixel convention as image resizing.
    pub fn upsample(&self, target_h: usize, target_w: usize) -> Result<Self> {
        if target_h == 0 || target_w == 0 {
            return Err(Error::Argument("upsample targets must be positive".into()));
        }
        let values = if (target_h, target_w) == (self.height, self.width) {
            self.values.clone()
        } else {
            bilinear_plane(&self.values, self.height, self.width, target_h, target_w)
        };
        Ok(Self {
            height: target_h,
            width: target_w,
            values,
            provenance: self.provenance.clone(),
            layer: self.layer.clone(),
        })
    }

    /// Tab-separated rows with round-trippable decimal values.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for row in self.values.chunks(self.width) {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    out.push('\t');
                }
                write!(out, "{v:e}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

pub fn upsample_map(map: &SaliencyMap, target_h: usize, target_w: usize) -> Result<SaliencyMap> {
    map.upsample(target_h, target_w)
}

/// Linear-interpolated percentile (0..=100) of `values`.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (p.clamp(0.0, 100.0) / 100.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

/// Diverging red/white/blue colour for a value already scaled to [-1, 1].
pub fn diverging_color(t: f64) -> [u8; 3] {
    let t = t.clamp(-1.0, 1.0);
    let fade = to_u8(255.0 * (1.0 - t.abs()));
    if t >= 0.0 {
        [255, fade, fade]
    } else {
        [fade, fade, 255]
    }
}

/// Renders positive relevance in red and negative in blue, white at zero.
/// Magnitudes are scaled by the `clip_percentile` of |values|; anything
/// beyond saturates.
pub fn render_heatmap(map: &SaliencyMap, clip_percentile: f64) -> Result<RgbImage> {
    if !(0.0..=100.0).contains(&clip_percentile) {
        return Err(Error::Argument(format!(
            "clip percentile {clip_percentile} outside [0, 100]"
        )));
    }
    let magnitudes: Vec<f64> = map.values.iter().map(|v| v.abs()).collect();
    let m = percentile(&magnitudes, clip_percentile);
    let mut img = RgbImage::filled(map.height, map.width, [255, 255, 255]);
    if m > 0.0 {
        for y in 0..map.height {
            for x in 0..map.width {
                img.set_pixel(y, x, diverging_color(map.get(y, x) / m));
            }
        }
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map(h: usize, w: usize, v: Vec<f64>) -> SaliencyMap {
        SaliencyMap::new(h, w, v, "test").unwrap()
    }

    #[test]
    fn zero_map_renders_white() {
        let img = render_heatmap(&map(2, 2, vec![0.0; 4]), 99.0).unwrap();
        assert_eq!(img, RgbImage::filled(2, 2, [255, 255, 255]));
    }

    #[test]
    fn extremes_render_pure_red_and_blue() {
        let img = render_heatmap(&map(1, 2, vec![3.0, -3.0]), 99.0).unwrap();
        assert_eq!(img.pixel(0, 0), [255, 0, 0]);
        assert_eq!(img.pixel(0, 1), [0, 0, 255]);
    }

    #[test]
    fn clipping_saturates_outliers() {
        let mut v = vec![1.0; 99];
        v.push(1000.0);
        let img = render_heatmap(&map(10, 10, v), 50.0).unwrap();
        assert_eq!(img.pixel(9, 9), [255, 0, 0]);
        assert_eq!(img.pixel(0, 0), [255, 0, 0]);
    }

    #[test]
    fn non_finite_values_are_rejected() {
        assert!(SaliencyMap::new(1, 1, vec![f64::NAN], "x").is_err());
    }

    #[test]
    fn upsample_constant_identity_and_ramp() {
        let c = map(2, 3, vec![0.7; 6]);
        assert!(c.upsample(5, 4).unwrap().values().iter().all(|&v| v == 0.7));
        let r = map(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(r.upsample(2, 2).unwrap(), r);

        // 1x2 ramp [0, 8] to 1x4: x_src = (d + 0.5) / 2 - 0.5 = -0.25, 0.25, 0.75, 1.25
        let ramp = map(1, 2, vec![0.0, 8.0]);
        let up = ramp.upsample(1, 4).unwrap();
        assert_eq!(up.values(), &[0.0, 2.0, 6.0, 8.0]);
    }

    #[test]
    fn text_dump_round_trips() {
        let m = map(2, 2, vec![0.1, -2.5e-7, 3.0, 1.0 / 3.0]);
        let parsed: Vec<f64> = m
            .to_text()
            .split_whitespace()
            .map(|t| t.parse().unwrap())
            .collect();
        assert_eq!(parsed, m.values());
    }

    proptest! {
        #[test]
        fn negation_swaps_red_and_blue(values in proptest::collection::vec(-5.0f64..5.0, 1..40), p in 50.0f64..=100.0) {
            let n = values.len();
            let m = map(1, n, values);
            let a = render_heatmap(&m, p).unwrap();
            let b = render_heatmap(&m.negate(), p).unwrap();
            for x in 0..n {
                let [r, g, bl] = a.pixel(0, x);
                prop_assert_eq!(b.pixel(0, x), [bl, g, r]);
                // hue by sign: one channel always saturated
                prop_assert!(r == 255 || bl == 255);
            }
        }
    }
}
