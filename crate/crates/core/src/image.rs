//! Image decoding and encoding, resizing, normalisation and heatmap overlay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, ImageError, Result};
use crate::tensor::{Scalar, Tensor};

/// 8-bit RGB image, row-major, interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Argument(format!(
                "image extents must be positive, got {height}x{width}"
            )));
        }
        if data.len() != 3 * height * width {
            return Err(Error::dim(
                "RgbImage::new",
                "sample count",
                3 * height * width,
                data.len(),
            ));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, rgb: [u8; 3]) -> Self {
        Self {
            height,
            width,
            data: rgb
                .iter()
                .copied()
                .cycle()
                .take(3 * height * width)
                .collect(),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, y: usize, x: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, y: usize, x: usize, rgb: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> &[u8] {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len()
            && !self.bytes[self.pos].is_ascii_whitespace()
            && self.bytes[self.pos] != b'#'
        {
            self.pos += 1;
        }
        &self.bytes[start..self.pos]
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        let tok = self.token();
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| {
                ImageError::Header(format!(
                    "expected {what}, found {:?}",
                    String::from_utf8_lossy(tok)
                ))
                .into()
            })
    }
}

/// Decodes a binary (P6) PPM with maxval 255. Comments and arbitrary
/// whitespace are accepted between header fields.
pub fn decode_ppm(bytes: &[u8]) -> Result<RgbImage> {
    let mut cur = HeaderCursor { bytes, pos: 0 };
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        let magic = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
        return Err(ImageError::BadMagic(magic).into());
    }
    cur.pos = 2;
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(ImageError::BadMaxval(maxval).into());
    }
    if width == 0 || height == 0 {
        return Err(ImageError::Header(format!("zero extent {width}x{height}")).into());
    }
    // exactly one whitespace byte separates maxval from the raster
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(ImageError::Header("missing whitespace after maxval".into()).into()),
    }
    let expected = 3 * width * height;
    let payload = &bytes[cur.pos..];
    if payload.len() < expected {
        return Err(ImageError::Truncated {
            expected,
            actual: payload.len(),
        }
        .into());
    }
    RgbImage::new(height, width, payload[..expected].to_vec())
}

pub fn encode_ppm(image: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.data);
    out
}

/// Decodes PPM, or PNG when built with the `png` feature.
pub fn decode_image(bytes: &[u8]) -> Result<RgbImage> {
    const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";
    if bytes.starts_with(PNG_MAGIC) {
        return decode_png(bytes);
    }
    decode_ppm(bytes)
}

#[cfg(feature = "png")]
fn decode_png(bytes: &[u8]) -> Result<RgbImage> {
    let mut decoder = png::Decoder::new(bytes);
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder
        .read_info()
        .map_err(|e| ImageError::Unsupported(format!("png: {e}")))?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| ImageError::Unsupported(format!("png: {e}")))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let samples = &buf[..info.buffer_size()];
    let data: Vec<u8> = match info.color_type {
        png::ColorType::Rgb => samples.to_vec(),
        png::ColorType::Rgba => samples
            .chunks_exact(4)
            .flat_map(|p| [p[0], p[1], p[2]])
            .collect(),
        png::ColorType::Grayscale => samples.iter().flat_map(|&g| [g, g, g]).collect(),
        png::ColorType::GrayscaleAlpha => samples
            .chunks_exact(2)
            .flat_map(|p| [p[0], p[0], p[0]])
            .collect(),
        other => return Err(ImageError::Unsupported(format!("png color type {other:?}")).into()),
    };
    RgbImage::new(h, w, data)
}

#[cfg(not(feature = "png"))]
fn decode_png(_bytes: &[u8]) -> Result<RgbImage> {
    Err(ImageError::Unsupported("PNG input requires the `png` feature".into()).into())
}

/// Bilinear resampling of a single `h x w` plane with half-pixel centres and
/// edge clamping: source coordinate = (dst + 0.5) * (src / dst) - 0.5.
pub fn bilinear_plane(src: &[f64], h: usize, w: usize, th: usize, tw: usize) -> Vec<f64> {
    let ys: Vec<(usize, usize, f64)> = (0..th).map(|d| source_coord(d, h, th)).collect();
    let xs: Vec<(usize, usize, f64)> = (0..tw).map(|d| source_coord(d, w, tw)).collect();
    let mut out = Vec::with_capacity(th * tw);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
            let bottom = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

fn source_coord(dst: usize, src_len: usize, dst_len: usize) -> (usize, usize, f64) {
    let scale = src_len as f64 / dst_len as f64;
    let s = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
    let i0 = s.floor() as usize;
    let i1 = (i0 + 1).min(src_len - 1);
    (i0, i1, s - i0 as f64)
}

/// Rounds half away from zero and clamps into `0..=255`.
pub fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

pub fn resize_bilinear(image: &RgbImage, target_h: usize, target_w: usize) -> Result<RgbImage> {
    if target_h == 0 || target_w == 0 {
        return Err(Error::Argument("resize targets must be positive".into()));
    }
    if target_h == image.height && target_w == image.width {
        return Ok(image.clone());
    }
    let (h, w) = (image.height, image.width);
    let mut out = vec![0u8; 3 * target_h * target_w];
    for c in 0..3 {
        let plane: Vec<f64> = image
            .data
            .iter()
            .skip(c)
            .step_by(3)
            .map(|&v| v as f64)
            .collect();
        let resized = bilinear_plane(&plane, h, w, target_h, target_w);
        for (i, v) in resized.into_iter().enumerate() {
            out[3 * i + c] = to_u8(v);
        }
    }
    RgbImage::new(target_h, target_w, out)
}

/// Per-channel normalisation `(sample / 255 - mean) / std`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Default for NormalizationSpec {
    /// ImageNet statistics.
    fn default() -> Self {
        Self {
            mean: [0.485, 0.456, 0.406],
            std: [0.229, 0.224, 0.225],
        }
    }
}

impl NormalizationSpec {
    pub const IDENTITY: NormalizationSpec = NormalizationSpec {
        mean: [0.0; 3],
        std: [1.0; 3],
    };

    pub fn validate(&self) -> Result<()> {
        if self.std.iter().any(|&s| !(s > 0.0) || !s.is_finite())
            || self.mean.iter().any(|m| !m.is_finite())
        {
            return Err(Error::Config(format!(
                "invalid normalization {self:?}: std must be positive"
            )));
        }
        Ok(())
    }

    pub fn normalize(&self, channel: usize, sample: u8) -> f64 {
        (sample as f64 / 255.0 - self.mean[channel]) / self.std[channel]
    }

    /// Lowest attainable normalised value per channel (sample 0).
    pub fn lower_bounds(&self) -> [f64; 3] {
        [0, 1, 2].map(|c| self.normalize(c, 0))
    }

    /// Highest attainable normalised value per channel (sample 255).
    pub fn upper_bounds(&self) -> [f64; 3] {
        [0, 1, 2].map(|c| self.normalize(c, 255))
    }

    /// Inverse mapping to an 8-bit sample, rounded and clamped.
    pub fn denormalize(&self, channel: usize, value: f64) -> u8 {
        to_u8((value * self.std[channel] + self.mean[channel]) * 255.0)
    }
}

pub fn to_input_tensor<T: Scalar>(image: &RgbImage, spec: &NormalizationSpec) -> Tensor<T> {
    let plane = image.height * image.width;
    Tensor::from_fn(&[3, image.height, image.width], |i| {
        let (c, p) = (i / plane, i % plane);
        T::from_f64(spec.normalize(c, image.data[3 * p + c]))
    })
}

/// Per-pixel convex blend `round(alpha * heat + (1 - alpha) * image)`.
pub fn overlay(image: &RgbImage, heatmap: &RgbImage, alpha: f64) -> Result<RgbImage> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Argument(format!(
            "overlay alpha {alpha} outside [0, 1]"
        )));
    }
    if image.height != heatmap.height || image.width != heatmap.width {
        return Err(Error::dim(
            "overlay",
            "image size",
            format!("{}x{}", image.height, image.width),
            format!("{}x{}", heatmap.height, heatmap.width),
        ));
    }
    let data = image
        .data
        .iter()
        .zip(&heatmap.data)
        .map(|(&i, &h)| to_u8(alpha * h as f64 + (1.0 - alpha) * i as f64))
        .collect();
    RgbImage::new(image.height, image.width, data)
}
