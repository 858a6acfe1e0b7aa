use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Deserialize;

use heatlens::image::NormalizationSpec;
use heatlens::network::build_vgg16;
use heatlens::{Error, LayerSpec, NetworkDef, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Lrp,
    Gradcam,
    Occlusion,
    Smoothgrad,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Lrp => "lrp",
            Method::Gradcam => "gradcam",
            Method::Occlusion => "occlusion",
            Method::Smoothgrad => "smoothgrad",
        }
    }
}

/// Rule applied to the convolution that sees pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum InputRule {
    #[default]
    Zb,
    Z,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub preset: Option<String>,
    pub input_shape: Option<[usize; 3]>,
    #[serde(default)]
    pub layers: Vec<LayerSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplainConfig {
    pub method: Method,
    pub target: Option<usize>,
    pub epsilon: f64,
    pub input_rule: InputRule,
    pub export_layers: bool,
    pub layer: Option<String>,
    pub patch: usize,
    pub stride: usize,
    pub baseline: f64,
    pub samples: usize,
    pub sigma: Option<f64>,
    pub seed: u64,
    pub clip_percentile: f64,
    pub overlay_alpha: f64,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            method: Method::Lrp,
            target: None,
            epsilon: heatlens::lrp::DEFAULT_EPSILON,
            input_rule: InputRule::Zb,
            export_layers: false,
            layer: None,
            patch: heatlens::explain::DEFAULT_PATCH,
            stride: heatlens::explain::DEFAULT_STRIDE,
            baseline: 0.0,
            samples: heatlens::explain::DEFAULT_SAMPLES,
            sigma: None,
            seed: 0,
            clip_percentile: heatlens::explain::DEFAULT_CLIP_PERCENTILE,
            overlay_alpha: 0.5,
        }
    }
}

impl ExplainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad(format!(
                "explain.epsilon must be finite and >= 0, got {}",
                self.epsilon
            ));
        }
        if self.patch == 0 || self.stride == 0 {
            return bad("explain.patch and explain.stride must be >= 1".into());
        }
        if !self.baseline.is_finite() {
            return bad("explain.baseline must be finite".into());
        }
        if self.samples == 0 {
            return bad("explain.samples must be >= 1".into());
        }
        if let Some(s) = self.sigma {
            if !(s >= 0.0 && s.is_finite()) {
                return bad(format!("explain.sigma must be finite and >= 0, got {s}"));
            }
        }
        if !(0.0..=100.0).contains(&self.clip_percentile) {
            return bad(format!(
                "explain.clip_percentile must lie in [0, 100], got {}",
                self.clip_percentile
            ));
        }
        if !(0.0..=1.0).contains(&self.overlay_alpha) {
            return bad(format!(
                "explain.overlay_alpha must lie in [0, 1], got {}",
                self.overlay_alpha
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub weights: Option<PathBuf>,
    pub classes: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub precision: Option<Precision>,
    #[serde(default)]
    pub normalization: NormalizationSpec,
    pub network: Option<NetworkConfig>,
    #[serde(default)]
    pub explain: ExplainConfig,
}

impl RunConfig {
    /// Parses a TOML config; relative paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.weights, &mut cfg.classes, &mut cfg.output_dir]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.normalization.validate()?;
        self.explain.validate()
    }

    pub fn require_weights(&self) -> Result<&Path> {
        self.weights.as_deref().ok_or_else(|| {
            Error::Config("no weight file configured (set `weights` or pass --weights)".into())
        })
    }

    pub fn class_labels(&self) -> Result<Vec<String>> {
        let path = self.classes.as_deref().ok_or_else(|| {
            Error::Config("no class manifest configured (set `classes` or pass --classes)".into())
        })?;
        read_class_manifest(path)
    }

    pub fn network(&self, classes: Vec<String>) -> Result<NetworkDef> {
        let net = self.network.clone().unwrap_or(NetworkConfig {
            preset: Some("vgg16".into()),
            input_shape: None,
            layers: Vec::new(),
        });
        match (net.preset.as_deref(), net.layers.is_empty()) {
            (Some("vgg16"), true) => build_vgg16(classes.len(), classes),
            (Some(other), true) => Err(Error::Config(format!("unknown network preset {other:?}"))),
            (None, false) => {
                let shape = net.input_shape.ok_or_else(|| {
                    Error::Config("network.input_shape is required with inline layers".into())
                })?;
                NetworkDef::new(net.layers, shape, classes).map_err(|e| match e {
                    Error::Argument(m) => Error::Config(m),
                    other => other,
                })
            }
            (Some(_), false) => Err(Error::Config(
                "network.preset and network.layers are mutually exclusive".into(),
            )),
            (None, true) => Err(Error::Config(
                "network needs a preset or inline layers".into(),
            )),
        }
    }
}

/// One class label per line, in output-channel order.
pub fn read_class_manifest(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let labels: Vec<String> = text.lines().map(|l| l.trim().to_string()).collect();
    let labels: Vec<String> = match labels.iter().rposition(|l| !l.is_empty()) {
        Some(last) => labels[..=last].to_vec(),
        None => Vec::new(),
    };
    if let Some(i) = labels.iter().position(|l| l.is_empty()) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: i as u64 + 1,
            message: "empty class label".into(),
        });
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput(format!(
            "class manifest {} lists no classes",
            path.display()
        )));
    }
    Ok(labels)
}
