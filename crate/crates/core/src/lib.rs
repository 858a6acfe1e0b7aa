//! Convolutional-network inference with pixel attribution.
//!
//! The crate runs VGG-style networks (dense layers converted to convolutions)
//! and explains their decisions with layer-wise relevance propagation,
//! Grad-CAM, occlusion analysis and SmoothGrad. Classification quality is
//! summarised by [`metrics`].

pub mod error;
pub mod explain;
pub mod fsutil;
pub mod image;
pub mod lrp;
pub mod metrics;
pub mod network;
pub mod ops;
pub mod oracle;
pub mod saliency;
pub mod selftest;
pub mod tensor;
pub mod weights;

pub use error::{Error, Result};
pub use network::{ForwardTrace, LayerKind, LayerSpec, NetworkBuilder, NetworkDef};
pub use saliency::SaliencyMap;
pub use tensor::{Scalar, Tensor};
pub use weights::WeightStore;
