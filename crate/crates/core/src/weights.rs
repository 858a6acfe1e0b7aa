//! Parameter storage and the on-disk weight format.
//!
//! A weight file is a pair: a JSON manifest and a sibling binary blob
//! (`<manifest stem>.bin`). The blob holds raw little-endian `f32` values,
//! each record's kernel followed by its bias, row-major, with no padding
//! between records. The manifest lists one record per conv layer, in network
//! order, and carries the blob's CRC32.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, LoadError, Result};
use crate::fsutil::write_atomic;
use crate::network::{LayerKind, NetworkDef};
use crate::tensor::{Scalar, Tensor};

pub const FORMAT: &str = "heatlens-weights/1";
pub const DTYPE_F32LE: &str = "f32le";

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights<T = f32> {
    pub kernel: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightStore<T = f32> {
    layers: BTreeMap<String, LayerWeights<T>>,
    provenance: String,
}

impl<T: Scalar> WeightStore<T> {
    pub fn new(provenance: impl Into<String>) -> Self {
        Self {
            layers: BTreeMap::new(),
            provenance: provenance.into(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, kernel: Tensor<T>, bias: Option<Tensor<T>>) {
        self.layers
            .insert(name.into(), LayerWeights { kernel, bias });
    }

    pub fn get(&self, name: &str) -> Option<&LayerWeights<T>> {
        self.layers.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut LayerWeights<T>> {
        self.layers.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &LayerWeights<T>)> {
        self.layers.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn dtype(&self) -> &'static str {
        T::NAME
    }

    pub fn cast<U: Scalar>(&self) -> WeightStore<U> {
        WeightStore {
            layers: self
                .layers
                .iter()
                .map(|(k, v)| {
                    (
                        k.clone(),
                        LayerWeights {
                            kernel: v.kernel.cast(),
                            bias: v.bias.as_ref().map(Tensor::cast),
                        },
                    )
                })
                .collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// Checks that every conv layer of `net` has exactly matching parameters.
    pub fn validate(&self, net: &NetworkDef) -> Result<()> {
        for layer in net.conv_layers() {
            crate::network::conv_weights(layer, self)?;
        }
        for name in self.layers.keys() {
            match net.layer_index(name) {
                Some(i) if net.layers()[i].kind.is_conv() => {}
                _ => {
                    return Err(Error::WeightStore(format!(
                        "weights for {name:?} match no conv layer"
                    )))
                }
            }
        }
        Ok(())
    }

    /// He-uniform kernels and small uniform biases, reproducible from `seed`.
    pub fn random(net: &NetworkDef, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = Self::new(format!("random he-uniform seed={seed}"));
        for layer in net.conv_layers() {
            let LayerKind::Conv { kernel, bias, .. } = layer.kind else {
                unreachable!()
            };
            let fan_in = (kernel[1] * kernel[2] * kernel[3]) as f64;
            let bound = (6.0 / fan_in).sqrt();
            let k = Tensor::from_fn(&kernel, |_| T::from_f64(rng.gen_range(-bound..bound)));
            let b = bias.then(|| {
                Tensor::from_fn(&[kernel[0]], |_| T::from_f64(rng.gen_range(-0.05..0.05)))
            });
            store.insert(layer.name.clone(), k, b);
        }
        store
    }

    pub fn zeros(net: &NetworkDef) -> Self {
        let mut store = Self::new("zeros");
        for layer in net.conv_layers() {
            let LayerKind::Conv { kernel, bias, .. } = layer.kind else {
                unreachable!()
            };
            store.insert(
                layer.name.clone(),
                Tensor::zeros(&kernel),
                bias.then(|| Tensor::zeros(&[kernel[0]])),
            );
        }
        store
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightRecord {
    pub name: String,
    pub kind: String,
    pub kernel_shape: Vec<usize>,
    pub bias_len: usize,
    pub offset: u64,
    pub length: u64,
}

impl WeightRecord {
    pub fn parameter_count(&self) -> usize {
        self.kernel_shape.iter().product::<usize>() + self.bias_len
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightManifest {
    pub format: String,
    pub dtype: String,
    /// Blob file name, relative to the manifest's directory.
    pub blob: String,
    pub blob_bytes: u64,
    /// CRC32 of the blob, lowercase hex.
    pub checksum: String,
    pub provenance: String,
    pub records: Vec<WeightRecord>,
}

impl WeightManifest {
    pub fn parameter_count(&self) -> usize {
        self.records.iter().map(WeightRecord::parameter_count).sum()
    }

    /// Manifest describing `net` without any blob (checksum of empty data).
    pub fn describe(net: &NetworkDef, blob: &str, provenance: &str) -> Self {
        let mut offset = 0u64;
        let records = net
            .conv_layers()
            .map(|layer| {
                let LayerKind::Conv { kernel, bias, .. } = layer.kind else {
                    unreachable!()
                };
                let bias_len = if bias { kernel[0] } else { 0 };
                let count = kernel.iter().product::<usize>() + bias_len;
                let length = 4 * count as u64;
                let rec = WeightRecord {
                    name: layer.name.clone(),
                    kind: "conv".into(),
                    kernel_shape: kernel.to_vec(),
                    bias_len,
                    offset,
                    length,
                };
                offset += length;
                rec
            })
            .collect();
        Self {
            format: FORMAT.into(),
            dtype: DTYPE_F32LE.into(),
            blob: blob.into(),
            blob_bytes: offset,
            checksum: crc32_hex(&[]),
            provenance: provenance.into(),
            records,
        }
    }
}

pub fn crc32_hex(bytes: &[u8]) -> String {
    format!("{:08x}", crc32fast::hash(bytes))
}

/// Path of the blob accompanying a manifest path.
pub fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

/// Writes `store` (converted to f32) as a manifest at `path` plus its blob.
pub fn save_weights<T: Scalar>(
    store: &WeightStore<T>,
    net: &NetworkDef,
    path: &Path,
) -> Result<WeightManifest> {
    store.validate(net)?;
    let blob_file = blob_path(path);
    let blob_name = blob_file
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Argument(format!("unusable weight path {}", path.display())))?
        .to_string();
    let mut manifest = WeightManifest::describe(net, &blob_name, store.provenance());
    let mut blob = Vec::with_capacity(manifest.blob_bytes as usize);
    for rec in &manifest.records {
        let entry = store.get(&rec.name).expect("validated");
        let values = entry
            .kernel
            .data()
            .iter()
            .chain(entry.bias.iter().flat_map(|b| b.data()));
        for v in values {
            blob.extend_from_slice(&v.as_f32().to_le_bytes());
        }
        debug_assert_eq!(blob.len() as u64, rec.offset + rec.length);
    }
    manifest.checksum = crc32_hex(&blob);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(&blob_file, &blob)?;
    write_atomic(path, json.as_bytes())?;
    Ok(manifest)
}

pub fn read_manifest(path: &Path) -> Result<WeightManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: WeightManifest =
        serde_json::from_str(&text).map_err(|e| LoadError::Manifest(e.to_string()))?;
    if manifest.dtype != DTYPE_F32LE {
        return Err(LoadError::UnknownDtype(manifest.dtype).into());
    }
    let mut expected_offset = 0u64;
    for rec in &manifest.records {
        if rec.kind != "conv" {
            return Err(LoadError::Manifest(format!(
                "record {:?} has unsupported kind {:?}",
                rec.name, rec.kind
            ))
            .into());
        }
        if rec.kernel_shape.len() != 4 || rec.kernel_shape.contains(&0) {
            return Err(LoadError::Manifest(format!(
                "record {:?}: kernel shape {:?} is not a positive 4-d shape",
                rec.name, rec.kernel_shape
            ))
            .into());
        }
        if rec.bias_len != 0 && rec.bias_len != rec.kernel_shape[0] {
            return Err(LoadError::Manifest(format!(
                "record {:?}: bias length {} for {} output channels",
                rec.name, rec.bias_len, rec.kernel_shape[0]
            ))
            .into());
        }
        if rec.offset != expected_offset {
            return Err(LoadError::Manifest(format!(
                "record {:?}: offset {} but previous records end at {expected_offset}",
                rec.name, rec.offset
            ))
            .into());
        }
        if rec.length != 4 * rec.parameter_count() as u64 {
            return Err(LoadError::LengthMismatch {
                records: rec.offset + rec.length,
                blob: rec.offset + 4 * rec.parameter_count() as u64,
            }
            .into());
        }
        expected_offset += rec.length;
    }
    if expected_offset != manifest.blob_bytes {
        return Err(LoadError::LengthMismatch {
            records: expected_offset,
            blob: manifest.blob_bytes,
        }
        .into());
    }
    Ok(manifest)
}

/// Reads the blob next to `path` and checks its length and checksum.
fn read_blob(path: &Path, manifest: &WeightManifest) -> Result<Vec<u8>> {
    let blob_file = path.parent().unwrap_or(Path::new(".")).join(&manifest.blob);
    let blob = std::fs::read(&blob_file).map_err(|e| Error::io(&blob_file, e))?;
    let actual = blob.len() as u64;
    if actual < manifest.blob_bytes {
        return Err(LoadError::Truncated {
            expected: manifest.blob_bytes,
            actual,
        }
        .into());
    }
    if actual > manifest.blob_bytes {
        return Err(LoadError::LengthMismatch {
            records: manifest.blob_bytes,
            blob: actual,
        }
        .into());
    }
    let checksum = crc32_hex(&blob);
    if checksum != manifest.checksum.to_ascii_lowercase() {
        return Err(LoadError::Checksum {
            expected: manifest.checksum.clone(),
            actual: checksum,
        }
        .into());
    }
    Ok(blob)
}

pub fn load_weights(path: &Path) -> Result<WeightStore<f32>> {
    let manifest = read_manifest(path)?;
    let blob = read_blob(path, &manifest)?;
    let mut store = WeightStore::new(manifest.provenance.clone());
    for rec in &manifest.records {
        let bytes = &blob[rec.offset as usize..(rec.offset + rec.length) as usize];
        let mut values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
        let kcount: usize = rec.kernel_shape.iter().product();
        let kernel = Tensor::new(
            rec.kernel_shape.clone(),
            values.by_ref().take(kcount).collect(),
        )?;
        let bias = if rec.bias_len > 0 {
            Some(Tensor::new(vec![rec.bias_len], values.collect())?)
        } else {
            None
        };
        store.insert(rec.name.clone(), kernel, bias);
    }
    Ok(store)
}

/// Manifest plus verified checksum, for tabular inspection.
pub fn inspect_weights(path: &Path) -> Result<WeightManifest> {
    let manifest = read_manifest(path)?;
    read_blob(path, &manifest)?;
    Ok(manifest)
}
