//! Versioned binary container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   8 bytes  "MIPROBE\0"
//! version u32
//! hlen    u64      length of the JSON header
//! header  hlen bytes of UTF-8 JSON
//! count   u64      number of payload values
//! payload count × f64
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::data::{DataSpec, Sample, SyntheticDataset, Target, TaskKind};
use super::model::{Model, ModelSpec};
use crate::error::{Error, Result};
use crate::mine::FeatureSequence;
use crate::nn::{DenseMatrix, Parameters};

pub const MAGIC: &[u8; 8] = b"MIPROBE\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContainerKind {
    Model,
    Dataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerHeader {
    pub kind: ContainerKind,
    pub format_version: u32,
    /// Model or data spec, depending on `kind`.
    pub spec: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub config_hash: String,
    pub tensors: Vec<TensorEntry>,
    /// Kind-specific extras (tap points, labels).
    #[serde(default)]
    pub extra: serde_json::Value,
}

/// Hex SHA-256 of the compact JSON encoding of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn container_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::Container {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

pub fn write_container(path: &Path, header: &ContainerHeader, payload: &[f64]) -> Result<()> {
    let expected: usize = header.tensors.iter().map(|t| t.len).sum();
    if expected != payload.len() {
        return Err(Error::dimension("container payload", expected, payload.len()));
    }
    let json = serde_json::to_vec(header)?;
    let mut buf = Vec::with_capacity(28 + json.len() + 8 * payload.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    buf.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    for v in payload {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn take<'a>(path: &Path, bytes: &mut &'a [u8], n: usize, what: &str) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(container_err(path, format!("truncated while reading {what}")));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

fn take_u64(path: &Path, bytes: &mut &[u8], what: &str) -> Result<u64> {
    Ok(u64::from_le_bytes(take(path, bytes, 8, what)?.try_into().expect("8 bytes")))
}

pub fn read_container(path: &Path) -> Result<(ContainerHeader, Vec<f64>)> {
    let all = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = all.as_slice();
    if take(path, &mut bytes, 8, "magic")? != MAGIC {
        return Err(container_err(path, "bad magic"));
    }
    let version = u32::from_le_bytes(take(path, &mut bytes, 4, "version")?.try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(container_err(path, format!("unsupported version {version}")));
    }
    let hlen = take_u64(path, &mut bytes, "header length")? as usize;
    let header: ContainerHeader = serde_json::from_slice(take(path, &mut bytes, hlen, "header")?)
        .map_err(|e| container_err(path, format!("header: {e}")))?;
    let count = take_u64(path, &mut bytes, "payload length")? as usize;
    if bytes.len() != count.saturating_mul(8) {
        return Err(container_err(
            path,
            format!("payload holds {} bytes, header promises {count} values", bytes.len()),
        ));
    }
    let payload: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let expected: usize = header.tensors.iter().map(|t| t.len).sum();
    if expected != payload.len() {
        return Err(container_err(path, format!("tensor table sums to {expected}, payload has {}", payload.len())));
    }
    Ok((header, payload))
}

/// Provenance stored next to a model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub seeds: BTreeMap<String, u64>,
    pub config_hash: String,
}

pub fn save_model(path: &Path, model: &Model, meta: &ModelMeta) -> Result<()> {
    model.validate()?;
    let names = model.tensor_names();
    let tensors = model.tensors();
    let header = ContainerHeader {
        kind: ContainerKind::Model,
        format_version: FORMAT_VERSION,
        spec: serde_json::to_value(&model.spec)?,
        seeds: meta.seeds.clone(),
        config_hash: meta.config_hash.clone(),
        tensors: names
            .into_iter()
            .zip(&tensors)
            .map(|(name, t)| TensorEntry { name, len: t.len() })
            .collect(),
        extra: serde_json::json!({ "tap_points": model.encoder.tap_points }),
    };
    let payload: Vec<f64> = tensors.concat();
    write_container(path, &header, &payload)
}

pub fn load_model(path: &Path) -> Result<(Model, ModelMeta)> {
    let (header, payload) = read_container(path)?;
    if header.kind != ContainerKind::Model {
        return Err(container_err(path, "not a model container"));
    }
    let spec: ModelSpec = serde_json::from_value(header.spec).map_err(|e| container_err(path, format!("spec: {e}")))?;
    spec.validate()?;
    // Every tensor is overwritten below; the generator only fixes the shapes.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let mut model = Model::init(&spec, &mut rng)?;
    if let Some(taps) = header.extra.get("tap_points") {
        model.encoder.tap_points =
            serde_json::from_value(taps.clone()).map_err(|e| container_err(path, format!("tap_points: {e}")))?;
    }
    let names = model.tensor_names();
    if names.len() != header.tensors.len() {
        return Err(container_err(
            path,
            format!("{} tensors stored, model has {}", header.tensors.len(), names.len()),
        ));
    }
    let mut offset = 0;
    for ((t, entry), name) in model.tensors_mut().into_iter().zip(&header.tensors).zip(&names) {
        if entry.name != *name || entry.len != t.len() {
            return Err(container_err(
                path,
                format!("tensor {} ({}) does not match {name} ({})", entry.name, entry.len, t.len()),
            ));
        }
        t.copy_from_slice(&payload[offset..offset + t.len()]);
        offset += t.len();
    }
    model.validate()?;
    Ok((
        model,
        ModelMeta {
            seeds: header.seeds,
            config_hash: header.config_hash,
        },
    ))
}

#[derive(Serialize, Deserialize)]
struct DatasetExtra {
    seed: u64,
    labels: Vec<Vec<usize>>,
}

/// Stores codewords and inputs as the payload; classification labels go in
/// the header.
pub fn save_dataset(path: &Path, data: &SyntheticDataset) -> Result<()> {
    data.validate()?;
    let mut tensors = vec![TensorEntry {
        name: "codewords".into(),
        len: data.codewords.data().len(),
    }];
    let mut payload = data.codewords.data().to_vec();
    let mut labels = Vec::new();
    for (i, s) in data.samples.iter().enumerate() {
        tensors.push(TensorEntry {
            name: format!("sample{i}.input"),
            len: s.input.values().data().len(),
        });
        payload.extend_from_slice(s.input.values().data());
        if let Target::Labels(y) = &s.target {
            labels.push(y.clone());
        }
    }
    let header = ContainerHeader {
        kind: ContainerKind::Dataset,
        format_version: FORMAT_VERSION,
        spec: serde_json::to_value(&data.spec)?,
        seeds: BTreeMap::from([("data".to_string(), data.seed)]),
        config_hash: config_hash(&(&data.spec, data.seed))?,
        tensors,
        extra: serde_json::to_value(DatasetExtra { seed: data.seed, labels })?,
    };
    write_container(path, &header, &payload)
}

pub fn load_dataset(path: &Path) -> Result<SyntheticDataset> {
    let (header, payload) = read_container(path)?;
    if header.kind != ContainerKind::Dataset {
        return Err(container_err(path, "not a dataset container"));
    }
    let spec: DataSpec = serde_json::from_value(header.spec).map_err(|e| container_err(path, format!("spec: {e}")))?;
    let extra: DatasetExtra =
        serde_json::from_value(header.extra).map_err(|e| container_err(path, format!("labels: {e}")))?;
    let (l, d, k) = (spec.seq_len, spec.feature_dim, spec.class_count);
    if header.tensors.len() != spec.n_samples + 1 || payload.len() != k * d + spec.n_samples * l * d {
        return Err(container_err(path, "payload does not match the data spec"));
    }
    let codewords = DenseMatrix::from_vec(k, d, payload[..k * d].to_vec())?;
    let mut samples = Vec::with_capacity(spec.n_samples);
    for (i, chunk) in payload[k * d..].chunks_exact(l * d).enumerate() {
        let input = FeatureSequence::new(DenseMatrix::from_vec(l, d, chunk.to_vec())?)?;
        let target = match spec.task {
            TaskKind::Reconstruction => Target::Features(input.clone()),
            TaskKind::Classification => Target::Labels(
                extra
                    .labels
                    .get(i)
                    .cloned()
                    .ok_or_else(|| container_err(path, format!("missing labels for sample {i}")))?,
            ),
        };
        samples.push(Sample { input, target });
    }
    let data = SyntheticDataset {
        spec,
        seed: extra.seed,
        codewords,
        samples,
    };
    data.validate()?;
    Ok(data)
}
