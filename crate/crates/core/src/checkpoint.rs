//! Binary checkpoints.
//!
//! Layout: the 8-byte magic `LBLAUGCK`, a little-endian `u64` header length,
//! a UTF-8 JSON header, then every tensor's values as little-endian `f32` in
//! manifest order. The header records the format version, the configuration
//! and an ordered manifest of `(name, shape, count, offset)` where `offset`
//! counts `f32` values from the start of the payload.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EncoderArch, ModelConfig, MultiTaskModel};
use crate::neural::{ParamStore, Real, Tensor};

pub const MAGIC: &[u8; 8] = b"LBLAUGCK";
pub const FORMAT_VERSION: &str = "1";

/// What the checkpoint holds: a full model or an encoder alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "contents", rename_all = "lowercase")]
pub enum CheckpointConfig {
    Model { model: ModelConfig },
    Encoder { encoder: EncoderArch },
}

impl CheckpointConfig {
    pub fn encoder(&self) -> &EncoderArch {
        match self {
            CheckpointConfig::Model { model } => &model.encoder,
            CheckpointConfig::Encoder { encoder } => encoder,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub count: usize,
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub version: String,
    pub config: CheckpointConfig,
    pub tensors: Vec<ManifestEntry>,
    /// Free-form run metadata (tuned threshold, training configuration, …).
    #[serde(default)]
    pub metadata: serde_json::Value,
}

/// Serializes `params` under `config` into checkpoint bytes.
pub fn encode<T: Real>(config: CheckpointConfig, params: &ParamStore<T>, metadata: serde_json::Value) -> Result<Vec<u8>> {
    if !params.all_finite() {
        return Err(Error::NonFinite("refusing to save non-finite parameters".into()));
    }
    let mut tensors = Vec::with_capacity(params.len());
    let mut offset = 0;
    for (name, t) in params.iter() {
        tensors.push(ManifestEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            count: t.len(),
            offset,
        });
        offset += t.len();
    }
    let header = Header {
        version: FORMAT_VERSION.into(),
        config,
        tensors,
        metadata,
    };
    let json = serde_json::to_vec_pretty(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + json.len() + 4 * offset);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in params.iter() {
        for v in t.data() {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Parses checkpoint bytes; every consistency problem is reported before
/// any tensor is returned.
pub fn decode<T: Real>(bytes: &[u8]) -> Result<(Header, ParamStore<T>)> {
    let corrupt = |m: String| Error::CorruptCheckpoint(m);
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(corrupt("missing checkpoint magic".into()));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = &bytes[16..];
    if header_len > body.len() {
        return Err(corrupt(format!("header length {header_len} exceeds file size")));
    }
    let value: serde_json::Value =
        serde_json::from_slice(&body[..header_len]).map_err(|e| corrupt(format!("header: {e}")))?;
    let found = value.get("version").and_then(|v| v.as_str()).unwrap_or("<missing>");
    if found != FORMAT_VERSION {
        return Err(Error::CheckpointVersion {
            expected: FORMAT_VERSION.into(),
            found: found.into(),
        });
    }
    let header: Header = serde_json::from_value(value).map_err(|e| corrupt(format!("header: {e}")))?;
    let payload = &body[header_len..];
    let mut expected_offset = 0;
    for e in &header.tensors {
        if e.offset != expected_offset {
            return Err(corrupt(format!("tensor {} starts at {} instead of {expected_offset}", e.name, e.offset)));
        }
        if e.shape.iter().product::<usize>() != e.count || e.shape.contains(&0) {
            return Err(corrupt(format!("tensor {} shape {:?} does not hold {} values", e.name, e.shape, e.count)));
        }
        expected_offset += e.count;
    }
    if payload.len() != 4 * expected_offset {
        return Err(corrupt(format!(
            "payload holds {} bytes, manifest needs {}",
            payload.len(),
            4 * expected_offset
        )));
    }
    let mut store = ParamStore::new();
    for e in &header.tensors {
        if store.id(&e.name).is_some() {
            return Err(corrupt(format!("tensor {} appears twice", e.name)));
        }
        let data = payload[4 * e.offset..4 * (e.offset + e.count)]
            .chunks_exact(4)
            .map(|c| T::lit(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64))
            .collect();
        store.insert(e.name.clone(), Tensor::from_vec(&e.shape, data)?);
    }
    Ok((header, store))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(format!("writing checkpoint {}", path.display()), e))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(format!("reading checkpoint {}", path.display()), e))
}

pub fn save_model<T: Real>(model: &MultiTaskModel<T>, path: impl AsRef<Path>, metadata: serde_json::Value) -> Result<()> {
    let config = CheckpointConfig::Model {
        model: model.config().clone(),
    };
    write(path.as_ref(), &encode(config, model.params(), metadata)?)
}

pub fn save_encoder<T: Real>(
    encoder: &EncoderArch,
    params: &ParamStore<T>,
    path: impl AsRef<Path>,
    metadata: serde_json::Value,
) -> Result<()> {
    if let Some((name, _)) = params.iter().find(|(n, _)| !n.starts_with("encoder.")) {
        return Err(Error::Validation(format!("encoder checkpoint cannot hold {name}")));
    }
    let config = CheckpointConfig::Encoder {
        encoder: encoder.clone(),
    };
    write(path.as_ref(), &encode(config, params, metadata)?)
}

/// Loads a full-model checkpoint.
pub fn load_model<T: Real>(path: impl AsRef<Path>) -> Result<(MultiTaskModel<T>, Header)> {
    let (header, store) = decode(&read(path.as_ref())?)?;
    let CheckpointConfig::Model { model } = &header.config else {
        return Err(Error::Validation(format!(
            "{} holds only an encoder; load it with the encoder-only option",
            path.as_ref().display()
        )));
    };
    let model = MultiTaskModel::from_params(model.clone(), store).map_err(|e| match e {
        Error::Shape(m) => Error::CorruptCheckpoint(m),
        other => other,
    })?;
    Ok((model, header))
}

/// Copies the encoder tensors of any checkpoint into `model`; other tensors
/// in `model` are left as they are.
pub fn load_encoder_into<T: Real>(model: &mut MultiTaskModel<T>, path: impl AsRef<Path>) -> Result<Header> {
    let (header, store) = decode::<T>(&read(path.as_ref())?)?;
    model.load_encoder(header.config.encoder(), &store)?;
    Ok(header)
}
