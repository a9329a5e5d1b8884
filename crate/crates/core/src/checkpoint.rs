//! Versioned checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! 8 bytes   magic "VZSQCKPT"
//! u32       format version (1)
//! u64       manifest length N
//! N bytes   UTF-8 JSON manifest
//! rest      tensor data, in manifest order, each element `dtype`-sized
//! ```
//!
//! The manifest records hyperparameters, both vocabularies, the maximum
//! sequence length, the tensor index (name, shape, byte offset) and a SHA-256
//! of the tensor data.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::linalg::Real;
use crate::model::{Hyper, ModelParams, Tensor};
use crate::tokenizer::{Vocabs, Vocabulary};

pub const MAGIC: &[u8; 8] = b"VZSQCKPT";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint i/o on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}

fn corrupt(msg: impl Into<String>) -> CheckpointError {
    CheckpointError::Corrupt(msg.into())
}

/// Everything needed to run a trained model.
#[derive(Debug, Clone)]
pub struct Model<T> {
    pub params: ModelParams<T>,
    pub vocabs: Vocabs,
    pub max_len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    dtype: String,
    hyper: Hyper,
    max_len: usize,
    specials: Vec<String>,
    placeholders: String,
    source_symbols: String,
    target_symbols: String,
    tensors: Vec<TensorEntry>,
    data_bytes: usize,
    data_sha256: String,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Serializes a model into checkpoint bytes.
pub fn to_bytes<T: Real>(model: &Model<T>) -> Vec<u8> {
    let mut data = Vec::with_capacity(model.params.num_params() * T::BYTES);
    let mut tensors = Vec::new();
    model.params.visit(|name, t| {
        tensors.push(TensorEntry {
            name: name.to_string(),
            shape: t.shape.clone(),
            offset: data.len(),
        });
        t.data.iter().for_each(|v| v.write_le(&mut data));
    });
    let manifest = Manifest {
        dtype: T::DTYPE.to_string(),
        hyper: model.params.hyper,
        max_len: model.max_len,
        specials: ["<pad>", "<sos>", "<eos>", "<unk>"].map(String::from).to_vec(),
        placeholders: "str<i>, num<i>".into(),
        source_symbols: model.vocabs.source.symbols().iter().collect(),
        target_symbols: model.vocabs.target.symbols().iter().collect(),
        tensors,
        data_bytes: data.len(),
        data_sha256: hex(&Sha256::digest(&data)),
    };
    let json = serde_json::to_vec(&manifest).expect("manifest serializes");
    let mut out = Vec::with_capacity(HEADER_LEN + json.len() + data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&data);
    out
}

fn read_tensor<S: Real, T: Real>(bytes: &[u8], len: usize) -> Vec<T> {
    bytes
        .chunks_exact(S::BYTES)
        .take(len)
        .map(|c| T::from_f64_lossy(S::read_le(c).to_f64_lossless()))
        .collect()
}

/// Parses checkpoint bytes. Tensors stored in another precision are cast.
pub fn from_bytes<T: Real>(bytes: &[u8]) -> Result<Model<T>, CheckpointError> {
    if bytes.len() < HEADER_LEN {
        return Err(corrupt(format!("file of {} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..8] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(corrupt(format!("unsupported format version {version}")));
    }
    let mlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = &bytes[HEADER_LEN..];
    if mlen > body.len() {
        return Err(corrupt("truncated manifest"));
    }
    let manifest: Manifest =
        serde_json::from_slice(&body[..mlen]).map_err(|e| corrupt(format!("unreadable manifest: {e}")))?;
    let data = &body[mlen..];
    if data.len() != manifest.data_bytes {
        return Err(corrupt(format!(
            "tensor data is {} bytes, manifest says {}",
            data.len(),
            manifest.data_bytes
        )));
    }
    if hex(&Sha256::digest(data)) != manifest.data_sha256 {
        return Err(corrupt("tensor data checksum mismatch"));
    }
    let elem = match manifest.dtype.as_str() {
        "f32" => 4,
        "f64" => 8,
        other => return Err(corrupt(format!("unknown dtype {other}"))),
    };
    let vocabs = Vocabs {
        source: Vocabulary::from_symbols(manifest.source_symbols.chars().collect()),
        target: Vocabulary::from_symbols(manifest.target_symbols.chars().collect()),
    };
    let hyper = manifest.hyper;
    if vocabs.source.len() != hyper.src_vocab || vocabs.target.len() != hyper.tgt_vocab {
        return Err(corrupt(format!(
            "vocabulary sizes {}/{} do not match embedding rows {}/{}",
            vocabs.source.len(),
            vocabs.target.len(),
            hyper.src_vocab,
            hyper.tgt_vocab
        )));
    }
    if hyper.layers == 0 || hyper.d_cell == 0 || hyper.d_emb == 0 || hyper.d_attn == 0 {
        return Err(corrupt("degenerate hyperparameters"));
    }
    if manifest.max_len < 2 {
        return Err(corrupt("max_len below 2"));
    }
    let mut params = ModelParams::<T>::zeros(hyper);
    let mut expected = Vec::new();
    params.visit(|name, t| expected.push((name.to_string(), t.shape.clone())));
    if expected.len() != manifest.tensors.len() {
        return Err(corrupt(format!(
            "expected {} tensors, found {}",
            expected.len(),
            manifest.tensors.len()
        )));
    }
    let mut loaded: Vec<Tensor<T>> = Vec::with_capacity(expected.len());
    for ((name, shape), entry) in expected.iter().zip(&manifest.tensors) {
        if *name != entry.name {
            return Err(corrupt(format!("expected tensor {name}, found {}", entry.name)));
        }
        if *shape != entry.shape {
            return Err(corrupt(format!(
                "tensor {name} has shape {:?}, model expects {shape:?}",
                entry.shape
            )));
        }
        let len: usize = shape.iter().product();
        let end = entry.offset + len * elem;
        if end > data.len() {
            return Err(corrupt(format!("tensor {name} runs past the end of the data")));
        }
        let raw = &data[entry.offset..end];
        let values = if elem == 4 { read_tensor::<f32, T>(raw, len) } else { read_tensor::<f64, T>(raw, len) };
        if values.iter().any(|v| !v.is_finite()) {
            return Err(corrupt(format!("tensor {name} holds non-finite values")));
        }
        loaded.push(Tensor { shape: shape.clone(), data: values });
    }
    let mut it = loaded.into_iter();
    params.visit_mut(|_, t| *t = it.next().expect("counted above"));
    Ok(Model { params, vocabs, max_len: manifest.max_len })
}

/// Writes to a sibling temporary file, then renames over `path`.
pub fn save<T: Real>(model: &Model<T>, path: &Path) -> Result<(), CheckpointError> {
    let io = |source| CheckpointError::Io { path: path.to_path_buf(), source };
    let bytes = to_bytes(model);
    let mut tmp_name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(&bytes).map_err(io)?;
        f.sync_all().map_err(io)?;
    }
    fs::rename(&tmp, path).map_err(io)
}

pub fn load<T: Real>(path: &Path) -> Result<Model<T>, CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io { path: path.to_path_buf(), source })?;
    from_bytes(&bytes)
}

/// Short content hash identifying a checkpoint file.
pub fn checkpoint_id(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes)[..6])
}
