//! Checkpoint container.
//!
//! Layout: 8-byte magic, manifest length as a little-endian u64, the UTF-8
//! JSON manifest, then the raw little-endian f32 data section. Tensors are
//! stored name-sorted; each manifest record carries the byte offset and
//! length within the data section and a SHA-256 of those bytes. The
//! vocabulary is written next to the checkpoint as `<file>.vocab.json`.

use std::fs;
use std::path::{Path, PathBuf};

use neural::{ParamStore, Tensor};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{Head, TrainConfig};
use super::model::Network;
use super::train::Model;
use crate::featurizer::Vocab;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SIMPDOM\0";
pub const FORMAT: &str = "simpdom-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub offset: u64,
    pub length: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub head: Head,
    pub config: TrainConfig,
    pub attributes: Vec<String>,
    pub vertical: String,
    pub train_sites: Vec<String>,
    /// File name of the vocabulary, relative to the checkpoint's directory.
    pub vocab_file: String,
    pub vocab_sha256: String,
    pub tensors: Vec<TensorRecord>,
    pub data_length: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn vocab_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.file_name().unwrap_or_default().to_os_string();
    name.push(".vocab.json");
    checkpoint.with_file_name(name)
}

/// Serializes the model into the container bytes plus the vocabulary JSON.
pub fn encode(model: &Model, vocab_file: &str) -> Result<(Vec<u8>, String)> {
    let vocab_json = model.vocab.to_json()?;
    let mut data = Vec::with_capacity(model.params.num_values() * 4);
    let mut tensors = Vec::with_capacity(model.params.len());
    for (name, t) in model.params.iter() {
        let offset = data.len();
        for v in t.data() {
            data.extend_from_slice(&v.to_le_bytes());
        }
        tensors.push(TensorRecord {
            name: name.clone(),
            shape: t.shape().to_vec(),
            dtype: "f32".into(),
            offset: offset as u64,
            length: (data.len() - offset) as u64,
            sha256: sha256_hex(&data[offset..]),
        });
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        version: VERSION,
        head: model.head(),
        config: model.config().clone(),
        attributes: model.attributes.clone(),
        vertical: model.vertical.clone(),
        train_sites: model.train_sites.clone(),
        vocab_file: vocab_file.into(),
        vocab_sha256: sha256_hex(vocab_json.as_bytes()),
        tensors,
        data_length: data.len() as u64,
    };
    let json = serde_json::to_vec(&manifest)?;
    let mut out = Vec::with_capacity(16 + json.len() + data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&data);
    Ok((out, vocab_json))
}

/// Parses container bytes, verifying lengths and checksums.
pub fn decode_manifest(bytes: &[u8]) -> Result<(Manifest, &[u8])> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::Corrupt("missing checkpoint header".into()));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let end = 16u64
        .checked_add(len)
        .filter(|&e| e <= bytes.len() as u64)
        .ok_or_else(|| Error::Corrupt(format!("manifest of {len} bytes exceeds file of {} bytes", bytes.len())))?
        as usize;
    let manifest: Manifest =
        serde_json::from_slice(&bytes[16..end]).map_err(|e| Error::Corrupt(format!("manifest: {e}")))?;
    if manifest.format != FORMAT || manifest.version != VERSION {
        return Err(Error::Corrupt(format!("unsupported format {} v{}", manifest.format, manifest.version)));
    }
    let data = &bytes[end..];
    if data.len() as u64 != manifest.data_length {
        return Err(Error::Corrupt(format!(
            "data section has {} bytes, manifest says {}",
            data.len(),
            manifest.data_length
        )));
    }
    Ok((manifest, data))
}

pub fn decode(bytes: &[u8], vocab_json: &str) -> Result<Model> {
    let (manifest, data) = decode_manifest(bytes)?;
    if sha256_hex(vocab_json.as_bytes()) != manifest.vocab_sha256 {
        return Err(Error::Corrupt(format!("vocabulary `{}` does not match its checksum", manifest.vocab_file)));
    }
    let vocab = Vocab::from_json(vocab_json)?;
    let mut params = ParamStore::new();
    for rec in &manifest.tensors {
        if rec.dtype != "f32" {
            return Err(Error::Corrupt(format!("tensor `{}` has dtype {}", rec.name, rec.dtype)));
        }
        let count: usize = rec.shape.iter().product();
        let range = rec
            .offset
            .checked_add(rec.length)
            .filter(|&e| e <= data.len() as u64 && rec.length == count as u64 * 4)
            .map(|e| rec.offset as usize..e as usize)
            .ok_or_else(|| Error::Corrupt(format!("tensor `{}` lies outside the data section", rec.name)))?;
        let raw = &data[range];
        if sha256_hex(raw) != rec.sha256 {
            return Err(Error::Corrupt(format!("checksum mismatch for tensor `{}`", rec.name)));
        }
        let values = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        params.insert(rec.name.clone(), Tensor::from_vec(&rec.shape, values)?);
    }
    if manifest.config.head != manifest.head {
        return Err(Error::Corrupt("head does not match the stored config".into()));
    }
    let network = Network::new(&manifest.config, &vocab, manifest.attributes.len())?;
    network.check(&params)?;
    Ok(Model {
        network,
        params,
        vocab,
        attributes: manifest.attributes,
        vertical: manifest.vertical,
        train_sites: manifest.train_sites,
    })
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let vpath = vocab_path(path);
    let vocab_file = vpath.file_name().unwrap_or_default().to_string_lossy().into_owned();
    let (bytes, vocab_json) = encode(model, &vocab_file)?;
    fs::write(&vpath, vocab_json).map_err(|e| Error::io(&vpath, e))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (manifest, _) = decode_manifest(&bytes)?;
    let vpath = path.with_file_name(&manifest.vocab_file);
    let vocab_json = fs::read_to_string(&vpath).map_err(|e| Error::io(&vpath, e))?;
    decode(&bytes, &vocab_json)
}

/// Reads only the manifest (for inspection and head checks).
pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode_manifest(&bytes)?.0)
}
