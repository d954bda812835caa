//! Checkpoints: a named-tensor table plus a JSON manifest.
//!
//! `tensors.ept` holds `EPT1`, a `u32` entry count, then per entry a `u32`
//! name length, the UTF-8 name, a `u8` dtype tag (0 = f32, 1 = f64), `u32`
//! rows and cols, and the little-endian payload. Parameters appear under
//! their own names in insertion order; optimizer moments follow as
//! `adamw.m/<name>` and `adamw.v/<name>`.
//!
//! `checkpoint.json` carries the training config, its hash, the model
//! shape, step counters and loss history.

use std::fs;
use std::path::{Path, PathBuf};

use echoplan_core::cfc::LossBundle;
use echoplan_core::optim::{AdamW, AdamWConfig, Moments};
use echoplan_core::trainer::{Checkpoint, TrainConfig};
use echoplan_core::{ModelConfig, ModelParams, NavigationCommand, Tensor};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{FormatError, Result};

pub const MAGIC: &[u8; 4] = b"EPT1";
pub const TENSORS_FILE: &str = "tensors.ept";
pub const MANIFEST_FILE: &str = "checkpoint.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    F64,
}

impl DType {
    fn tag(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
        }
    }

    fn from_tag(t: u8) -> Option<Self> {
        match t {
            0 => Some(DType::F32),
            1 => Some(DType::F64),
            _ => None,
        }
    }

    fn width(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

pub fn encode_tensors(entries: &[(String, &Tensor)], dtype: DType) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, t) in entries {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.push(dtype.tag());
        buf.extend_from_slice(&(t.rows as u32).to_le_bytes());
        buf.extend_from_slice(&(t.cols as u32).to_le_bytes());
        for v in &t.data {
            match dtype {
                DType::F32 => buf.extend_from_slice(&(*v as f32).to_le_bytes()),
                DType::F64 => buf.extend_from_slice(&v.to_le_bytes()),
            }
        }
    }
    buf
}

pub fn decode_tensors(bytes: &[u8], path: &Path) -> Result<Vec<(String, Tensor)>> {
    let malformed = |field: &'static str| FormatError::MalformedHeader {
        path: path.to_path_buf(),
        field,
    };
    let mut pos = 0usize;
    let mut take = |n: usize, field: &'static str| -> Result<&[u8]> {
        let out = bytes.get(pos..pos + n).ok_or(malformed(field))?;
        pos += n;
        Ok(out)
    };
    let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize;
    if take(4, "magic")? != MAGIC {
        return Err(malformed("magic"));
    }
    let count = u32_at(take(4, "count")?);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let len = u32_at(take(4, "name_len")?);
        let name = std::str::from_utf8(take(len, "name")?).map_err(|_| malformed("name"))?.to_string();
        let dtype = DType::from_tag(take(1, "dtype")?[0]).ok_or(malformed("dtype"))?;
        let rows = u32_at(take(4, "rows")?);
        let cols = u32_at(take(4, "cols")?);
        let raw = take(rows * cols * dtype.width(), "payload")?;
        let data = match dtype {
            DType::F32 => raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                .collect(),
            DType::F64 => raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect(),
        };
        out.push((name, Tensor::from_vec(rows, cols, data)));
    }
    if pos != bytes.len() {
        return Err(FormatError::TrailingBytes {
            path: path.to_path_buf(),
            extra: bytes.len() - pos,
        });
    }
    Ok(out)
}

/// SHA-256 of the config's canonical JSON.
pub fn config_hash(config: &TrainConfig) -> String {
    let json = serde_json::to_vec(config).expect("config serializes");
    hex::encode(Sha256::digest(&json))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub format: String,
    pub tensors: String,
    pub dtype: DType,
    pub config: TrainConfig,
    pub config_hash: String,
    pub model: ModelConfig,
    pub command_order: Vec<NavigationCommand>,
    pub step: usize,
    pub optimizer: AdamWConfig,
    /// Update count of each parameter's moments, in table order.
    pub optimizer_steps: Vec<u64>,
    pub history: Vec<LossBundle>,
}

/// Writes `dir/tensors.ept` and `dir/checkpoint.json`.
pub fn save_checkpoint(ck: &Checkpoint, dir: &Path, dtype: DType) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| FormatError::io(dir, e))?;
    let mut entries: Vec<(String, &Tensor)> = ck.params.iter().map(|(_, n, t)| (n.to_string(), t)).collect();
    let names: Vec<String> = entries.iter().map(|(n, _)| n.clone()).collect();
    let moments: Vec<(Tensor, Tensor)> = ck
        .params
        .iter()
        .zip(&ck.optimizer.state)
        .map(|((_, _, t), m)| {
            (
                Tensor::from_vec(t.rows, t.cols, m.m.clone()),
                Tensor::from_vec(t.rows, t.cols, m.v.clone()),
            )
        })
        .collect();
    for (n, (m, v)) in names.iter().zip(&moments) {
        entries.push((format!("adamw.m/{n}"), m));
        entries.push((format!("adamw.v/{n}"), v));
    }
    let tensors_path = dir.join(TENSORS_FILE);
    fs::write(&tensors_path, encode_tensors(&entries, dtype)).map_err(|e| FormatError::io(&tensors_path, e))?;

    let manifest = CheckpointManifest {
        format: String::from("EPT1"),
        tensors: String::from(TENSORS_FILE),
        dtype,
        config: ck.config.clone(),
        config_hash: config_hash(&ck.config),
        model: *ck.params.config(),
        command_order: NavigationCommand::ALL.to_vec(),
        step: ck.step,
        optimizer: ck.optimizer.config,
        optimizer_steps: ck.optimizer.state.iter().map(|m| m.steps).collect(),
        history: ck.history.clone(),
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| FormatError::json(&manifest_path, e))?;
    fs::write(&manifest_path, json).map_err(|e| FormatError::io(&manifest_path, e))?;
    Ok(vec![tensors_path, manifest_path])
}

pub fn load_manifest(dir: &Path) -> Result<CheckpointManifest> {
    let path = dir.join(MANIFEST_FILE);
    let raw = fs::read(&path).map_err(|e| FormatError::io(&path, e))?;
    serde_json::from_slice(&raw).map_err(|e| FormatError::json(&path, e))
}

/// Loads a checkpoint written by [`save_checkpoint`], checking the tensor
/// table against the architecture its manifest declares.
pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest = load_manifest(dir)?;
    let invalid = |field: &'static str, value: String| FormatError::InvalidValue {
        path: manifest_path.clone(),
        field,
        value,
    };
    if manifest.config_hash != config_hash(&manifest.config) {
        return Err(invalid("config_hash", manifest.config_hash.clone()));
    }
    if manifest.model != manifest.config.model_config() {
        return Err(invalid("model", format!("{:?}", manifest.model)));
    }
    if manifest.command_order != NavigationCommand::ALL {
        return Err(invalid("command_order", format!("{:?}", manifest.command_order)));
    }
    let tensors_path = dir.join(&manifest.tensors);
    let bytes = fs::read(&tensors_path).map_err(|e| FormatError::io(&tensors_path, e))?;
    let table = decode_tensors(&bytes, &tensors_path)?;

    let reference = ModelParams::init(manifest.model, 0);
    let n = reference.len();
    let expected = 3 * n;
    if table.len() != expected {
        return Err(FormatError::DimensionMismatch {
            path: tensors_path,
            field: "tensor_count",
            expected: expected as u64,
            actual: table.len() as u64,
        });
    }
    if manifest.optimizer_steps.len() != n {
        return Err(FormatError::DimensionMismatch {
            path: manifest_path,
            field: "optimizer_steps",
            expected: n as u64,
            actual: manifest.optimizer_steps.len() as u64,
        });
    }
    let mut params = ModelParams::empty(manifest.model);
    let mut state = Vec::with_capacity(n);
    for (i, (_, name, t)) in reference.iter().enumerate() {
        let check = |entry: &(String, Tensor), want: &str| {
            if entry.0 != want {
                return Err(FormatError::InvalidValue {
                    path: tensors_path.clone(),
                    field: "tensor_name",
                    value: format!("expected `{want}`, found `{}`", entry.0),
                });
            }
            if entry.1.shape() != t.shape() {
                return Err(FormatError::InvalidValue {
                    path: tensors_path.clone(),
                    field: "tensor_shape",
                    value: format!("`{want}` expected {:?}, found {:?}", t.shape(), entry.1.shape()),
                });
            }
            Ok(())
        };
        check(&table[i], name)?;
        let m = &table[n + 2 * i];
        let v = &table[n + 2 * i + 1];
        check(m, &format!("adamw.m/{name}"))?;
        check(v, &format!("adamw.v/{name}"))?;
        params.insert(name, table[i].1.clone());
        state.push(Moments {
            steps: manifest.optimizer_steps[i],
            m: m.1.data.clone(),
            v: v.1.data.clone(),
        });
    }
    Ok(Checkpoint {
        params,
        optimizer: AdamW {
            config: manifest.optimizer,
            state,
        },
        config: manifest.config,
        history: manifest.history,
        step: manifest.step,
    })
}

/// Fresh, untrained checkpoint for `config`.
pub fn initial_checkpoint(config: &TrainConfig) -> Checkpoint {
    let params = ModelParams::init(config.model_config(), config.seed);
    let optimizer = AdamW::new(config.optimizer(), &params);
    Checkpoint {
        params,
        optimizer,
        config: config.clone(),
        history: Vec::new(),
        step: 0,
    }
}
