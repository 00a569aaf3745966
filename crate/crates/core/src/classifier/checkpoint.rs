//! On-disk format: the magic bytes `FGL1`, a little-endian u64 header
//! length, a UTF-8 JSON header, then raw little-endian f32 tensors in the
//! order of the header's tensor directory.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::arch::ArchConfig;
use super::model::Model;
use super::train::{EpochMetrics, TrainConfig, Trained};
use crate::error::{io_err, Error, Result};
use crate::tensor::{RmsProp, RmsPropConfig};

pub const MAGIC: &[u8; 4] = b"FGL1";
pub const FORMAT_VERSION: u32 = 1;

/// Everything needed to resume training or run inference.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model<f32>,
    pub optimizer: RmsProp<f32>,
    /// Completed epochs.
    pub epoch: usize,
    pub history: Vec<EpochMetrics>,
    pub train_config: Option<TrainConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the payload.
    offset: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
struct BatchNormMeta {
    momentum: f32,
    epsilon: f32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    version: u32,
    arch: ArchConfig,
    epoch: usize,
    history: Vec<EpochMetrics>,
    optimizer: RmsPropConfig,
    batchnorm: Vec<BatchNormMeta>,
    train_config: Option<TrainConfig>,
    tensors: Vec<TensorEntry>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    /// Freshly initialized model with zeroed optimizer state.
    pub fn init(arch: &ArchConfig, seed: u64, optimizer: RmsPropConfig) -> Result<Self> {
        let model = Model::init(arch, seed)?;
        let optimizer = RmsProp::new(optimizer, model.params().iter().map(|p| p.len()));
        Ok(Self {
            model,
            optimizer,
            epoch: 0,
            history: Vec::new(),
            train_config: None,
        })
    }

    pub fn from_trained(trained: Trained, config: &TrainConfig) -> Self {
        Self {
            epoch: trained.history.len(),
            model: trained.model,
            optimizer: trained.optimizer,
            history: trained.history,
            train_config: Some(config.clone()),
        }
    }

    /// Named tensors in file order: parameters, running statistics, then
    /// optimizer accumulators.
    fn tensors(&self) -> Vec<(String, Vec<usize>, &[f32])> {
        let names = self.model.param_names();
        let shapes = self.model.param_shapes();
        let mut out: Vec<(String, Vec<usize>, &[f32])> = Vec::new();
        for ((n, s), p) in names.iter().zip(&shapes).zip(self.model.params()) {
            out.push((n.clone(), s.clone(), p));
        }
        for (i, b) in self.model.blocks.iter().enumerate() {
            out.push((format!("block{i}.bn.running_mean"), vec![b.bn.channels()], &b.bn.running_mean[..]));
            out.push((format!("block{i}.bn.running_var"), vec![b.bn.channels()], &b.bn.running_var[..]));
        }
        for ((n, s), st) in names.iter().zip(&shapes).zip(&self.optimizer.states) {
            out.push((format!("rmsprop.{n}"), s.clone(), &st.accumulator[..]));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f32]> {
        let Model { blocks, fc1, fc2, .. } = &mut self.model;
        let mut params: Vec<&mut [f32]> = Vec::new();
        let mut stats: Vec<&mut [f32]> = Vec::new();
        for b in blocks.iter_mut() {
            params.push(b.conv.weights.data_mut());
            params.push(&mut b.conv.bias);
            params.push(&mut b.bn.gamma);
            params.push(&mut b.bn.beta);
            stats.push(&mut b.bn.running_mean);
            stats.push(&mut b.bn.running_var);
        }
        params.extend([&mut fc1.weights.data[..], &mut fc1.bias[..], &mut fc2.weights.data[..], &mut fc2.bias[..]]);
        params.extend(stats);
        params.extend(self.optimizer.states.iter_mut().map(|s| &mut s.accumulator[..]));
        params
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut dir = Vec::new();
        let mut offset = 0u64;
        for (name, shape, data) in self.tensors() {
            dir.push(TensorEntry { name, shape, offset });
            offset += 4 * data.len() as u64;
        }
        let header = Header {
            version: FORMAT_VERSION,
            arch: self.model.arch.clone(),
            epoch: self.epoch,
            history: self.history.clone(),
            optimizer: self.optimizer.config,
            batchnorm: self
                .model
                .blocks
                .iter()
                .map(|b| BatchNormMeta {
                    momentum: b.bn.momentum,
                    epsilon: b.bn.epsilon,
                })
                .collect(),
            train_config: self.train_config.clone(),
            tensors: dir,
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(12 + json.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, _, data) in self.tensors() {
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    /// Parses a checkpoint, rejecting wrong magic or version, malformed
    /// headers, mismatched tensor directories and truncated payloads.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(bad("not a checkpoint file (bad magic or too short)"));
        }
        let header_len = u64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes"));
        let header_end = 12u64
            .checked_add(header_len)
            .filter(|&e| e <= bytes.len() as u64)
            .ok_or_else(|| bad("truncated header"))? as usize;
        let header: Header =
            serde_json::from_slice(&bytes[12..header_end]).map_err(|e| bad(format!("malformed header: {e}")))?;
        if header.version != FORMAT_VERSION {
            return Err(bad(format!("format version {} is not supported (expected {FORMAT_VERSION})", header.version)));
        }
        let mut ck = Self::init(&header.arch, 0, header.optimizer)?;
        if header.batchnorm.len() != ck.model.blocks.len() {
            return Err(bad("batchnorm metadata does not match the architecture"));
        }
        for (b, meta) in ck.model.blocks.iter_mut().zip(&header.batchnorm) {
            b.bn.momentum = meta.momentum;
            b.bn.epsilon = meta.epsilon;
        }
        let expected: Vec<(String, Vec<usize>)> = ck.tensors().into_iter().map(|(n, s, _)| (n, s)).collect();
        if expected.len() != header.tensors.len() {
            return Err(bad(format!("expected {} tensors, directory lists {}", expected.len(), header.tensors.len())));
        }
        let payload = &bytes[header_end..];
        let mut offset = 0u64;
        for ((name, shape), entry) in expected.iter().zip(&header.tensors) {
            if &entry.name != name || &entry.shape != shape || entry.offset != offset {
                return Err(bad(format!("tensor directory entry {entry:?} does not match expected {name} {shape:?} at {offset}")));
            }
            offset += 4 * shape.iter().product::<usize>() as u64;
        }
        if (payload.len() as u64) < offset {
            return Err(bad(format!("truncated payload: {} of {offset} bytes", payload.len())));
        }
        if payload.len() as u64 > offset {
            return Err(bad(format!("{} trailing bytes after the payload", payload.len() as u64 - offset)));
        }
        let mut chunks = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
        for t in ck.tensors_mut() {
            for v in t.iter_mut() {
                *v = chunks.next().expect("payload length checked");
            }
        }
        ck.epoch = header.epoch;
        ck.history = header.history;
        ck.train_config = header.train_config;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        std::fs::write(path, self.to_bytes()?).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(io_err(path))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}
