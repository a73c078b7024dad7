//! Binary checkpoint: an 8-byte magic, a little-endian u64 header length, a
//! JSON header describing the config and tensor shapes, then every tensor as
//! little-endian f64 in header order.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ModelConfig, ModelParams, TrainedModel};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"TFXCKPT\n";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub initial_loss: f64,
    pub loss_trace: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    config: ModelConfig,
    tensors: Vec<TensorInfo>,
    initial_loss: f64,
    loss_trace: Vec<f64>,
}

#[derive(Serialize, Deserialize, PartialEq, Debug)]
struct TensorInfo {
    name: String,
    shape: Vec<usize>,
}

impl From<TrainedModel> for Checkpoint {
    fn from(m: TrainedModel) -> Self {
        Self {
            params: m.params,
            initial_loss: m.initial_loss,
            loss_trace: m.loss_trace,
        }
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn save(&self) -> Result<Vec<u8>> {
        let tensors = self.params.tensors();
        let header = Header {
            version: CHECKPOINT_VERSION,
            config: self.params.config.clone(),
            tensors: tensors
                .iter()
                .map(|(name, shape, _)| TensorInfo {
                    name: name.clone(),
                    shape: shape.clone(),
                })
                .collect(),
            initial_loss: self.initial_loss,
            loss_trace: self.loss_trace.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        let body: usize = tensors.iter().map(|(_, _, t)| t.len() * 8).sum();
        let mut out = Vec::with_capacity(16 + json.len() + body);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, _, t) in &tensors {
            for v in t.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn load(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let json_end = 16usize
            .checked_add(len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(&bytes[16..json_end])
            .map_err(|e| bad(format!("header: {e}")))?;
        if header.version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                kind: "checkpoint",
                found: header.version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let mut params = ModelParams::init(&header.config)?;
        let expected: Vec<TensorInfo> = params
            .tensors()
            .into_iter()
            .map(|(name, shape, _)| TensorInfo { name, shape })
            .collect();
        if expected != header.tensors {
            return Err(bad("tensor shapes do not match the config"));
        }
        let mut pos = json_end;
        for t in params.tensors_mut() {
            let need = t.len() * 8;
            if bytes.len() - pos < need {
                return Err(bad("truncated tensor data"));
            }
            for (v, chunk) in t.iter_mut().zip(bytes[pos..pos + need].chunks_exact(8)) {
                *v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
            }
            pos += need;
        }
        if pos != bytes.len() {
            return Err(bad(format!("{} trailing bytes", bytes.len() - pos)));
        }
        Ok(Self {
            params,
            initial_loss: header.initial_loss,
            loss_trace: header.loss_trace,
        })
    }

    pub fn write(&self, path: &std::path::Path) -> Result<String> {
        let bytes = self.save()?;
        std::fs::write(path, &bytes)?;
        Ok(digest_bytes(&bytes))
    }

    pub fn read(path: &std::path::Path) -> Result<(Self, String)> {
        let bytes = std::fs::read(path)?;
        Ok((Self::load(&bytes)?, digest_bytes(&bytes)))
    }

    /// SHA-256 of the serialized bytes.
    pub fn digest(&self) -> Result<String> {
        Ok(digest_bytes(&self.save()?))
    }
}

pub(crate) fn digest_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let cfg = ModelConfig {
            max_seq_len: 6,
            alphabet_size: 37,
            hidden_size: 4,
            num_layers: 2,
            dense_size: 8,
            num_classes: 3,
            batch_size: 2,
            learning_rate: 0.01,
            epochs: 1,
            init_seed: 9,
        };
        Checkpoint {
            params: ModelParams::init(&cfg).unwrap(),
            initial_loss: 1.1,
            loss_trace: vec![1.0, 0.5],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample();
        let bytes = c.save().unwrap();
        let back = Checkpoint::load(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.save().unwrap(), bytes);
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = sample().save().unwrap();
        assert!(Checkpoint::load(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(
            matches!(Checkpoint::load(&extra), Err(Error::Checkpoint(m)) if m.contains("trailing"))
        );
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(Checkpoint::load(&bad_magic).is_err());
        assert!(Checkpoint::load(b"").is_err());
    }
}
