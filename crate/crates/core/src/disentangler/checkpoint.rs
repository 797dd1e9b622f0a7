//! Model checkpoints.
//!
//! ```text
//! magic        8 bytes   "CRLCKPT\0"
//! version      u32
//! header_len   u64
//! header       JSON (CheckpointHeader)
//! lhat         m*d f64 little-endian, row-major
//! checksum     32 bytes  SHA-256 of every preceding byte
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{LossWeights, TrainConfig, UnmixingModel};
use crate::dataset::{write_row_major, ByteReader};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"CRLCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub m: usize,
    pub d: usize,
    pub init_seed: u64,
    pub epoch: usize,
    pub config: TrainConfig,
    pub weights: LossWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub model: UnmixingModel,
}

impl Checkpoint {
    pub fn new(model: UnmixingModel, config: TrainConfig, weights: LossWeights) -> Self {
        Checkpoint {
            header: CheckpointHeader {
                m: model.m(),
                d: model.d(),
                init_seed: model.init_seed(),
                epoch: config.epochs,
                config,
                weights,
            },
            model,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
        buf.extend_from_slice(&header);
        write_row_major(&mut buf, self.model.lhat());
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(&digest);
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 12 + 32 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::Format("not a checkpoint".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Checksum);
        }
        let mut r = ByteReader::new(&body[MAGIC.len()..]);
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let len = r.u64()? as usize;
        let header: CheckpointHeader = serde_json::from_slice(r.take(len)?)?;
        let lhat = r.matrix(header.m, header.d)?;
        if !r.is_empty() {
            return Err(Error::Format("trailing bytes in checkpoint".into()));
        }
        let model = UnmixingModel::from_matrix(lhat, header.init_seed);
        Ok(Checkpoint { header, model })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
