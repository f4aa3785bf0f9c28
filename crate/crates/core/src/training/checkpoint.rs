//! Binary checkpoint format.
//!
//! ```text
//! "SFDM"            magic
//! u32               format version
//! u64 + bytes       JSON header: model config, vocabulary, training
//!                   config, schedule betas, step, optimizer hyperparameters
//! table × 3         parameters, first moments, second moments
//! ```
//!
//! A table is a `u32` entry count followed by, per entry in name order, a
//! `u32`-length-prefixed UTF-8 name, a `u32` rank, `u64` extents and the
//! values as `f64`. All integers and floats are little-endian.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffusion::NoiseSchedule;
use crate::model::{Model, ModelConfig, ParamStore};
use crate::numerics::Tensor;
use crate::text::Vocab;

use super::{AdamW, OptimizerState, TrainConfig, TrainError};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SFDM";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Upper bound on header and name lengths, to reject garbage before allocating.
const MAX_HEADER_BYTES: u64 = 64 << 20;
const MAX_NAME_BYTES: u32 = 4096;
const MAX_RANK: u32 = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub vocab: Vocab,
    pub schedule: NoiseSchedule,
    pub optimizer: OptimizerState,
    pub train: TrainConfig,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    model: ModelConfig,
    vocab: Vocab,
    train: TrainConfig,
    schedule: NoiseSchedule,
    step: u64,
    optimizer: AdamW,
}

impl Checkpoint {
    pub fn step(&self) -> u64 {
        self.optimizer.step
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            model: self.model.config().clone(),
            vocab: self.vocab.clone(),
            train: self.train.clone(),
            schedule: self.schedule.clone(),
            step: self.optimizer.step,
            optimizer: self.optimizer.hyper,
        };
        let json = serde_json::to_vec(&header).expect("checkpoint header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for table in [
            self.model.params(),
            &self.optimizer.first_moment,
            &self.optimizer.second_moment,
        ] {
            write_table(&mut out, table);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TrainError> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(TrainError::BadMagic);
        }
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(TrainError::BadVersion(version));
        }
        let len = read_u64(&mut r)?;
        if len > MAX_HEADER_BYTES {
            return Err(TrainError::Corrupt(format!("header length {len}")));
        }
        let mut json = vec![0u8; len as usize];
        read_exact(&mut r, &mut json)?;
        let header: Header = serde_json::from_slice(&json).map_err(|e| TrainError::Corrupt(format!("header: {e}")))?;
        header.train.validate()?;
        if header.vocab.len() != header.model.vocab_size {
            return Err(TrainError::Corrupt(format!(
                "vocabulary has {} tokens, model expects {}",
                header.vocab.len(),
                header.model.vocab_size
            )));
        }
        if header.schedule.steps() != header.model.diffusion_steps {
            return Err(TrainError::Corrupt(format!(
                "schedule has {} steps, model expects {}",
                header.schedule.steps(),
                header.model.diffusion_steps
            )));
        }

        let params = read_table(&mut r)?;
        let first = read_table(&mut r)?;
        let second = read_table(&mut r)?;
        if !r.is_empty() {
            return Err(TrainError::Corrupt(format!("{} trailing bytes", r.len())));
        }
        let model = Model::from_params(header.model, params)?;
        let shapes = model.params().shape_table();
        for (what, table) in [("first moment", &first), ("second moment", &second)] {
            if table.shape_table() != shapes {
                return Err(TrainError::Corrupt(format!("{what} table does not match the parameters")));
            }
        }
        Ok(Checkpoint {
            model,
            vocab: header.vocab,
            schedule: header.schedule,
            optimizer: OptimizerState {
                hyper: header.optimizer,
                step: header.step,
                first_moment: first,
                second_moment: second,
            },
            train: header.train,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        let io_err = |source| TrainError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut f = fs::File::create(path).map_err(io_err)?;
        f.write_all(&self.to_bytes()).map_err(io_err)?;
        f.sync_all().map_err(io_err)
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let bytes = fs::read(path).map_err(|source| TrainError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Checkpoint::from_bytes(&bytes)
    }
}

fn write_table(out: &mut Vec<u8>, table: &ParamStore) {
    out.extend_from_slice(&(table.len() as u32).to_le_bytes());
    for (name, t) in table.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<(), TrainError> {
    Read::read_exact(r, buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => TrainError::Truncated,
        _ => TrainError::Corrupt(e.to_string()),
    })
}

fn read_u32(r: &mut &[u8]) -> Result<u32, TrainError> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut &[u8]) -> Result<u64, TrainError> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_table(r: &mut &[u8]) -> Result<ParamStore, TrainError> {
    let count = read_u32(r)?;
    let mut table = ParamStore::new();
    for _ in 0..count {
        let name_len = read_u32(r)?;
        if name_len > MAX_NAME_BYTES {
            return Err(TrainError::Corrupt(format!("name length {name_len}")));
        }
        let mut name = vec![0u8; name_len as usize];
        read_exact(r, &mut name)?;
        let name = String::from_utf8(name).map_err(|_| TrainError::Corrupt("parameter name is not UTF-8".into()))?;
        let rank = read_u32(r)?;
        if rank > MAX_RANK {
            return Err(TrainError::Corrupt(format!("{name} has rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank as usize);
        let mut numel: u64 = 1;
        for _ in 0..rank {
            let d = read_u64(r)?;
            numel = numel
                .checked_mul(d)
                .ok_or_else(|| TrainError::Corrupt(format!("{name} shape overflows")))?;
            shape.push(d as usize);
        }
        if numel.saturating_mul(8) > r.len() as u64 {
            return Err(TrainError::Truncated);
        }
        let mut data = Vec::with_capacity(numel as usize);
        for _ in 0..numel {
            let mut b = [0u8; 8];
            read_exact(r, &mut b)?;
            data.push(f64::from_le_bytes(b));
        }
        if table.get(&name).is_some() {
            return Err(TrainError::Corrupt(format!("duplicate entry {name}")));
        }
        let tensor = Tensor::new(&shape, data).map_err(|e| TrainError::Corrupt(e.to_string()))?;
        table.insert(name, tensor);
    }
    Ok(table)
}
