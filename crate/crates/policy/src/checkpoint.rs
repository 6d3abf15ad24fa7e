//! Versioned binary checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "JSPCKPT\0"
//! version      u32      currently 1
//! precision    u8       4 = f32, 8 = f64
//! d_h          u32
//! n_heads      u32
//! n_layers     u32
//! ff_width     u32
//! clip flag    u8       0 = none, 1 = clip value follows
//! score_clip   f64
//! param count  u64      scalars, then the flat parameter vector
//! stats count  u64      scalars, then the running statistics
//! ```
//!
//! Save followed by load reproduces parameters and running statistics
//! bit-exactly.

use crate::mat::Scalar;
use crate::model::{ModelConfig, PolicyModel, Precision};
use crate::PolicyError;
use std::path::Path;

const MAGIC: &[u8; 8] = b"JSPCKPT\0";
const VERSION: u32 = 1;

/// A checkpoint whose precision is only known at runtime.
pub enum LoadedModel {
    F32(PolicyModel<f32>),
    F64(PolicyModel<f64>),
}

impl LoadedModel {
    pub fn precision(&self) -> Precision {
        match self {
            LoadedModel::F32(_) => Precision::F32,
            LoadedModel::F64(_) => Precision::F64,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        match self {
            LoadedModel::F32(m) => m.config(),
            LoadedModel::F64(m) => m.config(),
        }
    }
}

/// Serializes a model to bytes.
pub fn to_bytes<T: Scalar>(model: &PolicyModel<T>) -> Vec<u8> {
    let cfg = model.config();
    let params = model.flat_params();
    let stats = model.running_stats();
    let mut out = Vec::with_capacity(64 + (params.len() + stats.len()) * T::BYTE_WIDTH);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(T::BYTE_WIDTH as u8);
    out.extend_from_slice(&(cfg.d_h as u32).to_le_bytes());
    out.extend_from_slice(&(cfg.n_heads as u32).to_le_bytes());
    out.extend_from_slice(&(cfg.n_layers as u32).to_le_bytes());
    out.extend_from_slice(&(cfg.ff_width as u32).to_le_bytes());
    match cfg.score_clip {
        None => {
            out.push(0);
            out.extend_from_slice(&0f64.to_le_bytes());
        }
        Some(c) => {
            out.push(1);
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        p.write_le(&mut out);
    }
    out.extend_from_slice(&(stats.len() as u64).to_le_bytes());
    for s in stats {
        s.write_le(&mut out);
    }
    out
}

pub fn save<T: Scalar>(model: &PolicyModel<T>, path: &Path) -> Result<(), PolicyError> {
    std::fs::write(path, to_bytes(model))?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], PolicyError> {
        if self.offset + n > self.bytes.len() {
            return Err(PolicyError::Checkpoint("unexpected end of file".into()));
        }
        let slice = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, PolicyError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, PolicyError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, PolicyError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, PolicyError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn from_bytes_typed<T: Scalar>(
    reader: &mut Reader<'_>,
    mut config: ModelConfig,
) -> Result<PolicyModel<T>, PolicyError> {
    config.precision = if T::BYTE_WIDTH == 4 {
        Precision::F32
    } else {
        Precision::F64
    };
    let mut model = PolicyModel::<T>::init(&config, 0)?;
    let param_count = reader.u64()? as usize;
    if param_count != model.param_count() {
        return Err(PolicyError::Checkpoint(format!(
            "parameter count {param_count} does not match config ({})",
            model.param_count()
        )));
    }
    let mut params = Vec::with_capacity(param_count);
    for _ in 0..param_count {
        params.push(T::read_le(reader.take(T::BYTE_WIDTH)?));
    }
    model.set_flat_params(&params);
    let stats_count = reader.u64()? as usize;
    let expected_stats = model.running_stats().len();
    if stats_count != expected_stats {
        return Err(PolicyError::Checkpoint(format!(
            "running statistics count {stats_count} does not match config ({expected_stats})"
        )));
    }
    let mut stats = Vec::with_capacity(stats_count);
    for _ in 0..stats_count {
        stats.push(T::read_le(reader.take(T::BYTE_WIDTH)?));
    }
    model.set_running_stats(&stats);
    Ok(model)
}

/// Deserializes a checkpoint, dispatching on its stored precision.
pub fn from_bytes(bytes: &[u8]) -> Result<LoadedModel, PolicyError> {
    let mut reader = Reader { bytes, offset: 0 };
    if reader.take(8)? != MAGIC {
        return Err(PolicyError::Checkpoint("bad magic".into()));
    }
    let version = reader.u32()?;
    if version != VERSION {
        return Err(PolicyError::Checkpoint(format!(
            "unsupported version {version}"
        )));
    }
    let precision = reader.u8()?;
    let config = ModelConfig {
        d_h: reader.u32()? as usize,
        n_heads: reader.u32()? as usize,
        n_layers: reader.u32()? as usize,
        ff_width: reader.u32()? as usize,
        score_clip: {
            let flag = reader.u8()?;
            let value = reader.f64()?;
            (flag == 1).then_some(value)
        },
        precision: Precision::F64,
    };
    let loaded = match precision {
        4 => LoadedModel::F32(from_bytes_typed::<f32>(&mut reader, config)?),
        8 => LoadedModel::F64(from_bytes_typed::<f64>(&mut reader, config)?),
        other => {
            return Err(PolicyError::Checkpoint(format!(
                "unknown precision tag {other}"
            )))
        }
    };
    if reader.offset != bytes.len() {
        return Err(PolicyError::Checkpoint("trailing bytes".into()));
    }
    Ok(loaded)
}

pub fn load(path: &Path) -> Result<LoadedModel, PolicyError> {
    from_bytes(&std::fs::read(path)?)
}
