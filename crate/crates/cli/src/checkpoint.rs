//! Versioned binary checkpoint.
//!
//! Byte layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes  "GRHDCKPT"
//! version      u32      FORMAT_VERSION
//! dtype        u8       0 = f32, 1 = f64
//! meta_len     u64
//! meta         meta_len bytes of UTF-8 JSON (CheckpointMeta)
//! count        u32      number of tensors
//! per tensor:
//!   name_len   u32
//!   name       name_len bytes of UTF-8
//!   rank       u32
//!   dims       rank x u64
//!   values     prod(dims) values, 4 or 8 bytes each per dtype
//! checksum     32 bytes, SHA-256 of every preceding byte
//! ```
//!
//! Tensors cover parameters and batch-norm running statistics, in the
//! model's own order.

use std::path::Path;

use grhd::autodiff::Tensor;
use grhd::dataset::AttributeGroupTable;
use grhd::dsp::StandardizeStats;
use grhd::model::{GrhdModel, ModelConfig, TrainConfig};
use grhd::{DType, Scalar};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_err, CliError};

pub const MAGIC: &[u8; 8] = b"GRHDCKPT";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("checkpoint format version {found}, this build reads version {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint checksum mismatch (file corrupted)")]
    ChecksumMismatch,
    #[error("checkpoint truncated")]
    Truncated,
    #[error("unknown value type tag {0}")]
    UnknownDtype(u8),
    #[error("checkpoint metadata: {0}")]
    Metadata(String),
    #[error("checkpoint tensor {name}: {reason}")]
    Tensor { name: String, reason: String },
    #[error("checkpoint holds {found} tensors, the model has {expected}")]
    TensorCount { expected: usize, found: usize },
}

/// Everything besides the tensors needed to rebuild and use a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub machine: String,
    pub model: ModelConfig,
    pub num_sections: usize,
    pub num_groups: usize,
    pub stats: StandardizeStats,
    pub groups: AttributeGroupTable,
    pub train: TrainConfig,
    /// `key=value` lines of the run configuration.
    pub config_echo: String,
}

#[derive(Debug, Clone)]
pub enum AnyModel {
    F32(GrhdModel<f32>),
    F64(GrhdModel<f64>),
}

impl AnyModel {
    pub fn dtype(&self) -> DType {
        match self {
            AnyModel::F32(_) => DType::F32,
            AnyModel::F64(_) => DType::F64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub model: AnyModel,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_tensors<S: Scalar>(out: &mut Vec<u8>, model: &GrhdModel<S>) {
    let tensors: Vec<_> = model.store().named_tensors().collect();
    put_u32(out, tensors.len() as u32);
    for (name, t) in tensors {
        put_u32(out, name.len() as u32);
        out.extend_from_slice(name.as_bytes());
        put_u32(out, t.shape().len() as u32);
        for &d in t.shape() {
            put_u64(out, d as u64);
        }
        for &v in t.data() {
            v.write_le(out);
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let s = self.bytes.get(self.pos..end).ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize, CheckpointError> {
        usize::try_from(self.u64()?).map_err(|_| CheckpointError::Truncated)
    }
}

fn read_model<S: Scalar>(r: &mut Reader, meta: &CheckpointMeta) -> Result<GrhdModel<S>, CliError> {
    let mut model = GrhdModel::<S>::new(meta.model.clone(), meta.num_sections, meta.num_groups, 0)
        .map_err(|e| CheckpointError::Metadata(e.to_string()))?;
    let expected = model.store().named_tensors().count();
    let found = r.u32()? as usize;
    if found != expected {
        return Err(CheckpointError::TensorCount { expected, found }.into());
    }
    let width = S::DTYPE.byte_width();
    for _ in 0..found {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| CheckpointError::Metadata("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.len()).collect::<Result<Vec<_>, _>>()?;
        let numel = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or(CheckpointError::Truncated)?;
        let raw = r.take(numel.checked_mul(width).ok_or(CheckpointError::Truncated)?)?;
        let data = raw.chunks_exact(width).map(S::read_le).collect();
        let bad = |reason: String| CheckpointError::Tensor {
            name: name.clone(),
            reason,
        };
        let t = Tensor::new(shape, data).map_err(|e| bad(e.to_string()))?;
        model.store_mut().assign(&name, t).map_err(|e| bad(e.to_string()))?;
    }
    Ok(model)
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, FORMAT_VERSION);
        out.push(self.model.dtype().tag());
        let meta = serde_json::to_vec(&self.meta).expect("metadata is plain data");
        put_u64(&mut out, meta.len() as u64);
        out.extend_from_slice(&meta);
        match &self.model {
            AnyModel::F32(m) => put_tensors(&mut out, m),
            AnyModel::F64(m) => put_tensors(&mut out, m),
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    /// Magic, then version, then checksum, then contents: a file from a
    /// different format version is reported as such even though its
    /// checksum might also disagree.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CliError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len()).map_err(|_| CheckpointError::BadMagic)? != MAGIC {
            return Err(CheckpointError::BadMagic.into());
        }
        let found = r.u32()?;
        if found != FORMAT_VERSION {
            return Err(CheckpointError::VersionMismatch {
                found,
                expected: FORMAT_VERSION,
            }
            .into());
        }
        if bytes.len() < r.pos + DIGEST_LEN {
            return Err(CheckpointError::Truncated.into());
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(CheckpointError::ChecksumMismatch.into());
        }
        let mut r = Reader { bytes: body, pos: r.pos };
        let tag = r.take(1)?[0];
        let dtype = DType::from_tag(tag).ok_or(CheckpointError::UnknownDtype(tag))?;
        let meta_len = r.len()?;
        let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len)?)
            .map_err(|e| CheckpointError::Metadata(e.to_string()))?;
        let model = match dtype {
            DType::F32 => AnyModel::F32(read_model(&mut r, &meta)?),
            DType::F64 => AnyModel::F64(read_model(&mut r, &meta)?),
        };
        if r.pos != body.len() {
            return Err(CheckpointError::Metadata("trailing bytes after the tensors".into()).into());
        }
        Ok(Self { meta, model })
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.to_bytes()).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path).map_err(io_err(path))?;
        Self::from_bytes(&bytes)
    }
}
