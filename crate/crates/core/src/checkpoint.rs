//! Binary checkpoint format.
//!
//! Layout: 8-byte magic, `u32` format version, `u32` header length, a JSON
//! header, then a `u32` tensor count followed by named tensors. Each tensor
//! is `u32` name length, UTF-8 name, `u32` rank, `u64` dims and the values as
//! little-endian `f32`. Optimizer moments are stored as extra tensors named
//! `adam.m/<param>` and `adam.v/<param>` so a resumed run continues bitwise.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curriculum::{Phase, Regime};
use crate::model::{ModelConfig, ModelError, ModelParams};
use crate::tensor::{AdamState, Tensor};

pub const MAGIC: &[u8; 8] = b"L2LABCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("header: {0}")]
    Header(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub model: ModelConfig,
    pub vocab_hash: String,
    pub epoch: u32,
    pub seed: u64,
    pub phase: Phase,
    pub regime: Regime,
    pub optimizer_step: u64,
    pub param_count: usize,
    /// Label of the run's L1, if any.
    #[serde(default)]
    pub l1: Option<String>,
    /// Whether the run started from an L1-pretrained model.
    #[serde(default)]
    pub pretrained: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: ModelParams<f32>,
    pub adam: Option<AdamState<f32>>,
}

fn write_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn write_tensor(out: &mut Vec<u8>, name: &str, t: &Tensor<f32>) {
    write_u32(out, name.len() as u32);
    out.extend_from_slice(name.as_bytes());
    write_u32(out, t.shape().len() as u32);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| CheckpointError::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn tensor(&mut self) -> Result<(String, Tensor<f32>), CheckpointError> {
        let len = self.u32()? as usize;
        let name = String::from_utf8(self.take(len)?.to_vec())
            .map_err(|e| CheckpointError::Format(format!("tensor name: {e}")))?;
        let rank = self.u32()? as usize;
        let shape = (0..rank)
            .map(|_| self.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let n: usize = shape.iter().product();
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| CheckpointError::Format("tensor too large".into()))?)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let t = Tensor::from_vec(shape, data).map_err(|e| CheckpointError::Format(e.to_string()))?;
        Ok((name, t))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>, CheckpointError> {
        let header = serde_json::to_vec(&self.header)?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        write_u32(&mut out, FORMAT_VERSION);
        write_u32(&mut out, header.len() as u32);
        out.extend_from_slice(&header);
        let n_adam = if self.adam.is_some() { 2 * self.params.tensors.len() } else { 0 };
        write_u32(&mut out, (self.params.tensors.len() + n_adam) as u32);
        for (name, t) in self.params.names.iter().zip(&self.params.tensors) {
            write_tensor(&mut out, name, t);
        }
        if let Some(adam) = &self.adam {
            for (name, t) in self.params.names.iter().zip(&adam.m) {
                write_tensor(&mut out, &format!("adam.m/{name}"), t);
            }
            for (name, t) in self.params.names.iter().zip(&adam.v) {
                write_tensor(&mut out, &format!("adam.v/{name}"), t);
            }
        }
        Ok(out)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Version(version));
        }
        let hlen = r.u32()? as usize;
        let header: CheckpointHeader = serde_json::from_slice(r.take(hlen)?)?;
        let count = r.u32()? as usize;
        let mut params = Vec::new();
        let mut m = Vec::new();
        let mut v = Vec::new();
        for _ in 0..count {
            let (name, t) = r.tensor()?;
            if let Some(p) = name.strip_prefix("adam.m/") {
                m.push((p.to_string(), t));
            } else if let Some(p) = name.strip_prefix("adam.v/") {
                v.push((p.to_string(), t));
            } else {
                params.push((name, t));
            }
        }
        if r.pos != buf.len() {
            return Err(CheckpointError::Format(format!("{} trailing bytes", buf.len() - r.pos)));
        }
        let params = ModelParams::from_named(header.model.clone(), params)?;
        let adam = if m.is_empty() && v.is_empty() {
            None
        } else {
            let same = |moments: &[(String, Tensor<f32>)]| {
                moments.len() == params.names.len()
                    && moments
                        .iter()
                        .zip(params.names.iter().zip(&params.tensors))
                        .all(|((n, t), (pn, pt))| n == pn && t.shape() == pt.shape())
            };
            if !same(&m) || !same(&v) {
                return Err(CheckpointError::Format("optimizer moments do not match parameters".into()));
            }
            Some(AdamState {
                step: header.optimizer_step,
                m: m.into_iter().map(|(_, t)| t).collect(),
                v: v.into_iter().map(|(_, t)| t).collect(),
            })
        };
        if params.count() != header.param_count {
            return Err(CheckpointError::Format(format!(
                "header says {} parameters, found {}",
                header.param_count,
                params.count()
            )));
        }
        Ok(Self { header, params, adam })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("ckpt.tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let mut buf = Vec::new();
        fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

/// File name used for the checkpoint written after `epoch`.
pub fn checkpoint_file_name(epoch: u32) -> String {
    format!("epoch_{epoch:03}.ckpt")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;

    fn sample(with_adam: bool) -> Checkpoint {
        let cfg = ModelConfig {
            vocab_size: 12,
            emb_dim: 8,
            ffn_dim: 8,
            n_layers: 1,
            n_heads: 2,
            max_positions: 8,
            ..ModelConfig::default()
        };
        let params = init_params::<f32>(&cfg, 4).unwrap();
        let adam = with_adam.then(|| {
            let mut a = AdamState::new(&params.tensors);
            a.step = 3;
            a.m[0].data_mut()[0] = 0.25;
            a
        });
        Checkpoint {
            header: CheckpointHeader {
                model: cfg,
                vocab_hash: "abc".into(),
                epoch: 2,
                seed: 9,
                phase: Phase::L2,
                regime: Regime::Drop,
                optimizer_step: 3,
                param_count: params.count(),
                l1: Some("fr".into()),
                pretrained: true,
            },
            params,
            adam,
        }
    }

    #[test]
    fn round_trip() {
        for with_adam in [false, true] {
            let ck = sample(with_adam);
            let bytes = ck.to_bytes().unwrap();
            assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), ck);
        }
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let bytes = sample(true).to_bytes().unwrap();
        assert!(matches!(Checkpoint::from_bytes(&bytes[..20]), Err(CheckpointError::Format(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(CheckpointError::BadMagic)));
        let mut extra = bytes;
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }

    #[test]
    fn file_names_sort_by_epoch() {
        assert_eq!(checkpoint_file_name(5), "epoch_005.ckpt");
        assert!(checkpoint_file_name(10) > checkpoint_file_name(9));
    }
}
