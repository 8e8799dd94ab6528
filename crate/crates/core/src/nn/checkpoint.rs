//! Binary checkpoint: magic, version, dimension, architecture, parameters,
//! optimizer state, training bookkeeping, and a trailing SHA-256 of
//! everything before it. All numbers little-endian.

use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use sha2::{Digest, Sha256};

use super::{param_count, Activation, AdamW, AdamWConfig, NetworkParams, NnError};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DGNVCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub dim: usize,
    pub net: NetworkParams,
    pub opt: AdamW,
    pub best_loss: f64,
    pub epoch: u64,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(CHECKPOINT_MAGIC);
        let w = &mut b;
        w.write_u32::<LE>(CHECKPOINT_VERSION).unwrap();
        w.write_u32::<LE>(self.dim as u32).unwrap();
        w.write_u8(self.net.activation.id()).unwrap();
        w.write_u64::<LE>(self.net.seed).unwrap();
        w.write_u32::<LE>(self.net.sizes.len() as u32).unwrap();
        for &s in &self.net.sizes {
            w.write_u32::<LE>(s as u32).unwrap();
        }
        for &t in &self.net.theta {
            w.write_f64::<LE>(t).unwrap();
        }
        let c = self.opt.cfg;
        for x in [c.lr, c.beta1, c.beta2, c.eps, c.weight_decay] {
            w.write_f64::<LE>(x).unwrap();
        }
        w.write_u64::<LE>(self.opt.step).unwrap();
        for &x in self.opt.m.iter().chain(&self.opt.v) {
            w.write_f64::<LE>(x).unwrap();
        }
        w.write_f64::<LE>(self.best_loss).unwrap();
        w.write_u64::<LE>(self.epoch).unwrap();
        let digest = Sha256::digest(&b);
        b.extend_from_slice(&digest);
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        if bytes.len() < 8 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(NnError::BadMagic);
        }
        if bytes.len() < 8 + 4 + 32 {
            return Err(NnError::Truncated);
        }
        let mut r = Cursor::new(&bytes[8..]);
        let version = r.read_u32::<LE>().map_err(|_| NnError::Truncated)?;
        if version != CHECKPOINT_VERSION {
            return Err(NnError::Version(version));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            // distinguish a cut-off file from a corrupted one where possible
            return Err(if body.len() < expected_min_len(bytes) { NnError::Truncated } else { NnError::Checksum });
        }
        let mut r = Cursor::new(&body[12..]);
        let t = |e: std::io::Error| {
            let _ = e;
            NnError::Truncated
        };
        let dim = r.read_u32::<LE>().map_err(t)? as usize;
        let activation = Activation::from_id(r.read_u8().map_err(t)?).ok_or_else(|| NnError::Architecture("unknown activation".into()))?;
        let seed = r.read_u64::<LE>().map_err(t)?;
        let nl = r.read_u32::<LE>().map_err(t)? as usize;
        let sizes = (0..nl).map(|_| r.read_u32::<LE>().map(|s| s as usize)).collect::<Result<Vec<_>, _>>().map_err(t)?;
        let np = param_count(&sizes);
        let read_vec = |r: &mut Cursor<&[u8]>, n: usize| -> Result<Vec<f64>, NnError> {
            (0..n).map(|_| r.read_f64::<LE>().map_err(|_| NnError::Truncated)).collect()
        };
        let theta = read_vec(&mut r, np)?;
        let cv = read_vec(&mut r, 5)?;
        let step = r.read_u64::<LE>().map_err(t)?;
        let m = read_vec(&mut r, np)?;
        let v = read_vec(&mut r, np)?;
        let best_loss = r.read_f64::<LE>().map_err(t)?;
        let epoch = r.read_u64::<LE>().map_err(t)?;
        let mut rest = Vec::new();
        r.read_to_end(&mut rest).map_err(t)?;
        if !rest.is_empty() {
            return Err(NnError::Checksum);
        }
        Ok(Self {
            dim,
            net: NetworkParams {
                sizes,
                theta,
                activation,
                seed,
            },
            opt: AdamW {
                cfg: AdamWConfig {
                    lr: cv[0],
                    beta1: cv[1],
                    beta2: cv[2],
                    eps: cv[3],
                    weight_decay: cv[4],
                },
                m,
                v,
                step,
            },
            best_loss,
            epoch,
        })
    }

    /// Reject a checkpoint trained for another dimension.
    pub fn expect_dim(self, dim: usize) -> Result<Self, NnError> {
        if self.dim != dim {
            return Err(NnError::DimMismatch {
                expected: dim,
                got: self.dim,
            });
        }
        Ok(self)
    }
}

/// Body length implied by the header, or `usize::MAX` if the header is unreadable.
fn expected_min_len(bytes: &[u8]) -> usize {
    let mut r = Cursor::new(&bytes[12..]);
    let mut header = || -> std::io::Result<usize> {
        r.read_u32::<LE>()?;
        r.read_u8()?;
        r.read_u64::<LE>()?;
        let nl = r.read_u32::<LE>()? as usize;
        let sizes = (0..nl).map(|_| r.read_u32::<LE>().map(|s| s as usize)).collect::<std::io::Result<Vec<_>>>()?;
        let np = param_count(&sizes);
        Ok(12 + 4 + 1 + 8 + 4 + 4 * nl + 8 * (3 * np + 5 + 1) + 8 + 8)
    };
    header().unwrap_or(usize::MAX)
}

pub fn save_checkpoint(ck: &Checkpoint, path: impl AsRef<Path>) -> Result<(), NnError> {
    let path = path.as_ref();
    std::fs::write(path, ck.to_bytes()).map_err(|source| NnError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, NnError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| NnError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Checkpoint::from_bytes(&bytes)
}
