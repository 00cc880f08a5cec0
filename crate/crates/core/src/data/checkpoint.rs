//! Binary checkpoint files.
//!
//! Layout, all integers and floats little-endian:
//!
//! | field        | type            |
//! |--------------|-----------------|
//! | magic        | `b"MLNTCKPT"`   |
//! | version      | u32 (= 1)       |
//! | role         | u8 (0 student, 1 teacher) |
//! | activation   | u8 (0 relu, 1 tanh) |
//! | reserved     | u16 (= 0)       |
//! | epoch        | u32             |
//! | val_accuracy | f64             |
//! | n_sizes      | u32             |
//! | layer sizes  | n_sizes x u32   |
//! | n_params     | u64             |
//! | params       | n_params x f64, layer order, weights row-major then bias |

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Activation, MlpSpec, ParamSet};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MLNTCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Student,
    Teacher,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: MlpSpec,
    pub params: ParamSet,
    pub epoch: u32,
    pub role: Role,
    pub val_accuracy: f64,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let sizes = self.spec.layer_sizes();
        let mut out = Vec::with_capacity(40 + 4 * sizes.len() + 8 * self.params.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.push(match self.role {
            Role::Student => 0,
            Role::Teacher => 1,
        });
        out.push(match self.spec.activation() {
            Activation::Relu => 0,
            Activation::Tanh => 1,
        });
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&self.val_accuracy.to_le_bytes());
        out.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
        for &s in sizes {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for v in self.params.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Parse {
                path: "checkpoint".into(),
                message: "bad magic bytes".into(),
            });
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let role = match r.u8()? {
            0 => Role::Student,
            1 => Role::Teacher,
            other => return Err(r.bad(format!("unknown role tag {other}"))),
        };
        let activation = match r.u8()? {
            0 => Activation::Relu,
            1 => Activation::Tanh,
            other => return Err(r.bad(format!("unknown activation tag {other}"))),
        };
        let _reserved = r.take(2)?;
        let epoch = r.u32()?;
        let val_accuracy = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let n_sizes = r.u32()? as usize;
        if n_sizes > bytes.len() / 4 {
            return Err(Error::LengthMismatch(format!("{n_sizes} layer sizes cannot fit")));
        }
        let sizes = (0..n_sizes)
            .map(|_| r.u32().map(|s| s as usize))
            .collect::<Result<Vec<_>>>()?;
        let spec = MlpSpec::new(sizes, activation)?;
        let n_params = u64::from_le_bytes(r.take(8)?.try_into().unwrap()) as usize;
        if n_params != spec.num_params() {
            return Err(Error::LengthMismatch(format!(
                "checkpoint stores {n_params} parameters, layout needs {}",
                spec.num_params()
            )));
        }
        let flat = (0..n_params)
            .map(|_| r.take(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())))
            .collect::<Result<Vec<_>>>()?;
        if r.pos != bytes.len() {
            return Err(Error::LengthMismatch(format!(
                "{} trailing bytes after parameters",
                bytes.len() - r.pos
            )));
        }
        let params = ParamSet::from_flat(&spec, &flat)?;
        Ok(Self {
            spec,
            params,
            epoch,
            role,
            val_accuracy,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::LengthMismatch(format!(
                "checkpoint truncated at byte {} (needed {n} more)",
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn bad(&self, message: String) -> Error {
        Error::Parse {
            path: format!("checkpoint byte {}", self.pos),
            message,
        }
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    fs::write(path, ckpt.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
