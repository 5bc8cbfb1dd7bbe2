//! Versioned little-endian checkpoint files.
//!
//! Layout: magic `DKNCKPT\0`, `u32` version, config block, tensor table, optional
//! optimizer state, metadata block. Blocks are `u32` length + UTF-8 `key=value` text;
//! tensors are `u32` name length, name, `u8` trainable flag, `u32` rank, `u32` extents,
//! raw `f32` values.

use std::collections::BTreeMap;
use std::path::Path;

use super::optim::{Adam, AdamConfig};
use crate::error::{Error, Result};
use crate::kv::{parse_kv, render_kv};
use crate::nets::{AnyModel, Model, ModelConfig};
use crate::param::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"DKNCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ParamStore<f32>,
    pub optimizer: Option<Adam<f32>>,
    pub metadata: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn from_model<T: Scalar, M: Model<T> + ?Sized>(
        model: &M,
        optimizer: Option<&Adam<T>>,
        metadata: BTreeMap<String, String>,
    ) -> Self {
        Checkpoint {
            config: model.model_config(),
            params: model.params().cast(),
            optimizer: optimizer.map(|a| Adam {
                config: a.config,
                t: a.t,
                m: a.m.iter().map(Tensor::cast).collect(),
                v: a.v.iter().map(Tensor::cast).collect(),
            }),
            metadata,
        }
    }

    /// Rebuild the model and load the stored tensors into it.
    pub fn to_model<T: Scalar>(&self) -> Result<AnyModel<T>> {
        let mut model = AnyModel::<T>::new(&self.config, 0)?;
        if model.params().len() != self.params.len() {
            return Err(Error::Invalid(format!(
                "checkpoint has {} tensors, architecture needs {}",
                self.params.len(),
                model.params().len()
            )));
        }
        model.params_mut().load_from(&self.params.cast())?;
        Ok(model)
    }

    pub fn optimizer_as<T: Scalar>(&self) -> Option<Adam<T>> {
        self.optimizer.as_ref().map(|a| Adam {
            config: a.config,
            t: a.t,
            m: a.m.iter().map(Tensor::cast).collect(),
            v: a.v.iter().map(Tensor::cast).collect(),
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        out.extend(VERSION.to_le_bytes());
        put_block(&mut out, &render_kv(&self.config.to_kv()));
        out.extend((self.params.len() as u32).to_le_bytes());
        for (_, p) in self.params.iter() {
            put_bytes(&mut out, p.name.as_bytes());
            out.push(p.trainable as u8);
            put_tensor(&mut out, &p.value);
        }
        match &self.optimizer {
            None => out.push(0),
            Some(a) => {
                out.push(1);
                out.extend(a.t.to_le_bytes());
                for x in [a.config.beta1, a.config.beta2, a.config.eps] {
                    out.extend(x.to_le_bytes());
                }
                out.extend((a.m.len() as u32).to_le_bytes());
                for (m, v) in a.m.iter().zip(&a.v) {
                    put_tensor(&mut out, m);
                    put_tensor(&mut out, v);
                }
            }
        }
        put_block(&mut out, &render_kv(&self.metadata));
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(r.err_at(0, "bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.err_at(8, format!("unsupported version {version}")));
        }
        let config = ModelConfig::from_kv(&parse_kv(&r.string()?)?)?;
        let n = r.u32()? as usize;
        let mut params = ParamStore::new();
        for _ in 0..n {
            let name = r.string()?;
            let trainable = match r.take(1)?[0] {
                0 => false,
                1 => true,
                b => return Err(r.err_at(r.pos - 1, format!("bad trainable flag {b}"))),
            };
            let value = r.tensor()?;
            if params.find(&name).is_some() {
                return Err(r.err_at(r.pos, format!("duplicate tensor {name}")));
            }
            if trainable {
                params.add(name, value);
            } else {
                params.add_buffer(name, value);
            }
        }
        let optimizer = match r.take(1)?[0] {
            0 => None,
            1 => {
                let t = u64::from_le_bytes(r.array()?);
                let beta1 = f64::from_le_bytes(r.array()?);
                let beta2 = f64::from_le_bytes(r.array()?);
                let eps = f64::from_le_bytes(r.array()?);
                let k = r.u32()? as usize;
                let (mut m, mut v) = (Vec::with_capacity(k), Vec::with_capacity(k));
                for _ in 0..k {
                    m.push(r.tensor()?);
                    v.push(r.tensor()?);
                }
                Some(Adam {
                    config: AdamConfig { beta1, beta2, eps },
                    t,
                    m,
                    v,
                })
            }
            b => return Err(r.err_at(r.pos - 1, format!("bad optimizer flag {b}"))),
        };
        let metadata = parse_kv(&r.string()?)?;
        if r.pos != bytes.len() {
            return Err(r.err_at(r.pos, "trailing bytes"));
        }
        Ok(Checkpoint {
            config,
            params,
            optimizer,
            metadata,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::decode(&bytes)
    }
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    out.extend((b.len() as u32).to_le_bytes());
    out.extend_from_slice(b);
}

fn put_block(out: &mut Vec<u8>, s: &str) {
    put_bytes(out, s.as_bytes());
}

fn put_tensor(out: &mut Vec<u8>, t: &Tensor<f32>) {
    out.extend((t.ndim() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend((d as u32).to_le_bytes());
    }
    for v in t.data() {
        out.extend(v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err_at(&self, offset: usize, reason: impl Into<String>) -> Error {
        Error::Format {
            format: "checkpoint",
            offset,
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.err_at(self.bytes.len(), format!("truncated: need {n} bytes at {}", self.pos))),
        }
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let s = self.take(N)?;
        let mut a = [0u8; N];
        a.copy_from_slice(s);
        Ok(a)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let at = self.pos;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|_| self.err_at(at, "invalid UTF-8"))
    }

    fn tensor(&mut self) -> Result<Tensor<f32>> {
        let rank = self.u32()? as usize;
        if rank > 8 {
            return Err(self.err_at(self.pos - 4, format!("implausible rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.u32()? as usize);
        }
        let len: usize = shape.iter().product();
        let raw = self.take(len.checked_mul(4).ok_or_else(|| self.err_at(self.pos, "tensor too large"))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Tensor::from_vec(&shape, data)
    }
}
