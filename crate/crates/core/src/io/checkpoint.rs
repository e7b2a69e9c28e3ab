//! Binary checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "HGIN" | u32 version | u64 len, config text
//! generator table | discriminator table | training state
//! table  := u32 count, count × (u32 name len, name, u32 ndim, ndim × u64 dim, u8 dtype, f64 values)
//! state  := u64 iteration | u64 epoch | f64 lr | u64 seed | adam(gen) | adam(disc)
//! adam   := u64 step | u32 count | count × (tensor m, tensor v)
//! ```
//!
//! dtype 0 is f64, the only element type written.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::config::RunConfig;
use crate::net::InpaintModel;
use crate::optim::AdamState;
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"HGIN";
pub const VERSION: u32 = 1;
const DTYPE_F64: u8 = 0;

/// Everything needed to continue a run bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingState {
    pub iteration: u64,
    pub epoch: u64,
    pub lr: f64,
    pub seed: u64,
    pub gen_adam: AdamState,
    pub disc_adam: AdamState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_text: String,
    pub generator: Vec<(String, Tensor)>,
    pub discriminator: Vec<(String, Tensor)>,
    pub state: TrainingState,
}

fn table(store: &ParamStore) -> Vec<(String, Tensor)> {
    store.iter().map(|p| (p.name.clone(), p.value.clone())).collect()
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_tensor(out: &mut Vec<u8>, t: &Tensor) {
    put_u32(out, t.ndim() as u32);
    for &d in t.shape() {
        put_u64(out, d as u64);
    }
    out.push(DTYPE_F64);
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn put_table(out: &mut Vec<u8>, entries: &[(String, Tensor)]) {
    put_u32(out, entries.len() as u32);
    for (name, t) in entries {
        put_u32(out, name.len() as u32);
        out.extend_from_slice(name.as_bytes());
        put_tensor(out, t);
    }
}

fn put_adam(out: &mut Vec<u8>, s: &AdamState) {
    put_u64(out, s.step);
    put_u32(out, s.m.len() as u32);
    for (m, v) in s.m.iter().zip(&s.v) {
        put_tensor(out, m);
        put_tensor(out, v);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn string(&mut self, len: usize) -> Result<String> {
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| Error::Checkpoint("invalid UTF-8 string".into()))
    }

    fn tensor(&mut self) -> Result<Tensor> {
        let ndim = self.u32()? as usize;
        if ndim > 8 {
            return Err(Error::Checkpoint(format!("implausible rank {ndim}")));
        }
        let shape = (0..ndim).map(|_| self.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let dtype = self.u8()?;
        if dtype != DTYPE_F64 {
            return Err(Error::Checkpoint(format!("unsupported dtype tag {dtype}")));
        }
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|&n| n.saturating_mul(8) <= self.bytes.len() - self.pos)
            .ok_or_else(|| Error::Checkpoint(format!("tensor {shape:?} exceeds file")))?;
        let data = (0..n).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Tensor::new(&shape, data)
    }

    fn table(&mut self) -> Result<Vec<(String, Tensor)>> {
        let n = self.u32()? as usize;
        (0..n)
            .map(|_| {
                let len = self.u32()? as usize;
                let name = self.string(len)?;
                Ok((name, self.tensor()?))
            })
            .collect()
    }

    fn adam(&mut self) -> Result<AdamState> {
        let step = self.u64()?;
        let n = self.u32()? as usize;
        let (mut m, mut v) = (Vec::new(), Vec::new());
        for _ in 0..n {
            m.push(self.tensor()?);
            v.push(self.tensor()?);
        }
        Ok(AdamState { step, m, v })
    }
}

impl Checkpoint {
    pub fn capture(config: &RunConfig, model: &InpaintModel, state: &TrainingState) -> Self {
        Checkpoint {
            config_text: config.to_text(),
            generator: table(&model.gen_params),
            discriminator: table(&model.disc_params),
            state: state.clone(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        put_u32(&mut out, VERSION);
        put_u64(&mut out, self.config_text.len() as u64);
        out.extend_from_slice(self.config_text.as_bytes());
        put_table(&mut out, &self.generator);
        put_table(&mut out, &self.discriminator);
        let s = &self.state;
        put_u64(&mut out, s.iteration);
        put_u64(&mut out, s.epoch);
        out.extend_from_slice(&s.lr.to_le_bytes());
        put_u64(&mut out, s.seed);
        put_adam(&mut out, &s.gen_adam);
        put_adam(&mut out, &s.disc_adam);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4).ok() != Some(MAGIC.as_slice()) {
            return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}, expected {VERSION}")));
        }
        let len = usize::try_from(r.u64()?).map_err(|_| Error::Checkpoint("config too long".into()))?;
        let config_text = r.string(len)?;
        let generator = r.table()?;
        let discriminator = r.table()?;
        let state = TrainingState {
            iteration: r.u64()?,
            epoch: r.u64()?,
            lr: r.f64()?,
            seed: r.u64()?,
            gen_adam: r.adam()?,
            disc_adam: r.adam()?,
        };
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Checkpoint {
            config_text,
            generator,
            discriminator,
            state,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.encode())?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }

    pub fn config(&self) -> Result<RunConfig> {
        RunConfig::parse_str(&self.config_text)
    }

    /// Rebuilds the model described by the stored configuration and loads its weights.
    pub fn model(&self) -> Result<(RunConfig, InpaintModel)> {
        let cfg = self.config()?;
        let mut model = InpaintModel::new(cfg.network_config(), cfg.seed)?;
        restore(&mut model.gen_params, &self.generator)?;
        restore(&mut model.disc_params, &self.discriminator)?;
        Ok((cfg, model))
    }
}

/// Overwrites `store` from a table that must list exactly its parameters.
pub fn restore(store: &mut ParamStore, entries: &[(String, Tensor)]) -> Result<()> {
    if entries.len() != store.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {} parameters, model has {}",
            entries.len(),
            store.len()
        )));
    }
    for (name, t) in entries {
        let id = store
            .id(name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown parameter {name}")))?;
        let p = store.get_mut(id);
        if p.value.shape() != t.shape() {
            return Err(Error::Checkpoint(format!(
                "parameter {name}: stored shape {:?}, model shape {:?}",
                t.shape(),
                p.value.shape()
            )));
        }
        p.value = t.clone();
    }
    Ok(())
}
