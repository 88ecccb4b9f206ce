//! Versioned binary checkpoints for trained networks and optimizer state.
//!
//! Layout (little-endian): magic `GRCK`, version `u16`, model kind `u16`,
//! architecture JSON (`u32` length + bytes), extra scalars (`u32` count +
//! `f64`s), shape table (`u32` tensor count, then per tensor `u32` rank and
//! `u32` dims), parameter values, optimizer flag `u8` with optional state,
//! and a CRC32 of everything before it.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

use super::deeponet::{DeepOnet, DeepOnetArch};
use super::lstm::{LstmRouter, RouterArch};
use super::optim::AdamW;
use super::tensor::Tensor;
use super::Parameterized;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GRCK";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    DeepOnet = 1,
    Router = 2,
}

impl ModelKind {
    fn from_code(code: u16) -> Result<Self> {
        match code {
            1 => Ok(ModelKind::DeepOnet),
            2 => Ok(ModelKind::Router),
            other => Err(Error::FormatVersionMismatch(format!("unknown model kind {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::DeepOnet => "deeponet",
            ModelKind::Router => "router",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    DeepOnet(DeepOnet),
    Router(LstmRouter),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::DeepOnet(_) => ModelKind::DeepOnet,
            Model::Router(_) => ModelKind::Router,
        }
    }

    fn parameters(&self) -> Vec<&Tensor> {
        match self {
            Model::DeepOnet(m) => m.parameters(),
            Model::Router(m) => m.parameters(),
        }
    }
}

/// A model plus, optionally, the optimizer that was training it.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelCheckpoint {
    pub model: Model,
    pub optimizer: Option<AdamW>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.f64(*v);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Io(io::Error::new(io::ErrorKind::UnexpectedEof, "checkpoint truncated")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(8 * n)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

fn arch_json<T: Serialize>(arch: &T) -> Vec<u8> {
    serde_json::to_vec(arch).expect("architecture serializes")
}

fn parse_arch<T: DeserializeOwned>(bytes: &[u8]) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| Error::FormatVersionMismatch(format!("bad architecture record: {e}")))
}

impl ModelCheckpoint {
    pub fn new(model: Model) -> Self {
        Self { model, optimizer: None }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(CHECKPOINT_MAGIC);
        w.u16(CHECKPOINT_VERSION);
        w.u16(self.model.kind() as u16);
        let (arch, scalars) = match &self.model {
            Model::DeepOnet(m) => (arch_json(m.arch()), vec![m.in_scale, m.out_scale]),
            Model::Router(m) => (arch_json(m.arch()), vec![]),
        };
        w.u32(arch.len() as u32);
        w.0.extend_from_slice(&arch);
        w.u32(scalars.len() as u32);
        w.f64s(&scalars);
        let params = self.model.parameters();
        w.u32(params.len() as u32);
        for p in &params {
            w.u32(p.shape().len() as u32);
            for d in p.shape() {
                w.u32(*d as u32);
            }
        }
        for p in &params {
            w.f64s(p.data());
        }
        match &self.optimizer {
            None => w.u8(0),
            Some(opt) => {
                w.u8(1);
                w.u64(opt.step);
                for v in [opt.lr, opt.beta1, opt.beta2, opt.eps, opt.weight_decay] {
                    w.f64(v);
                }
                for t in opt.m.iter().chain(&opt.v) {
                    w.f64s(t.data());
                }
            }
        }
        let crc = crc32fast::hash(&w.0);
        w.u32(crc);
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::Io(io::Error::new(io::ErrorKind::UnexpectedEof, "checkpoint truncated")));
        }
        if &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::FormatVersionMismatch("not a checkpoint file (bad magic)".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != CHECKPOINT_VERSION {
            return Err(Error::FormatVersionMismatch(format!(
                "checkpoint version {version}, expected {CHECKPOINT_VERSION}"
            )));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(Error::ChecksumMismatch { stored, computed });
        }
        let mut r = Reader { buf: body, pos: 6 };
        let kind = ModelKind::from_code(r.u16()?)?;
        let arch_len = r.u32()? as usize;
        let arch_bytes = r.take(arch_len)?;
        let n_scalars = r.u32()? as usize;
        let scalars = r.f64s(n_scalars)?;
        let count = r.u32()? as usize;
        let mut shapes = Vec::with_capacity(count);
        for _ in 0..count {
            let rank = r.u32()? as usize;
            shapes.push((0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?);
        }
        let mut tensors = Vec::with_capacity(count);
        for s in &shapes {
            let len = s.iter().product();
            tensors.push(Tensor::new(s.clone(), r.f64s(len)?)?);
        }
        let mut model = match kind {
            ModelKind::DeepOnet => {
                let mut m = DeepOnet::zeros(parse_arch::<DeepOnetArch>(arch_bytes)?)?;
                if scalars.len() != 2 {
                    return Err(Error::FormatVersionMismatch("missing network scaling".into()));
                }
                m.in_scale = scalars[0];
                m.out_scale = scalars[1];
                Model::DeepOnet(m)
            }
            ModelKind::Router => Model::Router(LstmRouter::zeros(parse_arch::<RouterArch>(arch_bytes)?)?),
        };
        {
            let params = match &mut model {
                Model::DeepOnet(m) => m.parameters_mut(),
                Model::Router(m) => m.parameters_mut(),
            };
            if params.len() != tensors.len() {
                return Err(Error::ShapeMismatch(format!(
                    "architecture has {} tensors, file has {}",
                    params.len(),
                    tensors.len()
                )));
            }
            for (p, t) in params.into_iter().zip(&tensors) {
                if p.shape() != t.shape() {
                    return Err(Error::ShapeMismatch(format!("tensor {:?} vs stored {:?}", p.shape(), t.shape())));
                }
                p.data_mut().copy_from_slice(t.data());
            }
        }
        let optimizer = match r.u8()? {
            0 => None,
            1 => {
                let step = r.u64()?;
                let (lr, beta1, beta2, eps, weight_decay) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?, r.f64()?);
                let read_set = |r: &mut Reader| -> Result<Vec<Tensor>> {
                    shapes.iter().map(|s| Tensor::new(s.clone(), r.f64s(s.iter().product())?)).collect()
                };
                let m = read_set(&mut r)?;
                let v = read_set(&mut r)?;
                Some(AdamW { lr, beta1, beta2, eps, weight_decay, step, m, v })
            }
            other => return Err(Error::FormatVersionMismatch(format!("bad optimizer flag {other}"))),
        };
        if r.pos != body.len() {
            return Err(Error::FormatVersionMismatch("trailing bytes in checkpoint".into()));
        }
        Ok(Self { model, optimizer })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        f.sync_all()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn into_deeponet(self) -> Result<DeepOnet> {
        match self.model {
            Model::DeepOnet(m) => Ok(m),
            other => Err(Error::KindMismatch { expected: "deeponet".into(), found: other.kind().name().into() }),
        }
    }

    pub fn into_router(self) -> Result<LstmRouter> {
        match self.model {
            Model::Router(m) => Ok(m),
            other => Err(Error::KindMismatch { expected: "router".into(), found: other.kind().name().into() }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::testing::seeded;
    use crate::pde::{Field, GridSpec};

    fn deeponet() -> DeepOnet {
        let g = GridSpec::one_d(8).unwrap();
        let mut arch = DeepOnetArch::standard(g);
        arch.branch_hidden = vec![9];
        arch.trunk_hidden = vec![5, 5];
        arch.latent = 3;
        let mut m = DeepOnet::init(arch, &mut seeded(4)).unwrap();
        m.in_scale = 123.456;
        m.out_scale = 1.0 / 3.0;
        m
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = deeponet();
        let mut opt = AdamW::for_model(&m, 1e-3, 0.005);
        opt.step = 17;
        opt.m[0].data_mut()[0] = 0.1;
        let ck = ModelCheckpoint { model: Model::DeepOnet(m.clone()), optimizer: Some(opt) };
        let bytes = ck.to_bytes();
        let back = ModelCheckpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
        let g = GridSpec::one_d(8).unwrap();
        let f = Field::from_fn(g, |x| x[0].sin());
        let restored = back.into_deeponet().unwrap();
        assert_eq!(m.forward(&f, &g.coordinates()).unwrap(), restored.forward(&f, &g.coordinates()).unwrap());
    }

    #[test]
    fn router_round_trip_and_kind_mismatch() {
        let r = LstmRouter::init(
            RouterArch { input_dim: 4, encoder_dim: 3, hidden: 2, layers: 2, num_solvers: 2 },
            &mut seeded(5),
        )
        .unwrap();
        let ck = ModelCheckpoint::new(Model::Router(r.clone()));
        let back = ModelCheckpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back.clone().into_router().unwrap(), r);
        assert!(matches!(back.into_deeponet(), Err(Error::KindMismatch { .. })));
        let d = ModelCheckpoint::new(Model::DeepOnet(deeponet()));
        assert!(matches!(
            ModelCheckpoint::from_bytes(&d.to_bytes()).unwrap().into_router(),
            Err(Error::KindMismatch { .. })
        ));
    }

    #[test]
    fn corruption_detected() {
        let ck = ModelCheckpoint::new(Model::DeepOnet(deeponet()));
        let mut bytes = ck.to_bytes();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 1;
        assert!(matches!(ModelCheckpoint::from_bytes(&bytes), Err(Error::ChecksumMismatch { .. })));
        let mut bytes = ck.to_bytes();
        bytes[4] = 9;
        assert!(matches!(ModelCheckpoint::from_bytes(&bytes), Err(Error::FormatVersionMismatch(_))));
        assert!(ModelCheckpoint::from_bytes(&ck.to_bytes()[..3]).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let ck = ModelCheckpoint::new(Model::DeepOnet(deeponet()));
        ck.save(&path).unwrap();
        assert_eq!(ModelCheckpoint::load(&path).unwrap(), ck);
    }
}
