//! Paired `(f, u)` datasets with exact reference solutions.
//!
//! File layout (little-endian): magic `GRDS`, version `u16`, equation kind
//! `u16` (1 Poisson, 2 Helmholtz), dim `u16`, reserved `u16`, n `u32`,
//! count `u32`, seed `u64`, a² `f64`, then `count` records of `f` values
//! followed by `u` values, then a CRC32 of all preceding bytes.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pde::{DiscreteOperator, EquationKind, Field, GridSpec};

use super::{sample_indexed, GrfSpec};

pub const DATASET_MAGIC: &[u8; 4] = b"GRDS";
pub const DATASET_VERSION: u16 = 1;
const HEADER_LEN: usize = 36;

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub f: Field,
    pub u: Field,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub kind: EquationKind,
    pub grid: GridSpec,
    pub seed: u64,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn operator(&self) -> Result<DiscreteOperator> {
        DiscreteOperator::new(self.grid, self.kind)
    }

    /// Splits off the first `n` samples; the remainder forms the second set.
    pub fn split_at(&self, n: usize) -> (Dataset, Dataset) {
        let n = n.min(self.len());
        let head = Dataset { samples: self.samples[..n].to_vec(), ..self.clone_empty() };
        let tail = Dataset { samples: self.samples[n..].to_vec(), ..self.clone_empty() };
        (head, tail)
    }

    fn clone_empty(&self) -> Dataset {
        Dataset { kind: self.kind, grid: self.grid, seed: self.seed, samples: Vec::new() }
    }
}

/// Draws `count` right-hand sides and solves each exactly. The constant
/// mode is dropped for Poisson regardless of `spec.zero_dc`.
pub fn generate_dataset(spec: &GrfSpec, count: usize, kind: EquationKind) -> Result<Dataset> {
    let op = DiscreteOperator::new(spec.grid, kind)?;
    let mut spec = *spec;
    if op.is_singular() {
        spec.zero_dc = true;
    }
    let samples = (0..count)
        .into_par_iter()
        .map(|i| {
            let f = sample_indexed(&spec, i as u64)?;
            let u = op.reference_solution(&f)?;
            Ok(Sample { f, u })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { kind, grid: spec.grid, seed: spec.seed, samples })
}

fn kind_code(kind: EquationKind) -> (u16, f64) {
    match kind {
        EquationKind::Poisson => (1, 0.0),
        EquationKind::Helmholtz { a2 } => (2, a2),
    }
}

pub fn dataset_to_bytes(ds: &Dataset) -> Vec<u8> {
    let (code, a2) = kind_code(ds.kind);
    let mut buf = Vec::with_capacity(HEADER_LEN + 16 * ds.grid.len() * ds.len() + 4);
    buf.extend_from_slice(DATASET_MAGIC);
    buf.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    buf.extend_from_slice(&code.to_le_bytes());
    buf.extend_from_slice(&(ds.grid.dim() as u16).to_le_bytes());
    buf.extend_from_slice(&0u16.to_le_bytes());
    buf.extend_from_slice(&(ds.grid.n() as u32).to_le_bytes());
    buf.extend_from_slice(&(ds.len() as u32).to_le_bytes());
    buf.extend_from_slice(&ds.seed.to_le_bytes());
    buf.extend_from_slice(&a2.to_le_bytes());
    for s in &ds.samples {
        for v in s.f.values().iter().chain(s.u.values()) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

fn truncated() -> Error {
    Error::Io(io::Error::new(io::ErrorKind::UnexpectedEof, "dataset file truncated"))
}

pub fn dataset_from_bytes(bytes: &[u8]) -> Result<Dataset> {
    if bytes.len() < 6 {
        return Err(truncated());
    }
    if &bytes[..4] != DATASET_MAGIC {
        return Err(Error::FormatVersionMismatch("not a dataset file (bad magic)".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != DATASET_VERSION {
        return Err(Error::FormatVersionMismatch(format!("dataset version {version}, expected {DATASET_VERSION}")));
    }
    if bytes.len() < HEADER_LEN + 4 {
        return Err(truncated());
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let code = u16_at(6);
    let dim = u16_at(8) as usize;
    let n = u32_at(12) as usize;
    let count = u32_at(16) as usize;
    let seed = u64::from_le_bytes(bytes[20..28].try_into().unwrap());
    let a2 = f64::from_le_bytes(bytes[28..36].try_into().unwrap());
    let grid = GridSpec::new(dim, n)?;
    let expected = HEADER_LEN + 16 * grid.len() * count + 4;
    if bytes.len() < expected {
        return Err(truncated());
    }
    if bytes.len() > expected {
        return Err(Error::FormatVersionMismatch("trailing bytes after dataset".into()));
    }
    let (body, tail) = bytes.split_at(expected - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }
    let kind = match code {
        1 => EquationKind::Poisson,
        2 => EquationKind::Helmholtz { a2 },
        other => return Err(Error::FormatVersionMismatch(format!("unknown equation kind {other}"))),
    };
    let values: Vec<f64> =
        body[HEADER_LEN..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let len = grid.len();
    let samples = values
        .chunks_exact(2 * len)
        .map(|rec| Ok(Sample { f: Field::new(grid, rec[..len].to_vec())?, u: Field::new(grid, rec[len..].to_vec())? }))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { kind, grid, seed, samples })
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&dataset_to_bytes(ds))?;
    f.sync_all()?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    dataset_from_bytes(&fs::read(path)?)
}
