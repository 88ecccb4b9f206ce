//! Binary field files: a 16-byte header followed by little-endian `f64`
//! values in row-major order.
//!
//! Header layout: magic `GRPD`, version `u16`, dim `u16`, n `u32`,
//! reserved `u32`.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::{Field, GridSpec};

pub const FIELD_MAGIC: &[u8; 4] = b"GRPD";
pub const FIELD_VERSION: u16 = 1;

pub fn write_field<W: Write>(mut w: W, field: &Field) -> Result<()> {
    let g = field.grid();
    let mut buf = Vec::with_capacity(16 + 8 * field.len());
    buf.extend_from_slice(FIELD_MAGIC);
    buf.extend_from_slice(&FIELD_VERSION.to_le_bytes());
    buf.extend_from_slice(&(g.dim() as u16).to_le_bytes());
    buf.extend_from_slice(&(g.n() as u32).to_le_bytes());
    buf.extend_from_slice(&0u32.to_le_bytes());
    for v in field.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_field<R: Read>(mut r: R) -> Result<Field> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if &header[0..4] != FIELD_MAGIC {
        return Err(Error::FormatVersionMismatch("not a field file (bad magic)".into()));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != FIELD_VERSION {
        return Err(Error::FormatVersionMismatch(format!("field file version {version}, expected {FIELD_VERSION}")));
    }
    let dim = u16::from_le_bytes([header[6], header[7]]) as usize;
    let n = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let grid = GridSpec::new(dim, n)?;
    let mut raw = vec![0u8; 8 * grid.len()];
    r.read_exact(&mut raw)?;
    let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Field::new(grid, values)
}

pub fn save_field(path: impl AsRef<Path>, field: &Field) -> Result<()> {
    let mut f = io::BufWriter::new(fs::File::create(path)?);
    write_field(&mut f, field)?;
    f.flush()?;
    Ok(())
}

pub fn load_field(path: impl AsRef<Path>) -> Result<Field> {
    read_field(io::BufReader::new(fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_bytes() {
        let g = GridSpec::two_d(4).unwrap();
        let field = Field::from_fn(g, |x| x[0] - 3.0 * x[1] + 0.1);
        let mut buf = Vec::new();
        write_field(&mut buf, &field).unwrap();
        assert_eq!(buf.len(), 16 + 8 * 16);
        assert_eq!(&buf[..4], b"GRPD");
        let back = read_field(buf.as_slice()).unwrap();
        assert_eq!(back, field);
    }

    #[test]
    fn truncated_and_bad_magic() {
        let g = GridSpec::one_d(8).unwrap();
        let mut buf = Vec::new();
        write_field(&mut buf, &Field::constant(g, 1.0)).unwrap();
        assert!(matches!(read_field(&buf[..40]), Err(Error::Io(_))));
        buf[0] = b'X';
        assert!(matches!(read_field(buf.as_slice()), Err(Error::FormatVersionMismatch(_))));
    }
}
