//! Binary field files.
//!
//! Layout (little-endian): magic `NLSW`, `u16` version, `u16` dimension `N`,
//! `N × u32` sizes, `N × f64` spacings, `f64` r0, `u8` cutoff construction
//! id, then `(re, im)` pairs as `f64` with the last axis fastest.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{ComplexField, Grid};
use crate::nonlinearity::CutoffPhi;

pub const MAGIC: &[u8; 4] = b"NLSW";
pub const VERSION: u16 = 1;

/// A field together with the header metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldFile {
    pub field: ComplexField,
    pub r0: f64,
    pub phi_id: u8,
}

impl FieldFile {
    pub fn new(field: ComplexField, r0: f64) -> Self {
        Self { field, r0, phi_id: CutoffPhi::CONSTRUCTION_ID }
    }
}

pub fn write_field<W: Write>(mut w: W, file: &FieldFile) -> Result<()> {
    let g = file.field.grid();
    let mut buf = Vec::with_capacity(16 + 12 * g.dim() + 16 * g.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(g.dim() as u16).to_le_bytes());
    for &n in g.sizes() {
        let n = u32::try_from(n).map_err(|_| Error::Format("axis size exceeds u32".into()))?;
        buf.extend_from_slice(&n.to_le_bytes());
    }
    for &h in g.spacing() {
        buf.extend_from_slice(&h.to_le_bytes());
    }
    buf.extend_from_slice(&file.r0.to_le_bytes());
    buf.push(file.phi_id);
    for z in file.field.values() {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Format("unexpected end of file".into()));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_field<R: Read>(mut r: R) -> Result<FieldFile> {
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    let mut c = Cursor { data: &data, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = c.u16()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let dim = c.u16()? as usize;
    let sizes = (0..dim).map(|_| c.u32().map(|n| n as usize)).collect::<Result<Vec<_>>>()?;
    let spacing = (0..dim).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
    let r0 = c.f64()?;
    let phi_id = c.take(1)?[0];
    let grid = Grid::new(sizes, spacing)?;
    let expected = grid.len() * 16;
    if data.len() - c.pos != expected {
        return Err(Error::Format(format!(
            "payload has {} bytes, expected {expected}",
            data.len() - c.pos
        )));
    }
    let values = (0..grid.len())
        .map(|_| Ok(Complex64::new(c.f64()?, c.f64()?)))
        .collect::<Result<Vec<_>>>()?;
    if !(r0 > 0.0) {
        return Err(Error::Format(format!("r0 = {r0} is not positive")));
    }
    let field = ComplexField::from_values(grid, values).map_err(|e| Error::Format(e.to_string()))?;
    Ok(FieldFile { field, r0, phi_id })
}

pub fn save(path: &Path, file: &FieldFile) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_field(std::io::BufWriter::new(f), file)
}

pub fn load(path: &Path) -> Result<FieldFile> {
    read_field(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn round_trip_is_bit_exact(
            n in 8usize..11,
            h in 0.05f64..2.0,
            r0 in 0.1f64..5.0,
            seed in any::<u64>(),
        ) {
            let g = Grid::new(vec![n, 8, n + 1], vec![h, 2.0 * h, 0.5 * h]).unwrap();
            let mut s = seed;
            let vals: Vec<Complex64> = (0..g.len())
                .map(|_| {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    Complex64::new(f64::from_bits(s >> 12 | 0x3ff0000000000000) - 1.5, (s as f64) * 1e-19)
                })
                .collect();
            let file = FieldFile::new(ComplexField::from_values(g, vals).unwrap(), r0);
            let mut a = Vec::new();
            write_field(&mut a, &file).unwrap();
            let back = read_field(&a[..]).unwrap();
            prop_assert_eq!(&back, &file);
            let mut b = Vec::new();
            write_field(&mut b, &back).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn rejects_corrupt_input() {
        let g = Grid::cube(3, 8, 1.0).unwrap();
        let file = FieldFile::new(ComplexField::zeros(g), 1.0);
        let mut a = Vec::new();
        write_field(&mut a, &file).unwrap();
        assert!(matches!(read_field(&a[..a.len() - 1]), Err(Error::Format(_))));
        let mut bad = a.clone();
        bad[0] = b'X';
        assert!(matches!(read_field(&bad[..]), Err(Error::Format(_))));
        let mut nan = a.clone();
        let n = nan.len();
        nan[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(read_field(&nan[..]).is_err());
    }
}
