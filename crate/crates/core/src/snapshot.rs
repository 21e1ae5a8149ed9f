//! Binary snapshot files.
//!
//! Layout, all little-endian:
//!
//! | offset | size | field                    |
//! |--------|------|--------------------------|
//! | 0      | 4    | magic `NSLB`             |
//! | 4      | 4    | version (u32)            |
//! | 8      | 4    | dimension n (u32)        |
//! | 12     | 4    | points per axis N (u32)  |
//! | 16     | 4    | component count (u32)    |
//! | 20     | 8    | time (f64)               |
//! | 28     | ...  | f64 grid values          |
//!
//! The payload holds each component in turn, row-major over the grid
//! (last axis fastest), `components * N^n` values in total.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::spectral::{PhysicalField, TorusGrid};

pub const MAGIC: [u8; 4] = *b"NSLB";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 28;

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub field: PhysicalField,
}

impl Snapshot {
    pub fn to_bytes(&self) -> Vec<u8> {
        let grid = self.field.grid();
        let comps = self.field.components();
        let mut out = Vec::with_capacity(HEADER_LEN + comps * grid.len() * 8);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(grid.dim() as u32).to_le_bytes());
        out.extend_from_slice(&(grid.n() as u32).to_le_bytes());
        out.extend_from_slice(&(comps as u32).to_le_bytes());
        out.extend_from_slice(&self.time.to_le_bytes());
        for comp in self.field.values() {
            for v in comp {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fail = |offset: usize, reason: String| Error::Format { offset, reason };
        if bytes.len() < HEADER_LEN {
            return Err(fail(bytes.len(), format!("header needs {HEADER_LEN} bytes, file has {}", bytes.len())));
        }
        if bytes[..4] != MAGIC {
            return Err(fail(0, format!("bad magic {:?}", &bytes[..4])));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
        let version = word(4);
        if version != VERSION {
            return Err(fail(4, format!("unsupported version {version}, reader handles {VERSION}")));
        }
        let (dim, n, comps) = (word(8) as usize, word(12) as usize, word(16) as usize);
        let time = f64::from_le_bytes(bytes[20..28].try_into().expect("8 bytes"));
        let grid = TorusGrid::new(dim, n).map_err(|e| fail(8, e.to_string()))?;
        if comps == 0 {
            return Err(fail(16, "component count is zero".into()));
        }
        let expected = HEADER_LEN + comps * grid.len() * 8;
        if bytes.len() != expected {
            return Err(fail(
                bytes.len().min(expected),
                format!("payload length mismatch: file has {} bytes, header implies {expected}", bytes.len()),
            ));
        }
        let values = (0..comps)
            .map(|c| {
                let base = HEADER_LEN + c * grid.len() * 8;
                (0..grid.len())
                    .map(|i| {
                        let at = base + i * 8;
                        f64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"))
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            time,
            field: PhysicalField::new(grid, values)?,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let io = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut file = fs::File::create(path).map_err(io)?;
        file.write_all(&self.to_bytes()).map_err(io)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Snapshot {
        let grid = TorusGrid::new(2, 8).unwrap();
        let field = PhysicalField::from_fn(&grid, 2, |x, out| {
            out[0] = (x[0] * 7.1).sin() + 1e-300;
            out[1] = -x[1] / 3.0;
        });
        Snapshot { time: 0.125, field }
    }

    #[test]
    fn header_is_28_bytes_and_little_endian() {
        let bytes = sample().to_bytes();
        assert_eq!(&bytes[..4], b"NSLB");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &[8, 0, 0, 0]);
        assert_eq!(bytes.len(), HEADER_LEN + 2 * 64 * 8);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = sample().to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Snapshot::from_bytes(&bad), Err(Error::Format { offset: 0, .. })));
        let mut newer = bytes.clone();
        newer[4] = 2;
        assert!(matches!(Snapshot::from_bytes(&newer), Err(Error::Format { offset: 4, .. })));
        let cut = &bytes[..bytes.len() - 5];
        match Snapshot::from_bytes(cut) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, cut.len()),
            other => panic!("{other:?}"),
        }
        assert!(Snapshot::from_bytes(&bytes[..10]).is_err());
    }
}
