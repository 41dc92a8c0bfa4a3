//! `LVEC` binary matrix files.
//!
//! Layout (little-endian):
//!
//! | offset | size | field                          |
//! |--------|------|--------------------------------|
//! | 0      | 4    | magic `b"LVEC"`                |
//! | 4      | 1    | version (1)                    |
//! | 5      | 1    | dtype (1 = f32)                |
//! | 6      | 4    | row count, u32                 |
//! | 10     | 4    | row dimension, u32             |
//! | 14     | 4·count·dim | row-major f32 payload   |

use std::fs;
use std::path::Path;

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"LVEC";
pub const VERSION: u8 = 1;
pub const DTYPE_F32: u8 = 1;
const HEADER_LEN: usize = 14;

#[derive(Debug, Error)]
pub enum VectorFileError {
    #[error("not an LVEC file (bad magic)")]
    BadMagic,
    #[error("unsupported LVEC version {0}")]
    UnsupportedVersion(u8),
    #[error("unsupported LVEC dtype {0}")]
    UnsupportedDtype(u8),
    #[error("payload is {actual} bytes, header requires {expected}")]
    TruncatedPayload { expected: u64, actual: u64 },
    #[error("row {row} has length {actual}, expected {expected}")]
    RaggedRows { row: usize, expected: usize, actual: usize },
    #[error("matrix contains a value that is not a finite f32")]
    NonFinite,
    #[error("matrix of {rows}x{dim} does not fit 32-bit counts")]
    TooLarge { rows: usize, dim: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Dense row-major `f32` matrix, the in-memory form of an `LVEC` file.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorMatrix {
    dim: usize,
    data: Vec<f32>,
}

impl VectorMatrix {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self, VectorFileError> {
        if dim == 0 && !data.is_empty() {
            return Err(VectorFileError::RaggedRows { row: 0, expected: 0, actual: data.len() });
        }
        if dim > 0 && !data.len().is_multiple_of(dim) {
            let rows = data.len() / dim;
            return Err(VectorFileError::RaggedRows { row: rows, expected: dim, actual: data.len() % dim });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(VectorFileError::NonFinite);
        }
        let rows = data.len().checked_div(dim).unwrap_or(0);
        if u32::try_from(rows).is_err() || u32::try_from(dim).is_err() {
            return Err(VectorFileError::TooLarge { rows, dim });
        }
        Ok(Self { dim, data })
    }

    /// Narrows `f64` rows to `f32`.
    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Result<Self, VectorFileError> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (row, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(VectorFileError::RaggedRows { row, expected: dim, actual: r.len() });
            }
            data.extend(r.iter().map(|&v| v as f32));
        }
        Self::new(dim, data)
    }

    pub fn rows(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn to_f64_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows()).map(|i| self.row(i).iter().map(|&v| v as f64).collect()).collect()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(DTYPE_F32);
        out.extend_from_slice(&(self.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, VectorFileError> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(VectorFileError::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(VectorFileError::TruncatedPayload { expected: HEADER_LEN as u64, actual: bytes.len() as u64 });
        }
        if bytes[4] != VERSION {
            return Err(VectorFileError::UnsupportedVersion(bytes[4]));
        }
        if bytes[5] != DTYPE_F32 {
            return Err(VectorFileError::UnsupportedDtype(bytes[5]));
        }
        let count = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as u64;
        let dim = u32::from_le_bytes(bytes[10..14].try_into().expect("4 bytes")) as u64;
        let payload = &bytes[HEADER_LEN..];
        let expected = 4 * count * dim;
        if payload.len() as u64 != expected {
            return Err(VectorFileError::TruncatedPayload { expected, actual: payload.len() as u64 });
        }
        if count > 0 && dim == 0 {
            return Err(VectorFileError::RaggedRows { row: 0, expected: 0, actual: 0 });
        }
        let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        Self::new(dim as usize, data)
    }
}

pub fn write_vectors(path: &Path, matrix: &VectorMatrix) -> Result<(), VectorFileError> {
    fs::write(path, matrix.encode()).map_err(|source| VectorFileError::Io { path: path.display().to_string(), source })
}

pub fn read_vectors(path: &Path) -> Result<VectorMatrix, VectorFileError> {
    let bytes = fs::read(path).map_err(|source| VectorFileError::Io { path: path.display().to_string(), source })?;
    VectorMatrix::decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn round_trip_3x4() {
        let m = VectorMatrix::new(4, (0..12).map(|i| i as f32 * 0.25 - 1.0).collect()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.lvec");
        write_vectors(&path, &m).unwrap();
        let back = read_vectors(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.rows(), 3);
        assert_eq!(fs::read(&path).unwrap().len(), 14 + 48);
    }

    #[test]
    fn header_bytes() {
        let m = VectorMatrix::new(2, vec![1.0, -2.0]).unwrap();
        let bytes = m.encode();
        assert_eq!(&bytes[..14], &[b'L', b'V', b'E', b'C', 1, 1, 1, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(&bytes[14..18], &1.0f32.to_le_bytes());
    }

    #[test]
    fn malformed_files() {
        assert!(matches!(VectorMatrix::decode(&[]), Err(VectorFileError::BadMagic)));
        assert!(matches!(VectorMatrix::decode(b"NOPE\x01\x01"), Err(VectorFileError::BadMagic)));
        let mut bytes = VectorMatrix::new(4, vec![0.5; 12]).unwrap().encode();
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(VectorMatrix::decode(&bytes), Err(VectorFileError::TruncatedPayload { expected: 48, actual: 45 })));
        let mut v2 = VectorMatrix::new(1, vec![0.5]).unwrap().encode();
        v2[4] = 2;
        assert!(matches!(VectorMatrix::decode(&v2), Err(VectorFileError::UnsupportedVersion(2))));
        let mut f64_dtype = VectorMatrix::new(1, vec![0.5]).unwrap().encode();
        f64_dtype[5] = 2;
        assert!(matches!(VectorMatrix::decode(&f64_dtype), Err(VectorFileError::UnsupportedDtype(2))));
        assert!(matches!(VectorMatrix::decode(b"LVEC\x01"), Err(VectorFileError::TruncatedPayload { .. })));
    }

    #[test]
    fn rejects_bad_matrices() {
        assert!(matches!(VectorMatrix::new(2, vec![f32::NAN, 0.0]), Err(VectorFileError::NonFinite)));
        assert!(matches!(VectorMatrix::from_rows(2, &[vec![1.0, 2.0], vec![1.0]]), Err(VectorFileError::RaggedRows { row: 1, .. })));
        assert!(matches!(VectorMatrix::from_rows(1, &[vec![1e300]]), Err(VectorFileError::NonFinite)));
        let empty = VectorMatrix::from_rows(5, &[]).unwrap();
        assert_eq!(VectorMatrix::decode(&empty.encode()).unwrap(), empty);
    }

    proptest! {
        #[test]
        fn encode_decode_is_exact(dim in 1usize..6, values in prop::collection::vec(-1e6f32..1e6f32, 0..60)) {
            let keep = values.len() - values.len() % dim;
            let m = VectorMatrix::new(dim, values[..keep].to_vec()).unwrap();
            let bytes = m.encode();
            let back = VectorMatrix::decode(&bytes).unwrap();
            prop_assert_eq!(&back, &m);
            prop_assert_eq!(back.encode(), bytes);
        }
    }
}
