//! Self-describing binary array container and JSON sidecars.
//!
//! Layout (all integers little-endian):
//!
//! | bytes | content                              |
//! |-------|--------------------------------------|
//! | 8     | magic `FOEIMARR`                     |
//! | 2     | format version (currently 1)         |
//! | 1     | dtype code (1 = float64)             |
//! | 1     | number of dimensions `d`             |
//! | 8·d   | dimensions as u64                    |
//! | …     | row-major float64 payload            |
//!
//! Every write goes to a temporary sibling first and is renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"FOEIMARR";
pub const VERSION: u16 = 1;
pub const DTYPE_F64: u8 = 1;

/// A dense n-dimensional float64 array in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Array {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Array {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(Error::DimensionMismatch(format!(
                "dims {dims:?} need {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn from_vector(v: &DVector<f64>) -> Self {
        Self {
            dims: vec![v.len()],
            data: v.as_slice().to_vec(),
        }
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let (r, c) = m.shape();
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            data.extend(m.row(i).iter());
        }
        Self { dims: vec![r, c], data }
    }

    pub fn into_vector(self) -> Result<DVector<f64>> {
        if self.dims.len() != 1 {
            return Err(Error::DimensionMismatch(format!("expected a vector, got dims {:?}", self.dims)));
        }
        Ok(DVector::from_vec(self.data))
    }

    pub fn into_matrix(self) -> Result<DMatrix<f64>> {
        if self.dims.len() != 2 {
            return Err(Error::DimensionMismatch(format!("expected a matrix, got dims {:?}", self.dims)));
        }
        Ok(DMatrix::from_row_slice(self.dims[0], self.dims[1], &self.data))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 8 * self.dims.len() + 8 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(DTYPE_F64);
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let corrupt = |reason: &str| Error::CorruptArray {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(corrupt("bad magic bytes"));
        }
        let version = u16::from_le_bytes([bytes[8], bytes[9]]);
        if version != VERSION {
            return Err(corrupt(&format!("unsupported version {version}")));
        }
        if bytes[10] != DTYPE_F64 {
            return Err(corrupt(&format!("unsupported dtype code {}", bytes[10])));
        }
        let ndim = bytes[11] as usize;
        let header = 12 + 8 * ndim;
        if bytes.len() < header {
            return Err(corrupt("truncated header"));
        }
        let dims: Vec<usize> = bytes[12..header]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect();
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| corrupt("dimension overflow"))?;
        if bytes.len() - header != 8 * count {
            return Err(corrupt(&format!(
                "payload has {} bytes, dims {dims:?} need {}",
                bytes.len() - header,
                8 * count
            )));
        }
        let data = bytes[header..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { dims, data })
    }
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let tmp = temp_sibling(path);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn temp_sibling(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(format!(".tmp{}", std::process::id()));
    path.with_file_name(name)
}

pub fn write_array(path: &Path, array: &Array) -> Result<()> {
    atomic_write(path, &array.to_bytes())
}

pub fn read_array(path: &Path) -> Result<Array> {
    let bytes = fs::read(path)?;
    Array::from_bytes(&bytes, path)
}

pub fn write_vector(path: &Path, v: &DVector<f64>) -> Result<()> {
    write_array(path, &Array::from_vector(v))
}

pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    read_array(path)?.into_vector()
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    write_array(path, &Array::from_matrix(m))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    read_array(path)?.into_matrix()
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let m = DMatrix::from_fn(3, 4, |i, j| (i as f64 + 0.1).powf(j as f64 - 1.3));
        let p = dir.path().join("a/b/m.bin");
        write_matrix(&p, &m).unwrap();
        let back = read_matrix(&p).unwrap();
        assert_eq!(m, back);
        // row-major payload
        let raw = read_array(&p).unwrap();
        assert_eq!(raw.dims, vec![3, 4]);
        assert_eq!(raw.data[1], m[(0, 1)]);
    }

    #[test]
    fn header_layout() {
        let a = Array::new(vec![2], vec![1.0, -2.5]).unwrap();
        let b = a.to_bytes();
        assert_eq!(&b[..8], b"FOEIMARR");
        assert_eq!(u16::from_le_bytes([b[8], b[9]]), 1);
        assert_eq!(b[10], 1);
        assert_eq!(b[11], 1);
        assert_eq!(u64::from_le_bytes(b[12..20].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(b[28..36].try_into().unwrap()), -2.5);
    }

    #[test]
    fn rejects_truncated_and_foreign_files() {
        let p = Path::new("x.bin");
        let mut b = Array::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap().to_bytes();
        b.pop();
        assert!(matches!(Array::from_bytes(&b, p), Err(Error::CorruptArray { .. })));
        assert!(Array::from_bytes(b"not an array at all", p).is_err());
        assert!(Array::new(vec![2, 2], vec![0.0; 3]).is_err());
    }

    #[test]
    fn no_temporary_left_behind() {
        let dir = tempfile::tempdir().unwrap();
        write_json(&dir.path().join("x.json"), &vec![1, 2, 3]).unwrap();
        let names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names, vec![std::ffi::OsString::from("x.json")]);
        let back: Vec<i32> = read_json(&dir.path().join("x.json")).unwrap();
        assert_eq!(back, vec![1, 2, 3]);
    }
}
