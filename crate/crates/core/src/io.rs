//! Array files, metadata sidecars and parameter checkpoints.
//!
//! Array layout: the 8-byte magic `URLLARR\0`, a little-endian `u32`
//! version (1), a `u32` dimension count, one `u64` per dimension, then the
//! `f64` payload in little-endian row-major order.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"URLLARR\0";
pub const VERSION: u32 = 1;

/// Shaped `f64` array as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Array {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Array {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::Format(format!("shape {dims:?} holds {n} values, got {}", data.len())));
        }
        Ok(Self { dims, data })
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            dims: vec![data.len()],
            data,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * (self.dims.len() + self.data.len()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = bytes
                .get(pos..pos + n)
                .ok_or_else(|| Error::Format("array file is truncated".into()))?;
            pos += n;
            Ok(s)
        };
        if take(8)? != MAGIC {
            return Err(Error::Format("bad array magic".into()));
        }
        let version = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::Format(format!("unsupported array version {version}")));
        }
        let ndims = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
        let mut dims = Vec::with_capacity(ndims);
        for _ in 0..ndims {
            let d = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes"));
            dims.push(usize::try_from(d).map_err(|_| Error::Format("dimension too large".into()))?);
        }
        let n = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::Format("array size overflows".into()))?;
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f64::from_le_bytes(take(8)?.try_into().expect("8 bytes")));
        }
        if pos != bytes.len() {
            return Err(Error::Format("trailing bytes after array payload".into()));
        }
        Ok(Self { dims, data })
    }
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_array(path: &Path, array: &Array) -> Result<()> {
    write_atomic(path, &array.encode())
}

pub fn read_array(path: &Path) -> Result<Array> {
    Array::decode(&fs::read(path)?)
}

/// `key=value` lines, sorted by key.
pub fn format_sidecar(entries: &BTreeMap<String, String>) -> String {
    entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

pub fn parse_sidecar(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("line {}: expected key=value", n + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Path of the metadata sidecar next to an array file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Array plus its sidecar.
pub fn write_array_with_meta(path: &Path, array: &Array, meta: &BTreeMap<String, String>) -> Result<()> {
    write_array(path, array)?;
    write_atomic(&sidecar_path(path), format_sidecar(meta).as_bytes())
}

pub fn read_meta(path: &Path) -> Result<BTreeMap<String, String>> {
    parse_sidecar(&fs::read_to_string(sidecar_path(path))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let a = Array::new(vec![2, 3], (0..6).map(f64::from).collect()).unwrap();
        let b = a.encode();
        assert_eq!(&b[..8], b"URLLARR\0");
        assert_eq!(&b[8..12], &[1, 0, 0, 0]);
        assert_eq!(&b[12..16], &[2, 0, 0, 0]);
        assert_eq!(&b[16..24], &2u64.to_le_bytes());
        assert_eq!(b.len(), 16 + 16 + 48);
        assert_eq!(Array::decode(&b).unwrap(), a);
    }

    #[test]
    fn rejects_malformed() {
        let mut b = Array::vector(vec![1.0, 2.0]).encode();
        assert!(Array::decode(&b[..b.len() - 1]).is_err());
        b.push(0);
        assert!(Array::decode(&b).is_err());
        b[0] = b'X';
        assert!(Array::decode(&b).is_err());
        assert!(Array::new(vec![2, 2], vec![0.0; 3]).is_err());
    }

    #[test]
    fn special_values_round_trip() {
        let a = Array::vector(vec![f64::INFINITY, -0.0, f64::MIN_POSITIVE, 1e308]);
        let back = Array::decode(&a.encode()).unwrap();
        assert!(back.data.iter().zip(&a.data).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn sidecar_round_trip() {
        let mut m = BTreeMap::new();
        m.insert("b".to_string(), "2".to_string());
        m.insert("a".to_string(), "x y".to_string());
        let text = format_sidecar(&m);
        assert_eq!(text, "a=x y\nb=2\n");
        assert_eq!(parse_sidecar(&text).unwrap(), m);
        assert!(parse_sidecar("novalue").is_err());
    }
}
