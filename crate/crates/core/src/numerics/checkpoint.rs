//! Single-file checkpoint archive.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"VATCKPT\0"          8-byte magic
//! u32                   archive format version
//! u64                   manifest length in bytes
//! [u8; len]             UTF-8 JSON manifest
//! blob*                 raw IEEE-754 values, one blob per manifest entry, in order
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::ParamStore;
use crate::real::{Dtype, Real};

pub const MAGIC: &[u8; 8] = b"VATCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub dtype: Dtype,
    /// Model configuration; opaque at this layer.
    pub config: serde_json::Value,
    pub params: Vec<ManifestEntry>,
}

pub fn encode_checkpoint<T: Real>(params: &ParamStore<T>, config: serde_json::Value) -> Result<Vec<u8>> {
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        dtype: T::DTYPE,
        config,
        params: params
            .entries()
            .iter()
            .map(|e| ManifestEntry {
                name: e.name.clone(),
                shape: e.shape.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&manifest)?;
    let mut out = Vec::with_capacity(20 + json.len() + params.num_scalars() * T::DTYPE.byte_width());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for e in params.entries() {
        for &v in e.value.data() {
            v.write_le(&mut out);
        }
    }
    Ok(out)
}

/// Parses an archive into its manifest and a store in precision `T`.
/// Values stored at a different width are converted through `f64`.
pub fn decode_checkpoint<T: Real>(bytes: &[u8]) -> Result<(Manifest, ParamStore<T>)> {
    let truncated = || Error::Version("truncated checkpoint".into());
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(Error::Version("not a checkpoint archive (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Version(format!(
            "archive format {version}, this build reads {FORMAT_VERSION}"
        )));
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let json = bytes.get(20..20 + len).ok_or_else(truncated)?;
    let manifest: Manifest = serde_json::from_slice(json)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Version(format!(
            "manifest format {}, expected {FORMAT_VERSION}",
            manifest.format_version
        )));
    }

    let width = manifest.dtype.byte_width();
    let mut cursor = 20 + len;
    let mut store = ParamStore::new();
    for entry in &manifest.params {
        let count: usize = entry.shape.iter().product();
        let blob = bytes
            .get(cursor..cursor + count * width)
            .ok_or_else(truncated)?;
        cursor += count * width;
        let values: Vec<T> = blob
            .chunks_exact(width)
            .map(|b| match manifest.dtype {
                d if d == T::DTYPE => T::read_le(b),
                Dtype::F32 => T::of(f32::read_le(b) as f64),
                Dtype::F64 => T::of(f64::read_le(b)),
            })
            .collect();
        store.insert(entry.name.clone(), &entry.shape, values)?;
    }
    if cursor != bytes.len() {
        return Err(Error::Version(format!(
            "{} trailing bytes after last blob",
            bytes.len() - cursor
        )));
    }
    Ok((manifest, store))
}

pub fn save_checkpoint<T: Real>(path: &Path, params: &ParamStore<T>, config: serde_json::Value) -> Result<()> {
    let bytes = encode_checkpoint(params, config)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<(Manifest, ParamStore<T>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.insert("a.w", &[2, 3], vec![0.1, -2.5, 1e-300, f64::MIN_POSITIVE, 3.0, -0.0])
            .unwrap();
        s.insert("a.b", &[3], vec![1.0, 2.0, 3.0]).unwrap();
        s
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let s = store();
        let bytes = encode_checkpoint(&s, serde_json::json!({"k": 1})).unwrap();
        let (m, back) = decode_checkpoint::<f64>(&bytes).unwrap();
        assert_eq!(m.dtype, Dtype::F64);
        assert_eq!(m.config["k"], 1);
        for (a, b) in s.entries().iter().zip(back.entries()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.shape, b.shape);
            let bits = |t: &crate::numerics::Tensor<f64>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.value), bits(&b.value));
        }
    }

    #[test]
    fn corrupt_archives_are_version_errors() {
        let bytes = encode_checkpoint(&store(), serde_json::Value::Null).unwrap();
        assert!(matches!(decode_checkpoint::<f64>(&bytes[..bytes.len() - 1]), Err(Error::Version(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_checkpoint::<f64>(&bad), Err(Error::Version(_))));
        let mut future = bytes;
        future[8] = 9;
        assert!(matches!(decode_checkpoint::<f64>(&future), Err(Error::Version(_))));
    }

    #[test]
    fn narrower_dtype_loads_through_widening() {
        let s = store().cast::<f32>();
        let bytes = encode_checkpoint(&s, serde_json::Value::Null).unwrap();
        let (m, back) = decode_checkpoint::<f64>(&bytes).unwrap();
        assert_eq!(m.dtype, Dtype::F32);
        assert_eq!(back.entries()[1].value.data(), &[1.0, 2.0, 3.0]);
    }
}
