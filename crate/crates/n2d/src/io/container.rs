//! Versioned binary container for checkpoints, models, and embeddings.
//!
//! Layout: magic `N2DC`, format version (u32 LE), JSON header length
//! (u64 LE), JSON header, then tensor payloads as little-endian f64 in
//! header order. Round-trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{N2dError, Result};

const MAGIC: &[u8; 4] = b"N2DC";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    kind: String,
    meta: serde_json::Value,
    tensors: Vec<TensorSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorSpec {
    name: String,
    rows: usize,
    cols: usize,
}

/// A named bundle of f64 matrices plus free-form JSON metadata.
#[derive(Debug, Clone)]
pub struct Container {
    pub kind: String,
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, Array2<f64>)>,
}

impl Container {
    pub fn new(kind: impl Into<String>, meta: serde_json::Value) -> Self {
        Container {
            kind: kind.into(),
            meta,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Array2<f64>) {
        self.tensors.push((name.into(), tensor));
    }

    pub fn tensor(&self, name: &str) -> Result<&Array2<f64>> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| N2dError::Format(format!("container missing tensor '{name}'")))
    }
}

pub fn save_container(path: &Path, container: &Container) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let header = Header {
        kind: container.kind.clone(),
        meta: container.meta.clone(),
        tensors: container
            .tensors
            .iter()
            .map(|(name, t)| TensorSpec {
                name: name.clone(),
                rows: t.nrows(),
                cols: t.ncols(),
            })
            .collect(),
    };
    let header_bytes = serde_json::to_vec(&header)
        .map_err(|e| N2dError::Format(format!("header encode: {e}")))?;

    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
    w.write_all(&header_bytes)?;
    for (_, tensor) in &container.tensors {
        for v in tensor.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_container(path: &Path) -> Result<Container> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(N2dError::Format(format!(
            "{}: bad container magic {magic:02x?}",
            path.display()
        )));
    }
    let mut version = [0u8; 4];
    r.read_exact(&mut version)?;
    let version = u32::from_le_bytes(version);
    if version != VERSION {
        return Err(N2dError::Format(format!(
            "{}: unsupported container version {version}",
            path.display()
        )));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let mut header_bytes = vec![0u8; u64::from_le_bytes(len) as usize];
    r.read_exact(&mut header_bytes)?;
    let header: Header = serde_json::from_slice(&header_bytes)
        .map_err(|e| N2dError::Format(format!("header decode: {e}")))?;

    let mut tensors = Vec::with_capacity(header.tensors.len());
    for spec in &header.tensors {
        let count = spec.rows * spec.cols;
        let mut buf = vec![0u8; count * 8];
        r.read_exact(&mut buf)?;
        let values: Vec<f64> = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let tensor = Array2::from_shape_vec((spec.rows, spec.cols), values)
            .map_err(|e| N2dError::Format(format!("tensor shape: {e}")))?;
        tensors.push((spec.name.clone(), tensor));
    }
    Ok(Container {
        kind: header.kind,
        meta: header.meta,
        tensors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = std::env::temp_dir().join(format!("n2d_container_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.n2dc");

        let mut c = Container::new("test", serde_json::json!({"alpha": 0.5}));
        c.push(
            "weights",
            array![[1.0, -2.5e-300, f64::MIN_POSITIVE], [3.5, 0.1 + 0.2, -0.0]],
        );
        c.push("bias", array![[42.0]]);
        save_container(&path, &c).unwrap();
        let loaded = load_container(&path).unwrap();

        assert_eq!(loaded.kind, "test");
        assert_eq!(loaded.meta["alpha"], 0.5);
        assert_eq!(loaded.tensors.len(), 2);
        for ((n1, t1), (n2, t2)) in c.tensors.iter().zip(loaded.tensors.iter()) {
            assert_eq!(n1, n2);
            for (a, b) in t1.iter().zip(t2.iter()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn rejects_wrong_magic() {
        let dir = std::env::temp_dir().join(format!("n2d_container_bad_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.n2dc");
        std::fs::write(&path, b"NOPE....").unwrap();
        assert!(matches!(load_container(&path), Err(N2dError::Format(_))));
    }
}
