//! Checkpoint file format.
//!
//! Layout: magic bytes `SCVC`, format version (u32 LE), header length
//! (u64 LE), a UTF-8 JSON header, then the raw little-endian f64 value
//! buffers. The header records parameter names, shapes, dtype, byte offsets
//! into the payload, trainable flags, the optimizer step count, and an
//! arbitrary `meta` object for the owning layer (model dims, vocabulary).
//! Round-trips are bit-exact.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::numcore::params::ParamStore;
use crate::numcore::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"SCVC";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ParamRecord {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the payload section.
    offset: u64,
    /// Number of f64 values.
    len: u64,
    trainable: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    dtype: String,
    step_count: u64,
    params: Vec<ParamRecord>,
    #[serde(default)]
    meta: serde_json::Value,
}

/// Write `store` (and caller metadata) to `path`.
pub fn save(path: &Path, store: &ParamStore, meta: &serde_json::Value) -> Result<()> {
    let mut records = Vec::new();
    let mut offset = 0u64;
    for name in store.names() {
        let t = store.tensor(name)?;
        records.push(ParamRecord {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            offset,
            len: t.len() as u64,
            trainable: store.is_trainable(name),
        });
        offset += (t.len() * 8) as u64;
    }
    let header = Header {
        dtype: "f64".to_string(),
        step_count: store.step_count(),
        params: records,
        meta: meta.clone(),
    };
    let header_bytes = serde_json::to_vec(&header)
        .map_err(|e| CoreError::data(format!("checkpoint header encode: {e}")))?;

    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(MAGIC)?;
    f.write_all(&FORMAT_VERSION.to_le_bytes())?;
    f.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
    f.write_all(&header_bytes)?;
    for name in store.names() {
        let t = store.tensor(name)?;
        for v in t.data() {
            f.write_all(&v.to_le_bytes())?;
        }
    }
    f.flush()?;
    Ok(())
}

/// Load a checkpoint: the parameter store plus the caller metadata object.
pub fn load(path: &Path) -> Result<(ParamStore, serde_json::Value)> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CoreError::data(format!(
            "bad checkpoint magic {magic:?}, expected {MAGIC:?}"
        )));
    }
    let mut v4 = [0u8; 4];
    f.read_exact(&mut v4)?;
    let version = u32::from_le_bytes(v4);
    if version != FORMAT_VERSION {
        return Err(CoreError::data(format!(
            "checkpoint format version {version} not supported (expected {FORMAT_VERSION})"
        )));
    }
    let mut l8 = [0u8; 8];
    f.read_exact(&mut l8)?;
    let header_len = u64::from_le_bytes(l8) as usize;
    let mut header_bytes = vec![0u8; header_len];
    f.read_exact(&mut header_bytes)?;
    let header: Header = serde_json::from_slice(&header_bytes)
        .map_err(|e| CoreError::data(format!("checkpoint header decode: {e}")))?;
    if header.dtype != "f64" {
        return Err(CoreError::data(format!(
            "checkpoint dtype {} not supported",
            header.dtype
        )));
    }

    let mut payload = Vec::new();
    f.read_to_end(&mut payload)?;

    // Records may appear in any order; offsets are authoritative.
    let mut by_offset: BTreeMap<u64, &ParamRecord> = BTreeMap::new();
    for r in &header.params {
        by_offset.insert(r.offset, r);
    }

    let mut store = ParamStore::new();
    for r in header.params.iter() {
        let start = r.offset as usize;
        let end = start + (r.len as usize) * 8;
        if end > payload.len() {
            return Err(CoreError::data(format!(
                "checkpoint truncated: {} wants bytes [{start}, {end}) of {}",
                r.name,
                payload.len()
            )));
        }
        let data: Vec<f64> = payload[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::new(r.shape.clone(), data)?;
        if r.trainable {
            store.insert(&r.name, t)?;
        } else {
            store.insert_frozen(&r.name, t)?;
        }
    }
    store.set_step_count(header.step_count);
    Ok((store, header.meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.scvc");

        let mut store = ParamStore::new();
        store
            .insert("a.w", Tensor::matrix(2, 3, vec![0.1, -0.2, 0.3, 1e-300, -1e300, 0.0]).unwrap())
            .unwrap();
        store.insert_frozen("emb", Tensor::vector(vec![std::f64::consts::PI])).unwrap();
        store.set_step_count(42);

        let meta = serde_json::json!({"hidden": 48});
        save(&path, &store, &meta).unwrap();
        let (loaded, meta2) = load(&path).unwrap();

        assert_eq!(meta2["hidden"], 48);
        assert_eq!(loaded.step_count(), 42);
        assert_eq!(loaded.tensor("a.w").unwrap(), store.tensor("a.w").unwrap());
        assert_eq!(loaded.tensor("emb").unwrap(), store.tensor("emb").unwrap());
        assert!(!loaded.is_trainable("emb"));
        assert!(loaded.is_trainable("a.w"));

        // Saving again reproduces identical bytes.
        let path2 = dir.path().join("model2.scvc");
        save(&path2, &loaded, &meta2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn bad_magic_is_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk");
        std::fs::write(&path, b"JUNKxxxxxxxx").unwrap();
        assert!(matches!(load(&path), Err(CoreError::Data(_))));
    }

    #[test]
    fn version_mismatch_is_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vbad");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&99u32.to_le_bytes());
        bytes.extend_from_slice(&2u64.to_le_bytes());
        bytes.extend_from_slice(b"{}");
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load(&path), Err(CoreError::Data(_))));
    }
}
