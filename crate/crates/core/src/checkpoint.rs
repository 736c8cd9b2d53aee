//! Binary parameter container.
//!
//! Layout: the magic line `BDCK1\n`, one line of compact JSON (the header), then the
//! concatenated little-endian `f64` payload. The header records the method kind, free-form
//! metadata and, per parameter, its qualified name, shape, dtype and byte offset into the
//! payload.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{DenseArray, ParamStore};

pub const MAGIC: &[u8] = b"BDCK1";

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub shape: (usize, usize),
    pub dtype: String,
    pub offset: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    kind: String,
    meta: serde_json::Value,
    params: Vec<ParamEntry>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub kind: String,
    pub meta: serde_json::Value,
    pub params: BTreeMap<String, DenseArray>,
    pub entries: Vec<ParamEntry>,
}

impl Checkpoint {
    /// Collects parameters from labelled stores; names become `label/param`.
    pub fn from_stores(kind: &str, meta: serde_json::Value, stores: &[(&str, &ParamStore)]) -> Self {
        let mut params = BTreeMap::new();
        let mut entries = Vec::new();
        let mut offset = 0u64;
        for (label, store) in stores {
            for p in store.iter() {
                let name = format!("{label}/{}", p.name);
                entries.push(ParamEntry {
                    name: name.clone(),
                    shape: p.value.shape(),
                    dtype: "f64".into(),
                    offset,
                });
                offset += 8 * p.value.len() as u64;
                params.insert(name, p.value.clone());
            }
        }
        Self {
            kind: kind.to_string(),
            meta,
            params,
            entries,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            params: self.entries.clone(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut out = Vec::with_capacity(json.len() + 16);
        out.extend_from_slice(MAGIC);
        out.push(b'\n');
        out.extend_from_slice(&json);
        out.push(b'\n');
        for e in &self.entries {
            for v in self.params[&e.name].as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let rest = bytes
            .strip_prefix(MAGIC)
            .and_then(|r| r.strip_prefix(b"\n"))
            .ok_or_else(|| Error::Checkpoint("missing BDCK1 magic".into()))?;
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Checkpoint("unterminated header".into()))?;
        let header: Header =
            serde_json::from_slice(&rest[..nl]).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let payload = &rest[nl + 1..];
        let mut params = BTreeMap::new();
        for e in &header.params {
            if e.dtype != "f64" {
                return Err(Error::Checkpoint(format!("unsupported dtype {}", e.dtype)));
            }
            let n = e.shape.0 * e.shape.1;
            let start = e.offset as usize;
            let end = start + 8 * n;
            if end > payload.len() {
                return Err(Error::Checkpoint(format!("payload too short for {}", e.name)));
            }
            let values = payload[start..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            params.insert(e.name.clone(), DenseArray::new(e.shape.0, e.shape.1, values)?);
        }
        Ok(Self {
            kind: header.kind,
            meta: header.meta,
            params,
            entries: header.params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Overwrites every parameter of `store` from entries named `label/param`.
    pub fn restore_into(&self, label: &str, store: &mut ParamStore) -> Result<()> {
        for p in store.iter_mut() {
            let key = format!("{label}/{}", p.name);
            let v = self
                .params
                .get(&key)
                .ok_or_else(|| Error::Checkpoint(format!("checkpoint lacks {key}")))?;
            if v.shape() != p.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "{key}: shape {:?} != {:?}",
                    v.shape(),
                    p.value.shape()
                )));
            }
            p.value = v.clone();
        }
        Ok(())
    }

    pub fn meta_field<T: serde::de::DeserializeOwned>(&self, key: &str) -> Result<T> {
        let v = self
            .meta
            .get(key)
            .ok_or_else(|| Error::Checkpoint(format!("checkpoint meta lacks {key}")))?;
        serde_json::from_value(v.clone()).map_err(|e| Error::Checkpoint(format!("{key}: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let mut s = ParamStore::new();
        s.add("a", DenseArray::new(2, 2, vec![1.0, -0.0, f64::MIN_POSITIVE, 3.25]).unwrap())
            .unwrap();
        s.add("b", DenseArray::row_vector(vec![1e-300, 7.0])).unwrap();
        let ck = Checkpoint::from_stores("filling", serde_json::json!({"x": 1}), &[("net", &s)]);
        let bytes = ck.to_bytes().unwrap();
        assert!(bytes.starts_with(b"BDCK1\n"));
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.kind, "filling");
        assert_eq!(back.entries[1].offset, 32);
        let mut t = s.clone();
        t.zero_values();
        back.restore_into("net", &mut t).unwrap();
        assert_eq!(t.digest(), s.digest());
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Checkpoint::from_bytes(b"NOPE\n{}\n").is_err());
        assert!(Checkpoint::from_bytes(b"BDCK1\n{\"kind\":\"x\",\"meta\":null,\"params\":[{\"name\":\"a\",\"shape\":[1,2],\"dtype\":\"f64\",\"offset\":0}]}\n").is_err());
    }
}
