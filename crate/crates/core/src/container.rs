//! Self-describing binary artifact format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! 8 bytes   magic "ROMCPART"
//! u32       schema version
//! u64       header length in bytes
//! ...       UTF-8 JSON header: {"kind", "schema_version", "meta", "blocks": [{"name","rows","cols"}]}
//! ...       f64 blocks in header order, each row-major
//! ```

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"ROMCPART";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BlockHeader {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    kind: String,
    schema_version: u32,
    meta: serde_json::Value,
    blocks: Vec<BlockHeader>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Row-major values.
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: String,
    pub meta: serde_json::Value,
    blocks: Vec<Block>,
}

impl Container {
    pub fn new(kind: impl Into<String>, meta: serde_json::Value) -> Self {
        Self {
            kind: kind.into(),
            meta,
            blocks: Vec::new(),
        }
    }

    pub fn push_block(&mut self, name: impl Into<String>, rows: usize, cols: usize, data: Vec<f64>) {
        assert_eq!(rows * cols, data.len(), "block shape does not match data length");
        self.blocks.push(Block {
            name: name.into(),
            rows,
            cols,
            data,
        });
    }

    pub fn push_matrix(&mut self, name: impl Into<String>, m: &DMatrix<f64>) {
        let data = m.transpose().as_slice().to_vec();
        self.push_block(name, m.nrows(), m.ncols(), data);
    }

    pub fn push_vector(&mut self, name: impl Into<String>, v: &[f64]) {
        self.push_block(name, 1, v.len(), v.to_vec());
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Result<&Block> {
        self.blocks
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| Error::Format(format!("missing block '{name}' in {} artifact", self.kind)))
    }

    pub fn matrix(&self, name: &str) -> Result<DMatrix<f64>> {
        let b = self.block(name)?;
        Ok(DMatrix::from_row_slice(b.rows, b.cols, &b.data))
    }

    pub fn vector(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.block(name)?.data.clone())
    }

    /// Deserialises a typed field from `meta`.
    pub fn meta_field<T: serde::de::DeserializeOwned>(&self, key: &str) -> Result<T> {
        let v = self
            .meta
            .get(key)
            .ok_or_else(|| Error::Format(format!("missing header field '{key}'")))?;
        Ok(serde_json::from_value(v.clone())?)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            kind: self.kind.clone(),
            schema_version: SCHEMA_VERSION,
            meta: self.meta.clone(),
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockHeader {
                    name: b.name.clone(),
                    rows: b.rows,
                    cols: b.cols,
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let payload: usize = self.blocks.iter().map(|b| b.data.len() * 8).sum();
        let mut out = Vec::with_capacity(20 + json.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&SCHEMA_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for b in &self.blocks {
            for v in &b.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    /// Parses bytes, checking the magic, version, declared kind and shapes.
    pub fn from_bytes(bytes: &[u8], expected_kind: &str) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(Error::Format("not a romcp artifact (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != SCHEMA_VERSION {
            return Err(Error::Version {
                found: version,
                expected: SCHEMA_VERSION,
            });
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = &bytes[20..];
        if header_len > body.len() {
            return Err(Error::Format("truncated header".into()));
        }
        let header: Header = serde_json::from_slice(&body[..header_len])
            .map_err(|e| Error::Format(format!("malformed header: {e}")))?;
        if header.schema_version != SCHEMA_VERSION {
            return Err(Error::Version {
                found: header.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        if header.kind != expected_kind {
            return Err(Error::Format(format!(
                "expected a '{expected_kind}' artifact, found '{}'",
                header.kind
            )));
        }
        let payload = &body[header_len..];
        let declared: usize = header.blocks.iter().map(|b| b.rows * b.cols * 8).sum();
        if declared != payload.len() {
            return Err(Error::Shape(format!(
                "header declares {} payload bytes but file carries {}",
                declared,
                payload.len()
            )));
        }
        let mut offset = 0;
        let mut blocks = Vec::with_capacity(header.blocks.len());
        for bh in header.blocks {
            let n = bh.rows * bh.cols;
            let data = payload[offset..offset + n * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            offset += n * 8;
            blocks.push(Block {
                name: bh.name,
                rows: bh.rows,
                cols: bh.cols,
                data,
            });
        }
        Ok(Self {
            kind: header.kind,
            meta: header.meta,
            blocks,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>, expected_kind: &str) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?, expected_kind)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn sample() -> Container {
        let mut c = Container::new("thing", json!({"seed": 3, "scale": 0.1}));
        c.push_matrix("m", &DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, -0.0]));
        c.push_vector("v", &[f64::MIN_POSITIVE, 1e300]);
        c
    }

    #[test]
    fn round_trip_is_bitwise() {
        let c = sample();
        let back = Container::from_bytes(&c.to_bytes().unwrap(), "thing").unwrap();
        assert_eq!(back, c);
        assert_eq!(back.matrix("m").unwrap()[(1, 2)].to_bits(), (-0.0f64).to_bits());
        assert_eq!(back.meta_field::<f64>("scale").unwrap(), 0.1);
    }

    #[test]
    fn payload_is_row_major() {
        let bytes = sample().to_bytes().unwrap();
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let first = &bytes[20 + header_len..20 + header_len + 16];
        assert_eq!(f64::from_le_bytes(first[..8].try_into().unwrap()), 1.0);
        assert_eq!(f64::from_le_bytes(first[8..].try_into().unwrap()), 2.0);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let bytes = sample().to_bytes().unwrap();
        assert!(matches!(
            Container::from_bytes(&bytes[..bytes.len() - 8], "thing"),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            Container::from_bytes(&bytes, "other"),
            Err(Error::Format(_))
        ));
        let mut wrong_version = bytes.clone();
        wrong_version[8] = 9;
        assert!(matches!(
            Container::from_bytes(&wrong_version, "thing"),
            Err(Error::Version { found: 9, .. })
        ));
        assert!(Container::from_bytes(b"garbage", "thing").is_err());
    }
}
