//! Model container: one file holding a JSON header and EMBX sections.
//!
//! Layout: `"RSDM"`, version byte `1`, header length `u32 LE`, UTF-8 JSON
//! header, then the sections back to back. The header is an object with a
//! `kind` string, model-specific fields, and `sections`: a list of
//! `{name, offset, length}` where `offset` counts bytes from the first byte
//! after the header.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::dataspec::{decode_embx, encode_embx, EmbeddingMatrix};
use crate::error::{Error, Result};

const MAGIC: [u8; 4] = *b"RSDM";
const VERSION: u8 = 1;
const PREAMBLE: usize = 9;

#[derive(Serialize, Deserialize)]
struct SectionEntry {
    name: String,
    offset: usize,
    length: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    kind: String,
    fields: Map<String, Value>,
    sections: Vec<(String, EmbeddingMatrix)>,
}

impl Container {
    pub fn new(kind: &str) -> Self {
        Self {
            kind: kind.to_string(),
            fields: Map::new(),
            sections: Vec::new(),
        }
    }

    pub fn kind(&self) -> &str {
        &self.kind
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Format(format!(
                "expected a {kind:?} container, found {:?}",
                self.kind
            )));
        }
        Ok(())
    }

    pub fn set<T: Serialize + ?Sized>(&mut self, key: &str, value: &T) -> Result<()> {
        assert!(
            key != "kind" && key != "sections",
            "reserved header key {key}"
        );
        self.fields
            .insert(key.to_string(), serde_json::to_value(value)?);
        Ok(())
    }

    pub fn get<T: DeserializeOwned>(&self, key: &str) -> Result<T> {
        let v = self
            .fields
            .get(key)
            .ok_or_else(|| Error::Format(format!("container header lacks {key:?}")))?;
        Ok(serde_json::from_value(v.clone())?)
    }

    pub fn push_section(&mut self, name: &str, m: EmbeddingMatrix) {
        self.sections.push((name.to_string(), m));
    }

    pub fn section(&self, name: &str) -> Result<&EmbeddingMatrix> {
        self.sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::Format(format!("container lacks section {name:?}")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut payload = Vec::new();
        let mut entries = Vec::with_capacity(self.sections.len());
        for (name, m) in &self.sections {
            let bytes = encode_embx(m)?;
            entries.push(SectionEntry {
                name: name.clone(),
                offset: payload.len(),
                length: bytes.len(),
            });
            payload.extend_from_slice(&bytes);
        }
        let mut header = Map::new();
        header.insert("kind".into(), Value::String(self.kind.clone()));
        for (k, v) in &self.fields {
            header.insert(k.clone(), v.clone());
        }
        header.insert("sections".into(), serde_json::to_value(&entries)?);
        let header = serde_json::to_vec(&Value::Object(header))?;
        let header_len =
            u32::try_from(header.len()).map_err(|_| Error::Format("header too large".into()))?;

        let mut out = Vec::with_capacity(PREAMBLE + header.len() + payload.len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&header_len.to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < PREAMBLE {
            return Err(Error::Truncated {
                expected: PREAMBLE,
                found: bytes.len(),
            });
        }
        if bytes[..4] != MAGIC {
            let mut found = [0u8; 4];
            found.copy_from_slice(&bytes[..4]);
            return Err(Error::BadMagic {
                expected: MAGIC,
                found,
            });
        }
        if bytes[4] != VERSION {
            return Err(Error::VersionMismatch {
                expected: VERSION,
                found: bytes[4],
            });
        }
        let header_len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let payload_start = PREAMBLE + header_len;
        if bytes.len() < payload_start {
            return Err(Error::Truncated {
                expected: payload_start,
                found: bytes.len(),
            });
        }
        let mut header: Map<String, Value> =
            serde_json::from_slice(&bytes[PREAMBLE..payload_start])?;
        let kind = match header.remove("kind") {
            Some(Value::String(k)) => k,
            _ => return Err(Error::Format("container header lacks a kind".into())),
        };
        let entries: Vec<SectionEntry> = match header.remove("sections") {
            Some(v) => serde_json::from_value(v)?,
            None => Vec::new(),
        };
        let payload = &bytes[payload_start..];
        let mut sections = Vec::with_capacity(entries.len());
        for e in entries {
            let end = e
                .offset
                .checked_add(e.length)
                .filter(|&end| end <= payload.len());
            let Some(end) = end else {
                return Err(Error::Truncated {
                    expected: payload_start + e.offset + e.length,
                    found: bytes.len(),
                });
            };
            sections.push((e.name, decode_embx(&payload[e.offset..end])?));
        }
        Ok(Self {
            kind,
            fields: header,
            sections,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
