use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corpus {
    Business,
    PositiveConversational,
    NegativeConversational,
    Synthetic,
}

impl Corpus {
    pub fn as_str(self) -> &'static str {
        match self {
            Corpus::Business => "business",
            Corpus::PositiveConversational => "positive_conversational",
            Corpus::NegativeConversational => "negative_conversational",
            Corpus::Synthetic => "synthetic",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub id: String,
    pub corpus: Corpus,
    pub transcript_key: String,
    pub tone: String,
    pub speaker: String,
}

/// Ordered, distinct tone names. A label's class index is its position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSet {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelSet {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::param("label set must not be empty"));
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), i).is_some() {
                return Err(Error::param(format!("duplicate label {l:?}")));
            }
        }
        Ok(Self { labels, index })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }
}

impl Serialize for LabelSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.labels.serialize(s)
    }
}

impl<'de> Deserialize<'de> for LabelSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let labels = Vec::<String>::deserialize(d)?;
        LabelSet::new(labels).map_err(serde::de::Error::custom)
    }
}

/// Dataset-level metadata carried on an optional leading `#` line.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ManifestMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speech_model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_model: Option<String>,
    /// [`content_hash`] of the speech then text EMBX files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_hash: Option<String>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub meta: Option<ManifestMeta>,
    entries: Vec<UtteranceRecord>,
    label_set: LabelSet,
}

impl Manifest {
    /// Builds a manifest whose label set is the distinct tones in order of
    /// first appearance.
    pub fn new(entries: Vec<UtteranceRecord>) -> Result<Self> {
        let mut tones = Vec::new();
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.contains(e.tone.as_str()) {
                seen.insert(e.tone.as_str());
                tones.push(e.tone.clone());
            }
        }
        if tones.is_empty() {
            return Err(Error::Degenerate("manifest has no entries".into()));
        }
        Self::with_labels(entries, LabelSet::new(tones)?)
    }

    pub fn with_labels(entries: Vec<UtteranceRecord>, label_set: LabelSet) -> Result<Self> {
        let mut ids = HashSet::with_capacity(entries.len());
        for e in &entries {
            if e.id.is_empty() {
                return Err(Error::param("utterance id must not be empty"));
            }
            if e.tone.is_empty() {
                return Err(Error::param(format!(
                    "utterance {:?} has an empty tone",
                    e.id
                )));
            }
            if label_set.index_of(&e.tone).is_none() {
                return Err(Error::param(format!(
                    "tone {:?} of {:?} is not in the label set",
                    e.tone, e.id
                )));
            }
            if !ids.insert(e.id.as_str()) {
                return Err(Error::DuplicateId(e.id.clone()));
            }
        }
        Ok(Self {
            meta: None,
            entries,
            label_set,
        })
    }

    pub fn entries(&self) -> &[UtteranceRecord] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn label_set(&self) -> &LabelSet {
        &self.label_set
    }

    /// Class index of every entry, in row order.
    pub fn tone_indices(&self) -> Vec<usize> {
        self.entries
            .iter()
            .map(|e| self.label_set.index_of(&e.tone).expect("validated"))
            .collect()
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let entries = indices.iter().map(|&i| self.entries[i].clone()).collect();
        let mut m = Self::with_labels(entries, self.label_set.clone())?;
        m.meta = self.meta.clone();
        Ok(m)
    }
}

#[derive(Deserialize)]
struct RawRecord {
    id: Option<String>,
    corpus: Option<Corpus>,
    transcript_key: Option<String>,
    tone: Option<String>,
    speaker: Option<String>,
}

fn parse_record(line: &str, lineno: usize) -> Result<UtteranceRecord> {
    let bad = |message: String| Error::ManifestLine {
        line: lineno,
        message,
    };
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
    let missing = |k: &str| bad(format!("missing key {k:?}"));
    Ok(UtteranceRecord {
        id: raw.id.ok_or_else(|| missing("id"))?,
        corpus: raw.corpus.ok_or_else(|| missing("corpus"))?,
        transcript_key: raw
            .transcript_key
            .ok_or_else(|| missing("transcript_key"))?,
        tone: raw.tone.ok_or_else(|| missing("tone"))?,
        speaker: raw.speaker.ok_or_else(|| missing("speaker"))?,
    })
}

pub fn parse_manifest(text: &str) -> Result<Manifest> {
    let mut meta = None;
    let mut entries = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            if lineno != 1 {
                return Err(Error::ManifestLine {
                    line: lineno,
                    message: "metadata line is only allowed first".into(),
                });
            }
            let rest = rest.trim();
            if !rest.is_empty() {
                meta = Some(serde_json::from_str(rest).map_err(|e| Error::ManifestLine {
                    line: lineno,
                    message: format!("bad metadata: {e}"),
                })?);
            }
            continue;
        }
        let rec = parse_record(trimmed, lineno)?;
        if !ids.insert(rec.id.clone()) {
            return Err(Error::DuplicateId(rec.id));
        }
        entries.push(rec);
    }
    let mut m = Manifest::new(entries)?;
    m.meta = meta;
    Ok(m)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text)
}

pub fn render_manifest(manifest: &Manifest) -> Result<String> {
    let mut out = String::new();
    if let Some(meta) = &manifest.meta {
        writeln!(out, "# {}", serde_json::to_string(meta)?).unwrap();
    }
    for e in manifest.entries() {
        writeln!(out, "{}", serde_json::to_string(e)?).unwrap();
    }
    Ok(out)
}

pub fn write_manifest(manifest: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, render_manifest(manifest)?).map_err(|e| Error::io(path, e))
}

/// Hex SHA-256 over the concatenated byte strings.
pub fn content_hash(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize()
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            write!(s, "{b:02x}").unwrap();
            s
        })
}
