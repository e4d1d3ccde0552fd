//! Training manifests: JSON lines of (utterance, audio, transcript, weight).

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ManifestError {
    #[error("duplicate utt_id {0:?}")]
    DuplicateUttId(String),
    #[error("record {utt_id:?} has non-positive or non-finite weight {weight}")]
    InvalidWeight { utt_id: String, weight: f64 },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Supervised,
    Pseudo,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Origin::Supervised => "supervised",
            Origin::Pseudo => "pseudo",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub utt_id: String,
    pub audio_path: String,
    pub transcript: String,
    pub weight: f64,
    pub origin: Origin,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ManifestRecord>", into = "Vec<ManifestRecord>")]
pub struct TrainingManifest {
    records: Vec<ManifestRecord>,
}

impl TrainingManifest {
    /// Checks that ids are unique and weights positive.
    pub fn new(records: Vec<ManifestRecord>) -> Result<Self, ManifestError> {
        let mut seen = HashSet::new();
        for r in &records {
            if !(r.weight.is_finite() && r.weight > 0.0) {
                return Err(ManifestError::InvalidWeight { utt_id: r.utt_id.clone(), weight: r.weight });
            }
            if !seen.insert(r.utt_id.as_str()) {
                return Err(ManifestError::DuplicateUttId(r.utt_id.clone()));
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[ManifestRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn into_records(self) -> Vec<ManifestRecord> {
        self.records
    }

    pub fn parse_jsonl(text: &str) -> Result<Self, ManifestError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec = serde_json::from_str(line).map_err(|e| ManifestError::Parse { line: i + 1, msg: e.to_string() })?;
            records.push(rec);
        }
        Self::new(records)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("manifest records serialise"));
            out.push('\n');
        }
        out
    }
}

impl TryFrom<Vec<ManifestRecord>> for TrainingManifest {
    type Error = ManifestError;

    fn try_from(records: Vec<ManifestRecord>) -> Result<Self, Self::Error> {
        Self::new(records)
    }
}

impl From<TrainingManifest> for Vec<ManifestRecord> {
    fn from(m: TrainingManifest) -> Self {
        m.records
    }
}

/// Concatenates supervised then pseudo records, giving every record weight
/// 1.0. Origins are kept as they are.
pub fn build_semisup_manifest(
    supervised: &TrainingManifest,
    pseudo: &TrainingManifest,
) -> Result<TrainingManifest, ManifestError> {
    let records = supervised
        .records
        .iter()
        .chain(&pseudo.records)
        .map(|r| ManifestRecord { weight: 1.0, ..r.clone() })
        .collect();
    TrainingManifest::new(records)
}
