//! The editable transcript and the edit operations the editor sends.

use scribe_core::cpr::{is_plain_text, is_rich_text};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TranscriptError {
    #[error("invalid edit: {0}")]
    InvalidEdit(String),
    #[error("no segment {0}")]
    SegmentNotFound(u32),
    #[error("revision is {actual}, edit expected {expected}")]
    ConflictingRevision { expected: u64, actual: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub seg_id: u32,
    pub start_s: f64,
    pub end_s: f64,
    pub speaker_id: usize,
    /// Lower-case recogniser output.
    pub raw_text: String,
    /// Display form with capitals and punctuation.
    pub rich_text: String,
    #[serde(default)]
    pub edited: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TranscriptDoc {
    pub segments: Vec<Segment>,
    pub revision: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditField {
    Text,
    RichText,
    StartS,
    EndS,
    SpeakerId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditOp {
    /// Optional in the body; when present it must match the target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seg_id: Option<u32>,
    pub field: EditField,
    pub value: Value,
    pub expected_revision: u64,
}

fn invalid(msg: impl Into<String>) -> TranscriptError {
    TranscriptError::InvalidEdit(msg.into())
}

fn as_time(v: &Value) -> Result<f64, TranscriptError> {
    match v.as_f64() {
        Some(t) if t.is_finite() && t >= 0.0 => Ok(t),
        _ => Err(invalid(format!("{v} is not a non-negative time"))),
    }
}

fn as_text(v: &Value) -> Result<&str, TranscriptError> {
    v.as_str().ok_or_else(|| invalid(format!("{v} is not a string")))
}

impl TranscriptDoc {
    pub fn new(segments: Vec<Segment>) -> Result<Self, TranscriptError> {
        let doc = Self { segments, revision: 0 };
        doc.check().map_err(invalid)?;
        Ok(doc)
    }

    /// Sorted, disjoint, positive-length segments with unique ids.
    pub fn check(&self) -> Result<(), String> {
        let mut ids = std::collections::HashSet::new();
        for (i, s) in self.segments.iter().enumerate() {
            if !(s.start_s.is_finite() && s.end_s.is_finite() && 0.0 <= s.start_s && s.start_s < s.end_s) {
                return Err(format!("segment {} has interval [{}, {}]", s.seg_id, s.start_s, s.end_s));
            }
            if i > 0 && self.segments[i - 1].end_s > s.start_s {
                return Err(format!("segment {} overlaps its predecessor", s.seg_id));
            }
            if !ids.insert(s.seg_id) {
                return Err(format!("duplicate seg_id {}", s.seg_id));
            }
        }
        Ok(())
    }

    pub fn segment(&self, seg_id: u32) -> Option<&Segment> {
        self.segments.iter().find(|s| s.seg_id == seg_id)
    }

    pub fn is_edited(&self) -> bool {
        self.segments.iter().any(|s| s.edited)
    }

    /// Applies one edit atomically: on error the document is unchanged.
    pub fn apply(&mut self, seg_id: u32, op: &EditOp) -> Result<(), TranscriptError> {
        if op.expected_revision != self.revision {
            return Err(TranscriptError::ConflictingRevision { expected: op.expected_revision, actual: self.revision });
        }
        if op.seg_id.is_some_and(|id| id != seg_id) {
            return Err(invalid(format!("body names segment {} but path names {seg_id}", op.seg_id.unwrap())));
        }
        let idx = self
            .segments
            .iter()
            .position(|s| s.seg_id == seg_id)
            .ok_or(TranscriptError::SegmentNotFound(seg_id))?;
        let lower = if idx == 0 { 0.0 } else { self.segments[idx - 1].end_s };
        let upper = self.segments.get(idx + 1).map_or(f64::INFINITY, |s| s.start_s);
        let mut seg = self.segments[idx].clone();
        match op.field {
            EditField::Text => {
                let t = as_text(&op.value)?;
                if !is_plain_text(t) {
                    return Err(invalid(format!("{t:?} is not lower-case plain text")));
                }
                seg.raw_text = t.to_string();
            }
            EditField::RichText => {
                let t = as_text(&op.value)?;
                if !is_rich_text(t) {
                    return Err(invalid(format!("{t:?} is not a valid rich transcript")));
                }
                seg.rich_text = t.to_string();
            }
            EditField::StartS => seg.start_s = as_time(&op.value)?,
            EditField::EndS => seg.end_s = as_time(&op.value)?,
            EditField::SpeakerId => {
                seg.speaker_id = op
                    .value
                    .as_u64()
                    .and_then(|v| usize::try_from(v).ok())
                    .ok_or_else(|| invalid(format!("{} is not a speaker id", op.value)))?;
            }
        }
        if seg.start_s >= seg.end_s {
            return Err(invalid(format!("segment would span [{}, {}]", seg.start_s, seg.end_s)));
        }
        if seg.start_s < lower || seg.end_s > upper {
            return Err(invalid(format!("[{}, {}] overlaps a neighbouring segment", seg.start_s, seg.end_s)));
        }
        seg.edited = true;
        self.segments[idx] = seg;
        self.revision += 1;
        Ok(())
    }
}
