use std::fmt::Write;
use std::str::FromStr;

use scribe_core::ssl::{ManifestRecord, Origin, TrainingManifest};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transcript::TranscriptDoc;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExportError {
    #[error("unsupported export format {0:?}")]
    UnsupportedFormat(String),
    #[error("transcript has no edited segments")]
    NoEdits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Srt,
    Txt,
    Json,
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Srt => "srt",
            ExportFormat::Txt => "txt",
            ExportFormat::Json => "json",
        }
    }

    pub fn content_type(self) -> &'static str {
        match self {
            ExportFormat::Srt => "application/x-subrip",
            ExportFormat::Txt => "text/plain; charset=utf-8",
            ExportFormat::Json => "application/json",
        }
    }
}

impl FromStr for ExportFormat {
    type Err = ExportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "srt" => Ok(ExportFormat::Srt),
            "txt" => Ok(ExportFormat::Txt),
            "json" => Ok(ExportFormat::Json),
            other => Err(ExportError::UnsupportedFormat(other.to_string())),
        }
    }
}

/// `HH:MM:SS,mmm`, rounding to the nearest millisecond.
pub fn srt_timestamp(seconds: f64) -> String {
    let ms = (seconds.max(0.0) * 1000.0).round() as u64;
    format!("{:02}:{:02}:{:02},{:03}", ms / 3_600_000, ms / 60_000 % 60, ms / 1000 % 60, ms % 1000)
}

/// SubRip blocks numbered from 1. Segments with empty text are left out,
/// since SubRip has no way to express an empty cue.
pub fn to_srt(doc: &TranscriptDoc) -> String {
    let mut out = String::new();
    let cues = doc.segments.iter().filter(|s| !s.rich_text.trim().is_empty());
    for (i, s) in cues.enumerate() {
        let _ = write!(out, "{}\n{} --> {}\n{}\n\n", i + 1, srt_timestamp(s.start_s), srt_timestamp(s.end_s), s.rich_text);
    }
    out
}

pub fn to_txt(doc: &TranscriptDoc) -> String {
    doc.segments.iter().map(|s| format!("SPEAKER_{}: {}\n", s.speaker_id, s.rich_text)).collect()
}

pub fn export(doc: &TranscriptDoc, format: ExportFormat) -> Vec<u8> {
    match format {
        ExportFormat::Srt => to_srt(doc).into_bytes(),
        ExportFormat::Txt => to_txt(doc).into_bytes(),
        ExportFormat::Json => serde_json::to_vec_pretty(doc).expect("transcript serialises"),
    }
}

/// Edited segments as supervised training records. The audio reference
/// is `<audio>#t=<start>,<end>`.
pub fn corrections(job_id: &str, audio: &str, doc: &TranscriptDoc) -> Result<TrainingManifest, ExportError> {
    let records: Vec<ManifestRecord> = doc
        .segments
        .iter()
        .filter(|s| s.edited)
        .map(|s| ManifestRecord {
            utt_id: format!("{job_id}-{}", s.seg_id),
            audio_path: format!("{audio}#t={:.3},{:.3}", s.start_s, s.end_s),
            transcript: s.raw_text.clone(),
            weight: 1.0,
            origin: Origin::Supervised,
        })
        .collect();
    if records.is_empty() {
        return Err(ExportError::NoEdits);
    }
    Ok(TrainingManifest::new(records).expect("seg_ids are unique and weights are 1"))
}
