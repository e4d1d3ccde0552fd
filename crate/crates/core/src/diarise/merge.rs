use serde::{Deserialize, Serialize};

use super::DiariseError;
use crate::vad::{check_segment_list, SpeechSegment};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiarisedSegment {
    pub segment: SpeechSegment,
    pub speaker_id: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MergeConfig {
    pub max_gap_s: f64,
    pub max_len_s: f64,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self { max_gap_s: 1.0, max_len_s: 30.0 }
    }
}

/// Joins runs of same-speaker segments separated by at most `max_gap_s`,
/// provided the joined span stays within `max_len_s`.
pub fn merge_adjacent(segments: &[DiarisedSegment], cfg: &MergeConfig) -> Result<Vec<DiarisedSegment>, DiariseError> {
    let plain: Vec<SpeechSegment> = segments.iter().map(|s| s.segment).collect();
    check_segment_list(&plain).map_err(DiariseError::UnsortedInput)?;

    let mut out: Vec<DiarisedSegment> = Vec::with_capacity(segments.len());
    for seg in segments {
        match out.last_mut() {
            Some(cur)
                if cur.speaker_id == seg.speaker_id
                    && seg.segment.start_s - cur.segment.end_s <= cfg.max_gap_s
                    && seg.segment.end_s - cur.segment.start_s <= cfg.max_len_s =>
            {
                cur.segment.end_s = seg.segment.end_s;
            }
            _ => out.push(*seg),
        }
    }
    Ok(out)
}
