//! Speaker diarisation: embed each speech segment, cluster the embeddings,
//! then join continuous same-speaker segments.

mod cluster;
mod embed;
mod merge;

use rayon::prelude::*;
use thiserror::Error;

pub use cluster::{cluster, relabel_by_first_occurrence, ClusterConfig};
pub use embed::{SpeakerEmbedder, SpeakerEmbedding, SpectralConfig, SpectralEmbedder, SubprocessEmbedder};
pub use merge::{merge_adjacent, DiarisedSegment, MergeConfig};

use crate::engine::EngineError;
use crate::media::AudioBuffer;
use crate::vad::SpeechSegment;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiariseError {
    #[error("segment [{start_s}, {end_s}] outside audio of {duration_s} s")]
    SegmentOutOfBounds { start_s: f64, end_s: f64, duration_s: f64 },
    #[error("segment of {duration_s} s shorter than one {min_s} s analysis frame")]
    SegmentTooShort { duration_s: f64, min_s: f64 },
    #[error("embedding dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("no embeddings to cluster")]
    EmptyInput,
    #[error("segments not sorted and disjoint: {0}")]
    UnsortedInput(String),
    #[error("invalid embedding: {0}")]
    InvalidEmbedding(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Labels each segment with a speaker. Embeddings are computed in parallel.
pub fn diarise(
    buf: &AudioBuffer,
    segments: &[SpeechSegment],
    embedder: &dyn SpeakerEmbedder,
    cfg: &ClusterConfig,
) -> Result<Vec<DiarisedSegment>, DiariseError> {
    if segments.is_empty() {
        return Ok(Vec::new());
    }
    let embeddings = segments
        .par_iter()
        .map(|s| embedder.embed(buf, s))
        .collect::<Result<Vec<_>, _>>()?;
    let labels = cluster(&embeddings, cfg)?;
    Ok(segments
        .iter()
        .zip(labels)
        .map(|(&segment, speaker_id)| DiarisedSegment { segment, speaker_id })
        .collect())
}
