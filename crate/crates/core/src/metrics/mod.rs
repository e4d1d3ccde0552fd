//! Evaluation metrics: WER, WER over rich text, CER, BLEU and label
//! accuracy. Rates are computed from edit counts, so corpus-level figures
//! come from summing per-sentence alignments.

mod align;
mod bleu;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use align::{align, EditAlignment};
pub use bleu::{bleu, corpus_bleu, BleuReport, MAX_ORDER};

use crate::cpr::{RichTranscript, TokenLabel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("reference is empty")]
    EmptyReference,
    #[error("no hypotheses to score")]
    EmptyHypothesisCorpus,
    #[error("hypothesis {index} has no reference")]
    NoReference { index: usize },
    #[error("{reference} reference items but {hypothesis} hypothesis items")]
    LengthMismatch { reference: usize, hypothesis: usize },
}

/// An alignment with its error rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRate {
    pub rate: f64,
    #[serde(flatten)]
    pub counts: EditAlignment,
}

impl ErrorRate {
    pub fn from_counts(counts: EditAlignment) -> Result<Self, MetricError> {
        if counts.ref_len() == 0 {
            return Err(MetricError::EmptyReference);
        }
        Ok(Self { rate: counts.errors() as f64 / counts.ref_len() as f64, counts })
    }
}

fn rate_of<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Result<ErrorRate, MetricError> {
    if reference.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    ErrorRate::from_counts(align(reference, hypothesis))
}

/// Word alignment over whitespace tokens.
pub fn word_alignment(reference: &str, hypothesis: &str) -> EditAlignment {
    let r: Vec<&str> = reference.split_whitespace().collect();
    let h: Vec<&str> = hypothesis.split_whitespace().collect();
    align(&r, &h)
}

/// Characters compared by CER: whitespace runs become one space, and
/// leading and trailing whitespace is dropped.
pub fn cer_chars(text: &str) -> Vec<char> {
    let mut out = Vec::with_capacity(text.len());
    for (i, word) in text.split_whitespace().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.extend(word.chars());
    }
    out
}

pub fn char_alignment(reference: &str, hypothesis: &str) -> EditAlignment {
    align(&cer_chars(reference), &cer_chars(hypothesis))
}

/// Word error rate over whitespace tokens.
pub fn wer(reference: &str, hypothesis: &str) -> Result<f64, MetricError> {
    let r: Vec<&str> = reference.split_whitespace().collect();
    let h: Vec<&str> = hypothesis.split_whitespace().collect();
    rate_of(&r, &h).map(|e| e.rate)
}

/// WER against a rich transcript, with punctuation left attached to words
/// and case kept, so "Ceart?" and "ceart" differ.
pub fn wer_pc(reference: &RichTranscript, hypothesis: &str) -> Result<f64, MetricError> {
    wer(reference.as_str(), hypothesis)
}

/// Character error rate.
pub fn cer(reference: &str, hypothesis: &str) -> Result<f64, MetricError> {
    rate_of(&cer_chars(reference), &cer_chars(hypothesis)).map(|e| e.rate)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelField {
    Cap,
    Punct,
}

/// Fraction of positions where the chosen class agrees.
pub fn classifier_accuracy(reference: &[TokenLabel], hypothesis: &[TokenLabel], which: LabelField) -> Result<f64, MetricError> {
    if reference.len() != hypothesis.len() {
        return Err(MetricError::LengthMismatch { reference: reference.len(), hypothesis: hypothesis.len() });
    }
    if reference.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let same = reference
        .iter()
        .zip(hypothesis)
        .filter(|(r, h)| match which {
            LabelField::Cap => r.cap == h.cap,
            LabelField::Punct => r.punct == h.punct,
        })
        .count();
    Ok(same as f64 / reference.len() as f64)
}
