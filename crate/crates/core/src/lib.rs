//! Building blocks for long-audio transcription: audio ingest, speech
//! detection, diarisation, recognition engines, capitalisation and
//! punctuation restoration, semi-supervised training tools and metrics.

pub mod asr;
pub mod cpr;
pub mod diarise;
pub mod engine;
pub mod media;
pub mod metrics;
pub mod ssl;
pub mod vad;
