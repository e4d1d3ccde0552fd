//! Segment-level speaker embeddings.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::DiariseError;
use crate::engine::{EngineCommand, EngineError};
use crate::media::{self, AudioBuffer, PIPELINE_RATE};
use crate::vad::SpeechSegment;

/// Energy floor added before taking logs.
const LOG_FLOOR: f64 = 1e-10;

/// Unit-norm embedding vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SpeakerEmbedding(Vec<f64>);

impl SpeakerEmbedding {
    /// Normalises `v` to unit length. Fails on empty, non-finite or zero
    /// vectors.
    pub fn from_raw(v: Vec<f64>) -> Result<Self, DiariseError> {
        if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
            return Err(DiariseError::InvalidEmbedding("empty or non-finite vector".into()));
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(DiariseError::InvalidEmbedding("zero vector".into()));
        }
        Ok(Self(v.into_iter().map(|x| x / norm).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn cosine_similarity(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    /// `1 - cos`, in `[0, 2]`.
    pub fn cosine_distance(&self, other: &Self) -> f64 {
        (1.0 - self.cosine_similarity(other)).max(0.0)
    }
}

impl TryFrom<Vec<f64>> for SpeakerEmbedding {
    type Error = DiariseError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::from_raw(v)
    }
}

impl From<SpeakerEmbedding> for Vec<f64> {
    fn from(e: SpeakerEmbedding) -> Self {
        e.0
    }
}

pub trait SpeakerEmbedder: Send + Sync {
    fn embed(&self, buf: &AudioBuffer, seg: &SpeechSegment) -> Result<SpeakerEmbedding, DiariseError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectralConfig {
    pub n_mels: usize,
    pub window_ms: f64,
    pub hop_ms: f64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self { n_mels: 26, window_ms: 25.0, hop_ms: 10.0 }
    }
}

/// Spectral-statistics embedder: per mel band, the mean (centred across
/// bands) and standard deviation of frame log-energies. Dimension is
/// `2 * n_mels`.
#[derive(Debug, Clone, Default)]
pub struct SpectralEmbedder {
    pub config: SpectralConfig,
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filters over `n_fft / 2 + 1` power bins.
fn mel_filterbank(n_mels: usize, n_fft: usize, rate: f64) -> Vec<Vec<(usize, f64)>> {
    let n_bins = n_fft / 2 + 1;
    let top = hz_to_mel(rate / 2.0);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64) * n_fft as f64 / rate)
        .collect();
    (0..n_mels)
        .map(|m| {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .filter_map(|k| {
                    let k_f = k as f64;
                    let w = if k_f > lo && k_f <= mid {
                        (k_f - lo) / (mid - lo)
                    } else if k_f > mid && k_f < hi {
                        (hi - k_f) / (hi - mid)
                    } else {
                        0.0
                    };
                    (w > 0.0).then_some((k, w))
                })
                .collect()
        })
        .collect()
}

impl SpectralEmbedder {
    pub fn new(config: SpectralConfig) -> Self {
        Self { config }
    }

    pub fn dim(&self) -> usize {
        2 * self.config.n_mels
    }

    fn log_mel_frames(&self, samples: &[f32], rate: f64) -> Vec<Vec<f64>> {
        let win = (self.config.window_ms / 1000.0 * rate).round() as usize;
        let hop = ((self.config.hop_ms / 1000.0 * rate).round() as usize).max(1);
        let n_fft = win.next_power_of_two();
        let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(n_fft);
        let hann: Vec<f64> = (0..win)
            .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / win as f64).cos())
            .collect();
        let bank = mel_filterbank(self.config.n_mels, n_fft, rate);

        let mut frames = Vec::new();
        let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
        let mut start = 0;
        while start + win <= samples.len() {
            for (i, slot) in buf.iter_mut().enumerate() {
                let v = if i < win { samples[start + i] as f64 * hann[i] } else { 0.0 };
                *slot = Complex::new(v, 0.0);
            }
            fft.process(&mut buf);
            let frame = bank
                .iter()
                .map(|filter| {
                    let e: f64 = filter.iter().map(|&(k, w)| w * buf[k].norm_sqr()).sum();
                    (e + LOG_FLOOR).ln()
                })
                .collect();
            frames.push(frame);
            start += hop;
        }
        frames
    }
}

/// Rejects segments outside the buffer.
pub(crate) fn check_bounds(buf: &AudioBuffer, seg: &SpeechSegment) -> Result<(), DiariseError> {
    if !(seg.start_s >= 0.0 && seg.end_s > seg.start_s && seg.end_s <= buf.duration_s() + 1e-9) {
        return Err(DiariseError::SegmentOutOfBounds { start_s: seg.start_s, end_s: seg.end_s, duration_s: buf.duration_s() });
    }
    Ok(())
}

impl SpeakerEmbedder for SpectralEmbedder {
    fn embed(&self, buf: &AudioBuffer, seg: &SpeechSegment) -> Result<SpeakerEmbedding, DiariseError> {
        check_bounds(buf, seg)?;
        let rate = buf.sample_rate() as f64;
        let frames = self.log_mel_frames(buf.slice_time(seg.start_s, seg.end_s), rate);
        if frames.is_empty() {
            return Err(DiariseError::SegmentTooShort { duration_s: seg.duration(), min_s: self.config.window_ms / 1000.0 });
        }
        let n_mels = self.config.n_mels;
        let count = frames.len() as f64;
        let means: Vec<f64> = (0..n_mels).map(|b| frames.iter().map(|f| f[b]).sum::<f64>() / count).collect();
        let stds: Vec<f64> = (0..n_mels)
            .map(|b| (frames.iter().map(|f| (f[b] - means[b]).powi(2)).sum::<f64>() / count).sqrt())
            .collect();
        let overall = means.iter().sum::<f64>() / n_mels as f64;
        let raw: Vec<f64> = means.iter().map(|m| m - overall).chain(stds).collect();
        // Flat spectra (e.g. digital silence) have no direction of their own.
        if raw.iter().all(|&x| x == 0.0) {
            return SpeakerEmbedding::from_raw(vec![1.0; raw.len()]);
        }
        SpeakerEmbedding::from_raw(raw)
    }
}

/// External embedder: 16 kHz PCM16 segment audio on stdin, one JSON array of
/// numbers on stdout.
#[derive(Debug, Clone)]
pub struct SubprocessEmbedder {
    pub command: EngineCommand,
}

impl SpeakerEmbedder for SubprocessEmbedder {
    fn embed(&self, buf: &AudioBuffer, seg: &SpeechSegment) -> Result<SpeakerEmbedding, DiariseError> {
        check_bounds(buf, seg)?;
        let clip = AudioBuffer::new(buf.slice_time(seg.start_s, seg.end_s).to_vec(), buf.sample_rate())
            .and_then(|b| media::resample(&b, PIPELINE_RATE))
            .map_err(|e| DiariseError::InvalidEmbedding(e.to_string()))?;
        let out = self.command.run_text(&media::pcm16_bytes(clip.samples()))?;
        let raw: Vec<f64> = serde_json::from_str(out.trim())
            .map_err(|e| EngineError::ProtocolViolation(format!("embedding is not a JSON number array: {e}")))?;
        SpeakerEmbedding::from_raw(raw).map_err(|e| EngineError::ProtocolViolation(e.to_string()).into())
    }
}
