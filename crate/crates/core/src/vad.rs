//! Voice activity detection.
//!
//! The built-in [`EnergyDetector`] thresholds frame RMS against a percentile
//! of the file's own RMS distribution, so the decision is independent of
//! recording gain. [`ExternalDetector`] delegates to a subprocess speaking a
//! line-delimited JSON protocol.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EngineCommand, EngineError};
use crate::media::{self, AudioBuffer, PIPELINE_RATE};

/// Segment end-times reported by an external engine may overshoot the audio
/// by this much before being rejected; overshoot is clipped.
const BOUNDARY_SLACK_S: f64 = 0.01;

/// Multiplier applied to the percentile RMS to obtain the speech threshold.
const THRESHOLD_SCALE: f64 = 1.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VadError {
    #[error("audio buffer is empty")]
    EmptyAudio,
    #[error("invalid VAD configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// A speech interval in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeechSegment {
    pub start_s: f64,
    pub end_s: f64,
}

impl SpeechSegment {
    /// Validated constructor.
    pub fn new(start_s: f64, end_s: f64) -> Option<Self> {
        (start_s.is_finite() && end_s.is_finite() && start_s >= 0.0 && end_s > start_s)
            .then_some(Self { start_s, end_s })
    }

    pub fn duration(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn intersection(&self, other: &SpeechSegment) -> f64 {
        (self.end_s.min(other.end_s) - self.start_s.max(other.start_s)).max(0.0)
    }

    pub fn iou(&self, other: &SpeechSegment) -> f64 {
        let inter = self.intersection(other);
        let union = self.duration() + other.duration() - inter;
        if union > 0.0 {
            inter / union
        } else {
            0.0
        }
    }
}

/// Checks that a segment list is sorted, non-overlapping and well formed.
pub fn check_segment_list(segments: &[SpeechSegment]) -> Result<(), String> {
    let mut prev_end = 0.0f64;
    for (i, s) in segments.iter().enumerate() {
        if SpeechSegment::new(s.start_s, s.end_s).is_none() {
            return Err(format!("segment {i} [{}, {}] is not a positive interval", s.start_s, s.end_s));
        }
        if i > 0 && s.start_s < prev_end {
            return Err(format!("segment {i} starts at {} before previous end {prev_end}", s.start_s));
        }
        prev_end = s.end_s;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VadConfig {
    pub frame_ms: u32,
    /// Fraction of frames assumed to be non-speech.
    pub energy_percentile: f64,
    pub min_speech_ms: u32,
    pub min_silence_ms: u32,
    pub pad_ms: u32,
}

impl Default for VadConfig {
    fn default() -> Self {
        Self { frame_ms: 30, energy_percentile: 0.3, min_speech_ms: 250, min_silence_ms: 300, pad_ms: 100 }
    }
}

impl VadConfig {
    pub fn validate(&self) -> Result<(), VadError> {
        let durations = [
            ("frame_ms", self.frame_ms),
            ("min_speech_ms", self.min_speech_ms),
            ("min_silence_ms", self.min_silence_ms),
            ("pad_ms", self.pad_ms),
        ];
        if let Some((name, _)) = durations.iter().find(|(_, v)| *v == 0) {
            return Err(VadError::InvalidConfig(format!("{name} must be positive")));
        }
        if !(self.energy_percentile > 0.0 && self.energy_percentile < 1.0) {
            return Err(VadError::InvalidConfig("energy_percentile must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Anything that can locate speech in a buffer.
pub trait SpeechDetector: Send + Sync {
    fn detect(&self, buf: &AudioBuffer) -> Result<Vec<SpeechSegment>, VadError>;
}

#[derive(Debug, Clone, Default)]
pub struct EnergyDetector {
    pub config: VadConfig,
}

impl EnergyDetector {
    pub fn new(config: VadConfig) -> Self {
        Self { config }
    }
}

impl SpeechDetector for EnergyDetector {
    fn detect(&self, buf: &AudioBuffer) -> Result<Vec<SpeechSegment>, VadError> {
        detect_speech(buf, &self.config)
    }
}

fn frame_rms(samples: &[f32], frame_len: usize) -> Vec<f64> {
    samples
        .chunks(frame_len)
        .map(|c| (c.iter().map(|&s| (s as f64) * (s as f64)).sum::<f64>() / c.len() as f64).sqrt())
        .collect()
}

/// Energy-based speech detection.
///
/// Frames whose RMS exceeds `1.5 x` the RMS found at `energy_percentile` of
/// the sorted frame distribution are speech. Gaps shorter than
/// `min_silence_ms` are bridged, runs shorter than `min_speech_ms` dropped,
/// then each run is padded by `pad_ms` and clipped to the audio. Padding
/// that makes neighbours touch merges them.
pub fn detect_speech(buf: &AudioBuffer, cfg: &VadConfig) -> Result<Vec<SpeechSegment>, VadError> {
    cfg.validate()?;
    if buf.is_empty() {
        return Err(VadError::EmptyAudio);
    }
    let rate = buf.sample_rate() as f64;
    let frame_len = ((cfg.frame_ms as f64 / 1000.0 * rate).round() as usize).max(1);
    let rms = frame_rms(buf.samples(), frame_len);

    let mut sorted = rms.clone();
    sorted.sort_by(f64::total_cmp);
    let idx = (cfg.energy_percentile * (sorted.len() - 1) as f64).floor() as usize;
    let threshold = sorted[idx] * THRESHOLD_SCALE;

    // Runs of speech frames as [start, end) frame indices.
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for (i, &e) in rms.iter().enumerate() {
        if e > threshold {
            match runs.last_mut() {
                Some(last) if last.1 == i => last.1 = i + 1,
                _ => runs.push((i, i + 1)),
            }
        }
    }

    let n = buf.len();
    let to_time = |frame: usize| (frame * frame_len).min(n) as f64 / rate;
    let min_silence = cfg.min_silence_ms as f64 / 1000.0;
    let min_speech = cfg.min_speech_ms as f64 / 1000.0;
    let pad = cfg.pad_ms as f64 / 1000.0;
    let duration = buf.duration_s();

    let mut bridged: Vec<(usize, usize)> = Vec::with_capacity(runs.len());
    for run in runs {
        match bridged.last_mut() {
            Some(last) if to_time(run.0) - to_time(last.1) < min_silence => last.1 = run.1,
            _ => bridged.push(run),
        }
    }

    let mut out: Vec<SpeechSegment> = Vec::new();
    for (a, b) in bridged {
        let (start, end) = (to_time(a), to_time(b));
        if end - start < min_speech {
            continue;
        }
        let seg = SpeechSegment { start_s: (start - pad).max(0.0), end_s: (end + pad).min(duration) };
        match out.last_mut() {
            Some(last) if seg.start_s <= last.end_s => last.end_s = last.end_s.max(seg.end_s),
            _ => out.push(seg),
        }
    }
    Ok(out)
}

/// Handle for an external detector process.
///
/// Protocol: stdin receives the audio as raw 16 kHz mono PCM16; stdout holds
/// one JSON object `{"start": s, "end": s}` per line; exit status 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorHandle {
    pub command: EngineCommand,
}

#[derive(Deserialize)]
struct WireSegment {
    start: f64,
    end: f64,
}

/// Parses and validates detector output against `duration` seconds of audio.
pub fn parse_detector_output(stdout: &str, duration: f64) -> Result<Vec<SpeechSegment>, EngineError> {
    let mut segments = Vec::new();
    for (lineno, line) in stdout.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let wire: WireSegment = serde_json::from_str(line)
            .map_err(|e| EngineError::ProtocolViolation(format!("line {}: {e}", lineno + 1)))?;
        if wire.end > duration + BOUNDARY_SLACK_S {
            return Err(EngineError::ProtocolViolation(format!(
                "line {}: segment ends at {} past audio end {duration}",
                lineno + 1,
                wire.end
            )));
        }
        let seg = SpeechSegment::new(wire.start, wire.end.min(duration)).ok_or_else(|| {
            EngineError::ProtocolViolation(format!("line {}: invalid interval [{}, {}]", lineno + 1, wire.start, wire.end))
        })?;
        segments.push(seg);
    }
    check_segment_list(&segments).map_err(EngineError::ProtocolViolation)?;
    Ok(segments)
}

pub fn detect_speech_external(buf: &AudioBuffer, engine: &DetectorHandle) -> Result<Vec<SpeechSegment>, VadError> {
    if buf.is_empty() {
        return Err(VadError::EmptyAudio);
    }
    let audio = media::resample(buf, PIPELINE_RATE).map_err(|e| VadError::InvalidConfig(e.to_string()))?;
    let stdout = engine.command.run_text(&media::pcm16_bytes(audio.samples()))?;
    Ok(parse_detector_output(&stdout, buf.duration_s())?)
}

/// Detector backed by [`detect_speech_external`].
#[derive(Debug, Clone)]
pub struct ExternalDetector {
    pub handle: DetectorHandle,
}

impl SpeechDetector for ExternalDetector {
    fn detect(&self, buf: &AudioBuffer) -> Result<Vec<SpeechSegment>, VadError> {
        detect_speech_external(buf, &self.handle)
    }
}
