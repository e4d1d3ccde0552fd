//! WAV decoding/encoding and sample-rate conversion.
//!
//! Everything downstream of ingestion works on [`AudioBuffer`]: mono `f32`
//! samples in `[-1, 1]` at a known rate. Only PCM16 is ever written; PCM16
//! and IEEE float (32/64 bit) are accepted on input.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Canonical pipeline sample rate.
pub const PIPELINE_RATE: u32 = 16_000;

const WAVE_FORMAT_PCM: u16 = 0x0001;
const WAVE_FORMAT_IEEE_FLOAT: u16 = 0x0003;
const WAVE_FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MediaError {
    #[error("malformed WAV header: {0}")]
    MalformedHeader(String),
    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("invalid audio buffer: {0}")]
    InvalidBuffer(String),
}

/// Mono PCM audio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioBuffer {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioBuffer {
    /// Builds a buffer, rejecting non-finite or out-of-range samples.
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self, MediaError> {
        if sample_rate == 0 {
            return Err(MediaError::InvalidBuffer("sample rate must be positive".into()));
        }
        if let Some((i, s)) = samples
            .iter()
            .enumerate()
            .find(|(_, s)| !s.is_finite() || s.abs() > 1.0 + 1e-6)
        {
            return Err(MediaError::InvalidBuffer(format!("sample {i} = {s} outside [-1, 1]")));
        }
        Ok(Self { samples, sample_rate })
    }

    /// Builds a buffer, clamping samples into `[-1, 1]` and zeroing NaN.
    pub fn from_clamped(samples: impl IntoIterator<Item = f32>, sample_rate: u32) -> Result<Self, MediaError> {
        let samples = samples
            .into_iter()
            .map(|s| if s.is_nan() { 0.0 } else { s.clamp(-1.0, 1.0) })
            .collect();
        Self::new(samples, sample_rate)
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Sample index nearest to time `t` (seconds), clamped to the buffer.
    pub fn index_at(&self, t: f64) -> usize {
        let idx = (t * self.sample_rate as f64).round();
        if idx <= 0.0 {
            0
        } else {
            (idx as usize).min(self.samples.len())
        }
    }

    /// Samples between two times, clamped to the buffer.
    pub fn slice_time(&self, start_s: f64, end_s: f64) -> &[f32] {
        let a = self.index_at(start_s);
        let b = self.index_at(end_s).max(a);
        &self.samples[a..b]
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }
}

/// Quantises one sample to PCM16. Round trip through [`pcm16_to_f32`] is
/// within `1/32768`.
pub fn f32_to_pcm16(s: f32) -> i16 {
    (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

pub fn pcm16_to_f32(v: i16) -> f32 {
    v as f32 / 32768.0
}

/// Raw little-endian PCM16 bytes with no header, as fed to external engines.
pub fn pcm16_bytes(samples: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(samples.len() * 2);
    for &s in samples {
        out.extend_from_slice(&f32_to_pcm16(s).to_le_bytes());
    }
    out
}

fn read_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn read_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Recognises a few common non-WAV containers so they can be reported as an
/// unsupported encoding rather than a broken header.
fn sniff_foreign_container(bytes: &[u8]) -> Option<&'static str> {
    let starts = |magic: &[u8]| bytes.len() >= magic.len() && &bytes[..magic.len()] == magic;
    if starts(b"ID3") || (bytes.len() >= 2 && bytes[0] == 0xFF && bytes[1] & 0xE0 == 0xE0) {
        Some("mpeg audio")
    } else if starts(b"fLaC") {
        Some("flac")
    } else if starts(b"OggS") {
        Some("ogg")
    } else if bytes.len() >= 8 && &bytes[4..8] == b"ftyp" {
        Some("mp4/iso-bmff")
    } else if starts(&[0x1A, 0x45, 0xDF, 0xA3]) {
        Some("matroska/webm")
    } else if starts(b"RIFF") && bytes.len() >= 12 && &bytes[8..12] != b"WAVE" {
        Some("non-WAVE RIFF")
    } else {
        None
    }
}

struct Format {
    tag: u16,
    channels: u16,
    sample_rate: u32,
    bits_per_sample: u16,
    block_align: u16,
}

fn parse_fmt(body: &[u8]) -> Result<Format, MediaError> {
    if body.len() < 16 {
        return Err(MediaError::MalformedHeader(format!("fmt chunk too short ({} bytes)", body.len())));
    }
    let mut tag = read_u16(body, 0);
    let channels = read_u16(body, 2);
    let sample_rate = read_u32(body, 4);
    let block_align = read_u16(body, 12);
    let bits_per_sample = read_u16(body, 14);
    if tag == WAVE_FORMAT_EXTENSIBLE {
        // cbSize(2) validBits(2) channelMask(4) subFormat GUID(16); the first
        // two GUID bytes carry the real format tag.
        if body.len() < 40 {
            return Err(MediaError::MalformedHeader("WAVE_FORMAT_EXTENSIBLE fmt chunk too short".into()));
        }
        tag = read_u16(body, 24);
    }
    if channels == 0 {
        return Err(MediaError::MalformedHeader("zero channels".into()));
    }
    if sample_rate == 0 {
        return Err(MediaError::MalformedHeader("zero sample rate".into()));
    }
    Ok(Format { tag, channels, sample_rate, bits_per_sample, block_align })
}

/// Decodes a RIFF/WAVE byte stream into a mono buffer.
///
/// Multi-channel audio is downmixed by the arithmetic mean of each frame.
/// The channel values are summed in sorted order so the result does not
/// depend on channel ordering.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioBuffer, MediaError> {
    if let Some(kind) = sniff_foreign_container(bytes) {
        return Err(MediaError::UnsupportedEncoding(format!("{kind} container")));
    }
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(MediaError::MalformedHeader("missing RIFF/WAVE magic".into()));
    }

    let mut pos = 12;
    let mut format: Option<Format> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = read_u32(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let declared_end = body_start.checked_add(size).ok_or_else(|| {
            MediaError::MalformedHeader("chunk size overflows".into())
        })?;
        match id {
            b"fmt " => {
                if declared_end > bytes.len() {
                    return Err(MediaError::MalformedHeader("fmt chunk truncated".into()));
                }
                format = Some(parse_fmt(&bytes[body_start..declared_end])?);
            }
            b"data" => {
                // Streaming writers sometimes leave the data size unset; take
                // what is actually there.
                let end = declared_end.min(bytes.len());
                data = Some(&bytes[body_start..end]);
                break;
            }
            _ => {}
        }
        // Chunks are word aligned.
        pos = declared_end + (size & 1);
    }

    let format = format.ok_or_else(|| MediaError::MalformedHeader("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| MediaError::MalformedHeader("no data chunk".into()))?;

    let bytes_per_sample = match (format.tag, format.bits_per_sample) {
        (WAVE_FORMAT_PCM, 16) => 2,
        (WAVE_FORMAT_IEEE_FLOAT, 32) => 4,
        (WAVE_FORMAT_IEEE_FLOAT, 64) => 8,
        (tag, bits) => {
            return Err(MediaError::UnsupportedEncoding(format!(
                "format tag {tag:#06x} with {bits} bits per sample"
            )))
        }
    };
    let channels = format.channels as usize;
    let frame_bytes = bytes_per_sample * channels;
    if format.block_align as usize != frame_bytes {
        return Err(MediaError::MalformedHeader(format!(
            "block align {} does not match {} channels x {} bytes",
            format.block_align, channels, bytes_per_sample
        )));
    }

    let frames = data.len() / frame_bytes;
    let mut samples = Vec::with_capacity(frames);
    let mut frame = vec![0f64; channels];
    for f in 0..frames {
        let base = f * frame_bytes;
        for (c, slot) in frame.iter_mut().enumerate() {
            let at = base + c * bytes_per_sample;
            *slot = match bytes_per_sample {
                2 => pcm16_to_f32(read_u16(data, at) as i16) as f64,
                4 => f32::from_le_bytes(data[at..at + 4].try_into().unwrap()) as f64,
                _ => f64::from_le_bytes(data[at..at + 8].try_into().unwrap()),
            };
            if !slot.is_finite() {
                return Err(MediaError::UnsupportedEncoding(format!("non-finite sample in frame {f}")));
            }
        }
        let mixed = if channels == 1 {
            frame[0]
        } else {
            frame.sort_by(f64::total_cmp);
            frame.iter().sum::<f64>() / channels as f64
        };
        samples.push(mixed.clamp(-1.0, 1.0) as f32);
    }

    AudioBuffer::new(samples, format.sample_rate)
}

/// Encodes a buffer as a canonical 44-byte-header PCM16 mono WAV file.
pub fn encode_wav(buf: &AudioBuffer) -> Vec<u8> {
    let data_len = (buf.samples.len() * 2) as u32;
    let rate = buf.sample_rate;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&WAVE_FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // channels
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    out.extend_from_slice(&pcm16_bytes(&buf.samples));
    out
}

/// Linear-interpolation resampler.
///
/// Output length is `round(len * target / source)`. Equal samples on both
/// sides of an interpolation point yield exactly that sample, so constant
/// signals pass through unchanged.
pub fn resample(buf: &AudioBuffer, target_rate: u32) -> Result<AudioBuffer, MediaError> {
    if target_rate == 0 {
        return Err(MediaError::InvalidBuffer("target rate must be positive".into()));
    }
    if target_rate == buf.sample_rate || buf.samples.is_empty() {
        return Ok(AudioBuffer { samples: buf.samples.clone(), sample_rate: target_rate });
    }
    let src = buf.sample_rate as u64;
    let dst = target_rate as u64;
    let n = buf.samples.len() as u64;
    let out_len = ((n * dst + src / 2) / src) as usize;
    let last = buf.samples.len() - 1;
    let step = src as f64 / dst as f64;

    let samples = (0..out_len)
        .map(|i| {
            let pos = i as f64 * step;
            let idx = (pos.floor() as usize).min(last);
            let frac = (pos - idx as f64) as f32;
            let a = buf.samples[idx];
            let b = buf.samples[(idx + 1).min(last)];
            if a == b {
                a
            } else {
                a + (b - a) * frac
            }
        })
        .collect();
    Ok(AudioBuffer { samples, sample_rate: target_rate })
}

/// Decode, downmix and resample to the pipeline rate in one step.
pub fn ingest(bytes: &[u8]) -> Result<AudioBuffer, MediaError> {
    let decoded = decode_wav(bytes)?;
    resample(&decoded, PIPELINE_RATE)
}
