//! Recognition engine boundary.
//!
//! An engine turns one segment of audio into lowercase, unpunctuated text
//! with word timings. Two kinds ship: a deterministic table-driven mock and
//! a subprocess engine.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cpr::is_plain_text;
use crate::engine::{EngineCommand, EngineError};
use crate::media::{self, AudioBuffer, PIPELINE_RATE};
use crate::vad::SpeechSegment;

const TIME_EPS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AsrError {
    #[error("segment is empty")]
    EmptySegment,
    #[error("segment [{start_s}, {end_s}] outside audio of {duration_s} s")]
    SegmentOutOfBounds { start_s: f64, end_s: f64, duration_s: f64 },
    #[error("no engine registered as {0:?}")]
    UnknownEngine(String),
    #[error("engine id {0:?} already registered")]
    DuplicateEngine(String),
    #[error("mock engine has no entry for fingerprint {0}")]
    NoMockEntry(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordSpan {
    #[serde(rename = "w")]
    pub token: String,
    #[serde(rename = "s")]
    pub start_s: f64,
    #[serde(rename = "e")]
    pub end_s: f64,
    #[serde(rename = "c")]
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsrHypothesis {
    pub text: String,
    pub words: Vec<WordSpan>,
}

impl AsrHypothesis {
    /// Checks text class, token/text agreement and word timing order
    /// against the segment the hypothesis belongs to.
    pub fn validate(&self, seg: &SpeechSegment) -> Result<(), String> {
        if !is_plain_text(&self.text) {
            return Err(format!("text {:?} is not lowercase plain text", self.text));
        }
        let joined = self.words.iter().map(|w| w.token.as_str()).collect::<Vec<_>>().join(" ");
        if joined != self.text {
            return Err(format!("word tokens {joined:?} do not spell text {:?}", self.text));
        }
        let mut prev_end = seg.start_s;
        for (i, w) in self.words.iter().enumerate() {
            if !(0.0..=1.0).contains(&w.confidence) {
                return Err(format!("word {i} confidence {} outside [0, 1]", w.confidence));
            }
            if !(w.start_s.is_finite() && w.end_s.is_finite() && w.start_s <= w.end_s) {
                return Err(format!("word {i} has invalid interval [{}, {}]", w.start_s, w.end_s));
            }
            if w.start_s < prev_end - TIME_EPS || w.end_s > seg.end_s + TIME_EPS {
                return Err(format!("word {i} [{}, {}] out of order or outside segment", w.start_s, w.end_s));
            }
            prev_end = w.end_s;
        }
        Ok(())
    }
}

/// Stable fingerprint of a segment's audio: SHA-256 over its PCM16 bytes.
pub fn fingerprint(buf: &AudioBuffer, seg: &SpeechSegment) -> String {
    let bytes = media::pcm16_bytes(buf.slice_time(seg.start_s, seg.end_s));
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockSpan {
    pub start_s: f64,
    pub end_s: f64,
    pub text: String,
}

/// Canned answers for the mock engine.
///
/// Lookup order: exact audio fingerprint, then the time span overlapping the
/// segment most, then `fallback`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockTable {
    pub fingerprints: BTreeMap<String, String>,
    pub spans: Vec<MockSpan>,
    pub fallback: Option<String>,
}

impl MockTable {
    fn lookup(&self, buf: &AudioBuffer, seg: &SpeechSegment) -> Result<&str, AsrError> {
        let fp = fingerprint(buf, seg);
        if let Some(text) = self.fingerprints.get(&fp) {
            return Ok(text);
        }
        let overlap = |s: &MockSpan| (s.end_s.min(seg.end_s) - s.start_s.max(seg.start_s)).max(0.0);
        let best = self
            .spans
            .iter()
            .filter(|s| overlap(s) > 0.0)
            .fold(None::<&MockSpan>, |best, s| match best {
                Some(b) if overlap(b) >= overlap(s) => Some(b),
                _ => Some(s),
            });
        if let Some(span) = best {
            return Ok(&span.text);
        }
        self.fallback.as_deref().ok_or(AsrError::NoMockEntry(fp))
    }
}

/// Spreads the words of `text` evenly across the segment.
fn tile_words(text: &str, seg: &SpeechSegment) -> Vec<WordSpan> {
    let tokens: Vec<&str> = text.split(' ').filter(|t| !t.is_empty()).collect();
    let step = seg.duration() / tokens.len().max(1) as f64;
    tokens
        .iter()
        .enumerate()
        .map(|(i, t)| WordSpan {
            token: t.to_string(),
            start_s: seg.start_s + step * i as f64,
            end_s: if i + 1 == tokens.len() { seg.end_s } else { seg.start_s + step * (i + 1) as f64 },
            confidence: 1.0,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EngineKind {
    Mock {
        #[serde(default)]
        table: MockTable,
    },
    /// Protocol: 16 kHz PCM16 segment audio on stdin; one JSON object
    /// `{"text": .., "words": [{"w", "s", "e", "c"}]}` on stdout with word
    /// times relative to the segment start.
    Subprocess { command: EngineCommand },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineDescriptor {
    pub id: String,
    #[serde(flatten)]
    pub kind: EngineKind,
    /// Upper bound on concurrent invocations; `None` means unbounded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_concurrency: Option<usize>,
}

impl EngineDescriptor {
    pub fn mock(id: impl Into<String>, table: MockTable) -> Self {
        Self { id: id.into(), kind: EngineKind::Mock { table }, max_concurrency: None }
    }

    pub fn subprocess(id: impl Into<String>, command: EngineCommand) -> Self {
        Self { id: id.into(), kind: EngineKind::Subprocess { command }, max_concurrency: None }
    }
}

fn check_segment(buf: &AudioBuffer, seg: &SpeechSegment) -> Result<(), AsrError> {
    if !(seg.end_s > seg.start_s) || buf.slice_time(seg.start_s, seg.end_s).is_empty() {
        return Err(AsrError::EmptySegment);
    }
    if seg.start_s < 0.0 || seg.end_s > buf.duration_s() + TIME_EPS {
        return Err(AsrError::SegmentOutOfBounds { start_s: seg.start_s, end_s: seg.end_s, duration_s: buf.duration_s() });
    }
    Ok(())
}

/// Recognises one segment with the given engine.
pub fn recognise(buf: &AudioBuffer, seg: &SpeechSegment, engine: &EngineDescriptor) -> Result<AsrHypothesis, AsrError> {
    check_segment(buf, seg)?;
    let hyp = match &engine.kind {
        EngineKind::Mock { table } => {
            let text = table.lookup(buf, seg)?.to_string();
            AsrHypothesis { words: tile_words(&text, seg), text }
        }
        EngineKind::Subprocess { command } => {
            let clip = AudioBuffer::new(buf.slice_time(seg.start_s, seg.end_s).to_vec(), buf.sample_rate())
                .and_then(|b| media::resample(&b, PIPELINE_RATE))
                .map_err(|e| EngineError::Unavailable(e.to_string()))?;
            let out = command.run_text(&media::pcm16_bytes(clip.samples()))?;
            let mut hyp: AsrHypothesis = serde_json::from_str(out.trim())
                .map_err(|e| EngineError::ProtocolViolation(format!("bad hypothesis JSON: {e}")))?;
            for w in &mut hyp.words {
                w.start_s += seg.start_s;
                w.end_s += seg.start_s;
            }
            hyp
        }
    };
    hyp.validate(seg).map_err(EngineError::ProtocolViolation)?;
    Ok(hyp)
}

/// Anything that can transcribe a segment.
pub trait Recogniser: Send + Sync {
    fn recognise(&self, buf: &AudioBuffer, seg: &SpeechSegment) -> Result<AsrHypothesis, AsrError>;
}

impl Recogniser for EngineDescriptor {
    fn recognise(&self, buf: &AudioBuffer, seg: &SpeechSegment) -> Result<AsrHypothesis, AsrError> {
        recognise(buf, seg, self)
    }
}

/// Engines keyed by unique id.
#[derive(Debug, Clone, Default)]
pub struct EngineRegistry {
    engines: HashMap<String, EngineDescriptor>,
}

impl EngineRegistry {
    pub fn register(&mut self, engine: EngineDescriptor) -> Result<(), AsrError> {
        if self.engines.contains_key(&engine.id) {
            return Err(AsrError::DuplicateEngine(engine.id));
        }
        self.engines.insert(engine.id.clone(), engine);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<&EngineDescriptor, AsrError> {
        self.engines.get(id).ok_or_else(|| AsrError::UnknownEngine(id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.engines.keys().map(String::as_str)
    }

    pub fn recognise(&self, buf: &AudioBuffer, seg: &SpeechSegment, id: &str) -> Result<AsrHypothesis, AsrError> {
        recognise(buf, seg, self.get(id)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpr::{strip_to_input, NormalisedRich};

    fn fixture() -> AudioBuffer {
        AudioBuffer::new((0..16000).map(|i| ((i % 50) as f32 / 50.0) - 0.5).collect(), 16000).unwrap()
    }

    fn whole() -> SpeechSegment {
        SpeechSegment::new(0.0, 1.0).unwrap()
    }

    #[test]
    fn mock_fingerprint_lookup() {
        let buf = fixture();
        let mut table = MockTable::default();
        table.fingerprints.insert(fingerprint(&buf, &whole()), "dia duit".into());
        let engine = EngineDescriptor::mock("f1", table);
        let hyp = recognise(&buf, &whole(), &engine).unwrap();
        assert_eq!(hyp.text, "dia duit");
        assert_eq!(hyp.words.len(), 2);
        assert_eq!(hyp.words[0].start_s, 0.0);
        assert_eq!(hyp.words[0].end_s, hyp.words[1].start_s);
        assert_eq!(hyp.words[1].end_s, 1.0);
    }

    #[test]
    fn mock_span_and_fallback() {
        let buf = fixture();
        let table = MockTable {
            spans: vec![
                MockSpan { start_s: 0.0, end_s: 0.3, text: "a haon".into() },
                MockSpan { start_s: 0.3, end_s: 1.0, text: "a dó".into() },
            ],
            fallback: Some("eile".into()),
            ..Default::default()
        };
        let engine = EngineDescriptor::mock("m", table);
        assert_eq!(recognise(&buf, &SpeechSegment::new(0.2, 0.9).unwrap(), &engine).unwrap().text, "a dó");
        let empty = EngineDescriptor::mock("e", MockTable::default());
        assert!(matches!(recognise(&buf, &whole(), &empty), Err(AsrError::NoMockEntry(_))));
    }

    #[test]
    fn zero_length_segment() {
        let engine = EngineDescriptor::mock("m", MockTable { fallback: Some("x".into()), ..Default::default() });
        let seg = SpeechSegment { start_s: 0.5, end_s: 0.5 };
        assert_eq!(recognise(&fixture(), &seg, &engine), Err(AsrError::EmptySegment));
    }

    #[test]
    fn subprocess_uppercase_rejected() {
        let script = r#"cat >/dev/null; echo '{"text":"Dia duit","words":[{"w":"Dia","s":0,"e":0.5,"c":0.9},{"w":"duit","s":0.5,"e":1,"c":0.9}]}'"#;
        let engine = EngineDescriptor::subprocess("sp", EngineCommand::shell(script));
        assert!(matches!(
            recognise(&fixture(), &whole(), &engine),
            Err(AsrError::Engine(EngineError::ProtocolViolation(_)))
        ));
    }

    #[test]
    fn subprocess_times_are_segment_relative() {
        let script = r#"cat >/dev/null; echo '{"text":"dia duit","words":[{"w":"dia","s":0,"e":0.2,"c":0.9},{"w":"duit","s":0.2,"e":0.4,"c":0.8}]}'"#;
        let engine = EngineDescriptor::subprocess("sp", EngineCommand::shell(script));
        let hyp = recognise(&fixture(), &SpeechSegment::new(0.5, 0.9).unwrap(), &engine).unwrap();
        assert!((hyp.words[1].start_s - 0.7).abs() < 1e-12);
        assert!((hyp.words[1].end_s - 0.9).abs() < 1e-12);
    }

    #[test]
    fn subprocess_garbage_and_missing() {
        let engine = EngineDescriptor::subprocess("sp", EngineCommand::shell("cat >/dev/null; echo nope"));
        assert!(matches!(recognise(&fixture(), &whole(), &engine), Err(AsrError::Engine(EngineError::ProtocolViolation(_)))));
        let engine = EngineDescriptor::subprocess("sp", EngineCommand::new("/no/such/asr", Vec::<String>::new()));
        assert!(matches!(recognise(&fixture(), &whole(), &engine), Err(AsrError::Engine(EngineError::Unavailable(_)))));
    }

    #[test]
    fn validation_catches_bad_hypotheses() {
        let seg = whole();
        let w = |t: &str, s: f64, e: f64| WordSpan { token: t.into(), start_s: s, end_s: e, confidence: 0.5 };
        let ok = AsrHypothesis { text: "tá sé".into(), words: vec![w("tá", 0.0, 0.5), w("sé", 0.5, 1.0)] };
        assert!(ok.validate(&seg).is_ok());
        let digits = AsrHypothesis { text: "3".into(), words: vec![w("3", 0.0, 1.0)] };
        assert!(digits.validate(&seg).is_err());
        let mismatch = AsrHypothesis { text: "tá sé".into(), words: vec![w("tá", 0.0, 0.5)] };
        assert!(mismatch.validate(&seg).is_err());
        let overlap = AsrHypothesis { text: "tá sé".into(), words: vec![w("tá", 0.0, 0.6), w("sé", 0.5, 1.0)] };
        assert!(overlap.validate(&seg).is_err());
        let outside = AsrHypothesis { text: "tá".into(), words: vec![w("tá", 0.0, 1.5)] };
        assert!(outside.validate(&seg).is_err());
    }

    #[test]
    fn output_is_already_plain() {
        let engine = EngineDescriptor::mock("m", MockTable { fallback: Some("go raibh maith agat".into()), ..Default::default() });
        let hyp = recognise(&fixture(), &whole(), &engine).unwrap();
        let stripped = strip_to_input(&NormalisedRich::new(hyp.text.clone()).unwrap());
        assert_eq!(stripped.as_str(), hyp.text);
    }

    #[test]
    fn registry_ids_unique() {
        let mut reg = EngineRegistry::default();
        reg.register(EngineDescriptor::mock("a", MockTable::default())).unwrap();
        assert_eq!(reg.register(EngineDescriptor::mock("a", MockTable::default())), Err(AsrError::DuplicateEngine("a".into())));
        assert!(matches!(reg.recognise(&fixture(), &whole(), "b"), Err(AsrError::UnknownEngine(_))));
    }

    #[test]
    fn descriptor_json_shape() {
        let json = r#"{"id":"kaldi","kind":"subprocess","command":{"program":"decode.sh"},"max_concurrency":2}"#;
        let d: EngineDescriptor = serde_json::from_str(json).unwrap();
        assert_eq!(d.max_concurrency, Some(2));
        assert!(matches!(d.kind, EngineKind::Subprocess { .. }));
    }
}
