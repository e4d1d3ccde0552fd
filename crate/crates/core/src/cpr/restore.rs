use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::labels::{apply_labels, extract_labels, CapClass, PunctClass, TokenLabel};
use super::{CprError, NormalisedRich, PlainInput, RichTranscript};
use crate::engine::{EngineCommand, EngineError};

/// Predicts one label per plain token.
pub trait Tagger: Send + Sync + fmt::Debug {
    fn tag(&self, tokens: &[&str]) -> Vec<TokenLabel>;
}

/// A way of turning plain input into rich text.
#[derive(Clone)]
pub enum RestorerHandle {
    /// Returns the input unchanged.
    Identity,
    /// Looks the input up; unlisted inputs pass through unchanged.
    Canned(HashMap<String, String>),
    /// External restorer: one sentence per line on stdin, one per line out.
    Subprocess(EngineCommand),
    /// Built-in classifier path: tag each token, then apply the labels.
    Classifier(Arc<dyn Tagger>),
}

impl fmt::Debug for RestorerHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RestorerHandle::Identity => f.write_str("Identity"),
            RestorerHandle::Canned(m) => f.debug_tuple("Canned").field(&m.len()).finish(),
            RestorerHandle::Subprocess(c) => f.debug_tuple("Subprocess").field(c).finish(),
            RestorerHandle::Classifier(t) => f.debug_tuple("Classifier").field(t).finish(),
        }
    }
}

fn violation(msg: impl Into<String>) -> CprError {
    CprError::Engine(EngineError::ProtocolViolation(msg.into()))
}

fn validated(output: String) -> Result<RichTranscript, CprError> {
    RichTranscript::new(output).map_err(|e| violation(e.to_string()))
}

pub fn restore(input: &PlainInput, engine: &RestorerHandle) -> Result<RichTranscript, CprError> {
    let mut out = restore_batch(std::slice::from_ref(input), engine)?;
    Ok(out.pop().expect("one output per input"))
}

/// Restores many sentences; a subprocess engine is started once for all.
pub fn restore_batch(inputs: &[PlainInput], engine: &RestorerHandle) -> Result<Vec<RichTranscript>, CprError> {
    match engine {
        RestorerHandle::Identity => inputs.iter().map(|i| validated(i.as_str().to_string())).collect(),
        RestorerHandle::Canned(map) => inputs
            .iter()
            .map(|i| validated(map.get(i.as_str()).cloned().unwrap_or_else(|| i.as_str().to_string())))
            .collect(),
        RestorerHandle::Classifier(tagger) => inputs
            .iter()
            .map(|i| {
                let tokens: Vec<&str> = i.tokens().collect();
                let nr = apply_labels(i, &tagger.tag(&tokens))?;
                validated(nr.as_str().to_string())
            })
            .collect(),
        RestorerHandle::Subprocess(cmd) => {
            if inputs.is_empty() {
                return Ok(Vec::new());
            }
            let mut stdin = String::new();
            for i in inputs {
                stdin.push_str(i.as_str());
                stdin.push('\n');
            }
            let stdout = cmd.run_text(stdin.as_bytes())?;
            let lines: Vec<&str> = stdout.lines().collect();
            if lines.len() != inputs.len() {
                return Err(violation(format!("{} lines in, {} lines out", inputs.len(), lines.len())));
            }
            inputs
                .iter()
                .zip(lines)
                .enumerate()
                .map(|(n, (i, line))| {
                    if line.trim().is_empty() && !i.as_str().is_empty() {
                        return Err(violation(format!("empty output for line {}", n + 1)));
                    }
                    validated(line.to_string())
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct ClassCounts {
    cap: HashMap<CapClass, u32>,
    punct: HashMap<PunctClass, u32>,
}

fn majority<K: Copy + Ord + std::hash::Hash>(counts: &HashMap<K, u32>, default: K) -> K {
    counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map_or(default, |(&k, _)| k)
}

/// Baseline tagger: each word gets its most frequent training label.
/// Sentence-initial words are at least CAP1 and a sentence without a final
/// mark gets a full stop.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LexiconTagger {
    words: HashMap<String, ClassCounts>,
}

impl LexiconTagger {
    pub fn train<'a>(corpus: impl IntoIterator<Item = &'a NormalisedRich>) -> Self {
        let mut words: HashMap<String, ClassCounts> = HashMap::new();
        for nr in corpus {
            let ex = extract_labels(nr);
            for (token, label) in ex.training_pairs() {
                let c = words.entry(token.to_string()).or_default();
                *c.cap.entry(label.cap).or_default() += 1;
                *c.punct.entry(label.punct).or_default() += 1;
            }
        }
        Self { words }
    }

    pub fn vocab_size(&self) -> usize {
        self.words.len()
    }
}

fn legal(token: &str, cap: CapClass) -> bool {
    cap.position().is_none_or(|p| token.chars().nth(p - 1).is_some_and(char::is_alphabetic))
}

impl Tagger for LexiconTagger {
    fn tag(&self, tokens: &[&str]) -> Vec<TokenLabel> {
        let last = tokens.len().saturating_sub(1);
        tokens
            .iter()
            .enumerate()
            .map(|(i, tok)| {
                let (mut cap, mut punct) = match self.words.get(*tok) {
                    Some(c) => (majority(&c.cap, CapClass::Lower), majority(&c.punct, PunctClass::None)),
                    None => (CapClass::Lower, PunctClass::None),
                };
                if !legal(tok, cap) {
                    cap = CapClass::Lower;
                }
                if i == 0 && cap == CapClass::Lower && legal(tok, CapClass::Cap1) {
                    cap = CapClass::Cap1;
                }
                if i == last && punct == PunctClass::None {
                    punct = PunctClass::Period;
                }
                TokenLabel { cap, punct }
            })
            .collect()
    }
}
