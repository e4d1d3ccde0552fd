//! Capitalisation and punctuation restoration.
//!
//! Text moves through three states: a cleaned rich transcript (display form),
//! a normalised rich transcript (numbers, acronyms and symbols spelled out,
//! case and punctuation kept), and plain input (lowercase words only, what
//! an ASR engine emits). Token labels connect plain input back to the
//! normalised form.

mod clean;
mod labels;
mod normalise;
mod restore;
mod strip;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use clean::{clean_corpus, is_rich_text};
pub use labels::{apply_labels, extract_labels, CapClass, IssueKind, LabelExtraction, LabelIssue, PunctClass, TokenLabel};
pub use normalise::{normalise, NormalisationTables};
pub use restore::{restore, restore_batch, LexiconTagger, RestorerHandle, Tagger};
pub use strip::{is_plain_text, strip_to_input};

use crate::engine::EngineError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CprError {
    #[error("token {token:?} cannot be normalised: {reason}")]
    UnmappableToken { token: String, reason: String },
    #[error("{tokens} tokens but {labels} labels")]
    LengthMismatch { tokens: usize, labels: usize },
    #[error("class {class} is illegal for token {token:?}")]
    IllegalClass { token: String, class: String },
    #[error("invalid {kind}: {reason}")]
    InvalidText { kind: &'static str, reason: String },
    #[error("table {table}, line {line}: {msg}")]
    Table { table: String, line: usize, msg: String },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

fn invalid_text(kind: &'static str, reason: impl Into<String>) -> CprError {
    CprError::InvalidText { kind, reason: reason.into() }
}

/// Cleaned display-form text: allowed characters only, single-spaced.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct RichTranscript(String);

impl RichTranscript {
    pub fn new(text: impl Into<String>) -> Result<Self, CprError> {
        let text = text.into();
        clean::check_rich(&text).map_err(|r| invalid_text("rich transcript", r))?;
        Ok(Self(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

/// Rich text with no digits or expandable symbols. Remembers which tokens
/// came from an expansion, since those have no one-to-one counterpart in
/// the original text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalisedRich {
    text: String,
    expanded: Vec<bool>,
}

impl NormalisedRich {
    pub fn new(text: impl Into<String>) -> Result<Self, CprError> {
        let text = text.into();
        clean::check_rich(&text).map_err(|r| invalid_text("normalised transcript", r))?;
        if let Some(c) = text.chars().find(|c| c.is_ascii_digit() || normalise::SYMBOLS.contains(*c)) {
            return Err(invalid_text("normalised transcript", format!("contains {c:?}")));
        }
        let expanded = vec![false; text.split(' ').filter(|t| !t.is_empty()).count()];
        Ok(Self { text, expanded })
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.text.split(' ').filter(|t| !t.is_empty())
    }

    /// Per whitespace token: whether it was produced by expanding a number,
    /// acronym or symbol.
    pub fn expanded(&self) -> &[bool] {
        &self.expanded
    }
}

impl fmt::Display for NormalisedRich {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

/// Lowercase words separated by single spaces.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PlainInput(String);

impl PlainInput {
    pub fn new(text: impl Into<String>) -> Result<Self, CprError> {
        let text = text.into();
        if !is_plain_text(&text) {
            return Err(invalid_text("plain input", format!("{text:?} is not lowercase single-spaced words")));
        }
        Ok(Self(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.0.split(' ').filter(|t| !t.is_empty())
    }
}

impl fmt::Display for PlainInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

macro_rules! string_conversions {
    ($($t:ident),*) => {$(
        impl TryFrom<String> for $t {
            type Error = CprError;
            fn try_from(s: String) -> Result<Self, CprError> {
                Self::new(s)
            }
        }
        impl From<$t> for String {
            fn from(v: $t) -> String {
                v.0
            }
        }
    )*};
}
string_conversions!(RichTranscript, PlainInput);

impl fmt::Display for RichTranscript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}
