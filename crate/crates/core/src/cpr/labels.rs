use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::strip::strip_token;
use super::{CprError, NormalisedRich, PlainInput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CapClass {
    #[serde(rename = "LOWER")]
    Lower,
    #[serde(rename = "CAP1")]
    Cap1,
    #[serde(rename = "CAP2")]
    Cap2,
    #[serde(rename = "CAP3")]
    Cap3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PunctClass {
    None,
    Comma,
    Period,
    Question,
    Exclaim,
    Semicolon,
    Colon,
}

impl CapClass {
    pub const ALL: [CapClass; 4] = [CapClass::Lower, CapClass::Cap1, CapClass::Cap2, CapClass::Cap3];

    /// 1-based position of the capital letter, if any.
    pub fn position(self) -> Option<usize> {
        match self {
            CapClass::Lower => None,
            CapClass::Cap1 => Some(1),
            CapClass::Cap2 => Some(2),
            CapClass::Cap3 => Some(3),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CapClass::Lower => "LOWER",
            CapClass::Cap1 => "CAP1",
            CapClass::Cap2 => "CAP2",
            CapClass::Cap3 => "CAP3",
        }
    }
}

impl PunctClass {
    pub const ALL: [PunctClass; 7] = [
        PunctClass::None,
        PunctClass::Comma,
        PunctClass::Period,
        PunctClass::Question,
        PunctClass::Exclaim,
        PunctClass::Semicolon,
        PunctClass::Colon,
    ];

    pub fn mark(self) -> Option<char> {
        match self {
            PunctClass::None => None,
            PunctClass::Comma => Some(','),
            PunctClass::Period => Some('.'),
            PunctClass::Question => Some('?'),
            PunctClass::Exclaim => Some('!'),
            PunctClass::Semicolon => Some(';'),
            PunctClass::Colon => Some(':'),
        }
    }

    pub fn from_mark(c: char) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.mark() == Some(c))
    }

    pub fn name(self) -> &'static str {
        match self {
            PunctClass::None => "NONE",
            PunctClass::Comma => "COMMA",
            PunctClass::Period => "PERIOD",
            PunctClass::Question => "QUESTION",
            PunctClass::Exclaim => "EXCLAIM",
            PunctClass::Semicolon => "SEMICOLON",
            PunctClass::Colon => "COLON",
        }
    }
}

impl fmt::Display for CapClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for PunctClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CapClass {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| format!("unknown cap class {s:?}"))
    }
}

impl FromStr for PunctClass {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| format!("unknown punct class {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenLabel {
    pub cap: CapClass,
    pub punct: PunctClass,
}

impl TokenLabel {
    pub const PLAIN: TokenLabel = TokenLabel { cap: CapClass::Lower, punct: PunctClass::None };

    pub fn new(cap: CapClass, punct: PunctClass) -> Self {
        Self { cap, punct }
    }
}

impl fmt::Display for TokenLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}+{}", self.cap, self.punct)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    /// First capital beyond the third character; labelled LOWER.
    UnsupportedCapPattern,
    /// Capitals after the first one, which labels cannot express.
    ExtraCapitals,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelIssue {
    pub index: usize,
    pub token: String,
    pub kind: IssueKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelExtraction {
    pub input: PlainInput,
    pub labels: Vec<TokenLabel>,
    /// Per label: token came from a number/acronym/symbol expansion.
    pub expanded: Vec<bool>,
    pub issues: Vec<LabelIssue>,
}

impl LabelExtraction {
    /// (token, label) pairs usable for classifier training: expanded tokens
    /// and tokens with reported issues are left out.
    pub fn training_pairs(&self) -> Vec<(&str, TokenLabel)> {
        self.input
            .tokens()
            .zip(&self.labels)
            .enumerate()
            .filter(|(i, _)| !self.expanded[*i] && !self.issues.iter().any(|x| x.index == *i))
            .map(|(_, (t, &l))| (t, l))
            .collect()
    }
}

fn punct_of(token: &str) -> PunctClass {
    let tail_start = token.rfind(|c: char| c.is_alphabetic()).map_or(0, |i| i + token[i..].chars().next().unwrap().len_utf8());
    token[tail_start..].chars().rev().find_map(PunctClass::from_mark).unwrap_or(PunctClass::None)
}

/// Per token: capital class from the position of the first capital, and
/// punctuation class from the last closing mark after the word. Tokens with
/// no letters are skipped, so labels line up with `strip_to_input`.
pub fn extract_labels(nr: &NormalisedRich) -> LabelExtraction {
    let mut words = Vec::new();
    let mut labels = Vec::new();
    let mut expanded = Vec::new();
    let mut issues = Vec::new();
    for (token, &was_expanded) in nr.tokens().zip(nr.expanded()) {
        let word = strip_token(token);
        if word.is_empty() {
            continue;
        }
        let index = labels.len();
        let mut caps = word.chars().enumerate().filter(|(_, c)| c.is_uppercase()).map(|(i, _)| i + 1);
        let cap = match caps.next() {
            None => CapClass::Lower,
            Some(1) => CapClass::Cap1,
            Some(2) => CapClass::Cap2,
            Some(3) => CapClass::Cap3,
            Some(_) => {
                issues.push(LabelIssue { index, token: token.to_string(), kind: IssueKind::UnsupportedCapPattern });
                CapClass::Lower
            }
        };
        if cap != CapClass::Lower && caps.next().is_some() {
            issues.push(LabelIssue { index, token: token.to_string(), kind: IssueKind::ExtraCapitals });
        }
        labels.push(TokenLabel { cap, punct: punct_of(token) });
        words.push(word.to_lowercase());
        expanded.push(was_expanded);
    }
    LabelExtraction { input: PlainInput(words.join(" ")), labels, expanded, issues }
}

fn apply_one(token: &str, label: TokenLabel) -> Result<String, CprError> {
    let illegal = || CprError::IllegalClass { token: token.to_string(), class: label.cap.to_string() };
    let mut out = String::with_capacity(token.len() + 1);
    match label.cap.position() {
        None => out.push_str(token),
        Some(pos) => {
            let target = token.chars().nth(pos - 1).filter(|c| c.is_alphabetic()).ok_or_else(illegal)?;
            out.extend(token.chars().take(pos - 1));
            out.extend(target.to_uppercase());
            out.extend(token.chars().skip(pos));
        }
    }
    out.extend(label.punct.mark());
    Ok(out)
}

/// Rebuilds normalised rich text from plain tokens and their labels.
pub fn apply_labels(tokens: &PlainInput, labels: &[TokenLabel]) -> Result<NormalisedRich, CprError> {
    let words: Vec<&str> = tokens.tokens().collect();
    if words.len() != labels.len() {
        return Err(CprError::LengthMismatch { tokens: words.len(), labels: labels.len() });
    }
    let out = words
        .iter()
        .zip(labels)
        .map(|(w, &l)| apply_one(w, l))
        .collect::<Result<Vec<_>, _>>()?;
    NormalisedRich::new(out.join(" "))
}
