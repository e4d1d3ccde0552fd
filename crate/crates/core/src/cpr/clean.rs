use unicode_normalization::UnicodeNormalization;

use super::RichTranscript;

/// Punctuation and symbols kept by cleaning. Everything else that is not a
/// letter or ASCII digit is dropped.
pub(crate) const ALLOWED_PUNCT: &str = ".,?!;:'\"-%€£§";
/// Marks that attach to the preceding word.
pub(crate) const CLOSING_PUNCT: &str = ".,?!;:";

const BRACKETS: &str = "()[]{}<>";
const DOUBLE_QUOTES: &str = "\u{201C}\u{201D}\u{201E}\u{201F}\u{00AB}\u{00BB}\u{2033}";
const SINGLE_QUOTES: &str = "\u{2018}\u{2019}\u{201A}\u{201B}\u{2032}`\u{00B4}";
const DASHES: &str = "\u{2010}\u{2011}\u{2012}\u{2013}\u{2014}\u{2015}\u{2212}";
const INVISIBLE: &str = "\u{00AD}\u{200B}\u{200C}\u{200D}\u{2060}\u{FEFF}";

fn allowed(c: char) -> bool {
    c.is_alphabetic() || c.is_ascii_digit() || ALLOWED_PUNCT.contains(c)
}

/// Turns raw text into a rich transcript: NFC, bracket delimiters removed
/// (content kept), typographic quotes and dashes mapped to ASCII, other
/// characters dropped, no space before closing punctuation, whitespace
/// collapsed. Idempotent.
pub fn clean_corpus(raw: &str) -> RichTranscript {
    let mut out = String::with_capacity(raw.len());
    for c in raw.nfc() {
        let c = match c {
            c if DOUBLE_QUOTES.contains(c) => '"',
            c if SINGLE_QUOTES.contains(c) => '\'',
            c if DASHES.contains(c) => '-',
            '\u{2026}' => {
                trim_trailing_space(&mut out);
                out.push_str("...");
                continue;
            }
            c if INVISIBLE.contains(c) || (c.is_control() && !c.is_whitespace()) => continue,
            c if BRACKETS.contains(c) || c.is_whitespace() || !allowed(c) => ' ',
            c => c,
        };
        if c == ' ' {
            if !out.is_empty() && !out.ends_with(' ') {
                out.push(' ');
            }
            continue;
        }
        if CLOSING_PUNCT.contains(c) {
            trim_trailing_space(&mut out);
        }
        out.push(c);
    }
    trim_trailing_space(&mut out);
    RichTranscript(out)
}

fn trim_trailing_space(s: &mut String) {
    while s.ends_with(' ') {
        s.pop();
    }
}

pub(crate) fn check_rich(text: &str) -> Result<(), String> {
    if let Some(c) = text.chars().find(|&c| c != ' ' && !allowed(c)) {
        return Err(format!("disallowed character {c:?}"));
    }
    if text.starts_with(' ') || text.ends_with(' ') || text.contains("  ") {
        return Err("not single-spaced".into());
    }
    Ok(())
}

pub fn is_rich_text(text: &str) -> bool {
    check_rich(text).is_ok()
}
