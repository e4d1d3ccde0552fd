use super::{NormalisedRich, PlainInput};

fn word_char(c: char) -> bool {
    c.is_alphabetic() || c == '\'' || c == '-'
}

fn lowercase_stable(c: char) -> bool {
    c.to_lowercase().eq(std::iter::once(c))
}

/// Letters, apostrophes and hyphens of one token with edge apostrophes and
/// hyphens (quote marks, dashes) trimmed. Case is kept.
pub(crate) fn strip_token(token: &str) -> String {
    let kept: String = token.chars().filter(|&c| word_char(c)).collect();
    kept.trim_matches(|c| c == '\'' || c == '-').to_string()
}

/// Drops everything except letters and in-word apostrophes and hyphens,
/// lowercases, and removes tokens left empty.
pub fn strip_to_input(nr: &NormalisedRich) -> PlainInput {
    let tokens: Vec<String> = nr
        .tokens()
        .map(|t| strip_token(t).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect();
    PlainInput(tokens.join(" "))
}

/// True for text `strip_to_input` could have produced: single-spaced tokens
/// of lowercase letters with apostrophes or hyphens only inside words.
pub fn is_plain_text(text: &str) -> bool {
    if text.is_empty() {
        return true;
    }
    text.split(' ').all(|tok| {
        !tok.is_empty()
            && !tok.starts_with(['\'', '-'])
            && !tok.ends_with(['\'', '-'])
            && tok.chars().all(|c| word_char(c) && lowercase_stable(c))
    })
}
