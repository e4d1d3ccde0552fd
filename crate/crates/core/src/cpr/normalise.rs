//! Spelling out numbers, acronyms and symbols from TSV rule tables.
//!
//! Each table is `surface<TAB>expansion` per line; `#` starts a comment.
//! Acronym lines may omit the expansion, in which case the acronym is
//! spelled with the letter-name table.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::{CprError, NormalisedRich, RichTranscript};

/// Symbols that must not survive normalisation.
pub(crate) const SYMBOLS: &str = "%€£§";
const LEADING: &[char] = &['"', '\''];
const TRAILING: &[char] = &['.', ',', '?', '!', ';', ':', '"', '\''];
const ORDINAL_SUFFIX: char = 'ú';

pub const TABLE_FILES: [&str; 5] = ["cardinals.tsv", "ordinals.tsv", "letters.tsv", "acronyms.tsv", "symbols.tsv"];

#[derive(Debug, Clone, PartialEq)]
pub struct NormalisationTables {
    cardinals: HashMap<String, String>,
    ordinals: HashMap<String, String>,
    letters: HashMap<char, String>,
    acronyms: HashMap<String, String>,
    symbols: HashMap<char, String>,
}

fn table_err(table: &str, line: usize, msg: impl Into<String>) -> CprError {
    CprError::Table { table: table.to_string(), line, msg: msg.into() }
}

/// Rows of a TSV table: (line number, surface, optional expansion).
fn rows<'a>(table: &'a str, text: &'a str) -> impl Iterator<Item = Result<(usize, &'a str, Option<&'a str>), CprError>> + 'a {
    text.lines().enumerate().filter_map(move |(i, line)| {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            return None;
        }
        let mut parts = line.split('\t');
        let surface = parts.next().unwrap_or_default().trim();
        let expansion = parts.next().map(str::trim);
        if parts.next().is_some() || surface.is_empty() {
            return Some(Err(table_err(table, i + 1, "expected surface<TAB>expansion")));
        }
        if let Some(e) = expansion {
            let spoken = !e.is_empty()
                && !e.starts_with(' ')
                && !e.ends_with(' ')
                && !e.contains("  ")
                && e.chars().all(|c| c == ' ' || (c.is_alphabetic() && !c.is_uppercase()));
            if !spoken {
                return Some(Err(table_err(table, i + 1, format!("expansion {e:?} must be lowercase words"))));
            }
        }
        Some(Ok((i + 1, surface, expansion)))
    })
}

fn required(table: &str, text: &str) -> Result<HashMap<String, String>, CprError> {
    let mut map = HashMap::new();
    for row in rows(table, text) {
        let (line, surface, expansion) = row?;
        let e = expansion.ok_or_else(|| table_err(table, line, "missing expansion"))?;
        map.insert(surface.to_string(), e.to_string());
    }
    Ok(map)
}

fn single_char(table: &str, text: &str) -> Result<HashMap<char, String>, CprError> {
    required(table, text)?
        .into_iter()
        .map(|(k, v)| {
            let mut chars = k.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => Ok((c, v)),
                _ => Err(table_err(table, 0, format!("{k:?} is not a single character"))),
            }
        })
        .collect()
}

impl NormalisationTables {
    /// Tables shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_sources(
            include_str!("../../data/cardinals.tsv"),
            include_str!("../../data/ordinals.tsv"),
            include_str!("../../data/letters.tsv"),
            include_str!("../../data/acronyms.tsv"),
            include_str!("../../data/symbols.tsv"),
        )
        .expect("builtin tables are valid")
    }

    /// Loads the five table files from a directory.
    pub fn from_dir(dir: &Path) -> Result<Self, CprError> {
        let read = |name: &str| {
            fs::read_to_string(dir.join(name)).map_err(|e| table_err(name, 0, e.to_string()))
        };
        Self::from_sources(
            &read(TABLE_FILES[0])?,
            &read(TABLE_FILES[1])?,
            &read(TABLE_FILES[2])?,
            &read(TABLE_FILES[3])?,
            &read(TABLE_FILES[4])?,
        )
    }

    pub fn from_sources(
        cardinals: &str,
        ordinals: &str,
        letters: &str,
        acronyms: &str,
        symbols: &str,
    ) -> Result<Self, CprError> {
        let cardinals = required("cardinals", cardinals)?;
        if let Some(k) = cardinals.keys().find(|k| !k.chars().all(|c| c.is_ascii_digit())) {
            return Err(table_err("cardinals", 0, format!("{k:?} is not a digit string")));
        }
        let ordinals = required("ordinals", ordinals)?;
        let letters = single_char("letters", letters)?;
        let symbols = single_char("symbols", symbols)?;

        let mut acr = HashMap::new();
        for row in rows("acronyms", acronyms) {
            let (line, surface, expansion) = row?;
            let spoken = match expansion {
                Some(e) => e.to_string(),
                None => surface
                    .chars()
                    .map(|c| letters.get(&c).cloned().ok_or_else(|| table_err("acronyms", line, format!("no letter name for {c:?}"))))
                    .collect::<Result<Vec<_>, _>>()?
                    .join(" "),
            };
            acr.insert(surface.to_string(), spoken);
        }
        Ok(Self { cardinals, ordinals, letters, acronyms: acr, symbols })
    }

    pub fn cardinal(&self, digits: &str) -> Option<&str> {
        self.cardinals.get(digits).map(String::as_str)
    }

    pub fn acronym(&self, surface: &str) -> Option<&str> {
        self.acronyms.get(surface).map(String::as_str)
    }

    pub fn letter(&self, c: char) -> Option<&str> {
        self.letters.get(&c).map(String::as_str)
    }

    fn symbol(&self, c: char, token: &str) -> Result<&str, CprError> {
        self.symbols.get(&c).map(String::as_str).ok_or_else(|| unmappable(token, format!("no spoken form for {c:?}")))
    }

    fn number(&self, digits: &str, token: &str) -> Result<&str, CprError> {
        self.cardinal(digits).ok_or_else(|| unmappable(token, format!("{digits} is outside the cardinal table")))
    }

    /// Spoken form of one token core (leading and trailing punctuation
    /// removed), or `None` when it needs no expansion.
    fn expand_core(&self, core: &str) -> Result<Option<String>, CprError> {
        if let Some(e) = self.acronym(core) {
            return Ok(Some(e.to_string()));
        }
        let special = |c: char| c.is_ascii_digit() || SYMBOLS.contains(c);
        if !core.chars().any(special) {
            return Ok(None);
        }
        let mut chars = core.chars().peekable();
        let prefix = chars.next_if(|&c| SYMBOLS.contains(c));
        let digits: String = std::iter::from_fn(|| chars.next_if(char::is_ascii_digit)).collect();
        let suffix: String = chars.collect();
        let mut suffix_chars = suffix.chars();
        let suffix_char = match (suffix_chars.next(), suffix_chars.next()) {
            (None, _) => None,
            (Some(c), None) => Some(c),
            _ => return Err(unmappable(core, "mixed letters, digits or symbols")),
        };

        let spoken = match (prefix, digits.is_empty(), suffix_char) {
            (Some(sym), true, None) => self.symbol(sym, core)?.to_string(),
            (None, false, None) => self.number(&digits, core)?.to_string(),
            (None, false, Some(ORDINAL_SUFFIX)) => self
                .ordinals
                .get(core)
                .cloned()
                .ok_or_else(|| unmappable(core, "ordinal outside the ordinal table"))?,
            (Some(sym), false, None) => format!("{} {}", self.number(&digits, core)?, self.symbol(sym, core)?),
            (None, false, Some(sym)) if SYMBOLS.contains(sym) => {
                format!("{} {}", self.number(&digits, core)?, self.symbol(sym, core)?)
            }
            _ => return Err(unmappable(core, "mixed letters, digits or symbols")),
        };
        Ok(Some(spoken))
    }
}

fn unmappable(token: &str, reason: impl Into<String>) -> CprError {
    CprError::UnmappableToken { token: token.to_string(), reason: reason.into() }
}

/// Spells out digits, listed acronyms and symbols, keeping surrounding
/// punctuation and all other text as is.
pub fn normalise(rt: &RichTranscript, tables: &NormalisationTables) -> Result<NormalisedRich, CprError> {
    let mut words: Vec<String> = Vec::new();
    let mut expanded = Vec::new();
    for token in rt.as_str().split(' ').filter(|t| !t.is_empty()) {
        let lead_end = token.len() - token.trim_start_matches(LEADING).len();
        let (lead, rest) = token.split_at(lead_end);
        let core = rest.trim_end_matches(TRAILING);
        let trail = &rest[core.len()..];
        match tables.expand_core(core)? {
            None => {
                words.push(token.to_string());
                expanded.push(false);
            }
            Some(spoken) => {
                let parts: Vec<&str> = spoken.split(' ').collect();
                let last = parts.len() - 1;
                for (i, p) in parts.into_iter().enumerate() {
                    let mut w = String::new();
                    if i == 0 {
                        w.push_str(lead);
                    }
                    w.push_str(p);
                    if i == last {
                        w.push_str(trail);
                    }
                    words.push(w);
                    expanded.push(true);
                }
            }
        }
    }
    let text = words.join(" ");
    let mut nr = NormalisedRich::new(text)?;
    nr.expanded = expanded;
    Ok(nr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpr::clean_corpus;
    use proptest::prelude::*;

    fn norm(s: &str) -> Result<String, CprError> {
        normalise(&clean_corpus(s), &NormalisationTables::builtin()).map(|n| n.as_str().to_string())
    }

    /// Irish counting numbers 0-99 assembled from units and tens words.
    fn spoken_oracle(n: u32) -> String {
        let units = ["náid", "a haon", "a dó", "a trí", "a ceathair", "a cúig", "a sé", "a seacht", "a hocht", "a naoi"];
        let tens = ["", "", "fiche", "tríocha", "daichead", "caoga", "seasca", "seachtó", "ochtó", "nócha"];
        match n {
            0..=9 => units[n as usize].to_string(),
            10 => "a deich".into(),
            12 => "a dó dhéag".into(),
            11..=19 => format!("{} déag", units[(n - 10) as usize]),
            _ if n % 10 == 0 => tens[(n / 10) as usize].into(),
            _ => format!("{} {}", tens[(n / 10) as usize], units[(n % 10) as usize]),
        }
    }

    #[test]
    fn cardinal_table_matches_composition() {
        let t = NormalisationTables::builtin();
        for n in 0..100 {
            assert_eq!(t.cardinal(&n.to_string()), Some(spoken_oracle(n).as_str()), "{n}");
        }
    }

    #[test]
    fn examples() {
        assert_eq!(norm("3").unwrap(), "a trí");
        assert_eq!(norm("Tá 3 mhadra agam.").unwrap(), "Tá a trí mhadra agam.");
        assert_eq!(norm("Bhí 21, nó 22?").unwrap(), "Bhí fiche a haon, nó fiche a dó?");
        assert_eq!(norm("an 3ú lá").unwrap(), "an tríú lá");
        assert_eq!(norm("Chosain sé €20.").unwrap(), "Chosain sé fiche euro.");
        assert_eq!(norm("50% acu").unwrap(), "caoga faoin gcéad acu");
        assert_eq!(norm("faoi § 4").unwrap(), "faoi alt a ceathair");
    }

    #[test]
    fn acronyms() {
        let t = NormalisationTables::builtin();
        let spelled: Vec<&str> = "RTÉ".chars().map(|c| t.letter(c).unwrap()).collect();
        assert_eq!(norm("Ar RTÉ.").unwrap(), format!("Ar {}.", spelled.join(" ")));
        assert_eq!(norm("Ar RTÉ.").unwrap(), "Ar ear té é fada.");
        assert_eq!(norm("TG4").unwrap(), "té gé a ceathair");
        assert_eq!(norm("\"RTÉ\"").unwrap(), "\"ear té é fada\"");
    }

    #[test]
    fn plain_sentence_unchanged() {
        let s = "Chuaigh Seán go Gaillimh, agus d'fhill sé.";
        assert_eq!(norm(s).unwrap(), s);
        let nr = normalise(&clean_corpus(s), &NormalisationTables::builtin()).unwrap();
        assert!(nr.expanded().iter().all(|e| !e));
    }

    #[test]
    fn expansion_flags() {
        let nr = normalise(&clean_corpus("Tá 3 cinn"), &NormalisationTables::builtin()).unwrap();
        assert_eq!(nr.expanded(), [false, true, true, false]);
    }

    #[test]
    fn unmappable() {
        assert!(matches!(norm("123456"), Err(CprError::UnmappableToken { .. })));
        assert!(matches!(norm("G7"), Err(CprError::UnmappableToken { .. })));
        assert!(matches!(norm("3.5"), Err(CprError::UnmappableToken { .. })));
        assert!(matches!(norm("99ú"), Err(CprError::UnmappableToken { .. })));
    }

    #[test]
    fn table_validation() {
        let ok = |s: &str| s.to_string();
        let bad = NormalisationTables::from_sources("1\tA Haon\n", "", "", "", "");
        assert!(matches!(bad, Err(CprError::Table { .. })));
        let bad = NormalisationTables::from_sources("x\ta\n", "", "", "", "");
        assert!(matches!(bad, Err(CprError::Table { .. })));
        let bad = NormalisationTables::from_sources("", "", "A\tá\n", &ok("AB\n"), "");
        assert!(matches!(bad, Err(CprError::Table { .. })));
        let good = NormalisationTables::from_sources("", "", "A\tá\nB\tbé\n", &ok("# c\nAB\n"), "").unwrap();
        assert_eq!(good.acronym("AB"), Some("á bé"));
    }

    #[test]
    fn loads_from_directory() {
        let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
        assert_eq!(NormalisationTables::from_dir(&dir).unwrap(), NormalisationTables::builtin());
    }

    fn punct_count(s: &str) -> usize {
        s.chars().filter(|c| ".,?!;:'\"-".contains(*c)).count()
    }

    proptest! {
        #[test]
        fn no_digits_and_same_punctuation(
            parts in proptest::collection::vec(
                prop_oneof![
                    (0u32..101).prop_map(|n| n.to_string()),
                    (1u32..11).prop_map(|n| format!("{n}ú")),
                    (0u32..101).prop_map(|n| format!("€{n}")),
                    (0u32..101).prop_map(|n| format!("{n}%")),
                    Just("RTÉ".to_string()),
                    "[a-zA-Zá]{1,6}",
                ],
                0..8,
            ),
            marks in proptest::collection::vec(prop_oneof![Just(""), Just(","), Just("."), Just("?"), Just("\"")], 8),
        ) {
            let text = parts.iter().zip(&marks).map(|(p, m)| format!("{p}{m}")).collect::<Vec<_>>().join(" ");
            let rt = clean_corpus(&text);
            let nr = normalise(&rt, &NormalisationTables::builtin()).unwrap();
            prop_assert!(!nr.as_str().chars().any(|c| c.is_ascii_digit() || SYMBOLS.contains(c)));
            prop_assert_eq!(punct_count(nr.as_str()), punct_count(rt.as_str()));
            prop_assert_eq!(nr.expanded().len(), nr.tokens().count());
        }
    }
}
