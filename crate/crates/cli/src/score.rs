//! `scribe score`: corpus-level metrics over line-aligned files.

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use scribe_core::cpr::{clean_corpus, extract_labels, normalise, NormalisationTables, RichTranscript, TokenLabel};
use scribe_core::metrics::{char_alignment, classifier_accuracy, corpus_bleu, word_alignment, EditAlignment, ErrorRate, LabelField};
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    /// Word error rate over lowercase plain text.
    Wer,
    /// Word error rate with case and punctuation kept.
    Werpc,
    /// Character error rate.
    Cer,
    /// Corpus BLEU, one reference per line.
    Bleu,
    /// Capitalisation and punctuation class accuracy of restored text.
    Acc,
}

fn error_rate(pairs: &[(&str, &str)], align: impl Fn(&str, &str) -> EditAlignment) -> Result<ErrorRate> {
    let total = pairs.iter().fold(EditAlignment::default(), |acc, (r, h)| acc + align(r, h));
    Ok(ErrorRate::from_counts(total)?)
}

fn labels(line: &str, tables: &NormalisationTables) -> Result<(String, Vec<TokenLabel>)> {
    let ex = extract_labels(&normalise(&clean_corpus(line), tables)?);
    Ok((ex.input.as_str().to_string(), ex.labels))
}

pub fn run(metric: Metric, reference: &str, hypothesis: &str) -> Result<Value> {
    let refs: Vec<&str> = reference.lines().collect();
    let hyps: Vec<&str> = hypothesis.lines().collect();
    if refs.len() != hyps.len() {
        bail!("{} reference lines but {} hypothesis lines", refs.len(), hyps.len());
    }
    let pairs: Vec<(&str, &str)> = refs.iter().copied().zip(hyps.iter().copied()).collect();
    let name = metric.to_possible_value().expect("no skipped variants").get_name().to_string();
    let body = match metric {
        Metric::Wer => serde_json::to_value(error_rate(&pairs, word_alignment)?)?,
        Metric::Werpc => {
            for (n, r) in refs.iter().enumerate() {
                RichTranscript::new(*r).with_context(|| format!("reference line {}", n + 1))?;
            }
            serde_json::to_value(error_rate(&pairs, word_alignment)?)?
        }
        Metric::Cer => serde_json::to_value(error_rate(&pairs, char_alignment)?)?,
        Metric::Bleu => {
            let refs: Vec<Vec<&str>> = refs.iter().map(|r| vec![*r]).collect();
            serde_json::to_value(corpus_bleu(&hyps, &refs)?)?
        }
        Metric::Acc => {
            let tables = NormalisationTables::builtin();
            let (mut r_all, mut h_all) = (Vec::new(), Vec::new());
            for (n, (r, h)) in pairs.iter().enumerate() {
                let (r_in, r_lab) = labels(r, &tables).with_context(|| format!("reference line {}", n + 1))?;
                let (h_in, h_lab) = labels(h, &tables).with_context(|| format!("hypothesis line {}", n + 1))?;
                if r_in != h_in {
                    bail!("line {}: words differ ({r_in:?} vs {h_in:?})", n + 1);
                }
                r_all.extend(r_lab);
                h_all.extend(h_lab);
            }
            json!({
                "cap": classifier_accuracy(&r_all, &h_all, LabelField::Cap)?,
                "punct": classifier_accuracy(&r_all, &h_all, LabelField::Punct)?,
                "tokens": r_all.len(),
            })
        }
    };
    Ok(json!({ "metric": name, "lines": pairs.len(), "report": body }))
}
