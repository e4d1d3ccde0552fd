//! `scribe cpr`: line-oriented text steps. Each reads a file (or stdin) and
//! writes one output line per input line to a file (or stdout).

use std::io::{self, Read, Write};
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use scribe_core::cpr::{
    apply_labels, clean_corpus, extract_labels, normalise, restore_batch, strip_to_input, LexiconTagger,
    NormalisationTables, NormalisedRich, PlainInput, RestorerHandle, RichTranscript, TokenLabel,
};
use scribe_core::engine::EngineCommand;
use serde::{Deserialize, Serialize};

#[derive(Args)]
pub struct Io {
    /// Input file; stdin when omitted.
    input: Option<PathBuf>,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
pub enum Step {
    /// Raw corpus text to cleaned display text.
    Clean(Io),
    /// Cleaned text to normalised text (numbers, acronyms and symbols spelled out).
    Normalise {
        #[command(flatten)]
        io: Io,
        /// Directory of TSV expansion tables; the built-in tables otherwise.
        #[arg(long)]
        tables: Option<PathBuf>,
    },
    /// Normalised text to plain lowercase input.
    Strip(Io),
    /// Normalised text to per-token labels, as JSON lines.
    Labels(Io),
    /// Label JSON lines back to normalised text.
    Apply(Io),
    /// Plain input to rich text with a restoration engine.
    Restore {
        #[command(flatten)]
        io: Io,
        /// Train the lexicon tagger on this corpus of rich text.
        #[arg(long, conflicts_with = "command")]
        lexicon: Option<PathBuf>,
        /// External restorer, one sentence per line in and out.
        #[arg(long, num_args = 1.., allow_hyphen_values = true)]
        command: Option<Vec<String>>,
    },
}

/// One line of `cpr labels` output.
#[derive(Debug, Serialize, Deserialize)]
pub struct LabelLine {
    pub input: String,
    pub labels: Vec<TokenLabel>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped_tokens: Vec<usize>,
}

fn read_input(io: &Io) -> Result<String> {
    match &io.input {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())),
        None => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s)?;
            Ok(s)
        }
    }
}

fn write_output(io: &Io, lines: &[String]) -> Result<()> {
    let mut text = lines.join("\n");
    if !lines.is_empty() {
        text.push('\n');
    }
    match &io.out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => Ok(io::stdout().lock().write_all(text.as_bytes())?),
    }
}

fn per_line(io: &Io, f: impl Fn(&str) -> Result<String>) -> Result<()> {
    let text = read_input(io)?;
    let out = text
        .lines()
        .enumerate()
        .map(|(n, l)| f(l).with_context(|| format!("line {}", n + 1)))
        .collect::<Result<Vec<_>>>()?;
    write_output(io, &out)
}

pub fn run(step: Step) -> Result<()> {
    match step {
        Step::Clean(io) => per_line(&io, |l| Ok(clean_corpus(l).into_string())),
        Step::Normalise { io, tables } => {
            let tables = match tables {
                Some(dir) => NormalisationTables::from_dir(&dir)?,
                None => NormalisationTables::builtin(),
            };
            per_line(&io, |l| Ok(normalise(&RichTranscript::new(l)?, &tables)?.as_str().to_string()))
        }
        Step::Strip(io) => per_line(&io, |l| Ok(strip_to_input(&NormalisedRich::new(l)?).as_str().to_string())),
        Step::Labels(io) => per_line(&io, |l| {
            let ex = extract_labels(&NormalisedRich::new(l)?);
            let line = LabelLine {
                input: ex.input.as_str().to_string(),
                labels: ex.labels,
                skipped_tokens: ex.issues.iter().map(|i| i.index).collect(),
            };
            Ok(serde_json::to_string(&line)?)
        }),
        Step::Apply(io) => per_line(&io, |l| {
            let line: LabelLine = serde_json::from_str(l)?;
            Ok(apply_labels(&PlainInput::new(line.input)?, &line.labels)?.as_str().to_string())
        }),
        Step::Restore { io, lexicon, command } => {
            let engine = match (lexicon, command) {
                (Some(corpus), _) => {
                    let text = std::fs::read_to_string(&corpus).with_context(|| format!("reading {}", corpus.display()))?;
                    let tables = NormalisationTables::builtin();
                    let sentences = text
                        .lines()
                        .filter(|l| !l.trim().is_empty())
                        .map(|l| normalise(&clean_corpus(l), &tables))
                        .collect::<Result<Vec<_>, _>>()?;
                    RestorerHandle::Classifier(Arc::new(LexiconTagger::train(&sentences)))
                }
                (None, Some(mut argv)) => {
                    let program = argv.remove(0);
                    RestorerHandle::Subprocess(EngineCommand::new(program, argv))
                }
                (None, None) => RestorerHandle::Identity,
            };
            let text = read_input(&io)?;
            let inputs = text
                .lines()
                .enumerate()
                .map(|(n, l)| PlainInput::new(l).with_context(|| format!("line {}", n + 1)))
                .collect::<Result<Vec<_>>>()?;
            let out: Vec<String> = restore_batch(&inputs, &engine)?.into_iter().map(RichTranscript::into_string).collect();
            write_output(&io, &out)
        }
    }
}
