mod cpr;
mod score;
mod serve;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use scribe_core::ssl::{build_semisup_manifest, pseudo_label, rescore_dir, NGramModel, SkippedLattice, TrainingManifest};

#[derive(Parser)]
#[command(name = "scribe", version, about = "Long-form transcription toolbox and server")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an n-gram language model on a text corpus, one sentence per line.
    LmTrain {
        #[arg(long, default_value_t = 3)]
        order: usize,
        corpus: PathBuf,
        out: PathBuf,
    },
    /// Rescore every lattice in a directory with a language model.
    Rescore {
        #[arg(long)]
        scale: f64,
        lat_dir: PathBuf,
        lm: PathBuf,
        /// Output directory; defaults to `<lat-dir>.rescored`.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Take the best path of every rescored lattice as a pseudo transcript.
    PseudoLabel {
        lat_dir: PathBuf,
        lm: PathBuf,
        #[arg(long)]
        scale: f64,
        #[arg(short, long)]
        out: PathBuf,
        /// Directory holding `<utt_id>.wav` for lattices without an audio header.
        #[arg(long)]
        audio_dir: Option<PathBuf>,
    },
    /// Merge supervised and pseudo-labelled manifests with equal weights.
    Combine {
        supervised: PathBuf,
        pseudo: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Text cleaning, normalisation and restoration steps.
    Cpr {
        #[command(subcommand)]
        step: cpr::Step,
    },
    /// Score a hypothesis file against a reference file, line by line.
    Score {
        #[arg(long, value_enum)]
        metric: score::Metric,
        reference: PathBuf,
        hypothesis: PathBuf,
    },
    /// Run the transcription HTTP service.
    Serve(serve::ServeArgs),
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_lm(path: &Path) -> Result<NGramModel> {
    NGramModel::from_text(&read(path)?).with_context(|| format!("loading {}", path.display()))
}

fn load_manifest(path: &Path) -> Result<TrainingManifest> {
    TrainingManifest::parse_jsonl(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn report_skipped(skipped: &[SkippedLattice]) {
    for s in skipped {
        eprintln!("skipped {}: {}", s.path.display(), s.reason);
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::LmTrain { order, corpus, out } => {
            let text = read(&corpus)?;
            let lm = NGramModel::train(text.lines().filter(|l| !l.trim().is_empty()), order)?;
            write(&out, &lm.to_text())?;
            eprintln!("{}-gram model, {} words in vocabulary", order, lm.vocab().len());
        }
        Command::Rescore { scale, lat_dir, lm, out } => {
            let out = out.unwrap_or_else(|| {
                let mut name = lat_dir.as_os_str().to_owned();
                name.push(".rescored");
                PathBuf::from(name)
            });
            let (written, skipped) = rescore_dir(&lat_dir, &out, &load_lm(&lm)?, scale)?;
            report_skipped(&skipped);
            eprintln!("{written} lattices written to {}", out.display());
        }
        Command::PseudoLabel { lat_dir, lm, scale, out, audio_dir } => {
            let report = pseudo_label(&lat_dir, &load_lm(&lm)?, scale, audio_dir.as_deref())??;
            report_skipped(&report.skipped);
            write(&out, &report.manifest.to_jsonl())?;
            eprintln!("{} pseudo transcripts", report.manifest.len());
        }
        Command::Combine { supervised, pseudo, out } => {
            let combined = build_semisup_manifest(&load_manifest(&supervised)?, &load_manifest(&pseudo)?)?;
            write(&out, &combined.to_jsonl())?;
            eprintln!("{} records", combined.len());
        }
        Command::Cpr { step } => cpr::run(step)?,
        Command::Score { metric, reference, hypothesis } => {
            let report = score::run(metric, &read(&reference)?, &read(&hypothesis)?)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Serve(args) => {
            if args.media_workers == 0 || args.recognition_workers == 0 {
                bail!("worker counts must be at least 1");
            }
            serve::run(args)?
        }
    }
    Ok(())
}
