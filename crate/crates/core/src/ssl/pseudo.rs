//! Directory-level lattice processing: rescoring and pseudo-labelling.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::lattice::{Lattice, LatticeError};
use super::manifest::{ManifestError, ManifestRecord, Origin, TrainingManifest};
use super::ngram::NGramModel;

pub const LATTICE_EXT: &str = "lat";

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedLattice {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelReport {
    pub manifest: TrainingManifest,
    pub skipped: Vec<SkippedLattice>,
}

/// Lattice files (`*.lat`) in `dir`, sorted by file name.
pub fn lattice_files(dir: &Path) -> io::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == LATTICE_EXT) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn load(path: &Path) -> Result<Lattice, String> {
    let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
    Lattice::parse(&text).map_err(|e| e.to_string())
}

fn utt_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Rescores every lattice in `dir` and takes its best path as the pseudo
/// transcript. Files that fail to parse or have no path are skipped and
/// reported. The audio path comes from the lattice's `audio=` header field,
/// else `<audio_dir>/<utt_id>.wav`, else `<utt_id>.wav`.
pub fn pseudo_label(
    dir: &Path,
    lm: &NGramModel,
    lm_scale: f64,
    audio_dir: Option<&Path>,
) -> io::Result<Result<PseudoLabelReport, ManifestError>> {
    let files = lattice_files(dir)?;
    let results: Vec<Result<ManifestRecord, SkippedLattice>> = files
        .par_iter()
        .map(|path| {
            let skip = |reason: String| SkippedLattice { path: path.clone(), reason };
            let lat = load(path).map_err(skip)?;
            let words = lat
                .rescore(lm, lm_scale)
                .and_then(|r| r.best_path())
                .map_err(|e: LatticeError| skip(e.to_string()))?;
            let id = utt_id(path);
            let audio_path = match (lat.attr("audio"), audio_dir) {
                (Some(a), _) => a.to_string(),
                (None, Some(d)) => d.join(format!("{id}.wav")).to_string_lossy().into_owned(),
                (None, None) => format!("{id}.wav"),
            };
            Ok(ManifestRecord { utt_id: id, audio_path, transcript: words.join(" "), weight: 1.0, origin: Origin::Pseudo })
        })
        .collect();

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(s) => skipped.push(s),
        }
    }
    Ok(TrainingManifest::new(records).map(|manifest| PseudoLabelReport { manifest, skipped }))
}

/// Rescores every lattice in `dir` into `out_dir` under the same file name.
/// Returns the number written and the skipped files.
pub fn rescore_dir(dir: &Path, out_dir: &Path, lm: &NGramModel, lm_scale: f64) -> io::Result<(usize, Vec<SkippedLattice>)> {
    let files = lattice_files(dir)?;
    fs::create_dir_all(out_dir)?;
    let results: Vec<io::Result<Option<SkippedLattice>>> = files
        .par_iter()
        .map(|path| {
            let rescored = load(path).and_then(|lat| lat.rescore(lm, lm_scale).map_err(|e| e.to_string()));
            match rescored {
                Ok(lat) => {
                    fs::write(out_dir.join(path.file_name().unwrap()), lat.to_string())?;
                    Ok(None)
                }
                Err(reason) => Ok(Some(SkippedLattice { path: path.clone(), reason })),
            }
        })
        .collect();
    let mut written = 0;
    let mut skipped = Vec::new();
    for r in results {
        match r? {
            None => written += 1,
            Some(s) => skipped.push(s),
        }
    }
    Ok((written, skipped))
}
