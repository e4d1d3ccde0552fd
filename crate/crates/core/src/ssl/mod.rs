//! Offline tools for semi-supervised training: n-gram LMs, lattice
//! rescoring, best-path pseudo-labels and manifest combination.

mod lattice;
mod manifest;
mod ngram;
mod pseudo;

pub use lattice::{BestPath, Lattice, LatticeArc, LatticeError, EPSILON};
pub use manifest::{build_semisup_manifest, ManifestError, ManifestRecord, Origin, TrainingManifest};
pub use ngram::{NGramError, NGramModel, BOS, EOS, UNK};
pub use pseudo::{lattice_files, pseudo_label, rescore_dir, PseudoLabelReport, SkippedLattice, LATTICE_EXT};
