//! Average-linkage agglomerative clustering under cosine distance.

use serde::{Deserialize, Serialize};

use super::{DiariseError, SpeakerEmbedding};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub distance_threshold: f64,
    pub max_speakers: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self { distance_threshold: 0.4, max_speakers: 10 }
    }
}

/// Assigns a speaker label to every embedding.
///
/// Clusters are merged closest-first (ties go to the pair with the lowest
/// indices). Merging continues while the closest pair is within
/// `distance_threshold`, or while there are more than `max_speakers`
/// clusters, and always stops at one cluster. Labels are numbered from 0 in
/// order of first occurrence.
pub fn cluster(embeddings: &[SpeakerEmbedding], cfg: &ClusterConfig) -> Result<Vec<usize>, DiariseError> {
    let n = embeddings.len();
    if n == 0 {
        return Err(DiariseError::EmptyInput);
    }
    let dim = embeddings[0].dim();
    if let Some(bad) = embeddings.iter().find(|e| e.dim() != dim) {
        return Err(DiariseError::DimensionMismatch { expected: dim, found: bad.dim() });
    }
    let max_clusters = cfg.max_speakers.max(1);

    // dist[i][j] holds the average-linkage distance between live clusters
    // i and j (each cluster is named by its lowest member index).
    let mut dist = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = embeddings[i].cosine_distance(&embeddings[j]);
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    let mut size = vec![1usize; n];
    let mut owner: Vec<usize> = (0..n).collect();
    let mut alive: Vec<usize> = (0..n).collect();

    while alive.len() > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for (ai, &i) in alive.iter().enumerate() {
            for &j in &alive[ai + 1..] {
                if best.is_none_or(|(d, _, _)| dist[i][j] < d) {
                    best = Some((dist[i][j], i, j));
                }
            }
        }
        let (d, keep, gone) = best.expect("at least two clusters");
        if d > cfg.distance_threshold && alive.len() <= max_clusters {
            break;
        }
        // Lance-Williams update for average linkage.
        let (sk, sg) = (size[keep] as f64, size[gone] as f64);
        for &k in &alive {
            if k != keep && k != gone {
                let merged = (sk * dist[k][keep] + sg * dist[k][gone]) / (sk + sg);
                dist[k][keep] = merged;
                dist[keep][k] = merged;
            }
        }
        size[keep] += size[gone];
        alive.retain(|&c| c != gone);
        for o in owner.iter_mut() {
            if *o == gone {
                *o = keep;
            }
        }
    }

    Ok(relabel_by_first_occurrence(&owner))
}

/// Maps arbitrary cluster names to `0..k` in order of first appearance.
pub fn relabel_by_first_occurrence<T: PartialEq + Copy>(raw: &[T]) -> Vec<usize> {
    let mut seen: Vec<T> = Vec::new();
    raw.iter()
        .map(|r| match seen.iter().position(|s| s == r) {
            Some(p) => p,
            None => {
                seen.push(*r);
                seen.len() - 1
            }
        })
        .collect()
}
