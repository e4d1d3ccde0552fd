use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::MetricError;

pub const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuReport {
    /// 0 to 100.
    pub score: f64,
    /// Precision per order 1..=4 after smoothing; `None` for orders with no
    /// candidate n-grams anywhere in the corpus, which are left out of the
    /// geometric mean.
    pub precisions: [Option<f64>; MAX_ORDER],
    pub matches: [usize; MAX_ORDER],
    pub totals: [usize; MAX_ORDER],
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
}

fn ngrams<'a, 'b>(tokens: &'b [&'a str], n: usize) -> HashMap<&'b [&'a str], usize> {
    let mut m = HashMap::new();
    for w in tokens.windows(n) {
        *m.entry(w).or_insert(0) += 1;
    }
    m
}

/// Corpus BLEU over whitespace tokens. `refs[i]` holds the references of
/// hypothesis `i`. Matches are clipped by the maximum count over that
/// sentence's references; the reference length is the closest one (the
/// shorter on ties). Orders n >= 2 with no matches get precision
/// 1/(2 * candidate count).
pub fn corpus_bleu<H: AsRef<str>, R: AsRef<str>>(hyps: &[H], refs: &[Vec<R>]) -> Result<BleuReport, MetricError> {
    if hyps.is_empty() {
        return Err(MetricError::EmptyHypothesisCorpus);
    }
    if hyps.len() != refs.len() {
        return Err(MetricError::LengthMismatch { reference: refs.len(), hypothesis: hyps.len() });
    }
    let mut matches = [0usize; MAX_ORDER];
    let mut totals = [0usize; MAX_ORDER];
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);

    for (index, (hyp, rs)) in hyps.iter().zip(refs).enumerate() {
        if rs.is_empty() {
            return Err(MetricError::NoReference { index });
        }
        let h: Vec<&str> = hyp.as_ref().split_whitespace().collect();
        let rtoks: Vec<Vec<&str>> = rs.iter().map(|r| r.as_ref().split_whitespace().collect()).collect();
        hyp_len += h.len();
        ref_len += rtoks
            .iter()
            .map(|r| r.len())
            .min_by_key(|&l| (l.abs_diff(h.len()), l))
            .unwrap();
        for n in 1..=MAX_ORDER {
            let cand = ngrams(&h, n);
            let ref_counts: Vec<HashMap<&[&str], usize>> = rtoks.iter().map(|r| ngrams(r, n)).collect();
            for (gram, &count) in &cand {
                let max_ref = ref_counts.iter().map(|rc| rc.get(gram).copied().unwrap_or(0)).max().unwrap_or(0);
                matches[n - 1] += count.min(max_ref);
                totals[n - 1] += count;
            }
        }
    }

    let mut precisions = [None; MAX_ORDER];
    for n in 0..MAX_ORDER {
        if totals[n] == 0 {
            continue;
        }
        let p = if matches[n] == 0 && n >= 1 {
            1.0 / (2.0 * totals[n] as f64)
        } else {
            matches[n] as f64 / totals[n] as f64
        };
        precisions[n] = Some(p);
    }
    let brevity_penalty = if hyp_len == 0 {
        0.0
    } else if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };
    let used: Vec<f64> = precisions.iter().flatten().copied().collect();
    let score = if used.is_empty() || used.contains(&0.0) {
        0.0
    } else {
        let log_mean = used.iter().map(|p| p.ln()).sum::<f64>() / used.len() as f64;
        100.0 * brevity_penalty * log_mean.exp()
    };
    Ok(BleuReport { score, precisions, matches, totals, brevity_penalty, hyp_len, ref_len })
}

/// BLEU of one hypothesis against its references.
pub fn bleu<R: AsRef<str>>(refs: &[R], hyp: &str) -> Result<BleuReport, MetricError> {
    corpus_bleu(&[hyp], &[refs.iter().map(|r| r.as_ref()).collect::<Vec<_>>()])
}
