//! Word lattices: a DAG of scored word arcs between a start and end node.
//!
//! File format (one lattice per file):
//!
//! ```text
//! LAT v1 start=0 end=3 [key=value ...]
//! 0 1 dia -1.5 -2.0
//! 1 3 duit -0.7 -1.1
//! ```
//!
//! Arc lines are `<from> <to> <word> <am> <lm>` with log-domain scores.
//! The word `<eps>` contributes no token. Blank lines and lines starting
//! with `#` are ignored.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use super::ngram::NGramModel;

pub const EPSILON: &str = "<eps>";
const HEADER_MAGIC: &str = "LAT v1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
    #[error("no path from start to end")]
    NoPath,
}

fn invalid(msg: impl Into<String>) -> LatticeError {
    LatticeError::InvalidLattice(msg.into())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeArc {
    pub from: u32,
    pub to: u32,
    pub word: String,
    pub am_score: f64,
    pub lm_score: f64,
}

impl LatticeArc {
    pub fn new(from: u32, to: u32, word: impl Into<String>, am_score: f64, lm_score: f64) -> Self {
        Self { from, to, word: word.into(), am_score, lm_score }
    }

    pub fn score(&self) -> f64 {
        self.am_score + self.lm_score
    }

    pub fn is_epsilon(&self) -> bool {
        self.word == EPSILON
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    start: u32,
    end: u32,
    arcs: Vec<LatticeArc>,
    /// Extra `key=value` header fields, e.g. `audio=...`.
    attrs: BTreeMap<String, String>,
}

/// Best path through a lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct BestPath {
    pub words: Vec<String>,
    pub score: f64,
}

impl Lattice {
    /// Validates and builds a lattice: scores finite, graph acyclic, and
    /// every arc on some start-to-end path.
    pub fn new(start: u32, end: u32, arcs: Vec<LatticeArc>) -> Result<Self, LatticeError> {
        let lat = Self { start, end, arcs, attrs: BTreeMap::new() };
        lat.validate()?;
        Ok(lat)
    }

    pub fn start(&self) -> u32 {
        self.start
    }

    pub fn end(&self) -> u32 {
        self.end
    }

    pub fn arcs(&self) -> &[LatticeArc] {
        &self.arcs
    }

    pub fn attr(&self, key: &str) -> Option<&str> {
        self.attrs.get(key).map(String::as_str)
    }

    pub fn set_attr(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.attrs.insert(key.into(), value.into());
    }

    pub fn nodes(&self) -> Vec<u32> {
        let mut nodes: Vec<u32> = self.arcs.iter().flat_map(|a| [a.from, a.to]).chain([self.start, self.end]).collect();
        nodes.sort_unstable();
        nodes.dedup();
        nodes
    }

    fn validate(&self) -> Result<(), LatticeError> {
        for (i, a) in self.arcs.iter().enumerate() {
            if !a.am_score.is_finite() || !a.lm_score.is_finite() {
                return Err(invalid(format!("arc {i} has a non-finite score")));
            }
            if a.word.is_empty() || a.word.chars().any(char::is_whitespace) {
                return Err(invalid(format!("arc {i} has an empty or multi-word label")));
            }
        }
        let order = self.topological_order()?;
        if order.len() != self.nodes().len() {
            return Err(invalid("graph contains a cycle"));
        }
        let from_start = self.reachable(self.start, |a| (a.from, a.to));
        let to_end = self.reachable(self.end, |a| (a.to, a.from));
        for (i, a) in self.arcs.iter().enumerate() {
            if !from_start.contains(&a.from) || !to_end.contains(&a.to) {
                return Err(invalid(format!("arc {i} ({} -> {}) is not on any start-to-end path", a.from, a.to)));
            }
        }
        Ok(())
    }

    fn reachable(&self, origin: u32, dir: impl Fn(&LatticeArc) -> (u32, u32)) -> HashSet<u32> {
        let mut adj: HashMap<u32, Vec<u32>> = HashMap::new();
        for a in &self.arcs {
            let (x, y) = dir(a);
            adj.entry(x).or_default().push(y);
        }
        let mut seen = HashSet::from([origin]);
        let mut stack = vec![origin];
        while let Some(n) = stack.pop() {
            for &m in adj.get(&n).into_iter().flatten() {
                if seen.insert(m) {
                    stack.push(m);
                }
            }
        }
        seen
    }

    /// Kahn's algorithm, smallest node id first among ready nodes. Returns a
    /// shorter list than `nodes()` when the graph has a cycle.
    fn topological_order(&self) -> Result<Vec<u32>, LatticeError> {
        let nodes = self.nodes();
        let mut indegree: HashMap<u32, usize> = nodes.iter().map(|&n| (n, 0)).collect();
        let mut out: HashMap<u32, Vec<usize>> = HashMap::new();
        for (i, a) in self.arcs.iter().enumerate() {
            *indegree.get_mut(&a.to).unwrap() += 1;
            out.entry(a.from).or_default().push(i);
        }
        let mut ready: BinaryHeap<Reverse<u32>> =
            indegree.iter().filter(|(_, &d)| d == 0).map(|(&n, _)| Reverse(n)).collect();
        let mut order = Vec::with_capacity(nodes.len());
        while let Some(Reverse(n)) = ready.pop() {
            order.push(n);
            for &ai in out.get(&n).into_iter().flatten() {
                let d = indegree.get_mut(&self.arcs[ai].to).unwrap();
                *d -= 1;
                if *d == 0 {
                    ready.push(Reverse(self.arcs[ai].to));
                }
            }
        }
        Ok(order)
    }

    /// Highest-scoring path by total `am + lm`. Among equal-scoring paths
    /// the lexicographically smallest word sequence wins.
    ///
    /// Runs backwards from the end node: each node keeps its best suffix
    /// score, and the smallest word sequence over the arcs achieving it.
    /// Prepending a word preserves lexicographic order, so the per-node
    /// choice is globally correct.
    pub fn best_path_scored(&self) -> Result<BestPath, LatticeError> {
        if self.start == self.end {
            return Ok(BestPath { words: Vec::new(), score: 0.0 });
        }
        let order = self.topological_order()?;
        let mut outgoing: HashMap<u32, Vec<&LatticeArc>> = HashMap::new();
        for a in &self.arcs {
            outgoing.entry(a.from).or_default().push(a);
        }
        let mut best: HashMap<u32, (f64, Vec<String>)> = HashMap::from([(self.end, (0.0, Vec::new()))]);
        for &node in order.iter().rev() {
            if node == self.end {
                continue;
            }
            let mut choice: Option<(f64, Vec<String>)> = None;
            for arc in outgoing.get(&node).into_iter().flatten() {
                let Some((suffix_score, suffix)) = best.get(&arc.to) else { continue };
                let score = arc.score() + suffix_score;
                let better = match &choice {
                    None => true,
                    Some((s, _)) if score > *s => true,
                    Some((s, words)) if score == *s => {
                        let cand = arc.is_epsilon().then_some(None).unwrap_or(Some(&arc.word));
                        cand.into_iter().chain(suffix.iter()).lt(words.iter())
                    }
                    _ => false,
                };
                if better {
                    let mut words = Vec::with_capacity(suffix.len() + 1);
                    if !arc.is_epsilon() {
                        words.push(arc.word.clone());
                    }
                    words.extend(suffix.iter().cloned());
                    choice = Some((score, words));
                }
            }
            if let Some(c) = choice {
                best.insert(node, c);
            }
        }
        best.remove(&self.start)
            .map(|(score, words)| BestPath { words, score })
            .ok_or(LatticeError::NoPath)
    }

    pub fn best_path(&self) -> Result<Vec<String>, LatticeError> {
        self.best_path_scored().map(|p| p.words)
    }

    /// Replaces every arc's LM score with `lm_scale * ln P(word | history)`
    /// under `lm`, where the history is exact up to the model order.
    ///
    /// Nodes reached by more than one distinct history are split so each
    /// node carries a single history; the first history to reach a node
    /// keeps the original id, later ones get fresh ids. Arcs into the end
    /// node also carry the `</s>` transition. AM scores are untouched and
    /// arcs come out ordered by (from, to), so re-running on the output
    /// with the same model and scale reproduces it.
    pub fn rescore(&self, lm: &NGramModel, lm_scale: f64) -> Result<Lattice, LatticeError> {
        if !(lm_scale.is_finite() && lm_scale >= 0.0) {
            return Err(invalid(format!("lm scale {lm_scale} must be finite and non-negative")));
        }
        let keep = lm.order() - 1;
        let truncate = |mut h: Vec<u32>| {
            if h.len() > keep {
                h.drain(..h.len() - keep);
            }
            h
        };
        let order = self.topological_order()?;
        let mut outgoing: HashMap<u32, Vec<&LatticeArc>> = HashMap::new();
        for a in &self.arcs {
            outgoing.entry(a.from).or_default().push(a);
        }

        let mut next_id = self.nodes().last().map_or(0, |&m| m + 1);
        // Per original node: (history, new id) in creation order.
        let mut states: HashMap<u32, Vec<(Vec<u32>, u32)>> = HashMap::new();
        states.insert(self.start, vec![(truncate(vec![NGramModel::bos_id()]), self.start)]);
        let mut arcs = Vec::with_capacity(self.arcs.len());

        for &node in &order {
            let Some(node_states) = states.get(&node).cloned() else { continue };
            for (history, state_id) in node_states {
                for arc in outgoing.get(&node).into_iter().flatten() {
                    let (next_history, mut logp) = if arc.is_epsilon() {
                        (history.clone(), 0.0)
                    } else {
                        let w = lm.word_id(&arc.word);
                        let mut h = history.clone();
                        h.push(w);
                        (truncate(h), lm.log_prob_ids(w, &history))
                    };
                    let target = if arc.to == self.end {
                        logp += lm.log_prob_ids(NGramModel::eos_id(), &next_history);
                        self.end
                    } else {
                        let slot = states.entry(arc.to).or_default();
                        match slot.iter().find(|(h, _)| *h == next_history) {
                            Some(&(_, id)) => id,
                            None => {
                                let id = if slot.is_empty() {
                                    arc.to
                                } else {
                                    next_id += 1;
                                    next_id - 1
                                };
                                slot.push((next_history, id));
                                id
                            }
                        }
                    };
                    arcs.push(LatticeArc {
                        from: state_id,
                        to: target,
                        word: arc.word.clone(),
                        am_score: arc.am_score,
                        lm_score: lm_scale * logp,
                    });
                }
            }
        }
        arcs.sort_by_key(|a| (a.from, a.to));
        let mut out = Lattice::new(self.start, self.end, arcs)?;
        out.attrs = self.attrs.clone();
        Ok(out)
    }

    pub fn parse(text: &str) -> Result<Self, LatticeError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (_, header) = lines.next().ok_or_else(|| invalid("empty lattice file"))?;
        let fields = header
            .strip_prefix(HEADER_MAGIC)
            .ok_or_else(|| invalid(format!("header must start with '{HEADER_MAGIC}'")))?;
        let mut attrs: BTreeMap<String, String> = BTreeMap::new();
        for f in fields.split_whitespace() {
            let (k, v) = f.split_once('=').ok_or_else(|| invalid(format!("bad header field {f:?}")))?;
            attrs.insert(k.to_string(), v.to_string());
        }
        let node_attr = |key: &str| -> Result<u32, LatticeError> {
            attrs
                .get(key)
                .ok_or_else(|| invalid(format!("header missing {key}=")))?
                .parse()
                .map_err(|_| invalid(format!("header {key}= is not a node id")))
        };
        let (start, end) = (node_attr("start")?, node_attr("end")?);
        attrs.remove("start");
        attrs.remove("end");

        let mut arcs = Vec::new();
        for (lineno, line) in lines {
            let parts: Vec<&str> = line.split_whitespace().collect();
            let bad = || invalid(format!("line {lineno}: expected '<from> <to> <word> <am> <lm>'"));
            if parts.len() != 5 {
                return Err(bad());
            }
            arcs.push(LatticeArc {
                from: parts[0].parse().map_err(|_| bad())?,
                to: parts[1].parse().map_err(|_| bad())?,
                word: parts[2].to_string(),
                am_score: parts[3].parse().map_err(|_| bad())?,
                lm_score: parts[4].parse().map_err(|_| bad())?,
            });
        }
        let mut lat = Lattice::new(start, end, arcs)?;
        lat.attrs = attrs;
        Ok(lat)
    }
}

impl fmt::Display for Lattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{HEADER_MAGIC} start={} end={}", self.start, self.end)?;
        for (k, v) in &self.attrs {
            write!(f, " {k}={v}")?;
        }
        writeln!(f)?;
        for a in &self.arcs {
            writeln!(f, "{} {} {} {} {}", a.from, a.to, a.word, a.am_score, a.lm_score)?;
        }
        Ok(())
    }
}
