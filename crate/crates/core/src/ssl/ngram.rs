//! Witten-Bell smoothed n-gram language model.
//!
//! Probabilities are interpolated with the next-lower order down to a
//! uniform distribution over the vocabulary (including `</s>` and `<unk>`):
//!
//! ```text
//! P(w | h) = (c(h, w) + T(h) * P(w | h')) / (c(h) + T(h))
//! ```
//!
//! where `T(h)` is the number of distinct words seen after `h` and `h'` is
//! `h` without its oldest word. Contexts never seen in training back off
//! entirely to `h'`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

const BOS_ID: u32 = 0;
const EOS_ID: u32 = 1;
const UNK_ID: u32 = 2;

const MODEL_MAGIC: &str = "NGRAM v1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NGramError {
    #[error("corpus contains no tokens")]
    EmptyCorpus,
    #[error("model order must be at least 1")]
    InvalidOrder,
    #[error("malformed model file at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextStats {
    total: u64,
    followers: HashMap<u32, u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    order: usize,
    vocab: Vec<String>,
    index: HashMap<String, u32>,
    contexts: HashMap<Vec<u32>, ContextStats>,
}

impl NGramModel {
    fn empty(order: usize) -> Self {
        let mut model = Self { order, vocab: Vec::new(), index: HashMap::new(), contexts: HashMap::new() };
        for w in [BOS, EOS, UNK] {
            model.intern(w);
        }
        model
    }

    fn intern(&mut self, word: &str) -> u32 {
        if let Some(&id) = self.index.get(word) {
            return id;
        }
        let id = self.vocab.len() as u32;
        self.vocab.push(word.to_string());
        self.index.insert(word.to_string(), id);
        id
    }

    fn add(&mut self, context: &[u32], word: u32, count: u64) {
        let stats = self.contexts.entry(context.to_vec()).or_default();
        stats.total += count;
        *stats.followers.entry(word).or_insert(0) += count;
    }

    /// Trains on whitespace-tokenised sentences, one per line. Blank lines
    /// are ignored.
    pub fn train<I, S>(lines: I, order: usize) -> Result<Self, NGramError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if order == 0 {
            return Err(NGramError::InvalidOrder);
        }
        let mut model = Self::empty(order);
        let mut seen_tokens = false;
        for line in lines {
            let mut seq = vec![BOS_ID];
            for tok in line.as_ref().split_whitespace() {
                seq.push(model.intern(tok));
            }
            if seq.len() == 1 {
                continue;
            }
            seen_tokens = true;
            seq.push(EOS_ID);
            for i in 1..seq.len() {
                for k in 0..order.min(i + 1) {
                    let context = seq[i - k..i].to_vec();
                    model.add(&context, seq[i], 1);
                }
            }
        }
        if !seen_tokens {
            return Err(NGramError::EmptyCorpus);
        }
        Ok(model)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Vocabulary including the reserved `<s>`, `</s>` and `<unk>` symbols.
    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    /// Everything that can be predicted: the vocabulary minus `<s>`.
    pub fn predictable(&self) -> impl Iterator<Item = &str> {
        self.vocab.iter().skip(1).map(String::as_str)
    }

    fn id(&self, word: &str) -> u32 {
        self.index.get(word).copied().unwrap_or(UNK_ID)
    }

    /// Raw n-gram count `c(context, word)`.
    pub fn count(&self, context: &[&str], word: &str) -> u64 {
        let ctx: Vec<u32> = context.iter().map(|w| self.id(w)).collect();
        self.contexts.get(&ctx).and_then(|s| s.followers.get(&self.id(word))).copied().unwrap_or(0)
    }

    /// Every context observed in training.
    pub fn contexts(&self) -> Vec<Vec<&str>> {
        self.contexts.keys().map(|c| c.iter().map(|&i| self.vocab[i as usize].as_str()).collect()).collect()
    }

    fn prob_ids(&self, word: u32, context: &[u32]) -> f64 {
        let lower = if context.is_empty() {
            1.0 / (self.vocab.len() - 1) as f64
        } else {
            self.prob_ids(word, &context[1..])
        };
        match self.contexts.get(context) {
            None => lower,
            Some(stats) => {
                let c = stats.followers.get(&word).copied().unwrap_or(0) as f64;
                let types = stats.followers.len() as f64;
                (c + types * lower) / (stats.total as f64 + types)
            }
        }
    }

    fn ids_context(&self, history: &[u32]) -> Vec<u32> {
        let keep = self.order - 1;
        history[history.len().saturating_sub(keep)..].to_vec()
    }

    /// `P(word | history)`; only the last `order - 1` history words are used
    /// and unknown words map to `<unk>`.
    pub fn prob(&self, word: &str, history: &[&str]) -> f64 {
        let hist: Vec<u32> = history.iter().map(|w| self.id(w)).collect();
        self.prob_ids(self.id(word), &self.ids_context(&hist))
    }

    pub fn log_prob(&self, word: &str, history: &[&str]) -> f64 {
        self.prob(word, history).ln()
    }

    pub(crate) fn log_prob_ids(&self, word: u32, history: &[u32]) -> f64 {
        self.prob_ids(word, &self.ids_context(history)).ln()
    }

    pub(crate) fn word_id(&self, word: &str) -> u32 {
        self.id(word)
    }

    pub(crate) const fn bos_id() -> u32 {
        BOS_ID
    }

    pub(crate) const fn eos_id() -> u32 {
        EOS_ID
    }

    /// Natural-log probability of a whole sentence including the `</s>`
    /// transition.
    pub fn score_sequence<S: AsRef<str>>(&self, tokens: &[S]) -> f64 {
        let mut history = vec![BOS_ID];
        let mut total = 0.0;
        for tok in tokens {
            let id = self.id(tok.as_ref());
            total += self.log_prob_ids(id, &history);
            history.push(id);
        }
        total + self.log_prob_ids(EOS_ID, &history)
    }

    /// Serialises counts as text: a header, then `count<TAB>ngram` lines in
    /// sorted order.
    pub fn to_text(&self) -> String {
        let mut lines: BTreeMap<String, u64> = BTreeMap::new();
        for (ctx, stats) in &self.contexts {
            for (&w, &c) in &stats.followers {
                let gram: Vec<&str> = ctx.iter().chain(std::iter::once(&w)).map(|&i| self.vocab[i as usize].as_str()).collect();
                lines.insert(gram.join(" "), c);
            }
        }
        let mut out = format!("{MODEL_MAGIC} order={}\n", self.order);
        for (gram, c) in lines {
            let _ = writeln!(out, "{c}\t{gram}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, NGramError> {
        let mut lines = text.lines().enumerate();
        let header = lines.next().map(|(_, l)| l).unwrap_or("");
        let order = header
            .strip_prefix(MODEL_MAGIC)
            .and_then(|rest| rest.trim().strip_prefix("order="))
            .and_then(|n| n.parse::<usize>().ok())
            .ok_or(NGramError::Parse { line: 1, msg: format!("expected '{MODEL_MAGIC} order=N'") })?;
        if order == 0 {
            return Err(NGramError::InvalidOrder);
        }
        let mut model = Self::empty(order);
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let err = |msg: &str| NGramError::Parse { line: i + 1, msg: msg.to_string() };
            let (count, gram) = line.split_once('\t').ok_or_else(|| err("expected count<TAB>ngram"))?;
            let count: u64 = count.parse().map_err(|_| err("bad count"))?;
            let ids: Vec<u32> = gram.split(' ').map(|w| model.intern(w)).collect();
            if ids.is_empty() || ids.len() > order {
                return Err(err("n-gram longer than model order"));
            }
            let (word, ctx) = ids.split_last().unwrap();
            model.add(ctx, *word, count);
        }
        if model.contexts.is_empty() {
            return Err(NGramError::EmptyCorpus);
        }
        Ok(model)
    }
}
