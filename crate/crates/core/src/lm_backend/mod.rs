//! Uniform scoring interface over language models.
//!
//! Every backend reports per-token probabilities and ranks in causal or
//! masked mode, next-token distributions, and first-sub-token candidate
//! probabilities. [`MockBackend`] is a deterministic table-driven model;
//! [`RemoteBackend`] speaks the inference sidecar's HTTP protocol.

mod mock;
pub(crate) mod remote;

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::corpus::{TokenId, TokenSeq};
use crate::error::{Error, Result};

pub use mock::{MockBackend, MockModelTable};
pub use remote::{wire, RemoteBackend, RemoteMeta};

/// Tolerance on the total mass of a [`Distribution`].
pub const MASS_TOLERANCE: f64 = 1e-9;

/// A next-token probability vector indexed by token id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    /// Validates non-negativity, finiteness and unit mass (within 1e-9).
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("distribution", "empty probability vector"));
        }
        if let Some((i, p)) = probs.iter().enumerate().find(|(_, p)| !p.is_finite() || **p < 0.0) {
            return Err(Error::invalid("distribution", format!("entry {i} is {p}")));
        }
        let mass: f64 = probs.iter().sum();
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::invalid("distribution", format!("mass {mass} is not 1")));
        }
        Ok(Distribution { probs })
    }

    /// Normalizes non-negative weights to unit mass.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) || weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::invalid("distribution", "weights must be finite, non-negative, not all zero"));
        }
        Ok(Distribution {
            probs: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn uniform(vocab_size: usize) -> Self {
        assert!(vocab_size > 0, "vocab_size must be positive");
        Distribution {
            probs: vec![1.0 / vocab_size as f64; vocab_size],
        }
    }

    pub fn one_hot(vocab_size: usize, id: TokenId) -> Self {
        let mut probs = vec![0.0; vocab_size];
        probs[id as usize] = 1.0;
        Distribution { probs }
    }

    pub fn vocab_size(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    pub fn prob(&self, id: TokenId) -> f64 {
        self.probs.get(id as usize).copied().unwrap_or(0.0)
    }

    /// 1-based rank of `id`: descending probability, ties by ascending id.
    pub fn rank_of(&self, id: TokenId) -> u32 {
        let i = id as usize;
        let p = self.probs[i];
        let ahead = self
            .probs
            .iter()
            .enumerate()
            .filter(|&(j, &q)| q > p || (q == p && j < i))
            .count();
        ahead as u32 + 1
    }

    /// Token ids in rank order (descending probability, ascending id).
    pub fn rank_order(&self) -> Vec<TokenId> {
        let mut order: Vec<TokenId> = (0..self.probs.len() as TokenId).collect();
        order.sort_by(|&a, &b| {
            self.probs[b as usize]
                .total_cmp(&self.probs[a as usize])
                .then(a.cmp(&b))
        });
        order
    }

    /// Highest-probability token, lowest id on ties.
    pub fn argmax(&self) -> TokenId {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best as TokenId
    }

    pub fn support(&self) -> Vec<TokenId> {
        (0..self.probs.len() as TokenId)
            .filter(|&i| self.probs[i as usize] > 0.0)
            .collect()
    }

    pub fn score(&self, id: TokenId) -> TokenScore {
        TokenScore {
            token: id,
            prob: self.prob(id),
            rank: self.rank_of(id),
        }
    }
}

impl TryFrom<Vec<f64>> for Distribution {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Distribution::new(v)
    }
}

impl From<Distribution> for Vec<f64> {
    fn from(d: Distribution) -> Self {
        d.probs
    }
}

/// Probability and rank of one observed token.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenScore {
    pub token: TokenId,
    pub prob: f64,
    /// 1 = most probable token at this position.
    pub rank: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoringMode {
    /// Token t is scored from tokens before t.
    Causal,
    /// Token t is scored from every other token (one position masked at a time).
    Masked,
}

impl fmt::Display for ScoringMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoringMode::Causal => "causal",
            ScoringMode::Masked => "masked",
        })
    }
}

/// A language model that can score text. Implementations are read-only
/// after construction and safe to share across threads.
pub trait LanguageModel: Send + Sync {
    fn vocab_size(&self) -> usize;

    /// Scoring modes this backend can serve.
    fn modes(&self) -> Vec<ScoringMode>;

    fn supports(&self, mode: ScoringMode) -> bool {
        self.modes().contains(&mode)
    }

    /// One score per token. Position 0 in causal mode is scored against the
    /// unconditional (start-of-text) distribution.
    fn score_ids(&self, tokens: &[TokenId], mode: ScoringMode) -> Result<Vec<TokenScore>>;

    /// `p(next | prefix)`; an empty prefix yields the start-of-text distribution.
    fn next_token_distribution(&self, prefix: &[TokenId]) -> Result<Distribution>;

    /// Probability of the first sub-token of `candidate` placed at the word
    /// occupying `span` (token indices).
    fn candidate_probability_ids(
        &self,
        tokens: &[TokenId],
        span: Range<usize>,
        candidate: &str,
        mode: ScoringMode,
    ) -> Result<f64>;

    /// Designated end-of-text token, if the model has one.
    fn end_token(&self) -> Option<TokenId> {
        None
    }

    /// Fixed-dimension text embedding, for backends that offer one.
    fn embed(&self, _text: &str) -> Result<Vec<f64>> {
        Err(Error::Capability(format!("{} has no embedding endpoint", self.describe())))
    }

    /// Short human-readable identity used in error messages and provenance.
    fn describe(&self) -> String;
}

pub(crate) fn check_ids(tokens: &[TokenId], vocab_size: usize) -> Result<()> {
    match tokens.iter().find(|&&t| t as usize >= vocab_size) {
        Some(t) => Err(Error::Contract(format!(
            "token id {t} out of range for vocabulary of size {vocab_size}"
        ))),
        None => Ok(()),
    }
}

/// Scores every token of a non-empty sequence.
pub fn score_tokens(lm: &dyn LanguageModel, seq: &TokenSeq, mode: ScoringMode) -> Result<Vec<TokenScore>> {
    if seq.is_empty() {
        return Err(Error::Precondition("cannot score an empty token sequence".into()));
    }
    if !lm.supports(mode) {
        return Err(Error::Capability(format!("{} cannot score in {mode} mode", lm.describe())));
    }
    lm.score_ids(&seq.ids(), mode)
}

/// Probability of `candidate` at word span `word_span_index` of `seq`.
pub fn candidate_probability(
    lm: &dyn LanguageModel,
    seq: &TokenSeq,
    word_span_index: usize,
    candidate: &str,
    mode: ScoringMode,
) -> Result<f64> {
    let span = seq.word_spans.get(word_span_index).ok_or_else(|| {
        Error::Precondition(format!(
            "word span {word_span_index} out of range ({} spans)",
            seq.word_spans.len()
        ))
    })?;
    if candidate.trim().is_empty() {
        return Err(Error::Precondition("empty candidate".into()));
    }
    lm.candidate_probability_ids(&seq.ids(), span.tokens.clone(), candidate, mode)
}
