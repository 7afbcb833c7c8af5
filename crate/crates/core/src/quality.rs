//! Reference-free linguistic quality: grammaticality from model perplexity,
//! non-redundancy from pairwise sentence overlap, focus from adjacent
//! sentence similarity. Scores are only comparable under the same scorer.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{segment_words, split_sentences, Document, Tokenizer, DEFAULT_WINDOW};
use crate::error::{Error, Result};
use crate::lexsem::{sentence_similarity, SentenceEncoder};
use crate::lm_backend::{score_tokens, LanguageModel, ScoringMode};

/// Temperature of the perplexity mapping `exp(−ℓ/τ)`.
pub const PERPLEXITY_TAU: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityScore {
    pub grammaticality: f64,
    pub non_redundancy: f64,
    pub focus: f64,
    pub aggregate: f64,
}

impl QualityScore {
    pub fn from_parts(grammaticality: f64, non_redundancy: f64, focus: f64) -> Self {
        QualityScore {
            grammaticality,
            non_redundancy,
            focus,
            aggregate: (grammaticality + non_redundancy + focus) / 3.0,
        }
    }
}

/// Maps a mean negative log-likelihood to (0, 1].
pub fn perplexity_score(mean_nll: f64) -> f64 {
    (-mean_nll.max(0.0) / PERPLEXITY_TAU).exp()
}

/// Mean per-token negative log-probability under `lm`, over the first
/// `window` tokens. Zero-probability tokens give an infinite loss (score 0).
pub fn mean_nll(doc: &Document, lm: &dyn LanguageModel, tokenizer: &Tokenizer, window: usize, mode: ScoringMode) -> Result<f64> {
    let seq = tokenizer.tokenize(&doc.text).truncate_to_window(window);
    if seq.is_empty() {
        return Err(Error::Precondition(format!("document {} has no tokens", doc.id)));
    }
    let scores = score_tokens(lm, &seq, mode)?;
    Ok(scores.iter().map(|s| -s.prob.ln()).sum::<f64>() / scores.len() as f64)
}

pub fn grammaticality(doc: &Document, lm: &dyn LanguageModel, tokenizer: &Tokenizer, window: usize) -> Result<f64> {
    let mode = preferred_mode(lm);
    Ok(perplexity_score(mean_nll(doc, lm, tokenizer, window, mode)?))
}

fn preferred_mode(lm: &dyn LanguageModel) -> ScoringMode {
    if lm.supports(ScoringMode::Causal) {
        ScoringMode::Causal
    } else {
        ScoringMode::Masked
    }
}

fn lower_words(s: &str) -> Vec<String> {
    segment_words(s).into_iter().map(|r| s[r].to_lowercase()).collect()
}

fn longest_common_run<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut best = 0;
    for x in a {
        let mut cur = vec![0usize; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            if x == y {
                cur[j + 1] = prev[j] + 1;
                best = best.max(cur[j + 1]);
            }
        }
        prev = cur;
    }
    best
}

/// The four overlap penalties for one sentence pair, each in [0, 1]:
/// longest common substring over the shorter length, longest common word
/// run over the shorter word count, one minus normalized edit distance,
/// and shared distinct words over the smaller distinct-word count.
pub fn redundancy_features(a: &str, b: &str) -> [f64; 4] {
    let (a, b) = (a.to_lowercase(), b.to_lowercase());
    let ca: Vec<char> = a.chars().collect();
    let cb: Vec<char> = b.chars().collect();
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };

    let substring = ratio(longest_common_run(&ca, &cb), ca.len().min(cb.len()));

    let (wa, wb) = (lower_words(&a), lower_words(&b));
    let word_run = ratio(longest_common_run(&wa, &wb), wa.len().min(wb.len()));

    let max_len = ca.len().max(cb.len());
    let edit = if max_len == 0 {
        1.0
    } else {
        1.0 - strsim::levenshtein(&a, &b) as f64 / max_len as f64
    };

    let mut sa = wa.clone();
    sa.sort();
    sa.dedup();
    let mut sb = wb.clone();
    sb.sort();
    sb.dedup();
    let shared = sa.iter().filter(|w| sb.binary_search(w).is_ok()).count();
    let shared_frac = ratio(shared, sa.len().min(sb.len()));

    [substring, word_run, edit, shared_frac]
}

/// Penalty of one pair: the largest of its four features.
pub fn pair_penalty(a: &str, b: &str) -> f64 {
    redundancy_features(a, b).into_iter().fold(0.0, f64::max)
}

/// `1 − max pair penalty` over all sentence pairs; 1 for a single sentence.
pub fn non_redundancy(doc: &Document) -> Result<f64> {
    let sentences = split_sentences(&doc.text);
    if sentences.is_empty() {
        return Err(Error::Precondition(format!("document {} has no sentences", doc.id)));
    }
    let mut worst: f64 = 0.0;
    for i in 0..sentences.len() {
        for j in i + 1..sentences.len() {
            worst = worst.max(pair_penalty(&sentences[i], &sentences[j]));
        }
    }
    Ok((1.0 - worst).clamp(0.0, 1.0))
}

/// Mean of `max(0, similarity)` over adjacent sentences; 1 for a single sentence.
pub fn focus(doc: &Document, encoder: &SentenceEncoder) -> Result<f64> {
    let sentences = split_sentences(&doc.text);
    if sentences.is_empty() {
        return Err(Error::Precondition(format!("document {} has no sentences", doc.id)));
    }
    if sentences.len() == 1 {
        return Ok(1.0);
    }
    let mut total = 0.0;
    for pair in sentences.windows(2) {
        total += sentence_similarity(&pair[0], &pair[1], encoder)?.max(0.0);
    }
    Ok((total / (sentences.len() - 1) as f64).clamp(0.0, 1.0))
}

/// Bundles what the three sub-scores need.
#[derive(Clone)]
pub struct QualityScorer {
    pub lm: Arc<dyn LanguageModel>,
    pub tokenizer: Tokenizer,
    pub encoder: SentenceEncoder,
    pub window: usize,
}

impl QualityScorer {
    pub fn new(lm: Arc<dyn LanguageModel>, tokenizer: Tokenizer, encoder: SentenceEncoder) -> Self {
        QualityScorer {
            lm,
            tokenizer,
            encoder,
            window: DEFAULT_WINDOW,
        }
    }

    pub fn score(&self, doc: &Document) -> Result<QualityScore> {
        let g = grammaticality(doc, self.lm.as_ref(), &self.tokenizer, self.window)?;
        let n = non_redundancy(doc)?;
        let f = focus(doc, &self.encoder)?;
        Ok(QualityScore::from_parts(g, n, f))
    }
}
