//! Lexical-semantic services: counter-fitted embedding store with exact
//! cosine k-NN, coarse POS tagging, and sentence similarity.

mod embeddings;
mod pos;

use std::sync::Arc;

pub use embeddings::{nearest_synonyms, EmbeddingStore};
pub use pos::{pos_tag, PosTag, PosTagger};

use crate::corpus::segment_words;
use crate::error::{Error, Result};
use crate::lm_backend::LanguageModel;

/// Default candidate-pool size for synonym extraction.
pub const DEFAULT_MAX_CANDIDATES: usize = 50;
/// Default word-level cosine floor for synonym extraction.
pub const DEFAULT_MIN_COSINE: f64 = 0.7;

/// Sentence vectors: the mean of in-vocabulary word vectors, or a remote
/// `/v1/embed` endpoint.
#[derive(Clone)]
pub enum SentenceEncoder {
    MeanEmbedding(Arc<EmbeddingStore>),
    Remote(Arc<dyn LanguageModel>),
}

impl SentenceEncoder {
    /// Encodes a sentence. Mean-embedding skips out-of-vocabulary words and
    /// returns the zero vector when none are known.
    pub fn encode(&self, text: &str) -> Result<Vec<f64>> {
        match self {
            SentenceEncoder::MeanEmbedding(store) => {
                let mut sum = vec![0.0; store.dim()];
                let mut n = 0usize;
                for r in segment_words(text) {
                    if let Some(v) = store.vector(&text[r]) {
                        sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
                        n += 1;
                    }
                }
                if n > 0 {
                    sum.iter_mut().for_each(|s| *s /= n as f64);
                }
                Ok(sum)
            }
            SentenceEncoder::Remote(lm) => lm.embed(text),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            SentenceEncoder::MeanEmbedding(_) => "mean_embedding",
            SentenceEncoder::Remote(_) => "remote",
        }
    }
}

/// Cosine of two vectors in [−1, 1]; 0 if either is the zero vector.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

pub fn sentence_similarity(a: &str, b: &str, encoder: &SentenceEncoder) -> Result<f64> {
    if a.trim().is_empty() || b.trim().is_empty() {
        return Err(Error::Precondition("sentence similarity of an empty sentence".into()));
    }
    let (va, vb) = (encoder.encode(a)?, encoder.encode(b)?);
    if va.len() != vb.len() {
        return Err(Error::Contract(format!("encoder returned dimensions {} and {}", va.len(), vb.len())));
    }
    Ok(cosine(&va, &vb))
}
