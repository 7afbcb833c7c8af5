use std::collections::BTreeMap;
use std::fs;
use std::ops::Range;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{check_ids, Distribution, LanguageModel, ScoringMode, TokenScore};
use crate::corpus::{TokenId, Tokenizer, Vocab};
use crate::error::{Error, Result};

/// Table-driven bigram model: a unigram start distribution and per-token
/// successor distributions, falling back to the unigram when a row is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockModelTable {
    pub vocab: Vec<String>,
    pub unigram: Distribution,
    /// Keyed by token id rendered as a decimal string.
    #[serde(default)]
    pub bigram: BTreeMap<String, Distribution>,
    /// Generation stops when this token is drawn.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_token: Option<String>,
}

impl MockModelTable {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let table: MockModelTable =
            serde_json::from_str(&raw).map_err(|e| Error::invalid("mock table", e.to_string()))?;
        table.validate()?;
        Ok(table)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let raw = serde_json::to_string(self)?;
        fs::write(path, raw).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vocab.len();
        if n == 0 {
            return Err(Error::invalid("mock table", "empty vocabulary"));
        }
        if self.unigram.vocab_size() != n {
            return Err(Error::invalid(
                "mock table",
                format!("unigram has {} entries, vocabulary {n}", self.unigram.vocab_size()),
            ));
        }
        for (key, row) in &self.bigram {
            let id: usize = key
                .parse()
                .map_err(|_| Error::invalid("mock table", format!("bigram key {key:?} is not a token id")))?;
            if id >= n {
                return Err(Error::invalid("mock table", format!("bigram key {id} out of range")));
            }
            if row.vocab_size() != n {
                return Err(Error::invalid(
                    "mock table",
                    format!("bigram row {id} has {} entries, vocabulary {n}", row.vocab_size()),
                ));
            }
        }
        if let Some(end) = &self.end_token {
            if !self.vocab.contains(end) {
                return Err(Error::invalid("mock table", format!("end token {end:?} not in vocabulary")));
            }
        }
        Ok(())
    }
}

/// Deterministic in-process backend over a [`MockModelTable`].
///
/// Masked mode is exact for a first-order chain:
/// `p(x_t | rest) ∝ p(x_t | x_{t-1}) · p(x_{t+1} | x_t)`.
#[derive(Debug, Clone)]
pub struct MockBackend {
    unigram: Distribution,
    rows: Vec<Option<Distribution>>,
    end_token: Option<TokenId>,
    tokenizer: Tokenizer,
    modes: Vec<ScoringMode>,
}

impl MockBackend {
    /// Builds a backend whose candidate tokenizer is the whole-word tokenizer
    /// over the table vocabulary.
    pub fn new(table: MockModelTable) -> Result<Self> {
        table.validate()?;
        let vocab = Arc::new(Vocab::new(table.vocab.clone())?);
        let end_token = table.end_token.as_deref().and_then(|t| vocab.id(t));
        let mut rows = vec![None; table.vocab.len()];
        for (key, row) in table.bigram {
            let id: usize = key.parse().expect("validated");
            rows[id] = Some(row);
        }
        Ok(MockBackend {
            unigram: table.unigram,
            rows,
            end_token,
            tokenizer: Tokenizer::word(vocab),
            modes: vec![ScoringMode::Causal, ScoringMode::Masked],
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(MockModelTable::load(path)?)
    }

    /// Replaces the tokenizer used to split candidate words.
    pub fn with_tokenizer(mut self, tokenizer: Tokenizer) -> Result<Self> {
        if tokenizer.vocab().len() != self.rows.len() {
            return Err(Error::Contract(format!(
                "tokenizer vocabulary has {} entries, table {}",
                tokenizer.vocab().len(),
                self.rows.len()
            )));
        }
        self.tokenizer = tokenizer;
        Ok(self)
    }

    /// Restricts the advertised scoring modes.
    pub fn with_modes(mut self, modes: Vec<ScoringMode>) -> Self {
        self.modes = modes;
        self
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    pub fn vocab(&self) -> &[String] {
        self.tokenizer.vocab().tokens()
    }

    fn successor(&self, prev: Option<TokenId>) -> &Distribution {
        prev.and_then(|p| self.rows[p as usize].as_ref())
            .unwrap_or(&self.unigram)
    }

    fn causal_at(&self, tokens: &[TokenId], pos: usize) -> &Distribution {
        self.successor(pos.checked_sub(1).map(|p| tokens[p]))
    }

    /// Masked distribution at `pos` given the left token and an optional
    /// right token.
    fn masked_at(&self, left: Option<TokenId>, right: Option<TokenId>) -> Distribution {
        let prior = self.successor(left);
        let Some(right) = right else {
            return prior.clone();
        };
        let weights: Vec<f64> = prior
            .probs()
            .iter()
            .enumerate()
            .map(|(x, &p)| p * self.successor(Some(x as TokenId)).prob(right))
            .collect();
        Distribution::from_weights(weights).unwrap_or_else(|_| prior.clone())
    }

    fn require(&self, mode: ScoringMode) -> Result<()> {
        if self.modes.contains(&mode) {
            Ok(())
        } else {
            Err(Error::Capability(format!("mock backend configured without {mode} mode")))
        }
    }
}

impl LanguageModel for MockBackend {
    fn vocab_size(&self) -> usize {
        self.rows.len()
    }

    fn modes(&self) -> Vec<ScoringMode> {
        self.modes.clone()
    }

    fn score_ids(&self, tokens: &[TokenId], mode: ScoringMode) -> Result<Vec<TokenScore>> {
        self.require(mode)?;
        check_ids(tokens, self.vocab_size())?;
        Ok((0..tokens.len())
            .map(|t| match mode {
                ScoringMode::Causal => self.causal_at(tokens, t).score(tokens[t]),
                ScoringMode::Masked => {
                    let left = t.checked_sub(1).map(|p| tokens[p]);
                    self.masked_at(left, tokens.get(t + 1).copied()).score(tokens[t])
                }
            })
            .collect())
    }

    fn next_token_distribution(&self, prefix: &[TokenId]) -> Result<Distribution> {
        self.require(ScoringMode::Causal)?;
        check_ids(prefix, self.vocab_size())?;
        Ok(self.successor(prefix.last().copied()).clone())
    }

    fn candidate_probability_ids(
        &self,
        tokens: &[TokenId],
        span: Range<usize>,
        candidate: &str,
        mode: ScoringMode,
    ) -> Result<f64> {
        self.require(mode)?;
        check_ids(tokens, self.vocab_size())?;
        if span.start >= span.end || span.end > tokens.len() {
            return Err(Error::Precondition(format!(
                "span {span:?} invalid for {} tokens",
                tokens.len()
            )));
        }
        let first = *self
            .tokenizer
            .encode(candidate)
            .first()
            .ok_or_else(|| Error::Precondition(format!("candidate {candidate:?} has no tokens")))?;
        let left = span.start.checked_sub(1).map(|p| tokens[p]);
        Ok(match mode {
            ScoringMode::Causal => self.successor(left).prob(first),
            ScoringMode::Masked => self.masked_at(left, tokens.get(span.end).copied()).prob(first),
        })
    }

    fn end_token(&self) -> Option<TokenId> {
        self.end_token
    }

    fn describe(&self) -> String {
        format!("mock backend ({} tokens)", self.rows.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm_backend::{candidate_probability, score_tokens};

    fn abc() -> MockBackend {
        let table: MockModelTable = serde_json::from_str(
            r#"{"vocab":["a","b","c"],"unigram":[0.5,0.3,0.2],"bigram":{"0":[0.1,0.6,0.3]}}"#,
        )
        .unwrap();
        MockBackend::new(table).unwrap()
    }

    #[test]
    fn scores_read_off_table() {
        let lm = abc();
        let seq = lm.tokenizer().tokenize("b");
        let s = score_tokens(&lm, &seq, ScoringMode::Causal).unwrap();
        assert_eq!(s[0].prob, 0.3);
        assert_eq!(s[0].rank, 2);

        // second "a" after "a": row (0.1,0.6,0.3) sorted descending puts a third
        let seq = lm.tokenizer().tokenize("a a");
        let s = score_tokens(&lm, &seq, ScoringMode::Causal).unwrap();
        assert_eq!(s[1].prob, 0.1);
        assert_eq!(s[1].rank, 3);
    }

    #[test]
    fn next_distribution_fallbacks() {
        let lm = abc();
        assert_eq!(lm.next_token_distribution(&[]).unwrap().probs(), &[0.5, 0.3, 0.2]);
        assert_eq!(lm.next_token_distribution(&[1, 0]).unwrap().probs(), &[0.1, 0.6, 0.3]);
        assert_eq!(lm.next_token_distribution(&[0, 2]).unwrap().probs(), &[0.5, 0.3, 0.2]);
    }

    #[test]
    fn candidate_first_token_causal() {
        let lm = abc();
        let seq = lm.tokenizer().tokenize("a c");
        let p = candidate_probability(&lm, &seq, 1, "b", ScoringMode::Causal).unwrap();
        assert_eq!(p, 0.6);
    }

    #[test]
    fn candidate_subword_uses_first_piece() {
        let vocab = Arc::new(Vocab::new(vec!["a".into(), "b".into(), "c".into()]).unwrap());
        let lm = abc().with_tokenizer(Tokenizer::subword(vocab)).unwrap();
        let seq = lm.tokenizer().tokenize("a c");
        // "bc" splits into (b, c): only b counts
        let p = candidate_probability(&lm, &seq, 1, "bc", ScoringMode::Causal).unwrap();
        assert_eq!(p, 0.6);
    }

    #[test]
    fn unknown_candidate_scores_unknown_id() {
        let lm = abc();
        let seq = lm.tokenizer().tokenize("a c");
        // no <unk> in the vocabulary: unknown id is 0 ("a")
        let p = candidate_probability(&lm, &seq, 1, "zebra", ScoringMode::Causal).unwrap();
        assert_eq!(p, 0.1);
    }

    #[test]
    fn masked_mode_uses_both_neighbours() {
        let lm = abc();
        // position 0 of "a b": p(x) * p(b | x) over unigram prior
        let s = lm.score_ids(&[0, 1], ScoringMode::Masked).unwrap();
        let w = [0.5 * 0.6, 0.3 * 0.3, 0.2 * 0.3];
        let z: f64 = w.iter().sum();
        assert!((s[0].prob - w[0] / z).abs() < 1e-12);
        assert_eq!(s[0].rank, 1);
    }

    #[test]
    fn out_of_range_ids_are_contract_errors() {
        let lm = abc();
        assert!(matches!(lm.score_ids(&[7], ScoringMode::Causal), Err(Error::Contract(_))));
    }

    #[test]
    fn masked_only_backend_refuses_next() {
        let lm = abc().with_modes(vec![ScoringMode::Masked]);
        assert!(matches!(lm.next_token_distribution(&[]), Err(Error::Capability(_))));
    }
}
