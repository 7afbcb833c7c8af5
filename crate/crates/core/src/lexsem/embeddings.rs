use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Word vectors with cached norms. Lookups try the exact word, then its
/// lowercase form.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    dim: usize,
    words: Vec<String>,
    vectors: Vec<f64>,
    norms: Vec<f64>,
    index: HashMap<String, usize>,
}

impl EmbeddingStore {
    /// Builds a store from `(word, vector)` pairs. Duplicate words keep the
    /// first vector; zero vectors are skipped. Both are logged.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, Vec<f64>)>) -> Result<Self> {
        let mut store = EmbeddingStore {
            dim: 0,
            words: Vec::new(),
            vectors: Vec::new(),
            norms: Vec::new(),
            index: HashMap::new(),
        };
        for (word, vec) in pairs {
            store.push(word, vec)?;
        }
        if store.words.is_empty() {
            return Err(Error::invalid("embeddings", "no vectors"));
        }
        Ok(store)
    }

    fn push(&mut self, word: String, vec: Vec<f64>) -> Result<()> {
        if self.words.is_empty() && self.dim == 0 {
            self.dim = vec.len();
        }
        if vec.len() != self.dim || vec.is_empty() {
            return Err(Error::invalid(
                "embeddings",
                format!("vector for {word:?} has dimension {}, expected {}", vec.len(), self.dim),
            ));
        }
        if vec.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("embeddings", format!("non-finite vector for {word:?}")));
        }
        if self.index.contains_key(&word) {
            log::warn!("duplicate embedding for {word:?}; keeping the first");
            return Ok(());
        }
        let norm = vec.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            log::warn!("zero vector for {word:?} rejected");
            return Ok(());
        }
        self.index.insert(word.clone(), self.words.len());
        self.words.push(word);
        self.vectors.extend(vec);
        self.norms.push(norm);
        Ok(())
    }

    /// Text format: `word v1 v2 ... vd` per line. A leading `count dim`
    /// header line is tolerated.
    pub fn parse(raw: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in raw.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let values: std::result::Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
            let values = values.map_err(|e| Error::invalid("embeddings", format!("line {}: {e}", i + 1)))?;
            if i == 0 && values.len() == 1 && word.parse::<usize>().is_ok() {
                continue;
            }
            pairs.push((word.to_string(), values));
        }
        Self::from_pairs(pairs)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&raw)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for (i, w) in self.words.iter().enumerate() {
            let vals: Vec<String> = self.row(i).iter().map(|v| format!("{v}")).collect();
            writeln!(out, "{w} {}", vals.join(" ")).map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    fn position(&self, word: &str) -> Option<usize> {
        self.index
            .get(word)
            .or_else(|| self.index.get(&word.to_lowercase()))
            .copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.position(word).is_some()
    }

    pub fn vector(&self, word: &str) -> Option<&[f64]> {
        self.position(word).map(|i| self.row(i))
    }

    fn cosine_idx(&self, a: usize, b: usize) -> f64 {
        let dot: f64 = self.row(a).iter().zip(self.row(b)).map(|(x, y)| x * y).sum();
        (dot / (self.norms[a] * self.norms[b])).clamp(-1.0, 1.0)
    }

    pub fn cosine(&self, a: &str, b: &str) -> Option<f64> {
        Some(self.cosine_idx(self.position(a)?, self.position(b)?))
    }

    /// Exact k-NN by cosine: descending similarity, ties in lexicographic
    /// order, excluding the query and its case variants, keeping only
    /// neighbours with cosine ≥ `min_cosine`.
    pub fn nearest_synonyms(&self, word: &str, max_candidates: usize, min_cosine: f64) -> Vec<(String, f64)> {
        let Some(q) = self.position(word) else {
            return Vec::new();
        };
        let lower = word.to_lowercase();
        let mut hits: Vec<(String, f64)> = (0..self.words.len())
            .filter(|&i| i != q && self.words[i].to_lowercase() != lower)
            .map(|i| (i, self.cosine_idx(q, i)))
            .filter(|&(_, c)| c >= min_cosine)
            .map(|(i, c)| (self.words[i].clone(), c))
            .collect();
        hits.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        hits.truncate(max_candidates);
        hits
    }
}

/// Free-function form of [`EmbeddingStore::nearest_synonyms`].
pub fn nearest_synonyms(word: &str, store: &EmbeddingStore, max_candidates: usize, min_cosine: f64) -> Vec<(String, f64)> {
    store.nearest_synonyms(word, max_candidates, min_cosine)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> EmbeddingStore {
        EmbeddingStore::parse("cat 1 0\nfeline 0.8 0.6\ndog 0 1\n").unwrap()
    }

    #[test]
    fn toy_neighbours() {
        let s = toy();
        let n = s.nearest_synonyms("cat", 50, 0.5);
        assert_eq!(n.len(), 1);
        assert_eq!(n[0].0, "feline");
        assert!((n[0].1 - 0.8).abs() < 1e-12);
        assert!(s.nearest_synonyms("unicorn", 50, 0.0).is_empty());
        assert!(s.nearest_synonyms("cat", 50, 1.0).is_empty());
    }

    #[test]
    fn excludes_case_variants_and_orders_ties() {
        let s = EmbeddingStore::parse("Cat 1 0\ncat 1 0\nb 1 0\na 1 0\nz 0.5 0.5").unwrap();
        let n: Vec<String> = s.nearest_synonyms("cat", 10, 0.0).into_iter().map(|x| x.0).collect();
        assert_eq!(n, ["a", "b", "z"]);
        assert_eq!(s.nearest_synonyms("cat", 1, 0.0).len(), 1);
    }

    #[test]
    fn load_rules() {
        let s = EmbeddingStore::parse("2 2\nx 1 0\nx 0 1\nzero 0 0\ny 0 2\n").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.vector("x").unwrap(), &[1.0, 0.0]);
        assert!(!s.contains("zero"));
        assert!(EmbeddingStore::parse("a 1 0\nb 1 0 0\n").is_err());
    }
}
