//! A seeded synthetic language for end-to-end experiments without
//! pretrained models.
//!
//! Two bigram tables share one vocabulary: a "world" table that produces
//! human-written documents and a "model" table, a noisy copy of it, that
//! plays the generator and the scoring backend. Content words come in
//! synonym clusters with matching suffix-derived POS and nearby vectors,
//! so substitution attacks have real candidates to work with.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::AttackContext;
use crate::corpus::{Document, Label, StopWordList, Tokenizer, Vocab, UNK_TOKEN};
use crate::decoding::{generate, stream_rng, DecodingConfig, FilterStep, GenerationSpec};
use crate::error::Result;
use crate::lexsem::{EmbeddingStore, PosTag, PosTagger, SentenceEncoder};
use crate::lm_backend::{Distribution, MockBackend, MockModelTable};

const FUNCTION_WORDS: &[&str] = &[
    "the", "a", "an", "of", "and", "to", "in", "on", "at", "by", "for", "with", "from", "is", "was", "are", "were",
    "be", "it", "he", "she", "they", "we", "this", "that", "these", "there", "but", "or", "as", "so", "than", "then",
    "not", "no", "very", "his", "her", "their", "our",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureConfig {
    pub clusters: usize,
    pub min_cluster: usize,
    pub max_cluster: usize,
    pub dim: usize,
    /// Per-coordinate spread of a word around its cluster centroid.
    pub spread: f64,
    pub zipf_exponent: f64,
    /// Log-scale noise applied to world ranks to get model ranks.
    pub jitter: f64,
    pub period_mass: f64,
    pub comma_mass: f64,
    /// Extra probability added to each function word.
    pub function_mass: f64,
    pub seed: u64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        FixtureConfig {
            clusters: 200,
            min_cluster: 3,
            max_cluster: 6,
            dim: 24,
            spread: 0.35,
            zipf_exponent: 1.1,
            jitter: 0.8,
            period_mass: 0.08,
            comma_mass: 0.03,
            function_mass: 0.004,
            seed: 7,
        }
    }
}

/// The generated world.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub config: FixtureConfig,
    pub world: MockModelTable,
    pub model: MockModelTable,
    pub embeddings: EmbeddingStore,
    /// Content-word clusters (vocabulary strings).
    pub clusters: Vec<Vec<String>>,
    /// Coarse tag of every cluster word.
    pub lexicon: BTreeMap<String, PosTag>,
}

const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "gl", "pl", "st", "tr"];
const VOWELS: &[&str] = &["a", "o", "u", "i"];

fn pseudo_stem<R: Rng>(rng: &mut R) -> String {
    let syllables = rng.random_range(2..=3);
    (0..syllables)
        .map(|_| format!("{}{}", ONSETS.choose(rng).unwrap(), VOWELS.choose(rng).unwrap()))
        .collect()
}

fn inflect<R: Rng>(stem: &str, pos: PosTag, rng: &mut R) -> String {
    match pos {
        PosTag::Verb => format!("{stem}{}", ["ed", "ing"].choose(rng).unwrap()),
        PosTag::Adj => format!("{stem}{}", ["ous", "ive", "ful"].choose(rng).unwrap()),
        PosTag::Adv => format!("{stem}ly"),
        _ => stem.to_string(),
    }
}

fn zipf_row(order: &[usize], exponent: f64, boosts: &[f64]) -> Result<Distribution> {
    let mut w = boosts.to_vec();
    for (r, &tok) in order.iter().enumerate() {
        w[tok] += ((r + 1) as f64).powf(-exponent);
    }
    // the unknown token (id 0) is never produced
    w[0] = 0.0;
    Distribution::from_weights(w)
}

impl Fixture {
    pub fn build(config: FixtureConfig) -> Result<Self> {
        let mut rng = stream_rng(config.seed, 0);
        let tagger = PosTagger::english();
        let stop = StopWordList::english();

        let mut vocab: Vec<String> = vec![UNK_TOKEN.into(), ".".into(), ",".into()];
        vocab.extend(FUNCTION_WORDS.iter().map(|w| w.to_string()));
        let mut seen: HashSet<String> = vocab.iter().cloned().collect();
        let n_function = vocab.len();

        let mut clusters = Vec::with_capacity(config.clusters);
        let tags = [PosTag::Noun, PosTag::Noun, PosTag::Verb, PosTag::Adj, PosTag::Adv];
        for c in 0..config.clusters {
            let pos = tags[c % tags.len()];
            let size = rng.random_range(config.min_cluster..=config.max_cluster);
            let mut members = Vec::with_capacity(size);
            while members.len() < size {
                let word = inflect(&pseudo_stem(&mut rng), pos, &mut rng);
                // suffix rules must agree with the intended tag; bare stems stay untagged
                let by_rule = match pos {
                    PosTag::Noun => PosTag::Other,
                    p => p,
                };
                if seen.contains(&word) || stop.contains(&word) || tagger.tag_word(&word, false) != by_rule {
                    continue;
                }
                seen.insert(word.clone());
                members.push(word);
            }
            vocab.extend(members.iter().cloned());
            clusters.push(members);
        }
        let v = vocab.len();
        let lexicon: BTreeMap<String, PosTag> = clusters
            .iter()
            .enumerate()
            .flat_map(|(c, m)| m.iter().map(move |w| (w.clone(), tags[c % tags.len()])))
            .collect();

        let mut pairs = Vec::with_capacity(v);
        let gauss = |rng: &mut rand_chacha::ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };
        for w in &vocab[3..n_function] {
            pairs.push((w.clone(), (0..config.dim).map(|_| gauss(&mut rng)).collect()));
        }
        for members in &clusters {
            let centroid: Vec<f64> = (0..config.dim).map(|_| gauss(&mut rng)).collect();
            for w in members {
                let vec = centroid.iter().map(|c| c + config.spread * gauss(&mut rng)).collect();
                pairs.push((w.clone(), vec));
            }
        }
        let embeddings = EmbeddingStore::from_pairs(pairs)?;

        let mut boosts = vec![0.0; v];
        boosts[1] = config.period_mass;
        boosts[2] = config.comma_mass;
        for b in &mut boosts[3..n_function] {
            *b = config.function_mass;
        }
        // scale the Zipf part so boosts keep their nominal share
        let harmonic: f64 = (1..v).map(|r| (r as f64).powf(-config.zipf_exponent)).sum();
        let boost_total: f64 = boosts.iter().sum();
        let scale = harmonic * boost_total / (1.0 - boost_total).max(1e-6);
        let boosts: Vec<f64> = boosts.iter().map(|b| b / boost_total.max(1e-12) * scale).collect();

        let mut world_rows = Vec::with_capacity(v + 1);
        let mut model_rows = Vec::with_capacity(v + 1);
        for row in 0..=v {
            // no punctuation right after punctuation
            let boosts: Vec<f64> = if row == 1 || row == 2 {
                let mut b = boosts.clone();
                b[1] = 0.0;
                b[2] = 0.0;
                b
            } else {
                boosts.clone()
            };
            let mut order: Vec<usize> = (if row == 1 || row == 2 { 3 } else { 1 }..v).collect();
            order.shuffle(&mut rng);
            let mut noisy: Vec<(f64, usize)> = order
                .iter()
                .enumerate()
                .map(|(r, &t)| (((r + 1) as f64).ln() + config.jitter * gauss(&mut rng), t))
                .collect();
            noisy.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let model_order: Vec<usize> = noisy.into_iter().map(|x| x.1).collect();
            world_rows.push(zipf_row(&order, config.zipf_exponent, &boosts)?);
            model_rows.push(zipf_row(&model_order, config.zipf_exponent, &boosts)?);
        }
        let table = |mut rows: Vec<Distribution>| {
            let unigram = rows.pop().expect("one extra row");
            let bigram: BTreeMap<String, Distribution> =
                rows.into_iter().enumerate().skip(1).map(|(i, d)| (i.to_string(), d)).collect();
            MockModelTable {
                vocab: vocab.clone(),
                unigram,
                bigram,
                end_token: None,
            }
        };
        Ok(Fixture {
            world: table(world_rows),
            model: table(model_rows),
            embeddings,
            clusters,
            lexicon,
            config,
        })
    }

    pub fn tokenizer(&self) -> Result<Tokenizer> {
        Ok(Tokenizer::word(Arc::new(Vocab::new(self.model.vocab.clone())?)))
    }

    pub fn model_backend(&self) -> Result<MockBackend> {
        MockBackend::new(self.model.clone())
    }

    pub fn world_backend(&self) -> Result<MockBackend> {
        MockBackend::new(self.world.clone())
    }

    pub fn encoder(&self) -> SentenceEncoder {
        SentenceEncoder::MeanEmbedding(Arc::new(self.embeddings.clone()))
    }

    /// The bundled English tagger extended with the fixture lexicon.
    pub fn tagger(&self) -> PosTagger {
        let mut t = PosTagger::english();
        for (w, &tag) in &self.lexicon {
            t.insert(w, tag);
        }
        t
    }

    /// Lexicon file contents (`word TAB tag`).
    pub fn lexicon_tsv(&self) -> String {
        self.lexicon.iter().map(|(w, t)| format!("{w}\t{t}\n")).collect()
    }

    pub fn attack_context(&self) -> Result<AttackContext> {
        Ok(AttackContext::new(
            Arc::new(self.model_backend()?),
            self.tokenizer()?,
            Arc::new(self.embeddings.clone()),
            self.encoder(),
        )
        .with_tagger(self.tagger()))
    }

    /// Decoding used for the default synthetic class: top-k 40 then temperature 0.7.
    pub fn default_decoding(seed: u64) -> DecodingConfig {
        DecodingConfig::chain(vec![FilterStep::TopK(40), FilterStep::Temperature(0.7)], seed)
    }

    /// Documents sampled without filtering from the world table, labelled real.
    pub fn human_docs(&self, n: usize, length: usize, seed: u64) -> Result<Vec<Document>> {
        let lm = self.world_backend()?;
        let tok = self.tokenizer()?;
        let spec = GenerationSpec {
            priming_token_count: 0,
            priming_source: None,
            target_length: length,
            decoding: DecodingConfig::top_p(1.0, seed),
        };
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut d = generate(&lm, &tok, &spec, format!("human-{seed}-{i}"), i as u64)?;
                d.label = Label::Real;
                d.meta.clear();
                d.meta.insert("source".into(), "world".into());
                Ok(d)
            })
            .collect()
    }

    /// Documents generated from the model table, labelled synthetic.
    pub fn synthetic_docs(&self, n: usize, length: usize, decoding: &DecodingConfig, tag: &str) -> Result<Vec<Document>> {
        let lm = self.model_backend()?;
        let tok = self.tokenizer()?;
        let spec = GenerationSpec {
            priming_token_count: 0,
            priming_source: None,
            target_length: length,
            decoding: decoding.clone(),
        };
        (0..n)
            .into_par_iter()
            .map(|i| generate(&lm, &tok, &spec, format!("{tag}-{}-{i}", decoding.seed), i as u64))
            .collect()
    }

    /// Tokens drawn uniformly from the vocabulary (excluding the unknown
    /// token), labelled real.
    pub fn uniform_docs(&self, n: usize, length: usize, seed: u64) -> Result<Vec<Document>> {
        let tok = self.tokenizer()?;
        let v = self.model.vocab.len() as u32;
        Ok((0..n)
            .map(|i| {
                let mut rng = stream_rng(seed, i as u64);
                let ids: Vec<u32> = (0..length).map(|_| rng.random_range(1..v)).collect();
                let mut d = Document::new(format!("uniform-{seed}-{i}"), tok.render(&ids), Label::Real);
                d.meta.insert("source".into(), "uniform".into());
                d
            })
            .collect())
    }
}
