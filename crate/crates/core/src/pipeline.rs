//! The end-to-end mock experiment: build a fixture world, generate human
//! and synthetic documents, train GLTR on them, and attack the held-out
//! synthetic documents the detector catches.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{attack_corpus, AttackConfig, AttackContext, AttackMethod, AttackResult};
use crate::corpus::{Document, Label, Tokenizer, DEFAULT_WINDOW};
use crate::decoding::DecodingConfig;
use crate::error::{Error, Result};
use crate::evalkit::{attach_verdicts, evasion_rate};
use crate::fixture::{Fixture, FixtureConfig};
use crate::gltr::{document_features, train, GltrDetector, GltrFeatureVector, GltrModel, TrainingGrid};
use crate::lm_backend::{LanguageModel, MockBackend, ScoringMode};
use crate::remote_detector::Detector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub fixture: FixtureConfig,
    pub doc_length: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Synthetic-class decoding; its seed is replaced by `seed`.
    pub decoding: DecodingConfig,
    pub grid: TrainingGrid,
    pub window: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            fixture: FixtureConfig::default(),
            doc_length: 80,
            train_per_class: 150,
            test_per_class: 50,
            decoding: Fixture::default_decoding(0),
            grid: TrainingGrid::default(),
            window: DEFAULT_WINDOW,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    /// Seed `s` of a multi-seed run: a fresh fixture world and fresh documents.
    pub fn seeded(seed: u64) -> Self {
        PipelineConfig {
            fixture: FixtureConfig {
                seed: 100 + seed,
                ..FixtureConfig::default()
            },
            seed,
            ..PipelineConfig::default()
        }
    }
}

/// Outcome of attacking the targets with one method.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackRun {
    pub method: AttackMethod,
    pub n: usize,
    pub evasion_rate: f64,
    pub quality_before: f64,
    pub quality_after: f64,
    pub mean_replacements: f64,
    pub results: Vec<AttackResult>,
}

pub struct MockPipeline {
    pub config: PipelineConfig,
    pub fixture: Fixture,
    pub lm: Arc<MockBackend>,
    pub tokenizer: Tokenizer,
    pub train_docs: Vec<Document>,
    pub test_docs: Vec<Document>,
    pub train_features: Vec<GltrFeatureVector>,
    pub train_labels: Vec<Label>,
    pub detector: GltrDetector,
}

impl MockPipeline {
    pub fn build(config: PipelineConfig) -> Result<Self> {
        let fixture = Fixture::build(config.fixture.clone())?;
        let lm = Arc::new(fixture.model_backend()?);
        let tokenizer = fixture.tokenizer()?;
        let n = config.train_per_class + config.test_per_class;
        let human = fixture.human_docs(n, config.doc_length, config.seed)?;
        let mut decoding = config.decoding.clone();
        decoding.seed = config.seed;
        let synth = fixture.synthetic_docs(n, config.doc_length, &decoding, "synth")?;

        let k = config.train_per_class;
        let train_docs: Vec<Document> = human[..k].iter().chain(&synth[..k]).cloned().collect();
        let test_docs: Vec<Document> = human[k..].iter().chain(&synth[k..]).cloned().collect();
        let train_features = features(lm.as_ref(), &tokenizer, &train_docs, config.window)?;
        let train_labels: Vec<Label> = train_docs.iter().map(|d| d.label).collect();
        let model = train(&train_features, &train_labels, &config.grid, config.seed)?;
        let detector = GltrDetector::new(model, lm.clone(), tokenizer.clone(), config.window, ScoringMode::Causal);
        Ok(MockPipeline {
            config,
            fixture,
            lm,
            tokenizer,
            train_docs,
            test_docs,
            train_features,
            train_labels,
            detector,
        })
    }

    pub fn model(&self) -> &GltrModel {
        &self.detector.model
    }

    pub fn features(&self, docs: &[Document]) -> Result<Vec<GltrFeatureVector>> {
        features(self.lm.as_ref(), &self.tokenizer, docs, self.config.window)
    }

    /// Held-out synthetic documents the detector labels synthetic.
    pub fn targets(&self) -> Result<Vec<Document>> {
        let mut out = Vec::new();
        for d in self.test_docs.iter().filter(|d| d.label == Label::Synthetic) {
            if self.detector.classify(d)?.label == Label::Synthetic {
                out.push(d.clone());
            }
        }
        Ok(out)
    }

    pub fn attack_context(&self) -> Result<AttackContext> {
        self.fixture.attack_context()
    }

    /// Attacks the targets and scores the perturbed documents against the
    /// pipeline's detector. The attack itself never sees the detector.
    pub fn attack(&self, method: AttackMethod, cfg: &AttackConfig) -> Result<AttackRun> {
        let targets = self.targets()?;
        if targets.is_empty() {
            return Err(Error::Precondition("detector catches no held-out synthetic document".into()));
        }
        let ctx = self.attack_context()?;
        let mut results = attack_corpus(method, &targets, &ctx, cfg)?;
        attach_verdicts(&mut results, &self.detector)?;
        let k = results.len() as f64;
        Ok(AttackRun {
            method,
            n: cfg.n,
            evasion_rate: evasion_rate(&results)?,
            quality_before: results.iter().map(|r| r.quality_before).sum::<f64>() / k,
            quality_after: results.iter().map(|r| r.quality_after).sum::<f64>() / k,
            mean_replacements: results.iter().map(|r| r.replacements.len()).sum::<usize>() as f64 / k,
            results,
        })
    }

    /// Documents from a different decoding strategy, labelled synthetic.
    pub fn shifted_docs(&self, n: usize, decoding: &DecodingConfig, tag: &str) -> Result<Vec<Document>> {
        self.fixture.synthetic_docs(n, self.config.doc_length, decoding, tag)
    }

    /// Retrains from scratch on the original training set plus `extra`
    /// synthetic documents.
    pub fn retrain_with(&self, extra: &[Document]) -> Result<GltrDetector> {
        let mut x = self.train_features.clone();
        x.extend(self.features(extra)?);
        let mut y = self.train_labels.clone();
        y.extend(extra.iter().map(|d| d.label));
        let model = train(&x, &y, &self.config.grid, self.config.seed)?;
        Ok(GltrDetector::new(
            model,
            self.lm.clone(),
            self.tokenizer.clone(),
            self.config.window,
            ScoringMode::Causal,
        ))
    }
}

pub fn features(lm: &dyn LanguageModel, tokenizer: &Tokenizer, docs: &[Document], window: usize) -> Result<Vec<GltrFeatureVector>> {
    docs.par_iter()
        .map(|d| document_features(lm, tokenizer, d, window, ScoringMode::Causal))
        .collect()
}

/// Fraction of `docs` the detector labels synthetic.
pub fn flagged_fraction(detector: &dyn Detector, docs: &[Document]) -> Result<f64> {
    if docs.is_empty() {
        return Err(Error::Precondition("empty dataset".into()));
    }
    let mut hits = 0;
    for d in docs {
        if detector.classify(d)?.label == Label::Synthetic {
            hits += 1;
        }
    }
    Ok(hits as f64 / docs.len() as f64)
}
