//! Shared setup for the criterion benchmarks.

use dftbench_core::attack::AttackContext;
use dftbench_core::fixture::{Fixture, FixtureConfig};
use dftbench_core::gltr::GltrFeatureVector;
use dftbench_core::pipeline::features;
use dftbench_core::{Document, Label, MockBackend, Result, Tokenizer};

/// A fixture world with a few human and synthetic documents already scored.
pub struct BenchWorld {
    pub fixture: Fixture,
    pub lm: MockBackend,
    pub tokenizer: Tokenizer,
    pub docs: Vec<Document>,
    pub features: Vec<GltrFeatureVector>,
    pub labels: Vec<Label>,
}

impl BenchWorld {
    pub fn new(per_class: usize, length: usize) -> Result<Self> {
        let fixture = Fixture::build(FixtureConfig::default())?;
        let lm = fixture.model_backend()?;
        let tokenizer = fixture.tokenizer()?;
        let mut docs = fixture.human_docs(per_class, length, 0)?;
        docs.extend(fixture.synthetic_docs(per_class, length, &Fixture::default_decoding(0), "bench")?);
        let features = features(&lm, &tokenizer, &docs, 512)?;
        let labels = docs.iter().map(|d| d.label).collect();
        Ok(BenchWorld {
            fixture,
            lm,
            tokenizer,
            docs,
            features,
            labels,
        })
    }

    pub fn attack_context(&self) -> Result<AttackContext> {
        self.fixture.attack_context()
    }

    pub fn synthetic(&self) -> impl Iterator<Item = &Document> {
        self.docs.iter().filter(|d| d.label == Label::Synthetic)
    }
}
