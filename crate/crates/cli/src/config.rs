//! Experiment configuration: one JSON file, relative paths resolved against
//! the file's directory, command-line flags layered on top.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dftbench_core::decoding::DecodingConfig;
use dftbench_core::fixture::Fixture;
use dftbench_core::{AttackConfig, TrainingGrid};

use crate::CliError;

/// Environment variable that replaces the configured backend with a remote one.
pub const BACKEND_URL_ENV: &str = "DFTBENCH_BACKEND_URL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendSpec {
    /// Path to a mock model table.
    Mock(PathBuf),
    /// Base URL of an inference sidecar.
    Remote(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorSpec {
    /// Path to a trained GLTR model, scored with the configured backend.
    Gltr(PathBuf),
    Remote(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationSettings {
    /// Documents per decoding configuration.
    pub count: usize,
    pub length: usize,
    /// Leading tokens of the i-th human document fed before generating
    /// document i.
    pub priming_tokens: usize,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        GenerationSettings {
            count: 200,
            length: 80,
            priming_tokens: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub backend: Option<BackendSpec>,
    /// Tokenizer spec file; defaults to whole words over the backend vocabulary.
    pub tokenizer: Option<PathBuf>,
    pub detector: Option<DetectorSpec>,
    pub embeddings: Option<PathBuf>,
    /// Extra `word TAB tag` entries for the POS tagger.
    pub pos_lexicon: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    /// Human-written documents (label real).
    pub human: Vec<PathBuf>,
    pub attack: AttackConfig,
    /// The first entry is the in-distribution generator; the rest are
    /// shifted decoding strategies.
    pub decoding_sweep: Vec<DecodingConfig>,
    pub generation: GenerationSettings,
    pub grid: TrainingGrid,
    /// Fraction of each class used for training in `run`.
    pub train_fraction: f64,
    pub window: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            output_dir: PathBuf::from("out"),
            backend: None,
            tokenizer: None,
            detector: None,
            embeddings: None,
            pos_lexicon: None,
            stopwords: None,
            human: Vec::new(),
            attack: AttackConfig::default(),
            decoding_sweep: vec![Fixture::default_decoding(0), DecodingConfig::top_p(1.0, 0)],
            generation: GenerationSettings::default(),
            grid: TrainingGrid::default(),
            train_fraction: 0.75,
            window: dftbench_core::corpus::DEFAULT_WINDOW,
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let raw = fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&raw)
            .map_err(|e| CliError::Validation(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.output_dir);
        if let Some(BackendSpec::Mock(p)) = &mut self.backend {
            resolve(base, p);
        }
        if let Some(DetectorSpec::Gltr(p)) = &mut self.detector {
            resolve(base, p);
        }
        for p in [&mut self.tokenizer, &mut self.embeddings, &mut self.pos_lexicon, &mut self.stopwords]
            .into_iter()
            .flatten()
        {
            resolve(base, p);
        }
        for p in &mut self.human {
            resolve(base, p);
        }
    }

    /// Applies the backend environment override and pushes the global seed
    /// into every seeded component.
    pub fn finalize(mut self) -> Self {
        if let Ok(url) = std::env::var(BACKEND_URL_ENV) {
            if !url.trim().is_empty() {
                self.backend = Some(BackendSpec::Remote(url));
            }
        }
        self.attack.seed = self.seed;
        self.attack.window = self.window;
        for d in &mut self.decoding_sweep {
            d.seed = self.seed;
        }
        self
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let exists = |p: &Path, what: &str| {
            if p.exists() {
                Ok(())
            } else {
                Err(CliError::Validation(format!("{what} {} does not exist", p.display())))
            }
        };
        if let Some(BackendSpec::Mock(p)) = &self.backend {
            exists(p, "mock table")?;
        }
        if let Some(DetectorSpec::Gltr(p)) = &self.detector {
            exists(p, "GLTR model")?;
        }
        for (p, what) in [
            (&self.tokenizer, "tokenizer spec"),
            (&self.embeddings, "embeddings"),
            (&self.pos_lexicon, "POS lexicon"),
            (&self.stopwords, "stop-word list"),
        ] {
            if let Some(p) = p {
                exists(p, what)?;
            }
        }
        for p in &self.human {
            exists(p, "dataset")?;
        }
        self.attack.validate()?;
        self.grid.validate()?;
        for d in &self.decoding_sweep {
            d.validate()?;
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(CliError::Validation("train_fraction must lie in (0, 1)".into()));
        }
        if self.window == 0 {
            return Err(CliError::Validation("window must be positive".into()));
        }
        Ok(())
    }
}
