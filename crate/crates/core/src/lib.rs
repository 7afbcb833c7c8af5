//! Detection and evasion toolkit for machine-generated text.
//!
//! Components: corpus handling and tokenization, pluggable language-model
//! backends (in-process bigram mock or HTTP sidecar), decoding strategies,
//! a rank-histogram detector with logistic regression, synonym-substitution
//! attacks, a reference-free quality proxy, and evaluation metrics.

pub mod attack;
pub mod corpus;
pub mod decoding;
pub mod error;
pub mod evalkit;
pub mod fixture;
pub mod gltr;
pub mod lexsem;
pub mod lm_backend;
pub mod pipeline;
pub mod quality;
pub mod remote_detector;
pub mod sidecar;

pub use attack::{AttackConfig, AttackContext, AttackMethod, AttackResult, Replacement};
pub use corpus::{Document, Label, TokenSeq, Tokenizer};
pub use decoding::{DecodingConfig, GenerationSpec};
pub use error::{Error, Result};
pub use evalkit::{ConfusionCounts, EvalReport, Metrics};
pub use gltr::{GltrDetector, GltrFeatureVector, GltrModel, TrainingGrid};
pub use lexsem::{EmbeddingStore, PosTag, PosTagger, SentenceEncoder};
pub use lm_backend::{Distribution, LanguageModel, MockBackend, RemoteBackend, ScoringMode, TokenScore};
pub use quality::{QualityScore, QualityScorer};
pub use remote_detector::{Detector, DetectorVerdict, RemoteDetector};
