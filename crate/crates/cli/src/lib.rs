//! The `dftbench` command-line harness: configuration, artifact plumbing,
//! and the experiment subcommands.

pub mod artifacts;
pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use thiserror::Error;

use dftbench_core::AttackMethod;

pub use config::{BackendSpec, DetectorSpec, ExperimentConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
    #[error(transparent)]
    Core(#[from] dftbench_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use dftbench_core::Error as E;
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Runtime(_) => EXIT_RUNTIME,
            CliError::Core(e) => match e {
                E::MalformedLine { .. } | E::EmptyText { .. } | E::Invalid { .. } | E::Precondition(_) => {
                    EXIT_VALIDATION
                }
                _ => EXIT_RUNTIME,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dftbench", version, about = "Machine-generated text detection and attack experiments")]
pub struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Mock model table, replacing the configured backend.
    #[arg(long, global = true)]
    pub mock_table: Option<PathBuf>,
    /// Sidecar URL, replacing the configured backend.
    #[arg(long, global = true)]
    pub backend_url: Option<String>,
    #[arg(long, global = true)]
    pub embeddings: Option<PathBuf>,
    /// Trained GLTR model to use as the detector.
    #[arg(long, global = true)]
    pub gltr_model: Option<PathBuf>,
    #[arg(long, global = true)]
    pub detector_url: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a self-contained mock world: model table, embeddings, lexicon,
    /// human documents and a config that ties them together.
    SynthFixture {
        #[arg(long, default_value_t = 7)]
        fixture_seed: u64,
        #[arg(long, default_value_t = 200)]
        human: usize,
        #[arg(long, default_value_t = 80)]
        length: usize,
    },
    /// Validate datasets and report basic statistics.
    Ingest {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Generate synthetic documents for every decoding configuration.
    Generate {
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        length: Option<usize>,
    },
    /// Train a GLTR detector on labelled datasets.
    TrainGltr {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Classify every document of a dataset.
    Detect {
        input: PathBuf,
        #[arg(long, default_value = "verdicts")]
        name: String,
    },
    /// Perturb documents with a synonym-substitution attack.
    Attack {
        input: PathBuf,
        #[arg(long, default_value = "dftfooler")]
        method: AttackMethod,
        /// Maximum replacements per document.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Metrics from verdicts and/or attack results.
    Evaluate {
        #[arg(long)]
        verdicts: Option<PathBuf>,
        #[arg(long)]
        attacks: Option<PathBuf>,
        /// Earlier report to compute deltas against.
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long, default_value = "eval")]
        name: String,
    },
    /// Average-linkage distance between GLTR feature sets.
    DistShift {
        #[arg(long)]
        reference: PathBuf,
        #[arg(required = true)]
        compare: Vec<PathBuf>,
    },
    /// Merge reports into CSV tables and plot data.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        attacks: Vec<PathBuf>,
    },
    /// The whole pipeline: generate, train, detect, attack, evaluate, report.
    Run,
    /// Serve the configured backend (or detector) over HTTP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8765")]
        addr: String,
        /// Serve the configured detector instead of the backend.
        #[arg(long)]
        detector: bool,
    },
}

impl Cli {
    /// Config file, then environment, then flags.
    pub fn resolve_config(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg = cfg.finalize();
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(p) = &self.mock_table {
            cfg.backend = Some(BackendSpec::Mock(p.clone()));
        }
        if let Some(u) = &self.backend_url {
            cfg.backend = Some(BackendSpec::Remote(u.clone()));
        }
        if let Some(p) = &self.embeddings {
            cfg.embeddings = Some(p.clone());
        }
        if let Some(p) = &self.gltr_model {
            cfg.detector = Some(DetectorSpec::Gltr(p.clone()));
        }
        if let Some(u) = &self.detector_url {
            cfg.detector = Some(DetectorSpec::Remote(u.clone()));
        }
        if let Command::Attack { n: Some(n), .. } = self.command {
            cfg.attack.n = n;
        }
        if let Command::Generate { count, length } = self.command {
            if let Some(c) = count {
                cfg.generation.count = c;
            }
            if let Some(l) = length {
                cfg.generation.length = l;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit status.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                ErrorKind::InvalidSubcommand
                | ErrorKind::MissingSubcommand
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => EXIT_USAGE,
                _ => EXIT_VALIDATION,
            };
            let _ = e.print();
            return code;
        }
    };
    match cli.resolve_config().and_then(|cfg| commands::execute(&cli.command, &cfg)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
