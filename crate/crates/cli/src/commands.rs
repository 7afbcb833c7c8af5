//! Subcommand implementations. Each one resolves its components from the
//! config, does its work through the core crate, and writes artifacts with
//! manifests into the output directory.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use dftbench_core::attack::{attack_corpus, AttackContext, AttackMethod, AttackResult};
use dftbench_core::corpus::{load_jsonl, Document, Label, StopWordList, Tokenizer, TokenizerSpec};
use dftbench_core::decoding::{generate, GenerationSpec};
use dftbench_core::evalkit::{attach_verdicts, avg_linkage_distance, EvalReport};
use dftbench_core::fixture::{Fixture, FixtureConfig};
use dftbench_core::gltr::{train, GltrDetector, GltrFeatureVector, GltrModel};
use dftbench_core::lexsem::{EmbeddingStore, PosTagger, SentenceEncoder};
use dftbench_core::lm_backend::{LanguageModel, MockBackend, RemoteBackend, ScoringMode};
use dftbench_core::pipeline::features;
use dftbench_core::remote_detector::{Detector, RemoteDetector};
use dftbench_core::sidecar::{Service, Sidecar};

use crate::artifacts::ArtifactWriter;
use crate::config::{BackendSpec, DetectorSpec, ExperimentConfig, GenerationSettings};
use crate::{CliError, Command};

type CliResult<T> = Result<T, CliError>;

pub fn execute(command: &Command, cfg: &ExperimentConfig) -> CliResult<()> {
    match command {
        Command::SynthFixture {
            fixture_seed,
            human,
            length,
        } => synth_fixture(cfg, *fixture_seed, *human, *length),
        Command::Ingest { inputs } => ingest(cfg, inputs),
        Command::Generate { .. } => generate_cmd(cfg),
        Command::TrainGltr { inputs } => train_gltr(cfg, inputs),
        Command::Detect { input, name } => detect(cfg, input, name),
        Command::Attack { input, method, .. } => attack(cfg, input, *method),
        Command::Evaluate {
            verdicts,
            attacks,
            baseline,
            name,
        } => evaluate(cfg, verdicts.as_deref(), attacks.as_deref(), baseline.as_deref(), name),
        Command::DistShift { reference, compare } => dist_shift(cfg, reference, compare),
        Command::Report { reports, attacks } => report(cfg, reports, attacks),
        Command::Run => run(cfg),
        Command::Serve { addr, detector } => serve(cfg, addr, *detector),
    }
}

// ---------------------------------------------------------------------------
// components

/// The scoring backend and the tokenizer that feeds it.
#[derive(Clone)]
pub struct Scoring {
    pub lm: Arc<dyn LanguageModel>,
    pub tokenizer: Tokenizer,
    pub embed_dim: usize,
}

impl Scoring {
    pub fn from_config(cfg: &ExperimentConfig) -> CliResult<Self> {
        let spec = match &cfg.tokenizer {
            Some(p) => TokenizerSpec::load(p)?,
            None => TokenizerSpec::Word,
        };
        match &cfg.backend {
            None => Err(CliError::Validation(format!(
                "no backend configured (set `backend`, pass --mock-table or --backend-url, or set {})",
                crate::config::BACKEND_URL_ENV
            ))),
            Some(BackendSpec::Mock(path)) => {
                let mock = MockBackend::load(path)?;
                let tokenizer = Tokenizer::from_spec(&spec, Some(mock.vocab()))?;
                let mock = mock.with_tokenizer(tokenizer.clone())?;
                Ok(Scoring {
                    lm: Arc::new(mock),
                    tokenizer,
                    embed_dim: 0,
                })
            }
            Some(BackendSpec::Remote(url)) => {
                let remote = RemoteBackend::connect(url)?;
                let tokenizer = Tokenizer::from_spec(&spec, None)?;
                if tokenizer.vocab().len() != remote.meta().vocab_size {
                    return Err(dftbench_core::Error::Contract(format!(
                        "tokenizer has {} entries but {url} serves {}",
                        tokenizer.vocab().len(),
                        remote.meta().vocab_size
                    ))
                    .into());
                }
                let embed_dim = remote.meta().embed_dim;
                Ok(Scoring {
                    lm: Arc::new(remote),
                    tokenizer,
                    embed_dim,
                })
            }
        }
    }

    /// Causal when the backend offers it.
    pub fn mode(&self) -> ScoringMode {
        if self.lm.supports(ScoringMode::Causal) {
            ScoringMode::Causal
        } else {
            ScoringMode::Masked
        }
    }

    pub fn features(&self, docs: &[Document], window: usize) -> CliResult<Vec<GltrFeatureVector>> {
        if self.mode() == ScoringMode::Causal {
            return Ok(features(self.lm.as_ref(), &self.tokenizer, docs, window)?);
        }
        Ok(docs
            .par_iter()
            .map(|d| dftbench_core::gltr::document_features(self.lm.as_ref(), &self.tokenizer, d, window, ScoringMode::Masked))
            .collect::<Result<_, _>>()?)
    }

    pub fn gltr(&self, model: GltrModel, window: usize) -> GltrDetector {
        GltrDetector::new(model, self.lm.clone(), self.tokenizer.clone(), window, self.mode())
    }
}

fn embeddings(cfg: &ExperimentConfig) -> CliResult<Option<Arc<EmbeddingStore>>> {
    cfg.embeddings
        .as_ref()
        .map(|p| Ok(Arc::new(EmbeddingStore::load(p)?)))
        .transpose()
}

fn encoder(cfg: &ExperimentConfig, scoring: &Scoring) -> CliResult<SentenceEncoder> {
    match embeddings(cfg)? {
        Some(store) => Ok(SentenceEncoder::MeanEmbedding(store)),
        None if scoring.embed_dim > 0 => Ok(SentenceEncoder::Remote(scoring.lm.clone())),
        None => Err(CliError::Validation(
            "no sentence encoder: configure `embeddings` or use a backend with /v1/embed".into(),
        )),
    }
}

pub fn attack_context(cfg: &ExperimentConfig, scoring: &Scoring) -> CliResult<AttackContext> {
    let store = embeddings(cfg)?
        .ok_or_else(|| CliError::Validation("attacks need word embeddings (`embeddings` or --embeddings)".into()))?;
    let encoder = encoder(cfg, scoring)?;
    let mut tagger = PosTagger::english();
    if let Some(p) = &cfg.pos_lexicon {
        tagger.extend_from(&read_text(p)?)?;
    }
    let stopwords = match &cfg.stopwords {
        Some(p) => StopWordList::load(p)?,
        None => StopWordList::english(),
    };
    Ok(AttackContext::new(scoring.lm.clone(), scoring.tokenizer.clone(), store, encoder)
        .with_tagger(tagger)
        .with_stopwords(stopwords))
}

/// The configured detector. GLTR models are scored with the configured
/// backend; a remote detector needs nothing else.
pub fn detector(cfg: &ExperimentConfig) -> CliResult<Arc<dyn Detector>> {
    match &cfg.detector {
        None => Err(CliError::Validation(
            "no detector configured (set `detector`, pass --gltr-model or --detector-url)".into(),
        )),
        Some(DetectorSpec::Gltr(path)) => {
            let scoring = Scoring::from_config(cfg)?;
            Ok(Arc::new(scoring.gltr(GltrModel::load(path)?, cfg.window)))
        }
        Some(DetectorSpec::Remote(url)) => Ok(Arc::new(RemoteDetector::connect(url)?)),
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    serde_json::from_str(&read_text(path)?)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<Vec<T>> {
    read_text(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CliError::Validation(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn load_all(paths: &[PathBuf], writer: &mut ArtifactWriter<'_>) -> CliResult<Vec<Document>> {
    let mut docs = Vec::new();
    for p in paths {
        writer.input(p)?;
        docs.extend(load_jsonl(p)?);
    }
    Ok(docs)
}

fn human_docs(cfg: &ExperimentConfig, writer: &mut ArtifactWriter<'_>) -> CliResult<Vec<Document>> {
    if cfg.human.is_empty() {
        return Err(CliError::Validation("no human datasets configured (`human`)".into()));
    }
    let mut docs = load_all(&cfg.human, writer)?;
    for d in &mut docs {
        match d.label {
            Label::Synthetic => {
                return Err(CliError::Validation(format!("human dataset holds synthetic document {:?}", d.id)))
            }
            _ => d.label = Label::Real,
        }
    }
    Ok(docs)
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn provenance(cfg: &ExperimentConfig, detector_id: Option<&str>) -> serde_json::Value {
    serde_json::json!({ "seed": cfg.seed, "detector": detector_id, "config": cfg })
}

// ---------------------------------------------------------------------------
// synth-fixture

fn synth_fixture(cfg: &ExperimentConfig, fixture_seed: u64, human: usize, length: usize) -> CliResult<()> {
    if human == 0 || length == 0 {
        return Err(CliError::Validation("--human and --length must be positive".into()));
    }
    let fx = Fixture::build(FixtureConfig {
        seed: fixture_seed,
        ..FixtureConfig::default()
    })?;
    let writer = ArtifactWriter::new("synth-fixture", cfg)?;
    writer.json("model_table.json", &fx.model)?;
    let mut emb = String::new();
    for w in fx.embeddings.words() {
        let v = fx.embeddings.vector(w).expect("listed word");
        emb.push_str(w);
        for x in v {
            emb.push_str(&format!(" {x}"));
        }
        emb.push('\n');
    }
    writer.text("embeddings.txt", &emb)?;
    writer.text("pos_lexicon.tsv", &fx.lexicon_tsv())?;
    writer.jsonl("human.jsonl", &fx.human_docs(human, length, cfg.seed)?)?;

    // a config for the written world, with paths relative to itself
    let world = ExperimentConfig {
        seed: cfg.seed,
        output_dir: PathBuf::from("run"),
        backend: Some(BackendSpec::Mock("model_table.json".into())),
        embeddings: Some("embeddings.txt".into()),
        pos_lexicon: Some("pos_lexicon.tsv".into()),
        human: vec!["human.jsonl".into()],
        generation: GenerationSettings {
            count: human,
            length,
            priming_tokens: 0,
        },
        ..ExperimentConfig::default()
    };
    writer.json("config.json", &world)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// ingest

#[derive(Debug, Serialize)]
struct IngestStats {
    file: String,
    documents: usize,
    real: usize,
    synthetic: usize,
    unknown: usize,
    mean_words: f64,
    domains: Vec<String>,
}

fn ingest(cfg: &ExperimentConfig, inputs: &[PathBuf]) -> CliResult<()> {
    let mut writer = ArtifactWriter::new("ingest", cfg)?;
    let mut stats = Vec::new();
    for p in inputs {
        writer.input(p)?;
        let docs = load_jsonl(p)?;
        let count = |l: Label| docs.iter().filter(|d| d.label == l).count();
        let mut domains: Vec<String> = docs.iter().map(|d| d.domain_tag.clone()).filter(|d| !d.is_empty()).collect();
        domains.sort();
        domains.dedup();
        stats.push(IngestStats {
            file: p.display().to_string(),
            documents: docs.len(),
            real: count(Label::Real),
            synthetic: count(Label::Synthetic),
            unknown: count(Label::Unknown),
            mean_words: mean(docs.iter().map(|d| d.text.split_whitespace().count() as f64)).unwrap_or(0.0),
            domains,
        });
    }
    writer.json("ingest_stats.json", &stats)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// generate

/// One set of documents per decoding configuration, in sweep order.
fn generate_sweep(cfg: &ExperimentConfig, scoring: &Scoring, human: &[Document]) -> CliResult<Vec<Vec<Document>>> {
    let g = &cfg.generation;
    if g.priming_tokens > 0 && human.is_empty() {
        return Err(CliError::Validation("priming needs human documents".into()));
    }
    cfg.decoding_sweep
        .iter()
        .enumerate()
        .map(|(j, decoding)| {
            (0..g.count)
                .into_par_iter()
                .map(|i| {
                    let spec = GenerationSpec {
                        priming_token_count: g.priming_tokens,
                        priming_source: (g.priming_tokens > 0).then(|| human[i % human.len()].clone()),
                        target_length: g.length,
                        decoding: decoding.clone(),
                    };
                    let mut d = generate(scoring.lm.as_ref(), &scoring.tokenizer, &spec, format!("synth-{j}-{i}"), i as u64)?;
                    d.meta.insert("strategy".into(), decoding.label());
                    Ok(d)
                })
                .collect::<Result<Vec<_>, dftbench_core::Error>>()
                .map_err(CliError::from)
        })
        .collect()
}

fn generate_cmd(cfg: &ExperimentConfig) -> CliResult<()> {
    let scoring = Scoring::from_config(cfg)?;
    let mut writer = ArtifactWriter::new("generate", cfg)?;
    let human = if cfg.generation.priming_tokens > 0 {
        human_docs(cfg, &mut writer)?
    } else {
        Vec::new()
    };
    let sets = generate_sweep(cfg, &scoring, &human)?;
    writer.jsonl("generated.jsonl", &sets.concat())?;
    Ok(())
}

// ---------------------------------------------------------------------------
// train-gltr

fn labelled(docs: &[Document]) -> CliResult<Vec<Label>> {
    docs.iter()
        .map(|d| match d.label {
            Label::Unknown => Err(CliError::Validation(format!("document {:?} has no label", d.id))),
            l => Ok(l),
        })
        .collect()
}

fn train_model(cfg: &ExperimentConfig, scoring: &Scoring, docs: &[Document]) -> CliResult<GltrModel> {
    let labels = labelled(docs)?;
    let feats = scoring.features(docs, cfg.window)?;
    Ok(train(&feats, &labels, &cfg.grid, cfg.seed)?)
}

fn train_gltr(cfg: &ExperimentConfig, inputs: &[PathBuf]) -> CliResult<()> {
    let scoring = Scoring::from_config(cfg)?;
    let mut writer = ArtifactWriter::new("train-gltr", cfg)?;
    let docs = load_all(inputs, &mut writer)?;
    let model = train_model(cfg, &scoring, &docs)?;
    writer.json("gltr_model.json", &model)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// detect

/// One line of a verdicts file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub id: String,
    pub truth: Label,
    pub label: Label,
    pub score: f64,
    pub detector_id: String,
}

fn classify_all(detector: &dyn Detector, docs: &[Document]) -> CliResult<Vec<VerdictRecord>> {
    if docs.is_empty() {
        return Err(CliError::Validation("empty dataset".into()));
    }
    Ok(docs
        .par_iter()
        .map(|d| {
            detector.classify(d).map(|v| VerdictRecord {
                id: d.id.clone(),
                truth: d.label,
                label: v.label,
                score: v.score,
                detector_id: v.detector_id,
            })
        })
        .collect::<Result<_, _>>()?)
}

fn detect(cfg: &ExperimentConfig, input: &Path, name: &str) -> CliResult<()> {
    let mut writer = ArtifactWriter::new("detect", cfg)?;
    writer.input(input)?;
    let docs = load_jsonl(input)?;
    if docs.is_empty() {
        return Err(CliError::Validation("empty dataset".into()));
    }
    let det = detector(cfg)?;
    writer.jsonl(&format!("{name}.jsonl"), &classify_all(det.as_ref(), &docs)?)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// attack

fn attack(cfg: &ExperimentConfig, input: &Path, method: AttackMethod) -> CliResult<()> {
    let mut writer = ArtifactWriter::new("attack", cfg)?;
    writer.input(input)?;
    let docs = load_jsonl(input)?;
    if docs.is_empty() {
        return Err(CliError::Validation("empty dataset".into()));
    }
    let scoring = Scoring::from_config(cfg)?;
    let ctx = attack_context(cfg, &scoring)?;
    let results = attack_corpus(method, &docs, &ctx, &cfg.attack)?;
    writer.jsonl(&format!("attacks_{method}.jsonl"), &results)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate

fn report_from_verdicts(name: &str, records: &[VerdictRecord]) -> CliResult<EvalReport> {
    let scored: Vec<&VerdictRecord> = records.iter().filter(|r| r.truth != Label::Unknown).collect();
    if scored.is_empty() {
        return Err(CliError::Validation("no labelled verdicts to evaluate".into()));
    }
    let preds: Vec<bool> = scored.iter().map(|r| r.label == Label::Synthetic).collect();
    let scores: Vec<f64> = scored.iter().map(|r| r.score).collect();
    let truth: Vec<bool> = scored.iter().map(|r| r.truth == Label::Synthetic).collect();
    Ok(EvalReport::from_predictions(name, &preds, &scores, &truth)?)
}

/// Detection metrics over the perturbed documents (all synthetic), plus
/// evasion rate and mean quality. Results must carry verdicts.
fn report_from_attacks(name: &str, results: &[AttackResult], detector: &dyn Detector) -> CliResult<EvalReport> {
    if results.is_empty() {
        return Err(CliError::Validation("empty dataset".into()));
    }
    let verdicts = results
        .par_iter()
        .map(|r| detector.classify(&r.perturbed))
        .collect::<Result<Vec<_>, _>>()?;
    let preds: Vec<bool> = verdicts.iter().map(|v| v.label == Label::Synthetic).collect();
    let scores: Vec<f64> = verdicts.iter().map(|v| v.score).collect();
    let mut report = EvalReport::from_predictions(name, &preds, &scores, &vec![true; results.len()])?;
    report.evasion_rate = Some(dftbench_core::evalkit::evasion_rate(results)?);
    report.quality_before = mean(results.iter().map(|r| r.quality_before));
    report.quality_after = mean(results.iter().map(|r| r.quality_after));
    Ok(report)
}

fn evaluate(
    cfg: &ExperimentConfig,
    verdicts: Option<&Path>,
    attacks: Option<&Path>,
    baseline: Option<&Path>,
    name: &str,
) -> CliResult<()> {
    let mut writer = ArtifactWriter::new("evaluate", cfg)?;
    let mut report = match (verdicts, attacks) {
        (None, None) => return Err(CliError::Validation("evaluate needs --verdicts or --attacks".into())),
        (Some(_), Some(_)) => return Err(CliError::Validation("pass either --verdicts or --attacks, not both".into())),
        (Some(v), None) => {
            writer.input(v)?;
            let records: Vec<VerdictRecord> = read_jsonl(v)?;
            let id = records.first().map(|r| r.detector_id.clone());
            let mut r = report_from_verdicts(name, &records)?;
            r.provenance = provenance(cfg, id.as_deref());
            r
        }
        (None, Some(a)) => {
            writer.input(a)?;
            let mut results: Vec<AttackResult> = read_jsonl(a)?;
            let det = detector(cfg)?;
            attach_verdicts(&mut results, det.as_ref())?;
            let mut r = report_from_attacks(name, &results, det.as_ref())?;
            r.provenance = provenance(cfg, Some(det.detector_id()));
            r
        }
    };
    if let Some(b) = baseline {
        writer.input(b)?;
        let base: EvalReport = read_json(b)?;
        report = report.with_baseline(&base);
    }
    write_report(&writer, &report)
}

fn write_report(writer: &ArtifactWriter<'_>, report: &EvalReport) -> CliResult<()> {
    writer.json(&format!("report_{}.json", report.name), report)?;
    writer.text(
        &format!("report_{}.csv", report.name),
        &format!("{}\n{}\n", EvalReport::CSV_HEADER, report.csv_row()),
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// dist-shift

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShiftRow {
    pub reference: String,
    pub compare: String,
    pub n_reference: usize,
    pub n_compare: usize,
    pub distance: f64,
}

fn fractions(f: &[GltrFeatureVector]) -> Vec<[f64; 4]> {
    f.iter().map(|v| v.fractions).collect()
}

fn shift_row(reference: (&str, &[GltrFeatureVector]), compare: (&str, &[GltrFeatureVector])) -> CliResult<ShiftRow> {
    Ok(ShiftRow {
        reference: reference.0.to_string(),
        compare: compare.0.to_string(),
        n_reference: reference.1.len(),
        n_compare: compare.1.len(),
        distance: avg_linkage_distance(&fractions(reference.1), &fractions(compare.1))?,
    })
}

fn write_shift(writer: &ArtifactWriter<'_>, rows: &[ShiftRow]) -> CliResult<()> {
    writer.json("dist_shift.json", rows)?;
    let mut csv = String::from("reference,compare,n_reference,n_compare,distance\n");
    for r in rows {
        csv.push_str(&format!(
            "{},{},{},{},{:.6}\n",
            r.reference, r.compare, r.n_reference, r.n_compare, r.distance
        ));
    }
    writer.text("dist_shift.csv", &csv)?;
    Ok(())
}

fn file_stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn dist_shift(cfg: &ExperimentConfig, reference: &Path, compare: &[PathBuf]) -> CliResult<()> {
    let scoring = Scoring::from_config(cfg)?;
    let mut writer = ArtifactWriter::new("dist-shift", cfg)?;
    let mut load = |p: &Path| -> CliResult<Vec<GltrFeatureVector>> {
        writer.input(p)?;
        let docs = load_jsonl(p)?;
        if docs.is_empty() {
            return Err(CliError::Validation(format!("{}: empty dataset", p.display())));
        }
        scoring.features(&docs, cfg.window)
    };
    let base = load(reference)?;
    let mut sets = Vec::new();
    for p in compare {
        sets.push((file_stem(p), load(p)?));
    }
    let ref_name = file_stem(reference);
    let rows = sets
        .iter()
        .map(|(n, f)| shift_row((&ref_name, &base), (n, f)))
        .collect::<CliResult<Vec<_>>>()?;
    write_shift(&writer, &rows)
}

// ---------------------------------------------------------------------------
// report

fn summary_csv(reports: &[EvalReport]) -> String {
    let mut out = format!("{}\n", EvalReport::CSV_HEADER);
    for r in reports {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Empirical CDF of quality before and after each attack.
fn quality_cdf(sets: &[(String, Vec<AttackResult>)]) -> String {
    let mut out = String::from("method,stage,quality,cdf\n");
    for (method, results) in sets {
        for (stage, pick) in [
            ("before", (|r: &AttackResult| r.quality_before) as fn(&AttackResult) -> f64),
            ("after", |r: &AttackResult| r.quality_after),
        ] {
            let mut v: Vec<f64> = results.iter().map(pick).collect();
            v.sort_by(f64::total_cmp);
            let n = v.len() as f64;
            for (i, q) in v.iter().enumerate() {
                out.push_str(&format!("{method},{stage},{q:.6},{:.6}\n", (i + 1) as f64 / n));
            }
        }
    }
    out
}

fn report(cfg: &ExperimentConfig, reports: &[PathBuf], attacks: &[PathBuf]) -> CliResult<()> {
    let mut writer = ArtifactWriter::new("report", cfg)?;
    let mut loaded = Vec::new();
    for p in reports {
        writer.input(p)?;
        loaded.push(read_json::<EvalReport>(p)?);
    }
    writer.text("summary.csv", &summary_csv(&loaded))?;
    if !attacks.is_empty() {
        let mut sets = Vec::new();
        for p in attacks {
            writer.input(p)?;
            let results: Vec<AttackResult> = read_jsonl(p)?;
            let method = results.first().map(|r| r.method.to_string()).unwrap_or_else(|| file_stem(p));
            sets.push((method, results));
        }
        writer.text("quality_cdf.csv", &quality_cdf(&sets))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// run

fn split(docs: &[Document], fraction: f64) -> CliResult<(Vec<Document>, Vec<Document>)> {
    let k = (docs.len() as f64 * fraction).floor() as usize;
    if k == 0 || k == docs.len() {
        return Err(CliError::Validation(format!(
            "{} documents cannot be split at train_fraction {fraction}",
            docs.len()
        )));
    }
    Ok((docs[..k].to_vec(), docs[k..].to_vec()))
}

fn run(cfg: &ExperimentConfig) -> CliResult<()> {
    let scoring = Scoring::from_config(cfg)?;
    let mut writer = ArtifactWriter::new("run", cfg)?;
    let human = human_docs(cfg, &mut writer)?;
    let ctx = attack_context(cfg, &scoring)?;

    let sweep = generate_sweep(cfg, &scoring, &human)?;
    writer.jsonl("generated.jsonl", &sweep.concat())?;

    let (human_train, human_test) = split(&human, cfg.train_fraction)?;
    let (synth_train, synth_test) = split(&sweep[0], cfg.train_fraction)?;
    let train_docs = [human_train, synth_train.clone()].concat();
    let test_docs = [human_test.clone(), synth_test.clone()].concat();
    writer.jsonl("train.jsonl", &train_docs)?;
    writer.jsonl("test.jsonl", &test_docs)?;

    let model = train_model(cfg, &scoring, &train_docs)?;
    writer.json("gltr_model.json", &model)?;
    let det = scoring.gltr(model, cfg.window);

    let mut reports = Vec::new();
    let verdicts = classify_all(&det, &test_docs)?;
    writer.jsonl("verdicts.jsonl", &verdicts)?;
    let mut base = report_from_verdicts("in_distribution", &verdicts)?;
    base.provenance = provenance(cfg, Some(det.detector_id()));
    write_report(&writer, &base)?;
    reports.push(base.clone());

    // shifted decoding: same human test half, synthetic half from another strategy
    let k = synth_train.len();
    let mut shifted_sets = Vec::new();
    for (j, set) in sweep.iter().enumerate().skip(1) {
        let shifted = set[k.min(set.len())..].to_vec();
        let docs = [human_test.clone(), shifted.clone()].concat();
        let v = classify_all(&det, &docs)?;
        writer.jsonl(&format!("verdicts_shift_{j}.jsonl"), &v)?;
        let mut r = report_from_verdicts(&format!("shift_{j}"), &v)?.with_baseline(&base);
        r.provenance = provenance(cfg, Some(det.detector_id()));
        write_report(&writer, &r)?;
        reports.push(r);
        shifted_sets.push((format!("shift_{j}"), shifted));
    }

    // attack the held-out synthetic documents the detector catches
    let caught: Vec<Document> = synth_test
        .iter()
        .zip(&verdicts[human_test.len()..])
        .filter(|(_, v)| v.label == Label::Synthetic)
        .map(|(d, _)| d.clone())
        .collect();
    let mut attack_sets = Vec::new();
    if caught.is_empty() {
        log::warn!("the detector flags no held-out synthetic document; skipping attacks");
    } else {
        for method in [AttackMethod::Dftfooler, AttackMethod::Random] {
            let mut results = attack_corpus(method, &caught, &ctx, &cfg.attack)?;
            attach_verdicts(&mut results, &det)?;
            writer.jsonl(&format!("attacks_{method}.jsonl"), &results)?;
            let mut r = report_from_attacks(&format!("attack_{method}"), &results, &det)?.with_baseline(&base);
            r.provenance = provenance(cfg, Some(det.detector_id()));
            write_report(&writer, &r)?;
            reports.push(r);
            attack_sets.push((method.to_string(), results));
        }
        writer.text("quality_cdf.csv", &quality_cdf(&attack_sets))?;
    }

    let reference = scoring.features(&synth_train, cfg.window)?;
    let mut rows = vec![shift_row(("train", &reference), ("in_distribution", &scoring.features(&synth_test, cfg.window)?))?];
    for (name, docs) in &shifted_sets {
        rows.push(shift_row(("train", &reference), (name, &scoring.features(docs, cfg.window)?))?);
    }
    write_shift(&writer, &rows)?;
    writer.text("summary.csv", &summary_csv(&reports))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// serve

fn serve(cfg: &ExperimentConfig, addr: &str, serve_detector: bool) -> CliResult<()> {
    let service = if serve_detector {
        let det = detector(cfg)?;
        let threshold = match &cfg.detector {
            Some(DetectorSpec::Gltr(p)) => GltrModel::load(p)?.threshold,
            _ => 0.5,
        };
        Service::detector(det, threshold, true)
    } else {
        let scoring = Scoring::from_config(cfg)?;
        match embeddings(cfg)? {
            Some(store) => {
                let dim = store.dim();
                Service::model(scoring.lm.clone()).with_encoder(SentenceEncoder::MeanEmbedding(store), dim)
            }
            None => Service::model(scoring.lm.clone()),
        }
    };
    let sidecar = Sidecar::bind(addr, service, 4)?;
    eprintln!("listening on {}", sidecar.url());
    sidecar.wait();
    Ok(())
}
