//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Runs with the mock backend only.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::Vector5;
use rand::Rng;
use rayon::prelude::*;

use dftbench_core::attack::{attack_corpus, audit, perturb, AttackMethod};
use dftbench_core::decoding::{apply_temperature, softmax, stream_rng, temper, top_k_filter, top_p_filter};
use dftbench_core::evalkit::{attach_verdicts, auc, avg_linkage_distance, confusion_metrics, delta, evasion_rate, f1_score, round1};
use dftbench_core::fixture::{Fixture, FixtureConfig};
use dftbench_core::gltr::{train, GltrDetector, LogisticObjective};
use dftbench_core::pipeline::{features, MockPipeline, PipelineConfig};
use dftbench_core::*;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e<T, E: std::fmt::Display>(r: std::result::Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn metric_arithmetic() -> Outcome {
    let m = f1_score(0.917, 0.860);
    check((100.0 * m - 88.8).abs() <= 0.05, || format!("F1 {:.3}", 100.0 * m))?;
    let d1 = e(delta(44.1, 98.5))?;
    let d2 = e(delta(94.9, 87.0))?;
    check((round1(d1) + 55.2).abs() <= 0.1, || format!("delta {d1}"))?;
    check((round1(d2) - 9.1).abs() <= 0.1, || format!("delta {d2}"))?;
    // the same numbers through the confusion-count path
    let preds = [true, true, false, false, true];
    let labels = [true, false, true, false, true];
    let via_counts = e(confusion_metrics(&preds, &labels))?;
    check((via_counts.f1 - 2.0 / 3.0).abs() < 1e-12, || format!("count path F1 {}", via_counts.f1))?;
    Ok(format!("F1 {:.1}, deltas {:+.1} / {:+.1}", 100.0 * m, round1(d1), round1(d2)))
}

fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut twice = 0u64;
    let (mut np, mut nn) = (0u64, 0u64);
    for (i, &li) in labels.iter().enumerate() {
        if li {
            np += 1;
        } else {
            nn += 1;
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            twice += match scores[i].partial_cmp(&scores[j]).unwrap() {
                std::cmp::Ordering::Greater => 2,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Less => 0,
            };
        }
    }
    twice as f64 / 2.0 / (np * nn) as f64
}

fn oracles() -> Outcome {
    for set in 0..100u64 {
        let mut rng = stream_rng(2024, set);
        let mut labels: Vec<bool> = (0..20).map(|_| rng.random_bool(0.5)).collect();
        labels[0] = true;
        labels[1] = false;
        // one-decimal scores force ties
        let scores: Vec<f64> = (0..20).map(|_| (rng.random_range(0.0..1.0f64) * 10.0).round() / 10.0).collect();
        let a = e(auc(&scores, &labels))?;
        let b = brute_auc(&scores, &labels);
        check(a == b, || format!("set {set}: auc {a} vs pairs {b}"))?;
    }

    let d = e(avg_linkage_distance(&[[0.0, 0.0], [0.0, 2.0]], &[[3.0, 4.0], [3.0, 0.0]]))?;
    let exact = (5.0 + 3.0 + 2.0 * 13f64.sqrt()) / 4.0;
    check((d - exact).abs() <= 1e-9 && (d - 3.8028).abs() < 5e-5, || format!("linkage {d}"))?;

    let mut worst = 0.0f64;
    for seed in 0..5u64 {
        let mut rng = stream_rng(seed, 0);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..80 {
            let y = if i % 2 == 0 { 1.0 } else { -1.0 };
            let mut w: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.0..1.0));
            w[0] += if y > 0.0 { 0.6 } else { 0.0 };
            let s: f64 = w.iter().sum();
            xs.push(w.map(|v| v / s));
            ys.push(y);
        }
        let obj = LogisticObjective { xs: &xs, ys: &ys, c: 1.0 };
        let opt = e(obj.minimize())?;
        let h = 1e-5;
        let fd = Vector5::from_fn(|i, _| {
            let (mut up, mut down) = (opt, opt);
            up[i] += h;
            down[i] -= h;
            (obj.loss(&up) - obj.loss(&down)) / (2.0 * h)
        });
        worst = worst.max(fd.norm());
    }
    check(worst <= 1e-6, || format!("finite-difference gradient norm {worst:e}"))?;
    Ok(format!("auc exact on 100 sets, linkage {d:.4}, max FD gradient {worst:.1e}"))
}

fn random_distribution(seed: u64) -> Distribution {
    let mut rng = stream_rng(seed, 1);
    let n = rng.random_range(2..60);
    let skew = rng.random_range(0.5..4.0f64);
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0f64).powf(skew) + 1e-9).collect();
    Distribution::from_weights(w).unwrap()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn nested<F: Fn(f64) -> Distribution>(filter: F) -> bool {
    let ps = [0.05, 0.2, 0.5, 0.8, 0.95, 1.0];
    ps.windows(2).all(|w| {
        let (a, b) = (filter(w[0]), filter(w[1]));
        a.support().iter().all(|id| b.prob(*id) > 0.0)
    })
}

fn decoding_identities() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..1000u64 {
        let d = random_distribution(seed);
        worst = worst.max(max_diff(top_p_filter(&d, 1.0).probs(), d.probs()));
        let g = top_k_filter(&d, 1);
        check(g.support() == vec![d.argmax()] && g.prob(d.argmax()) == 1.0, || format!("top-k 1 on {seed}"))?;
        check(DecodingConfig::top_k(1, seed).pick(&d, &mut stream_rng(seed, 0)) == DecodingConfig::greedy(seed).pick(&d, &mut stream_rng(seed, 0)), || {
            format!("top-k 1 pick differs from greedy on {seed}")
        })?;
        worst = worst.max(max_diff(temper(&d, 1.0).probs(), d.probs()));
        worst = worst.max(max_diff(DecodingConfig::temperature(1.0, 0).filter(&d).probs(), d.probs()));
        let logits: Vec<f64> = d.probs().iter().map(|p| 3.0 * p.ln() + 1.5).collect();
        worst = worst.max(max_diff(apply_temperature(&logits, 1.0).probs(), softmax(&logits).probs()));
        check(nested(|p| top_p_filter(&d, p)), || format!("top-p nesting on {seed}"))?;
    }
    check(worst <= 1e-12, || format!("identity error {worst:e}"))?;
    let fx = e(Fixture::build(FixtureConfig { clusters: 60, ..FixtureConfig::default() }))?;
    let mut rows = 0;
    for table in [&fx.world, &fx.model] {
        for d in std::iter::once(&table.unigram).chain(table.bigram.values()) {
            check(nested(|p| top_p_filter(d, p)), || "top-p nesting on a fixture row".into())?;
            rows += 1;
        }
    }
    Ok(format!("max identity error {worst:.1e} over 1000 distributions, nesting on {rows} fixture rows"))
}

fn mock_detection() -> Outcome {
    let mut f1s = Vec::new();
    for s in 0..3u64 {
        let fx = e(Fixture::build(FixtureConfig { seed: 100 + s, ..FixtureConfig::default() }))?;
        let lm = e(fx.model_backend())?;
        let tok = e(fx.tokenizer())?;
        let synth = e(fx.synthetic_docs(200, 80, &DecodingConfig::top_k(2, s), "topk2"))?;
        let uniform = e(fx.uniform_docs(200, 80, s))?;
        let train_docs: Vec<Document> = synth[..150].iter().chain(&uniform[..150]).cloned().collect();
        let test_docs: Vec<Document> = synth[150..].iter().chain(&uniform[150..]).cloned().collect();
        let x = e(features(&lm, &tok, &train_docs, 512))?;
        let y: Vec<Label> = train_docs.iter().map(|d| d.label).collect();
        let model = e(train(&x, &y, &TrainingGrid::default(), s))?;
        let det = GltrDetector::new(model, Arc::new(lm), tok, 512, ScoringMode::Causal);
        let mut preds = Vec::new();
        for d in &test_docs {
            preds.push(e(det.classify(d))?.label == Label::Synthetic);
        }
        let truth: Vec<bool> = test_docs.iter().map(|d| d.label == Label::Synthetic).collect();
        f1s.push(e(confusion_metrics(&preds, &truth))?.f1);
    }
    check(f1s.iter().all(|f| *f >= 0.95), || format!("held-out F1 {f1s:?}"))?;
    Ok(format!("held-out F1 {}", f1s.iter().map(|f| format!("{f:.3}")).collect::<Vec<_>>().join(" / ")))
}

/// Wraps a detector and counts queries.
struct Counting<'a> {
    inner: &'a dyn Detector,
    calls: AtomicUsize,
}

impl Detector for Counting<'_> {
    fn detector_id(&self) -> &str {
        self.inner.detector_id()
    }
    fn classify(&self, doc: &Document) -> dftbench_core::Result<DetectorVerdict> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.classify(doc)
    }
}

fn attack_direction() -> Outcome {
    let (mut dft, mut rnd) = (0.0, 0.0);
    let mut construction_queries = 0;
    for s in 0..5u64 {
        let p = e(MockPipeline::build(PipelineConfig::seeded(s)))?;
        let targets = e(p.targets())?;
        check(!targets.is_empty(), || format!("seed {s}: no targets"))?;
        let ctx = e(p.attack_context())?;
        let cfg = AttackConfig { seed: s, ..AttackConfig::default() }.with_n(10);
        let counting = Counting { inner: &p.detector, calls: AtomicUsize::new(0) };
        let mut d = e(attack_corpus(AttackMethod::Dftfooler, &targets, &ctx, &cfg))?;
        construction_queries += counting.calls.load(Ordering::SeqCst);
        e(attach_verdicts(&mut d, &counting))?;
        check(counting.calls.load(Ordering::SeqCst) == d.len(), || "verdict queries miscounted".into())?;
        let mut r = e(attack_corpus(AttackMethod::Random, &targets, &ctx, &cfg))?;
        e(attach_verdicts(&mut r, &p.detector))?;
        dft += e(evasion_rate(&d))? / 5.0;
        rnd += e(evasion_rate(&r))? / 5.0;
    }
    check(construction_queries == 0, || format!("{construction_queries} detector queries during construction"))?;
    check(dft >= rnd && dft > 0.0 && rnd > 0.0, || format!("mean ER dftfooler {dft:.3}, random {rnd:.3}"))?;
    Ok(format!("mean ER dftfooler {dft:.3} >= random {rnd:.3}, 0 construction queries"))
}

fn pipeline_seed1() -> Result<MockPipeline, String> {
    e(MockPipeline::build(PipelineConfig {
        fixture: FixtureConfig::default(),
        seed: 1,
        ..PipelineConfig::default()
    }))
}

fn tradeoff() -> Outcome {
    let p = pipeline_seed1()?;
    let mut rows = Vec::new();
    for n in [5, 10, 15, 20] {
        let run = e(p.attack(AttackMethod::Dftfooler, &AttackConfig { seed: 1, ..AttackConfig::default() }.with_n(n)))?;
        rows.push((n, run.evasion_rate, run.quality_after));
    }
    let er_ok = rows.windows(2).all(|w| w[1].1 >= w[0].1);
    let q_ok = rows.windows(2).all(|w| w[1].2 <= w[0].2);
    let table = rows
        .iter()
        .map(|(n, er, q)| format!("N={n} ER {er:.2} q {q:.4}"))
        .collect::<Vec<_>>()
        .join(", ");
    check(er_ok && q_ok, || table.clone())?;
    Ok(table)
}

fn retraining() -> Outcome {
    let p = pipeline_seed1()?;
    let shifted = e(p.shifted_docs(300, &DecodingConfig::top_p(1.0, 3), "shift"))?;
    let test = &shifted[200..];
    let mut recalls = Vec::new();
    for k in [10, 50, 100] {
        let det = e(p.retrain_with(&shifted[100..100 + k]))?;
        recalls.push(e(dftbench_core::pipeline::flagged_fraction(&det, test))?);
    }
    check(recalls.windows(2).all(|w| w[1] >= w[0]) && recalls[2] > recalls[0], || format!("recall {recalls:?}"))?;
    Ok(format!("shifted recall after +10/+50/+100: {recalls:.2?}"))
}

fn audits() -> Outcome {
    let fx = e(Fixture::build(FixtureConfig { seed: 11, ..FixtureConfig::default() }))?;
    let ctx = e(fx.attack_context())?;
    let mut docs = e(fx.human_docs(40, 60, 5))?;
    docs.extend(e(fx.synthetic_docs(40, 60, &Fixture::default_decoding(5), "s"))?);
    docs.extend(e(fx.uniform_docs(20, 60, 5))?);
    let outcomes: Vec<Result<usize, String>> = (0..1000u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(99, i);
            let mut doc = docs[rng.random_range(0..docs.len())].clone();
            doc.id = format!("fuzz-{i}");
            if rng.random_bool(0.3) {
                // capitalize some words
                doc.text = doc
                    .text
                    .split(' ')
                    .map(|w| if rng.random_bool(0.2) { w.to_uppercase() } else { w.to_string() })
                    .collect::<Vec<_>>()
                    .join(" ");
            }
            let method = if rng.random_bool(0.7) { AttackMethod::Dftfooler } else { AttackMethod::Random };
            let cfg = AttackConfig {
                n: rng.random_range(1..=25),
                candidate_prob_ceiling: [0.005, 0.02, 0.1, 0.5][rng.random_range(0..4)],
                sentence_sim_floor: [0.5, 0.7, 0.9][rng.random_range(0..3)],
                min_cosine: [0.5, 0.7, 0.85][rng.random_range(0..3)],
                iterative: rng.random_bool(0.2),
                seed: i,
                window: [512, 30][rng.random_range(0..2)],
                ..AttackConfig::default()
            };
            let result = e(perturb(method, &doc, &ctx, &cfg))?;
            e(audit(&result, &ctx, &cfg))?;
            Ok(result.replacements.len())
        })
        .collect();
    let mut total = 0;
    for o in outcomes {
        total += o?;
    }
    check(total > 0, || "no replacements were made".into())?;
    Ok(format!("1000 fuzzed attacks audited, {total} replacements re-verified"))
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        let name = p.file_name().unwrap().to_string_lossy().into_owned();
        if name.ends_with(".json") || name.ends_with(".jsonl") {
            out.insert(name, std::fs::read(&p).unwrap());
        }
    }
    out
}

fn dftbench(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_dftbench"))
        .args(args)
        .env_remove("DFTBENCH_BACKEND_URL")
        .output()
        .map_err(|e| e.to_string())?;
    check(out.status.success(), || format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
}

fn determinism() -> Outcome {
    let tmp = e(tempfile::tempdir())?;
    let world = tmp.path().join("world");
    let w = world.to_str().unwrap();
    dftbench(&["--out", w, "--seed", "3", "synth-fixture", "--human", "120", "--length", "60"])?;
    let config = world.join("config.json");
    let c = config.to_str().unwrap();
    dftbench(&["--config", c, "run"])?;
    let first = snapshot(&world.join("run"));
    dftbench(&["--config", c, "run"])?;
    let second = snapshot(&world.join("run"));
    check(first.len() >= 10, || format!("only {} JSON artifacts", first.len()))?;
    check(first.keys().eq(second.keys()), || "artifact sets differ".into())?;
    for (name, bytes) in &first {
        check(second[name] == *bytes, || format!("{name} differs between runs"))?;
    }
    Ok(format!("{} JSON artifacts byte-identical across two runs", first.len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("metric arithmetic", metric_arithmetic, Duration::from_secs(1)),
        ("oracle equivalence", oracles, Duration::from_secs(10)),
        ("decoding identities", decoding_identities, Duration::from_secs(5)),
        ("mock detection pipeline", mock_detection, Duration::from_secs(30)),
        ("attack direction", attack_direction, Duration::from_secs(120)),
        ("attack/quality trade-off", tradeoff, Duration::from_secs(180)),
        ("adaptive retraining recovery", retraining, Duration::from_secs(60)),
        ("audit invariants", audits, Duration::from_secs(300)),
        ("end-to-end determinism", determinism, Duration::from_secs(300)),
    ];
    let mut failed = 0;
    for (i, (name, f, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(msg) if elapsed > *budget => Err(format!("{msg}; took {elapsed:.1?}, budget {budget:?}")),
            o => o,
        };
        match outcome {
            Ok(msg) => println!("PASS criterion {}: {name}: {msg} [{elapsed:.2?}]", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {}: {name}: {msg} [{elapsed:.2?}]", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
