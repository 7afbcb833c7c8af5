use std::collections::BTreeMap;
use std::sync::Arc;

use dftbench_core::corpus::TokenId;
use dftbench_core::decoding::{generate_ids, FilterStep};
use dftbench_core::lm_backend::MockModelTable;
use dftbench_core::remote_detector::DetectorVerdict;
use dftbench_core::sidecar::{Service, Sidecar};
use dftbench_core::*;

fn table() -> MockModelTable {
    let vocab: Vec<String> = ["<unk>", "the", "cat", "sat", "mat", "."].iter().map(|s| s.to_string()).collect();
    let d = |w: [f64; 6]| Distribution::from_weights(w.to_vec()).unwrap();
    let mut bigram = BTreeMap::new();
    bigram.insert("1".to_string(), d([0.0, 0.05, 0.6, 0.05, 0.25, 0.05]));
    bigram.insert("2".to_string(), d([0.0, 0.1, 0.05, 0.7, 0.05, 0.1]));
    bigram.insert("3".to_string(), d([0.0, 0.5, 0.1, 0.05, 0.05, 0.3]));
    bigram.insert("5".to_string(), d([0.0, 0.8, 0.1, 0.04, 0.05, 0.01]));
    MockModelTable {
        vocab,
        unigram: d([0.0, 0.5, 0.2, 0.1, 0.1, 0.1]),
        bigram,
        end_token: None,
    }
}

fn mock() -> Arc<MockBackend> {
    Arc::new(MockBackend::new(table()).unwrap())
}

fn served(lm: Arc<MockBackend>) -> (Sidecar, RemoteBackend) {
    let car = Sidecar::spawn(Service::model(lm)).unwrap();
    let remote = RemoteBackend::connect(&car.url()).unwrap();
    (car, remote)
}

#[test]
fn meta_describes_the_served_model() {
    let (_car, remote) = served(mock());
    assert_eq!(remote.vocab_size(), 6);
    assert_eq!(remote.modes(), vec![ScoringMode::Causal, ScoringMode::Masked]);
}

#[test]
fn remote_scores_match_mock() {
    let lm = mock();
    let (_car, remote) = served(lm.clone());
    let docs: [&[TokenId]; 4] = [&[1, 2, 3, 1, 4, 5], &[2], &[5, 5, 1, 2, 3], &[0, 1, 2]];
    for ids in docs {
        for mode in [ScoringMode::Causal, ScoringMode::Masked] {
            let a = lm.score_ids(ids, mode).unwrap();
            let b = remote.score_ids(ids, mode).unwrap();
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                assert_eq!(x.token, y.token);
                assert_eq!(x.rank, y.rank);
                assert!((x.prob - y.prob).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn cand_agrees_with_next_on_twenty_prompts() {
    let lm = mock();
    let (_car, remote) = served(lm.clone());
    let words = ["the", "cat", "sat", "mat", "."];
    for i in 0..20u32 {
        let prefix: Vec<TokenId> = (0..(i % 5 + 1)).map(|j| 1 + (i * 7 + j * 3) % 5).collect();
        let next = remote.next_token_distribution(&prefix).unwrap();
        let mut tokens = prefix.clone();
        tokens.push(1);
        let span = prefix.len()..prefix.len() + 1;
        for (k, w) in words.iter().enumerate() {
            let p = remote
                .candidate_probability_ids(&tokens, span.clone(), w, ScoringMode::Causal)
                .unwrap();
            assert!((p - next.prob(k as TokenId + 1)).abs() < 1e-4, "prompt {i} word {w}");
            let local = lm.candidate_probability_ids(&tokens, span.clone(), w, ScoringMode::Causal).unwrap();
            assert!((p - local).abs() < 1e-9);
        }
    }
}

#[test]
fn generation_is_seed_deterministic() {
    let lm = mock();
    let (_car, remote) = served(lm.clone());
    let dec = DecodingConfig::chain(vec![FilterStep::TopK(3), FilterStep::Temperature(0.9)], 0);
    let a = remote.generate_remote(&[1], 30, &dec, 42).unwrap();
    let b = remote.generate_remote(&[1], 30, &dec, 42).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 30);
    let mut local = dec.clone();
    local.seed = 42;
    assert_eq!(a, generate_ids(lm.as_ref(), &[1], 30, &local, 0).unwrap());
    assert_ne!(a, remote.generate_remote(&[1], 30, &dec, 43).unwrap());
}

#[test]
fn embed_serves_the_encoder() {
    let store = EmbeddingStore::parse("cat 1 0\nsat 0 1\n").unwrap();
    let enc = SentenceEncoder::MeanEmbedding(Arc::new(store));
    let car = Sidecar::spawn(Service::model(mock()).with_encoder(enc.clone(), 2)).unwrap();
    let remote = RemoteBackend::connect(&car.url()).unwrap();
    assert_eq!(remote.meta().embed_dim, 2);
    assert_eq!(remote.embed("cat sat").unwrap(), enc.encode("cat sat").unwrap());
    let via = SentenceEncoder::Remote(Arc::new(remote));
    assert_eq!(via.encode("cat").unwrap(), vec![1.0, 0.0]);
}

#[test]
fn missing_capabilities_are_reported() {
    let masked_only = Arc::new(MockBackend::new(table()).unwrap().with_modes(vec![ScoringMode::Masked]));
    let (_car, remote) = served(masked_only);
    match remote.score_ids(&[1, 2], ScoringMode::Causal) {
        Err(Error::Remote { status: 422, .. }) => {}
        other => panic!("expected 422, got {other:?}"),
    }
    assert!(matches!(remote.next_token_distribution(&[1]), Err(Error::Capability(_))));
    assert!(matches!(
        remote.candidate_probability_ids(&[1, 2], 1..2, "cat", ScoringMode::Causal),
        Err(Error::Capability(_))
    ));
    assert!(remote.score_ids(&[1, 2], ScoringMode::Masked).is_ok());

    let (_car2, plain) = served(mock());
    match plain.embed("cat") {
        Err(Error::Remote { status: 422, .. }) => {}
        other => panic!("expected 422, got {other:?}"),
    }
}

#[test]
fn protocol_errors() {
    let (car, remote) = served(mock());
    assert!(matches!(remote.score_ids(&[9], ScoringMode::Causal), Err(Error::Contract(_))));

    let url = car.url();
    match ureq::post(&format!("{url}/v1/score")).send_string("{not json") {
        Err(ureq::Error::Status(400, _)) => {}
        other => panic!("expected 400, got {other:?}"),
    }
    match ureq::get(&format!("{url}/v1/nothing")).call() {
        Err(ureq::Error::Status(404, _)) => {}
        other => panic!("expected 404, got {other:?}"),
    }
    let body = serde_json::json!({"tokens": [1, 2], "span": [1, 5], "candidate": "cat"});
    match ureq::post(&format!("{url}/v1/cand")).send_json(body) {
        Err(ureq::Error::Status(400, _)) => {}
        other => panic!("expected 400, got {other:?}"),
    }
    assert!(car.request_count() >= 4);
}

#[test]
fn unreachable_backend_is_a_transport_error() {
    let addr = {
        let car = Sidecar::spawn(Service::model(mock())).unwrap();
        car.url()
    };
    assert!(matches!(RemoteBackend::connect(&addr), Err(Error::Transport { .. })));
}

struct Fixed(f64);

impl Detector for Fixed {
    fn detector_id(&self) -> &str {
        "fixed"
    }

    fn classify(&self, _doc: &Document) -> Result<DetectorVerdict> {
        Ok(DetectorVerdict {
            score: self.0,
            label: if self.0 >= 0.5 { Label::Synthetic } else { Label::Real },
            detector_id: "fixed".into(),
        })
    }
}

fn verdict(score: f64, threshold: f64, send_label: bool) -> DetectorVerdict {
    let car = Sidecar::spawn(Service::detector(Arc::new(Fixed(score)), threshold, send_label)).unwrap();
    let det = RemoteDetector::connect(&car.url()).unwrap();
    assert_eq!(det.threshold(), threshold);
    det.classify(&Document::new("x", "some text", Label::Unknown)).unwrap()
}

#[test]
fn remote_detector_verdicts() {
    let v = verdict(0.9, 0.5, true);
    assert_eq!((v.score, v.label, v.detector_id.as_str()), (0.9, Label::Synthetic, "fixed"));
    assert_eq!(verdict(0.3, 0.5, false).label, Label::Real);
    // without a label the client applies the declared threshold
    assert_eq!(verdict(0.3, 0.2, false).label, Label::Synthetic);
    // a sent label wins over the threshold
    assert_eq!(verdict(0.3, 0.2, true).label, Label::Real);
}

#[test]
fn unreachable_detector_is_a_transport_error() {
    let url = {
        let car = Sidecar::spawn(Service::detector(Arc::new(Fixed(0.5)), 0.5, true)).unwrap();
        car.url()
    };
    assert!(matches!(RemoteDetector::connect(&url), Err(Error::Transport { .. })));
}
