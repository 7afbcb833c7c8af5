//! In-process HTTP server for the backend and detector protocols.
//!
//! Serves any [`LanguageModel`] (plus an optional sentence encoder for
//! `/v1/embed`) or any [`Detector`]. Used to exercise the remote clients
//! against known models and to expose the mock backend to other tools.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use serde::de::DeserializeOwned;
use serde::Serialize;
use tiny_http::{Header, Method, Request, Response, Server};

use crate::corpus::{Document, Label};
use crate::decoding::generate_ids;
use crate::error::{Error, Result};
use crate::lexsem::SentenceEncoder;
use crate::lm_backend::{wire, LanguageModel, RemoteMeta};
use crate::remote_detector::{ClassifyRequest, ClassifyResponse, Detector, DetectorMeta};

/// What a sidecar answers for.
#[derive(Clone)]
pub enum Service {
    Model {
        lm: Arc<dyn LanguageModel>,
        encoder: Option<SentenceEncoder>,
        embed_dim: usize,
    },
    Detector {
        detector: Arc<dyn Detector>,
        threshold: f64,
        /// Send the label field; when false clients must derive it.
        send_label: bool,
    },
}

impl Service {
    pub fn model(lm: Arc<dyn LanguageModel>) -> Self {
        Service::Model {
            lm,
            encoder: None,
            embed_dim: 0,
        }
    }

    /// Adds `/v1/embed`; `embed_dim` is advertised in `/v1/meta`.
    pub fn with_encoder(self, encoder: SentenceEncoder, embed_dim: usize) -> Self {
        match self {
            Service::Model { lm, .. } => Service::Model {
                lm,
                encoder: Some(encoder),
                embed_dim,
            },
            other => other,
        }
    }

    pub fn detector(detector: Arc<dyn Detector>, threshold: f64, send_label: bool) -> Self {
        Service::Detector {
            detector,
            threshold,
            send_label,
        }
    }
}

/// A running server. Stops and joins its workers on drop.
pub struct Sidecar {
    server: Arc<Server>,
    addr: SocketAddr,
    workers: Vec<JoinHandle<()>>,
    requests: Arc<AtomicUsize>,
}

impl Sidecar {
    /// Binds to an ephemeral local port.
    pub fn spawn(service: Service) -> Result<Self> {
        Self::bind("127.0.0.1:0", service, 4)
    }

    pub fn bind(addr: &str, service: Service, workers: usize) -> Result<Self> {
        let server = Server::http(addr).map_err(|e| Error::Transport {
            endpoint: addr.to_string(),
            message: e.to_string(),
        })?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| Error::Transport {
                endpoint: addr.to_string(),
                message: "not an IP listener".into(),
            })?;
        let server = Arc::new(server);
        let requests = Arc::new(AtomicUsize::new(0));
        let workers = (0..workers.max(1))
            .map(|_| {
                let server = server.clone();
                let service = service.clone();
                let requests = requests.clone();
                std::thread::spawn(move || {
                    while let Ok(req) = server.recv() {
                        requests.fetch_add(1, Ordering::SeqCst);
                        handle(&service, req);
                    }
                })
            })
            .collect();
        Ok(Sidecar {
            server,
            addr,
            workers,
            requests,
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Requests received so far, including malformed ones.
    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    /// Blocks the calling thread until the process is killed.
    pub fn wait(mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for Sidecar {
    fn drop(&mut self) {
        for _ in 0..self.workers.len() {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

struct Reply {
    status: u16,
    body: String,
}

fn ok<T: Serialize>(value: &T) -> Reply {
    match serde_json::to_string(value) {
        Ok(body) => Reply { status: 200, body },
        Err(e) => fail(500, e.to_string()),
    }
}

fn fail(status: u16, message: String) -> Reply {
    let body = serde_json::to_string(&wire::ErrorBody { error: message }).unwrap_or_else(|_| "{}".into());
    Reply { status, body }
}

fn from_error(e: Error) -> Reply {
    let status = match e {
        Error::Capability(_) => 422,
        Error::Contract(_) | Error::Precondition(_) | Error::Invalid { .. } | Error::Json(_) => 400,
        _ => 500,
    };
    fail(status, e.to_string())
}

fn parse<T: DeserializeOwned>(body: &str) -> std::result::Result<T, Reply> {
    serde_json::from_str(body).map_err(|e| fail(400, format!("malformed request body: {e}")))
}

fn handle(service: &Service, mut req: Request) {
    let mut body = String::new();
    let reply = if let Err(e) = req.as_reader().read_to_string(&mut body) {
        fail(400, format!("unreadable body: {e}"))
    } else {
        let path = req.url().split('?').next().unwrap_or("").to_string();
        route(service, req.method(), &path, &body)
    };
    let header = Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..]).expect("static header");
    let resp = Response::from_string(reply.body)
        .with_status_code(reply.status)
        .with_header(header);
    if let Err(e) = req.respond(resp) {
        log::debug!("sidecar response failed: {e}");
    }
}

fn route(service: &Service, method: &Method, path: &str, body: &str) -> Reply {
    let result = match (service, method, path) {
        (Service::Model { lm, embed_dim, .. }, Method::Get, "/v1/meta") => Ok(ok(&RemoteMeta {
            vocab_size: lm.vocab_size(),
            mode: lm.modes(),
            embed_dim: *embed_dim,
        })),
        (Service::Model { lm, encoder, .. }, Method::Post, p) => model_post(lm.as_ref(), encoder.as_ref(), p, body),
        (Service::Detector { detector, threshold, .. }, Method::Get, "/v1/meta") => Ok(ok(&DetectorMeta {
            detector_id: detector.detector_id().to_string(),
            threshold: *threshold,
        })),
        (
            Service::Detector {
                detector, send_label, ..
            },
            Method::Post,
            "/v1/classify",
        ) => parse::<ClassifyRequest>(body).map(|r| {
            let doc = Document::new("request", r.text, Label::Unknown);
            match detector.classify(&doc) {
                Ok(v) => ok(&ClassifyResponse {
                    score: v.score,
                    label: send_label.then_some(v.label),
                }),
                Err(e) => from_error(e),
            }
        }),
        _ => Err(fail(404, format!("no route for {method} {path}"))),
    };
    result.unwrap_or_else(|r| r)
}

fn model_post(
    lm: &dyn LanguageModel,
    encoder: Option<&SentenceEncoder>,
    path: &str,
    body: &str,
) -> std::result::Result<Reply, Reply> {
    let reply = match path {
        "/v1/score" => {
            let r: wire::ScoreRequest = parse(body)?;
            if !lm.supports(r.mode) {
                return Err(fail(422, format!("{} mode not served", r.mode)));
            }
            lm.score_ids(&r.tokens, r.mode).map(|scores| {
                ok(&wire::ScoreResponse {
                    scores: scores
                        .into_iter()
                        .map(|s| wire::WireScore {
                            prob: s.prob,
                            rank: s.rank,
                        })
                        .collect(),
                })
            })
        }
        "/v1/next" => {
            let r: wire::NextRequest = parse(body)?;
            lm.next_token_distribution(&r.prefix).map(|d| ok(&wire::NextResponse { probs: d.into_probs() }))
        }
        "/v1/cand" => {
            let r: wire::CandRequest = parse(body)?;
            let Some(&mode) = lm.modes().first() else {
                return Err(fail(422, "no scoring mode".into()));
            };
            if r.span[0] >= r.span[1] || r.span[1] > r.tokens.len() {
                return Err(fail(400, format!("bad span {:?}", r.span)));
            }
            lm.candidate_probability_ids(&r.tokens, r.span[0]..r.span[1], &r.candidate, mode)
                .map(|prob| ok(&wire::CandResponse { prob }))
        }
        "/v1/embed" => {
            let r: wire::EmbedRequest = parse(body)?;
            let Some(enc) = encoder else {
                return Err(fail(422, "no embedding model loaded".into()));
            };
            enc.encode(&r.text).map(|vec| ok(&wire::EmbedResponse { vec }))
        }
        "/v1/generate" => {
            let r: wire::GenerateRequest = parse(body)?;
            let mut decoding = r.decoding;
            decoding.seed = r.seed;
            generate_ids(lm, &r.priming, r.length, &decoding, 0).map(|tokens| ok(&wire::GenerateResponse { tokens }))
        }
        other => return Err(fail(404, format!("no route for POST {other}"))),
    };
    Ok(reply.unwrap_or_else(from_error))
}
