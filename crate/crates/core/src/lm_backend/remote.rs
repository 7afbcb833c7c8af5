use std::ops::Range;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{check_ids, Distribution, LanguageModel, ScoringMode, TokenScore};
use crate::corpus::TokenId;
use crate::decoding::DecodingConfig;
use crate::error::{Error, Result};

/// `GET /v1/meta` response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteMeta {
    pub vocab_size: usize,
    pub mode: Vec<ScoringMode>,
    #[serde(default)]
    pub embed_dim: usize,
}

/// Request and response bodies of the sidecar protocol.
pub mod wire {
    use serde::{Deserialize, Serialize};

    use crate::corpus::TokenId;
    use crate::decoding::DecodingConfig;
    use crate::lm_backend::ScoringMode;

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct ScoreRequest {
        pub tokens: Vec<TokenId>,
        pub mode: ScoringMode,
    }

    #[derive(Debug, Clone, Copy, Serialize, Deserialize)]
    pub struct WireScore {
        pub prob: f64,
        pub rank: u32,
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct ScoreResponse {
        pub scores: Vec<WireScore>,
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct NextRequest {
        pub prefix: Vec<TokenId>,
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct NextResponse {
        pub probs: Vec<f64>,
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct CandRequest {
        pub tokens: Vec<TokenId>,
        pub span: [usize; 2],
        pub candidate: String,
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct CandResponse {
        pub prob: f64,
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct EmbedRequest {
        pub text: String,
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct EmbedResponse {
        pub vec: Vec<f64>,
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct GenerateRequest {
        pub priming: Vec<TokenId>,
        pub length: usize,
        pub decoding: DecodingConfig,
        pub seed: u64,
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct GenerateResponse {
        pub tokens: Vec<TokenId>,
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct ErrorBody {
        pub error: String,
    }
}

/// HTTP client for an inference sidecar. The underlying agent pools
/// connections and may be shared across threads.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    base: String,
    agent: ureq::Agent,
    meta: RemoteMeta,
}

impl RemoteBackend {
    /// Connects and reads `/v1/meta`.
    pub fn connect(base_url: &str) -> Result<Self> {
        let base = base_url.trim_end_matches('/').to_string();
        let agent = ureq::AgentBuilder::new()
            .timeout_connect(Duration::from_secs(5))
            .timeout(Duration::from_secs(120))
            .build();
        let meta = get_json(&agent, &format!("{base}/v1/meta"))?;
        Ok(RemoteBackend { base, agent, meta })
    }

    pub fn meta(&self) -> &RemoteMeta {
        &self.meta
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn post<Req: Serialize, Resp: DeserializeOwned>(&self, path: &str, body: &Req) -> Result<Resp> {
        post_json(&self.agent, &format!("{}{path}", self.base), body)
    }

    /// Server-side generation via `/v1/generate`.
    pub fn generate_remote(
        &self,
        priming: &[TokenId],
        length: usize,
        decoding: &DecodingConfig,
        seed: u64,
    ) -> Result<Vec<TokenId>> {
        let resp: wire::GenerateResponse = self.post(
            "/v1/generate",
            &wire::GenerateRequest {
                priming: priming.to_vec(),
                length,
                decoding: decoding.clone(),
                seed,
            },
        )?;
        check_ids(&resp.tokens, self.meta.vocab_size)?;
        Ok(resp.tokens)
    }

    /// The mode `/v1/cand` answers in: the first one the sidecar advertises.
    fn candidate_mode(&self) -> Option<ScoringMode> {
        self.meta.mode.first().copied()
    }
}

impl LanguageModel for RemoteBackend {
    fn vocab_size(&self) -> usize {
        self.meta.vocab_size
    }

    fn modes(&self) -> Vec<ScoringMode> {
        self.meta.mode.clone()
    }

    fn score_ids(&self, tokens: &[TokenId], mode: ScoringMode) -> Result<Vec<TokenScore>> {
        check_ids(tokens, self.vocab_size())?;
        let resp: wire::ScoreResponse = self.post(
            "/v1/score",
            &wire::ScoreRequest {
                tokens: tokens.to_vec(),
                mode,
            },
        )?;
        if resp.scores.len() != tokens.len() {
            return Err(Error::Contract(format!(
                "{}/v1/score returned {} scores for {} tokens",
                self.base,
                resp.scores.len(),
                tokens.len()
            )));
        }
        // ranks are taken from the server as-is
        Ok(tokens
            .iter()
            .zip(resp.scores)
            .map(|(&token, s)| TokenScore {
                token,
                prob: s.prob,
                rank: s.rank,
            })
            .collect())
    }

    fn next_token_distribution(&self, prefix: &[TokenId]) -> Result<Distribution> {
        if !self.supports(ScoringMode::Causal) {
            return Err(Error::Capability(format!("{} is not causal-capable", self.base)));
        }
        check_ids(prefix, self.vocab_size())?;
        let resp: wire::NextResponse = self.post(
            "/v1/next",
            &wire::NextRequest {
                prefix: prefix.to_vec(),
            },
        )?;
        if resp.probs.len() != self.vocab_size() {
            return Err(Error::Contract(format!(
                "{}/v1/next returned {} probabilities, vocabulary is {}",
                self.base,
                resp.probs.len(),
                self.vocab_size()
            )));
        }
        Distribution::from_weights(resp.probs)
    }

    fn candidate_probability_ids(
        &self,
        tokens: &[TokenId],
        span: Range<usize>,
        candidate: &str,
        mode: ScoringMode,
    ) -> Result<f64> {
        if self.candidate_mode() != Some(mode) {
            return Err(Error::Capability(format!(
                "{}/v1/cand answers in {:?} mode, {mode} requested",
                self.base,
                self.candidate_mode()
            )));
        }
        check_ids(tokens, self.vocab_size())?;
        let resp: wire::CandResponse = self.post(
            "/v1/cand",
            &wire::CandRequest {
                tokens: tokens.to_vec(),
                span: [span.start, span.end],
                candidate: candidate.to_string(),
            },
        )?;
        Ok(resp.prob)
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let resp: wire::EmbedResponse = self.post("/v1/embed", &wire::EmbedRequest { text: text.into() })?;
        Ok(resp.vec)
    }

    fn describe(&self) -> String {
        format!("remote backend at {}", self.base)
    }
}

pub(crate) fn get_json<Resp: DeserializeOwned>(agent: &ureq::Agent, url: &str) -> Result<Resp> {
    decode(url, agent.get(url).call())
}

pub(crate) fn post_json<Req: Serialize, Resp: DeserializeOwned>(
    agent: &ureq::Agent,
    url: &str,
    body: &Req,
) -> Result<Resp> {
    let body = serde_json::to_value(body)?;
    decode(url, agent.post(url).send_json(body))
}

fn decode<Resp: DeserializeOwned>(url: &str, result: std::result::Result<ureq::Response, ureq::Error>) -> Result<Resp> {
    match result {
        Ok(resp) => resp.into_json::<Resp>().map_err(|e| Error::Transport {
            endpoint: url.to_string(),
            message: format!("bad response body: {e}"),
        }),
        Err(ureq::Error::Status(status, resp)) => {
            let raw = resp.into_string().unwrap_or_default();
            let message = serde_json::from_str::<wire::ErrorBody>(&raw)
                .map(|b| b.error)
                .unwrap_or(raw);
            Err(Error::Remote {
                endpoint: url.to_string(),
                status,
                message,
            })
        }
        Err(ureq::Error::Transport(t)) => Err(Error::Transport {
            endpoint: url.to_string(),
            message: t.to_string(),
        }),
    }
}
