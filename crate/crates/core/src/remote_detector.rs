//! Detector verdict interface, and an HTTP adapter for external detectors.
//!
//! Protocol:
//! - `GET  /v1/meta`     → `{"detector_id": str, "threshold": f64?}`
//! - `POST /v1/classify` `{"text": str}` → `{"score": f64, "label": "real"|"synthetic"?}`
//!
//! A missing label is derived from the declared threshold (default 0.5).

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Label};
use crate::error::{Error, Result};
use crate::lm_backend::remote::{get_json, post_json};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorVerdict {
    /// Probability of the synthetic class.
    pub score: f64,
    pub label: Label,
    pub detector_id: String,
}

/// Anything that labels a document real or synthetic.
pub trait Detector: Send + Sync {
    fn detector_id(&self) -> &str;
    fn classify(&self, doc: &Document) -> Result<DetectorVerdict>;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectorMeta {
    pub detector_id: String,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_threshold() -> f64 {
    0.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifyRequest {
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifyResponse {
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

/// Stateless client for a detector endpoint.
#[derive(Debug, Clone)]
pub struct RemoteDetector {
    base: String,
    agent: ureq::Agent,
    meta: DetectorMeta,
}

impl RemoteDetector {
    pub fn connect(base_url: &str) -> Result<Self> {
        let base = base_url.trim_end_matches('/').to_string();
        let agent = ureq::AgentBuilder::new()
            .timeout_connect(Duration::from_secs(5))
            .timeout(Duration::from_secs(120))
            .build();
        let meta: DetectorMeta = get_json(&agent, &format!("{base}/v1/meta"))?;
        Ok(RemoteDetector { base, agent, meta })
    }

    pub fn threshold(&self) -> f64 {
        self.meta.threshold
    }
}

impl Detector for RemoteDetector {
    fn detector_id(&self) -> &str {
        &self.meta.detector_id
    }

    fn classify(&self, doc: &Document) -> Result<DetectorVerdict> {
        let url = format!("{}/v1/classify", self.base);
        let resp: ClassifyResponse = post_json(&self.agent, &url, &ClassifyRequest { text: doc.text.clone() })?;
        if !(0.0..=1.0).contains(&resp.score) {
            return Err(Error::Transport {
                endpoint: url,
                message: format!("score {} outside [0,1]", resp.score),
            });
        }
        let label = match resp.label {
            Some(l @ (Label::Real | Label::Synthetic)) => l,
            _ if resp.score >= self.meta.threshold => Label::Synthetic,
            _ => Label::Real,
        };
        Ok(DetectorVerdict {
            score: resp.score,
            label,
            detector_id: self.meta.detector_id.clone(),
        })
    }
}
