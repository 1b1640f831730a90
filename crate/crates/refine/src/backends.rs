//! Endpoint strings to concrete backends.

use std::time::Duration;

use refine_core::backend::HealthCheck;
use refine_core::hash::derive_seed;
use refine_core::mock::MockBackend;
use refine_core::{BackendError, GenParams, Generator, HealthStatus, IndicatorScores, LogProber, QualityScorer};

use crate::config::PipelineConfig;
use crate::http::{HttpBackend, HttpOptions};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    /// Deterministic in-process mock; `None` derives the seed from the config.
    Mock(Option<u64>),
    Http(String),
}

impl Endpoint {
    pub fn parse(s: &str) -> Result<Endpoint, String> {
        let s = s.trim();
        if s == "mock" {
            return Ok(Endpoint::Mock(None));
        }
        if let Some(seed) = s.strip_prefix("mock:") {
            return seed.parse().map(|n| Endpoint::Mock(Some(n))).map_err(|_| format!("bad mock seed in `{s}`"));
        }
        if s.starts_with("http://") || s.starts_with("https://") {
            return Ok(Endpoint::Http(s.to_string()));
        }
        Err(format!("`{s}` is neither `mock`, `mock:<seed>` nor an http(s) URL"))
    }
}

/// Which configured endpoint a backend plays; mocks get distinct seeds per role.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Base,
    Trained,
    Scorer,
}

impl Role {
    fn stream(self) -> u64 {
        match self {
            Role::Base => 1,
            Role::Trained => 2,
            Role::Scorer => 3,
        }
    }
}

#[derive(Debug, Clone)]
pub enum AnyBackend {
    Mock(MockBackend),
    Http(HttpBackend),
}

impl AnyBackend {
    pub fn from_endpoint(endpoint: &Endpoint, role: Role, cfg: &PipelineConfig) -> Result<Self, BackendError> {
        Ok(match endpoint {
            Endpoint::Mock(seed) => {
                AnyBackend::Mock(MockBackend::new(seed.unwrap_or_else(|| derive_seed(cfg.seed, role.stream()))))
            }
            Endpoint::Http(url) => {
                let e = &cfg.endpoints;
                let opts = HttpOptions {
                    timeout: Duration::from_secs_f64(e.timeout_secs),
                    max_retries: e.max_retries,
                    backoff: Duration::from_millis(e.backoff_ms),
                    concurrency: cfg.concurrency(),
                    api_key: e.api_key.clone(),
                };
                AnyBackend::Http(HttpBackend::new(url, opts)?)
            }
        })
    }

    /// Backend for a configured role. `explicit` may name another role
    /// (`base`, `trained`, `scorer`) or give an endpoint string directly.
    pub fn for_role(cfg: &PipelineConfig, role: Role, explicit: Option<&str>) -> Result<Self, BackendError> {
        let role = match explicit {
            Some("base") => Role::Base,
            Some("trained") => Role::Trained,
            Some("scorer") => Role::Scorer,
            _ => role,
        };
        let target = match (explicit, role) {
            (Some(s), _) if !matches!(s, "base" | "trained" | "scorer") => s,
            (_, Role::Base) => &cfg.endpoints.base,
            (_, Role::Trained) => &cfg.endpoints.trained,
            (_, Role::Scorer) => &cfg.endpoints.scorer,
        };
        let endpoint = Endpoint::parse(target).map_err(BackendError::InvalidRequest)?;
        AnyBackend::from_endpoint(&endpoint, role, cfg)
    }

    pub fn describe(&self) -> String {
        match self {
            AnyBackend::Mock(m) => format!("mock:{}", m.seed()),
            AnyBackend::Http(h) => h.base_url().to_string(),
        }
    }
}

impl Generator for AnyBackend {
    fn complete(&self, prompt: &str, params: &GenParams) -> Result<String, BackendError> {
        match self {
            AnyBackend::Mock(b) => b.complete(prompt, params),
            AnyBackend::Http(b) => b.complete(prompt, params),
        }
    }

    fn complete_batch(&self, requests: &[(String, GenParams)]) -> Vec<Result<String, BackendError>> {
        match self {
            AnyBackend::Mock(b) => b.complete_batch(requests),
            AnyBackend::Http(b) => b.complete_batch(requests),
        }
    }

    fn complete_unordered(&self, requests: &[(String, GenParams)], sink: &mut dyn FnMut(usize, Result<String, BackendError>)) {
        match self {
            AnyBackend::Mock(b) => b.complete_unordered(requests, sink),
            AnyBackend::Http(b) => b.complete_unordered(requests, sink),
        }
    }
}

impl LogProber for AnyBackend {
    fn logprob(&self, prompt: &str, completion: &str) -> Result<f64, BackendError> {
        match self {
            AnyBackend::Mock(b) => b.logprob(prompt, completion),
            AnyBackend::Http(b) => b.logprob(prompt, completion),
        }
    }
}

impl QualityScorer for AnyBackend {
    fn score_quality(&self, instruction: &str, input: &str, output: &str) -> Result<IndicatorScores, BackendError> {
        match self {
            AnyBackend::Mock(b) => b.score_quality(instruction, input, output),
            AnyBackend::Http(b) => b.score_quality(instruction, input, output),
        }
    }

    fn score_batch(&self, triplets: &[(String, String, String)]) -> Vec<Result<IndicatorScores, BackendError>> {
        match self {
            AnyBackend::Mock(b) => b.score_batch(triplets),
            AnyBackend::Http(b) => b.score_batch(triplets),
        }
    }
}

impl HealthCheck for AnyBackend {
    fn health_check(&self) -> HealthStatus {
        match self {
            AnyBackend::Mock(b) => b.health_check(),
            AnyBackend::Http(b) => b.health_check(),
        }
    }
}
