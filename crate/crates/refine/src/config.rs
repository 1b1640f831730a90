//! Pipeline configuration: a TOML file plus `REFINE_*` environment overrides.

use std::path::Path;

use refine_core::bootstrap::BootstrapConfig;
use refine_core::eval::{PromptTemplate, ReferenceRule, DEFAULT_RESAMPLES};
use refine_core::instancegen::InstanceGenConfig;
use refine_core::pool::default_blacklist;
use refine_core::reward::{RewardWeights, DEFAULT_BETA};
use refine_core::toyrl::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::io::{hex, DEFAULT_MAX_INSTANCES};

pub const ENV_ENDPOINT_BASE: &str = "REFINE_ENDPOINT_BASE";
pub const ENV_ENDPOINT_TRAINED: &str = "REFINE_ENDPOINT_TRAINED";
pub const ENV_ENDPOINT_SCORER: &str = "REFINE_ENDPOINT_SCORER";
pub const ENV_API_KEY: &str = "REFINE_API_KEY";
pub const ENV_WORKERS: &str = "REFINE_WORKERS";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("invalid config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    /// `mock`, `mock:<seed>` or an `http(s)://` base URL.
    pub base: String,
    pub trained: String,
    pub scorer: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
    /// Initial backoff between retries; doubles per attempt.
    pub backoff_ms: u64,
    /// In-flight requests per endpoint.
    pub concurrency: usize,
    /// Bearer token; usually injected through the environment.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub api_key: Option<String>,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base: "mock".into(),
            trained: "mock".into(),
            scorer: "mock".into(),
            timeout_secs: 120.0,
            max_retries: 3,
            backoff_ms: 500,
            concurrency: 4,
            api_key: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub template: PromptTemplate,
    pub max_tokens: u32,
    pub temperature: f64,
    pub max_instances: usize,
    pub reference_rule: ReferenceRule,
    pub resamples: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            template: PromptTemplate::default(),
            max_tokens: 128,
            temperature: 0.0,
            max_instances: DEFAULT_MAX_INSTANCES,
            reference_rule: ReferenceRule::Max,
            resamples: DEFAULT_RESAMPLES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyConfig {
    pub instructions: usize,
    pub responses: usize,
    #[serde(flatten)]
    pub train: TrainConfig,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig { instructions: 5, responses: 8, train: TrainConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Worker threads per stage; caps endpoint concurrency when set.
    pub workers: Option<usize>,
    pub beta: f64,
    /// Whole-word keywords that disqualify a generated instruction.
    pub blacklist: Vec<String>,
    pub endpoints: EndpointConfig,
    pub weights: RewardWeights,
    pub bootstrap: BootstrapConfig,
    pub instancegen: InstanceGenConfig,
    pub eval: EvalConfig,
    pub toyrl: ToyConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            workers: None,
            beta: DEFAULT_BETA,
            blacklist: default_blacklist(),
            endpoints: EndpointConfig::default(),
            weights: RewardWeights::default(),
            bootstrap: BootstrapConfig::default(),
            instancegen: InstanceGenConfig::default(),
            eval: EvalConfig::default(),
            toyrl: ToyConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse { path: origin.into(), message: e.to_string() })
    }

    /// Read `path` (or start from defaults) and apply environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|source| ConfigError::Read { path: p.display().to_string(), source })?;
                Self::from_toml(&text, &p.display().to_string())?
            }
            None => PipelineConfig::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = get(ENV_ENDPOINT_BASE) {
            self.endpoints.base = v;
        }
        if let Some(v) = get(ENV_ENDPOINT_TRAINED) {
            self.endpoints.trained = v;
        }
        if let Some(v) = get(ENV_ENDPOINT_SCORER) {
            self.endpoints.scorer = v;
        }
        if let Some(v) = get(ENV_API_KEY) {
            self.endpoints.api_key = Some(v);
        }
        if let Some(v) = get(ENV_WORKERS) {
            let n: usize =
                v.trim().parse().map_err(|_| ConfigError::Invalid(format!("{ENV_WORKERS}={v} is not a count")))?;
            self.workers = Some(n);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be positive and finite, got {}", self.beta));
        }
        if self.workers == Some(0) {
            return bad("workers must be positive".into());
        }
        let e = &self.endpoints;
        if !(e.timeout_secs > 0.0 && e.timeout_secs.is_finite()) {
            return bad("endpoints.timeout_secs must be positive".into());
        }
        if e.concurrency == 0 {
            return bad("endpoints.concurrency must be positive".into());
        }
        for (name, url) in [("base", &e.base), ("trained", &e.trained), ("scorer", &e.scorer)] {
            crate::backends::Endpoint::parse(url).map_err(|m| ConfigError::Invalid(format!("endpoints.{name}: {m}")))?;
        }
        self.weights.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.bootstrap.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.toyrl.train.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.eval.max_tokens == 0 || self.eval.temperature < 0.0 {
            return bad("eval.max_tokens must be positive and eval.temperature non-negative".into());
        }
        if self.eval.resamples == 0 || self.eval.max_instances == 0 {
            return bad("eval.resamples and eval.max_instances must be positive".into());
        }
        Ok(())
    }

    /// Effective per-endpoint concurrency.
    pub fn concurrency(&self) -> usize {
        match self.workers {
            Some(w) => w.min(self.endpoints.concurrency).max(1),
            None => self.endpoints.concurrency,
        }
    }

    /// SHA-256 of the canonical JSON form, secrets excluded.
    pub fn sha256(&self) -> String {
        let mut redacted = self.clone();
        redacted.endpoints.api_key = None;
        let json = serde_json::to_vec(&redacted).expect("config serializes");
        hex(&Sha256::digest(&json))
    }
}
