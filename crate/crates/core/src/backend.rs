//! Model access contracts: text generation, completion log-probabilities and
//! quality scoring. Implementations live elsewhere (the deterministic
//! [`crate::mock::MockBackend`] here, HTTP clients in the `refine` crate).

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("backend returned an error: {0}")]
    Backend(String),
    #[error("backend lacks capability: {0}")]
    Capability(String),
    #[error("invalid response: {0}")]
    Validation(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl BackendError {
    /// Whether retrying the same request may succeed.
    pub fn is_transient(&self) -> bool {
        matches!(self, BackendError::Transport(_) | BackendError::Timeout)
    }
}

/// Decoding parameters for one completion request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub max_tokens: u32,
    pub temperature: f64,
    #[serde(default)]
    pub stop: Vec<String>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl GenParams {
    pub fn new(max_tokens: u32, temperature: f64) -> Result<Self, BackendError> {
        let p = GenParams { max_tokens, temperature, stop: Vec::new(), seed: None };
        p.validate()?;
        Ok(p)
    }

    pub fn with_stop<I, S>(mut self, stop: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.stop = stop.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_tokens must be >= 1".into()));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(BackendError::InvalidRequest("temperature must be finite and >= 0".into()));
        }
        Ok(())
    }
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams { max_tokens: 512, temperature: 1.0, stop: Vec::new(), seed: None }
    }
}

/// Cut `text` right before the earliest occurrence of any stop string.
pub fn truncate_at_stop(text: &str, stop: &[String]) -> String {
    let cut = stop
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| text.find(s.as_str()))
        .min()
        .unwrap_or(text.len());
    text[..cut].to_string()
}

/// The four automated quality indicators of one (instruction, input, output)
/// triplet: reward-model score plus naturalness, coherence and
/// understandability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndicatorScores {
    pub rew: f64,
    pub nat: f64,
    pub coh: f64,
    pub und: f64,
}

impl IndicatorScores {
    pub const ZERO: IndicatorScores = IndicatorScores { rew: 0.0, nat: 0.0, coh: 0.0, und: 0.0 };

    pub fn new(rew: f64, nat: f64, coh: f64, und: f64) -> Result<Self, BackendError> {
        let s = IndicatorScores { rew, nat, coh, und };
        s.validate()?;
        Ok(s)
    }

    /// `rew` must be finite; the three dialogue indicators must lie in `[0, 1]`.
    pub fn validate(&self) -> Result<(), BackendError> {
        if !self.rew.is_finite() {
            return Err(BackendError::Validation("rew is not finite".into()));
        }
        for (name, v) in [("nat", self.nat), ("coh", self.coh), ("und", self.und)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(BackendError::Validation(alloc::format!("{name}={v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub generation: bool,
    pub logprob: bool,
    pub scoring: bool,
}

impl Capabilities {
    pub const ALL: Capabilities = Capabilities { generation: true, logprob: true, scoring: true };
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum HealthStatus {
    Reachable { capabilities: Capabilities },
    Unreachable { reason: String },
}

pub trait Generator {
    fn complete(&self, prompt: &str, params: &GenParams) -> Result<String, BackendError>;

    /// Complete several requests; results come back in request order.
    fn complete_batch(&self, requests: &[(String, GenParams)]) -> Vec<Result<String, BackendError>> {
        requests.iter().map(|(p, g)| self.complete(p, g)).collect()
    }

    /// Complete several requests, handing each result to `sink` as soon as it
    /// is available, tagged with its request index. Order is unspecified.
    fn complete_unordered(
        &self,
        requests: &[(String, GenParams)],
        sink: &mut dyn FnMut(usize, Result<String, BackendError>),
    ) {
        for (i, (p, g)) in requests.iter().enumerate() {
            sink(i, self.complete(p, g));
        }
    }
}

pub trait LogProber {
    /// Sum of token log-probabilities of `completion` given `prompt`.
    fn logprob(&self, prompt: &str, completion: &str) -> Result<f64, BackendError>;
}

pub trait QualityScorer {
    fn score_quality(&self, instruction: &str, input: &str, output: &str) -> Result<IndicatorScores, BackendError>;

    /// Score several triplets; results come back in input order.
    fn score_batch(&self, triplets: &[(String, String, String)]) -> Vec<Result<IndicatorScores, BackendError>> {
        triplets.iter().map(|(i, x, y)| self.score_quality(i, x, y)).collect()
    }
}

pub trait HealthCheck {
    fn health_check(&self) -> HealthStatus;
}

impl<T: Generator + ?Sized> Generator for &T {
    fn complete(&self, prompt: &str, params: &GenParams) -> Result<String, BackendError> {
        (**self).complete(prompt, params)
    }
    fn complete_batch(&self, requests: &[(String, GenParams)]) -> Vec<Result<String, BackendError>> {
        (**self).complete_batch(requests)
    }
    fn complete_unordered(&self, requests: &[(String, GenParams)], sink: &mut dyn FnMut(usize, Result<String, BackendError>)) {
        (**self).complete_unordered(requests, sink)
    }
}

impl<T: LogProber + ?Sized> LogProber for &T {
    fn logprob(&self, prompt: &str, completion: &str) -> Result<f64, BackendError> {
        (**self).logprob(prompt, completion)
    }
}

impl<T: QualityScorer + ?Sized> QualityScorer for &T {
    fn score_quality(&self, instruction: &str, input: &str, output: &str) -> Result<IndicatorScores, BackendError> {
        (**self).score_quality(instruction, input, output)
    }
    fn score_batch(&self, triplets: &[(String, String, String)]) -> Vec<Result<IndicatorScores, BackendError>> {
        (**self).score_batch(triplets)
    }
}

/// Adapts a closure into a [`Generator`]; handy for scripted test backends.
pub struct FnGenerator<F>(pub F);

impl<F> Generator for FnGenerator<F>
where
    F: Fn(&str, &GenParams) -> Result<String, BackendError>,
{
    fn complete(&self, prompt: &str, params: &GenParams) -> Result<String, BackendError> {
        params.validate()?;
        (self.0)(prompt, params).map(|t| truncate_at_stop(&t, &params.stop))
    }
}

/// Adapts a closure into a [`QualityScorer`], validating its output ranges.
pub struct FnScorer<F>(pub F);

impl<F> QualityScorer for FnScorer<F>
where
    F: Fn(&str, &str, &str) -> Result<IndicatorScores, BackendError>,
{
    fn score_quality(&self, instruction: &str, input: &str, output: &str) -> Result<IndicatorScores, BackendError> {
        let s = (self.0)(instruction, input, output)?;
        s.validate()?;
        Ok(s)
    }
}
