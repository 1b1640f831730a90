//! JSON-over-HTTP backend client.
//!
//! Endpoints, relative to the base URL:
//!
//! - `POST /v1/complete` `{prompt, max_tokens, temperature, stop, seed}` -> `{text}`
//! - `POST /v1/logprob` `{prompt, completion}` -> `{logprob}`
//! - `POST /v1/score` `{instruction, input, output}` -> `{rew, nat, coh, und}`
//!
//! Transport errors, timeouts, 429 and 5xx responses are retried with
//! exponential backoff. 404, 405 and 501 mean the server lacks the endpoint.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use refine_core::backend::{truncate_at_stop, HealthCheck};
use refine_core::{BackendError, Capabilities, GenParams, Generator, HealthStatus, IndicatorScores, LogProber, QualityScorer};
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

const MAX_BACKOFF: Duration = Duration::from_secs(30);

#[derive(Debug, Clone)]
pub struct HttpOptions {
    pub timeout: Duration,
    pub max_retries: u32,
    pub backoff: Duration,
    pub concurrency: usize,
    pub api_key: Option<String>,
}

impl Default for HttpOptions {
    fn default() -> Self {
        HttpOptions {
            timeout: Duration::from_secs(120),
            max_retries: 3,
            backoff: Duration::from_millis(500),
            concurrency: 4,
            api_key: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HttpBackend {
    base: String,
    client: Client,
    opts: HttpOptions,
}

#[derive(Serialize)]
struct CompleteRequest<'a> {
    prompt: &'a str,
    max_tokens: u32,
    temperature: f64,
    stop: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct CompleteResponse {
    text: String,
}

#[derive(Serialize)]
struct LogprobRequest<'a> {
    prompt: &'a str,
    completion: &'a str,
}

#[derive(Deserialize)]
struct LogprobResponse {
    logprob: f64,
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    instruction: &'a str,
    input: &'a str,
    output: &'a str,
}

enum Failure {
    Retry(BackendError),
    Fatal(BackendError),
}

impl HttpBackend {
    pub fn new(base_url: &str, opts: HttpOptions) -> Result<Self, BackendError> {
        let client = Client::builder()
            .timeout(opts.timeout)
            .build()
            .map_err(|e| BackendError::Transport(format!("cannot build HTTP client: {e}")))?;
        Ok(HttpBackend { base: base_url.trim_end_matches('/').to_string(), client, opts })
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn attempt<Req: Serialize, Resp: DeserializeOwned>(&self, path: &str, body: &Req) -> Result<Resp, Failure> {
        let mut req = self.client.post(format!("{}{path}", self.base)).json(body);
        if let Some(key) = &self.opts.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                Failure::Retry(BackendError::Timeout)
            } else {
                Failure::Retry(BackendError::Transport(e.to_string()))
            }
        })?;
        let status = resp.status();
        if status.is_success() {
            return resp
                .json::<Resp>()
                .map_err(|e| Failure::Fatal(BackendError::Validation(format!("{path}: malformed response: {e}"))));
        }
        let text = resp.text().unwrap_or_default();
        let msg = format!("{path}: HTTP {}: {}", status.as_u16(), text.trim());
        Err(match status {
            StatusCode::NOT_FOUND | StatusCode::METHOD_NOT_ALLOWED | StatusCode::NOT_IMPLEMENTED => {
                Failure::Fatal(BackendError::Capability(msg))
            }
            StatusCode::TOO_MANY_REQUESTS => Failure::Retry(BackendError::Backend(msg)),
            s if s.is_server_error() => Failure::Retry(BackendError::Backend(msg)),
            _ => Failure::Fatal(BackendError::InvalidRequest(msg)),
        })
    }

    fn post<Req: Serialize, Resp: DeserializeOwned>(&self, path: &str, body: &Req) -> Result<Resp, BackendError> {
        let mut delay = self.opts.backoff;
        let mut attempt = 0;
        loop {
            match self.attempt(path, body) {
                Ok(r) => return Ok(r),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retry(e)) => {
                    if attempt >= self.opts.max_retries {
                        return Err(e);
                    }
                    tracing::debug!(path, attempt, error = %e, "retrying");
                    thread::sleep(delay);
                    delay = (delay * 2).min(MAX_BACKOFF);
                    attempt += 1;
                }
            }
        }
    }

    /// Run `f` over `0..n` on at most `concurrency` threads, handing results
    /// to `sink` on the calling thread as they finish.
    fn fan_out<T: Send>(&self, n: usize, f: impl Fn(usize) -> T + Sync, sink: &mut dyn FnMut(usize, T)) {
        let workers = self.opts.concurrency.max(1).min(n);
        if workers <= 1 {
            for i in 0..n {
                sink(i, f(i));
            }
            return;
        }
        let next = AtomicUsize::new(0);
        let (tx, rx) = mpsc::channel();
        thread::scope(|s| {
            for _ in 0..workers {
                let tx = tx.clone();
                let (next, f) = (&next, &f);
                s.spawn(move || loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= n || tx.send((i, f(i))).is_err() {
                        break;
                    }
                });
            }
            drop(tx);
            for (i, r) in rx {
                sink(i, r);
            }
        });
    }

    fn ordered<T: Send>(&self, n: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
        let mut slots: Vec<Option<T>> = (0..n).map(|_| None).collect();
        self.fan_out(n, f, &mut |i, r| slots[i] = Some(r));
        slots.into_iter().map(|s| s.expect("every index produced")).collect()
    }

    fn probe<Req: Serialize>(&self, path: &str, body: &Req) -> Result<bool, String> {
        match self.attempt::<Req, serde_json::Value>(path, body) {
            Ok(_) => Ok(true),
            Err(Failure::Retry(BackendError::Transport(m))) => Err(m),
            Err(Failure::Retry(BackendError::Timeout)) => Err("timed out".into()),
            Err(_) => Ok(false),
        }
    }
}

impl Generator for HttpBackend {
    fn complete(&self, prompt: &str, params: &GenParams) -> Result<String, BackendError> {
        params.validate()?;
        if prompt.trim().is_empty() {
            return Err(BackendError::InvalidRequest("empty prompt".into()));
        }
        let body = CompleteRequest {
            prompt,
            max_tokens: params.max_tokens,
            temperature: params.temperature,
            stop: &params.stop,
            seed: params.seed,
        };
        let resp: CompleteResponse = self.post("/v1/complete", &body)?;
        Ok(truncate_at_stop(&resp.text, &params.stop))
    }

    fn complete_batch(&self, requests: &[(String, GenParams)]) -> Vec<Result<String, BackendError>> {
        self.ordered(requests.len(), |i| self.complete(&requests[i].0, &requests[i].1))
    }

    fn complete_unordered(&self, requests: &[(String, GenParams)], sink: &mut dyn FnMut(usize, Result<String, BackendError>)) {
        self.fan_out(requests.len(), |i| self.complete(&requests[i].0, &requests[i].1), sink)
    }
}

impl LogProber for HttpBackend {
    fn logprob(&self, prompt: &str, completion: &str) -> Result<f64, BackendError> {
        if completion.trim().is_empty() {
            return Err(BackendError::InvalidRequest("empty completion".into()));
        }
        let resp: LogprobResponse = self.post("/v1/logprob", &LogprobRequest { prompt, completion })?;
        if !resp.logprob.is_finite() {
            return Err(BackendError::Validation(format!("non-finite logprob {}", resp.logprob)));
        }
        Ok(resp.logprob)
    }
}

impl QualityScorer for HttpBackend {
    fn score_quality(&self, instruction: &str, input: &str, output: &str) -> Result<IndicatorScores, BackendError> {
        if instruction.trim().is_empty() || output.trim().is_empty() {
            return Err(BackendError::InvalidRequest("instruction and output must be non-empty".into()));
        }
        let s: IndicatorScores = self.post("/v1/score", &ScoreRequest { instruction, input, output })?;
        s.validate()?;
        Ok(s)
    }

    fn score_batch(&self, triplets: &[(String, String, String)]) -> Vec<Result<IndicatorScores, BackendError>> {
        self.ordered(triplets.len(), |i| {
            let (a, b, c) = &triplets[i];
            self.score_quality(a, b, c)
        })
    }
}

impl HealthCheck for HttpBackend {
    /// Probe each endpoint with a minimal request.
    fn health_check(&self) -> HealthStatus {
        let stop: Vec<String> = Vec::new();
        let checks = (
            self.probe("/v1/complete", &CompleteRequest { prompt: "ping", max_tokens: 1, temperature: 0.0, stop: &stop, seed: None }),
            self.probe("/v1/logprob", &LogprobRequest { prompt: "ping", completion: "pong" }),
            self.probe("/v1/score", &ScoreRequest { instruction: "ping", input: "", output: "pong" }),
        );
        match checks {
            (Ok(generation), Ok(logprob), Ok(scoring)) => {
                HealthStatus::Reachable { capabilities: Capabilities { generation, logprob, scoring } }
            }
            (Err(reason), _, _) | (_, Err(reason), _) | (_, _, Err(reason)) => HealthStatus::Unreachable { reason },
        }
    }
}
