//! Growing the instruction pool from seeds by in-context generation.
//!
//! Each generation call shows the model 8 pool members (6 seeds and 2
//! generated ones, seeds filling any shortfall), asks it to continue the task
//! list, parses the continuation into candidates and runs every candidate
//! through the pool's admission filter in the order it appeared.
//!
//! Randomness for call `k` is derived from `(pool seed, k)`, so a run resumed
//! from a snapshot continues exactly where an uninterrupted run would.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, GenParams, Generator};
use crate::hash::derive_seed;
use crate::pool::{Admission, PoolState, Rejection, Threshold};
use crate::types::Instruction;

pub const INSTRUCTION_TEMPLATE: &str = include_str!("../templates/instruction_prompt.txt");

/// Number of in-context examples the template has slots for.
pub const TEMPLATE_SLOTS: usize = 8;

const PARAMS_STREAM: u64 = 0x5eed_0f9a_4a11;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BootstrapError {
    #[error("pool too small: need {needed} seed instructions, have {available}")]
    PoolTooSmall { needed: usize, available: usize },
    #[error("expected {expected} in-context examples, got {got}")]
    WrongExampleCount { expected: usize, got: usize },
    #[error("invalid bootstrap config: {0}")]
    InvalidConfig(String),
    #[error("generation call {call} failed: {source}")]
    Backend { call: u64, source: BackendError, log: BootstrapLog },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdmissionOrder {
    /// Results are admitted in request-issue order; runs replay exactly.
    #[default]
    Ordered,
    /// Results are admitted as they arrive; faster, not replayable.
    Unordered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub target_count: usize,
    pub in_context_total: usize,
    pub in_context_seed: usize,
    pub in_context_generated: usize,
    pub similarity_threshold: Threshold,
    pub max_new_per_call: usize,
    /// Generation calls allowed per invocation; `None` means 10 × target.
    pub call_budget: Option<u64>,
    /// Requests sampled from the same pool state and issued together.
    pub requests_per_round: usize,
    pub order: AdmissionOrder,
    pub max_tokens: u32,
    pub temperature: f64,
    pub stop: Vec<String>,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            target_count: 15_000,
            in_context_total: 8,
            in_context_seed: 6,
            in_context_generated: 2,
            similarity_threshold: Threshold::default(),
            max_new_per_call: 8,
            call_budget: None,
            requests_per_round: 1,
            order: AdmissionOrder::Ordered,
            max_tokens: 1024,
            temperature: 1.0,
            stop: alloc::vec!["\nTask 17:".to_string()],
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<(), BootstrapError> {
        let bad = |m: &str| Err(BootstrapError::InvalidConfig(m.to_string()));
        if self.target_count == 0 {
            return bad("target_count must be positive");
        }
        if self.in_context_total != TEMPLATE_SLOTS {
            return bad("in_context_total must equal the template's 8 slots");
        }
        if self.in_context_seed + self.in_context_generated != self.in_context_total {
            return bad("in_context_seed + in_context_generated must equal in_context_total");
        }
        if self.similarity_threshold.get() <= 0.0 {
            return bad("similarity_threshold must be in (0, 1]");
        }
        if self.max_new_per_call == 0 || self.requests_per_round == 0 {
            return bad("max_new_per_call and requests_per_round must be positive");
        }
        GenParams { max_tokens: self.max_tokens, temperature: self.temperature, stop: Vec::new(), seed: None }
            .validate()
            .map_err(|e| BootstrapError::InvalidConfig(e.to_string()))
    }

    pub fn budget(&self) -> u64 {
        self.call_budget.unwrap_or(10 * self.target_count as u64)
    }
}

/// Draw the in-context examples for one call.
///
/// Takes `in_context_generated` distinct generated instructions when that many
/// exist, fills the rest with distinct seeds, and shuffles the result.
pub fn sample_in_context<R: rand::Rng + ?Sized>(
    pool: &PoolState,
    config: &BootstrapConfig,
    rng: &mut R,
) -> Result<Vec<Instruction>, BootstrapError> {
    let (seeds, generated): (Vec<&Instruction>, Vec<&Instruction>) = pool.instructions().iter().partition(|i| i.is_seed());
    let take_gen = config.in_context_generated.min(generated.len());
    let take_seed = config.in_context_total - take_gen;
    if seeds.len() < take_seed {
        return Err(BootstrapError::PoolTooSmall { needed: take_seed, available: seeds.len() });
    }
    let mut chosen: Vec<Instruction> = seeds.choose_multiple(rng, take_seed).map(|i| (*i).clone()).collect();
    chosen.extend(generated.choose_multiple(rng, take_gen).map(|i| (*i).clone()));
    chosen.shuffle(rng);
    Ok(chosen)
}

/// Fill the instruction template's eight slots verbatim and end on the
/// `Task 9:` cue.
pub fn render_instruction_prompt<S: AsRef<str>>(examples: &[S]) -> Result<String, BootstrapError> {
    if examples.len() != TEMPLATE_SLOTS {
        return Err(BootstrapError::WrongExampleCount { expected: TEMPLATE_SLOTS, got: examples.len() });
    }
    let mut out = String::with_capacity(INSTRUCTION_TEMPLATE.len() + 512);
    let mut rest = INSTRUCTION_TEMPLATE;
    for (k, ex) in examples.iter().enumerate() {
        let slot = alloc::format!("{{instruction for existing task {}}}", k + 1);
        let at = rest.find(&slot).expect("template slot present");
        out.push_str(&rest[..at]);
        out.push_str(ex.as_ref());
        rest = &rest[at + slot.len()..];
    }
    out.push_str(rest);
    Ok(out)
}

/// `Some(k)` when `line` is a `Task <k>:` marker; also returns the text after the colon.
fn task_marker(line: &str) -> Option<(usize, &str)> {
    let rest = line.trim_start().strip_prefix("Task")?;
    let trimmed = rest.trim_start();
    if trimmed.len() == rest.len() {
        return None;
    }
    let digits_end = trimmed.find(|c: char| !c.is_ascii_digit()).unwrap_or(trimmed.len());
    if digits_end == 0 {
        return None;
    }
    let k: usize = trimmed[..digits_end].parse().ok()?;
    let after = trimmed[digits_end..].trim_start().strip_prefix(':')?;
    Some((k, after))
}

/// Index of the trailing `Task <k>:` cue of a rendered instruction prompt.
pub fn next_task_index(prompt: &str) -> Option<usize> {
    let last = prompt.trim_end().lines().last()?;
    match task_marker(last) {
        Some((k, rest)) if rest.trim().is_empty() => Some(k),
        _ => None,
    }
}

/// Split a continuation of the `Task 9:` cue into candidate instructions.
///
/// Text before the first marker continues task 9; each later `Task <k>:`
/// line starts a new candidate whatever its number. Candidates are trimmed,
/// empties dropped, and at most `cap` are returned.
pub fn parse_generated_instructions(completion: &str, cap: usize) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut current = String::new();
    let flush = |buf: &mut String, out: &mut Vec<String>| {
        let t = buf.trim();
        if !t.is_empty() {
            out.push(t.to_string());
        }
        buf.clear();
    };
    for line in completion.lines() {
        if let Some((_, rest)) = task_marker(line) {
            flush(&mut current, &mut out);
            current.push_str(rest);
        } else {
            if !current.is_empty() {
                current.push('\n');
            }
            current.push_str(line);
        }
    }
    flush(&mut current, &mut out);
    out.truncate(cap);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub call: u64,
    pub candidate: String,
    pub admitted: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reason: Option<Rejection>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub max_similarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BootstrapLog {
    pub entries: Vec<LogEntry>,
    pub calls: u64,
    pub admitted: usize,
    pub rejected: BTreeMap<Rejection, usize>,
}

impl BootstrapLog {
    fn record(&mut self, call: u64, candidate: String, admission: &Admission) {
        let entry = match admission {
            Admission::Admitted { instruction, max_similarity } => {
                self.admitted += 1;
                LogEntry { call, candidate, admitted: true, reason: None, id: Some(instruction.id.clone()), max_similarity: Some(*max_similarity) }
            }
            Admission::Rejected { reason, max_similarity } => {
                *self.rejected.entry(*reason).or_insert(0) += 1;
                LogEntry { call, candidate, admitted: false, reason: Some(*reason), id: None, max_similarity: *max_similarity }
            }
        };
        self.entries.push(entry);
    }

    pub fn rejected_total(&self) -> usize {
        self.rejected.values().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapStatus {
    ReachedTarget,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapReport {
    pub status: BootstrapStatus,
    pub log: BootstrapLog,
}

fn call_params(pool: &PoolState, config: &BootstrapConfig, call: u64) -> GenParams {
    GenParams {
        max_tokens: config.max_tokens,
        temperature: config.temperature,
        stop: config.stop.clone(),
        seed: Some(derive_seed(pool.rng_seed() ^ PARAMS_STREAM, call)),
    }
}

fn build_request(pool: &mut PoolState, config: &BootstrapConfig) -> Result<(u64, String, GenParams), BootstrapError> {
    let call = pool.calls_made() + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(pool.rng_seed(), call));
    let examples = sample_in_context(pool, config, &mut rng)?;
    let texts: Vec<&str> = examples.iter().map(|i| i.text.as_str()).collect();
    let prompt = render_instruction_prompt(&texts)?;
    let params = call_params(pool, config, call);
    pool.record_call();
    Ok((call, prompt, params))
}

fn admit_completion(pool: &mut PoolState, config: &BootstrapConfig, log: &mut BootstrapLog, call: u64, text: &str) {
    for cand in parse_generated_instructions(text, config.max_new_per_call) {
        let admission = pool.admit(&cand, config.similarity_threshold, call);
        log.record(call, cand, &admission);
    }
    log.calls += 1;
}

/// Grow `pool` until it holds at least `target_count` instructions or the call
/// budget runs out.
///
/// All candidates of the call that crosses the target are still processed,
/// so the pool may overshoot. On a backend failure the pool keeps every
/// admission made so far and its call counter points at the failed call, so
/// a snapshot taken then resumes cleanly.
pub fn run_bootstrap<G: Generator + ?Sized>(
    pool: &mut PoolState,
    config: &BootstrapConfig,
    backend: &G,
) -> Result<BootstrapReport, BootstrapError> {
    config.validate()?;
    let budget = config.budget();
    let mut log = BootstrapLog::default();
    let mut issued = 0u64;
    while pool.len() < config.target_count {
        if issued >= budget {
            return Ok(BootstrapReport { status: BootstrapStatus::BudgetExhausted, log });
        }
        let n = (config.requests_per_round as u64).min(budget - issued);
        let mut requests = Vec::with_capacity(n as usize);
        let mut calls = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let (call, prompt, params) = build_request(pool, config)?;
            calls.push(call);
            requests.push((prompt, params));
        }
        issued += n;
        let first_call = calls[0];
        match config.order {
            AdmissionOrder::Ordered => {
                for (i, res) in backend.complete_batch(&requests).into_iter().enumerate() {
                    match res {
                        Ok(text) => admit_completion(pool, config, &mut log, calls[i], &text),
                        Err(source) => {
                            pool.rewind_calls(calls[i] - 1);
                            return Err(BootstrapError::Backend { call: calls[i], source, log });
                        }
                    }
                }
            }
            AdmissionOrder::Unordered => {
                let mut failure = None;
                backend.complete_unordered(&requests, &mut |i, res| match res {
                    Ok(text) => admit_completion(pool, config, &mut log, calls[i], &text),
                    Err(source) => {
                        if failure.is_none() {
                            failure = Some((calls[i], source));
                        }
                    }
                });
                if let Some((call, source)) = failure {
                    pool.rewind_calls(first_call - 1);
                    return Err(BootstrapError::Backend { call, source, log });
                }
            }
        }
    }
    Ok(BootstrapReport { status: BootstrapStatus::ReachedTarget, log })
}
