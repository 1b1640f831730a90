//! A categorical bandit trained with PPO on KL-shaped rewards.
//!
//! Each of `K` instructions picks one of `M` responses. Responses carry fixed
//! indicator tuples; the reward of a pick is the aggregate of its tuple and
//! the shaped reward subtracts `beta` times the policy/reference log-ratio.
//! Episodes are one step long, so there is no critic: advantages are the
//! shaped rewards centred on the batch mean.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::IndicatorScores;
use crate::hash::derive_seed;
use crate::reward::{
    aggregate_reward, moving_average, trace_diagnostics, RewardError, RewardWeights, ShapedEpisode, TraceDiagnostics,
    TracePoint, TrainingTrace, DEFAULT_BETA, DEFAULT_SPAN,
};

const ARGMAX_GAP: f64 = 1e-9;
const MAX_REDRAWS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ToyRlError {
    #[error("environment needs at least one instruction and two responses, got {k}x{m}")]
    Shape { k: usize, m: usize },
    #[error("table has {got} entries, expected {expected}")]
    TableSize { expected: usize, got: usize },
    #[error("row {row} has no unique best response")]
    TiedArgmax { row: usize },
    #[error("could not draw a row with a unique best response")]
    RejectionLimit,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("non-finite gradient at step {step}: norm {norm}, mean shaped reward {mean_shaped}")]
    NonFiniteGradient { step: usize, norm: f64, mean_shaped: f64 },
    #[error(transparent)]
    Reward(#[from] RewardError),
}

/// `K` instructions by `M` responses with a fixed indicator tuple per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyEnv {
    k: usize,
    m: usize,
    scores: Vec<IndicatorScores>,
    rewards: Vec<f64>,
}

impl ToyEnv {
    /// Build from a row-major `k * m` table. Every row must have one strictly
    /// best response under `weights`.
    pub fn from_table(k: usize, m: usize, scores: Vec<IndicatorScores>, weights: &RewardWeights) -> Result<Self, ToyRlError> {
        if k == 0 || m < 2 {
            return Err(ToyRlError::Shape { k, m });
        }
        if scores.len() != k * m {
            return Err(ToyRlError::TableSize { expected: k * m, got: scores.len() });
        }
        let rewards = scores.iter().map(|s| aggregate_reward(s, weights)).collect::<Result<Vec<_>, _>>()?;
        for row in 0..k {
            if !unique_argmax(&rewards[row * m..(row + 1) * m]) {
                return Err(ToyRlError::TiedArgmax { row });
            }
        }
        Ok(ToyEnv { k, m, scores, rewards })
    }

    /// Draw indicator tuples from `seed`, redrawing any row whose best
    /// response is not unique.
    pub fn synthetic(k: usize, m: usize, seed: u64, weights: &RewardWeights) -> Result<Self, ToyRlError> {
        if k == 0 || m < 2 {
            return Err(ToyRlError::Shape { k, m });
        }
        let mut scores = Vec::with_capacity(k * m);
        for row in 0..k {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, row as u64));
            let mut attempt = 0;
            loop {
                let cells: Vec<IndicatorScores> = (0..m)
                    .map(|_| IndicatorScores {
                        rew: rng.gen_range(-4.0..4.0),
                        nat: rng.gen(),
                        coh: rng.gen(),
                        und: rng.gen(),
                    })
                    .collect();
                let r = cells.iter().map(|s| aggregate_reward(s, weights)).collect::<Result<Vec<_>, _>>()?;
                if unique_argmax(&r) {
                    scores.extend(cells);
                    break;
                }
                attempt += 1;
                if attempt >= MAX_REDRAWS {
                    return Err(ToyRlError::RejectionLimit);
                }
            }
        }
        ToyEnv::from_table(k, m, scores, weights)
    }

    pub fn instructions(&self) -> usize {
        self.k
    }

    pub fn responses(&self) -> usize {
        self.m
    }

    pub fn scores(&self, k: usize, m: usize) -> &IndicatorScores {
        &self.scores[k * self.m + m]
    }

    pub fn reward(&self, k: usize, m: usize) -> f64 {
        self.rewards[k * self.m + m]
    }

    pub fn best_response(&self, k: usize) -> usize {
        argmax(&self.rewards[k * self.m..(k + 1) * self.m])
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

fn unique_argmax(xs: &[f64]) -> bool {
    let b = argmax(xs);
    xs.iter().enumerate().all(|(i, x)| i == b || xs[b] - x > ARGMAX_GAP)
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| libm::exp(l - max)).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

fn log_softmax_at(logits: &[f64], i: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| libm::exp(l - max)).sum();
    logits[i] - max - libm::log(z)
}

/// Trainable `K x M` logits with a frozen reference copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyPolicy {
    k: usize,
    m: usize,
    logits: Vec<f64>,
    reference: Vec<f64>,
}

impl ToyPolicy {
    /// Uniform policy; the reference is frozen at the same values.
    pub fn uniform(k: usize, m: usize) -> Self {
        ToyPolicy::from_logits(k, m, vec![0.0; k * m]).expect("sizes agree")
    }

    pub fn from_logits(k: usize, m: usize, logits: Vec<f64>) -> Result<Self, ToyRlError> {
        if logits.len() != k * m {
            return Err(ToyRlError::TableSize { expected: k * m, got: logits.len() });
        }
        Ok(ToyPolicy { k, m, reference: logits.clone(), logits })
    }

    /// Replace the trainable logits, keeping the reference.
    pub fn with_logits(mut self, logits: Vec<f64>) -> Result<Self, ToyRlError> {
        if logits.len() != self.logits.len() {
            return Err(ToyRlError::TableSize { expected: self.logits.len(), got: logits.len() });
        }
        self.logits = logits;
        Ok(self)
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn reference_logits(&self) -> &[f64] {
        &self.reference
    }

    fn row(&self, k: usize) -> &[f64] {
        &self.logits[k * self.m..(k + 1) * self.m]
    }

    fn ref_row(&self, k: usize) -> &[f64] {
        &self.reference[k * self.m..(k + 1) * self.m]
    }

    pub fn probs(&self, k: usize) -> Vec<f64> {
        softmax(self.row(k))
    }

    pub fn reference_probs(&self, k: usize) -> Vec<f64> {
        softmax(self.ref_row(k))
    }

    pub fn log_prob(&self, k: usize, m: usize) -> f64 {
        log_softmax_at(self.row(k), m)
    }

    pub fn reference_log_prob(&self, k: usize, m: usize) -> f64 {
        log_softmax_at(self.ref_row(k), m)
    }

    /// Total-variation distance between policy and reference on row `k`.
    pub fn tv_from_reference(&self, k: usize) -> f64 {
        let p = self.probs(k);
        let q = self.reference_probs(k);
        0.5 * p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }

    /// Mean over instructions of the expected aggregate reward.
    pub fn expected_reward(&self, env: &ToyEnv) -> f64 {
        let total: f64 = (0..self.k)
            .map(|k| self.probs(k).iter().enumerate().map(|(m, p)| p * env.reward(k, m)).sum::<f64>())
            .sum();
        total / self.k as f64
    }
}

/// A shaped episode plus the indices it was drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyEpisode {
    pub instruction: usize,
    pub response: usize,
    pub episode: ShapedEpisode,
}

/// Sample `batch_size` episodes: instruction uniformly, response from the
/// policy row.
pub fn rollout<R: Rng + ?Sized>(
    policy: &ToyPolicy,
    env: &ToyEnv,
    rng: &mut R,
    batch_size: usize,
    beta: f64,
) -> Result<Vec<ToyEpisode>, ToyRlError> {
    if batch_size == 0 {
        return Err(ToyRlError::EmptyBatch);
    }
    if policy.k != env.k || policy.m != env.m {
        return Err(ToyRlError::TableSize { expected: env.k * env.m, got: policy.k * policy.m });
    }
    let mut out = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let k = rng.gen_range(0..env.k);
        let probs = policy.probs(k);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut m = probs.len() - 1;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                m = i;
                break;
            }
        }
        let episode = ShapedEpisode::new(
            format!("task-{k}"),
            format!("response-{m}"),
            policy.log_prob(k, m),
            policy.reference_log_prob(k, m),
            env.reward(k, m),
            beta,
        )?;
        out.push(ToyEpisode { instruction: k, response: m, episode });
    }
    Ok(out)
}

fn advantages(batch: &[ToyEpisode]) -> Vec<f64> {
    let mean = batch.iter().map(|e| e.episode.shaped).sum::<f64>() / batch.len() as f64;
    batch.iter().map(|e| e.episode.shaped - mean).collect()
}

fn clipped(a: f64, ratio: f64, eps: f64) -> bool {
    (a > 0.0 && ratio >= 1.0 + eps) || (a < 0.0 && ratio <= 1.0 - eps)
}

/// Clipped surrogate `mean(min(rho * A, clip(rho) * A))` at the current
/// logits, with `rho` measured against the log-probabilities recorded at
/// rollout time.
pub fn surrogate_objective(policy: &ToyPolicy, batch: &[ToyEpisode], clip_eps: f64) -> f64 {
    let adv = advantages(batch);
    let total: f64 = batch
        .iter()
        .zip(&adv)
        .map(|(e, a)| {
            let ratio = libm::exp(policy.log_prob(e.instruction, e.response) - e.episode.logp_policy);
            let c = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
            f64::min(ratio * a, c * a)
        })
        .sum();
    total / batch.len() as f64
}

/// Gradient of [`surrogate_objective`] with respect to the logits, plus the
/// fraction of episodes whose term was clipped.
pub fn surrogate_gradient(policy: &ToyPolicy, batch: &[ToyEpisode], clip_eps: f64) -> (Vec<f64>, f64) {
    let adv = advantages(batch);
    let mut grad = vec![0.0; policy.logits.len()];
    let mut n_clipped = 0usize;
    let n = batch.len() as f64;
    for (e, a) in batch.iter().zip(&adv) {
        let ratio = libm::exp(policy.log_prob(e.instruction, e.response) - e.episode.logp_policy);
        if clipped(*a, ratio, clip_eps) {
            n_clipped += 1;
            continue;
        }
        // d rho / d logits_k = rho * (onehot(m) - pi_k)
        let probs = policy.probs(e.instruction);
        let base = e.instruction * policy.m;
        for (j, p) in probs.iter().enumerate() {
            let ind = if j == e.response { 1.0 } else { 0.0 };
            grad[base + j] += a * ratio * (ind - p) / n;
        }
    }
    (grad, n_clipped as f64 / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub objective: f64,
    pub grad_norm: f64,
    pub clip_fraction: f64,
}

/// Gradient-ascent steps on the clipped surrogate. The reference is untouched.
pub fn ppo_update(
    policy: &mut ToyPolicy,
    batch: &[ToyEpisode],
    clip_eps: f64,
    learning_rate: f64,
    epochs: usize,
) -> Result<UpdateStats, ToyRlError> {
    if batch.is_empty() {
        return Err(ToyRlError::EmptyBatch);
    }
    let mut stats = UpdateStats { objective: 0.0, grad_norm: 0.0, clip_fraction: 0.0 };
    for _ in 0..epochs {
        let (grad, clip_fraction) = surrogate_gradient(policy, batch, clip_eps);
        let norm = libm::sqrt(grad.iter().map(|g| g * g).sum());
        if !norm.is_finite() {
            let mean_shaped = batch.iter().map(|e| e.episode.shaped).sum::<f64>() / batch.len() as f64;
            return Err(ToyRlError::NonFiniteGradient { step: 0, norm, mean_shaped });
        }
        stats = UpdateStats { objective: surrogate_objective(policy, batch, clip_eps), grad_norm: norm, clip_fraction };
        for (l, g) in policy.logits.iter_mut().zip(&grad) {
            *l += learning_rate * g;
        }
    }
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub clip_eps: f64,
    pub learning_rate: f64,
    /// Gradient steps per sampled batch.
    pub epochs: usize,
    pub beta: f64,
    pub seed: u64,
    pub span: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 200,
            batch_size: 4,
            clip_eps: 0.2,
            learning_rate: 0.25,
            epochs: 8,
            beta: DEFAULT_BETA,
            seed: 0,
            span: DEFAULT_SPAN,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ToyRlError> {
        let bad = |m: &str| Err(ToyRlError::InvalidConfig(m.into()));
        if self.steps == 0 {
            return bad("steps must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.clip_eps >= 0.0 && self.clip_eps.is_finite()) {
            return bad("clip_eps must be finite and non-negative");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta must be finite and non-negative");
        }
        if self.span == 0 {
            return bad("span must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutput {
    /// Mean shaped reward of each step's batch.
    pub trace: TrainingTrace,
    pub smoothed: TrainingTrace,
    /// `None` when the trace is too short or flat to rank.
    pub diagnostics: Option<TraceDiagnostics>,
    pub policy: ToyPolicy,
    pub updates: Vec<UpdateStats>,
}

/// Run `config.steps` rollout/update rounds from a uniform policy.
pub fn train(env: &ToyEnv, config: &TrainConfig) -> Result<TrainOutput, ToyRlError> {
    train_from(env, ToyPolicy::uniform(env.k, env.m), config)
}

pub fn train_from(env: &ToyEnv, mut policy: ToyPolicy, config: &TrainConfig) -> Result<TrainOutput, ToyRlError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut points = Vec::with_capacity(config.steps);
    let mut updates = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let batch = rollout(&policy, env, &mut rng, config.batch_size, config.beta)?;
        let mean = batch.iter().map(|e| e.episode.shaped).sum::<f64>() / batch.len() as f64;
        points.push(TracePoint { step: step as u64, mean_reward: mean });
        let stats = ppo_update(&mut policy, &batch, config.clip_eps, config.learning_rate, config.epochs).map_err(|e| match e {
            ToyRlError::NonFiniteGradient { norm, mean_shaped, .. } => ToyRlError::NonFiniteGradient { step, norm, mean_shaped },
            other => other,
        })?;
        updates.push(stats);
    }
    let trace = TrainingTrace::new(points)?;
    let smoothed = moving_average(&trace, config.span)?;
    let diagnostics = trace_diagnostics(&trace, config.span).ok();
    Ok(TrainOutput { trace, smoothed, diagnostics, policy, updates })
}
