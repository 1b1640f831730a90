//! Reward numerics: the linear aggregation of the four quality indicators,
//! KL-shaped rewards, and training-trace diagnostics.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, IndicatorScores, QualityScorer};
use crate::types::IftRecord;

pub const DEFAULT_BETA: f64 = 0.05;
pub const DEFAULT_SPAN: usize = 30;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewardError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("beta must be positive, got {0}")]
    InvalidBeta(f64),
    #[error("span must be at least 1")]
    InvalidSpan,
    #[error("empty trace")]
    EmptyTrace,
    #[error("trace step indices must be strictly increasing (at position {0})")]
    NonIncreasingSteps(usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least two points, got {0}")]
    TooFewPoints(usize),
    #[error("correlation undefined: zero variance")]
    ZeroVariance,
    #[error("scorer unavailable for every record: {0}")]
    TotalOutage(BackendError),
}

/// Coefficients of the indicator aggregation. Defaults are the published ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardWeights {
    pub w_rew: f64,
    pub w_und: f64,
    pub w_nat: f64,
    pub w_coh: f64,
    pub bias: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights { w_rew: 0.0078, w_und: -0.4421, w_nat: 0.3212, w_coh: 0.1520, bias: -0.0274 }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<(), RewardError> {
        let all = [self.w_rew, self.w_und, self.w_nat, self.w_coh, self.bias];
        if all.iter().all(|w| w.is_finite()) {
            Ok(())
        } else {
            Err(RewardError::NonFinite("weights"))
        }
    }
}

/// `r = w_rew·Rew + w_und·Und + w_nat·Nat + w_coh·Coh + bias`.
///
/// Rew enters unnormalized. Und carries a negative weight even though it
/// nominally measures understandability; the formula is kept as given.
pub fn aggregate_reward(s: &IndicatorScores, w: &RewardWeights) -> Result<f64, RewardError> {
    if ![s.rew, s.nat, s.coh, s.und].iter().all(|v| v.is_finite()) {
        return Err(RewardError::NonFinite("indicator scores"));
    }
    w.validate()?;
    Ok(w.w_rew * s.rew + w.w_und * s.und + w.w_nat * s.nat + w.w_coh * s.coh + w.bias)
}

/// `R = r − β·(log π(y|x) − log π⁰(y|x))`.
pub fn shaped_reward(r: f64, logp_policy: f64, logp_ref: f64, beta: f64) -> Result<f64, RewardError> {
    if !beta.is_finite() || beta <= 0.0 {
        return Err(RewardError::InvalidBeta(beta));
    }
    let out = r - beta * (logp_policy - logp_ref);
    if out.is_finite() {
        Ok(out)
    } else {
        Err(RewardError::NonFinite("shaped reward"))
    }
}

/// One RL episode with its raw and shaped reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapedEpisode {
    pub prompt: String,
    pub response: String,
    pub logp_policy: f64,
    pub logp_ref: f64,
    pub r: f64,
    pub beta: f64,
    #[serde(rename = "R")]
    pub shaped: f64,
}

impl ShapedEpisode {
    pub fn new(prompt: String, response: String, logp_policy: f64, logp_ref: f64, r: f64, beta: f64) -> Result<Self, RewardError> {
        let shaped = shaped_reward(r, logp_policy, logp_ref, beta)?;
        Ok(ShapedEpisode { prompt, response, logp_policy, logp_ref, r, beta, shaped })
    }

    pub fn log_ratio(&self) -> f64 {
        self.logp_policy - self.logp_ref
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub step: u64,
    pub mean_reward: f64,
}

/// Per-step mean reward over a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<TracePoint>", into = "Vec<TracePoint>")]
pub struct TrainingTrace {
    steps: Vec<TracePoint>,
}

impl TryFrom<Vec<TracePoint>> for TrainingTrace {
    type Error = RewardError;
    fn try_from(v: Vec<TracePoint>) -> Result<Self, RewardError> {
        TrainingTrace::new(v)
    }
}

impl From<TrainingTrace> for Vec<TracePoint> {
    fn from(t: TrainingTrace) -> Self {
        t.steps
    }
}

impl TrainingTrace {
    pub fn new(steps: Vec<TracePoint>) -> Result<Self, RewardError> {
        for (i, w) in steps.windows(2).enumerate() {
            if w[1].step <= w[0].step {
                return Err(RewardError::NonIncreasingSteps(i + 1));
            }
        }
        Ok(TrainingTrace { steps })
    }

    /// Trace with steps numbered `0..values.len()`.
    pub fn from_values(values: &[f64]) -> Self {
        let steps = values.iter().enumerate().map(|(i, v)| TracePoint { step: i as u64, mean_reward: *v }).collect();
        TrainingTrace { steps }
    }

    pub fn points(&self) -> &[TracePoint] {
        &self.steps
    }

    pub fn values(&self) -> Vec<f64> {
        self.steps.iter().map(|p| p.mean_reward).collect()
    }

    pub fn step_indices(&self) -> Vec<f64> {
        self.steps.iter().map(|p| p.step as f64).collect()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Trailing-window mean; the first `span - 1` points average what is available.
pub fn moving_average(trace: &TrainingTrace, span: usize) -> Result<TrainingTrace, RewardError> {
    if span == 0 {
        return Err(RewardError::InvalidSpan);
    }
    if trace.is_empty() {
        return Err(RewardError::EmptyTrace);
    }
    let pts = trace.points();
    let mut out = Vec::with_capacity(pts.len());
    for i in 0..pts.len() {
        let lo = (i + 1).saturating_sub(span);
        let window = &pts[lo..=i];
        let mean = window.iter().map(|p| p.mean_reward).sum::<f64>() / window.len() as f64;
        out.push(TracePoint { step: pts[i].step, mean_reward: mean });
    }
    Ok(TrainingTrace { steps: out })
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Result<Vec<f64>, RewardError> {
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(RewardError::NonFinite("rank input"));
    }
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = avg;
        }
        i = j + 1;
    }
    Ok(ranks)
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, RewardError> {
    if xs.len() != ys.len() {
        return Err(RewardError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(RewardError::TooFewPoints(xs.len()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(RewardError::ZeroVariance);
    }
    Ok((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// Spearman rank correlation: Pearson over average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, RewardError> {
    if xs.len() != ys.len() {
        return Err(RewardError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(RewardError::TooFewPoints(xs.len()));
    }
    pearson(&average_ranks(xs)?, &average_ranks(ys)?)
}

/// Step/reward rank correlation of a trace, raw and smoothed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceDiagnostics {
    pub span: usize,
    pub raw_rho: Option<f64>,
    pub smoothed_rho: Option<f64>,
}

pub fn trace_diagnostics(trace: &TrainingTrace, span: usize) -> Result<TraceDiagnostics, RewardError> {
    let smoothed = moving_average(trace, span)?;
    let rho = |t: &TrainingTrace| match spearman(&t.step_indices(), &t.values()) {
        Ok(r) => Ok(Some(r)),
        Err(RewardError::ZeroVariance | RewardError::TooFewPoints(_)) => Ok(None),
        Err(e) => Err(e),
    };
    Ok(TraceDiagnostics { span, raw_rho: rho(trace)?, smoothed_rho: rho(&smoothed)? })
}

/// One scored dataset row; failures are kept per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub record: IftRecord,
    pub outcome: Result<(IndicatorScores, f64), BackendError>,
}

/// Serialized form of a successfully scored row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    pub instruction: String,
    pub input: String,
    pub output: String,
    pub rew: f64,
    pub nat: f64,
    pub coh: f64,
    pub und: f64,
    pub r: f64,
}

impl ScoredRecord {
    pub fn new(record: &IftRecord, s: &IndicatorScores, r: f64) -> Self {
        ScoredRecord {
            instruction: record.instruction.clone(),
            input: record.input.clone(),
            output: record.output.clone(),
            rew: s.rew,
            nat: s.nat,
            coh: s.coh,
            und: s.und,
            r,
        }
    }

    pub fn record(&self) -> IftRecord {
        IftRecord::new(self.instruction.clone(), self.input.clone(), self.output.clone())
    }

    pub fn scores(&self) -> IndicatorScores {
        IndicatorScores { rew: self.rew, nat: self.nat, coh: self.coh, und: self.und }
    }
}

/// A scored row extended with the KL-shaping terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapedRecord {
    pub instruction: String,
    pub input: String,
    pub output: String,
    pub rew: f64,
    pub nat: f64,
    pub coh: f64,
    pub und: f64,
    pub r: f64,
    pub logp_policy: f64,
    pub logp_ref: f64,
    pub beta: f64,
    #[serde(rename = "R")]
    pub shaped: f64,
}

impl ShapedRecord {
    pub fn new(scored: &ScoredRecord, logp_policy: f64, logp_ref: f64, beta: f64) -> Result<Self, RewardError> {
        let shaped = shaped_reward(scored.r, logp_policy, logp_ref, beta)?;
        Ok(ShapedRecord {
            instruction: scored.instruction.clone(),
            input: scored.input.clone(),
            output: scored.output.clone(),
            rew: scored.rew,
            nat: scored.nat,
            coh: scored.coh,
            und: scored.und,
            r: scored.r,
            logp_policy,
            logp_ref,
            beta,
            shaped,
        })
    }
}

/// Score every record and aggregate its reward.
///
/// Per-row scorer failures are recorded without aborting; only a batch in
/// which every row failed is an error.
pub fn score_dataset<S: QualityScorer + ?Sized>(
    records: &[IftRecord],
    scorer: &S,
    weights: &RewardWeights,
) -> Result<Vec<ScoreRow>, RewardError> {
    weights.validate()?;
    let triplets: Vec<(String, String, String)> =
        records.iter().map(|r| (r.instruction.clone(), r.input.clone(), r.output.clone())).collect();
    let results = scorer.score_batch(&triplets);
    let mut rows = Vec::with_capacity(records.len());
    let mut last_err = None;
    for (record, res) in records.iter().zip(results) {
        let outcome = res.and_then(|s| {
            s.validate()?;
            aggregate_reward(&s, weights).map(|r| (s, r)).map_err(|e| BackendError::Validation(alloc::format!("{e}")))
        });
        if let Err(e) = &outcome {
            last_err = Some(e.clone());
        }
        rows.push(ScoreRow { record: record.clone(), outcome });
    }
    if !rows.is_empty() && rows.iter().all(|r| r.outcome.is_err()) {
        return Err(RewardError::TotalOutage(last_err.unwrap_or(BackendError::Transport("no response".into()))));
    }
    Ok(rows)
}
