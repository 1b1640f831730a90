//! Zero-shot benchmark evaluation: prompting with task definitions, ROUGE-L
//! task scores, run comparison and paired-bootstrap significance.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{GenParams, Generator};
use crate::rouge::{rouge_l_tokens, tokenize};

pub const DEFAULT_TEMPLATE: &str = "Definition: {definition}\n\nInput: {input}\nOutput:";
pub const DEFAULT_RESAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("task `{0}` has no instances")]
    NoInstances(String),
    #[error("task `{task}` instance {index} has no reference")]
    NoReference { task: String, index: usize },
    #[error("task `{task}`: {predictions} predictions for {instances} instances")]
    PredictionCount { task: String, predictions: usize, instances: usize },
    #[error("runs cover different task sets (first difference: `{0}`)")]
    TaskSetMismatch(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least two paired values, got {0}")]
    TooFew(usize),
    #[error("non-finite score")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalInstance {
    pub input: String,
    pub references: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalTask {
    pub task_id: String,
    pub category: String,
    pub definition: String,
    pub instances: Vec<EvalInstance>,
}

impl EvalTask {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.instances.is_empty() {
            return Err(EvalError::NoInstances(self.task_id.clone()));
        }
        if let Some(index) = self.instances.iter().position(|i| i.references.is_empty()) {
            return Err(EvalError::NoReference { task: self.task_id.clone(), index });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub task_id: String,
    pub category: String,
    pub mean_rouge_l: f64,
    pub per_instance: Vec<f64>,
}

/// How an instance with several references is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceRule {
    /// Best F1 over all references.
    #[default]
    Max,
    /// F1 against the first reference only.
    First,
}

/// Prompt template with `{definition}` and `{input}` placeholders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PromptTemplate(pub String);

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate(DEFAULT_TEMPLATE.to_string())
    }
}

impl PromptTemplate {
    pub fn render(&self, definition: &str, input: &str) -> String {
        // single pass so placeholder text inside the definition is left alone
        let mut out = String::with_capacity(self.0.len() + definition.len() + input.len());
        let mut rest = self.0.as_str();
        while let Some(at) = rest.find('{') {
            out.push_str(&rest[..at]);
            let tail = &rest[at..];
            if let Some(r) = tail.strip_prefix("{definition}") {
                out.push_str(definition);
                rest = r;
            } else if let Some(r) = tail.strip_prefix("{input}") {
                out.push_str(input);
                rest = r;
            } else {
                out.push('{');
                rest = &tail[1..];
            }
        }
        out.push_str(rest);
        out
    }
}

fn instance_score(prediction: &str, references: &[String], rule: ReferenceRule) -> f64 {
    let pred = tokenize(prediction);
    let refs: &[String] = match rule {
        ReferenceRule::Max => references,
        ReferenceRule::First => &references[..references.len().min(1)],
    };
    refs.iter().map(|r| rouge_l_tokens(&pred, &tokenize(r)).f1).fold(0.0, f64::max)
}

/// Per-instance ROUGE-L F1 against the references and their mean.
pub fn score_task<S: AsRef<str>>(task: &EvalTask, predictions: &[S], rule: ReferenceRule) -> Result<TaskScore, EvalError> {
    task.validate()?;
    if predictions.len() != task.instances.len() {
        return Err(EvalError::PredictionCount {
            task: task.task_id.clone(),
            predictions: predictions.len(),
            instances: task.instances.len(),
        });
    }
    let per_instance: Vec<f64> = task
        .instances
        .iter()
        .zip(predictions)
        .map(|(inst, p)| instance_score(p.as_ref(), &inst.references, rule))
        .collect();
    let mean_rouge_l = per_instance.iter().sum::<f64>() / per_instance.len() as f64;
    Ok(TaskScore { task_id: task.task_id.clone(), category: task.category.clone(), mean_rouge_l, per_instance })
}

/// Predictions for one task; `None` marks an instance whose request failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskPredictions {
    pub task_id: String,
    pub predictions: Vec<Option<String>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

impl TaskPredictions {
    pub fn coverage(&self) -> f64 {
        if self.predictions.is_empty() {
            return 0.0;
        }
        self.predictions.iter().filter(|p| p.is_some()).count() as f64 / self.predictions.len() as f64
    }
}

/// Prompt each instance with only its task definition and input.
///
/// Failed requests are recorded per instance; the task is still scored over
/// the rest by [`score_predictions`].
pub fn run_zero_shot<G: Generator + ?Sized>(
    tasks: &[EvalTask],
    backend: &G,
    template: &PromptTemplate,
    params: &GenParams,
) -> Vec<TaskPredictions> {
    tasks
        .iter()
        .map(|task| {
            let requests: Vec<(String, GenParams)> =
                task.instances.iter().map(|i| (template.render(&task.definition, &i.input), params.clone())).collect();
            let mut errors = Vec::new();
            let predictions = backend
                .complete_batch(&requests)
                .into_iter()
                .enumerate()
                .map(|(i, r)| match r {
                    Ok(t) => Some(t.trim().to_string()),
                    Err(e) => {
                        errors.push(format!("instance {i}: {e}"));
                        None
                    }
                })
                .collect();
            TaskPredictions { task_id: task.task_id.clone(), predictions, errors }
        })
        .collect()
}

/// Score the completed instances of a task; `None` when nothing completed.
pub fn score_predictions(task: &EvalTask, preds: &TaskPredictions, rule: ReferenceRule) -> Result<Option<TaskScore>, EvalError> {
    if preds.predictions.len() != task.instances.len() {
        return Err(EvalError::PredictionCount {
            task: task.task_id.clone(),
            predictions: preds.predictions.len(),
            instances: task.instances.len(),
        });
    }
    let (instances, texts): (Vec<EvalInstance>, Vec<&str>) = task
        .instances
        .iter()
        .zip(&preds.predictions)
        .filter_map(|(i, p)| p.as_deref().map(|t| (i.clone(), t)))
        .unzip();
    if instances.is_empty() {
        return Ok(None);
    }
    let sub = EvalTask { instances, ..task.clone() };
    score_task(&sub, &texts, rule).map(Some)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryComparison {
    pub category: String,
    pub n_tasks: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    pub pct_task_better: f64,
    /// Paired-bootstrap p-value over the category's tasks; absent below two tasks.
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub n_tasks: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    /// Share of tasks where run A strictly beats run B, in percent.
    pub pct_task_better: f64,
    pub p_value: Option<f64>,
    pub per_category: Vec<CategoryComparison>,
}

impl Comparison {
    /// `mean_b | mean_a | pct%`: the baseline-then-candidate row layout.
    pub fn table_row(&self) -> String {
        format_table_row(self.mean_b, self.mean_a, self.pct_task_better)
    }
}

pub fn format_table_row(baseline: f64, candidate: f64, pct_better: f64) -> String {
    format!("{baseline:.4} | {candidate:.4} | {pct_better:.2}%")
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn pct_better(pairs: &[(f64, f64)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    100.0 * pairs.iter().filter(|(a, b)| a > b).count() as f64 / pairs.len() as f64
}

/// Compare two runs over the same task set.
///
/// Ties do not count as "better". Category means weight every task equally,
/// whatever its instance count.
pub fn compare_runs(a: &[TaskScore], b: &[TaskScore], resamples: usize, seed: u64) -> Result<Comparison, EvalError> {
    let a_map: BTreeMap<&str, &TaskScore> = a.iter().map(|t| (t.task_id.as_str(), t)).collect();
    let b_map: BTreeMap<&str, &TaskScore> = b.iter().map(|t| (t.task_id.as_str(), t)).collect();
    let a_ids: BTreeSet<&str> = a_map.keys().copied().collect();
    let b_ids: BTreeSet<&str> = b_map.keys().copied().collect();
    if let Some(diff) = a_ids.symmetric_difference(&b_ids).next() {
        return Err(EvalError::TaskSetMismatch(diff.to_string()));
    }
    if a_map.len() != a.len() || b_map.len() != b.len() {
        return Err(EvalError::TaskSetMismatch("duplicate task id".into()));
    }
    let mut pairs = Vec::new();
    let mut by_cat: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for (id, ta) in &a_map {
        let tb = b_map[id];
        if !ta.mean_rouge_l.is_finite() || !tb.mean_rouge_l.is_finite() {
            return Err(EvalError::NonFinite);
        }
        pairs.push((ta.mean_rouge_l, tb.mean_rouge_l));
        by_cat.entry(ta.category.as_str()).or_default().push((ta.mean_rouge_l, tb.mean_rouge_l));
    }
    let p_of = |ps: &[(f64, f64)]| {
        let (xa, xb): (Vec<f64>, Vec<f64>) = ps.iter().copied().unzip();
        significance(&xa, &xb, resamples, seed).ok()
    };
    let per_category = by_cat
        .iter()
        .map(|(cat, ps)| CategoryComparison {
            category: cat.to_string(),
            n_tasks: ps.len(),
            mean_a: mean(&ps.iter().map(|p| p.0).collect::<Vec<_>>()),
            mean_b: mean(&ps.iter().map(|p| p.1).collect::<Vec<_>>()),
            pct_task_better: pct_better(ps),
            p_value: p_of(ps),
        })
        .collect();
    Ok(Comparison {
        n_tasks: pairs.len(),
        mean_a: mean(&pairs.iter().map(|p| p.0).collect::<Vec<_>>()),
        mean_b: mean(&pairs.iter().map(|p| p.1).collect::<Vec<_>>()),
        pct_task_better: pct_better(&pairs),
        p_value: p_of(&pairs),
        per_category,
    })
}

/// Two-sided paired-bootstrap p-value for the mean difference `a − b`.
///
/// The differences are centred on their mean (imposing the null) and
/// resampled with replacement; the p-value is the add-one-smoothed share of
/// resampled means at least as extreme as the observed one.
pub fn significance(a: &[f64], b: &[f64], resamples: usize, seed: u64) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(EvalError::TooFew(a.len()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    let n = diffs.len();
    let observed = mean(&diffs);
    let centred: Vec<f64> = diffs.iter().map(|d| d - observed).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut extreme = 0usize;
    for _ in 0..resamples {
        let s: f64 = (0..n).map(|_| centred[rng.gen_range(0..n)]).sum::<f64>() / n as f64;
        if s.abs() >= observed.abs() {
            extreme += 1;
        }
    }
    Ok((extreme + 1) as f64 / (resamples + 1) as f64)
}
