//! Command-line front end. [`run`] parses arguments, executes one stage and
//! returns the process exit code.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use refine_core::analysis::{
    aggregate_annotations, cross_corpus_similarity, length_stats, seed_similarity_distribution, verb_noun_pairs,
    QualityReview, RatingRecord, SimilarityDistribution,
};
use refine_core::backend::HealthCheck;
use refine_core::bootstrap::{run_bootstrap, BootstrapError, BootstrapLog};
use refine_core::eval::{compare_runs, run_zero_shot, score_predictions, TaskPredictions, TaskScore};
use refine_core::instancegen::{generate_instances, GenerationLogEntry, GenerationOutput, InstanceGenError, PolicySource};
use refine_core::pool::PoolState;
use refine_core::reward::{score_dataset, ScoredRecord, ShapedRecord};
use refine_core::toyrl::{train, ToyEnv};
use refine_core::{GenParams, IftRecord, LogProber};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::backends::{AnyBackend, Role};
use crate::config::PipelineConfig;
use crate::io::{
    load_benchmark, load_seed_tasks, read_instruction_texts, read_json, read_jsonl, restore_pool, snapshot_pool,
    split_by_origin, write_json, write_jsonl,
};
use crate::manifest::Manifest;

#[derive(Debug, Parser)]
#[command(name = "refine", version, about = "Instruction bootstrapping, automated-feedback scoring and evaluation")]
struct Cli {
    /// Pipeline config (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker count; overrides the config and REFINE_WORKERS.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Grow an instruction pool from seed tasks.
    Bootstrap(BootstrapArgs),
    /// Generate (input, output) instances for pool instructions.
    GenInstances(GenInstancesArgs),
    /// Score a dataset with the quality scorer and aggregate rewards.
    Score(ScoreArgs),
    /// Add policy/reference log-probabilities and shaped rewards to scored rows.
    ExportBatches(ExportArgs),
    /// Train the toy categorical policy with PPO.
    Toyrl(ToyArgs),
    /// Zero-shot evaluation on a benchmark directory.
    Evaluate(EvaluateArgs),
    /// Compare two evaluation reports.
    Compare(CompareArgs),
    /// Dataset diagnostics.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Probe configured endpoints.
    Health(HealthArgs),
}

#[derive(Debug, Args)]
struct BootstrapArgs {
    #[arg(long)]
    seeds: PathBuf,
    #[arg(long)]
    target: usize,
    /// Pool snapshot to write.
    #[arg(long)]
    out: PathBuf,
    /// Continue from a snapshot instead of the seed file.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Log file; defaults to `<out>.log.jsonl`.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Endpoint or role name; defaults to the base endpoint.
    #[arg(long)]
    backend: Option<String>,
}

#[derive(Debug, Args)]
struct GenInstancesArgs {
    #[arg(long)]
    pool: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// `trained`, `base` or an endpoint string.
    #[arg(long, default_value = "trained")]
    backend: String,
    #[arg(long)]
    include_seeds: bool,
    /// Keep records already in `--out` and continue after them.
    #[arg(long)]
    resume: bool,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    scorer: Option<String>,
}

#[derive(Debug, Args)]
struct ExportArgs {
    /// Scored rows from `score`.
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, default_value = "trained")]
    policy: String,
    #[arg(long, default_value = "base")]
    reference: String,
}

#[derive(Debug, Args)]
struct ToyArgs {
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    clip: Option<f64>,
    #[arg(long = "trace-out")]
    trace_out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    benchmark: PathBuf,
    /// `trained`, `base` or an endpoint string.
    #[arg(long, default_value = "trained")]
    backend: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    predictions_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long = "run-a")]
    run_a: PathBuf,
    #[arg(long = "run-b")]
    run_b: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    resamples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct ReportOut {
    /// JSON report; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum AnalyzeCommand {
    /// Token-length statistics of an instance dataset.
    Lengths {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        report: ReportOut,
    },
    /// Verb–noun structure of instructions.
    Diversity {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 20)]
        top_verbs: usize,
        #[arg(long, default_value_t = 4)]
        top_nouns: usize,
        #[command(flatten)]
        report: ReportOut,
    },
    /// Best ROUGE-L of generated instructions against the seeds.
    SeedSim {
        /// Pool snapshot, or an instruction file when `--seeds` is given.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        seeds: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        bins: usize,
        #[command(flatten)]
        report: ReportOut,
    },
    /// Best ROUGE-L of each instruction in one corpus against another.
    CrossSim {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        against: PathBuf,
        #[arg(long, default_value_t = 10)]
        bins: usize,
        #[command(flatten)]
        report: ReportOut,
    },
    /// Rating distribution and quality-review rates.
    Annotations {
        #[arg(long)]
        ratings: Option<PathBuf>,
        #[arg(long)]
        reviews: Option<PathBuf>,
        #[command(flatten)]
        report: ReportOut,
    },
}

#[derive(Debug, Args)]
struct HealthArgs {
    /// Probe this endpoint instead of the configured ones.
    #[arg(long)]
    endpoint: Option<String>,
}

/// Parse `argv` (program name first), run the stage, return the exit code.
///
/// Failures print one JSON object with an `error` field to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            if code != 0 {
                eprintln!("{}", json!({ "error": "usage", "kind": format!("{:?}", e.kind()) }));
            }
            return code;
        }
    };
    init_tracing();
    let args: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    let name = command_name(&cli.command);
    match execute(cli, &args) {
        Ok(summary) => {
            if !summary.is_null() {
                println!("{summary}");
            }
            0
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": format!("{e:#}"), "command": name }));
            1
        }
    }
}

fn init_tracing() {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into());
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Bootstrap(_) => "bootstrap",
        Command::GenInstances(_) => "gen-instances",
        Command::Score(_) => "score",
        Command::ExportBatches(_) => "export-batches",
        Command::Toyrl(_) => "toyrl",
        Command::Evaluate(_) => "evaluate",
        Command::Compare(_) => "compare",
        Command::Analyze(_) => "analyze",
        Command::Health(_) => "health",
    }
}

fn execute(cli: Cli, args: &[String]) -> Result<serde_json::Value> {
    let mut cfg = PipelineConfig::load(cli.config.as_deref())?;
    if let Some(w) = cli.workers {
        cfg.workers = Some(w);
        cfg.validate()?;
    }
    let mut inputs: Vec<PathBuf> = cli.config.iter().cloned().collect();
    let name = command_name(&cli.command);
    let manifest = |inputs: &[PathBuf], seed: u64| -> Result<Manifest> {
        Ok(Manifest::new(name, args, cfg.sha256(), seed).with_inputs(inputs)?)
    };
    match cli.command {
        Command::Bootstrap(a) => {
            inputs.push(a.resume.clone().unwrap_or_else(|| a.seeds.clone()));
            let summary = bootstrap(&cfg, &a)?;
            let log = a.log.clone().unwrap_or_else(|| suffixed(&a.out, ".log.jsonl"));
            manifest(&inputs, cfg.seed)?.write_for(&[&a.out, &log])?;
            Ok(summary)
        }
        Command::GenInstances(a) => {
            inputs.push(a.pool.clone());
            let summary = gen_instances(&cfg, &a)?;
            manifest(&inputs, cfg.instancegen.seed)?.write_for(&[a.out.clone(), suffixed(&a.out, ".log.jsonl")])?;
            Ok(summary)
        }
        Command::Score(a) => {
            inputs.push(a.input.clone());
            let summary = score(&cfg, &a)?;
            manifest(&inputs, cfg.seed)?.write_for(&[a.out.clone(), suffixed(&a.out, ".errors.jsonl")])?;
            Ok(summary)
        }
        Command::ExportBatches(a) => {
            inputs.push(a.scores.clone());
            let summary = export_batches(&cfg, &a)?;
            manifest(&inputs, cfg.seed)?.write_for(&[&a.out])?;
            Ok(summary)
        }
        Command::Toyrl(a) => {
            let (summary, seed) = toyrl(&cfg, &a)?;
            manifest(&inputs, seed)?.write_for(&[a.trace_out.clone(), suffixed(&a.trace_out, ".summary.json")])?;
            Ok(summary)
        }
        Command::Evaluate(a) => {
            inputs.push(a.benchmark.clone());
            let summary = evaluate(&cfg, &a)?;
            let mut outs = vec![a.out.clone()];
            outs.extend(a.predictions_out.clone());
            manifest(&inputs, cfg.seed)?.write_for(&outs)?;
            Ok(summary)
        }
        Command::Compare(a) => {
            inputs.extend([a.run_a.clone(), a.run_b.clone()]);
            let seed = a.seed.unwrap_or(cfg.seed);
            let summary = compare(&cfg, &a, seed)?;
            if let Some(out) = &a.out {
                manifest(&inputs, seed)?.write_for(&[out])?;
            }
            Ok(summary)
        }
        Command::Analyze(cmd) => {
            let (value, csv, report, used) = analyze(&cmd)?;
            inputs.extend(used);
            emit_report(&value, csv, report)?;
            if let Some(out) = &report.out {
                let mut outs = vec![out.clone()];
                outs.extend(report.csv.clone());
                manifest(&inputs, cfg.seed)?.write_for(&outs)?;
                return Ok(serde_json::Value::Null);
            }
            Ok(value)
        }
        Command::Health(a) => health(&cfg, &a),
    }
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

// ---------------------------------------------------------------------------
// stages

fn bootstrap(cfg: &PipelineConfig, a: &BootstrapArgs) -> Result<serde_json::Value> {
    let mut pool = match &a.resume {
        Some(snap) => restore_pool(snap)?,
        None => {
            let load = load_seed_tasks(&a.seeds)?;
            let seeds = load.tasks.into_iter().map(|t| t.instruction).collect();
            PoolState::with_seeds(seeds, cfg.seed, cfg.blacklist.clone())?
        }
    };
    let mut config = cfg.bootstrap.clone();
    config.target_count = a.target;
    config.validate()?;
    let backend = AnyBackend::for_role(cfg, Role::Base, a.backend.as_deref())?;
    let log_path = a.log.clone().unwrap_or_else(|| suffixed(&a.out, ".log.jsonl"));
    let write = |pool: &PoolState, log: &BootstrapLog| -> Result<()> {
        snapshot_pool(pool, &a.out)?;
        write_jsonl(&log_path, &log.entries)?;
        Ok(())
    };
    match run_bootstrap(&mut pool, &config, &backend) {
        Ok(report) => {
            write(&pool, &report.log)?;
            Ok(json!({
                "status": report.status,
                "pool_size": pool.len(),
                "seeds": pool.seed_count(),
                "generated": pool.generated_count(),
                "calls": report.log.calls,
                "admitted": report.log.admitted,
                "rejected": report.log.rejected,
            }))
        }
        Err(BootstrapError::Backend { call, source, log }) => {
            write(&pool, &log)?;
            bail!("generation call {call} failed: {source}; partial pool saved to {} (resume with --resume)", a.out.display())
        }
        Err(e) => Err(e.into()),
    }
}

fn gen_instances(cfg: &PipelineConfig, a: &GenInstancesArgs) -> Result<serde_json::Value> {
    let pool = restore_pool(&a.pool)?;
    let mut config = cfg.instancegen.clone();
    config.include_seeds |= a.include_seeds;
    let source = if a.backend == "base" { PolicySource::Base } else { PolicySource::Trained };
    let role = if source == PolicySource::Base { Role::Base } else { Role::Trained };
    let backend = AnyBackend::for_role(cfg, role, Some(&a.backend))?;
    let log_path = suffixed(&a.out, ".log.jsonl");

    let mut done = GenerationOutput::default();
    if a.resume && a.out.exists() && log_path.exists() {
        done.records = read_jsonl::<IftRecord>(&a.out)?;
        done.log = read_jsonl::<GenerationLogEntry>(&log_path)?;
    }
    let skip = done.log.len();
    let save = |out: &GenerationOutput| -> Result<()> {
        write_jsonl(&a.out, &out.records)?;
        write_jsonl(&log_path, &out.log)?;
        Ok(())
    };
    match generate_instances(pool.instructions(), &backend, source, &config, skip) {
        Ok(more) => {
            done.records.extend(more.records);
            done.log.extend(more.log);
            save(&done)?;
            Ok(json!({
                "instructions": done.log.len(),
                "records": done.records.len(),
                "empty_input": done.empty_input_count(),
                "malformed_segments": done.malformed_count(),
            }))
        }
        Err(InstanceGenError::Backend { instruction_id, source, partial, .. }) => {
            done.records.extend(partial.records);
            done.log.extend(partial.log);
            save(&done)?;
            bail!("generation failed for `{instruction_id}`: {source}; partial output saved (rerun with --resume)")
        }
    }
}

fn score(cfg: &PipelineConfig, a: &ScoreArgs) -> Result<serde_json::Value> {
    let records: Vec<IftRecord> = read_jsonl(&a.input)?;
    let scorer = AnyBackend::for_role(cfg, Role::Scorer, a.scorer.as_deref())?;
    let rows = score_dataset(&records, &scorer, &cfg.weights)?;
    let mut scored = Vec::new();
    let mut failed = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        match &row.outcome {
            Ok((s, r)) => scored.push(ScoredRecord::new(&row.record, s, *r)),
            Err(e) => failed.push(json!({ "row": i, "error": e.to_string(), "record": row.record })),
        }
    }
    write_jsonl(&a.out, &scored)?;
    let err_path = suffixed(&a.out, ".errors.jsonl");
    if failed.is_empty() {
        let _ = std::fs::remove_file(&err_path);
    } else {
        write_jsonl(&err_path, &failed)?;
    }
    let mean_r = if scored.is_empty() { 0.0 } else { scored.iter().map(|s| s.r).sum::<f64>() / scored.len() as f64 };
    Ok(json!({ "scored": scored.len(), "failed": failed.len(), "mean_r": mean_r }))
}

/// Prompt under which a record's output is scored for log-probabilities.
pub fn episode_prompt(instruction: &str, input: &str) -> String {
    if input.trim().is_empty() {
        format!("Task: {}\nOutput:", instruction.trim())
    } else {
        format!("Task: {}\nInput: {}\nOutput:", instruction.trim(), input.trim())
    }
}

fn export_batches(cfg: &PipelineConfig, a: &ExportArgs) -> Result<serde_json::Value> {
    let beta = a.beta.unwrap_or(cfg.beta);
    let scored: Vec<ScoredRecord> = read_jsonl(&a.scores)?;
    let policy = AnyBackend::for_role(cfg, Role::Trained, Some(&a.policy))?;
    let reference = AnyBackend::for_role(cfg, Role::Base, Some(&a.reference))?;
    let mut out = Vec::with_capacity(scored.len());
    for (i, s) in scored.iter().enumerate() {
        let prompt = episode_prompt(&s.instruction, &s.input);
        let lp = policy.logprob(&prompt, &s.output).with_context(|| format!("policy logprob for row {i}"))?;
        let lr = reference.logprob(&prompt, &s.output).with_context(|| format!("reference logprob for row {i}"))?;
        out.push(ShapedRecord::new(s, lp, lr, beta)?);
    }
    write_jsonl(&a.out, &out)?;
    Ok(json!({ "rows": out.len(), "beta": beta }))
}

#[derive(Debug, Serialize, Deserialize)]
struct ToySummary {
    steps: usize,
    batch_size: usize,
    beta: f64,
    seed: u64,
    raw_rho: Option<f64>,
    smoothed_rho: Option<f64>,
    span: usize,
    initial_expected_reward: f64,
    final_expected_reward: f64,
    max_tv_from_reference: f64,
}

fn toyrl(cfg: &PipelineConfig, a: &ToyArgs) -> Result<(serde_json::Value, u64)> {
    let mut t = cfg.toyrl.train.clone();
    if let Some(v) = a.steps {
        t.steps = v;
    }
    if let Some(v) = a.batch {
        t.batch_size = v;
    }
    if let Some(v) = a.beta {
        t.beta = v;
    }
    if let Some(v) = a.seed {
        t.seed = v;
    }
    if let Some(v) = a.lr {
        t.learning_rate = v;
    }
    if let Some(v) = a.epochs {
        t.epochs = v;
    }
    if let Some(v) = a.clip {
        t.clip_eps = v;
    }
    t.validate()?;
    let env = ToyEnv::synthetic(cfg.toyrl.instructions, cfg.toyrl.responses, t.seed, &cfg.weights)?;
    let out = train(&env, &t)?;
    write_json(&a.trace_out, &out.trace)?;
    let initial = refine_core::toyrl::ToyPolicy::uniform(env.instructions(), env.responses()).expected_reward(&env);
    let summary = ToySummary {
        steps: t.steps,
        batch_size: t.batch_size,
        beta: t.beta,
        seed: t.seed,
        raw_rho: out.diagnostics.and_then(|d| d.raw_rho),
        smoothed_rho: out.diagnostics.and_then(|d| d.smoothed_rho),
        span: t.span,
        initial_expected_reward: initial,
        final_expected_reward: out.policy.expected_reward(&env),
        max_tv_from_reference: (0..env.instructions()).map(|k| out.policy.tv_from_reference(k)).fold(0.0, f64::max),
    };
    write_json(&suffixed(&a.trace_out, ".summary.json"), &summary)?;
    Ok((serde_json::to_value(&summary)?, t.seed))
}

/// Evaluation report; `compare` reads the `tasks` field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub backend: String,
    pub n_tasks: usize,
    pub n_categories: usize,
    pub mean_rouge_l: f64,
    pub tasks: Vec<TaskScore>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn evaluate(cfg: &PipelineConfig, a: &EvaluateArgs) -> Result<serde_json::Value> {
    let bench = load_benchmark(&a.benchmark, cfg.eval.max_instances)?;
    let backend = AnyBackend::for_role(cfg, Role::Trained, Some(&a.backend))?;
    let params = GenParams::new(cfg.eval.max_tokens, cfg.eval.temperature)?;
    let preds = run_zero_shot(&bench.tasks, &backend, &cfg.eval.template, &params);
    let mut warnings = bench.warnings.clone();
    let mut tasks = Vec::new();
    for (task, p) in bench.tasks.iter().zip(&preds) {
        if p.coverage() < 1.0 {
            warnings.push(format!("{}: coverage {:.2}", task.task_id, p.coverage()));
        }
        match score_predictions(task, p, cfg.eval.reference_rule)? {
            Some(s) => tasks.push(s),
            None => warnings.push(format!("{}: no completed instances, task dropped", task.task_id)),
        }
    }
    if tasks.is_empty() {
        bail!("no task could be scored");
    }
    let mean = tasks.iter().map(|t| t.mean_rouge_l).sum::<f64>() / tasks.len() as f64;
    let categories: std::collections::BTreeSet<&str> = tasks.iter().map(|t| t.category.as_str()).collect();
    let report = EvalReport {
        backend: backend.describe(),
        n_tasks: tasks.len(),
        n_categories: categories.len(),
        mean_rouge_l: mean,
        tasks,
        warnings,
    };
    write_json(&a.out, &report)?;
    if let Some(p) = &a.predictions_out {
        write_jsonl::<TaskPredictions>(p, &preds)?;
    }
    Ok(json!({ "n_tasks": report.n_tasks, "n_categories": report.n_categories, "mean_rouge_l": mean, "warnings": report.warnings.len() }))
}

fn compare(cfg: &PipelineConfig, a: &CompareArgs, seed: u64) -> Result<serde_json::Value> {
    let ra: EvalReport = read_json(&a.run_a)?;
    let rb: EvalReport = read_json(&a.run_b)?;
    let resamples = a.resamples.unwrap_or(cfg.eval.resamples);
    let cmp = compare_runs(&ra.tasks, &rb.tasks, resamples, seed)?;
    let value = json!({ "comparison": cmp, "table_row": cmp.table_row() });
    if let Some(out) = &a.out {
        write_json(out, &value)?;
    }
    Ok(value)
}

type Analysis<'a> = (serde_json::Value, Option<String>, &'a ReportOut, Vec<PathBuf>);

fn similarity_csv(d: &SimilarityDistribution) -> String {
    let mut s = String::from("index,score,nearest\n");
    for (i, (score, near)) in d.scores.iter().zip(&d.nearest).enumerate() {
        let near = near.map(|n| n.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{i},{score},{near}");
    }
    s
}

fn csv_field(v: &str) -> String {
    if v.contains([',', '"', '\n']) {
        format!("\"{}\"", v.replace('"', "\"\""))
    } else {
        v.to_string()
    }
}

fn analyze(cmd: &AnalyzeCommand) -> Result<Analysis<'_>> {
    Ok(match cmd {
        AnalyzeCommand::Lengths { input, report } => {
            let records: Vec<IftRecord> = read_jsonl(input)?;
            let stats = length_stats(&records);
            let mut csv = String::from("field,length,count\n");
            for (field, hist) in
                [("instruction", &stats.instruction_hist), ("input", &stats.input_hist), ("output", &stats.output_hist)]
            {
                for (len, n) in hist {
                    let _ = writeln!(csv, "{field},{len},{n}");
                }
            }
            (serde_json::to_value(&stats)?, Some(csv), report, vec![input.clone()])
        }
        AnalyzeCommand::Diversity { input, top_verbs, top_nouns, report } => {
            let texts = read_instruction_texts(input)?;
            let r = verb_noun_pairs(&texts, None, *top_verbs, *top_nouns);
            if r.heuristic_used {
                tracing::warn!("verb-noun pairs come from the lexicon heuristic; words outside its lists are missed");
            }
            let mut csv = String::from("verb,noun,count\n");
            for p in &r.pairs {
                let _ = writeln!(csv, "{},{},{}", csv_field(&p.verb), csv_field(&p.noun), p.count);
            }
            (serde_json::to_value(&r)?, Some(csv), report, vec![input.clone()])
        }
        AnalyzeCommand::SeedSim { input, seeds, bins, report } => {
            let (seed_texts, generated, used) = match seeds {
                Some(s) => (read_instruction_texts(s)?, read_instruction_texts(input)?, vec![input.clone(), s.clone()]),
                None => {
                    let (s, g) = split_by_origin(&restore_pool(input)?);
                    (s, g, vec![input.clone()])
                }
            };
            let d = seed_similarity_distribution(&generated, &seed_texts, *bins)?;
            let csv = similarity_csv(&d);
            (serde_json::to_value(&d)?, Some(csv), report, used)
        }
        AnalyzeCommand::CrossSim { input, against, bins, report } => {
            let a = read_instruction_texts(input)?;
            let b = read_instruction_texts(against)?;
            let d = cross_corpus_similarity(&a, &b, *bins)?;
            let csv = similarity_csv(&d);
            (serde_json::to_value(&d)?, Some(csv), report, vec![input.clone(), against.clone()])
        }
        AnalyzeCommand::Annotations { ratings, reviews, report } => {
            if ratings.is_none() && reviews.is_none() {
                bail!("give --ratings and/or --reviews");
            }
            let r: Vec<RatingRecord> = ratings.as_deref().map(read_jsonl).transpose()?.unwrap_or_default();
            let q: Vec<QualityReview> = reviews.as_deref().map(read_jsonl).transpose()?.unwrap_or_default();
            let s = aggregate_annotations(&r, &q);
            let mut csv = String::from("rating,count,percent\n");
            for share in &s.ratings {
                let _ = writeln!(csv, "{},{},{:.2}", share.rating.as_str(), share.count, share.percent);
            }
            let used = ratings.iter().chain(reviews.iter()).cloned().collect();
            (serde_json::to_value(&s)?, Some(csv), report, used)
        }
    })
}

fn emit_report(value: &serde_json::Value, csv: Option<String>, report: &ReportOut) -> Result<()> {
    if let Some(out) = &report.out {
        write_json(out, value)?;
    }
    if let (Some(path), Some(text)) = (&report.csv, csv) {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn health(cfg: &PipelineConfig, a: &HealthArgs) -> Result<serde_json::Value> {
    let mut report = BTreeMap::new();
    match &a.endpoint {
        Some(e) => {
            let b = AnyBackend::for_role(cfg, Role::Base, Some(e)).map_err(|e| anyhow!(e))?;
            report.insert("endpoint".to_string(), json!({ "url": b.describe(), "health": b.health_check() }));
        }
        None => {
            for (name, role) in [("base", Role::Base), ("trained", Role::Trained), ("scorer", Role::Scorer)] {
                let b = AnyBackend::for_role(cfg, role, None)?;
                report.insert(name.to_string(), json!({ "url": b.describe(), "health": b.health_check() }));
            }
        }
    }
    Ok(serde_json::to_value(report)?)
}
