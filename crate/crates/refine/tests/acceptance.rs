//! Acceptance checks. Each check prints one `PASS` or `FAIL` line with its
//! runtime; the process exits nonzero when any check fails.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use refine::io::{load_benchmark, load_seed_tasks};
use refine::manifest::Manifest;
use refine_core::bootstrap::{run_bootstrap, BootstrapConfig};
use refine_core::eval::{compare_runs, score_task, significance, ReferenceRule, TaskScore};
use refine_core::instancegen::parse_instances;
use refine_core::mock::MockBackend;
use refine_core::pool::{default_blacklist, PoolState};
use refine_core::reward::{aggregate_reward, shaped_reward, RewardWeights};
use refine_core::rouge::{lcs_len, rouge_l};
use refine_core::toyrl::{rollout, surrogate_gradient, surrogate_objective, train, ToyEnv, ToyPolicy, TrainConfig};
use refine_core::{IndicatorScores, Origin};

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() {
    let checks: [(&str, Duration, Check); 8] = [
        ("aggregate reward fidelity", Duration::from_secs(1), aggregate_reward_fidelity),
        ("shaped reward fidelity", Duration::from_secs(1), shaped_reward_fidelity),
        ("rouge-l oracle equivalence", Duration::from_secs(30), rouge_oracle_equivalence),
        ("filter soundness at 200", Duration::from_secs(120), filter_soundness),
        ("toy rl learning and gradient", Duration::from_secs(120), toy_rl),
        ("evaluation harness", Duration::from_secs(60), harness_correctness),
        ("replay determinism", Duration::from_secs(120), replay_determinism),
        ("instance parser coverage", Duration::from_secs(1), parser_coverage),
    ];
    let mut failed = 0;
    for (name, budget, check) in checks {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let took = start.elapsed();
        let outcome = outcome.and_then(|detail| {
            if took <= budget {
                Ok(detail)
            } else {
                Err(format!("{detail}; took {:.2}s, budget {}s", took.as_secs_f64(), budget.as_secs()))
            }
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{:.3}s]", took.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} [{:.3}s]", took.as_secs_f64());
            }
        }
    }
    println!("{} of {} acceptance checks passed", 8 - failed, 8);
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------

/// Published coefficients written out independently of the library defaults.
const W_REW: f64 = 0.0078;
const W_UND: f64 = -0.4421;
const W_NAT: f64 = 0.3212;
const W_COH: f64 = 0.1520;
const BIAS: f64 = -0.0274;

fn aggregate_reward_fidelity() -> Result<String, String> {
    let w = RewardWeights::default();
    let zero = aggregate_reward(&IndicatorScores { rew: 0.0, nat: 0.0, coh: 0.0, und: 0.0 }, &w).map_err(|e| e.to_string())?;
    ensure(zero == -0.0274, || format!("all-zero indicators gave {zero}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (rew, nat, coh, und) =
            (rng.gen_range(-8.0..8.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
        // spreadsheet column order: one product per column, then the row sum
        let cols = [W_REW * rew, W_UND * und, W_NAT * nat, W_COH * coh, BIAS];
        let oracle: f64 = cols.iter().sum();
        let got = aggregate_reward(&IndicatorScores { rew, nat, coh, und }, &w).map_err(|e| e.to_string())?;
        worst = worst.max((got - oracle).abs());
    }
    ensure(worst <= 1e-9, || format!("max deviation {worst:e} on 100 tuples"))?;
    Ok(format!("r(0) = {zero}, 100 tuples max |err| {worst:.1e}"))
}

fn shaped_reward_fidelity() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let r: f64 = rng.gen_range(-1.0..1.0);
        let lp: f64 = rng.gen_range(-60.0..0.0);
        let lr: f64 = rng.gen_range(-60.0..0.0);
        let beta: f64 = rng.gen_range(0.001..1.0);
        let same = shaped_reward(r, lp, lp, beta).map_err(|e| e.to_string())?;
        ensure(same == r, || format!("R = {same} but r = {r} with equal log-probabilities"))?;
        let kl = lp - lr;
        let hand = r - beta * kl;
        let got = shaped_reward(r, lp, lr, beta).map_err(|e| e.to_string())?;
        worst = worst.max((got - hand).abs());
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:e}"))?;
    Ok(format!("R = r at zero log-ratio; 50 tuples max |err| {worst:.1e}"))
}

// ---------------------------------------------------------------------------

const MAX_LEN: usize = 8;
const ALPHABET: u8 = 3;

/// Every list over the alphabet with length up to `MAX_LEN`, shortest first.
fn all_lists() -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    let mut layer = vec![Vec::new()];
    for _ in 0..MAX_LEN {
        let mut next = Vec::new();
        for l in &layer {
            for s in 0..ALPHABET {
                let mut v: Vec<u8> = l.clone();
                v.push(s);
                next.push(v);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

fn index_of(seq: &[u8]) -> usize {
    let offset = (3usize.pow(seq.len() as u32) - 1) / 2;
    offset + seq.iter().fold(0usize, |acc, &s| acc * 3 + s as usize)
}

/// Indices of every distinct subsequence of `list` (via all index masks),
/// longest first.
fn subsequences(list: &[u8]) -> Vec<(usize, usize)> {
    let mut seen = BTreeSet::new();
    for mask in 0u32..(1 << list.len()) {
        let sub: Vec<u8> = list.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, &s)| s).collect();
        seen.insert((sub.len(), index_of(&sub)));
    }
    let mut v: Vec<_> = seen.into_iter().collect();
    v.sort_by(|a, b| b.cmp(a));
    v
}

/// A list is canonical when its symbols first appear in order 0, 1, 2.
fn canonical(list: &[u8]) -> bool {
    let mut next = 0u8;
    for &s in list {
        if s > next {
            return false;
        }
        if s == next {
            next += 1;
        }
    }
    true
}

fn rouge_oracle_equivalence() -> Result<String, String> {
    let lists = all_lists();
    let n = lists.len();
    let words = n.div_ceil(64);
    // bit i of row b: sequence i is a subsequence of list b
    let mut contains = vec![0u64; n * words];
    let subs: Vec<Vec<(usize, usize)>> = lists.iter().map(|l| subsequences(l)).collect();
    for (b, s) in subs.iter().enumerate() {
        for &(_, idx) in s {
            contains[b * words + idx / 64] |= 1 << (idx % 64);
        }
    }
    // lcs_len is generic over PartialEq and cannot tell symbols apart except
    // by equality, so relabeling both lists together leaves it unchanged;
    // every pair is therefore covered by pairs whose first list is canonical.
    let mut pairs = 0u64;
    for (a, la) in lists.iter().enumerate() {
        if !canonical(la) {
            continue;
        }
        for (b, lb) in lists.iter().enumerate() {
            let row = &contains[b * words..(b + 1) * words];
            let oracle = subs[a].iter().find(|&&(_, idx)| row[idx / 64] & (1 << (idx % 64)) != 0).map_or(0, |s| s.0);
            let got = lcs_len(la, lb);
            if got != oracle {
                return Err(format!("lcs_len({la:?}, {lb:?}) = {got}, enumeration gives {oracle}"));
            }
            pairs += 1;
        }
    }
    let s = rouge_l("the cat sat", "the cat ran on mats");
    ensure(s.f1 == 0.5, || format!("cat-sat fixture f1 = {}", s.f1))?;
    Ok(format!("{pairs} pairs over {n} lists agree with enumeration; cat-sat f1 = {}", s.f1))
}

// ---------------------------------------------------------------------------

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn dp_lcs(a: &[String], b: &[String]) -> usize {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            t[i][j] = if a[i - 1] == b[j - 1] { t[i - 1][j - 1] + 1 } else { t[i - 1][j].max(t[i][j - 1]) };
        }
    }
    t[a.len()][b.len()]
}

fn f1(a: &[String], b: &[String]) -> f64 {
    let l = dp_lcs(a, b) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let (p, r) = (l / a.len() as f64, l / b.len() as f64);
    2.0 * p * r / (p + r)
}

fn filter_soundness() -> Result<String, String> {
    let seeds = load_seed_tasks(&fixtures().join("seeds.jsonl")).map_err(|e| e.to_string())?;
    let seeds = seeds.tasks.into_iter().map(|t| t.instruction).collect();
    let mut pool = PoolState::with_seeds(seeds, 0, default_blacklist()).map_err(|e| e.to_string())?;
    let cfg = BootstrapConfig { target_count: 200, ..BootstrapConfig::default() };
    let report = run_bootstrap(&mut pool, &cfg, &MockBackend::new(11)).map_err(|e| e.to_string())?;
    ensure(pool.len() >= 200, || format!("pool stopped at {} ({:?})", pool.len(), report.status))?;

    let toks: Vec<Vec<String>> = pool.instructions().iter().map(|i| tokens(&i.text)).collect();
    let black: Vec<Vec<String>> = pool.blacklist().iter().map(|k| tokens(k)).collect();
    let mut similar = 0;
    let mut blacklisted = 0;
    let mut worst = 0.0f64;
    for (i, ins) in pool.instructions().iter().enumerate() {
        if black.iter().any(|k| toks[i].windows(k.len()).any(|w| w == k.as_slice())) {
            blacklisted += 1;
        }
        if ins.origin != Origin::Generated {
            continue;
        }
        for j in 0..i {
            let s = f1(&toks[i], &toks[j]);
            worst = worst.max(s);
            if s >= 0.7 {
                similar += 1;
            }
        }
    }
    ensure(similar == 0 && blacklisted == 0, || format!("{similar} pairs at or above 0.7, {blacklisted} blacklist hits"))?;
    let generated = pool.instructions().iter().filter(|i| i.origin == Origin::Generated).count();
    Ok(format!(
        "pool {} ({generated} generated, {} rejected candidates); max pairwise f1 {worst:.3}",
        pool.len(),
        report.log.rejected.values().sum::<usize>()
    ))
}

// ---------------------------------------------------------------------------

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        for &k in &order[i..=j] {
            r[k] = (i + j + 2) as f64 / 2.0;
        }
        i = j + 1;
    }
    r
}

fn spearman_oracle(xs: &[f64], ys: &[f64]) -> f64 {
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn toy_rl() -> Result<String, String> {
    let cfg = TrainConfig::default();
    ensure(cfg.steps == 200 && cfg.batch_size == 4 && cfg.beta == 0.05 && cfg.span == 30, || format!("defaults {cfg:?}"))?;
    let env = ToyEnv::synthetic(5, 8, cfg.seed, &RewardWeights::default()).map_err(|e| e.to_string())?;
    let out = train(&env, &cfg).map_err(|e| e.to_string())?;
    let values = out.trace.values();
    let smoothed: Vec<f64> = (0..values.len())
        .map(|i| {
            let w = &values[(i + 1).saturating_sub(cfg.span)..=i];
            w.iter().sum::<f64>() / w.len() as f64
        })
        .collect();
    let steps: Vec<f64> = (0..values.len()).map(|i| i as f64).collect();
    let rho = spearman_oracle(&steps, &smoothed);
    ensure(rho > 0.3, || format!("smoothed Spearman {rho:.3}"))?;

    let env2 = ToyEnv::synthetic(2, 2, 5, &RewardWeights::default()).map_err(|e| e.to_string())?;
    let start = ToyPolicy::from_logits(2, 2, vec![0.3, -0.2, 0.1, 0.4]).map_err(|e| e.to_string())?;
    let batch = rollout(&start, &env2, &mut ChaCha8Rng::seed_from_u64(8), 8, 0.05).map_err(|e| e.to_string())?;
    let moved = start.clone().with_logits(vec![0.45, -0.3, 0.0, 0.55]).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for eps in [0.2, 10.0] {
        let (g, _) = surrogate_gradient(&moved, &batch, eps);
        let h = 1e-6;
        let fd: Vec<f64> = (0..4)
            .map(|i| {
                let (mut up, mut down) = (moved.logits().to_vec(), moved.logits().to_vec());
                up[i] += h;
                down[i] -= h;
                let f = |l: Vec<f64>| surrogate_objective(&moved.clone().with_logits(l).unwrap(), &batch, eps);
                (f(up) - f(down)) / (2.0 * h)
            })
            .collect();
        let diff: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = fd.iter().map(|b| b * b).sum::<f64>().sqrt();
        ensure(scale > 0.0, || "finite-difference gradient is zero".into())?;
        worst = worst.max(diff / scale);
    }
    ensure(worst < 1e-4, || format!("gradient relative error {worst:e}"))?;
    Ok(format!("smoothed Spearman {rho:.3}; gradient relative error {worst:.1e}"))
}

// ---------------------------------------------------------------------------

fn ts(id: &str, v: f64) -> TaskScore {
    TaskScore { task_id: id.into(), category: "c".into(), mean_rouge_l: v, per_instance: vec![v] }
}

fn harness_correctness() -> Result<String, String> {
    let bench = load_benchmark(&fixtures().join("benchmark"), 100).map_err(|e| e.to_string())?;
    ensure(bench.tasks.len() == 3, || format!("{} tasks loaded", bench.tasks.len()))?;
    // hand-scored: lcs / token counts worked out per instance
    let cases: [(&[&str], f64); 3] = [
        // 1.0; "the capital is tokyo" vs "tokyo": p 1/4, r 1 -> 0.4
        (&["Paris", "The capital is Tokyo"], (1.0 + 0.4) / 2.0),
        // 1.0; best of "negative" (0) and "bad" (p 1/3, r 1 -> 0.5); 0.0
        (&["positive", "it was bad", "negative"], (1.0 + 0.5 + 0.0) / 3.0),
        // lcs 4 of 5 and 4 tokens: 2 * 0.8 * 1 / 1.8
        (&["she walked to the school"], 8.0 / 9.0),
    ];
    let mut worst = 0.0f64;
    for (task, (preds, hand)) in bench.tasks.iter().zip(cases) {
        let s = score_task(task, preds, ReferenceRule::Max).map_err(|e| e.to_string())?;
        worst = worst.max((s.mean_rouge_l - hand).abs());
    }
    ensure(worst <= 1e-9, || format!("task means off by {worst:e}"))?;

    let a = [ts("x", 0.5), ts("y", 0.6), ts("z", 0.7)];
    let b = [ts("x", 0.4), ts("y", 0.6), ts("z", 0.9)];
    let c = compare_runs(&a, &b, 1000, 0).map_err(|e| e.to_string())?;
    let pct = format!("{:.2}", c.pct_task_better);
    ensure(pct == "33.33", || format!("% task better {pct}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let base: Vec<f64> = (0..30).map(|_| rng.gen_range(0.1..0.4)).collect();
    let p_same = significance(&base, &base, 10_000, 0).map_err(|e| e.to_string())?;
    ensure(p_same == 1.0, || format!("identical runs p = {p_same}"))?;
    let shifted: Vec<f64> = base.iter().map(|x| x + 0.5 + rng.gen_range(-1e-3..1e-3)).collect();
    let p_shift = significance(&shifted, &base, 10_000, 0).map_err(|e| e.to_string())?;
    ensure(p_shift < 0.01, || format!("offset fixture p = {p_shift}"))?;
    Ok(format!("3 task means max |err| {worst:.1e}; {pct}% better; p = {p_same} identical, {p_shift:.4} offset"))
}

// ---------------------------------------------------------------------------

const PIPELINE: &[&[&str]] = &[
    &["bootstrap", "--seeds", "fx/seeds.jsonl", "--target", "20", "--out", "pool.jsonl"],
    &["gen-instances", "--pool", "pool.jsonl", "--out", "ift.jsonl"],
    &["score", "--in", "ift.jsonl", "--out", "scored.jsonl"],
    &["evaluate", "--benchmark", "fx/benchmark", "--out", "eval.json"],
];

fn refine_in(dir: &Path, args: &[String]) -> Result<(), String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_refine"));
    cmd.args(args).current_dir(dir);
    for (k, _) in std::env::vars() {
        if k.starts_with("REFINE_") {
            cmd.env_remove(k);
        }
    }
    let out = cmd.output().map_err(|e| e.to_string())?;
    ensure(out.status.success(), || format!("refine {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))
}

fn copy_dir(from: &Path, to: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(to)?;
    for e in std::fs::read_dir(from)? {
        let e = e?;
        if e.file_type()?.is_dir() {
            copy_dir(&e.path(), &to.join(e.file_name()))?;
        } else {
            std::fs::copy(e.path(), to.join(e.file_name()))?;
        }
    }
    Ok(())
}

fn artifacts(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
        let p = e.map_err(|e| e.to_string())?.path();
        if p.is_file() {
            out.insert(p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).map_err(|e| e.to_string())?);
        }
    }
    Ok(out)
}

fn replay_determinism() -> Result<String, String> {
    let first = tempfile::tempdir().map_err(|e| e.to_string())?;
    let second = tempfile::tempdir().map_err(|e| e.to_string())?;
    for d in [first.path(), second.path()] {
        copy_dir(&fixtures(), &d.join("fx")).map_err(|e| e.to_string())?;
    }
    for step in PIPELINE {
        refine_in(first.path(), &step.iter().map(|s| s.to_string()).collect::<Vec<_>>())?;
    }
    // the second run takes its arguments from the first run's manifests
    for step in PIPELINE {
        let out = step[step.iter().position(|a| *a == "--out").unwrap() + 1];
        let text = std::fs::read_to_string(first.path().join(format!("{out}.manifest.json"))).map_err(|e| e.to_string())?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        refine_in(second.path(), &m.args)?;
    }
    let (a, b) = (artifacts(first.path())?, artifacts(second.path())?);
    ensure(a.keys().eq(b.keys()), || format!("file sets differ: {:?} vs {:?}", a.keys(), b.keys()))?;
    for (name, bytes) in &a {
        ensure(!bytes.is_empty() || name.ends_with(".log.jsonl"), || format!("{name} is empty"))?;
        ensure(b[name] == *bytes, || format!("{name} differs between runs"))?;
    }
    let bytes: usize = a.values().map(Vec::len).sum();
    Ok(format!("{} artifacts ({bytes} bytes) identical across runs", a.len()))
}

// ---------------------------------------------------------------------------

fn parser_coverage() -> Result<String, String> {
    let two = parse_instances("Example 1\nList: [3,1]\nOutput: [1,3]\nExample 2\nList: [2]\nOutput: [2]", "t");
    let got: Vec<(&str, &str)> = two.instances.iter().map(|i| (i.input.as_str(), i.output.as_str())).collect();
    ensure(got == [("[3,1]", "[1,3]"), ("[2]", "[2]")] && two.malformed_segments.is_empty(), || format!("two-example: {two:?}"))?;

    let direct = parse_instances("Output:\n- A\n- B", "t");
    let ok = direct.instances.len() == 1
        && direct.instances[0].input.is_empty()
        && direct.instances[0].output == "- A\n- B"
        && direct.malformed_segments.is_empty();
    ensure(ok, || format!("direct output: {direct:?}"))?;

    let missing = parse_instances("Example 1\nSentence: hello there", "t");
    ensure(missing.instances.is_empty() && missing.malformed_segments.len() == 1, || format!("missing output: {missing:?}"))?;
    Ok("3 of 3 fixtures".into())
}
