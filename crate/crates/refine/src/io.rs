//! Line-delimited JSON artifacts, seed files, pool snapshots and benchmark
//! directories.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use refine_core::eval::{EvalInstance, EvalTask};
use refine_core::pool::PoolState;
use refine_core::{Instance, Instruction, Origin};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SNAPSHOT_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_MAX_INSTANCES: usize = 100;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },
    #[error("{path}: no seed tasks")]
    NoSeedTasks { path: PathBuf },
    #[error("{path}: snapshot schema error: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("{path}: no benchmark tasks found")]
    EmptyBenchmark { path: PathBuf },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

/// Non-blank lines with their 1-based line numbers.
pub fn read_lines(path: &Path) -> Result<Vec<(usize, String)>, IoError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    read_lines(path)?
        .into_iter()
        .map(|(n, line)| {
            serde_json::from_str(&line).map_err(|e| IoError::Malformed {
                path: path.to_path_buf(),
                line: n,
                message: e.to_string(),
            })
        })
        .collect()
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), IoError> {
    let mut w = create(path)?;
    for item in items {
        let line = serde_json::to_string(item).expect("artifact types serialize");
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut w = create(path)?;
    let text = serde_json::to_string_pretty(value).expect("artifact types serialize");
    writeln!(w, "{text}").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| IoError::Malformed {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

// ---------------------------------------------------------------------------
// seed tasks

#[derive(Debug, Deserialize)]
struct SeedInstance {
    #[serde(default)]
    input: String,
    output: String,
}

#[derive(Debug, Deserialize)]
struct SeedLine {
    #[serde(default)]
    id: Option<String>,
    instruction: String,
    #[serde(default)]
    instances: Option<Vec<SeedInstance>>,
    #[serde(default)]
    input: Option<String>,
    #[serde(default)]
    output: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedTask {
    pub instruction: Instruction,
    pub instances: Vec<Instance>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedLoad {
    pub tasks: Vec<SeedTask>,
    pub warnings: Vec<String>,
}

/// Read seed tasks, one JSON object per line.
///
/// Accepts `{"id"?, "instruction", "instances": [{"input", "output"}, ..]}`
/// or a flat `{"id"?, "instruction", "input"?, "output"}`. A repeated
/// instruction text keeps its first occurrence and adds a warning.
pub fn load_seed_tasks(path: &Path) -> Result<SeedLoad, IoError> {
    let lines = read_lines(path)?;
    let mut tasks: Vec<SeedTask> = Vec::new();
    let mut warnings = Vec::new();
    let mut texts = HashSet::new();
    let mut ids = HashSet::new();
    for (n, line) in lines {
        let bad = |message: String| IoError::Malformed { path: path.to_path_buf(), line: n, message };
        let rec: SeedLine = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let text = rec.instruction.trim().to_string();
        if text.is_empty() {
            return Err(bad("empty instruction".into()));
        }
        let raw: Vec<SeedInstance> = match (rec.instances, rec.output) {
            (Some(list), _) => list,
            (None, Some(output)) => vec![SeedInstance { input: rec.input.unwrap_or_default(), output }],
            (None, None) => Vec::new(),
        };
        if raw.iter().all(|i| i.output.trim().is_empty()) {
            return Err(bad("record has no instance with a non-empty output".into()));
        }
        if !texts.insert(text.clone()) {
            warnings.push(format!("line {n}: duplicate instruction, keeping the first occurrence"));
            continue;
        }
        let id = rec.id.unwrap_or_else(|| format!("seed-{:04}", tasks.len()));
        if !ids.insert(id.clone()) {
            return Err(bad(format!("duplicate id `{id}`")));
        }
        let instances = raw
            .into_iter()
            .filter(|i| !i.output.trim().is_empty())
            .map(|i| Instance { instruction_id: id.clone(), input: i.input, output: i.output })
            .collect();
        tasks.push(SeedTask { instruction: Instruction::seed(id, text), instances });
    }
    if tasks.is_empty() {
        return Err(IoError::NoSeedTasks { path: path.to_path_buf() });
    }
    for w in &warnings {
        tracing::warn!(path = %path.display(), "{w}");
    }
    Ok(SeedLoad { tasks, warnings })
}

// ---------------------------------------------------------------------------
// pool snapshots

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotHeader {
    schema_version: u32,
    rng_seed: u64,
    blacklist: Vec<String>,
    calls_made: u64,
    count: usize,
}

/// Header line followed by one instruction per line.
pub fn snapshot_pool(pool: &PoolState, path: &Path) -> Result<(), IoError> {
    let mut w = create(path)?;
    let header = SnapshotHeader {
        schema_version: SNAPSHOT_SCHEMA_VERSION,
        rng_seed: pool.rng_seed(),
        blacklist: pool.blacklist().to_vec(),
        calls_made: pool.calls_made(),
        count: pool.len(),
    };
    writeln!(w, "{}", serde_json::to_string(&header).expect("header serializes")).map_err(io_err(path))?;
    for ins in pool.instructions() {
        writeln!(w, "{}", serde_json::to_string(ins).expect("instruction serializes")).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn restore_pool(path: &Path) -> Result<PoolState, IoError> {
    let schema = |message: String| IoError::Schema { path: path.to_path_buf(), message };
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    if !text.is_empty() && !text.ends_with('\n') {
        return Err(schema("file does not end with a newline (truncated?)".into()));
    }
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or_else(|| schema("missing header".into()))?;
    let header: SnapshotHeader = serde_json::from_str(first).map_err(|e| schema(format!("bad header: {e}")))?;
    if header.schema_version != SNAPSHOT_SCHEMA_VERSION {
        return Err(schema(format!(
            "version {} not supported (expected {SNAPSHOT_SCHEMA_VERSION})",
            header.schema_version
        )));
    }
    let mut instructions = Vec::with_capacity(header.count);
    for (i, line) in lines {
        let ins: Instruction = serde_json::from_str(line).map_err(|e| IoError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        instructions.push(ins);
    }
    if instructions.len() != header.count {
        return Err(schema(format!("header announces {} instructions, found {}", header.count, instructions.len())));
    }
    PoolState::from_parts(instructions, header.rng_seed, header.blacklist, header.calls_made)
        .map_err(|e| IoError::Invalid { path: path.to_path_buf(), message: e.to_string() })
}

/// Instruction texts from a pool snapshot, seed file or record file, in
/// order of first appearance.
pub fn read_instruction_texts(path: &Path) -> Result<Vec<String>, IoError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (n, line) in read_lines(path)? {
        let v: serde_json::Value = serde_json::from_str(&line).map_err(|e| IoError::Malformed {
            path: path.to_path_buf(),
            line: n,
            message: e.to_string(),
        })?;
        if v.get("schema_version").is_some() {
            continue;
        }
        let text = v.get("instruction").and_then(|t| t.as_str()).ok_or_else(|| IoError::Malformed {
            path: path.to_path_buf(),
            line: n,
            message: "missing string field `instruction`".into(),
        })?;
        if seen.insert(text.to_string()) {
            out.push(text.to_string());
        }
    }
    Ok(out)
}

/// Instructions of a pool snapshot split by origin.
pub fn split_by_origin(pool: &PoolState) -> (Vec<String>, Vec<String>) {
    let mut seeds = Vec::new();
    let mut generated = Vec::new();
    for i in pool.instructions() {
        match i.origin {
            Origin::Seed => seeds.push(i.text.clone()),
            Origin::Generated => generated.push(i.text.clone()),
        }
    }
    (seeds, generated)
}

// ---------------------------------------------------------------------------
// benchmark

#[derive(Debug, Deserialize)]
struct RawTaskInstance {
    input: String,
    output: OneOrMany,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

#[derive(Debug, Deserialize)]
struct RawTask {
    #[serde(rename = "Definition")]
    definition: OneOrMany,
    #[serde(rename = "Categories", default)]
    categories: Vec<String>,
    #[serde(rename = "Instances")]
    instances: Vec<RawTaskInstance>,
}

fn join(v: OneOrMany) -> String {
    match v {
        OneOrMany::One(s) => s,
        OneOrMany::Many(v) => v.join(" "),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub tasks: Vec<EvalTask>,
    pub warnings: Vec<String>,
}

/// Load task files (`<task_id>.json` with `Definition`, `Categories` and
/// `Instances`) from `dir`.
///
/// When `dir/test_tasks.txt` exists only the listed tasks are read, in
/// listed order; otherwise every `.json` file is read in name order.
/// Malformed files are skipped with a warning. At most `max_instances`
/// instances are kept per task.
pub fn load_benchmark(dir: &Path, max_instances: usize) -> Result<Benchmark, IoError> {
    let list = dir.join("test_tasks.txt");
    let files: Vec<PathBuf> = if list.is_file() {
        fs::read_to_string(&list)
            .map_err(io_err(&list))?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|name| dir.join(format!("{name}.json")))
            .collect()
    } else {
        let mut v: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(io_err(dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        v.sort();
        v
    };
    let mut tasks = Vec::new();
    let mut warnings = Vec::new();
    for file in files {
        let task_id = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let parsed = fs::read_to_string(&file)
            .map_err(|e| e.to_string())
            .and_then(|t| serde_json::from_str::<RawTask>(&t).map_err(|e| e.to_string()));
        let raw = match parsed {
            Ok(r) => r,
            Err(e) => {
                let msg = format!("skipping {}: {e}", file.display());
                tracing::warn!("{msg}");
                warnings.push(msg);
                continue;
            }
        };
        let task = EvalTask {
            task_id,
            category: raw.categories.first().cloned().unwrap_or_else(|| "uncategorized".into()),
            definition: join(raw.definition),
            instances: raw
                .instances
                .into_iter()
                .take(max_instances)
                .map(|i| EvalInstance {
                    input: i.input,
                    references: match i.output {
                        OneOrMany::One(s) => vec![s],
                        OneOrMany::Many(v) => v,
                    },
                })
                .collect(),
        };
        if let Err(e) = task.validate() {
            let msg = format!("skipping {}: {e}", file.display());
            tracing::warn!("{msg}");
            warnings.push(msg);
            continue;
        }
        tasks.push(task);
    }
    if tasks.is_empty() {
        return Err(IoError::EmptyBenchmark { path: dir.to_path_buf() });
    }
    Ok(Benchmark { tasks, warnings })
}

/// SHA-256 of a file's bytes as lowercase hex.
pub fn file_sha256(path: &Path) -> Result<String, IoError> {
    use sha2::{Digest, Sha256};
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use refine_core::pool::default_blacklist;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn seed_formats_and_duplicates() {
        let d = tempfile::tempdir().unwrap();
        let p = write(
            d.path(),
            "seeds.jsonl",
            concat!(
                r#"{"id":"s1","instruction":"Sort the list.","instances":[{"input":"3 1","output":"1 3"}]}"#,
                "\n",
                r#"{"instruction":"Name a colour.","output":"red"}"#,
                "\n\n",
                r#"{"id":"s3","instruction":"Sort the list.","instances":[{"input":"2 1","output":"1 2"}]}"#,
                "\n"
            ),
        );
        let load = load_seed_tasks(&p).unwrap();
        assert_eq!(load.tasks.len(), 2);
        assert_eq!(load.warnings.len(), 1);
        assert_eq!(load.tasks[1].instruction.id, "seed-0001");
        assert_eq!(load.tasks[0].instances[0].instruction_id, "s1");
        assert!(load.tasks.iter().all(|t| t.instruction.is_seed() && t.instruction.step == 0));
    }

    #[test]
    fn seed_errors() {
        let d = tempfile::tempdir().unwrap();
        let empty = write(d.path(), "empty.jsonl", "\n");
        assert!(matches!(load_seed_tasks(&empty), Err(IoError::NoSeedTasks { .. })));
        assert!(load_seed_tasks(&empty).unwrap_err().to_string().contains("no seed tasks"));
        let bad = write(d.path(), "bad.jsonl", "{\"instruction\":\"a\",\"output\":\"b\"}\n{oops\n");
        match load_seed_tasks(&bad) {
            Err(IoError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let no_inst = write(d.path(), "noinst.jsonl", "{\"instruction\":\"a\",\"instances\":[]}\n");
        assert!(matches!(load_seed_tasks(&no_inst), Err(IoError::Malformed { line: 1, .. })));
        assert!(matches!(load_seed_tasks(&d.path().join("missing")), Err(IoError::Io { .. })));
    }

    fn sample_pool() -> PoolState {
        let seeds = vec![Instruction::seed("s0", "Sort the list."), Instruction::seed("s1", "Name a colour.")];
        let mut pool = PoolState::with_seeds(seeds, 7, default_blacklist()).unwrap();
        pool.admit("Write a haiku about rivers", Default::default(), 1);
        pool
    }

    #[test]
    fn snapshot_round_trip_is_byte_stable() {
        let d = tempfile::tempdir().unwrap();
        let a = d.path().join("a.jsonl");
        let b = d.path().join("b.jsonl");
        let pool = sample_pool();
        snapshot_pool(&pool, &a).unwrap();
        let back = restore_pool(&a).unwrap();
        assert_eq!(back, pool);
        snapshot_pool(&back, &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }

    #[test]
    fn truncated_snapshot_is_schema_error() {
        let d = tempfile::tempdir().unwrap();
        let a = d.path().join("a.jsonl");
        snapshot_pool(&sample_pool(), &a).unwrap();
        let text = fs::read_to_string(&a).unwrap();
        let cut = write(d.path(), "cut.jsonl", &text[..text.len() - 10]);
        assert!(matches!(restore_pool(&cut), Err(IoError::Schema { .. })));
        let last_line_dropped: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
        let short = write(d.path(), "short.jsonl", &last_line_dropped);
        assert!(matches!(restore_pool(&short), Err(IoError::Schema { .. })));
        let empty = write(d.path(), "empty.jsonl", "");
        assert!(matches!(restore_pool(&empty), Err(IoError::Schema { .. })));
        let future = write(d.path(), "v9.jsonl", &text.replacen("\"schema_version\":1", "\"schema_version\":9", 1));
        assert!(matches!(restore_pool(&future), Err(IoError::Schema { .. })));
    }

    #[test]
    fn instruction_texts_skip_header() {
        let d = tempfile::tempdir().unwrap();
        let a = d.path().join("a.jsonl");
        snapshot_pool(&sample_pool(), &a).unwrap();
        assert_eq!(read_instruction_texts(&a).unwrap(), ["Sort the list.", "Name a colour.", "Write a haiku about rivers"]);
    }

    #[test]
    fn benchmark_loading() {
        let d = tempfile::tempdir().unwrap();
        write(
            d.path(),
            "task001_a.json",
            r#"{"Definition":["Repeat the input."],"Categories":["Copying"],"Instances":[{"id":"1","input":"x","output":["x"]},{"id":"2","input":"y","output":["y","z"]}]}"#,
        );
        write(d.path(), "task002_b.json", r#"{"Definition":"Say yes.","Instances":[{"input":"q","output":"yes"}]}"#);
        write(d.path(), "task003_bad.json", "{not json");
        let b = load_benchmark(d.path(), 1).unwrap();
        assert_eq!(b.tasks.len(), 2);
        assert_eq!(b.warnings.len(), 1);
        assert_eq!(b.tasks[0].instances.len(), 1);
        assert_eq!(b.tasks[0].category, "Copying");
        assert_eq!(b.tasks[1].category, "uncategorized");

        write(d.path(), "test_tasks.txt", "task002_b\n");
        assert_eq!(load_benchmark(d.path(), 100).unwrap().tasks.len(), 1);

        let empty = tempfile::tempdir().unwrap();
        assert!(matches!(load_benchmark(empty.path(), 100), Err(IoError::EmptyBenchmark { .. })));
    }
}
