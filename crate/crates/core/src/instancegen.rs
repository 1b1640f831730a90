//! Instance generation: the fixed-demonstration prompt, the completion
//! parser, and dataset assembly.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, GenParams, Generator};
use crate::hash::{derive_seed, fnv1a};
use crate::types::{IftRecord, Instance, Instruction};

pub const INSTANCE_TEMPLATE: &str = include_str!("../templates/instance_prompt.txt");
const TARGET_SLOT: &str = "{instruction for target task}";

/// Input labels recognised by default. `Input` is always accepted in addition.
pub const DEFAULT_INPUT_LABELS: &[&str] = &[
    "Input", "List", "Paragraph", "Sentence", "Text", "Question", "Context", "Passage", "Article",
    "Email", "Document", "Code", "Review", "Statement", "Word", "Words", "Number", "Numbers", "Story",
    "Dialogue", "Conversation", "Table", "Title", "Topic", "Query", "Tweet", "Poem", "Essay", "Data",
];

/// Render the instance-generation prompt for one instruction.
///
/// The instruction is trimmed before it fills the final `Task:` slot;
/// everything else is the stored template.
pub fn render_instance_prompt(instruction: &str) -> String {
    INSTANCE_TEMPLATE.replacen(TARGET_SLOT, instruction.trim(), 1)
}

/// The target instruction of a rendered instance prompt.
pub fn target_task(prompt: &str) -> Option<&str> {
    let header = INSTANCE_TEMPLATE.lines().next()?;
    if !prompt.starts_with(header) {
        return None;
    }
    let at = prompt.rfind("\nTask: ")?;
    Some(prompt[at + "\nTask: ".len()..].trim())
}

/// Render one instance back into the template's example shape.
pub fn render_instance_example(instance: &Instance, index: usize) -> String {
    if instance.input.trim().is_empty() {
        format!("Output: {}", instance.output)
    } else {
        format!("Example {index}\nInput: {}\nOutput: {}", instance.input, instance.output)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InstanceParseResult {
    pub instances: Vec<Instance>,
    pub malformed_segments: Vec<String>,
}

/// Case-insensitive set of input labels such as `List:` or `Paragraph:`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputLabels(Vec<String>);

impl InputLabels {
    pub fn new<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v: Vec<String> = labels.into_iter().map(|s| s.as_ref().trim().to_lowercase()).filter(|s| !s.is_empty()).collect();
        if !v.iter().any(|l| l == "input") {
            v.push("input".into());
        }
        InputLabels(v)
    }

    /// Text after a recognised `<Label>:` prefix, also accepting the
    /// template's `Input 2 - List:` form.
    fn strip<'a>(&self, line: &'a str) -> Option<&'a str> {
        let line = line.trim_start();
        let colon = line.find(':')?;
        let head = line[..colon].trim();
        let label = match head.rsplit_once(" - ") {
            Some((pre, lab)) if is_numbered_input(pre) => lab.trim(),
            _ => head,
        };
        let lower = label.to_lowercase();
        if self.0.contains(&lower) || is_numbered_input(label) {
            Some(&line[colon + 1..])
        } else {
            None
        }
    }
}

impl Default for InputLabels {
    fn default() -> Self {
        InputLabels::new(DEFAULT_INPUT_LABELS)
    }
}

/// `Input 2` style prefixes.
fn is_numbered_input(s: &str) -> bool {
    match s.trim().strip_prefix("Input") {
        Some(rest) => {
            let rest = rest.trim();
            !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit())
        }
        None => false,
    }
}

fn is_example_header(line: &str) -> bool {
    let t = line.trim();
    let Some(rest) = t.strip_prefix("Example") else { return false };
    let rest = rest.trim().trim_end_matches(':').trim();
    !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit())
}

fn output_text(line: &str) -> Option<&str> {
    line.trim_start().strip_prefix("Output:")
}

fn join_trimmed(lines: &[&str]) -> String {
    lines.join("\n").trim().to_string()
}

/// Split a completion into instances.
///
/// Recognised shapes: a bare `Output:` block (empty input), and `Example k`
/// blocks holding an optional labelled input followed by `Output:`. Output
/// text runs until the next example header or recognised input label.
/// Input text without a recognised label is kept verbatim. Anything carrying
/// no `Output:`, or an empty one, lands in `malformed_segments`. Parsing
/// stops at a line beginning a new `Task:`.
pub fn parse_instances(completion: &str, instruction_id: &str) -> InstanceParseResult {
    parse_instances_with(completion, instruction_id, &InputLabels::default())
}

pub fn parse_instances_with(completion: &str, instruction_id: &str, labels: &InputLabels) -> InstanceParseResult {
    let mut lines: Vec<&str> = Vec::new();
    for line in completion.lines() {
        if line.trim_start().starts_with("Task:") {
            break;
        }
        lines.push(line);
    }

    // segments: (optional example header, body lines)
    let mut segments: Vec<(Option<&str>, Vec<&str>)> = alloc::vec![(None, Vec::new())];
    for line in lines {
        if is_example_header(line) {
            segments.push((Some(line), Vec::new()));
        } else if let Some(last) = segments.last_mut() {
            last.1.push(line);
        }
    }

    let mut result = InstanceParseResult::default();
    for (header, body) in segments {
        if header.is_none() && body.iter().all(|l| l.trim().is_empty()) {
            continue;
        }
        let blocks = split_blocks(&body, labels);
        if blocks.is_empty() {
            result.malformed_segments.push(raw_segment(header, &body));
            continue;
        }
        for block in blocks {
            match parse_block(&block, labels) {
                Some((input, output)) => result.instances.push(Instance {
                    instruction_id: instruction_id.to_string(),
                    input,
                    output,
                }),
                None => result.malformed_segments.push(raw_segment(header, &block)),
            }
        }
    }
    result
}

fn raw_segment(header: Option<&str>, body: &[&str]) -> String {
    let mut s = String::new();
    if let Some(h) = header {
        s.push_str(h);
        if !body.is_empty() {
            s.push('\n');
        }
    }
    s.push_str(&body.join("\n"));
    s
}

/// Cut a segment body into blocks, each ending with an output run. A block
/// boundary falls where a recognised input label follows an output line.
fn split_blocks<'a>(body: &[&'a str], labels: &InputLabels) -> Vec<Vec<&'a str>> {
    let mut blocks: Vec<Vec<&str>> = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    let mut seen_output = false;
    for &line in body {
        if seen_output && (labels.strip(line).is_some() || output_text(line).is_some()) {
            blocks.push(core::mem::take(&mut current));
            seen_output = false;
        }
        if output_text(line).is_some() {
            seen_output = true;
        }
        current.push(line);
    }
    if current.iter().any(|l| !l.trim().is_empty()) {
        blocks.push(current);
    }
    blocks
}

fn parse_block(block: &[&str], labels: &InputLabels) -> Option<(String, String)> {
    let out_at = block.iter().position(|l| output_text(l).is_some())?;
    let mut out_lines: Vec<&str> = alloc::vec![output_text(block[out_at]).unwrap_or("")];
    out_lines.extend_from_slice(&block[out_at + 1..]);
    let output = join_trimmed(&out_lines);
    if output.is_empty() {
        return None;
    }
    let pre: Vec<&str> = block[..out_at].iter().copied().skip_while(|l| l.trim().is_empty()).collect();
    let input = match pre.first() {
        None => String::new(),
        Some(first) => match labels.strip(first) {
            Some(rest) => {
                let mut v = alloc::vec![rest];
                v.extend_from_slice(&pre[1..]);
                join_trimmed(&v)
            }
            None => join_trimmed(&pre),
        },
    };
    Some((input, output))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicySource {
    #[default]
    Base,
    Trained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InstanceGenConfig {
    pub max_tokens: u32,
    pub temperature: f64,
    pub stop: Vec<String>,
    pub input_labels: Vec<String>,
    /// Also generate instances for seed instructions.
    pub include_seeds: bool,
    /// Requests issued together; assembly order is unaffected.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for InstanceGenConfig {
    fn default() -> Self {
        InstanceGenConfig {
            max_tokens: 512,
            temperature: 0.0,
            stop: alloc::vec!["\nTask:".to_string()],
            input_labels: DEFAULT_INPUT_LABELS.iter().map(|s| s.to_string()).collect(),
            include_seeds: false,
            batch_size: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationLogEntry {
    pub instruction_id: String,
    pub source: PolicySource,
    pub instances: usize,
    pub empty_input: usize,
    pub malformed: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GenerationOutput {
    pub records: Vec<IftRecord>,
    pub log: Vec<GenerationLogEntry>,
}

impl GenerationOutput {
    pub fn empty_input_count(&self) -> usize {
        self.log.iter().map(|e| e.empty_input).sum()
    }

    pub fn malformed_count(&self) -> usize {
        self.log.iter().map(|e| e.malformed).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InstanceGenError {
    #[error("generation failed for instruction `{instruction_id}`: {source}")]
    Backend { instruction_id: String, source: BackendError, partial: GenerationOutput, processed: usize },
}

/// Instructions that receive instances under `config`, in pool order.
pub fn selected_instructions<'a>(instructions: &'a [Instruction], config: &InstanceGenConfig) -> Vec<&'a Instruction> {
    instructions.iter().filter(|i| config.include_seeds || !i.is_seed()).collect()
}

/// One generation call per selected instruction, skipping the first `skip`
/// (already processed by an interrupted run). Records follow instruction
/// order regardless of completion order.
pub fn generate_instances<G: Generator + ?Sized>(
    instructions: &[Instruction],
    backend: &G,
    source: PolicySource,
    config: &InstanceGenConfig,
    skip: usize,
) -> Result<GenerationOutput, InstanceGenError> {
    let labels = InputLabels::new(&config.input_labels);
    let selected = selected_instructions(instructions, config);
    let mut out = GenerationOutput::default();
    let batch = config.batch_size.max(1);
    let mut processed = skip.min(selected.len());
    for chunk in selected[processed..].chunks(batch) {
        let requests: Vec<(String, GenParams)> = chunk
            .iter()
            .map(|ins| {
                let params = GenParams {
                    max_tokens: config.max_tokens,
                    temperature: config.temperature,
                    stop: config.stop.clone(),
                    seed: Some(derive_seed(config.seed, fnv1a(ins.id.as_bytes()))),
                };
                (render_instance_prompt(&ins.text), params)
            })
            .collect();
        for (ins, res) in chunk.iter().zip(backend.complete_batch(&requests)) {
            let text = match res {
                Ok(t) => t,
                Err(source) => {
                    return Err(InstanceGenError::Backend {
                        instruction_id: ins.id.clone(),
                        source,
                        partial: out,
                        processed,
                    })
                }
            };
            let parsed = parse_instances_with(&text, &ins.id, &labels);
            let empty_input = parsed.instances.iter().filter(|i| i.input.is_empty()).count();
            out.log.push(GenerationLogEntry {
                instruction_id: ins.id.clone(),
                source,
                instances: parsed.instances.len(),
                empty_input,
                malformed: parsed.malformed_segments.len(),
            });
            out.records.extend(parsed.instances.into_iter().map(|i| IftRecord::new(ins.text.clone(), i.input, i.output)));
            processed += 1;
        }
    }
    Ok(out)
}
