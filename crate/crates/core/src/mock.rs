//! Deterministic in-process backend.
//!
//! Every response is a pure function of `(seed, request)`, so any pipeline
//! stage run against it replays bit-exact. It recognises the instruction and
//! instance prompt templates and answers in their shape; any other prompt
//! gets a short answer drawn from the prompt's own words.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backend::{
    truncate_at_stop, BackendError, Capabilities, GenParams, Generator, HealthCheck, HealthStatus,
    IndicatorScores, LogProber, QualityScorer,
};
use crate::hash::{hash_fields, mix64};
use crate::rouge::tokenize;
use crate::{bootstrap, instancegen};

const VERBS: &[&str] = &[
    "write", "describe", "explain", "list", "summarize", "classify", "generate", "identify", "suggest",
    "compare", "translate", "rewrite", "find", "create", "name", "give", "outline", "predict", "convert",
    "recommend", "evaluate", "compose", "design", "estimate", "rank",
];

const WORDS: &[&str] = &[
    "story", "poem", "recipe", "letter", "essay", "summary", "email", "question", "answer", "plan",
    "list", "table", "sentence", "paragraph", "word", "number", "song", "joke", "riddle", "slogan",
    "review", "headline", "title", "tweet", "speech", "argument", "definition", "example", "reason",
    "fact", "tip", "step", "rule", "idea", "method", "strategy", "habit", "goal", "budget", "schedule",
    "river", "mountain", "city", "forest", "ocean", "planet", "garden", "kitchen", "school", "market",
    "teacher", "student", "doctor", "farmer", "pilot", "artist", "child", "friend", "customer", "team",
    "about", "for", "with", "using", "without", "from", "into", "during", "after", "before",
    "quick", "short", "simple", "formal", "funny", "polite", "detailed", "creative", "healthy", "ancient",
    "modern", "weekly", "daily", "local", "global", "digital", "green", "quiet", "brave", "bright",
    "three", "five", "ten", "several", "two", "every", "each", "some", "many", "few",
    "image", "graph", "picture", "map",
];

/// How [`MockBackend`] assigns token probabilities for `logprob`.
#[derive(Debug, Clone, PartialEq)]
pub enum LogProbModel {
    /// Every token has probability `1 / vocab_size`.
    Uniform { vocab_size: u32 },
    /// Listed tokens get the listed probability; anything else gets `default`.
    Table { probs: Vec<(String, f64)>, default: f64 },
    /// Per-token probability in `[0.02, 0.5)` derived from the backend seed.
    Hashed,
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    seed: u64,
    logprob_model: LogProbModel,
    capabilities: Capabilities,
    max_new_instructions: usize,
}

impl MockBackend {
    pub fn new(seed: u64) -> Self {
        MockBackend { seed, logprob_model: LogProbModel::Hashed, capabilities: Capabilities::ALL, max_new_instructions: 8 }
    }

    pub fn with_logprob_model(mut self, model: LogProbModel) -> Self {
        self.logprob_model = model;
        self
    }

    pub fn with_capabilities(mut self, capabilities: Capabilities) -> Self {
        self.capabilities = capabilities;
        self
    }

    /// Upper bound on instructions emitted per instruction-generation call.
    pub fn with_max_new_instructions(mut self, n: usize) -> Self {
        self.max_new_instructions = n.max(1);
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn rng_for(&self, fields: &[&str]) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(hash_fields(self.seed, fields))
    }

    fn instruction_like(rng: &mut ChaCha8Rng) -> String {
        let verb = VERBS.choose(rng).copied().unwrap_or("write");
        let n = rng.gen_range(5..=11);
        let mut s = String::new();
        let mut chars = verb.chars();
        if let Some(c) = chars.next() {
            s.extend(c.to_uppercase());
            s.push_str(chars.as_str());
        }
        for _ in 0..n {
            s.push(' ');
            s.push_str(WORDS.choose(rng).copied().unwrap_or("thing"));
        }
        s.push('.');
        s
    }

    fn phrase(rng: &mut ChaCha8Rng, pool: &[&str], lo: usize, hi: usize) -> String {
        let n = rng.gen_range(lo..=hi);
        (0..n).map(|_| *pool.choose(rng).unwrap_or(&"x")).collect::<Vec<_>>().join(" ")
    }

    fn instructions_reply(&self, rng: &mut ChaCha8Rng, next_index: usize) -> String {
        let count = rng.gen_range(1..=self.max_new_instructions);
        let mut out = String::new();
        for i in 0..count {
            if i == 0 {
                out.push(' ');
            } else {
                out.push_str(&format!("\nTask {}: ", next_index + i));
            }
            out.push_str(&Self::instruction_like(rng));
        }
        out
    }

    fn instances_reply(rng: &mut ChaCha8Rng, task: &str) -> String {
        let task_words: Vec<String> = tokenize(task);
        let task_refs: Vec<&str> = task_words.iter().map(String::as_str).collect();
        let vocab: Vec<&str> = if task_refs.is_empty() { WORDS.to_vec() } else { task_refs };
        match rng.gen_range(0..4) {
            0 | 1 => format!("Output: {}", Self::phrase(rng, &vocab, 3, 12)),
            2 => format!(
                "Example 1\nInput: {}\nOutput: {}",
                Self::phrase(rng, WORDS, 3, 10),
                Self::phrase(rng, &vocab, 2, 8)
            ),
            _ => format!(
                "Example 1\nInput: {}\nOutput: {}\nExample 2\nInput: {}\nOutput: {}",
                Self::phrase(rng, WORDS, 3, 10),
                Self::phrase(rng, &vocab, 2, 8),
                Self::phrase(rng, WORDS, 3, 10),
                Self::phrase(rng, &vocab, 2, 8)
            ),
        }
    }

    fn free_reply(rng: &mut ChaCha8Rng, prompt: &str) -> String {
        let tail = prompt.rsplit("Input:").next().unwrap_or(prompt);
        let words = tokenize(tail);
        let refs: Vec<&str> = words.iter().map(String::as_str).collect();
        if refs.is_empty() {
            return Self::phrase(rng, WORDS, 1, 4);
        }
        Self::phrase(rng, &refs, 1, 6)
    }

    fn token_prob(&self, token: &str) -> f64 {
        match &self.logprob_model {
            LogProbModel::Uniform { vocab_size } => 1.0 / f64::from((*vocab_size).max(1)),
            LogProbModel::Table { probs, default } => {
                probs.iter().find(|(t, _)| t == token).map(|(_, p)| *p).unwrap_or(*default)
            }
            LogProbModel::Hashed => {
                let h = mix64(hash_fields(self.seed, &["logprob", token]));
                0.02 + 0.48 * ((h >> 11) as f64 / (1u64 << 53) as f64)
            }
        }
    }
}

fn truncate_words(text: &str, max_tokens: u32) -> &str {
    let mut count = 0u32;
    let mut in_word = false;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            in_word = false;
        } else if !in_word {
            in_word = true;
            if count == max_tokens {
                return text[..i].trim_end();
            }
            count += 1;
        }
    }
    text
}

impl Generator for MockBackend {
    fn complete(&self, prompt: &str, params: &GenParams) -> Result<String, BackendError> {
        if !self.capabilities.generation {
            return Err(BackendError::Capability("generation".into()));
        }
        params.validate()?;
        if prompt.trim().is_empty() {
            return Err(BackendError::InvalidRequest("empty prompt".into()));
        }
        let seed_field = params.seed.map(|s| s.to_string()).unwrap_or_default();
        let temp_field = params.temperature.to_bits().to_string();
        let mut rng = self.rng_for(&["complete", prompt, &seed_field, &temp_field]);
        let raw = if let Some(next) = bootstrap::next_task_index(prompt) {
            self.instructions_reply(&mut rng, next + 1)
        } else if let Some(task) = instancegen::target_task(prompt) {
            Self::instances_reply(&mut rng, task)
        } else {
            Self::free_reply(&mut rng, prompt)
        };
        let cut = truncate_words(&raw, params.max_tokens);
        Ok(truncate_at_stop(cut, &params.stop))
    }
}

impl LogProber for MockBackend {
    fn logprob(&self, _prompt: &str, completion: &str) -> Result<f64, BackendError> {
        if !self.capabilities.logprob {
            return Err(BackendError::Capability("logprob".into()));
        }
        let tokens = tokenize(completion);
        if tokens.is_empty() {
            return Err(BackendError::InvalidRequest("empty completion".into()));
        }
        Ok(tokens.iter().map(|t| libm::log(self.token_prob(t))).sum())
    }
}

impl QualityScorer for MockBackend {
    fn score_quality(&self, instruction: &str, input: &str, output: &str) -> Result<IndicatorScores, BackendError> {
        if !self.capabilities.scoring {
            return Err(BackendError::Capability("scoring".into()));
        }
        if instruction.trim().is_empty() || output.trim().is_empty() {
            return Err(BackendError::InvalidRequest("instruction and output must be non-empty".into()));
        }
        let mut rng = self.rng_for(&["score", instruction, input, output]);
        IndicatorScores::new(rng.gen_range(-4.0..4.0), rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>())
    }
}

impl HealthCheck for MockBackend {
    fn health_check(&self) -> HealthStatus {
        HealthStatus::Reachable { capabilities: self.capabilities }
    }
}
