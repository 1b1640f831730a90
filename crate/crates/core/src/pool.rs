//! The instruction pool and its admission filter.
//!
//! A candidate enters the pool only if it is non-empty, contains no
//! blacklisted keyword as a whole word (case-insensitive; multi-word keywords
//! match as contiguous token runs), and its ROUGE-L F1 against every current
//! member (seeds and generated alike) stays below the threshold.
//! Admission is order-dependent, so mutation is single-writer.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rouge::{rouge_l_tokens, tokenize};
use crate::types::{Instruction, Origin};

pub const DEFAULT_THRESHOLD: f64 = 0.7;

pub const DEFAULT_BLACKLIST: &[&str] = &[
    "image", "images", "picture", "pictures", "graph", "graphs", "file", "map", "draw", "plot",
    "go to",
];

pub fn default_blacklist() -> Vec<String> {
    DEFAULT_BLACKLIST.iter().map(|s| s.to_string()).collect()
}

/// ROUGE-L F1 cutoff in `[0, 1]`; candidates scoring at or above it are rejected.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Threshold(f64);

impl Threshold {
    pub fn new(value: f64) -> Result<Self, PoolError> {
        if (0.0..=1.0).contains(&value) {
            Ok(Threshold(value))
        } else {
            Err(PoolError::InvalidThreshold(value))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for Threshold {
    fn default() -> Self {
        Threshold(DEFAULT_THRESHOLD)
    }
}

impl TryFrom<f64> for Threshold {
    type Error = PoolError;
    fn try_from(v: f64) -> Result<Self, PoolError> {
        Threshold::new(v)
    }
}

impl From<Threshold> for f64 {
    fn from(t: Threshold) -> f64 {
        t.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    TooSimilar,
    Blacklisted,
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Admission {
    Admitted { instruction: Instruction, max_similarity: f64 },
    Rejected { reason: Rejection, max_similarity: Option<f64> },
}

impl Admission {
    pub fn is_admitted(&self) -> bool {
        matches!(self, Admission::Admitted { .. })
    }

    pub fn rejection(&self) -> Option<Rejection> {
        match self {
            Admission::Rejected { reason, .. } => Some(*reason),
            Admission::Admitted { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PoolError {
    #[error("similarity threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("duplicate instruction id `{0}`")]
    DuplicateId(String),
    #[error("instruction `{0}` has empty text")]
    EmptyText(String),
    #[error("seed instruction `{0}` has non-zero step")]
    SeedWithStep(String),
}

/// A pool violation found by [`PoolState::audit`].
#[derive(Debug, Clone, PartialEq)]
pub enum AuditViolation {
    TooSimilar { later: usize, earlier: usize, f1: f64 },
    Blacklisted { index: usize, keyword: String },
}

#[derive(Debug, Clone)]
pub struct PoolState {
    instructions: Vec<Instruction>,
    rng_seed: u64,
    blacklist: Vec<String>,
    /// Generation calls issued so far; drives per-call seed derivation on resume.
    calls_made: u64,
    tokens: Vec<Vec<String>>,
    blacklist_tokens: Vec<Vec<String>>,
    ids: BTreeSet<String>,
}

impl PartialEq for PoolState {
    fn eq(&self, other: &Self) -> bool {
        self.instructions == other.instructions
            && self.rng_seed == other.rng_seed
            && self.blacklist == other.blacklist
            && self.calls_made == other.calls_made
    }
}

impl PoolState {
    /// Empty pool with the given blacklist (keywords are lowercased).
    pub fn new(rng_seed: u64, blacklist: Vec<String>) -> Self {
        let blacklist: Vec<String> = blacklist.into_iter().map(|k| k.trim().to_lowercase()).filter(|k| !k.is_empty()).collect();
        let blacklist_tokens = blacklist.iter().map(|k| tokenize(k)).filter(|t| !t.is_empty()).collect();
        PoolState {
            instructions: Vec::new(),
            rng_seed,
            blacklist,
            calls_made: 0,
            tokens: Vec::new(),
            blacklist_tokens,
            ids: BTreeSet::new(),
        }
    }

    /// Rebuild a pool from stored parts without re-running the filter.
    pub fn from_parts(
        instructions: Vec<Instruction>,
        rng_seed: u64,
        blacklist: Vec<String>,
        calls_made: u64,
    ) -> Result<Self, PoolError> {
        let mut pool = PoolState::new(rng_seed, blacklist);
        pool.calls_made = calls_made;
        for ins in instructions {
            pool.push_unchecked(ins)?;
        }
        Ok(pool)
    }

    /// Pool seeded with the given seed instructions, in order.
    pub fn with_seeds(seeds: Vec<Instruction>, rng_seed: u64, blacklist: Vec<String>) -> Result<Self, PoolError> {
        Self::from_parts(seeds, rng_seed, blacklist, 0)
    }

    fn push_unchecked(&mut self, ins: Instruction) -> Result<(), PoolError> {
        if ins.text.trim().is_empty() {
            return Err(PoolError::EmptyText(ins.id));
        }
        if ins.origin == Origin::Seed && ins.step != 0 {
            return Err(PoolError::SeedWithStep(ins.id));
        }
        if !self.ids.insert(ins.id.clone()) {
            return Err(PoolError::DuplicateId(ins.id));
        }
        self.tokens.push(tokenize(&ins.text));
        self.instructions.push(ins);
        Ok(())
    }

    pub fn instructions(&self) -> &[Instruction] {
        &self.instructions
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn blacklist(&self) -> &[String] {
        &self.blacklist
    }

    pub fn calls_made(&self) -> u64 {
        self.calls_made
    }

    pub(crate) fn record_call(&mut self) -> u64 {
        self.calls_made += 1;
        self.calls_made
    }

    pub(crate) fn rewind_calls(&mut self, calls_made: u64) {
        self.calls_made = calls_made;
    }

    pub fn seed_count(&self) -> usize {
        self.instructions.iter().filter(|i| i.is_seed()).count()
    }

    pub fn generated_count(&self) -> usize {
        self.len() - self.seed_count()
    }

    /// First blacklisted keyword found in `text`, if any.
    pub fn blacklist_hit(&self, text: &str) -> Option<&str> {
        let tokens = tokenize(text);
        self.blacklist_hit_tokens(&tokens)
    }

    fn blacklist_hit_tokens(&self, tokens: &[String]) -> Option<&str> {
        self.blacklist_tokens
            .iter()
            .zip(&self.blacklist)
            .find(|(kw, _)| tokens.windows(kw.len()).any(|w| w == kw.as_slice()))
            .map(|(_, k)| k.as_str())
    }

    /// Highest ROUGE-L F1 of `tokens` against the current members.
    fn max_similarity(&self, tokens: &[String]) -> f64 {
        self.tokens.iter().map(|t| rouge_l_tokens(tokens, t).f1).fold(0.0, f64::max)
    }

    /// Run the filter on `candidate` and append it on success.
    ///
    /// Checks run in the order empty, blacklist, similarity; the similarity
    /// scan stops early once the threshold is reached.
    pub fn admit(&mut self, candidate: &str, threshold: Threshold, step: u64) -> Admission {
        let text = candidate.trim();
        let tokens = tokenize(text);
        if text.is_empty() {
            return Admission::Rejected { reason: Rejection::Empty, max_similarity: None };
        }
        if self.blacklist_hit_tokens(&tokens).is_some() {
            return Admission::Rejected { reason: Rejection::Blacklisted, max_similarity: None };
        }
        let mut best = 0.0f64;
        for other in &self.tokens {
            let f1 = rouge_l_tokens(&tokens, other).f1;
            best = best.max(f1);
            if best >= threshold.get() {
                return Admission::Rejected { reason: Rejection::TooSimilar, max_similarity: Some(best) };
            }
        }
        let instruction = Instruction {
            id: self.next_id(),
            text: text.to_string(),
            origin: Origin::Generated,
            step,
        };
        self.ids.insert(instruction.id.clone());
        self.tokens.push(tokens);
        self.instructions.push(instruction.clone());
        Admission::Admitted { instruction, max_similarity: best }
    }

    fn next_id(&self) -> String {
        let mut n = self.instructions.len();
        loop {
            let id = format!("gen-{n:06}");
            if !self.ids.contains(&id) {
                return id;
            }
            n += 1;
        }
    }

    /// Exhaustive check of the pool invariants: every generated member scores
    /// below `threshold` against all earlier members, and nothing hits the
    /// blacklist.
    pub fn audit(&self, threshold: Threshold) -> Vec<AuditViolation> {
        let mut out = Vec::new();
        for (i, ins) in self.instructions.iter().enumerate() {
            if let Some(k) = self.blacklist_hit_tokens(&self.tokens[i]) {
                out.push(AuditViolation::Blacklisted { index: i, keyword: k.to_string() });
            }
            if ins.origin != Origin::Generated {
                continue;
            }
            for j in 0..i {
                let f1 = rouge_l_tokens(&self.tokens[i], &self.tokens[j]).f1;
                if f1 >= threshold.get() {
                    out.push(AuditViolation::TooSimilar { later: i, earlier: j, f1 });
                }
            }
        }
        out
    }

    /// Highest similarity of `text` against the pool (0 for an empty pool).
    pub fn similarity_to_pool(&self, text: &str) -> f64 {
        self.max_similarity(&tokenize(text))
    }
}
