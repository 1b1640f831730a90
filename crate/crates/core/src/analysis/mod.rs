//! Dataset diagnostics: verb–object diversity, length statistics, seed and
//! cross-corpus similarity, and aggregation of human annotations.

mod lexicon;

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::BackendError;
use crate::rouge::{max_rouge_tokens, tokenize};
use crate::types::IftRecord;

pub use lexicon::{NOUNS, VERBS};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("reference corpus is empty")]
    EmptyReference,
    #[error("unknown rating `{0}` (expected A, B, C or D)")]
    UnknownRating(String),
    #[error("histogram needs at least one bin")]
    NoBins,
}

// ---------------------------------------------------------------------------
// verb–noun diversity

/// Extracts the root verb and its direct noun object from an instruction.
pub trait VerbNounParser {
    fn parse(&self, instruction: &str) -> Result<Option<(String, String)>, BackendError>;
}

/// First lexicon verb, then the nearest lexicon noun within a few tokens
/// after it. Plural nouns are reduced to their lexicon singular.
#[derive(Debug, Clone, Copy)]
pub struct HeuristicParser {
    pub window: usize,
}

impl Default for HeuristicParser {
    fn default() -> Self {
        HeuristicParser { window: 4 }
    }
}

fn lexicon_noun(token: &str) -> Option<&'static str> {
    let find = |t: &str| NOUNS.iter().copied().find(|n| *n == t);
    if let Some(n) = find(token) {
        return Some(n);
    }
    if let Some(stem) = token.strip_suffix("ies") {
        let mut s = String::from(stem);
        s.push('y');
        if let Some(n) = find(&s) {
            return Some(n);
        }
    }
    if let Some(n) = token.strip_suffix("es").and_then(find) {
        return Some(n);
    }
    token.strip_suffix('s').and_then(find)
}

impl HeuristicParser {
    pub fn extract(&self, instruction: &str) -> Option<(String, String)> {
        let tokens = tokenize(instruction);
        let vi = tokens.iter().position(|t| VERBS.contains(&t.as_str()))?;
        tokens[vi + 1..]
            .iter()
            .take(self.window)
            .find_map(|t| lexicon_noun(t))
            .map(|n| (tokens[vi].clone(), n.to_string()))
    }
}

impl VerbNounParser for HeuristicParser {
    fn parse(&self, instruction: &str) -> Result<Option<(String, String)>, BackendError> {
        Ok(self.extract(instruction))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCount {
    pub verb: String,
    pub noun: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerbSummary {
    pub verb: String,
    pub count: usize,
    pub top_nouns: Vec<(String, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerbNounReport {
    /// Sorted by descending count, then verb, then noun.
    pub pairs: Vec<PairCount>,
    pub unique_pairs: usize,
    pub without_pair: usize,
    /// Some pairs came from the lexicon heuristic, which misses verbs and
    /// nouns outside its word lists.
    pub heuristic_used: bool,
    /// The heuristic stood in for the configured parser after it failed.
    pub heuristic_fallback: bool,
    /// Most frequent verbs, each with its most frequent nouns.
    pub top_verbs: Vec<VerbSummary>,
}

/// Tally (verb, noun) pairs over `instructions`.
///
/// When `parser` fails, the remaining instructions (and the failed one) go
/// through the heuristic and the report is flagged.
pub fn verb_noun_pairs<S: AsRef<str>>(
    instructions: &[S],
    parser: Option<&dyn VerbNounParser>,
    top_verbs: usize,
    top_nouns: usize,
) -> VerbNounReport {
    let heuristic = HeuristicParser::default();
    let mut fallback = false;
    let mut counts: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut without = 0;
    for ins in instructions {
        let pair = match (parser, fallback) {
            (Some(p), false) => match p.parse(ins.as_ref()) {
                Ok(x) => x,
                Err(_) => {
                    fallback = true;
                    heuristic.extract(ins.as_ref())
                }
            },
            _ => heuristic.extract(ins.as_ref()),
        };
        match pair {
            Some(k) => *counts.entry(k).or_insert(0) += 1,
            None => without += 1,
        }
    }
    let mut pairs: Vec<PairCount> =
        counts.iter().map(|((v, n), c)| PairCount { verb: v.clone(), noun: n.clone(), count: *c }).collect();
    pairs.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.verb.cmp(&b.verb)).then_with(|| a.noun.cmp(&b.noun)));

    type Tally = (usize, Vec<(String, usize)>);
    let mut per_verb: BTreeMap<&str, Tally> = BTreeMap::new();
    for p in &pairs {
        let e = per_verb.entry(p.verb.as_str()).or_insert((0, Vec::new()));
        e.0 += p.count;
        e.1.push((p.noun.clone(), p.count));
    }
    let mut verbs: Vec<VerbSummary> = per_verb
        .into_iter()
        .map(|(v, (count, mut nouns))| {
            nouns.truncate(top_nouns);
            VerbSummary { verb: v.to_string(), count, top_nouns: nouns }
        })
        .collect();
    verbs.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.verb.cmp(&b.verb)));
    verbs.truncate(top_verbs);

    VerbNounReport {
        unique_pairs: pairs.len(),
        pairs,
        without_pair: without,
        heuristic_used: (parser.is_none() || fallback) && !instructions.is_empty(),
        heuristic_fallback: fallback,
        top_verbs: verbs,
    }
}

// ---------------------------------------------------------------------------
// length statistics

/// Mergeable token-length tallies; [`LengthAccumulator::finish`] yields the
/// report. Instruction lengths count each distinct instruction once.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LengthAccumulator {
    instructions: BTreeMap<String, usize>,
    n_instances: usize,
    n_empty_input: usize,
    input_tokens: usize,
    output_tokens: usize,
    input_hist: BTreeMap<usize, usize>,
    output_hist: BTreeMap<usize, usize>,
}

impl LengthAccumulator {
    pub fn add(&mut self, r: &IftRecord) {
        if !self.instructions.contains_key(&r.instruction) {
            self.instructions.insert(r.instruction.clone(), tokenize(&r.instruction).len());
        }
        self.n_instances += 1;
        let out_len = tokenize(&r.output).len();
        self.output_tokens += out_len;
        *self.output_hist.entry(out_len).or_insert(0) += 1;
        if r.input.trim().is_empty() {
            self.n_empty_input += 1;
        } else {
            let in_len = tokenize(&r.input).len();
            self.input_tokens += in_len;
            *self.input_hist.entry(in_len).or_insert(0) += 1;
        }
    }

    pub fn merge(&mut self, other: LengthAccumulator) {
        self.instructions.extend(other.instructions);
        self.n_instances += other.n_instances;
        self.n_empty_input += other.n_empty_input;
        self.input_tokens += other.input_tokens;
        self.output_tokens += other.output_tokens;
        for (k, v) in other.input_hist {
            *self.input_hist.entry(k).or_insert(0) += v;
        }
        for (k, v) in other.output_hist {
            *self.output_hist.entry(k).or_insert(0) += v;
        }
    }

    pub fn finish(&self) -> LengthStats {
        let n_ins = self.instructions.len();
        let mut instruction_hist = BTreeMap::new();
        for len in self.instructions.values() {
            *instruction_hist.entry(*len).or_insert(0) += 1;
        }
        let div = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let nonempty = self.n_instances - self.n_empty_input;
        LengthStats {
            n_instructions: n_ins,
            n_instances: self.n_instances,
            n_empty_input: self.n_empty_input,
            avg_instruction_len: div(self.instructions.values().sum(), n_ins),
            avg_nonempty_input_len: if nonempty == 0 { None } else { Some(div(self.input_tokens, nonempty)) },
            avg_output_len: div(self.output_tokens, self.n_instances),
            instruction_hist,
            input_hist: self.input_hist.clone(),
            output_hist: self.output_hist.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub n_instructions: usize,
    pub n_instances: usize,
    pub n_empty_input: usize,
    pub avg_instruction_len: f64,
    /// `None` when every input is empty.
    pub avg_nonempty_input_len: Option<f64>,
    pub avg_output_len: f64,
    /// Token length → count.
    pub instruction_hist: BTreeMap<usize, usize>,
    pub input_hist: BTreeMap<usize, usize>,
    pub output_hist: BTreeMap<usize, usize>,
}

pub fn length_stats(dataset: &[IftRecord]) -> LengthStats {
    let mut acc = LengthAccumulator::default();
    for r in dataset {
        acc.add(r);
    }
    acc.finish()
}

// ---------------------------------------------------------------------------
// similarity distributions

/// Counts of `values` in `bins` equal-width bins over `[0, 1]`; 1.0 falls in the last bin.
pub fn unit_histogram(values: &[f64], bins: usize) -> Result<Vec<usize>, AnalysisError> {
    if bins == 0 {
        return Err(AnalysisError::NoBins);
    }
    let mut h = vec![0usize; bins];
    for v in values {
        let i = libm::floor(v.clamp(0.0, 1.0) * bins as f64) as usize;
        h[i.min(bins - 1)] += 1;
    }
    Ok(h)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityDistribution {
    /// Best ROUGE-L F1 of each item against the reference corpus.
    pub scores: Vec<f64>,
    /// Index of the most similar reference item.
    pub nearest: Vec<Option<usize>>,
    pub mean: f64,
    pub histogram: Vec<usize>,
}

fn distribution<A: AsRef<str>, B: AsRef<str>>(items: &[A], reference: &[B], bins: usize) -> Result<SimilarityDistribution, AnalysisError> {
    if reference.is_empty() {
        return Err(AnalysisError::EmptyReference);
    }
    let ref_tokens: Vec<Vec<String>> = reference.iter().map(|s| tokenize(s.as_ref())).collect();
    let (scores, nearest): (Vec<f64>, Vec<Option<usize>>) =
        items.iter().map(|s| max_rouge_tokens(&tokenize(s.as_ref()), &ref_tokens)).unzip();
    let mean = if scores.is_empty() { 0.0 } else { scores.iter().sum::<f64>() / scores.len() as f64 };
    let histogram = unit_histogram(&scores, bins)?;
    Ok(SimilarityDistribution { scores, nearest, mean, histogram })
}

/// Each generated instruction's highest ROUGE-L against the seed set.
pub fn seed_similarity_distribution<A: AsRef<str>, B: AsRef<str>>(
    generated: &[A],
    seeds: &[B],
    bins: usize,
) -> Result<SimilarityDistribution, AnalysisError> {
    distribution(generated, seeds, bins)
}

/// For every item of `a`, its best ROUGE-L against `b`, plus the mean.
pub fn cross_corpus_similarity<A: AsRef<str>, B: AsRef<str>>(
    a: &[A],
    b: &[B],
    bins: usize,
) -> Result<SimilarityDistribution, AnalysisError> {
    distribution(a, b, bins)
}

// ---------------------------------------------------------------------------
// annotations

/// Four-level response rating, A best and D worst.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Rating {
    A,
    B,
    C,
    D,
}

impl Rating {
    pub const ALL: [Rating; 4] = [Rating::A, Rating::B, Rating::C, Rating::D];

    pub fn as_str(self) -> &'static str {
        match self {
            Rating::A => "A",
            Rating::B => "B",
            Rating::C => "C",
            Rating::D => "D",
        }
    }
}

impl FromStr for Rating {
    type Err = AnalysisError;
    fn from_str(s: &str) -> Result<Self, AnalysisError> {
        let t = s.trim();
        let core = t.strip_prefix("RATING-").or_else(|| t.strip_prefix("rating-")).unwrap_or(t);
        match core {
            "A" | "a" => Ok(Rating::A),
            "B" | "b" => Ok(Rating::B),
            "C" | "c" => Ok(Rating::C),
            "D" | "d" => Ok(Rating::D),
            _ => Err(AnalysisError::UnknownRating(s.to_string())),
        }
    }
}

impl TryFrom<String> for Rating {
    type Error = AnalysisError;
    fn try_from(s: String) -> Result<Self, AnalysisError> {
        s.parse()
    }
}

impl From<Rating> for String {
    fn from(r: Rating) -> String {
        r.as_str().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub item_id: String,
    pub rating: Rating,
    #[serde(default)]
    pub annotator: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityReview {
    pub item_id: String,
    pub valid_task: bool,
    pub input_appropriate: bool,
    pub output_correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingShare {
    pub rating: Rating,
    pub count: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualitySummary {
    pub n_items: usize,
    pub valid_task_pct: f64,
    pub input_appropriate_pct: f64,
    pub output_correct_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSummary {
    pub n_rated_items: usize,
    pub ratings: Vec<RatingShare>,
    pub quality: QualitySummary,
}

/// Majority rating of one item; a tie goes to the worse rating.
fn majority_rating(votes: &[Rating]) -> Rating {
    let mut counts = [0usize; 4];
    for r in votes {
        counts[*r as usize] += 1;
    }
    let best = counts.iter().copied().max().unwrap_or(0);
    // scan from worst to best so ties resolve downward
    Rating::ALL.iter().rev().copied().find(|r| counts[*r as usize] == best).unwrap_or(Rating::D)
}

/// Majority of yes votes; a tie counts as no.
fn majority_yes(votes: &[bool]) -> bool {
    let yes = votes.iter().filter(|v| **v).count();
    2 * yes > votes.len()
}

/// Percentages to two decimals that sum to exactly 100 (largest remainder).
pub fn largest_remainder_percent(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return vec![0.0; counts.len()];
    }
    const UNITS: u128 = 10_000;
    let scaled: Vec<(u128, u128)> = counts
        .iter()
        .map(|c| {
            let num = *c as u128 * UNITS;
            (num / total as u128, num % total as u128)
        })
        .collect();
    let assigned: u128 = scaled.iter().map(|s| s.0).sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| scaled[b].1.cmp(&scaled[a].1).then(a.cmp(&b)));
    let mut units: Vec<u128> = scaled.iter().map(|s| s.0).collect();
    for &i in order.iter().take((UNITS - assigned) as usize) {
        units[i] += 1;
    }
    units.into_iter().map(|u| u as f64 / 100.0).collect()
}

fn round2(x: f64) -> f64 {
    libm::round(x * 100.0) / 100.0
}

/// Rating distribution and quality-question yes-rates, one vote per item
/// after resolving multiple annotators by majority.
pub fn aggregate_annotations(ratings: &[RatingRecord], reviews: &[QualityReview]) -> AnnotationSummary {
    let mut by_item: BTreeMap<&str, Vec<Rating>> = BTreeMap::new();
    for r in ratings {
        by_item.entry(r.item_id.as_str()).or_default().push(r.rating);
    }
    let mut counts = [0usize; 4];
    for votes in by_item.values() {
        counts[majority_rating(votes) as usize] += 1;
    }
    let pct = largest_remainder_percent(&counts);
    let shares = Rating::ALL
        .iter()
        .map(|r| RatingShare { rating: *r, count: counts[*r as usize], percent: pct[*r as usize] })
        .collect();

    let mut rev_items: BTreeMap<&str, [Vec<bool>; 3]> = BTreeMap::new();
    for q in reviews {
        let e = rev_items.entry(q.item_id.as_str()).or_default();
        e[0].push(q.valid_task);
        e[1].push(q.input_appropriate);
        e[2].push(q.output_correct);
    }
    let n = rev_items.len();
    let rate = |k: usize| {
        if n == 0 {
            0.0
        } else {
            round2(100.0 * rev_items.values().filter(|v| majority_yes(&v[k])).count() as f64 / n as f64)
        }
    };
    AnnotationSummary {
        n_rated_items: by_item.len(),
        ratings: shares,
        quality: QualitySummary { n_items: n, valid_task_pct: rate(0), input_appropriate_pct: rate(1), output_correct_pct: rate(2) },
    }
}

#[cfg(test)]
mod tests;
