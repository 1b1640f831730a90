//! ROUGE-L over a single shared tokenizer.
//!
//! Sentence-level LCS F1 with beta = 1, no stemming and no stopword removal.
//! Every similarity in the crate (pool filter, benchmark scoring, analyses)
//! goes through [`tokenize`] so the numbers stay mutually consistent.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub lcs_len: usize,
}

impl RougeScore {
    pub const ZERO: RougeScore = RougeScore { precision: 0.0, recall: 0.0, f1: 0.0, lcs_len: 0 };

    fn from_counts(lcs: usize, cand_len: usize, ref_len: usize) -> Self {
        let precision = if cand_len == 0 { 0.0 } else { lcs as f64 / cand_len as f64 };
        let recall = if ref_len == 0 { 0.0 } else { lcs as f64 / ref_len as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        RougeScore { precision, recall, f1, lcs_len: lcs }
    }
}

/// Lowercased maximal runs of alphanumeric characters.
///
/// Whitespace and every non-alphanumeric character act as boundaries and are
/// dropped, so `"85°F = 29.44°C"` becomes `["85", "f", "29", "44", "c"]`.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(core::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Length of the longest common subsequence, O(|a|·|b|) time and O(|b|) space.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L between two already tokenized sequences.
pub fn rouge_l_tokens<T: PartialEq>(candidate: &[T], reference: &[T]) -> RougeScore {
    let lcs = lcs_len(candidate, reference);
    RougeScore::from_counts(lcs, candidate.len(), reference.len())
}

pub fn rouge_l(candidate: &str, reference: &str) -> RougeScore {
    rouge_l_tokens(&tokenize(candidate), &tokenize(reference))
}

/// Best F1 of `text` against `corpus` and the index achieving it.
///
/// The first index wins ties. An empty corpus yields `(0.0, None)`.
pub fn max_rouge_against<S: AsRef<str>>(text: &str, corpus: &[S]) -> (f64, Option<usize>) {
    let tokens = tokenize(text);
    let tokenized: Vec<Vec<String>> = corpus.iter().map(|s| tokenize(s.as_ref())).collect();
    max_rouge_tokens(&tokens, &tokenized)
}

/// Same as [`max_rouge_against`] over pre-tokenized inputs.
pub fn max_rouge_tokens<T: PartialEq, C: AsRef<[T]>>(tokens: &[T], corpus: &[C]) -> (f64, Option<usize>) {
    let mut best = (0.0, None);
    for (i, other) in corpus.iter().enumerate() {
        let f1 = rouge_l_tokens(tokens, other.as_ref()).f1;
        if best.1.is_none() || f1 > best.0 {
            best = (f1, Some(i));
        }
    }
    best
}
