//! Corpus-level quality statistics: lexical diversity (Yule's I), duplicate
//! detection, and pluggable safety screening.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::prompt::StructuredPrompt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StatsError {
    EmptyCorpus,
    /// Every token occurs exactly once; Yule's I is undefined (division by
    /// zero). Reported, never a panic.
    DegenerateCorpus,
}

impl fmt::Display for StatsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StatsError::EmptyCorpus => f.write_str("corpus is empty"),
            StatsError::DegenerateCorpus => {
                f.write_str("all token frequencies are 1; Yule's I is undefined")
            }
        }
    }
}

impl core::error::Error for StatsError {}

/// Lowercase, split on non-alphanumerics, drop empties.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            for lc in c.to_lowercase() {
                current.push(lc);
            }
        } else if !current.is_empty() {
            out.push(core::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

/// Yule's characteristic I over the corpus cores: `I = M1^2 / (M2 - M1)`
/// with `M1` the total token count and `M2` the sum of squared vocabulary
/// frequencies. Larger values indicate richer lexical diversity.
pub fn yules_i(corpus: &[StructuredPrompt]) -> Result<f64, StatsError> {
    let tokens: Vec<String> = corpus
        .iter()
        .flat_map(|p| tokenize(&p.core_text))
        .collect();
    yules_i_from_tokens(&tokens)
}

pub fn yules_i_from_tokens(tokens: &[String]) -> Result<f64, StatsError> {
    if tokens.is_empty() {
        return Err(StatsError::EmptyCorpus);
    }
    let mut freq: BTreeMap<&str, u64> = BTreeMap::new();
    for t in tokens {
        *freq.entry(t.as_str()).or_insert(0) += 1;
    }
    let m1: u64 = tokens.len() as u64;
    let m2: u64 = freq.values().map(|&f| f * f).sum();
    if m2 == m1 {
        return Err(StatsError::DegenerateCorpus);
    }
    Ok((m1 as f64) * (m1 as f64) / ((m2 - m1) as f64))
}

/// Groups of indices whose canonical serializations are identical. Only
/// groups of two or more are reported; groups are disjoint by construction.
pub fn duplicate_groups(corpus: &[StructuredPrompt]) -> Vec<BTreeSet<usize>> {
    let mut by_canon: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
    for (i, p) in corpus.iter().enumerate() {
        by_canon.entry(p.serialize()).or_default().insert(i);
    }
    by_canon.into_values().filter(|g| g.len() >= 2).collect()
}

/// Scores a text for safety concerns; higher means more likely unsafe.
pub trait TextClassifier {
    /// Returns a score in `[0, 1]`, or an error when the classifier cannot
    /// be reached.
    fn score(&self, text: &str) -> Result<f64, ClassifierError>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassifierError(pub String);

impl fmt::Display for ClassifierError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "safety classifier unavailable: {}", self.0)
    }
}

impl core::error::Error for ClassifierError {}

/// Outcome of safety screening. When the classifier is unreachable the corpus
/// passes with `classifier_unavailable` set so callers can surface a warning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct SafetyReport {
    pub flagged: Vec<usize>,
    pub classifier_unavailable: bool,
}

/// Flag prompt indices whose core text scores at or above `threshold`.
pub fn screen_safety(
    corpus: &[StructuredPrompt],
    classifier: &dyn TextClassifier,
    threshold: f64,
) -> SafetyReport {
    let mut report = SafetyReport::default();
    for (i, p) in corpus.iter().enumerate() {
        match classifier.score(&p.core_text) {
            Ok(s) if s >= threshold => report.flagged.push(i),
            Ok(_) => {}
            Err(_) => {
                report.classifier_unavailable = true;
                report.flagged.clear();
                return report;
            }
        }
    }
    report
}

/// Aggregate corpus statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub prompt_count: usize,
    /// `None` when the corpus is degenerate (all frequencies 1).
    pub yules_i: Option<f64>,
    pub duplicate_groups: Vec<BTreeSet<usize>>,
    pub unsafe_flags: Vec<usize>,
    pub classifier_unavailable: bool,
}

pub fn corpus_stats(
    corpus: &[StructuredPrompt],
    classifier: Option<&dyn TextClassifier>,
    safety_threshold: f64,
) -> CorpusStats {
    let safety = classifier
        .map(|c| screen_safety(corpus, c, safety_threshold))
        .unwrap_or_default();
    CorpusStats {
        prompt_count: corpus.len(),
        yules_i: yules_i(corpus).ok(),
        duplicate_groups: duplicate_groups(corpus),
        unsafe_flags: safety.flagged,
        classifier_unavailable: safety.classifier_unavailable,
    }
}
