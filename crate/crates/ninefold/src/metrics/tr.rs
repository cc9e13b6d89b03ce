//! Text rendering: weighted blend of character-level edit similarity and
//! token-level Jaccard overlap between OCR output and the ground-truth
//! string.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use crate::features::OcrResult;
use crate::metrics::MetricScore;
use crate::ontology::Aspect;

/// Levenshtein distance over Unicode scalar values, bottom-up DP with a
/// rolling row.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut current = alloc::vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        current[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let substitution = prev[j] + usize::from(ca != cb);
            current[j + 1] = substitution.min(prev[j + 1] + 1).min(current[j] + 1);
        }
        core::mem::swap(&mut prev, &mut current);
    }
    prev[b.len()]
}

fn fold_tokens(text: &str) -> BTreeSet<String> {
    text.split_whitespace()
        .map(|t| t.chars().flat_map(char::to_lowercase).collect())
        .collect()
}

/// Jaccard coefficient between case-folded, whitespace-split token sets.
/// Two empty sets count as identical.
pub fn jaccard_tokens(a: &str, b: &str) -> f64 {
    let ta = fold_tokens(a);
    let tb = fold_tokens(b);
    let union = ta.union(&tb).count();
    if union == 0 {
        return 1.0;
    }
    let inter = ta.intersection(&tb).count();
    inter as f64 / union as f64
}

/// Score rendered text against the ground truth.
///
/// `value = w * sim_char + (1 - w) * sim_token` where `sim_char` is one minus
/// the length-normalized edit distance and `sim_token` the Jaccard overlap.
/// An empty OCR result scores 0 against nonempty ground truth.
pub fn tr_score(ocr: &OcrResult, gt_text: &str, char_weight: f64) -> MetricScore {
    debug_assert!(!gt_text.trim().is_empty(), "ground-truth text must be nonempty");
    debug_assert!((0.0..=1.0).contains(&char_weight));
    let ocr_len = ocr.full_text.chars().count();
    let gt_len = gt_text.chars().count();
    let max_len = ocr_len.max(gt_len);
    let sim_char = if max_len == 0 {
        1.0
    } else {
        1.0 - levenshtein(&ocr.full_text, gt_text) as f64 / max_len as f64
    };
    let sim_token = jaccard_tokens(&ocr.full_text, gt_text);
    let value = char_weight * sim_char + (1.0 - char_weight) * sim_token;
    MetricScore::ok(Aspect::Tr, value)
        .with_diagnostic("sim_char", sim_char)
        .with_diagnostic("sim_token", sim_token)
}
