//! Compositional scene evaluation: regional coverage (does every sub-prompt
//! appear somewhere?) times cross-region subject consistency (does the
//! recurring subject look the same?), combined as a geometric mean.

use alloc::vec::Vec;

use crate::features::EmbeddingVector;
use crate::math;
use crate::metrics::MetricScore;
use crate::ontology::Aspect;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CseError {
    EmptyMatrix,
}

impl core::fmt::Display for CseError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            CseError::EmptyMatrix => f.write_str("similarity matrix has no entries"),
        }
    }
}

impl core::error::Error for CseError {}

/// Build the region x sub-prompt similarity matrix from joint-space
/// embeddings. Raw cosines are clamped into `[0, 1]` on ingest.
pub fn cse_coverage_matrix(
    regions: &[EmbeddingVector],
    sub_prompts: &[EmbeddingVector],
) -> Vec<Vec<f64>> {
    regions
        .iter()
        .map(|r| {
            sub_prompts
                .iter()
                .map(|p| math::clamp01(r.cosine(p)))
                .collect()
        })
        .collect()
}

/// Regional coverage: column-wise maximum averaged over sub-prompts.
/// `sim` is N regions x M sub-prompts; entries are clamped to `[0, 1]`.
pub fn cse_cov(sim: &[Vec<f64>]) -> Result<f64, CseError> {
    let n = sim.len();
    let m = sim.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return Err(CseError::EmptyMatrix);
    }
    let mut total = 0.0;
    for j in 0..m {
        let mut best = 0.0f64;
        for row in sim {
            let v = math::clamp01(*row.get(j).unwrap_or(&0.0));
            best = best.max(v);
        }
        total += best;
    }
    Ok(total / m as f64)
}

/// Cross-region subject consistency: mean pairwise cosine over the subject's
/// per-region feature vectors, negatives clamped to 0. Fewer than two
/// instances score 0 (the subject does not recur).
pub fn cse_con(vectors: &[EmbeddingVector]) -> f64 {
    let k = vectors.len();
    if k < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..k {
        for j in (i + 1)..k {
            total += math::clamp01(vectors[i].cosine(&vectors[j]));
        }
    }
    total / (k * (k - 1) / 2) as f64
}

/// Geometric mean of the two sub-metrics, with both kept as diagnostics.
/// A `con` of 0 from a non-recurring subject is annotated.
pub fn cse_score(cov: f64, con: f64, subject_recurrent: bool) -> MetricScore {
    debug_assert!((0.0..=1.0).contains(&cov) && (0.0..=1.0).contains(&con));
    let value = math::sqrt(cov * con);
    let mut score = MetricScore::ok(Aspect::Cse, value)
        .with_diagnostic("coverage", cov)
        .with_diagnostic("consistency", con);
    if !subject_recurrent {
        score = score.with_diagnostic("subject_not_recurrent", 1.0);
    }
    score
}
