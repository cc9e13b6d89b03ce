//! Character portrayal accuracy: weighted agreement between detected persons
//! and the prompt's ground truth along count, posture, and expression.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::features::{ExpressionLabel, PersonAttributes, PostureLabel};
use crate::geometry::Rect;
use crate::math;
use crate::metrics::MetricScore;
use crate::ontology::Aspect;

/// Dimension weights `(count, posture, expression)`; nonnegative, sum 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpaWeights {
    pub count: f64,
    pub posture: f64,
    pub expression: f64,
}

impl Default for CpaWeights {
    /// Expression outweighs posture outweighs count, matching storyboard
    /// priorities. Tunable via preference alignment.
    fn default() -> Self {
        Self {
            count: 0.2,
            posture: 0.3,
            expression: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightError(pub String);

impl core::fmt::Display for WeightError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "invalid weights: {}", self.0)
    }
}

impl core::error::Error for WeightError {}

impl CpaWeights {
    pub fn new(count: f64, posture: f64, expression: f64) -> Result<Self, WeightError> {
        let w = Self {
            count,
            posture,
            expression,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), WeightError> {
        if self.count < 0.0 || self.posture < 0.0 || self.expression < 0.0 {
            return Err(WeightError(alloc::format!(
                "negative component in ({}, {}, {})",
                self.count, self.posture, self.expression
            )));
        }
        let sum = self.count + self.posture + self.expression;
        if math::abs(sum - 1.0) > 1e-9 {
            return Err(WeightError(alloc::format!("sum {sum} != 1")));
        }
        Ok(())
    }
}

/// One annotated ground-truth person. The box is optional: annotations from
/// prompt text carry labels only, in which case matching falls back to
/// declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct GtPerson {
    #[serde(default)]
    pub bbox: Option<Rect>,
    #[serde(default)]
    pub posture: Option<PostureLabel>,
    #[serde(default)]
    pub expression: Option<ExpressionLabel>,
}

/// Ground truth for one prompt: expected person count plus per-person labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct CpaGroundTruth {
    pub count: usize,
    #[serde(default)]
    pub persons: Vec<GtPerson>,
}

impl CpaGroundTruth {
    pub fn from_labels(
        count: usize,
        postures: &[PostureLabel],
        expressions: &[ExpressionLabel],
    ) -> Self {
        let n = count.max(postures.len()).max(expressions.len());
        let persons = (0..n)
            .map(|i| GtPerson {
                bbox: None,
                posture: postures.get(i).copied(),
                expression: expressions.get(i).copied(),
            })
            .collect();
        Self { count, persons }
    }
}

/// Greedy matching of detections to ground-truth annotations, by descending
/// box IoU. Annotations without boxes tie at IoU 0 and resolve in index
/// order, which degrades to order matching for label-only ground truth.
fn match_persons(detected: &[PersonAttributes], gt: &[GtPerson]) -> Vec<(usize, usize)> {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (d, person) in detected.iter().enumerate() {
        for (g, annotation) in gt.iter().enumerate() {
            let iou = annotation
                .bbox
                .map_or(0.0, |b| person.bbox.iou(&b));
            candidates.push((iou, d, g));
        }
    }
    candidates.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut used_d = alloc::vec![false; detected.len()];
    let mut used_g = alloc::vec![false; gt.len()];
    let mut pairs = Vec::new();
    for (_, d, g) in candidates {
        if !used_d[d] && !used_g[g] {
            used_d[d] = true;
            used_g[g] = true;
            pairs.push((d, g));
        }
    }
    pairs
}

/// Composite portrayal score: `w_c * S_count + w_p * S_posture +
/// w_e * S_expression`.
///
/// `S_count` is 1 on an exact count match, otherwise `1 - |delta| /
/// max(expected, 1)` floored at 0. Label sub-scores are the fraction of
/// annotated persons whose matched detection carries the same label; a
/// dimension nobody annotated is vacuously 1.
pub fn cpa_score(
    detected: &[PersonAttributes],
    gt: &CpaGroundTruth,
    weights: &CpaWeights,
) -> MetricScore {
    debug_assert!(weights.validate().is_ok());
    let expected = gt.count;
    let got = detected.len();
    let s_count = if got == expected {
        1.0
    } else {
        let delta = got.abs_diff(expected) as f64;
        (1.0 - delta / expected.max(1) as f64).max(0.0)
    };

    let pairs = match_persons(detected, &gt.persons);
    let mut posture_hits = 0usize;
    let mut posture_total = 0usize;
    let mut expression_hits = 0usize;
    let mut expression_total = 0usize;
    for (g_idx, annotation) in gt.persons.iter().enumerate() {
        let matched = pairs
            .iter()
            .find(|(_, g)| *g == g_idx)
            .map(|(d, _)| &detected[*d]);
        if let Some(expected_posture) = annotation.posture {
            posture_total += 1;
            if matched.is_some_and(|p| p.posture == expected_posture) {
                posture_hits += 1;
            }
        }
        if let Some(expected_expression) = annotation.expression {
            expression_total += 1;
            if matched.is_some_and(|p| p.expression == expected_expression) {
                expression_hits += 1;
            }
        }
    }
    let s_posture = if posture_total == 0 {
        1.0
    } else {
        posture_hits as f64 / posture_total as f64
    };
    let s_expression = if expression_total == 0 {
        1.0
    } else {
        expression_hits as f64 / expression_total as f64
    };

    let value =
        weights.count * s_count + weights.posture * s_posture + weights.expression * s_expression;
    MetricScore::ok(Aspect::Cpa, value)
        .with_diagnostic("s_count", s_count)
        .with_diagnostic("s_posture", s_posture)
        .with_diagnostic("s_expression", s_expression)
}
