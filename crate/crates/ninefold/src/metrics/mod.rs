//! The six deterministic scoring functions. Each consumes extracted evidence
//! plus ground truth and returns a [`MetricScore`] in `[0, 1]`, or an
//! explicit failure when the evidence is insufficient. All scorers are pure.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};

use serde::{Deserialize, Serialize};

use crate::ontology::Aspect;

mod cpa;
mod cse;
mod gc;
mod li;
mod psc;
mod tr;

pub use cpa::{cpa_score, CpaGroundTruth, CpaWeights, GtPerson, WeightError};
pub use cse::{cse_con, cse_coverage_matrix, cse_cov, cse_score, CseError};
pub use gc::{gc_score, GcConfig};
pub use li::{default_anchors, find_anchor, li_infer_direction, li_score, normalize_phrase, LiError, LightAnchor};
pub use psc::{psc_chaos, psc_score, PscError};
pub use tr::{jaccard_tokens, levenshtein, tr_score};

/// One scored cell: either a value in `[0, 1]` or a failure reason, never
/// both, plus named diagnostic sub-scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricScore {
    pub aspect: Aspect,
    pub value: Option<f64>,
    pub failure: Option<String>,
    #[serde(default)]
    pub diagnostics: BTreeMap<String, f64>,
}

impl MetricScore {
    /// A successful score. The value is clamped into `[0, 1]` against float
    /// drift; anything materially outside is a scorer bug.
    pub fn ok(aspect: Aspect, value: f64) -> Self {
        debug_assert!((-1e-9..=1.0 + 1e-9).contains(&value), "score {value} out of range");
        Self {
            aspect,
            value: Some(crate::math::clamp01(value)),
            failure: None,
            diagnostics: BTreeMap::new(),
        }
    }

    pub fn failed(aspect: Aspect, reason: impl Into<String>) -> Self {
        Self {
            aspect,
            value: None,
            failure: Some(reason.into()),
            diagnostics: BTreeMap::new(),
        }
    }

    pub fn with_diagnostic(mut self, key: &str, value: f64) -> Self {
        self.diagnostics.insert(key.to_string(), value);
        self
    }

    pub fn is_ok(&self) -> bool {
        self.value.is_some()
    }
}

/// Tunable constants for every deterministic metric, the questionnaire
/// engine, and safety screening. The defaults are working calibration
/// values, not measured claims.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    /// Weight of character-level similarity in the text-rendering score.
    pub tr_char_weight: f64,
    /// Character-portrayal weights (count, posture, expression).
    pub cpa_weights: CpaWeights,
    /// Denominator stabilizer in the depth-conflict ratio.
    pub psc_epsilon: f64,
    /// Enclosure fraction at which a smaller object counts as attached.
    pub psc_attachment_threshold: f64,
    /// Per-cue exponential decay rates for geometric coherence.
    pub gc: GcConfig,
    /// Safety classifier flag threshold.
    pub safety_threshold: f64,
    /// Votes per questionnaire query (odd).
    pub hwpq_k: u32,
    /// Maximum weight-sum deviation repaired by renormalization.
    pub hwpq_weight_tolerance: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            tr_char_weight: 0.5,
            cpa_weights: CpaWeights::default(),
            psc_epsilon: 1e-6,
            psc_attachment_threshold: 0.9,
            gc: GcConfig::default(),
            safety_threshold: 0.5,
            hwpq_k: 3,
            hwpq_weight_tolerance: 0.05,
        }
    }
}
