//! The sparse role x aspect x model x prompt score store, guarded by the
//! relevance mask, plus the aggregate views derived from it: per-aspect
//! means, overall core/hard scores, robustness drops, and role-weighted
//! rankings.
//!
//! The store is append-only: a cell is written once, under a mask-relevant
//! (role, aspect) pair, and never overwritten. Aggregates macro-average by
//! aspect (cell mean per aspect, then mean across aspects), so heavily
//! populated aspects do not drown sparse ones.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::metrics::MetricScore;
use crate::ontology::{Aspect, Ontology, RoleId};

/// Which prompt set a prompt belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetTag {
    Core,
    Hard,
}

impl fmt::Display for SetTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SetTag::Core => "core",
            SetTag::Hard => "hard",
        })
    }
}

/// Full coordinates of one tensor cell.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellCoords {
    pub role: RoleId,
    pub aspect: Aspect,
    pub model: String,
    pub prompt: String,
}

impl CellCoords {
    pub fn new(role: impl Into<RoleId>, aspect: Aspect, model: &str, prompt: &str) -> Self {
        Self {
            role: role.into(),
            aspect,
            model: model.to_string(),
            prompt: prompt.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorError {
    /// The (role, aspect) pair is masked out; such cells are unwritable.
    MaskedCell { role: String, aspect: Aspect },
    DuplicateCell(CellCoords),
    UnknownRole(String),
    /// A prompt id was registered under a different set tag earlier.
    TagConflict { prompt: String },
    NoData,
    ZeroCore,
}

impl fmt::Display for TensorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TensorError::MaskedCell { role, aspect } => {
                write!(f, "cell ({role}, {aspect}) is masked out as irrelevant")
            }
            TensorError::DuplicateCell(c) => write!(
                f,
                "cell ({}, {}, {}, {}) already recorded",
                c.role, c.aspect, c.model, c.prompt
            ),
            TensorError::UnknownRole(r) => write!(f, "role `{r}` is not in the ontology"),
            TensorError::TagConflict { prompt } => {
                write!(f, "prompt `{prompt}` already registered under the other set tag")
            }
            TensorError::NoData => f.write_str("no recorded cells match the query"),
            TensorError::ZeroCore => f.write_str("core score is zero; drop undefined"),
        }
    }
}

impl core::error::Error for TensorError {}

/// Aggregated view of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model: String,
    pub aspect_means_core: BTreeMap<Aspect, f64>,
    pub aspect_means_hard: BTreeMap<Aspect, f64>,
    pub core_score: Option<f64>,
    pub hard_score: Option<f64>,
    pub robustness_drop_pct: Option<f64>,
    /// Mean over each role's mask-relevant aspects (core set).
    pub role_scores: BTreeMap<RoleId, f64>,
    pub failed_cells: usize,
}

/// Append-only sparse score tensor.
#[derive(Debug, Clone)]
pub struct EvaluationTensor {
    ontology: Ontology,
    cells: BTreeMap<CellCoords, MetricScore>,
    prompt_tags: BTreeMap<String, SetTag>,
}

impl EvaluationTensor {
    pub fn new(ontology: Ontology) -> Self {
        Self {
            ontology,
            cells: BTreeMap::new(),
            prompt_tags: BTreeMap::new(),
        }
    }

    pub fn ontology(&self) -> &Ontology {
        &self.ontology
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Record one cell. Fails on masked pairs, unknown roles, duplicate
    /// coordinates, and set-tag conflicts; the store is never partially
    /// updated by a failed call.
    pub fn record(
        &mut self,
        coords: CellCoords,
        tag: SetTag,
        score: MetricScore,
    ) -> Result<(), TensorError> {
        if self.ontology.role(coords.role.as_str()).is_none() {
            return Err(TensorError::UnknownRole(coords.role.as_str().to_string()));
        }
        if !self.ontology.is_relevant(&coords.role, coords.aspect) {
            return Err(TensorError::MaskedCell {
                role: coords.role.as_str().to_string(),
                aspect: coords.aspect,
            });
        }
        if let Some(existing) = self.prompt_tags.get(&coords.prompt) {
            if *existing != tag {
                return Err(TensorError::TagConflict {
                    prompt: coords.prompt.clone(),
                });
            }
        }
        if self.cells.contains_key(&coords) {
            return Err(TensorError::DuplicateCell(coords));
        }
        self.prompt_tags.insert(coords.prompt.clone(), tag);
        self.cells.insert(coords, score);
        Ok(())
    }

    pub fn get(&self, coords: &CellCoords) -> Option<&MetricScore> {
        self.cells.get(coords)
    }

    pub fn cells(&self) -> impl Iterator<Item = (&CellCoords, &MetricScore)> {
        self.cells.iter()
    }

    pub fn models(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.cells.keys().map(|c| &c.model).collect();
        set.into_iter().cloned().collect()
    }

    fn values_for(
        &self,
        model: &str,
        aspect: Aspect,
        tag: SetTag,
    ) -> impl Iterator<Item = f64> + '_ {
        let model = model.to_string();
        self.cells.iter().filter_map(move |(coords, score)| {
            (coords.model == model
                && coords.aspect == aspect
                && self.prompt_tags.get(&coords.prompt) == Some(&tag))
            .then_some(score.value)
            .flatten()
        })
    }

    /// Arithmetic mean of one model's valued cells for an aspect and set.
    pub fn aspect_mean(&self, model: &str, aspect: Aspect, tag: SetTag) -> Result<f64, TensorError> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for v in self.values_for(model, aspect, tag) {
            sum += v;
            n += 1;
        }
        if n == 0 {
            return Err(TensorError::NoData);
        }
        Ok(sum / n as f64)
    }

    /// Macro-averaged overall score: mean of the aspect means over every
    /// aspect with any data in the set.
    pub fn overall_score(&self, model: &str, tag: SetTag) -> Result<f64, TensorError> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for aspect in Aspect::ALL {
            if let Ok(mean) = self.aspect_mean(model, aspect, tag) {
                sum += mean;
                n += 1;
            }
        }
        if n == 0 {
            return Err(TensorError::NoData);
        }
        Ok(sum / n as f64)
    }

    /// Rank models for one role: mean over the role's mask-relevant aspects
    /// (with data), descending, ties broken by lexicographic model id.
    pub fn role_weighted_rank(
        &self,
        role: &RoleId,
        tag: SetTag,
    ) -> Result<Vec<(String, f64)>, TensorError> {
        let role_idx = self
            .ontology
            .role_index(role.as_str())
            .ok_or_else(|| TensorError::UnknownRole(role.as_str().to_string()))?;
        let aspects: Vec<Aspect> = self.ontology.mask().aspects_for(role_idx).collect();
        let mut ranking: Vec<(String, f64)> = Vec::new();
        for model in self.models() {
            let mut sum = 0.0;
            let mut n = 0usize;
            for &aspect in &aspects {
                if let Ok(mean) = self.aspect_mean(&model, aspect, tag) {
                    sum += mean;
                    n += 1;
                }
            }
            if n > 0 {
                ranking.push((model, sum / n as f64));
            }
        }
        if ranking.is_empty() {
            return Err(TensorError::NoData);
        }
        ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(ranking)
    }

    pub fn failed_cell_count(&self, model: &str) -> usize {
        self.cells
            .iter()
            .filter(|(c, s)| c.model == model && !s.is_ok())
            .count()
    }

    /// Full per-model report. The robustness drop is present only when both
    /// set scores exist and the core score is positive.
    pub fn model_report(&self, model: &str) -> Result<ModelReport, TensorError> {
        let core_score = self.overall_score(model, SetTag::Core).ok();
        let hard_score = self.overall_score(model, SetTag::Hard).ok();
        if core_score.is_none() && hard_score.is_none() {
            return Err(TensorError::NoData);
        }
        let robustness_drop_pct = match (core_score, hard_score) {
            (Some(core), Some(hard)) => robustness_drop(core, hard).ok(),
            _ => None,
        };
        let mut aspect_means_core = BTreeMap::new();
        let mut aspect_means_hard = BTreeMap::new();
        for aspect in Aspect::ALL {
            if let Ok(m) = self.aspect_mean(model, aspect, SetTag::Core) {
                aspect_means_core.insert(aspect, m);
            }
            if let Ok(m) = self.aspect_mean(model, aspect, SetTag::Hard) {
                aspect_means_hard.insert(aspect, m);
            }
        }
        let mut role_scores = BTreeMap::new();
        for role in self.ontology.roles() {
            if let Ok(ranking) = self.role_weighted_rank(&role.token, SetTag::Core) {
                if let Some((_, score)) = ranking.iter().find(|(m, _)| m == model) {
                    role_scores.insert(role.token.clone(), *score);
                }
            }
        }
        Ok(ModelReport {
            model: model.to_string(),
            aspect_means_core,
            aspect_means_hard,
            core_score,
            hard_score,
            robustness_drop_pct,
            role_scores,
            failed_cells: self.failed_cell_count(model),
        })
    }
}

/// Percentage degradation under the adversarial set:
/// `(core - hard) / core * 100`. Contexts that print it round to one
/// decimal.
pub fn robustness_drop(core: f64, hard: f64) -> Result<f64, TensorError> {
    if core <= 0.0 {
        return Err(TensorError::ZeroCore);
    }
    Ok((core - hard) / core * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::default_ontology;

    fn ok(aspect: Aspect, value: f64) -> MetricScore {
        MetricScore::ok(aspect, value)
    }

    fn coords(role: &str, aspect: Aspect, model: &str, prompt: &str) -> CellCoords {
        CellCoords::new(role, aspect, model, prompt)
    }

    #[test]
    fn record_then_read_back() {
        let mut tensor = EvaluationTensor::new(default_ontology());
        let c = coords("GD", Aspect::Tr, "model-a", "p1");
        tensor
            .record(c.clone(), SetTag::Core, ok(Aspect::Tr, 0.88))
            .unwrap();
        assert_eq!(tensor.get(&c).unwrap().value, Some(0.88));
        assert_eq!(tensor.aspect_mean("model-a", Aspect::Tr, SetTag::Core).unwrap(), 0.88);
    }

    #[test]
    fn masked_cells_are_unwritable() {
        let mut tensor = EvaluationTensor::new(default_ontology());
        let err = tensor
            .record(coords("GD", Aspect::Li, "m", "p"), SetTag::Core, ok(Aspect::Li, 0.5))
            .unwrap_err();
        assert!(matches!(err, TensorError::MaskedCell { .. }));
    }

    #[test]
    fn duplicate_cells_are_rejected() {
        let mut tensor = EvaluationTensor::new(default_ontology());
        let c = coords("GD", Aspect::Tr, "m", "p");
        tensor.record(c.clone(), SetTag::Core, ok(Aspect::Tr, 0.5)).unwrap();
        let err = tensor
            .record(c, SetTag::Core, ok(Aspect::Tr, 0.6))
            .unwrap_err();
        assert!(matches!(err, TensorError::DuplicateCell(_)));
    }

    #[test]
    fn exactly_28_of_63_pairs_accept_writes() {
        let ontology = default_ontology();
        let mut accepted = 0;
        let mut rejected = 0;
        let mut tensor = EvaluationTensor::new(ontology.clone());
        for role in ontology.roles() {
            for aspect in Aspect::ALL {
                let c = CellCoords::new(role.token.clone(), aspect, "m", "p");
                match tensor.record(c, SetTag::Core, ok(aspect, 0.5)) {
                    Ok(()) => accepted += 1,
                    Err(TensorError::MaskedCell { .. }) => rejected += 1,
                    Err(other) => panic!("unexpected error: {other}"),
                }
            }
        }
        assert_eq!((accepted, rejected), (28, 35));
    }

    #[test]
    fn tag_conflicts_are_rejected() {
        let mut tensor = EvaluationTensor::new(default_ontology());
        tensor
            .record(coords("GD", Aspect::Tr, "m", "p"), SetTag::Core, ok(Aspect::Tr, 0.5))
            .unwrap();
        let err = tensor
            .record(coords("GD", Aspect::Cse, "m", "p"), SetTag::Hard, ok(Aspect::Cse, 0.5))
            .unwrap_err();
        assert!(matches!(err, TensorError::TagConflict { .. }));
    }

    #[test]
    fn aspect_and_overall_means() {
        let mut tensor = EvaluationTensor::new(default_ontology());
        tensor
            .record(coords("GD", Aspect::Tr, "m", "p1"), SetTag::Core, ok(Aspect::Tr, 0.9))
            .unwrap();
        tensor
            .record(coords("MS", Aspect::Tr, "m", "p2"), SetTag::Core, ok(Aspect::Tr, 0.9))
            .unwrap();
        tensor
            .record(coords("GD", Aspect::Cse, "m", "p3"), SetTag::Core, ok(Aspect::Cse, 0.8))
            .unwrap();
        assert!((tensor.aspect_mean("m", Aspect::Tr, SetTag::Core).unwrap() - 0.9).abs() < 1e-12);
        // Macro average: (0.9 + 0.8) / 2, not the cell mean.
        assert!((tensor.overall_score("m", SetTag::Core).unwrap() - 0.85).abs() < 1e-12);
        assert_eq!(tensor.aspect_mean("m", Aspect::Gc, SetTag::Core), Err(TensorError::NoData));
    }

    #[test]
    fn single_cell_mean_is_itself() {
        let mut tensor = EvaluationTensor::new(default_ontology());
        tensor
            .record(coords("GD", Aspect::Tr, "m", "p"), SetTag::Core, ok(Aspect::Tr, 0.88))
            .unwrap();
        assert_eq!(tensor.overall_score("m", SetTag::Core).unwrap(), 0.88);
    }

    #[test]
    fn drop_reference_rows() {
        // Published (core, hard, drop) triples reproduce within 0.1 pp.
        let rows: [(f64, f64, f64); 6] = [
            (88.0, 82.3, 6.5),
            (86.8, 80.5, 7.3),
            (85.1, 78.6, 7.6),
            (81.9, 74.2, 9.4),
            (80.3, 73.0, 9.1),
            (76.4, 65.1, 14.8),
        ];
        for (core, hard, expected) in rows {
            let drop = robustness_drop(core, hard).unwrap();
            assert!(
                (drop - expected).abs() <= 0.1,
                "({core}, {hard}): {drop} vs {expected}"
            );
        }
    }

    #[test]
    fn zero_drop_and_zero_core() {
        assert_eq!(robustness_drop(50.0, 50.0).unwrap(), 0.0);
        assert_eq!(robustness_drop(0.0, 0.0), Err(TensorError::ZeroCore));
    }

    #[test]
    fn aggregates_ignore_insertion_order() {
        let ontology = default_ontology();
        let scores = [("p1", 0.2), ("p2", 0.9), ("p3", 0.5)];
        let mut forward = EvaluationTensor::new(ontology.clone());
        for (p, v) in scores {
            forward
                .record(coords("GD", Aspect::Tr, "m", p), SetTag::Core, ok(Aspect::Tr, v))
                .unwrap();
        }
        let mut backward = EvaluationTensor::new(ontology);
        for (p, v) in scores.iter().rev() {
            backward
                .record(coords("GD", Aspect::Tr, "m", p), SetTag::Core, ok(Aspect::Tr, *v))
                .unwrap();
        }
        assert_eq!(
            forward.aspect_mean("m", Aspect::Tr, SetTag::Core).unwrap(),
            backward.aspect_mean("m", Aspect::Tr, SetTag::Core).unwrap()
        );
    }

    #[test]
    fn ties_rank_lexicographically() {
        let mut tensor = EvaluationTensor::new(default_ontology());
        for model in ["zeta", "alpha"] {
            tensor
                .record(
                    coords("GD", Aspect::Tr, model, &alloc::format!("p-{model}")),
                    SetTag::Core,
                    ok(Aspect::Tr, 0.7),
                )
                .unwrap();
        }
        let ranking = tensor.role_weighted_rank(&RoleId::new("GD"), SetTag::Core).unwrap();
        assert_eq!(ranking[0].0, "alpha");
        assert_eq!(ranking[1].0, "zeta");
    }

    #[test]
    fn rankings_survive_monotone_transforms() {
        let ontology = default_ontology();
        let raw = [("m1", 0.31), ("m2", 0.74), ("m3", 0.52)];
        let rank_of = |transform: &dyn Fn(f64) -> f64| -> Vec<String> {
            let mut tensor = EvaluationTensor::new(ontology.clone());
            for (m, v) in raw {
                tensor
                    .record(
                        coords("GD", Aspect::Tr, m, &alloc::format!("p-{m}")),
                        SetTag::Core,
                        ok(Aspect::Tr, transform(v)),
                    )
                    .unwrap();
            }
            tensor
                .role_weighted_rank(&RoleId::new("GD"), SetTag::Core)
                .unwrap()
                .into_iter()
                .map(|(m, _)| m)
                .collect()
        };
        let baseline = rank_of(&|v| v);
        assert_eq!(rank_of(&|v| v * 0.5), baseline);
        assert_eq!(rank_of(&|v| v * v), baseline);
        assert_eq!(rank_of(&|v| 1.0 - (1.0 - v) * (1.0 - v)), baseline);
    }

    #[test]
    fn failed_cells_are_stored_but_not_aggregated() {
        let mut tensor = EvaluationTensor::new(default_ontology());
        tensor
            .record(
                coords("GD", Aspect::Tr, "m", "p1"),
                SetTag::Core,
                MetricScore::failed(Aspect::Tr, "no evidence"),
            )
            .unwrap();
        tensor
            .record(coords("GD", Aspect::Tr, "m", "p2"), SetTag::Core, ok(Aspect::Tr, 0.6))
            .unwrap();
        assert_eq!(tensor.aspect_mean("m", Aspect::Tr, SetTag::Core).unwrap(), 0.6);
        assert_eq!(tensor.failed_cell_count("m"), 1);
    }
}
