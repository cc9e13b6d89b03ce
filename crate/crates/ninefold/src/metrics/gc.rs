//! Geometric coherence: six image-space cues, each normalized into a
//! sub-score in `[0, 1]`, min-pooled so the most salient defect dominates.

use serde::{Deserialize, Serialize};

use crate::features::GcCues;
use crate::math;
use crate::metrics::MetricScore;
use crate::ontology::Aspect;

/// Exponential decay rates for the five open-ended cues. The anomaly score
/// arrives already in `[0, 1]` and is normalized as `1 - raw`. These are
/// calibration constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GcConfig {
    pub lambda_normals: f64,
    pub lambda_curvature: f64,
    pub lambda_highlight: f64,
    pub lambda_contour: f64,
    pub lambda_texture: f64,
}

impl Default for GcConfig {
    fn default() -> Self {
        Self {
            lambda_normals: 1.0,
            lambda_curvature: 1.0,
            lambda_highlight: 1.0,
            lambda_contour: 1.0,
            lambda_texture: 1.0,
        }
    }
}

/// Monotone normalizer for nonnegative open-ended cues; negative raw values
/// are clamped to 0 before the decay.
fn decay(raw: f64, lambda: f64) -> f64 {
    math::exp(-lambda * raw.max(0.0))
}

/// Min-pool the six normalized sub-scores. Any missing cue fails the metric
/// by name.
pub fn gc_score(cues: &GcCues, config: &GcConfig) -> MetricScore {
    let mut missing: Option<&'static str> = None;
    let mut need = |value: Option<f64>, name: &'static str| -> f64 {
        match value {
            Some(v) => v,
            None => {
                missing.get_or_insert(name);
                f64::NAN
            }
        }
    };
    let raw_normals = need(cues.normals_dispersion, "normals_dispersion");
    let raw_curvature = need(cues.curvature_energy, "curvature_energy");
    let raw_highlight = need(cues.highlight_breaks, "highlight_breaks");
    let raw_contour = need(cues.contour_fragmentation, "contour_fragmentation");
    let raw_texture = need(cues.texture_irregularity, "texture_irregularity");
    let raw_anomaly = need(cues.anomaly_score, "anomaly_score");
    if let Some(name) = missing {
        return MetricScore::failed(Aspect::Gc, alloc::format!("missing cue `{name}`"));
    }

    let s_normals = decay(raw_normals, config.lambda_normals);
    let s_curvature = decay(raw_curvature, config.lambda_curvature);
    let s_highlight = decay(raw_highlight, config.lambda_highlight);
    let s_contour = decay(raw_contour, config.lambda_contour);
    let s_texture = decay(raw_texture, config.lambda_texture);
    let s_anomaly = math::clamp01(1.0 - raw_anomaly);

    let value = s_normals
        .min(s_curvature)
        .min(s_highlight)
        .min(s_contour)
        .min(s_texture)
        .min(s_anomaly);
    MetricScore::ok(Aspect::Gc, value)
        .with_diagnostic("s_normals", s_normals)
        .with_diagnostic("s_curvature", s_curvature)
        .with_diagnostic("s_highlight", s_highlight)
        .with_diagnostic("s_contour", s_contour)
        .with_diagnostic("s_texture", s_texture)
        .with_diagnostic("s_anomaly", s_anomaly)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cues_of(raws: [f64; 6]) -> GcCues {
        GcCues {
            normals_dispersion: Some(raws[0]),
            curvature_energy: Some(raws[1]),
            highlight_breaks: Some(raws[2]),
            contour_fragmentation: Some(raws[3]),
            texture_irregularity: Some(raws[4]),
            anomaly_score: Some(raws[5]),
        }
    }

    #[test]
    fn perfect_cues_score_one() {
        let score = gc_score(&cues_of([0.0; 6]), &GcConfig::default());
        assert_eq!(score.value, Some(1.0));
    }

    #[test]
    fn min_pooling_hand_case() {
        // Raw values chosen so the normalized sub-scores are exactly
        // (0.9, 0.8, 0.95, 0.7, 0.85, 0.9); the pooled score is 0.7.
        let raws = [
            -libm::log(0.9),
            -libm::log(0.8),
            -libm::log(0.95),
            -libm::log(0.7),
            -libm::log(0.85),
            0.1,
        ];
        let score = gc_score(&cues_of(raws), &GcConfig::default());
        // Independent oracle: plain min over the six expected sub-scores.
        let expected = [0.9f64, 0.8, 0.95, 0.7, 0.85, 0.9]
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        assert!((score.value.unwrap() - expected).abs() < 1e-12);
        assert!((score.value.unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn any_zero_subscore_annihilates() {
        let score = gc_score(&cues_of([0.0, 0.0, 0.0, 0.0, 0.0, 1.0]), &GcConfig::default());
        assert_eq!(score.value, Some(0.0));
    }

    #[test]
    fn missing_cue_fails_by_name() {
        let mut cues = cues_of([0.1; 6]);
        cues.contour_fragmentation = None;
        let score = gc_score(&cues, &GcConfig::default());
        assert!(score.failure.unwrap().contains("contour_fragmentation"));
    }

    #[test]
    fn pooled_value_never_exceeds_any_subscore() {
        use crate::util::SplitMix64;
        let mut rng = SplitMix64::new(0x6c);
        for _ in 0..1000 {
            let raws = [
                rng.next_range(0.0, 3.0),
                rng.next_range(0.0, 3.0),
                rng.next_below(5) as f64,
                rng.next_range(0.0, 3.0),
                rng.next_range(0.0, 3.0),
                rng.next_f64(),
            ];
            let score = gc_score(&cues_of(raws), &GcConfig::default());
            let v = score.value.unwrap();
            assert!((0.0..=1.0).contains(&v));
            let min_diag = score
                .diagnostics
                .values()
                .fold(f64::INFINITY, |m, &s| m.min(s));
            assert!((v - min_diag).abs() < 1e-12, "pooled {v} vs min {min_diag}");
        }
    }

    #[test]
    fn negative_raw_cues_clamp_to_perfect() {
        let score = gc_score(&cues_of([-5.0, 0.0, 0.0, 0.0, 0.0, 0.0]), &GcConfig::default());
        assert_eq!(score.value, Some(1.0));
    }
}
