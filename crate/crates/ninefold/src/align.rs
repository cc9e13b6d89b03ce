//! Validation against human pairwise preferences: prediction accuracy with
//! its acceptance threshold, McNemar's test for comparing two metrics,
//! Krippendorff's alpha for annotator agreement, and grid-search tuning of
//! the character-portrayal weights.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::metrics::CpaWeights;

/// The published acceptance bar: a metric must predict at least 75% of
/// non-tie human preferences. The boundary itself passes.
pub const PPA_THRESHOLD: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Choice {
    A,
    B,
    Tie,
}

/// One human pairwise comparison with the metric's scores for both sides.
/// Image references are carried for provenance when the corpus is collected
/// externally; the statistics only read the scores and the choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub pair_id: String,
    pub prompt_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_a: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_b: Option<String>,
    pub score_a: f64,
    pub score_b: f64,
    pub human_choice: Choice,
    #[serde(default)]
    pub annotator_votes: Option<Vec<Choice>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AlignError {
    AllTies,
    LengthMismatch { left: usize, right: usize },
    InsufficientData,
}

impl fmt::Display for AlignError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlignError::AllTies => f.write_str("every pair is a tie; accuracy undefined"),
            AlignError::LengthMismatch { left, right } => {
                write!(f, "correctness vectors differ in length: {left} vs {right}")
            }
            AlignError::InsufficientData => {
                f.write_str("need at least two ratings on at least one item")
            }
        }
    }
}

impl core::error::Error for AlignError {}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ppa {
    pub accuracy: f64,
    pub n_used: usize,
}

/// Whether one pair's prediction is correct: the metric must strictly favor
/// the humans' winner. Equal scores on a decided pair count as incorrect.
pub fn pair_correct(pair: &PreferencePair) -> Option<bool> {
    match pair.human_choice {
        Choice::Tie => None,
        Choice::A => Some(pair.score_a > pair.score_b),
        Choice::B => Some(pair.score_b > pair.score_a),
    }
}

/// Pairwise prediction accuracy over the non-tie pairs.
pub fn ppa(pairs: &[PreferencePair]) -> Result<Ppa, AlignError> {
    let mut used = 0usize;
    let mut correct = 0usize;
    for pair in pairs {
        if let Some(is_correct) = pair_correct(pair) {
            used += 1;
            correct += usize::from(is_correct);
        }
    }
    if used == 0 {
        return Err(AlignError::AllTies);
    }
    Ok(Ppa {
        accuracy: correct as f64 / used as f64,
        n_used: used,
    })
}

/// Inclusive check against the 75% alignment bar.
pub fn threshold_check(accuracy: f64) -> bool {
    accuracy >= PPA_THRESHOLD
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McNemarMethod {
    ExactBinomial,
    ChiSquared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemar {
    /// Pairs the first metric got right and the second wrong.
    pub b: usize,
    /// Pairs the second metric got right and the first wrong.
    pub c: usize,
    pub statistic: f64,
    pub p_value: f64,
    pub method: McNemarMethod,
}

/// Paired comparison of two metrics' per-pair correctness vectors. Uses the
/// exact binomial test when discordant counts are small (b + c < 25) and
/// the continuity-corrected chi-squared approximation otherwise; two-sided
/// either way.
pub fn mcnemar(correct_1: &[bool], correct_2: &[bool]) -> Result<McNemar, AlignError> {
    if correct_1.len() != correct_2.len() {
        return Err(AlignError::LengthMismatch {
            left: correct_1.len(),
            right: correct_2.len(),
        });
    }
    let mut b = 0usize;
    let mut c = 0usize;
    for (&one, &two) in correct_1.iter().zip(correct_2) {
        match (one, two) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    let n = b + c;
    let diff = b.abs_diff(c) as f64;
    let statistic = if n == 0 {
        0.0
    } else {
        let corrected = (diff - 1.0).max(0.0);
        corrected * corrected / n as f64
    };
    let (p_value, method) = if n == 0 {
        (1.0, McNemarMethod::ExactBinomial)
    } else if n < 25 {
        (exact_binomial_two_sided(b.min(c), n), McNemarMethod::ExactBinomial)
    } else {
        (chi2_survival_1df(statistic), McNemarMethod::ChiSquared)
    };
    Ok(McNemar {
        b,
        c,
        statistic,
        p_value,
        method,
    })
}

/// Two-sided exact binomial p-value under p = 1/2:
/// `min(1, 2 * P(X <= k))` for `X ~ Bin(n, 1/2)`.
fn exact_binomial_two_sided(k: usize, n: usize) -> f64 {
    debug_assert!(n > 0 && n < 64);
    let mut tail: f64 = 0.0;
    let mut coefficient: f64 = 1.0; // C(n, 0)
    for i in 0..=k {
        if i > 0 {
            coefficient = coefficient * (n - i + 1) as f64 / i as f64;
        }
        tail += coefficient;
    }
    let p = 2.0 * tail / libm::exp2(n as f64);
    p.min(1.0)
}

/// Survival function of the chi-squared distribution with one degree of
/// freedom: `P(X > x) = erfc(sqrt(x / 2))`.
fn chi2_survival_1df(x: f64) -> f64 {
    math::erfc(math::sqrt(x / 2.0))
}

/// Krippendorff's alpha for nominal data, coincidence-matrix formulation.
/// `items` holds one row per rated unit, one entry per annotator (`None`
/// where an annotator skipped the unit). Perfect agreement gives 1;
/// systematic two-category disagreement approaches -1 as the sample grows.
pub fn krippendorff_alpha<T: Ord + Clone>(items: &[Vec<Option<T>>]) -> Result<f64, AlignError> {
    let mut categories: BTreeMap<T, usize> = BTreeMap::new();
    for row in items {
        for value in row.iter().flatten() {
            let next = categories.len();
            categories.entry(value.clone()).or_insert(next);
        }
    }
    let k = categories.len();
    let mut coincidence = alloc::vec![alloc::vec![0.0f64; k]; k];
    let mut n_total = 0.0f64;
    for row in items {
        let ratings: Vec<usize> = row
            .iter()
            .flatten()
            .map(|v| categories[v])
            .collect();
        let m = ratings.len();
        if m < 2 {
            continue;
        }
        let weight = 1.0 / (m as f64 - 1.0);
        for (i, &a) in ratings.iter().enumerate() {
            for (j, &b) in ratings.iter().enumerate() {
                if i != j {
                    coincidence[a][b] += weight;
                }
            }
        }
        n_total += m as f64;
    }
    if n_total < 2.0 {
        return Err(AlignError::InsufficientData);
    }
    let marginals: Vec<f64> = (0..k)
        .map(|c| coincidence[c].iter().sum::<f64>())
        .collect();
    let observed_disagreement: f64 = (0..k)
        .map(|a| {
            (0..k)
                .filter(|&b| b != a)
                .map(|b| coincidence[a][b])
                .sum::<f64>()
        })
        .sum::<f64>()
        / n_total;
    let expected_disagreement: f64 = (0..k)
        .map(|a| {
            (0..k)
                .filter(|&b| b != a)
                .map(|b| marginals[a] * marginals[b])
                .sum::<f64>()
        })
        .sum::<f64>()
        / (n_total * (n_total - 1.0));
    if expected_disagreement == 0.0 {
        // Single observed category: no disagreement is possible.
        return Ok(1.0);
    }
    Ok(1.0 - observed_disagreement / expected_disagreement)
}

/// One comparison annotated with per-dimension portrayal sub-scores
/// (count, posture, expression) for both images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpaAlignmentPair {
    pub subs_a: [f64; 3],
    pub subs_b: [f64; 3],
    pub human_choice: Choice,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TunedCpaWeights {
    pub weights: CpaWeights,
    pub accuracy: f64,
    /// Set when every candidate weighting scored identically; the returned
    /// weights are then the defaults rather than a data-driven choice.
    pub no_signal: bool,
}

fn accuracy_for(pairs: &[CpaAlignmentPair], wc: f64, wp: f64, we: f64) -> Option<f64> {
    let mut used = 0usize;
    let mut correct = 0usize;
    for pair in pairs {
        let score = |s: &[f64; 3]| wc * s[0] + wp * s[1] + we * s[2];
        let a = score(&pair.subs_a);
        let b = score(&pair.subs_b);
        let is_correct = match pair.human_choice {
            Choice::Tie => continue,
            Choice::A => a > b,
            Choice::B => b > a,
        };
        used += 1;
        correct += usize::from(is_correct);
    }
    (used > 0).then(|| correct as f64 / used as f64)
}

/// Deterministic coarse-to-fine grid search over the weight simplex,
/// maximizing induced prediction accuracy. Steps of 0.05 then 0.01; ties
/// prefer the highest expression weight, then the highest posture weight.
/// When every weighting performs identically the defaults are returned,
/// flagged as no-signal.
pub fn tune_cpa_weights(pairs: &[CpaAlignmentPair]) -> Result<TunedCpaWeights, AlignError> {
    // Integer hundredths keep the simplex sums exact.
    let evaluate = |wc_c: i32, wp_c: i32| -> (f64, f64, f64, Option<f64>) {
        let we_c = 100 - wc_c - wp_c;
        let (wc, wp, we) = (
            f64::from(wc_c) / 100.0,
            f64::from(wp_c) / 100.0,
            f64::from(we_c) / 100.0,
        );
        (wc, wp, we, accuracy_for(pairs, wc, wp, we))
    };

    let better = |candidate: (f64, f64, f64, f64), best: (f64, f64, f64, f64)| -> bool {
        // (accuracy, we, wp) lexicographic.
        candidate.3 > best.3 + 1e-12
            || (math::abs(candidate.3 - best.3) <= 1e-12
                && (candidate.2 > best.2 + 1e-12
                    || (math::abs(candidate.2 - best.2) <= 1e-12 && candidate.1 > best.1 + 1e-12)))
    };

    let mut best: Option<(f64, f64, f64, f64)> = None;
    let mut min_acc = f64::INFINITY;
    let mut max_acc = f64::NEG_INFINITY;
    for wc_c in (0..=100).step_by(5) {
        for wp_c in (0..=(100 - wc_c)).step_by(5) {
            let (wc, wp, we, acc) = evaluate(wc_c, wp_c);
            let Some(acc) = acc else {
                return Err(AlignError::AllTies);
            };
            min_acc = min_acc.min(acc);
            max_acc = max_acc.max(acc);
            let candidate = (wc, wp, we, acc);
            if best.is_none() || better(candidate, best.unwrap()) {
                best = Some(candidate);
            }
        }
    }
    if max_acc - min_acc <= 1e-12 {
        let weights = CpaWeights::default();
        return Ok(TunedCpaWeights {
            weights,
            accuracy: max_acc,
            no_signal: true,
        });
    }
    let coarse = best.unwrap();

    // Refine at 0.01 resolution around the coarse optimum.
    let center_wc = libm::round(coarse.0 * 100.0) as i32;
    let center_wp = libm::round(coarse.1 * 100.0) as i32;
    let mut best = coarse;
    for wc_c in (center_wc - 5).max(0)..=(center_wc + 5).min(100) {
        for wp_c in (center_wp - 5).max(0)..=(center_wp + 5).min(100) {
            if wc_c + wp_c > 100 {
                continue;
            }
            let (wc, wp, we, acc) = evaluate(wc_c, wp_c);
            let candidate = (wc, wp, we, acc.expect("non-tie pairs exist"));
            if better(candidate, best) {
                best = candidate;
            }
        }
    }

    Ok(TunedCpaWeights {
        weights: CpaWeights {
            count: best.0,
            posture: best.1,
            expression: best.2,
        },
        accuracy: best.3,
        no_signal: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    
    use alloc::vec;

    pub(crate) fn pair(id: usize, a: f64, b: f64, choice: Choice) -> PreferencePair {
        PreferencePair {
            pair_id: format!("pair-{id}"),
            prompt_id: format!("p-{id}"),
            image_a: None,
            image_b: None,
            score_a: a,
            score_b: b,
            human_choice: choice,
            annotator_votes: None,
        }
    }

    /// The 20-pair fixture: 16 predictions correct, 4 wrong, accuracy 0.80.
    pub(crate) fn twenty_pair_fixture() -> Vec<PreferencePair> {
        let mut pairs = Vec::new();
        for i in 0..16 {
            pairs.push(pair(i, 0.8, 0.3, Choice::A));
        }
        for i in 16..20 {
            pairs.push(pair(i, 0.2, 0.6, Choice::A));
        }
        pairs
    }

    #[test]
    fn fixture_accuracy_is_exactly_080() {
        let result = ppa(&twenty_pair_fixture()).unwrap();
        assert_eq!(result.accuracy, 0.80);
        assert_eq!(result.n_used, 20);
    }

    #[test]
    fn ties_are_excluded() {
        let mut pairs = twenty_pair_fixture();
        pairs.push(pair(99, 0.5, 0.5, Choice::Tie));
        let result = ppa(&pairs).unwrap();
        assert_eq!(result.n_used, 20);
        assert_eq!(result.accuracy, 0.80);
    }

    #[test]
    fn all_ties_is_an_error() {
        let pairs = vec![pair(0, 0.4, 0.6, Choice::Tie), pair(1, 0.9, 0.1, Choice::Tie)];
        assert_eq!(ppa(&pairs), Err(AlignError::AllTies));
    }

    #[test]
    fn equal_scores_on_decided_pairs_are_incorrect() {
        let pairs = vec![pair(0, 0.5, 0.5, Choice::A), pair(1, 0.5, 0.5, Choice::B)];
        let result = ppa(&pairs).unwrap();
        assert_eq!(result.accuracy, 0.0);
    }

    #[test]
    fn threshold_is_inclusive() {
        assert!(threshold_check(0.75));
        assert!(!threshold_check(0.7499));
        assert!(threshold_check(0.825));
    }

    #[test]
    fn ppa_ignores_monotone_transforms() {
        let pairs = twenty_pair_fixture();
        let transformed: Vec<PreferencePair> = pairs
            .iter()
            .map(|p| {
                let mut t = p.clone();
                t.score_a = p.score_a * p.score_a * 0.5;
                t.score_b = p.score_b * p.score_b * 0.5;
                t
            })
            .collect();
        assert_eq!(ppa(&pairs).unwrap().accuracy, ppa(&transformed).unwrap().accuracy);
    }

    #[test]
    fn negated_metric_accuracy_complements() {
        let pairs = twenty_pair_fixture();
        let negated: Vec<PreferencePair> = pairs
            .iter()
            .map(|p| {
                let mut n = p.clone();
                n.score_a = 1.0 - p.score_a;
                n.score_b = 1.0 - p.score_b;
                n
            })
            .collect();
        let direct = ppa(&pairs).unwrap().accuracy;
        let flipped = ppa(&negated).unwrap().accuracy;
        assert!((direct + flipped - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mcnemar_identical_vectors() {
        let v = vec![true, false, true, true, false];
        let result = mcnemar(&v, &v).unwrap();
        assert_eq!((result.b, result.c), (0, 0));
        assert_eq!(result.p_value, 1.0);
    }

    #[test]
    fn mcnemar_one_sided_discordance_exact() {
        // b = 10, c = 0: p = 2 * (1/2)^10 = 0.001953125.
        let first = vec![true; 10];
        let second = vec![false; 10];
        let result = mcnemar(&first, &second).unwrap();
        assert_eq!((result.b, result.c), (10, 0));
        assert_eq!(result.method, McNemarMethod::ExactBinomial);
        assert!((result.p_value - 0.001953125).abs() < 1e-12);
    }

    #[test]
    fn mcnemar_balanced_discordance_is_insignificant() {
        // b = c = 20 goes through the chi-squared branch; the continuity
        // correction zeroes the statistic and p = 1.
        let mut first = vec![true; 20];
        first.extend(vec![false; 20]);
        let mut second = vec![false; 20];
        second.extend(vec![true; 20]);
        let result = mcnemar(&first, &second).unwrap();
        assert_eq!((result.b, result.c), (20, 20));
        assert_eq!(result.method, McNemarMethod::ChiSquared);
        assert_eq!(result.statistic, 0.0);
        assert!((result.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mcnemar_is_symmetric() {
        use crate::util::SplitMix64;
        let mut rng = SplitMix64::new(0x3a1);
        for _ in 0..50 {
            let n = 5 + rng.next_below(60) as usize;
            let a: Vec<bool> = (0..n).map(|_| rng.next_below(2) == 1).collect();
            let b: Vec<bool> = (0..n).map(|_| rng.next_below(2) == 1).collect();
            let ab = mcnemar(&a, &b).unwrap();
            let ba = mcnemar(&b, &a).unwrap();
            assert_eq!(ab.p_value.to_bits(), ba.p_value.to_bits());
            assert_eq!((ab.b, ab.c), (ba.c, ba.b));
        }
    }

    #[test]
    fn mcnemar_length_mismatch() {
        assert!(matches!(
            mcnemar(&[true], &[true, false]),
            Err(AlignError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn alpha_perfect_agreement_is_one() {
        let items: Vec<Vec<Option<&str>>> = (0..6)
            .map(|i| vec![Some(if i % 2 == 0 { "A" } else { "B" }); 3])
            .collect();
        let alpha = krippendorff_alpha(&items).unwrap();
        assert!((alpha - 1.0).abs() < 1e-12);
    }

    #[test]
    fn alpha_systematic_disagreement_two_categories() {
        // Two annotators voting (A, B) on all four items. The finite-sample
        // coincidence formulation gives exactly -0.75 here (the -1 intuition
        // is the large-sample limit, checked below).
        let items: Vec<Vec<Option<&str>>> =
            (0..4).map(|_| vec![Some("A"), Some("B")]).collect();
        let alpha = krippendorff_alpha(&items).unwrap();
        assert!((alpha - (-0.75)).abs() < 1e-12, "got {alpha}");

        let many: Vec<Vec<Option<&str>>> =
            (0..1000).map(|_| vec![Some("A"), Some("B")]).collect();
        let alpha = krippendorff_alpha(&many).unwrap();
        assert!((alpha - (-1.0)).abs() < 0.01, "got {alpha}");
    }

    /// Independent oracle: direct enumeration over all ordered rating pairs
    /// per unit, with textbook normalizations, sharing no code with the
    /// implementation above.
    fn alpha_oracle(items: &[Vec<Option<u8>>]) -> Option<f64> {
        let mut pairable_units: Vec<Vec<u8>> = Vec::new();
        for row in items {
            let vals: Vec<u8> = row.iter().flatten().copied().collect();
            if vals.len() >= 2 {
                pairable_units.push(vals);
            }
        }
        let n: f64 = pairable_units.iter().map(|u| u.len() as f64).sum();
        if n < 2.0 {
            return None;
        }
        // Observed disagreement.
        let mut d_o = 0.0;
        for unit in &pairable_units {
            let m = unit.len() as f64;
            let mut disagreements = 0.0;
            for (i, a) in unit.iter().enumerate() {
                for (j, b) in unit.iter().enumerate() {
                    if i != j && a != b {
                        disagreements += 1.0;
                    }
                }
            }
            d_o += disagreements / (m - 1.0);
        }
        d_o /= n;
        // Expected disagreement from global category totals.
        let mut totals: BTreeMap<u8, f64> = BTreeMap::new();
        for unit in &pairable_units {
            for &v in unit {
                *totals.entry(v).or_insert(0.0) += 1.0;
            }
        }
        let mut d_e = 0.0;
        for (&ca, &na) in &totals {
            for (&cb, &nb) in &totals {
                if ca != cb {
                    d_e += na * nb;
                }
            }
        }
        d_e /= n * (n - 1.0);
        if d_e == 0.0 {
            return Some(1.0);
        }
        Some(1.0 - d_o / d_e)
    }

    #[test]
    fn alpha_matches_independent_oracle_on_random_fixtures() {
        use crate::util::SplitMix64;
        let mut rng = SplitMix64::new(0xa1fa);
        for _ in 0..100 {
            let units = 2 + rng.next_below(12) as usize;
            let annotators = 2 + rng.next_below(4) as usize;
            let categories = 2 + rng.next_below(3) as u8;
            let items: Vec<Vec<Option<u8>>> = (0..units)
                .map(|_| {
                    (0..annotators)
                        .map(|_| {
                            (rng.next_below(5) != 0)
                                .then(|| rng.next_below(u64::from(categories)) as u8)
                        })
                        .collect()
                })
                .collect();
            match (krippendorff_alpha(&items), alpha_oracle(&items)) {
                (Ok(got), Some(want)) => {
                    assert!((got - want).abs() < 1e-9, "got {got}, oracle {want}")
                }
                (Err(AlignError::InsufficientData), None) => {}
                (got, want) => panic!("divergence: {got:?} vs {want:?}"),
            }
        }
    }

    #[test]
    fn alpha_insufficient_data() {
        let items: Vec<Vec<Option<&str>>> = vec![vec![Some("A"), None], vec![None, Some("B")]];
        assert_eq!(krippendorff_alpha(&items), Err(AlignError::InsufficientData));
    }

    #[test]
    fn alpha_single_category_is_one() {
        let items: Vec<Vec<Option<&str>>> = (0..4).map(|_| vec![Some("A"), Some("A")]).collect();
        assert_eq!(krippendorff_alpha(&items).unwrap(), 1.0);
    }

    fn expression_only_fixture() -> Vec<CpaAlignmentPair> {
        // Count and posture identical across both sides; expression decides.
        (0..12)
            .map(|i| {
                let winner_first = i % 2 == 0;
                let (ea, eb) = if winner_first { (0.9, 0.2) } else { (0.2, 0.9) };
                CpaAlignmentPair {
                    subs_a: [0.5, 0.5, ea],
                    subs_b: [0.5, 0.5, eb],
                    human_choice: if winner_first { Choice::A } else { Choice::B },
                }
            })
            .collect()
    }

    #[test]
    fn tuner_finds_pure_expression_weighting() {
        let tuned = tune_cpa_weights(&expression_only_fixture()).unwrap();
        assert!(!tuned.no_signal);
        assert_eq!(tuned.accuracy, 1.0);
        assert!((tuned.weights.expression - 1.0).abs() < 1e-12);
        assert!(tuned.weights.count.abs() < 1e-12);
        assert!(tuned.weights.posture.abs() < 1e-12);
    }

    #[test]
    fn identical_subscores_are_no_signal() {
        let pairs: Vec<CpaAlignmentPair> = (0..8)
            .map(|i| CpaAlignmentPair {
                subs_a: [0.4, 0.6, 0.5],
                subs_b: [0.4, 0.6, 0.5],
                human_choice: if i % 2 == 0 { Choice::A } else { Choice::B },
            })
            .collect();
        let tuned = tune_cpa_weights(&pairs).unwrap();
        assert!(tuned.no_signal);
        assert_eq!(tuned.weights, CpaWeights::default());
    }

    #[test]
    fn tuned_weights_live_on_the_simplex() {
        use crate::util::SplitMix64;
        let mut rng = SplitMix64::new(0x51e);
        for _ in 0..20 {
            let pairs: Vec<CpaAlignmentPair> = (0..10)
                .map(|_| CpaAlignmentPair {
                    subs_a: [rng.next_f64(), rng.next_f64(), rng.next_f64()],
                    subs_b: [rng.next_f64(), rng.next_f64(), rng.next_f64()],
                    human_choice: if rng.next_below(2) == 0 { Choice::A } else { Choice::B },
                })
                .collect();
            let tuned = tune_cpa_weights(&pairs).unwrap();
            let w = tuned.weights;
            assert!(w.count >= 0.0 && w.posture >= 0.0 && w.expression >= 0.0);
            assert!(math::abs(w.count + w.posture + w.expression - 1.0) <= 1e-9);

            // Never worse than the default weighting.
            let d = CpaWeights::default();
            let default_acc = accuracy_for(&pairs, d.count, d.posture, d.expression).unwrap();
            assert!(tuned.accuracy >= default_acc - 1e-12);
        }
    }

    #[test]
    fn tuner_rejects_all_tie_fixtures() {
        let pairs = vec![CpaAlignmentPair {
            subs_a: [0.1, 0.2, 0.3],
            subs_b: [0.3, 0.2, 0.1],
            human_choice: Choice::Tie,
        }];
        assert_eq!(tune_cpa_weights(&pairs), Err(AlignError::AllTies));
    }
}
