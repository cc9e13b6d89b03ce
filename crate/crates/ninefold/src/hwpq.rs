//! Hierarchical weighted P/N questioning.
//!
//! Abstract aspects are scored by decomposing a prompt into a four-level
//! questionnaire (scene anchors, per-object attributes, interplay and
//! blending, overall impression). Every verifiable node becomes an
//! adversarial pair: a positive question that must hold and a mutually
//! exclusive negative counterpart. A pair scores 1 only on (P=true,
//! N=false), so a model answering "yes" to everything scores 0.
//!
//! The engine runs in two strictly separated phases. Offline, a text-
//! generation client produces each prompt's questionnaire exactly once; the
//! result is cached by prompt content hash and reused identically ever
//! after. Online, a vision-language client answers every question `k` times
//! and majority voting fixes the booleans. Scoring is then a pure weighted
//! sum: level weights sum to 1 across the four levels, question weights sum
//! to 1 within each level.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::features::ImageRef;
use crate::math;
use crate::metrics::MetricScore;
use crate::ontology::Aspect;
use crate::prompt::StructuredPrompt;

pub const LEVEL_COUNT: usize = 4;
pub const MAX_PAIRS_PER_LEVEL: usize = 10;
pub const GENERATION_ATTEMPTS: u32 = 3;
pub const ANSWER_RETRIES: u32 = 2;

/// Display names for the four cognitive levels, L1 to L4.
pub const LEVEL_NAMES: [&str; LEVEL_COUNT] = [
    "Core Bearers",
    "Individual Attribute Adherence",
    "Interplay and Fusion Quality",
    "Overall Impression and Atmosphere",
];

/// Instructions handed to the question-generation client. `{PROMPT}` is
/// replaced with the canonical prompt text.
pub const GENERATION_TEMPLATE: &str = "\
You are designing a verification questionnaire for a text-to-image prompt.
Decompose the prompt into four levels of increasing abstraction:
L1 checks that the entities anchoring the scene exist; L2 checks per-object
attributes (count, color, material, texture, shape, size, orientation);
L3 checks spatial, semantic, and stylistic interplay between elements;
L4 checks the overall impression and atmosphere.
For every verifiable fact emit one pair of mutually exclusive yes/no
questions: a positive question that is true for a faithful image and a
negative question probing the opposite failure. Emit 1 to 10 pairs per
level. Assign level_weight values that sum to 1 across the four levels and
question_weight values that sum to 1 within each level.
Respond with a single JSON object and nothing else, shaped exactly as:
{\"levels\":[{\"name\":\"...\",\"level_weight\":0.25,\"pairs\":[{\"positive\":\"...\",\"negative\":\"...\",\"question_weight\":1.0}]}, ...]}
Prompt: {PROMPT}
";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientError(pub String);

impl fmt::Display for ClientError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "client error: {}", self.0)
    }
}

impl core::error::Error for ClientError {}

/// Text-generation client used in the offline phase.
pub trait QuestionGenerator {
    fn generate(&self, request: &str) -> Result<String, ClientError>;
}

/// Vision-language client used in the online phase. Replies are free text;
/// the engine parses them into booleans.
pub trait BooleanProbe {
    fn answer(&self, image: &ImageRef, question: &str) -> Result<String, ClientError>;
}

#[derive(Debug, Clone, PartialEq)]
pub enum HwpqError {
    /// The generator never produced a parseable, valid questionnaire.
    MalformedGeneration { attempts: u32, last_error: String },
    /// A weight vector deviated from sum 1 by more than the repair
    /// tolerance.
    WeightRepairFailed { which: String, sum: f64 },
    WrongLevelCount(usize),
    EmptyLevel(usize),
    TooManyPairs { level: usize, pairs: usize },
    InvalidPair { level: usize, pair: usize, reason: &'static str },
    InvalidVoteCount(u32),
    AnswererUnavailable(String),
    IncompleteSheet,
}

impl fmt::Display for HwpqError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HwpqError::MalformedGeneration { attempts, last_error } => {
                write!(f, "generation failed after {attempts} attempts: {last_error}")
            }
            HwpqError::WeightRepairFailed { which, sum } => {
                write!(f, "{which} weights sum to {sum}, beyond repair tolerance")
            }
            HwpqError::WrongLevelCount(n) => {
                write!(f, "expected exactly {LEVEL_COUNT} levels, got {n}")
            }
            HwpqError::EmptyLevel(l) => write!(f, "level {} has no question pairs", l + 1),
            HwpqError::TooManyPairs { level, pairs } => write!(
                f,
                "level {} has {pairs} pairs (max {MAX_PAIRS_PER_LEVEL})",
                level + 1
            ),
            HwpqError::InvalidPair { level, pair, reason } => {
                write!(f, "level {} pair {}: {reason}", level + 1, pair + 1)
            }
            HwpqError::InvalidVoteCount(k) => {
                write!(f, "vote count k must be odd and >= 1, got {k}")
            }
            HwpqError::AnswererUnavailable(why) => write!(f, "answerer unavailable: {why}"),
            HwpqError::IncompleteSheet => {
                f.write_str("answer sheet shape does not match the questionnaire")
            }
        }
    }
}

impl core::error::Error for HwpqError {}

/// An adversarial question pair with its intra-level weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnPair {
    pub positive: String,
    pub negative: String,
    pub question_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionnaireLevel {
    #[serde(default)]
    pub name: String,
    pub level_weight: f64,
    pub pairs: Vec<PnPair>,
}

/// A validated four-level questionnaire. Construction repairs weight drift
/// up to the tolerance and rejects anything worse, so a questionnaire in
/// circulation always satisfies both sum-to-one invariants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawQuestionnaire")]
pub struct Questionnaire {
    pub prompt_hash: String,
    levels: Vec<QuestionnaireLevel>,
}

#[derive(Debug, Clone, Deserialize)]
struct RawQuestionnaire {
    #[serde(default)]
    prompt_hash: String,
    levels: Vec<QuestionnaireLevel>,
}

impl TryFrom<RawQuestionnaire> for Questionnaire {
    type Error = HwpqError;

    fn try_from(raw: RawQuestionnaire) -> Result<Self, HwpqError> {
        Questionnaire::from_parts(raw.prompt_hash, raw.levels, DEFAULT_WEIGHT_TOLERANCE)
    }
}

pub const DEFAULT_WEIGHT_TOLERANCE: f64 = 0.05;

fn repair_weights(weights: &mut [f64], tolerance: f64, which: &str) -> Result<(), HwpqError> {
    if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
        return Err(HwpqError::WeightRepairFailed {
            which: which.to_string(),
            sum: f64::NAN,
        });
    }
    let sum: f64 = weights.iter().sum();
    if math::abs(sum - 1.0) > tolerance || sum <= 0.0 {
        return Err(HwpqError::WeightRepairFailed {
            which: which.to_string(),
            sum,
        });
    }
    for w in weights.iter_mut() {
        *w /= sum;
    }
    Ok(())
}

impl Questionnaire {
    /// Validate and weight-repair a questionnaire. Weight vectors off by at
    /// most `tolerance` are renormalized; anything worse is rejected.
    pub fn from_parts(
        prompt_hash: String,
        mut levels: Vec<QuestionnaireLevel>,
        tolerance: f64,
    ) -> Result<Self, HwpqError> {
        if levels.len() != LEVEL_COUNT {
            return Err(HwpqError::WrongLevelCount(levels.len()));
        }
        for (l, level) in levels.iter().enumerate() {
            if level.pairs.is_empty() {
                return Err(HwpqError::EmptyLevel(l));
            }
            if level.pairs.len() > MAX_PAIRS_PER_LEVEL {
                return Err(HwpqError::TooManyPairs {
                    level: l,
                    pairs: level.pairs.len(),
                });
            }
            for (p, pair) in level.pairs.iter().enumerate() {
                if pair.positive.trim().is_empty() || pair.negative.trim().is_empty() {
                    return Err(HwpqError::InvalidPair {
                        level: l,
                        pair: p,
                        reason: "questions must be nonempty",
                    });
                }
                if pair.positive == pair.negative {
                    return Err(HwpqError::InvalidPair {
                        level: l,
                        pair: p,
                        reason: "positive and negative questions must differ",
                    });
                }
            }
        }
        let mut level_weights: Vec<f64> = levels.iter().map(|l| l.level_weight).collect();
        repair_weights(&mut level_weights, tolerance, "level")?;
        for (level, w) in levels.iter_mut().zip(&level_weights) {
            level.level_weight = *w;
        }
        for (l, level) in levels.iter_mut().enumerate() {
            let mut weights: Vec<f64> = level.pairs.iter().map(|p| p.question_weight).collect();
            repair_weights(
                &mut weights,
                tolerance,
                &alloc::format!("level {} question", l + 1),
            )?;
            for (pair, w) in level.pairs.iter_mut().zip(&weights) {
                pair.question_weight = *w;
            }
        }
        Ok(Self { prompt_hash, levels })
    }

    pub fn levels(&self) -> &[QuestionnaireLevel] {
        &self.levels
    }

    pub fn pair_count(&self) -> usize {
        self.levels.iter().map(|l| l.pairs.len()).sum()
    }

    /// Both sum-to-one invariants, for audits; construction already enforces
    /// them.
    pub fn check_weights(&self, tol: f64) -> bool {
        let level_sum: f64 = self.levels.iter().map(|l| l.level_weight).sum();
        if math::abs(level_sum - 1.0) > tol {
            return false;
        }
        self.levels.iter().all(|l| {
            let s: f64 = l.pairs.iter().map(|p| p.question_weight).sum();
            math::abs(s - 1.0) <= tol
        })
    }
}

/// Votes and majority outcome for one question pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairVotes {
    pub p_votes: Vec<bool>,
    pub n_votes: Vec<bool>,
    pub p_final: bool,
    pub n_final: bool,
}

impl PairVotes {
    pub fn from_votes(p_votes: Vec<bool>, n_votes: Vec<bool>) -> Self {
        let p_final = majority(&p_votes);
        let n_final = majority(&n_votes);
        Self {
            p_votes,
            n_votes,
            p_final,
            n_final,
        }
    }

    pub fn passes(&self) -> bool {
        self.p_final && !self.n_final
    }
}

/// Majority of a nonempty vote list (odd length by construction).
pub fn majority(votes: &[bool]) -> bool {
    let yes = votes.iter().filter(|&&v| v).count();
    yes * 2 > votes.len()
}

/// All votes for one image against one questionnaire, shaped like the
/// questionnaire's levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerSheet {
    pub levels: Vec<Vec<PairVotes>>,
}

impl AnswerSheet {
    pub fn matches(&self, questionnaire: &Questionnaire) -> bool {
        self.levels.len() == questionnaire.levels.len()
            && self
                .levels
                .iter()
                .zip(&questionnaire.levels)
                .all(|(sheet, level)| sheet.len() == level.pairs.len())
    }
}

/// Parse a client reply into a boolean. Accepts leading true/false/yes/no
/// after trimming punctuation and case.
pub fn parse_bool_reply(reply: &str) -> Option<bool> {
    let cleaned: String = reply
        .trim()
        .chars()
        .take_while(|c| c.is_ascii_alphabetic())
        .flat_map(char::to_lowercase)
        .collect();
    match cleaned.as_str() {
        "true" | "yes" => Some(true),
        "false" | "no" => Some(false),
        _ => None,
    }
}

/// One-time questionnaire generation with caching. The cache key is the
/// prompt's content hash, so changing any parameter regenerates while reruns
/// reuse the identical questionnaire.
pub fn generate_questionnaire(
    prompt: &StructuredPrompt,
    generator: &dyn QuestionGenerator,
    tolerance: f64,
    cache: &mut QuestionnaireCache,
) -> Result<Questionnaire, HwpqError> {
    let key = prompt.content_hash();
    if let Some(cached) = cache.get(&key) {
        return Ok(cached.clone());
    }
    let request = GENERATION_TEMPLATE.replace("{PROMPT}", &prompt.serialize());
    let mut last_error = String::from("generator returned nothing");
    for _ in 0..GENERATION_ATTEMPTS {
        let response = match generator.generate(&request) {
            Ok(text) => text,
            Err(e) => {
                last_error = e.0;
                continue;
            }
        };
        let raw: RawQuestionnaire = match serde_json::from_str(&response) {
            Ok(raw) => raw,
            Err(e) => {
                last_error = alloc::format!("invalid JSON: {e}");
                continue;
            }
        };
        match Questionnaire::from_parts(key.clone(), raw.levels, tolerance) {
            Ok(q) => {
                cache.insert(key, q.clone());
                return Ok(q);
            }
            Err(e @ HwpqError::WeightRepairFailed { .. }) => return Err(e),
            Err(e) => {
                last_error = alloc::format!("{e}");
            }
        }
    }
    Err(HwpqError::MalformedGeneration {
        attempts: GENERATION_ATTEMPTS,
        last_error,
    })
}

/// Content-addressed questionnaire store. Immutable entries: a hash is only
/// ever associated with one questionnaire.
#[derive(Debug, Clone, Default)]
pub struct QuestionnaireCache {
    entries: BTreeMap<String, Questionnaire>,
}

impl QuestionnaireCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, prompt_hash: &str) -> Option<&Questionnaire> {
        self.entries.get(prompt_hash)
    }

    pub fn insert(&mut self, prompt_hash: String, questionnaire: Questionnaire) {
        self.entries.entry(prompt_hash).or_insert(questionnaire);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Questionnaire)> {
        self.entries.iter()
    }
}

fn query_boolean(
    answerer: &dyn BooleanProbe,
    image: &ImageRef,
    question: &str,
) -> Result<bool, HwpqError> {
    for _ in 0..=ANSWER_RETRIES {
        let reply = answerer
            .answer(image, question)
            .map_err(|e| HwpqError::AnswererUnavailable(e.0))?;
        if let Some(b) = parse_bool_reply(&reply) {
            return Ok(b);
        }
    }
    // Persistent non-boolean replies count as a conservative "no".
    Ok(false)
}

/// Online phase: ask every P and N question `k` times independently and fix
/// the final booleans by majority. `k` must be odd so no tie rule is needed.
pub fn administer(
    image: &ImageRef,
    questionnaire: &Questionnaire,
    answerer: &dyn BooleanProbe,
    k: u32,
) -> Result<AnswerSheet, HwpqError> {
    if k == 0 || k.is_multiple_of(2) {
        return Err(HwpqError::InvalidVoteCount(k));
    }
    let mut levels = Vec::with_capacity(questionnaire.levels.len());
    for level in &questionnaire.levels {
        let mut row = Vec::with_capacity(level.pairs.len());
        for pair in &level.pairs {
            let mut p_votes = Vec::with_capacity(k as usize);
            let mut n_votes = Vec::with_capacity(k as usize);
            for _ in 0..k {
                p_votes.push(query_boolean(answerer, image, &pair.positive)?);
            }
            for _ in 0..k {
                n_votes.push(query_boolean(answerer, image, &pair.negative)?);
            }
            row.push(PairVotes::from_votes(p_votes, n_votes));
        }
        levels.push(row);
    }
    Ok(AnswerSheet { levels })
}

/// Bottom-up doubly weighted aggregation. A pair contributes its
/// `level_weight * question_weight` exactly when the votes came out
/// (P=true, N=false).
pub fn score(
    aspect: Aspect,
    questionnaire: &Questionnaire,
    sheet: &AnswerSheet,
) -> Result<MetricScore, HwpqError> {
    if !sheet.matches(questionnaire) {
        return Err(HwpqError::IncompleteSheet);
    }
    let mut value = 0.0;
    let mut passed = 0u32;
    let mut per_level = [0.0f64; LEVEL_COUNT];
    for (l, (level, votes)) in questionnaire.levels.iter().zip(&sheet.levels).enumerate() {
        let mut level_sum = 0.0;
        for (pair, vote) in level.pairs.iter().zip(votes) {
            if vote.passes() {
                level_sum += pair.question_weight;
                passed += 1;
            }
        }
        per_level[l] = level.level_weight * level_sum;
        value += per_level[l];
    }
    let mut result = MetricScore::ok(aspect, value).with_diagnostic("pairs_passed", f64::from(passed));
    for (l, contribution) in per_level.iter().enumerate() {
        result = result.with_diagnostic(&alloc::format!("level_{}", l + 1), *contribution);
    }
    Ok(result)
}
