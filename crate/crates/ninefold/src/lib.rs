//! Role-conditioned evaluation of text-to-image models.
//!
//! The crate is organized around a two-tier scoring design. Physically
//! measurable aspects (rendered text, light direction, composition, character
//! portrayal, spatial plausibility, geometric coherence) are scored by
//! deterministic functions over extracted vision features. Abstract aspects
//! (style fusion, cultural fidelity, material accuracy) are scored by a
//! four-level weighted questionnaire of adversarial positive/negative boolean
//! question pairs, answered by a pluggable vision-language client.
//!
//! Scores land in a sparse role × aspect × model × prompt tensor guarded by a
//! binary relevance mask, from which per-model reports, role-weighted
//! rankings, and robustness drops are derived. The [`align`] module validates
//! any metric against human pairwise preferences.
//!
//! Everything here is `no_std`-compatible (with `alloc`): parsing, scoring,
//! and aggregation are pure functions. File formats, process adapters, and
//! the command-line pipeline live in the companion `ninefold-cli` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod align;
pub mod features;
pub mod geometry;
pub mod hwpq;
pub mod metrics;
pub mod ontology;
pub mod prompt;
pub mod stats;
pub mod synthetic;
pub mod tensor;

mod math;
mod util;

pub use features::{
    Capability, CapabilitySet, CapabilityResult, DepthMap, EmbeddingSpace, EmbeddingVector,
    ExtractError, FeatureBackend, FeatureBundle, GcCues, ImageRef, ObjectInstance, OcrResult,
    PersonAttributes, ShadowRegion, TextEmbedder,
};
pub use geometry::{Mask, Rect, Vec3};
pub use hwpq::{AnswerSheet, PnPair, Questionnaire, QuestionnaireCache, QuestionnaireLevel};
pub use metrics::{CpaWeights, GcConfig, LightAnchor, MetricConfig, MetricScore};
pub use ontology::{Aspect, Ontology, RelevanceMask, Role, RoleId};
pub use prompt::{ParseError, StructuredPrompt};
pub use stats::CorpusStats;
pub use tensor::{CellCoords, EvaluationTensor, ModelReport, SetTag};
pub use util::{fnv64, fnv64_hex, SplitMix64};
