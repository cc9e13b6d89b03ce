//! Feature-extraction contract: the evidence types deterministic metrics
//! consume, the capability-tagged backend trait, and the per-capability
//! result wrapper that keeps "not requested" distinct from "failed".
//!
//! Backends do not implement any vision algorithm here; they adapt whatever
//! produces the evidence (a fixture, a local process, a model server) to
//! these types.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::{Mask, Rect};

/// One OCR token with its confidence and location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrToken {
    pub text: String,
    pub confidence: f64,
    pub bbox: Rect,
}

/// OCR output. `full_text` is always the whitespace-joined token texts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrResult {
    pub full_text: String,
    pub tokens: Vec<OcrToken>,
}

impl OcrResult {
    /// Build from tokens, deriving `full_text` so the join invariant holds.
    /// Confidences outside `[0, 1]` are rejected.
    pub fn from_tokens(tokens: Vec<OcrToken>) -> Result<Self, FeatureError> {
        for t in &tokens {
            if !(0.0..=1.0).contains(&t.confidence) {
                return Err(FeatureError::ConfidenceOutOfRange(t.confidence));
            }
        }
        let full_text = tokens
            .iter()
            .map(|t| t.text.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        Ok(Self { full_text, tokens })
    }

    pub fn empty() -> Self {
        Self {
            full_text: String::new(),
            tokens: Vec::new(),
        }
    }
}

/// One detected object: class label, tight bounding box, binary mask, and
/// segmentation confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub label: String,
    pub bbox: Rect,
    pub mask: Mask,
    pub confidence: f64,
}

impl ObjectInstance {
    /// Build from a mask; the bounding box is computed as the mask's tight
    /// bounds, which keeps the two consistent by construction.
    pub fn from_mask(label: &str, mask: Mask, confidence: f64) -> Result<Self, FeatureError> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(FeatureError::ConfidenceOutOfRange(confidence));
        }
        let bbox = mask.tight_bbox().ok_or(FeatureError::EmptyMask)?;
        Ok(Self {
            label: label.to_string(),
            bbox,
            mask,
            confidence,
        })
    }
}

/// Relative depth raster; larger values are farther from the camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthMap {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: u32, height: u32, values: Vec<f64>) -> Result<Self, FeatureError> {
        if values.len() != (width as usize) * (height as usize) {
            return Err(FeatureError::RasterSizeMismatch);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FeatureError::NonFiniteDepth);
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: u32, height: u32, value: f64) -> Self {
        Self {
            width,
            height,
            values: alloc::vec![value; (width as usize) * (height as usize)],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, col: u32, row: u32) -> f64 {
        self.values[row as usize * self.width as usize + col as usize]
    }

    pub fn set(&mut self, col: u32, row: u32, value: f64) {
        self.values[row as usize * self.width as usize + col as usize] = value;
    }

    /// Mean depth over the given pixel coordinates; `None` for an empty set.
    pub fn mean_over<I: IntoIterator<Item = (u32, u32)>>(&self, pixels: I) -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (c, r) in pixels {
            sum += self.get(c, r);
            n += 1;
        }
        (n > 0).then(|| sum / n as f64)
    }
}

/// A shadow mask, optionally tied to the object that casts it (index into
/// the bundle's object list).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowRegion {
    pub mask: Mask,
    pub anchor_object: Option<usize>,
}

/// Embedding spaces a vector may come from. Coverage scoring uses the joint
/// text-image space; subject-consistency scoring uses the self-supervised
/// image space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingSpace {
    JointTextImage,
    SelfSupervisedImage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub space_tag: EmbeddingSpace,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>, space_tag: EmbeddingSpace) -> Self {
        Self { values, space_tag }
    }

    pub fn norm(&self) -> f64 {
        crate::math::sqrt(self.values.iter().map(|v| v * v).sum())
    }

    /// Cosine similarity; zero-norm inputs yield 0.
    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        let na = self.norm();
        let nb = other.norm();
        if na <= 1e-12 || nb <= 1e-12 || self.values.len() != other.values.len() {
            return 0.0;
        }
        let dot: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum();
        dot / (na * nb)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostureLabel {
    Standing,
    Sitting,
    Lying,
    Other,
}

impl PostureLabel {
    pub fn from_token(s: &str) -> Option<Self> {
        match s {
            "standing" => Some(Self::Standing),
            "sitting" => Some(Self::Sitting),
            "lying" => Some(Self::Lying),
            "other" => Some(Self::Other),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpressionLabel {
    Neutral,
    Happy,
    Sad,
    Angry,
    Surprised,
    Other,
}

impl ExpressionLabel {
    pub fn from_token(s: &str) -> Option<Self> {
        match s {
            "neutral" => Some(Self::Neutral),
            "happy" => Some(Self::Happy),
            "sad" => Some(Self::Sad),
            "angry" => Some(Self::Angry),
            "surprised" => Some(Self::Surprised),
            "other" => Some(Self::Other),
            _ => None,
        }
    }
}

/// Detected person with posture and expression labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonAttributes {
    pub bbox: Rect,
    pub posture: PostureLabel,
    pub expression: ExpressionLabel,
    pub posture_confidence: f64,
    pub expression_confidence: f64,
}

/// Raw geometric-coherence cue measurements, prior to normalization. Any cue
/// a backend cannot produce stays `None` and scoring reports it missing.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GcCues {
    /// Angular dispersion of depth-map surface normals.
    pub normals_dispersion: Option<f64>,
    /// Laplacian curvature energy of the depth map.
    pub curvature_energy: Option<f64>,
    /// Count of unnatural breaks in specular highlights.
    pub highlight_breaks: Option<f64>,
    /// Fragmentation of detected contours.
    pub contour_fragmentation: Option<f64>,
    /// Local-binary-pattern texture irregularity.
    pub texture_irregularity: Option<f64>,
    /// Feature-level anomaly score, already in `[0, 1]`.
    pub anomaly_score: Option<f64>,
}

/// What a metric needs from the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    Ocr,
    Objects,
    Depth,
    Shadows,
    Embeddings,
    Persons,
    GcCues,
}

impl Capability {
    pub const ALL: [Capability; 7] = [
        Capability::Ocr,
        Capability::Objects,
        Capability::Depth,
        Capability::Shadows,
        Capability::Embeddings,
        Capability::Persons,
        Capability::GcCues,
    ];

    pub fn token(&self) -> &'static str {
        match self {
            Capability::Ocr => "ocr",
            Capability::Objects => "objects",
            Capability::Depth => "depth",
            Capability::Shadows => "shadows",
            Capability::Embeddings => "embeddings",
            Capability::Persons => "persons",
            Capability::GcCues => "gc_cues",
        }
    }
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Small capability set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CapabilitySet(u8);

impl CapabilitySet {
    pub const EMPTY: CapabilitySet = CapabilitySet(0);

    pub fn of(caps: &[Capability]) -> Self {
        let mut s = Self::EMPTY;
        for c in caps {
            s = s.with(*c);
        }
        s
    }

    pub fn all() -> Self {
        Self::of(&Capability::ALL)
    }

    pub fn with(self, cap: Capability) -> Self {
        Self(self.0 | (1 << cap as u8))
    }

    pub fn contains(&self, cap: Capability) -> bool {
        self.0 & (1 << cap as u8) != 0
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = Capability> + '_ {
        Capability::ALL.into_iter().filter(|c| self.contains(*c))
    }
}

/// Per-capability extraction outcome. Metrics can tell "nobody asked" apart
/// from "asked and failed".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "status", content = "payload")]
pub enum CapabilityResult<T> {
    #[default]
    NotRequested,
    Ready(T),
    Failed(String),
}

impl<T> CapabilityResult<T> {
    pub fn ready(&self) -> Option<&T> {
        match self {
            CapabilityResult::Ready(t) => Some(t),
            _ => None,
        }
    }

    pub fn failure(&self) -> Option<&str> {
        match self {
            CapabilityResult::Failed(why) => Some(why),
            _ => None,
        }
    }

    pub fn is_requested(&self) -> bool {
        !matches!(self, CapabilityResult::NotRequested)
    }
}

/// Everything extracted from one image. Raster-bearing fields all share the
/// image's dimensions; [`FeatureBundle::validate`] enforces that.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct FeatureBundle {
    pub ocr: CapabilityResult<OcrResult>,
    pub objects: CapabilityResult<Vec<ObjectInstance>>,
    pub depth: CapabilityResult<DepthMap>,
    pub shadows: CapabilityResult<Vec<ShadowRegion>>,
    pub embeddings: CapabilityResult<BTreeMap<String, EmbeddingVector>>,
    pub persons: CapabilityResult<Vec<PersonAttributes>>,
    pub gc_cues: CapabilityResult<GcCues>,
}

impl FeatureBundle {
    /// Check internal consistency: every present raster agrees on dimensions.
    pub fn validate(&self) -> Result<(), FeatureError> {
        let mut dims: Option<(u32, u32)> = None;
        let mut check = |w: u32, h: u32| -> Result<(), FeatureError> {
            match dims {
                None => {
                    dims = Some((w, h));
                    Ok(())
                }
                Some(d) if d == (w, h) => Ok(()),
                Some(_) => Err(FeatureError::RasterSizeMismatch),
            }
        };
        if let Some(objects) = self.objects.ready() {
            for o in objects {
                check(o.mask.width(), o.mask.height())?;
            }
        }
        if let Some(depth) = self.depth.ready() {
            check(depth.width(), depth.height())?;
        }
        if let Some(shadows) = self.shadows.ready() {
            for s in shadows {
                check(s.mask.width(), s.mask.height())?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureError {
    ConfidenceOutOfRange(f64),
    EmptyMask,
    RasterSizeMismatch,
    NonFiniteDepth,
}

impl fmt::Display for FeatureError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureError::ConfidenceOutOfRange(c) => {
                write!(f, "confidence {c} outside [0, 1]")
            }
            FeatureError::EmptyMask => f.write_str("mask has no set pixels"),
            FeatureError::RasterSizeMismatch => f.write_str("raster dimensions disagree"),
            FeatureError::NonFiniteDepth => f.write_str("depth map contains non-finite values"),
        }
    }
}

impl core::error::Error for FeatureError {}

/// Reference to the image being analyzed: either an opaque id a backend can
/// resolve, or raw encoded bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImageRef {
    Id(String),
    Bytes(Vec<u8>),
}

impl ImageRef {
    pub fn id(s: impl Into<String>) -> Self {
        ImageRef::Id(s.into())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExtractError {
    DecodeError(String),
    /// The backend has no way to serve this capability at all (as opposed to
    /// a per-image failure, which is recorded inside the bundle).
    BackendUnavailable(Capability),
    UnknownImage(String),
}

impl fmt::Display for ExtractError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtractError::DecodeError(why) => write!(f, "cannot decode image: {why}"),
            ExtractError::BackendUnavailable(cap) => {
                write!(f, "backend has no provider for capability `{cap}`")
            }
            ExtractError::UnknownImage(id) => write!(f, "no scene registered for image `{id}`"),
        }
    }
}

impl core::error::Error for ExtractError {}

/// A feature extractor. Implementations must populate, or explicitly fail,
/// every requested capability; nothing requested may be silently absent.
pub trait FeatureBackend {
    fn extract(&self, image: &ImageRef, needs: CapabilitySet) -> Result<FeatureBundle, ExtractError>;

    /// Whether concurrent `extract` calls are safe. The orchestrator
    /// serializes calls to non-reentrant backends.
    fn reentrant(&self) -> bool {
        true
    }
}

/// Embeds text into the joint text-image space, for coverage scoring.
pub trait TextEmbedder {
    fn embed_text(&self, text: &str) -> EmbeddingVector;
}

/// Parse the dimensions of a binary PGM (`P5`) or PPM (`P6`) header. This is
/// the only pixel format the desk-scale tooling needs to understand.
pub fn decode_image_dims(bytes: &[u8]) -> Result<(u32, u32), ExtractError> {
    let bad = |why: &str| ExtractError::DecodeError(why.to_string());
    if bytes.len() < 2 || bytes[0] != b'P' || !(bytes[1] == b'5' || bytes[1] == b'6') {
        return Err(bad("expected a binary PGM (P5) or PPM (P6) header"));
    }
    let mut fields: Vec<u32> = Vec::new();
    let mut i = 2usize;
    while fields.len() < 2 && i < bytes.len() {
        match bytes[i] {
            b'#' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            c if c.is_ascii_whitespace() => i += 1,
            c if c.is_ascii_digit() => {
                let mut v: u64 = 0;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    v = v * 10 + u64::from(bytes[i] - b'0');
                    if v > u64::from(u32::MAX) {
                        return Err(bad("dimension overflow"));
                    }
                    i += 1;
                }
                fields.push(v as u32);
            }
            _ => return Err(bad("unexpected byte in header")),
        }
    }
    if fields.len() < 2 || fields[0] == 0 || fields[1] == 0 {
        return Err(bad("missing or zero dimensions"));
    }
    Ok((fields[0], fields[1]))
}

/// Encode a constant-gray PGM image; handy for fixtures and smoke tests.
pub fn encode_gray_pgm(width: u32, height: u32, gray: u8) -> Vec<u8> {
    let mut out = alloc::format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(core::iter::repeat_n(gray, (width as usize) * (height as usize)));
    out
}
