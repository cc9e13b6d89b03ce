//! Deterministic synthetic feature backend.
//!
//! Scenes are declared as fixtures (ground-truth text, objects with depths,
//! shadow geometry, person labels, seeded embeddings, raw coherence cues) and
//! fabricated into [`FeatureBundle`]s as a pure function of the fixture and
//! the image reference. The same backend can also derive a scene procedurally
//! from the image id's hash, so whole pipelines run offline with zero model
//! calls and bit-identical output across runs and platforms.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::features::{
    decode_image_dims, Capability, CapabilityResult, CapabilitySet, DepthMap, EmbeddingSpace,
    EmbeddingVector, ExtractError, ExpressionLabel, FeatureBackend, FeatureBundle, GcCues,
    ImageRef, ObjectInstance, OcrResult, OcrToken, PersonAttributes, PostureLabel, ShadowRegion,
    TextEmbedder,
};
use crate::geometry::{Mask, Rect};
use crate::math;
use crate::util::{fnv64, SplitMix64};

pub const EMBEDDING_DIM: usize = 16;

/// Declarative scene description for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFixture {
    pub id: String,
    pub width: u32,
    pub height: u32,
    #[serde(default = "default_background_depth")]
    pub background_depth: f64,
    #[serde(default)]
    pub ocr_text: Option<String>,
    #[serde(default = "default_confidence")]
    pub ocr_confidence: f64,
    #[serde(default)]
    pub objects: Vec<FixtureObject>,
    #[serde(default)]
    pub shadows: Vec<FixtureShadow>,
    #[serde(default)]
    pub persons: Vec<FixturePerson>,
    #[serde(default)]
    pub embeddings: Vec<FixtureEmbedding>,
    #[serde(default)]
    pub gc_cues: Option<GcCues>,
    /// Capability tokens to report as failed extractions, for exercising
    /// error paths (e.g. `["depth"]`).
    #[serde(default)]
    pub fail: Vec<String>,
}

fn default_background_depth() -> f64 {
    10.0
}

fn default_confidence() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureObject {
    pub label: String,
    pub rect: Rect,
    pub depth: f64,
    /// Depth painted where this object's pixels overlap earlier objects;
    /// defaults to `depth`. Lets fixtures stage interpenetrations.
    #[serde(default)]
    pub overlap_depth: Option<f64>,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureShadow {
    /// Index of the casting object.
    pub object: usize,
    /// Direction the shadow extends in pixel coordinates (x right, y down).
    pub direction: (f64, f64),
    /// Shadow length in pixels, measured from the object's base.
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixturePerson {
    pub rect: Rect,
    pub posture: PostureLabel,
    pub expression: ExpressionLabel,
    #[serde(default = "default_confidence")]
    pub posture_confidence: f64,
    #[serde(default = "default_confidence")]
    pub expression_confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureEmbedding {
    pub key: String,
    pub space: EmbeddingSpace,
    /// Explicit seed for the fabricated vector.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Alternatively, pin the vector to what [`SyntheticBackend::embed_text`]
    /// produces for this text (cosine 1 with the embedded prompt).
    #[serde(default)]
    pub text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvalidFixture {
    pub scene: String,
    pub reason: String,
}

impl InvalidFixture {
    fn new(scene: &str, reason: impl Into<String>) -> Self {
        Self {
            scene: scene.to_string(),
            reason: reason.into(),
        }
    }
}

impl fmt::Display for InvalidFixture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid fixture `{}`: {}", self.scene, self.reason)
    }
}

impl core::error::Error for InvalidFixture {}

impl SceneFixture {
    pub fn validate(&self) -> Result<(), InvalidFixture> {
        let err = |reason: String| InvalidFixture::new(&self.id, reason);
        if self.id.is_empty() {
            return Err(InvalidFixture::new("<unnamed>", "scene id is empty"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(err("zero image dimensions".into()));
        }
        if !self.background_depth.is_finite() {
            return Err(err("non-finite background depth".into()));
        }
        if !(0.0..=1.0).contains(&self.ocr_confidence) {
            return Err(err("ocr confidence outside [0, 1]".into()));
        }
        let frame = Rect::new(0, 0, self.width, self.height);
        for (i, o) in self.objects.iter().enumerate() {
            if o.rect.is_empty() || o.rect.right() > frame.right() || o.rect.bottom() > frame.bottom()
            {
                return Err(err(alloc::format!("object {i} rect out of bounds")));
            }
            if !o.depth.is_finite() || o.overlap_depth.is_some_and(|d| !d.is_finite()) {
                return Err(err(alloc::format!("object {i} depth not finite")));
            }
            if !(0.0..=1.0).contains(&o.confidence) {
                return Err(err(alloc::format!("object {i} confidence outside [0, 1]")));
            }
        }
        for (i, s) in self.shadows.iter().enumerate() {
            if s.object >= self.objects.len() {
                return Err(err(alloc::format!("shadow {i} anchors unknown object")));
            }
            if s.length <= 0.0 || !s.length.is_finite() {
                return Err(err(alloc::format!("shadow {i} has non-positive length")));
            }
            if math::hypot(s.direction.0, s.direction.1) <= 1e-9 {
                return Err(err(alloc::format!("shadow {i} has zero direction")));
            }
        }
        for (i, p) in self.persons.iter().enumerate() {
            if p.rect.is_empty() || p.rect.right() > frame.right() || p.rect.bottom() > frame.bottom()
            {
                return Err(err(alloc::format!("person {i} rect out of bounds")));
            }
            if !(0.0..=1.0).contains(&p.posture_confidence)
                || !(0.0..=1.0).contains(&p.expression_confidence)
            {
                return Err(err(alloc::format!("person {i} confidence outside [0, 1]")));
            }
        }
        for (i, e) in self.embeddings.iter().enumerate() {
            if e.key.is_empty() {
                return Err(err(alloc::format!("embedding {i} has empty key")));
            }
            if e.seed.is_none() && e.text.is_none() {
                return Err(err(alloc::format!("embedding {i} needs a seed or a text")));
            }
        }
        if let Some(cues) = &self.gc_cues {
            if let Some(a) = cues.anomaly_score {
                if !(0.0..=1.0).contains(&a) {
                    return Err(err("anomaly score outside [0, 1]".into()));
                }
            }
        }
        for token in &self.fail {
            if !Capability::ALL.iter().any(|c| c.token() == token) {
                return Err(err(alloc::format!("unknown capability `{token}` in fail list")));
            }
        }
        Ok(())
    }
}

/// Fabricated embedding: unit-ish vector derived entirely from a seed.
pub fn vector_from_seed(seed: u64, space: EmbeddingSpace) -> EmbeddingVector {
    let mut rng = SplitMix64::new(seed);
    let mut values: Vec<f64> = (0..EMBEDDING_DIM)
        .map(|_| rng.next_range(-1.0, 1.0))
        .collect();
    let norm = math::sqrt(values.iter().map(|v| v * v).sum());
    if norm <= 1e-9 {
        values[0] = 1.0;
    } else {
        for v in &mut values {
            *v /= norm;
        }
    }
    EmbeddingVector::new(values, space)
}

/// The deterministic backend itself: explicit fixtures by id, optionally
/// falling back to a procedurally derived scene for unknown ids.
#[derive(Debug, Clone)]
pub struct SyntheticBackend {
    scenes: BTreeMap<String, SceneFixture>,
    procedural_fallback: bool,
}

impl Default for SyntheticBackend {
    fn default() -> Self {
        Self {
            scenes: BTreeMap::new(),
            procedural_fallback: true,
        }
    }
}

impl SyntheticBackend {
    /// Backend with no fixtures that derives every scene procedurally.
    pub fn procedural() -> Self {
        Self::default()
    }

    pub fn from_fixtures(fixtures: Vec<SceneFixture>) -> Result<Self, InvalidFixture> {
        let mut scenes = BTreeMap::new();
        for fixture in fixtures {
            fixture.validate()?;
            if scenes.contains_key(&fixture.id) {
                return Err(InvalidFixture::new(&fixture.id, "duplicate scene id"));
            }
            scenes.insert(fixture.id.clone(), fixture);
        }
        Ok(Self {
            scenes,
            procedural_fallback: true,
        })
    }

    pub fn with_procedural_fallback(mut self, enabled: bool) -> Self {
        self.procedural_fallback = enabled;
        self
    }

    pub fn scene(&self, id: &str) -> Option<&SceneFixture> {
        self.scenes.get(id)
    }

    fn resolve(&self, image: &ImageRef) -> Result<SceneFixture, ExtractError> {
        match image {
            ImageRef::Id(id) => {
                if let Some(scene) = self.scenes.get(id) {
                    Ok(scene.clone())
                } else if self.procedural_fallback {
                    Ok(derive_scene(fnv64(id.as_bytes()), 64, 64))
                } else {
                    Err(ExtractError::UnknownImage(id.clone()))
                }
            }
            ImageRef::Bytes(bytes) => {
                let (w, h) = decode_image_dims(bytes)?;
                Ok(derive_scene(fnv64(bytes), w, h))
            }
        }
    }
}

impl FeatureBackend for SyntheticBackend {
    fn extract(&self, image: &ImageRef, needs: CapabilitySet) -> Result<FeatureBundle, ExtractError> {
        let scene = self.resolve(image)?;
        Ok(bundle_from_scene(&scene, needs))
    }
}

impl TextEmbedder for SyntheticBackend {
    fn embed_text(&self, text: &str) -> EmbeddingVector {
        let mut key: Vec<u8> = b"text-embed:".to_vec();
        key.extend_from_slice(text.as_bytes());
        vector_from_seed(fnv64(&key), EmbeddingSpace::JointTextImage)
    }
}

/// Fabricate the bundle for a validated scene. Pure: identical inputs give
/// bit-identical outputs.
pub fn bundle_from_scene(scene: &SceneFixture, needs: CapabilitySet) -> FeatureBundle {
    let mut bundle = FeatureBundle::default();
    let failed =
        |cap: Capability| -> bool { scene.fail.iter().any(|t| t == cap.token()) };

    if needs.contains(Capability::Ocr) {
        bundle.ocr = if failed(Capability::Ocr) {
            CapabilityResult::Failed("fixture marks ocr as failed".into())
        } else {
            CapabilityResult::Ready(build_ocr(scene))
        };
    }
    if needs.contains(Capability::Objects) {
        bundle.objects = if failed(Capability::Objects) {
            CapabilityResult::Failed("fixture marks objects as failed".into())
        } else {
            CapabilityResult::Ready(build_objects(scene))
        };
    }
    if needs.contains(Capability::Depth) {
        bundle.depth = if failed(Capability::Depth) {
            CapabilityResult::Failed("fixture marks depth as failed".into())
        } else {
            CapabilityResult::Ready(build_depth(scene))
        };
    }
    if needs.contains(Capability::Shadows) {
        bundle.shadows = if failed(Capability::Shadows) {
            CapabilityResult::Failed("fixture marks shadows as failed".into())
        } else {
            CapabilityResult::Ready(build_shadows(scene))
        };
    }
    if needs.contains(Capability::Embeddings) {
        bundle.embeddings = if failed(Capability::Embeddings) {
            CapabilityResult::Failed("fixture marks embeddings as failed".into())
        } else {
            CapabilityResult::Ready(build_embeddings(scene))
        };
    }
    if needs.contains(Capability::Persons) {
        bundle.persons = if failed(Capability::Persons) {
            CapabilityResult::Failed("fixture marks persons as failed".into())
        } else {
            CapabilityResult::Ready(build_persons(scene))
        };
    }
    if needs.contains(Capability::GcCues) {
        bundle.gc_cues = if failed(Capability::GcCues) {
            CapabilityResult::Failed("fixture marks gc_cues as failed".into())
        } else {
            CapabilityResult::Ready(scene.gc_cues.unwrap_or_default())
        };
    }
    bundle
}

fn build_ocr(scene: &SceneFixture) -> OcrResult {
    let Some(text) = &scene.ocr_text else {
        return OcrResult::empty();
    };
    let mut tokens = Vec::new();
    let mut x = 2u32;
    for word in text.split_whitespace() {
        let w = (word.chars().count() as u32 * 3).max(3);
        tokens.push(OcrToken {
            text: word.to_string(),
            confidence: scene.ocr_confidence,
            bbox: Rect::new(x.min(scene.width.saturating_sub(1)), 2, w, 4),
        });
        x = x.saturating_add(w + 2);
    }
    OcrResult::from_tokens(tokens).expect("validated fixture confidence")
}

fn build_objects(scene: &SceneFixture) -> Vec<ObjectInstance> {
    scene
        .objects
        .iter()
        .map(|o| {
            let mask = Mask::from_rect(scene.width, scene.height, o.rect);
            ObjectInstance::from_mask(&o.label, mask, o.confidence)
                .expect("validated fixture rect is in-frame and nonempty")
        })
        .collect()
}

fn build_depth(scene: &SceneFixture) -> DepthMap {
    let mut depth = DepthMap::filled(scene.width, scene.height, scene.background_depth);
    let mut covered = Mask::empty(scene.width, scene.height);
    for o in &scene.objects {
        for row in o.rect.y..o.rect.bottom().min(scene.height) {
            for col in o.rect.x..o.rect.right().min(scene.width) {
                let value = if covered.get(col, row) {
                    o.overlap_depth.unwrap_or(o.depth)
                } else {
                    o.depth
                };
                depth.set(col, row, value);
                covered.set(col, row, true);
            }
        }
    }
    depth
}

fn build_shadows(scene: &SceneFixture) -> Vec<ShadowRegion> {
    scene
        .shadows
        .iter()
        .filter_map(|s| {
            let anchor = &scene.objects[s.object];
            let (bx, by) = anchor.rect.base_point();
            let n = math::hypot(s.direction.0, s.direction.1);
            let (dx, dy) = (s.direction.0 / n, s.direction.1 / n);
            let mut mask = Mask::empty(scene.width, scene.height);
            let steps = math::ceil(s.length) as u32;
            for t in 0..steps {
                let ft = t as f64 + 0.5;
                let px = bx + dx * ft;
                let py = by + dy * ft;
                if px >= 0.0 && py >= 0.0 {
                    mask.set(px as u32, py as u32, true);
                }
            }
            if mask.is_empty() {
                None
            } else {
                Some(ShadowRegion {
                    mask,
                    anchor_object: Some(s.object),
                })
            }
        })
        .collect()
}

fn build_persons(scene: &SceneFixture) -> Vec<PersonAttributes> {
    scene
        .persons
        .iter()
        .map(|p| PersonAttributes {
            bbox: p.rect,
            posture: p.posture,
            expression: p.expression,
            posture_confidence: p.posture_confidence,
            expression_confidence: p.expression_confidence,
        })
        .collect()
}

fn build_embeddings(scene: &SceneFixture) -> BTreeMap<String, EmbeddingVector> {
    scene
        .embeddings
        .iter()
        .map(|e| {
            let seed = match (&e.text, e.seed) {
                (Some(text), _) => {
                    let mut key: Vec<u8> = b"text-embed:".to_vec();
                    key.extend_from_slice(text.as_bytes());
                    fnv64(&key)
                }
                (None, Some(seed)) => seed,
                (None, None) => unreachable!("validated fixture"),
            };
            (e.key.clone(), vector_from_seed(seed, e.space))
        })
        .collect()
}

const LABELS: [&str; 6] = ["box", "ball", "chair", "lamp", "plant", "sign"];
const WORDS: [&str; 8] = [
    "SALE", "OPEN", "NORTH", "RIVER", "CEDAR", "HELLO", "QUIET", "LUMEN",
];

/// Derive a plausible scene purely from a seed. Used when the pipeline asks
/// for an image id that has no explicit fixture.
pub fn derive_scene(seed: u64, width: u32, height: u32) -> SceneFixture {
    let mut rng = SplitMix64::new(seed);
    let mut scene = SceneFixture {
        id: alloc::format!("derived-{seed:016x}"),
        width,
        height,
        background_depth: 10.0,
        ocr_text: None,
        ocr_confidence: 1.0,
        objects: Vec::new(),
        shadows: Vec::new(),
        persons: Vec::new(),
        embeddings: Vec::new(),
        gc_cues: None,
        fail: Vec::new(),
    };

    let word_count = 1 + rng.next_below(3) as usize;
    let words: Vec<&str> = (0..word_count)
        .map(|_| WORDS[rng.next_below(WORDS.len() as u64) as usize])
        .collect();
    scene.ocr_text = Some(words.join(" "));
    scene.ocr_confidence = 0.8 + rng.next_f64() * 0.2;

    if width >= 16 && height >= 16 {
        let object_count = 1 + rng.next_below(3) as u32;
        for i in 0..object_count {
            let w = 4 + (rng.next_below(u64::from(width / 4 - 3))) as u32;
            let h = 4 + (rng.next_below(u64::from(height / 4 - 3))) as u32;
            let x = rng.next_below(u64::from(width - w)) as u32;
            let y = rng.next_below(u64::from((height / 2).saturating_sub(h).max(1))) as u32;
            scene.objects.push(FixtureObject {
                label: LABELS[(i as usize + rng.next_below(3) as usize) % LABELS.len()]
                    .to_string(),
                rect: Rect::new(x, y, w, h),
                depth: 2.0 + rng.next_f64() * 6.0,
                overlap_depth: None,
                confidence: 0.7 + rng.next_f64() * 0.3,
            });
        }
        scene.shadows.push(FixtureShadow {
            object: 0,
            direction: (if rng.next_below(2) == 0 { 1.0 } else { -1.0 }, 0.25),
            length: 3.0 + rng.next_f64() * f64::from(height / 8),
        });
        let person_count = rng.next_below(3) as u32;
        let postures = [
            PostureLabel::Standing,
            PostureLabel::Sitting,
            PostureLabel::Lying,
            PostureLabel::Other,
        ];
        let expressions = [
            ExpressionLabel::Neutral,
            ExpressionLabel::Happy,
            ExpressionLabel::Sad,
            ExpressionLabel::Angry,
            ExpressionLabel::Surprised,
            ExpressionLabel::Other,
        ];
        for i in 0..person_count {
            let w = (width / 8).max(2);
            let h = (height / 3).max(4);
            let x = ((i * width) / 3 + 1).min(width - w);
            let y = (height / 2).min(height - h);
            scene.persons.push(FixturePerson {
                rect: Rect::new(x, y, w, h),
                posture: postures[rng.next_below(postures.len() as u64) as usize],
                expression: expressions[rng.next_below(expressions.len() as u64) as usize],
                posture_confidence: 0.7 + rng.next_f64() * 0.3,
                expression_confidence: 0.7 + rng.next_f64() * 0.3,
            });
        }
    }

    for i in 0..4 {
        scene.embeddings.push(FixtureEmbedding {
            key: alloc::format!("cell_{i}"),
            space: EmbeddingSpace::JointTextImage,
            seed: Some(rng.next_u64()),
            text: None,
        });
    }
    for i in 0..2 {
        scene.embeddings.push(FixtureEmbedding {
            key: alloc::format!("subject_{i}"),
            space: EmbeddingSpace::SelfSupervisedImage,
            seed: Some(rng.next_u64()),
            text: None,
        });
    }

    scene.gc_cues = Some(GcCues {
        normals_dispersion: Some(rng.next_f64() * 1.5),
        curvature_energy: Some(rng.next_f64() * 1.5),
        highlight_breaks: Some(rng.next_below(4) as f64),
        contour_fragmentation: Some(rng.next_f64() * 1.5),
        texture_irregularity: Some(rng.next_f64() * 1.5),
        anomaly_score: Some(rng.next_f64()),
    });

    debug_assert!(scene.validate().is_ok());
    scene
}
