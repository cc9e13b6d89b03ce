//! Lighting integrity: infer the scene's light direction from object-shadow
//! geometry and compare it with the direction the prompt asked for.
//!
//! Geometry conventions (fixed here once, used everywhere):
//! - math frame is x right, y up, z toward the viewer; image rows grow
//!   downward and are flipped on conversion;
//! - per pair, the planar light direction is the vector from the object's
//!   base to the shadow centroid, negated (the light sits opposite the
//!   shadow);
//! - elevation is `atan2(object_height, shadow_length)` with the shadow
//!   length taken as twice the base-to-centroid distance (the centroid of a
//!   cast shadow sits near its midpoint);
//! - the scene direction is the component-wise median over pairs,
//!   renormalized.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::features::{FeatureBundle, ObjectInstance, ShadowRegion};
use crate::geometry::Vec3;
use crate::math;
use crate::metrics::MetricScore;
use crate::ontology::Aspect;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LiError {
    /// No usable object-shadow pair: the metric reports insufficient
    /// evidence rather than guessing.
    NoShadowPairs,
    ZeroVector,
    MissingEvidence(&'static str),
}

impl core::fmt::Display for LiError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            LiError::NoShadowPairs => f.write_str("insufficient evidence: no object-shadow pairs"),
            LiError::ZeroVector => f.write_str("degenerate zero-length direction vector"),
            LiError::MissingEvidence(what) => write!(f, "missing evidence: {what}"),
        }
    }
}

impl core::error::Error for LiError {}

fn pair_direction(object: &ObjectInstance, shadow: &ShadowRegion) -> Option<Vec3> {
    let (bx, by) = object.bbox.base_point();
    let (sx, sy) = shadow.mask.centroid()?;
    let dx = sx - bx;
    let dy_math = -(sy - by);
    let planar = math::hypot(dx, dy_math);
    if planar <= 1e-9 {
        return None;
    }
    // Light azimuth is opposite the shadow's planar direction.
    let ax = -dx / planar;
    let ay = -dy_math / planar;
    let shadow_length = 2.0 * planar;
    let elevation = math::atan2(f64::from(object.bbox.h), shadow_length);
    let (sin_e, cos_e) = (libm::sin(elevation), libm::cos(elevation));
    // Image-up maps to away-from-viewer: z = -ay.
    Some(Vec3::new(cos_e * ax, sin_e, -cos_e * ay))
}

/// Infer the scene light direction from all usable object-shadow pairs.
/// Shadows without an anchor reference are paired with the nearest object
/// base.
pub fn li_infer_direction(bundle: &FeatureBundle) -> Result<Vec3, LiError> {
    let objects = bundle
        .objects
        .ready()
        .ok_or(LiError::MissingEvidence("objects"))?;
    let shadows = bundle
        .shadows
        .ready()
        .ok_or(LiError::MissingEvidence("shadows"))?;
    let mut directions: Vec<Vec3> = Vec::new();
    for shadow in shadows {
        let object = match shadow.anchor_object {
            Some(idx) => objects.get(idx),
            None => nearest_object(objects, shadow),
        };
        if let Some(object) = object {
            if let Some(v) = pair_direction(object, shadow) {
                directions.push(v);
            }
        }
    }
    if directions.is_empty() {
        return Err(LiError::NoShadowPairs);
    }
    let mut xs: Vec<f64> = directions.iter().map(|v| v.x).collect();
    let mut ys: Vec<f64> = directions.iter().map(|v| v.y).collect();
    let mut zs: Vec<f64> = directions.iter().map(|v| v.z).collect();
    let median = Vec3::new(
        math::median(&mut xs),
        math::median(&mut ys),
        math::median(&mut zs),
    );
    median.normalized().ok_or(LiError::ZeroVector)
}

fn nearest_object<'a>(
    objects: &'a [ObjectInstance],
    shadow: &ShadowRegion,
) -> Option<&'a ObjectInstance> {
    let (sx, sy) = shadow.mask.centroid()?;
    objects.iter().min_by(|a, b| {
        let da = dist2(a.bbox.base_point(), (sx, sy));
        let db = dist2(b.bbox.base_point(), (sx, sy));
        da.total_cmp(&db)
    })
}

fn dist2((ax, ay): (f64, f64), (bx, by): (f64, f64)) -> f64 {
    (ax - bx) * (ax - bx) + (ay - by) * (ay - by)
}

/// Normalized angular agreement between the inferred and ground-truth
/// directions: 1 at zero deviation, 0 at 90 degrees or more.
pub fn li_score(v_hat: &Vec3, v_gt: &Vec3) -> Result<MetricScore, LiError> {
    let v_hat = v_hat.normalized().ok_or(LiError::ZeroVector)?;
    let v_gt = v_gt.normalized().ok_or(LiError::ZeroVector)?;
    let angle = v_hat.angle_to(&v_gt);
    let value = math::clamp01(1.0 - angle / (core::f64::consts::PI / 2.0));
    Ok(MetricScore::ok(Aspect::Li, value).with_diagnostic("angle_rad", angle))
}

/// A canonical light-direction phrase paired with its unit vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightAnchor {
    pub phrase: String,
    pub direction: Vec3,
}

impl LightAnchor {
    pub fn validate(&self) -> Result<(), LiError> {
        if !self.direction.is_unit(1e-9) {
            return Err(LiError::ZeroVector);
        }
        Ok(())
    }
}

/// Normalize a phrase for anchor lookup: lowercase, hyphens and underscores
/// become spaces, whitespace runs collapse.
pub fn normalize_phrase(phrase: &str) -> String {
    let mut out = String::new();
    let mut last_space = true;
    for c in phrase.chars() {
        let c = if c == '-' || c == '_' { ' ' } else { c };
        if c.is_whitespace() {
            if !last_space {
                out.push(' ');
            }
            last_space = true;
        } else {
            for lc in c.to_lowercase() {
                out.push(lc);
            }
            last_space = false;
        }
    }
    while out.ends_with(' ') {
        out.pop();
    }
    out
}

/// The default 16-anchor vocabulary: eight compass azimuths at two
/// elevations (30 and 60 degrees). The table is replaceable configuration;
/// only the "upper-left front" entry follows a published phrasing, the rest
/// are this project's naming.
pub fn default_anchors() -> Vec<LightAnchor> {
    const AZIMUTHS: [(&str, f64, f64); 8] = [
        ("front", 0.0, 1.0),
        ("left front", -core::f64::consts::FRAC_1_SQRT_2, core::f64::consts::FRAC_1_SQRT_2),
        ("left", -1.0, 0.0),
        ("left back", -core::f64::consts::FRAC_1_SQRT_2, -core::f64::consts::FRAC_1_SQRT_2),
        ("back", 0.0, -1.0),
        ("right back", core::f64::consts::FRAC_1_SQRT_2, -core::f64::consts::FRAC_1_SQRT_2),
        ("right", 1.0, 0.0),
        ("right front", core::f64::consts::FRAC_1_SQRT_2, core::f64::consts::FRAC_1_SQRT_2),
    ];
    const ELEVATIONS: [(&str, f64); 2] = [("low", 30.0), ("upper", 60.0)];
    let mut anchors = Vec::with_capacity(16);
    for (elev_name, degrees) in ELEVATIONS {
        let rad = degrees * core::f64::consts::PI / 180.0;
        let (sin_e, cos_e) = (libm::sin(rad), libm::cos(rad));
        for (az_name, ax, az) in AZIMUTHS {
            let direction = Vec3::new(cos_e * ax, sin_e, cos_e * az)
                .normalized()
                .expect("anchor directions are nonzero");
            anchors.push(LightAnchor {
                phrase: alloc::format!("light from {elev_name}-{az_name}"),
                direction,
            });
        }
    }
    anchors
}

/// Look up an anchor by phrase, tolerant of hyphenation and case.
pub fn find_anchor<'a>(anchors: &'a [LightAnchor], phrase: &str) -> Option<&'a LightAnchor> {
    let wanted = normalize_phrase(phrase);
    anchors
        .iter()
        .find(|a| normalize_phrase(&a.phrase) == wanted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::CapabilityResult;
    use crate::geometry::{Mask, Rect};
    use alloc::vec;

    /// Object of height 4 standing at (3, 2); shadow strip of length 2 due
    /// +x on the object's bottom row, so base-to-centroid distance is 2 and
    /// the reconstructed shadow length equals the object height.
    fn single_pair_bundle() -> FeatureBundle {
        let mut bundle = FeatureBundle::default();
        let object_mask = Mask::from_rect(16, 16, Rect::new(3, 2, 2, 4));
        let object = ObjectInstance::from_mask("post", object_mask, 1.0).unwrap();
        let mut shadow_mask = Mask::empty(16, 16);
        shadow_mask.set(5, 5, true);
        shadow_mask.set(6, 5, true);
        bundle.objects = CapabilityResult::Ready(vec![object]);
        bundle.shadows = CapabilityResult::Ready(vec![ShadowRegion {
            mask: shadow_mask,
            anchor_object: Some(0),
        }]);
        bundle
    }

    #[test]
    fn hand_geometry_single_pair() {
        // Shadow due +x with shadow length == object height: elevation 45
        // degrees, light pointing from +x back toward the object.
        let v = li_infer_direction(&single_pair_bundle()).unwrap();
        let s = core::f64::consts::FRAC_1_SQRT_2;
        assert!((v.x - (-s)).abs() < 1e-12, "{v}");
        assert!((v.y - s).abs() < 1e-12, "{v}");
        assert!(v.z.abs() < 1e-12, "{v}");
    }

    #[test]
    fn identical_pairs_match_single_pair() {
        let single = li_infer_direction(&single_pair_bundle()).unwrap();
        let mut bundle = single_pair_bundle();
        let shadows = bundle.shadows.ready().unwrap().clone();
        let tripled: Vec<ShadowRegion> = shadows
            .iter()
            .cycle()
            .take(3)
            .cloned()
            .collect();
        bundle.shadows = CapabilityResult::Ready(tripled);
        let v = li_infer_direction(&bundle).unwrap();
        assert!((v.x - single.x).abs() < 1e-12);
        assert!((v.y - single.y).abs() < 1e-12);
        assert!((v.z - single.z).abs() < 1e-12);
    }

    #[test]
    fn median_selects_majority_azimuth() {
        // Two shadows due +x, one due -x: the component-wise median keeps
        // the +x-shadow direction (light from -x side).
        let mut bundle = single_pair_bundle();
        let plus_x = bundle.shadows.ready().unwrap()[0].clone();
        let mut minus_mask = Mask::empty(16, 16);
        minus_mask.set(1, 5, true);
        minus_mask.set(2, 5, true);
        let minus_x = ShadowRegion {
            mask: minus_mask,
            anchor_object: Some(0),
        };
        bundle.shadows =
            CapabilityResult::Ready(vec![plus_x.clone(), plus_x.clone(), minus_x]);
        let v = li_infer_direction(&bundle).unwrap();
        let expected = li_infer_direction(&single_pair_bundle()).unwrap();
        assert!((v.x - expected.x).abs() < 1e-9);
        assert!((v.y - expected.y).abs() < 1e-9);
    }

    #[test]
    fn no_pairs_is_reported() {
        let mut bundle = single_pair_bundle();
        bundle.shadows = CapabilityResult::Ready(vec![]);
        assert_eq!(li_infer_direction(&bundle), Err(LiError::NoShadowPairs));
    }

    #[test]
    fn score_identity_orthogonal_and_thirty_degrees() {
        let up = Vec3::new(0.0, 1.0, 0.0);
        assert_eq!(li_score(&up, &up).unwrap().value, Some(1.0));

        let right = Vec3::new(1.0, 0.0, 0.0);
        assert!((li_score(&up, &right).unwrap().value.unwrap()).abs() < 1e-12);

        let thirty = Vec3::new(libm::sin(core::f64::consts::PI / 6.0), libm::cos(core::f64::consts::PI / 6.0), 0.0);
        let v = li_score(&up, &thirty).unwrap().value.unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn score_clamps_beyond_ninety_degrees() {
        let up = Vec3::new(0.0, 1.0, 0.0);
        let down = Vec3::new(0.0, -1.0, 0.0);
        assert_eq!(li_score(&up, &down).unwrap().value, Some(0.0));
    }

    #[test]
    fn score_is_strictly_decreasing_on_first_quadrant() {
        let gt = Vec3::new(0.0, 1.0, 0.0);
        let mut last = f64::INFINITY;
        for deg in (0..=90).step_by(5) {
            let rad = f64::from(deg) * core::f64::consts::PI / 180.0;
            let v = Vec3::new(libm::sin(rad), libm::cos(rad), 0.0);
            let s = li_score(&v, &gt).unwrap().value.unwrap();
            assert!(s < last || deg == 0, "not decreasing at {deg}");
            last = s;
        }
        assert_eq!(last, 0.0);
    }

    #[test]
    fn zero_vector_is_an_error() {
        let zero = Vec3::new(0.0, 0.0, 0.0);
        let up = Vec3::new(0.0, 1.0, 0.0);
        assert_eq!(li_score(&zero, &up), Err(LiError::ZeroVector));
    }

    #[test]
    fn anchor_table_is_complete_and_unit_norm() {
        let anchors = default_anchors();
        assert_eq!(anchors.len(), 16);
        for a in &anchors {
            a.validate().unwrap();
        }
        let ul = find_anchor(&anchors, "light from upper-left front").unwrap();
        assert!(ul.direction.x < 0.0 && ul.direction.y > 0.0 && ul.direction.z > 0.0);
        // 60-degree elevation.
        assert!((ul.direction.y - libm::sin(core::f64::consts::PI / 3.0)).abs() < 1e-12);
        assert!(find_anchor(&anchors, "LIGHT FROM LOW-RIGHT BACK").is_some());
        assert!(find_anchor(&anchors, "light from nowhere").is_none());
    }

    #[test]
    fn unanchored_shadow_pairs_with_nearest_object() {
        let mut bundle = single_pair_bundle();
        let mut shadows = bundle.shadows.ready().unwrap().clone();
        shadows[0].anchor_object = None;
        bundle.shadows = CapabilityResult::Ready(shadows);
        let v = li_infer_direction(&bundle).unwrap();
        let expected = li_infer_direction(&single_pair_bundle()).unwrap();
        assert!((v.x - expected.x).abs() < 1e-12);
    }
}
