//! Physical-spatial consistency: detect impossible interpenetrations between
//! solid objects from instance masks plus a depth map. No ground truth is
//! needed; the physical prior is that two opaque solids cannot share space.
//!
//! For a pair of objects whose bounding boxes overlap, the conflict ratio
//! compares each object's mean depth inside the overlap region with its mean
//! depth outside it. Objects that keep their depth separation outside the
//! overlap but collapse to the same depth inside it are interpenetrating:
//! the ratio approaches 0.

use crate::features::{DepthMap, FeatureBundle, ObjectInstance};
use crate::geometry::{Mask, Rect};
use crate::math;
use crate::metrics::MetricScore;
use crate::ontology::Aspect;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PscError {
    /// Bounding regions do not overlap, or a mask has no pixels inside the
    /// overlap region.
    EmptyIntersection,
    /// One mask lies entirely inside the overlap region, leaving no exterior
    /// pixels to compare against; the pair is skipped.
    MaskFullyOverlapped,
    EmptyMask,
}

impl core::fmt::Display for PscError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            PscError::EmptyIntersection => f.write_str("masks do not overlap"),
            PscError::MaskFullyOverlapped => {
                f.write_str("a mask has no pixels outside the overlap region")
            }
            PscError::EmptyMask => f.write_str("mask has no pixels"),
        }
    }
}

impl core::error::Error for PscError {}

/// Depth-conflict ratio for one overlapping pair:
/// `C = |d_inter_a - d_inter_b| / (|d_non_a - d_non_b| + epsilon)`.
///
/// The overlap region is the intersection of the two masks' tight bounding
/// boxes; each mean is taken over that object's own mask pixels inside or
/// outside the region. `C` near 0 flags a penetration.
pub fn psc_chaos(
    depth: &DepthMap,
    mask_a: &Mask,
    mask_b: &Mask,
    epsilon: f64,
) -> Result<f64, PscError> {
    let bbox_a = mask_a.tight_bbox().ok_or(PscError::EmptyMask)?;
    let bbox_b = mask_b.tight_bbox().ok_or(PscError::EmptyMask)?;
    let region = bbox_a
        .intersection(&bbox_b)
        .ok_or(PscError::EmptyIntersection)?;
    let split = |mask: &Mask| -> (Option<f64>, Option<f64>) {
        let inter = depth.mean_over(mask.pixels().filter(|&(c, r)| region.contains(c, r)));
        let non = depth.mean_over(mask.pixels().filter(|&(c, r)| !region.contains(c, r)));
        (inter, non)
    };
    let (inter_a, non_a) = split(mask_a);
    let (inter_b, non_b) = split(mask_b);
    let (inter_a, inter_b) = match (inter_a, inter_b) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(PscError::EmptyIntersection),
    };
    let (non_a, non_b) = match (non_a, non_b) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(PscError::MaskFullyOverlapped),
    };
    Ok(math::abs(inter_a - inter_b) / (math::abs(non_a - non_b) + epsilon))
}

fn attached(bbox_a: &Rect, bbox_b: &Rect, region: &Rect, threshold: f64) -> bool {
    // The smaller box largely enclosed by the larger one reads as legitimate
    // contact (a worn tie, a held cup), not a penetration.
    let smaller = if bbox_a.area() <= bbox_b.area() {
        bbox_a
    } else {
        bbox_b
    };
    region.area() as f64 / smaller.area() as f64 >= threshold
}

/// Worst-case weighted plausibility across all overlapping, non-attached
/// object pairs; 1.0 when nothing overlaps.
///
/// Per pair: plausibility `p = min(C, 1)`, weight `w` = product of the two
/// segmentation confidences, contribution `w * p + (1 - w)`. Low-confidence
/// evidence is pulled toward neutral rather than allowed to veto the image.
pub fn psc_score(bundle: &FeatureBundle, epsilon: f64, attachment_threshold: f64) -> MetricScore {
    let Some(objects) = bundle.objects.ready() else {
        return MetricScore::failed(Aspect::Psc, "missing instance masks");
    };
    let Some(depth) = bundle.depth.ready() else {
        return MetricScore::failed(Aspect::Psc, "missing depth map");
    };

    let mut minimum: Option<f64> = None;
    let mut evaluated = 0u32;
    let mut skipped_attached = 0u32;
    let mut skipped_degenerate = 0u32;
    for i in 0..objects.len() {
        for j in (i + 1)..objects.len() {
            let a: &ObjectInstance = &objects[i];
            let b: &ObjectInstance = &objects[j];
            let Some(region) = a.bbox.intersection(&b.bbox) else {
                continue;
            };
            if attached(&a.bbox, &b.bbox, &region, attachment_threshold) {
                skipped_attached += 1;
                continue;
            }
            match psc_chaos(depth, &a.mask, &b.mask, epsilon) {
                Ok(chaos) => {
                    let plausibility = chaos.min(1.0);
                    let weight = a.confidence * b.confidence;
                    let contribution = weight * plausibility + (1.0 - weight);
                    minimum = Some(minimum.map_or(contribution, |m: f64| m.min(contribution)));
                    evaluated += 1;
                }
                Err(PscError::EmptyIntersection) => continue,
                Err(_) => skipped_degenerate += 1,
            }
        }
    }

    MetricScore::ok(Aspect::Psc, minimum.unwrap_or(1.0))
        .with_diagnostic("pairs_evaluated", f64::from(evaluated))
        .with_diagnostic("pairs_attached", f64::from(skipped_attached))
        .with_diagnostic("pairs_degenerate", f64::from(skipped_degenerate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::CapabilityResult;
    use alloc::vec;
    use alloc::vec::Vec;

    const EPS: f64 = 1e-6;

    fn mask_of(pixels: &[(u32, u32)]) -> Mask {
        let mut m = Mask::empty(8, 4);
        for &(c, r) in pixels {
            m.set(c, r, true);
        }
        m
    }

    /// Two masks whose boxes overlap in x in [4, 6), y in [1, 3), with
    /// distinct pixels inside the region.
    fn staged_pair() -> (Mask, Mask) {
        let mut a_pixels: Vec<(u32, u32)> = Vec::new();
        for c in 0..4 {
            for r in 0..3 {
                a_pixels.push((c, r));
            }
        }
        a_pixels.push((4, 1));
        a_pixels.push((5, 1));
        let mut b_pixels: Vec<(u32, u32)> = Vec::new();
        for c in 6..8 {
            for r in 1..4 {
                b_pixels.push((c, r));
            }
        }
        b_pixels.push((4, 2));
        b_pixels.push((5, 2));
        (mask_of(&a_pixels), mask_of(&b_pixels))
    }

    fn depth_where(mask_a: &Mask, a: f64, mask_b: &Mask, b_inside: f64, b_outside: f64) -> DepthMap {
        let region = mask_a
            .tight_bbox()
            .unwrap()
            .intersection(&mask_b.tight_bbox().unwrap())
            .unwrap();
        let mut depth = DepthMap::filled(8, 4, 10.0);
        for (c, r) in mask_a.pixels() {
            depth.set(c, r, a);
        }
        for (c, r) in mask_b.pixels() {
            let v = if region.contains(c, r) { b_inside } else { b_outside };
            depth.set(c, r, v);
        }
        depth
    }

    #[test]
    fn collapsed_depths_inside_overlap_flag_penetration() {
        // Inter means (5, 5), non means (5, 8): C = 0 / (3 + eps).
        let (a, b) = staged_pair();
        let depth = depth_where(&a, 5.0, &b, 5.0, 8.0);
        let c = psc_chaos(&depth, &a, &b, EPS).unwrap();
        assert!(c.abs() < 1e-9, "expected penetration signal, got {c}");
    }

    #[test]
    fn preserved_separation_scores_near_one() {
        // Inter means (5, 8), non means (5, 8): C = 3 / (3 + eps).
        let (a, b) = staged_pair();
        let depth = depth_where(&a, 5.0, &b, 8.0, 8.0);
        let c = psc_chaos(&depth, &a, &b, EPS).unwrap();
        assert!((c - 3.0 / (3.0 + EPS)).abs() < 1e-12);
        assert!((c - 1.0).abs() < 1e-6);
    }

    #[test]
    fn identical_masks_are_fully_overlapped() {
        let (a, _) = staged_pair();
        let depth = DepthMap::filled(8, 4, 1.0);
        assert_eq!(
            psc_chaos(&depth, &a, &a.clone(), EPS),
            Err(PscError::MaskFullyOverlapped)
        );
    }

    #[test]
    fn disjoint_boxes_are_empty_intersection() {
        let a = mask_of(&[(0, 0), (1, 0)]);
        let b = mask_of(&[(6, 3), (7, 3)]);
        let depth = DepthMap::filled(8, 4, 1.0);
        assert_eq!(
            psc_chaos(&depth, &a, &b, EPS),
            Err(PscError::EmptyIntersection)
        );
    }

    fn bundle_of(objects: Vec<ObjectInstance>, depth: DepthMap) -> FeatureBundle {
        let mut bundle = FeatureBundle::default();
        bundle.objects = CapabilityResult::Ready(objects);
        bundle.depth = CapabilityResult::Ready(depth);
        bundle
    }

    #[test]
    fn no_overlaps_scores_one() {
        let a = ObjectInstance::from_mask("a", mask_of(&[(0, 0), (1, 0)]), 1.0).unwrap();
        let b = ObjectInstance::from_mask("b", mask_of(&[(6, 3), (7, 3)]), 1.0).unwrap();
        let score = psc_score(&bundle_of(vec![a, b], DepthMap::filled(8, 4, 1.0)), EPS, 0.9);
        assert_eq!(score.value, Some(1.0));
        assert_eq!(score.diagnostics["pairs_evaluated"], 0.0);
    }

    #[test]
    fn confident_penetration_scores_zero() {
        let (ma, mb) = staged_pair();
        let depth = depth_where(&ma, 5.0, &mb, 5.0, 8.0);
        let a = ObjectInstance::from_mask("a", ma, 1.0).unwrap();
        let b = ObjectInstance::from_mask("b", mb, 1.0).unwrap();
        let score = psc_score(&bundle_of(vec![a, b], depth), EPS, 0.9);
        assert!(score.value.unwrap() < 1e-9);
    }

    #[test]
    fn low_confidence_pulls_toward_neutral() {
        // Same penetration with confidences (0.5, 0.5): 0.25 * 0 + 0.75.
        let (ma, mb) = staged_pair();
        let depth = depth_where(&ma, 5.0, &mb, 5.0, 8.0);
        let a = ObjectInstance::from_mask("a", ma, 0.5).unwrap();
        let b = ObjectInstance::from_mask("b", mb, 0.5).unwrap();
        let score = psc_score(&bundle_of(vec![a, b], depth), EPS, 0.9);
        assert!((score.value.unwrap() - 0.75).abs() < 1e-9);
    }

    #[test]
    fn adding_a_distant_object_changes_nothing() {
        let (ma, mb) = staged_pair();
        let depth = depth_where(&ma, 5.0, &mb, 5.0, 8.0);
        let a = ObjectInstance::from_mask("a", ma, 1.0).unwrap();
        let b = ObjectInstance::from_mask("b", mb, 1.0).unwrap();
        let baseline = psc_score(&bundle_of(vec![a.clone(), b.clone()], depth.clone()), EPS, 0.9);
        let far = ObjectInstance::from_mask("far", mask_of(&[(0, 3)]), 1.0).unwrap();
        let extended = psc_score(&bundle_of(vec![a, b, far], depth), EPS, 0.9);
        assert_eq!(baseline.value, extended.value);
    }

    #[test]
    fn worsening_a_pair_never_raises_the_score() {
        let (ma, mb) = staged_pair();
        let a = ObjectInstance::from_mask("a", ma.clone(), 1.0).unwrap();
        let b = ObjectInstance::from_mask("b", mb.clone(), 1.0).unwrap();
        // Healthy pair first.
        let healthy = depth_where(&ma, 5.0, &mb, 8.0, 8.0);
        let baseline = psc_score(&bundle_of(vec![a.clone(), b.clone()], healthy), EPS, 0.9);
        // Now collapse the pair's interior depths.
        let worse = depth_where(&ma, 5.0, &mb, 5.0, 8.0);
        let degraded = psc_score(&bundle_of(vec![a, b], worse), EPS, 0.9);
        assert!(degraded.value.unwrap() <= baseline.value.unwrap());
    }

    #[test]
    fn enclosed_smaller_object_is_attached_and_skipped() {
        let big = Mask::from_rect(8, 4, Rect::new(0, 0, 6, 4));
        let small = Mask::from_rect(8, 4, Rect::new(2, 1, 2, 2));
        let a = ObjectInstance::from_mask("body", big, 1.0).unwrap();
        let b = ObjectInstance::from_mask("tie", small, 1.0).unwrap();
        let depth = DepthMap::filled(8, 4, 3.0);
        let score = psc_score(&bundle_of(vec![a, b], depth), EPS, 0.9);
        assert_eq!(score.value, Some(1.0));
        assert_eq!(score.diagnostics["pairs_attached"], 1.0);
    }

    #[test]
    fn missing_evidence_is_a_failure() {
        let mut bundle = FeatureBundle::default();
        bundle.objects = CapabilityResult::Ready(vec![]);
        let score = psc_score(&bundle, EPS, 0.9);
        assert!(score.failure.unwrap().contains("depth"));

        let mut bundle = FeatureBundle::default();
        bundle.depth = CapabilityResult::Ready(DepthMap::filled(8, 4, 1.0));
        let score = psc_score(&bundle, EPS, 0.9);
        assert!(score.failure.unwrap().contains("masks"));
    }

    #[test]
    fn range_holds_under_fuzz() {
        use crate::util::SplitMix64;
        let mut rng = SplitMix64::new(0x95c);
        for _ in 0..1000 {
            let n_objects = 1 + rng.next_below(4) as usize;
            let mut objects = Vec::new();
            let mut depth = DepthMap::filled(16, 16, 10.0);
            for k in 0..n_objects {
                let x = rng.next_below(10) as u32;
                let y = rng.next_below(10) as u32;
                let w = 1 + rng.next_below(6) as u32;
                let h = 1 + rng.next_below(6) as u32;
                let mask = Mask::from_rect(16, 16, Rect::new(x, y, w.min(16 - x), h.min(16 - y)));
                let d = rng.next_range(1.0, 9.0);
                for (c, r) in mask.pixels() {
                    depth.set(c, r, d);
                }
                objects.push(
                    ObjectInstance::from_mask(&alloc::format!("o{k}"), mask, rng.next_f64())
                        .unwrap(),
                );
            }
            let score = psc_score(&bundle_of(objects, depth), EPS, 0.9);
            let v = score.value.unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
    }
}
