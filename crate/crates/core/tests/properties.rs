//! Randomized invariants of the mask algebra, the alignment costs, and the
//! metrics, each checked against straight-line dense re-implementations.

use cityloc::camera::wrap_deg;
use cityloc::cost::{best_match, cost_confidence, dice, iou, weighted_mean, DICE_EPSILON};
use cityloc::eval::{recall_at, PoseError, RECALL_THRESHOLDS};
use cityloc::mask::{Mask, MaskSet};
use cityloc_testkit::dense;
use proptest::prelude::*;

fn mask_strategy(max_side: u32) -> impl Strategy<Value = Mask> {
    (1..=max_side, 1..=max_side)
        .prop_flat_map(|(w, h)| {
            (
                Just(w),
                Just(h),
                proptest::collection::vec(proptest::bool::weighted(0.35), (w * h) as usize),
            )
        })
        .prop_map(|(w, h, bits)| Mask::from_dense(w, h, &bits).unwrap())
}

fn mask_pair(max_side: u32) -> impl Strategy<Value = (Mask, Mask)> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(w, h)| {
        let bits = || proptest::collection::vec(proptest::bool::weighted(0.35), (w * h) as usize);
        (bits(), bits()).prop_map(move |(a, b)| {
            (Mask::from_dense(w, h, &a).unwrap(), Mask::from_dense(w, h, &b).unwrap())
        })
    })
}

fn maskset_strategy(w: u32, h: u32, max_masks: usize) -> impl Strategy<Value = MaskSet<f64>> {
    proptest::collection::vec(
        (
            proptest::collection::vec(proptest::bool::weighted(0.3), (w * h) as usize),
            0.01f64..=1.0,
        ),
        0..=max_masks,
    )
    .prop_map(move |entries| {
        let mut set = MaskSet::new(w, h).unwrap();
        for (bits, conf) in entries {
            set.push(Mask::from_dense(w, h, &bits).unwrap(), conf).unwrap();
        }
        set
    })
}

/// Border-as-zero Chebyshev erosion, recomputed the slow way.
fn erode_dense(bits: &[bool], w: usize, h: usize, r: usize) -> Vec<bool> {
    let mut out = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            if x < r || y < r || x + r >= w || y + r >= h {
                continue;
            }
            out[y * w + x] = (y - r..=y + r).all(|yy| (x - r..=x + r).all(|xx| bits[yy * w + xx]));
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rle_round_trips_and_counts(m in mask_strategy(48)) {
        let dense = m.to_dense();
        prop_assert_eq!(&Mask::from_dense(m.width(), m.height(), &dense).unwrap(), &m);
        prop_assert_eq!(m.ones(), dense.iter().filter(|&&b| b).count() as u64);
        let [x0, y0, x1, y1] = m.bbox();
        for (i, &b) in dense.iter().enumerate() {
            let (x, y) = (i as u32 % m.width(), i as u32 / m.width());
            if b {
                prop_assert!(x0 <= x && x < x1 && y0 <= y && y < y1, "bbox excludes a one");
            }
        }
    }

    #[test]
    fn union_matches_dense_or((a, b) in mask_pair(48)) {
        let u = a.union(&b).unwrap();
        let want: Vec<bool> = a.to_dense().iter().zip(b.to_dense()).map(|(&x, y)| x || y).collect();
        prop_assert_eq!(u.to_dense(), want);
        prop_assert_eq!(&a.union(&b).unwrap(), &b.union(&a).unwrap());
        prop_assert_eq!(a.intersection_ones(&b), dense::intersection_dense(&a, &b));
    }

    #[test]
    fn erosion_matches_dense_reference(m in mask_strategy(32), r in 0u32..4) {
        let eroded = m.erode(r);
        let want = erode_dense(&m.to_dense(), m.width() as usize, m.height() as usize, r as usize);
        prop_assert_eq!(eroded.to_dense(), want);
        prop_assert!(eroded.ones() <= m.ones());
    }

    #[test]
    fn components_partition_the_mask(m in mask_strategy(32)) {
        let comps = m.connected_components(1);
        let total: u64 = comps.iter().map(|c| c.ones()).sum();
        prop_assert_eq!(total, m.ones());
        let mut union = Mask::empty(m.width(), m.height()).unwrap();
        for (i, c) in comps.iter().enumerate() {
            for other in &comps[i + 1..] {
                prop_assert_eq!(c.intersection_ones(other), 0, "components overlap");
            }
            union = union.union(c).unwrap();
        }
        prop_assert_eq!(&union, &m);
    }

    #[test]
    fn dice_and_iou_match_dense_oracle((a, b) in mask_pair(48)) {
        let d: f64 = dice(&a, &b, DICE_EPSILON).unwrap();
        prop_assert!((d - dense::dice_dense(&a, &b, DICE_EPSILON)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&d));
        let d_sym: f64 = dice(&b, &a, DICE_EPSILON).unwrap();
        prop_assert_eq!(d, d_sym);
        let j: f64 = iou(&a, &b).unwrap();
        prop_assert!((j - dense::iou_dense(&a, &b)).abs() < 1e-12);
        prop_assert!(j <= d + 1e-12, "IoU exceeds Dice");
    }

    #[test]
    fn best_match_agrees_with_brute_force(
        q_bits in proptest::collection::vec(proptest::bool::weighted(0.35), 24 * 24),
        hyp in maskset_strategy(24, 24, 5),
    ) {
        let q = Mask::from_dense(24, 24, &q_bits).unwrap();
        let (got, got_idx) = best_match(&q, &hyp, DICE_EPSILON).unwrap();
        let (want, want_idx) = dense::best_match_dense(&q, &hyp, DICE_EPSILON);
        prop_assert!((got - want).abs() < 1e-12);
        prop_assert_eq!(got_idx, want_idx);
    }

    #[test]
    fn weighted_mean_normalizes_and_scales(
        pairs in proptest::collection::vec((0.0f64..=1.0, 0.001f64..=10.0), 1..8),
        lambda in 0.001f64..=100.0,
    ) {
        let values: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let weights: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let (total, norm, degenerate) = weighted_mean(&values, &weights);
        prop_assert!(!degenerate);
        prop_assert!((norm.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let expect: f64 = values.iter().zip(&norm).map(|(v, w)| v * w).sum();
        prop_assert!((total - expect).abs() < 1e-9);
        let scaled: Vec<f64> = weights.iter().map(|w| w * lambda).collect();
        let (total2, _, _) = weighted_mean(&values, &scaled);
        prop_assert!((total - total2).abs() < 1e-9, "weight scaling moved the mean");
    }

    #[test]
    fn cost_confidence_matches_dense_and_is_scale_invariant(
        query in maskset_strategy(24, 24, 4),
        hyp in maskset_strategy(24, 24, 4),
        lambda in 0.01f64..=1.0,
    ) {
        let b = cost_confidence(&query, &hyp, DICE_EPSILON).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&b.total));
        prop_assert!((b.total - dense::cost_confidence_dense(&query, &hyp, DICE_EPSILON)).abs() < 1e-9);
        if !b.empty_query {
            let sum: f64 = b.per_query.iter().map(|e| e.weight).sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            let mut scaled = MaskSet::new(query.width, query.height).unwrap();
            for e in &query.masks {
                scaled.push(e.mask.clone(), e.confidence * lambda).unwrap();
            }
            let b2 = cost_confidence(&scaled, &hyp, DICE_EPSILON).unwrap();
            prop_assert!((b.total - b2.total).abs() < 1e-9, "confidence scaling moved the cost");
        }
    }

    #[test]
    fn recall_is_monotone_in_thresholds(
        errors in proptest::collection::vec((0.0f64..8.0, 0.0f64..8.0), 1..40),
    ) {
        let errors: Vec<PoseError<f64>> = errors
            .into_iter()
            .map(|(t, r)| PoseError { translation_m: t, rotation_deg: r })
            .collect();
        let r = recall_at(&errors, &RECALL_THRESHOLDS);
        prop_assert!(r[0] <= r[1] && r[1] <= r[2]);
        prop_assert!(r.iter().all(|&p| (0.0..=100.0).contains(&p)));
    }

    #[test]
    fn wrap_deg_is_periodic_and_bounded(a in -1000.0f64..1000.0, k in -3i32..=3) {
        let w = wrap_deg(a);
        prop_assert!((-180.0..180.0).contains(&w));
        let shifted = wrap_deg(a + 360.0 * k as f64);
        prop_assert!((w - shifted).abs() < 1e-9);
    }
}
