//! Dense-bitmap re-implementations of the mask metrics: every operation
//! materializes full bool images and counts pixels one by one, sidestepping
//! the run-length machinery entirely.

use cityloc::mask::{Mask, MaskSet};

pub fn intersection_dense(a: &Mask, b: &Mask) -> u64 {
    let (da, db) = (a.to_dense(), b.to_dense());
    da.iter().zip(&db).filter(|(x, y)| **x && **y).count() as u64
}

pub fn dice_dense(a: &Mask, b: &Mask, epsilon: f64) -> f64 {
    let inter = intersection_dense(a, b) as f64;
    2.0 * inter / (a.ones() as f64 + b.ones() as f64 + epsilon)
}

pub fn iou_dense(a: &Mask, b: &Mask) -> f64 {
    let inter = intersection_dense(a, b);
    let union = a.ones() + b.ones() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Max-Dice hypothesis for one query mask; ties keep the lowest index.
pub fn best_match_dense(query: &Mask, hyp: &MaskSet<f64>, epsilon: f64) -> (f64, Option<usize>) {
    let mut best = (0.0, None);
    for (i, entry) in hyp.masks.iter().enumerate() {
        let d = dice_dense(query, &entry.mask, epsilon);
        if best.1.is_none() || d > best.0 {
            best = (d, Some(i));
        }
    }
    best
}

/// Confidence-weighted instance cost, recomputed from scratch.
pub fn cost_confidence_dense(query: &MaskSet<f64>, hyp: &MaskSet<f64>, epsilon: f64) -> f64 {
    let total_conf: f64 = query.masks.iter().map(|e| e.confidence).sum();
    if query.masks.is_empty() || total_conf <= 0.0 {
        return 0.0;
    }
    query
        .masks
        .iter()
        .map(|e| best_match_dense(&e.mask, hyp, epsilon).0 * e.confidence / total_conf)
        .sum()
}
