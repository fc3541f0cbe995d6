use crate::error::{Error, Result};
use crate::mask::{Mask, MaskSet};
use crate::scalar::Scalar;

/// Stabilizer added to the Dice denominator so fully empty pairs score 0
/// instead of dividing by zero.
pub const DICE_EPSILON: f64 = 1e-6;

/// Which quantity weights each query mask in the area-weighted cost.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum AreaKind {
    /// Tight bounding-box area of the query mask.
    #[default]
    Bbox,
    /// Set-pixel count of the query mask.
    MaskArea,
}

/// Dice coefficient 2|a.b| / (|a| + |b| + epsilon).
pub fn dice<S: Scalar>(a: &Mask, b: &Mask, epsilon: S) -> Result<S> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(Error::Domain("dice over masks of different dimensions".into()));
    }
    if !(epsilon > S::zero()) {
        return Err(Error::Domain("dice epsilon must be positive".into()));
    }
    let inter = a.intersection_ones(b);
    Ok(S::of(2.0) * S::of_u64(inter) / (S::of_u64(a.ones()) + S::of_u64(b.ones()) + epsilon))
}

/// Intersection over union; defined as 0 when both masks are empty.
pub fn iou<S: Scalar>(a: &Mask, b: &Mask) -> Result<S> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(Error::Domain("iou over masks of different dimensions".into()));
    }
    let inter = a.intersection_ones(b);
    let union = a.ones() + b.ones() - inter;
    if union == 0 {
        return Ok(S::zero());
    }
    Ok(S::of_u64(inter) / S::of_u64(union))
}

/// Best Dice across all hypothesis masks for one query mask. Ties go to the
/// lowest hypothesis index; an empty hypothesis set yields (0, None).
pub fn best_match<S: Scalar>(query: &Mask, hyp: &MaskSet<S>, epsilon: S) -> Result<(S, Option<usize>)> {
    let mut best = S::zero();
    let mut best_idx = None;
    for (k, entry) in hyp.masks.iter().enumerate() {
        // Disjoint bboxes cannot intersect; the Dice value is exactly the
        // zero the full computation would produce.
        let d = if bbox_disjoint(query.bbox(), entry.mask.bbox()) {
            S::of(2.0) * S::zero() / (S::of_u64(query.ones()) + S::of_u64(entry.mask.ones()) + epsilon)
        } else {
            dice(query, &entry.mask, epsilon)?
        };
        if best_idx.is_none() || d > best {
            best = d;
            best_idx = Some(k);
        }
    }
    Ok((best, best_idx))
}

fn bbox_disjoint(a: [u32; 4], b: [u32; 4]) -> bool {
    a[2] <= b[0] || b[2] <= a[0] || a[3] <= b[1] || b[3] <= a[1]
}

/// One query mask's contribution to an instance-alignment cost.
#[derive(Clone, Debug)]
pub struct MatchEntry<S> {
    pub best_dice: S,
    pub matched: Option<usize>,
    /// Normalized weight; the weights of all entries sum to 1 unless the
    /// weight denominator degenerated to 0.
    pub weight: S,
}

#[derive(Clone, Debug)]
pub struct CostBreakdown<S> {
    pub total: S,
    pub per_query: Vec<MatchEntry<S>>,
    /// Set when there was nothing to score: no query masks, or a weight
    /// denominator of zero. The total is 0 in that case.
    pub empty_query: bool,
}

/// Normalized weighted mean sum(w_i * v_i) / sum(w_i); (0, true) when the
/// inputs are empty or the weights sum to zero. This is the shared
/// aggregation of both the confidence- and area-weighted costs.
pub fn weighted_mean<S: Scalar>(values: &[S], raw_weights: &[S]) -> (S, Vec<S>, bool) {
    assert_eq!(values.len(), raw_weights.len());
    let mut sum = S::zero();
    for &w in raw_weights {
        sum = sum + w;
    }
    if values.is_empty() || !(sum > S::zero()) {
        return (S::zero(), vec![S::zero(); values.len()], true);
    }
    let mut total = S::zero();
    let mut weights = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(raw_weights) {
        let wn = w / sum;
        total = total + wn * v;
        weights.push(wn);
    }
    (total, weights, false)
}

fn instance_cost<S: Scalar>(
    query: &MaskSet<S>,
    hyp: &MaskSet<S>,
    epsilon: S,
    raw_weights: Vec<S>,
) -> Result<CostBreakdown<S>> {
    if (query.width, query.height) != (hyp.width, hyp.height) {
        return Err(Error::Domain("query and hypothesis mask dimensions differ".into()));
    }
    let mut dices = Vec::with_capacity(query.len());
    let mut matched = Vec::with_capacity(query.len());
    for entry in &query.masks {
        let (d, m) = best_match(&entry.mask, hyp, epsilon)?;
        dices.push(d);
        matched.push(m);
    }
    let (total, weights, degenerate) = weighted_mean(&dices, &raw_weights);
    let per_query = dices
        .into_iter()
        .zip(matched)
        .zip(weights)
        .map(|((best_dice, matched), weight)| MatchEntry { best_dice, matched, weight })
        .collect();
    Ok(CostBreakdown { total, per_query, empty_query: degenerate })
}

/// Confidence-weighted best-match Dice: each query mask contributes its
/// best Dice against any hypothesis mask, weighted by its normalized
/// confidence.
pub fn cost_confidence<S: Scalar>(query: &MaskSet<S>, hyp: &MaskSet<S>, epsilon: S) -> Result<CostBreakdown<S>> {
    let weights = query.masks.iter().map(|e| e.confidence).collect();
    instance_cost(query, hyp, epsilon, weights)
}

/// Area-weighted best-match Dice; `area_kind` picks bbox area (default) or
/// exact pixel count as the raw weight.
pub fn cost_area<S: Scalar>(
    query: &MaskSet<S>,
    hyp: &MaskSet<S>,
    epsilon: S,
    area_kind: AreaKind,
) -> Result<CostBreakdown<S>> {
    let weights = query
        .masks
        .iter()
        .map(|e| match area_kind {
            AreaKind::Bbox => S::of_u64(e.mask.bbox_area()),
            AreaKind::MaskArea => S::of_u64(e.mask.ones()),
        })
        .collect();
    instance_cost(query, hyp, epsilon, weights)
}

/// Semantic-silhouette baseline: IoU between the union of all query masks
/// and the rendered whole-model silhouette.
pub fn cost_semantic<S: Scalar>(query: &MaskSet<S>, hyp_silhouette: &Mask) -> Result<S> {
    if (query.width, query.height) != (hyp_silhouette.width(), hyp_silhouette.height()) {
        return Err(Error::Domain("query and silhouette dimensions differ".into()));
    }
    iou(&query.union_all()?, hyp_silhouette)
}

/// Collapses a mask set to at most one mask: the union of all members with
/// confidence max over members. An empty input stays empty. Idempotent.
pub fn merge_to_semantic<S: Scalar>(query: &MaskSet<S>) -> Result<MaskSet<S>> {
    let mut out = MaskSet::new(query.width, query.height)?;
    if query.is_empty() {
        return Ok(out);
    }
    let union = query.union_all()?;
    let conf = query
        .masks
        .iter()
        .map(|e| e.confidence)
        .fold(S::zero(), |a, b| a.max(b));
    out.push(union, conf)?;
    Ok(out)
}
