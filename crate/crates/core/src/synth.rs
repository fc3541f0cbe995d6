use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bundle::{Bundle, BundleQuery};
use crate::camera::{Intrinsics, Pose4};
use crate::error::{Error, Result};
use crate::instance::{instancify, InstancedModel, DEFAULT_WELD_TOLERANCE};
use crate::mask::{Mask, MaskSet};
use crate::mesh::Mesh;
use crate::raster::{extract_hypothesis_masks, render_instance_map, DEFAULT_MIN_INSTANCE_AREA};
use crate::scalar::Scalar;

/// Appends the 8 vertices and 12 triangles of an axis-aligned box.
pub fn push_box<S: Scalar>(vertices: &mut Vec<[S; 3]>, faces: &mut Vec<[u32; 3]>, lo: [S; 3], hi: [S; 3]) {
    let base = vertices.len() as u32;
    let [x0, y0, z0] = lo;
    let [x1, y1, z1] = hi;
    vertices.extend([
        [x0, y0, z0],
        [x1, y0, z0],
        [x1, y1, z0],
        [x0, y1, z0],
        [x0, y0, z1],
        [x1, y0, z1],
        [x1, y1, z1],
        [x0, y1, z1],
    ]);
    let quads = [
        [0, 3, 2, 1],     // bottom
        [4, 5, 6, 7],     // top
        [0, 1, 5, 4],     // front (y = y0)
        [1, 2, 6, 5],     // right
        [2, 3, 7, 6],     // back
        [3, 0, 4, 7],     // left
    ];
    for q in quads {
        faces.push([base + q[0], base + q[1], base + q[2]]);
        faces.push([base + q[0], base + q[2], base + q[3]]);
    }
}

/// How building footprints fill the ground plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DensityMode {
    /// Rejection-sampled positions with a minimum pairwise gap.
    Sparse,
    /// Jittered cells of a grid sized so the gap constraint always holds.
    Dense,
    /// An exact lattice of identical prisms: the ambiguity stress case.
    Periodic,
}

/// Parameters of a procedural flat-roofed prism city on the z = 0 plane.
#[derive(Clone, Debug)]
pub struct SceneSpec<S> {
    pub extent: [S; 2],
    pub building_count: usize,
    /// Footprint side lengths are drawn uniformly from this range.
    pub footprint_range: [S; 2],
    pub height_range: [S; 2],
    pub min_spacing: S,
    pub density_mode: DensityMode,
    pub rng_seed: u64,
}

impl<S: Scalar> SceneSpec<S> {
    pub fn validate(&self) -> Result<()> {
        if !(self.extent[0] > S::zero() && self.extent[1] > S::zero()) {
            return Err(Error::Config("scene extent must be positive".into()));
        }
        if self.building_count == 0 {
            return Err(Error::Config("building_count must be >= 1".into()));
        }
        for (name, [lo, hi]) in [("footprint_range", self.footprint_range), ("height_range", self.height_range)] {
            if !(lo > S::zero() && hi >= lo) {
                return Err(Error::Config(format!("{name} must satisfy 0 < min <= max")));
            }
        }
        if !(self.min_spacing >= S::zero()) {
            return Err(Error::Config("min_spacing must be >= 0".into()));
        }
        Ok(())
    }
}

/// A placed building footprint; the scene generator's internal currency.
#[derive(Clone, Copy, Debug)]
struct Footprint {
    cx: f64,
    cy: f64,
    w: f64,
    d: f64,
    h: f64,
}

impl Footprint {
    /// Euclidean gap between two axis-aligned footprints (0 when they
    /// overlap or touch).
    fn gap(&self, other: &Footprint) -> f64 {
        let gx = ((self.cx - other.cx).abs() - (self.w + other.w) * 0.5).max(0.0);
        let gy = ((self.cy - other.cy).abs() - (self.d + other.d) * 0.5).max(0.0);
        (gx * gx + gy * gy).sqrt()
    }

    fn overlaps(&self, other: &Footprint) -> bool {
        (self.cx - other.cx).abs() < (self.w + other.w) * 0.5 && (self.cy - other.cy).abs() < (self.d + other.d) * 0.5
    }
}

fn uniform_in(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    lo + rng.gen::<f64>() * (hi - lo)
}

fn place_footprints<S: Scalar>(spec: &SceneSpec<S>) -> Result<Vec<Footprint>> {
    let [ex, ey] = [spec.extent[0].to_f64_lossy(), spec.extent[1].to_f64_lossy()];
    let [fmin, fmax] = [spec.footprint_range[0].to_f64_lossy(), spec.footprint_range[1].to_f64_lossy()];
    let [hmin, hmax] = [spec.height_range[0].to_f64_lossy(), spec.height_range[1].to_f64_lossy()];
    let spacing = spec.min_spacing.to_f64_lossy();
    let n = spec.building_count;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    match spec.density_mode {
        DensityMode::Sparse => {
            let mut placed: Vec<Footprint> = Vec::with_capacity(n);
            let budget = 1000 * n;
            for _ in 0..budget {
                if placed.len() == n {
                    break;
                }
                let w = uniform_in(&mut rng, fmin, fmax);
                let d = uniform_in(&mut rng, fmin, fmax);
                if w > ex || d > ey {
                    continue;
                }
                let f = Footprint {
                    cx: uniform_in(&mut rng, w * 0.5, ex - w * 0.5),
                    cy: uniform_in(&mut rng, d * 0.5, ey - d * 0.5),
                    w,
                    d,
                    h: uniform_in(&mut rng, hmin, hmax),
                };
                if placed.iter().all(|p| !p.overlaps(&f) && p.gap(&f) >= spacing) {
                    placed.push(f);
                }
            }
            if placed.len() < n {
                return Err(Error::Infeasible(format!(
                    "placed only {} of {n} buildings after {budget} attempts",
                    placed.len()
                )));
            }
            Ok(placed)
        }
        DensityMode::Dense => {
            // Cells of side fmax + spacing with footprints inset by half the
            // spacing guarantee every pairwise gap >= min_spacing.
            let cell = fmax + spacing;
            let (cols, rows) = ((ex / cell) as usize, (ey / cell) as usize);
            if cols * rows < n {
                return Err(Error::Infeasible(format!(
                    "dense grid fits {} cells of {cell} m, need {n}",
                    cols * rows
                )));
            }
            let mut placed = Vec::with_capacity(n);
            for i in 0..n {
                let (cx_cell, cy_cell) = ((i % cols) as f64 * cell, (i / cols) as f64 * cell);
                let w = uniform_in(&mut rng, fmin, fmax);
                let d = uniform_in(&mut rng, fmin, fmax);
                let jx = uniform_in(&mut rng, 0.0, cell - w - spacing);
                let jy = uniform_in(&mut rng, 0.0, cell - d - spacing);
                placed.push(Footprint {
                    cx: cx_cell + spacing * 0.5 + jx + w * 0.5,
                    cy: cy_cell + spacing * 0.5 + jy + d * 0.5,
                    w,
                    d,
                    h: uniform_in(&mut rng, hmin, hmax),
                });
            }
            Ok(placed)
        }
        DensityMode::Periodic => {
            let k = (n as f64).sqrt().round() as usize;
            if k * k != n {
                return Err(Error::Infeasible(format!(
                    "periodic mode needs a square building count, got {n}"
                )));
            }
            let (px, py) = (ex / k as f64, ey / k as f64);
            let side = (fmin + fmax) * 0.5;
            let h = (hmin + hmax) * 0.5;
            if side + spacing > px.min(py) {
                return Err(Error::Infeasible(format!(
                    "lattice pitch {:.3} m cannot hold {side} m prisms with {spacing} m spacing",
                    px.min(py)
                )));
            }
            let mut placed = Vec::with_capacity(n);
            for iy in 0..k {
                for ix in 0..k {
                    placed.push(Footprint {
                        cx: (ix as f64 + 0.5) * px,
                        cy: (iy as f64 + 0.5) * py,
                        w: side,
                        d: side,
                        h,
                    });
                }
            }
            Ok(placed)
        }
    }
}

/// Generates an instanced LoD1-style city: axis-aligned prisms on z = 0 with
/// non-overlapping footprints, deterministic under `SceneSpec::rng_seed`.
pub fn generate_scene<S: Scalar>(spec: &SceneSpec<S>) -> Result<InstancedModel<S>> {
    spec.validate()?;
    let footprints = place_footprints(spec)?;
    let mut vertices = Vec::with_capacity(footprints.len() * 8);
    let mut faces = Vec::with_capacity(footprints.len() * 12);
    for f in &footprints {
        push_box(
            &mut vertices,
            &mut faces,
            [S::of(f.cx - f.w * 0.5), S::of(f.cy - f.d * 0.5), S::zero()],
            [S::of(f.cx + f.w * 0.5), S::of(f.cy + f.d * 0.5), S::of(f.h)],
        );
    }
    instancify(&Mesh::new(vertices, faces)?, DEFAULT_WELD_TOLERANCE)
}

/// Deviations applied to oracle masks, modelling an imperfect segmenter.
/// Applied in a fixed order: drop, erode, merge, then confidence noise.
#[derive(Clone, Debug)]
pub struct Corruption<S> {
    pub drop_prob: S,
    pub boundary_erode_px: u32,
    pub merge_adjacent: bool,
    pub confidence_noise: S,
}

impl<S: Scalar> Default for Corruption<S> {
    fn default() -> Self {
        Corruption {
            drop_prob: S::zero(),
            boundary_erode_px: 0,
            merge_adjacent: false,
            confidence_noise: S::zero(),
        }
    }
}

impl<S: Scalar> Corruption<S> {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("drop_prob", self.drop_prob), ("confidence_noise", self.confidence_noise)] {
            if !(v >= S::zero() && v <= S::one()) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Uniform bounds for the synthetic prior's offset from ground truth.
#[derive(Clone, Debug)]
pub struct PriorOffset<S> {
    pub max_xy: S,
    pub max_z: S,
    pub max_yaw_deg: S,
}

impl<S: Scalar> Default for PriorOffset<S> {
    fn default() -> Self {
        PriorOffset { max_xy: S::zero(), max_z: S::zero(), max_yaw_deg: S::zero() }
    }
}

/// Everything needed to fabricate one query against a scene.
#[derive(Clone, Debug)]
pub struct QuerySpec<S> {
    pub gt_pose: Pose4<S>,
    pub intrinsics: Intrinsics<S>,
    pub corruption: Corruption<S>,
    pub prior_offset: PriorOffset<S>,
    pub rng_seed: u64,
}

/// Merges masks whose tight bboxes touch or overlap, transitively. Output
/// groups keep the order of their first member.
pub(crate) fn merge_touching(masks: Vec<Mask>) -> Vec<Mask> {
    let n = masks.len();
    let mut group: Vec<usize> = (0..n).collect();
    fn root(group: &mut Vec<usize>, mut i: usize) -> usize {
        while group[i] != i {
            group[i] = group[group[i]];
            i = group[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (masks[i].bbox(), masks[j].bbox());
            // Half-open boxes touch when neither is strictly beyond the
            // other on either axis.
            let touch = a[0] <= b[2] && b[0] <= a[2] && a[1] <= b[3] && b[1] <= a[3];
            if touch {
                let (ri, rj) = (root(&mut group, i), root(&mut group, j));
                let (lo, hi) = (ri.min(rj), ri.max(rj));
                group[hi] = lo;
            }
        }
    }
    let mut merged: Vec<(usize, Mask)> = Vec::new();
    for i in 0..n {
        let r = root(&mut group, i);
        match merged.iter_mut().find(|(g, _)| *g == r) {
            Some((_, m)) => *m = m.union(&masks[i]).expect("masks of one query share dimensions"),
            None => merged.push((r, masks[i].clone())),
        }
    }
    merged.into_iter().map(|(_, m)| m).collect()
}

/// Renders ground truth and fabricates the query's mask set, prior, and GT
/// pose. Masks are split per connected component (8-way), then corrupted in
/// the fixed drop/erode/merge/confidence order. Stream-separated RNG makes
/// the prior independent of the corruption settings.
pub fn oracle_query<S: Scalar>(
    model: &InstancedModel<S>,
    qspec: &QuerySpec<S>,
) -> Result<(MaskSet<S>, Pose4<S>, Pose4<S>)> {
    qspec.corruption.validate()?;
    let map = render_instance_map(model, &qspec.intrinsics, &qspec.gt_pose)?;
    let per_id = extract_hypothesis_masks::<S>(&map, DEFAULT_MIN_INSTANCE_AREA);
    let mut parts: Vec<Mask> = Vec::new();
    for entry in &per_id.masks {
        parts.extend(entry.mask.connected_components(DEFAULT_MIN_INSTANCE_AREA));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(qspec.rng_seed);
    rng.set_stream(0);
    let drop_prob = qspec.corruption.drop_prob.to_f64_lossy();
    // One draw per mask regardless of drop_prob, so the retained subset is
    // seed-paired across corruption settings.
    let kept: Vec<Mask> = parts.into_iter().filter(|_| rng.gen::<f64>() >= drop_prob).collect();
    let eroded: Vec<Mask> = kept
        .iter()
        .map(|m| m.erode(qspec.corruption.boundary_erode_px))
        .filter(|m| !m.is_empty())
        .collect();
    let merged = if qspec.corruption.merge_adjacent { merge_touching(eroded) } else { eroded };
    let noise = qspec.corruption.confidence_noise.to_f64_lossy();
    let mut masks = MaskSet::new(qspec.intrinsics.width, qspec.intrinsics.height)?;
    for m in merged {
        let confidence = 1.0 - rng.gen::<f64>() * noise;
        masks.push(m, S::of(confidence))?;
    }

    let mut prior_rng = ChaCha8Rng::seed_from_u64(qspec.rng_seed);
    prior_rng.set_stream(1);
    let sym = |rng: &mut ChaCha8Rng, max: S| S::of((2.0 * rng.gen::<f64>() - 1.0) * max.to_f64_lossy());
    let gt = qspec.gt_pose;
    let prior = Pose4::new(
        gt.x + sym(&mut prior_rng, qspec.prior_offset.max_xy),
        gt.y + sym(&mut prior_rng, qspec.prior_offset.max_xy),
        gt.z + sym(&mut prior_rng, qspec.prior_offset.max_z),
        gt.yaw_deg + sym(&mut prior_rng, qspec.prior_offset.max_yaw_deg),
    )
    .with_attitude(gt.pitch_deg, gt.roll_deg);
    Ok((masks, prior, gt))
}

/// Mixes a per-query seed out of the benchmark seed; distinct for every
/// index and decorrelated between adjacent queries.
pub fn query_seed(base: u64, index: usize) -> u64 {
    splitmix64(base ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Camera placement patterns for benchmark generation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trajectory {
    /// Uniform lattice over the scene, each pose aimed at the scene center
    /// with a seeded jitter.
    Grid,
    /// A smooth piecewise-linear path with bounded turn rate; yaw follows
    /// the direction of travel.
    Sequence,
}

/// Full recipe for a benchmark bundle: scene, trajectory, and the per-query
/// template (whose pose supplies altitude, pitch, and roll).
#[derive(Clone, Debug)]
pub struct BenchmarkSpec<S> {
    pub scene: SceneSpec<S>,
    pub n_queries: usize,
    pub trajectory: Trajectory,
    /// Gap between consecutive sequence poses, and the lattice inset margin.
    pub sequence_step: S,
    pub margin: S,
    pub template: QuerySpec<S>,
}

/// Maximum re-aims of a grid pose that sees no instance at all.
const VISIBILITY_RETRIES: usize = 8;
const GRID_YAW_JITTER_DEG: f64 = 15.0;
const SEQUENCE_MAX_TURN_DEG: f64 = 20.0;

/// Yaw that points the camera's forward ground direction along (dx, dy).
/// Forward is (-sin yaw, +cos yaw) in world xy.
fn yaw_toward(dx: f64, dy: f64) -> f64 {
    (-dx).atan2(dy).to_degrees()
}

/// Builds the whole benchmark in memory; `bundle::write_bundle` persists it.
pub fn build_benchmark<S: Scalar>(spec: &BenchmarkSpec<S>) -> Result<Bundle<S>> {
    if spec.n_queries == 0 {
        return Err(Error::Config("n_queries must be >= 1".into()));
    }
    let model = generate_scene(&spec.scene)?;
    let [ex, ey] = [spec.scene.extent[0].to_f64_lossy(), spec.scene.extent[1].to_f64_lossy()];
    let margin = spec.margin.to_f64_lossy();
    let (cx, cy) = (ex * 0.5, ey * 0.5);
    let template = &spec.template;
    let mut traj_rng = ChaCha8Rng::seed_from_u64(template.rng_seed);
    traj_rng.set_stream(2);

    let mut queries = Vec::with_capacity(spec.n_queries);
    match spec.trajectory {
        Trajectory::Grid => {
            let k = (spec.n_queries as f64).sqrt().ceil() as usize;
            let lattice = |i: usize, extent: f64| -> f64 {
                if k == 1 {
                    extent * 0.5
                } else {
                    margin + (extent - 2.0 * margin) * i as f64 / (k - 1) as f64
                }
            };
            'queries: for q in 0..spec.n_queries {
                let (ix, iy) = (q % k, q / k);
                let (x, y) = (lattice(ix, ex), lattice(iy, ey));
                let aim = yaw_toward(cx - x, cy - y);
                let mut last = None;
                for _ in 0..VISIBILITY_RETRIES {
                    let yaw = aim + (2.0 * traj_rng.gen::<f64>() - 1.0) * GRID_YAW_JITTER_DEG;
                    let gt = Pose4::new(S::of(x), S::of(y), template.gt_pose.z, S::of(yaw))
                        .with_attitude(template.gt_pose.pitch_deg, template.gt_pose.roll_deg);
                    let qspec = QuerySpec { gt_pose: gt, rng_seed: query_seed(template.rng_seed, q), ..template.clone() };
                    let (masks, prior, gt) = oracle_query(&model, &qspec)?;
                    let visible = !masks.is_degenerate();
                    last = Some(BundleQuery { masks, prior, gt, intrinsics: template.intrinsics });
                    if visible {
                        queries.push(last.take().expect("just built"));
                        continue 'queries;
                    }
                }
                queries.push(last.expect("at least one attempt ran"));
            }
        }
        Trajectory::Sequence => {
            let step = spec.sequence_step.to_f64_lossy();
            if !(step > 0.0) {
                return Err(Error::Config("sequence_step must be > 0".into()));
            }
            let (mut x, mut y) = (margin, margin);
            let mut phi = (cy - y).atan2(cx - x);
            for q in 0..spec.n_queries {
                let yaw = yaw_toward(phi.cos(), phi.sin());
                let gt = Pose4::new(S::of(x), S::of(y), template.gt_pose.z, S::of(yaw))
                    .with_attitude(template.gt_pose.pitch_deg, template.gt_pose.roll_deg);
                let qspec = QuerySpec { gt_pose: gt, rng_seed: query_seed(template.rng_seed, q), ..template.clone() };
                let (masks, prior, gt) = oracle_query(&model, &qspec)?;
                queries.push(BundleQuery { masks, prior, gt, intrinsics: template.intrinsics });
                // Advance with a bounded random turn, steering back toward
                // the center whenever the next step would leave the margin.
                phi += (2.0 * traj_rng.gen::<f64>() - 1.0) * SEQUENCE_MAX_TURN_DEG.to_radians();
                let (nx, ny) = (x + step * phi.cos(), y + step * phi.sin());
                if nx < margin || nx > ex - margin || ny < margin || ny > ey - margin {
                    phi = (cy - y).atan2(cx - x);
                }
                x += step * phi.cos();
                y += step * phi.sin();
            }
        }
    }
    Ok(Bundle { model, queries })
}

/// Builds a benchmark and writes it under `dir` in the bundle layout.
pub fn generate_benchmark<S: Scalar>(spec: &BenchmarkSpec<S>, dir: &std::path::Path) -> Result<Bundle<S>> {
    let bundle = build_benchmark(spec)?;
    crate::bundle::write_bundle(&bundle, dir)?;
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::cost_confidence;
    use crate::cost::DICE_EPSILON;

    fn base_spec(mode: DensityMode, count: usize, seed: u64) -> SceneSpec<f64> {
        SceneSpec {
            extent: [400.0, 400.0],
            building_count: count,
            footprint_range: [12.0, 28.0],
            height_range: [10.0, 40.0],
            min_spacing: 5.0,
            density_mode: mode,
            rng_seed: seed,
        }
    }

    /// Recovers per-instance footprints from the generated mesh.
    fn footprints_of(model: &InstancedModel<f64>) -> Vec<[f64; 4]> {
        model
            .instance_ids
            .iter()
            .map(|&id| {
                let mut bb = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
                for (f, face) in model.mesh.faces.iter().enumerate() {
                    if model.face_instance[f] != id {
                        continue;
                    }
                    for &vi in face {
                        let v = model.mesh.vertices[vi as usize];
                        bb[0] = bb[0].min(v[0]);
                        bb[1] = bb[1].min(v[1]);
                        bb[2] = bb[2].max(v[0]);
                        bb[3] = bb[3].max(v[1]);
                    }
                }
                bb
            })
            .collect()
    }

    fn rect_gap(a: [f64; 4], b: [f64; 4]) -> f64 {
        let gx = (b[0] - a[2]).max(a[0] - b[2]).max(0.0);
        let gy = (b[1] - a[3]).max(a[1] - b[3]).max(0.0);
        (gx * gx + gy * gy).sqrt()
    }

    #[test]
    fn single_building_is_one_closed_prism() {
        let model = generate_scene(&base_spec(DensityMode::Sparse, 1, 3)).unwrap();
        assert_eq!(model.instance_count(), 1);
        assert_eq!(model.mesh.faces.len(), 12);
        assert_eq!(model.mesh.vertices.len(), 8);
    }

    #[test]
    fn each_mode_places_exactly_the_requested_count_with_spacing() {
        for (mode, count) in [(DensityMode::Sparse, 40), (DensityMode::Dense, 50), (DensityMode::Periodic, 25)] {
            let model = generate_scene(&base_spec(mode, count, 11)).unwrap();
            assert_eq!(model.instance_count(), count, "{mode:?}");
            let fps = footprints_of(&model);
            for i in 0..fps.len() {
                for j in i + 1..fps.len() {
                    let gap = rect_gap(fps[i], fps[j]);
                    assert!(gap >= 5.0 - 1e-9, "{mode:?}: gap {gap} between {i} and {j}");
                }
            }
        }
    }

    #[test]
    fn periodic_mode_is_an_exact_lattice_of_identical_prisms() {
        let model = generate_scene(&base_spec(DensityMode::Periodic, 25, 0)).unwrap();
        let fps = footprints_of(&model);
        let (w0, d0) = (fps[0][2] - fps[0][0], fps[0][3] - fps[0][1]);
        for f in &fps {
            assert!((f[2] - f[0] - w0).abs() < 1e-12 && (f[3] - f[1] - d0).abs() < 1e-12);
        }
        // Centers form the 5x5 lattice of an 80 m pitch.
        let c0 = ((fps[0][0] + fps[0][2]) * 0.5, (fps[0][1] + fps[0][3]) * 0.5);
        assert_eq!(c0, (40.0, 40.0));
        let c24 = ((fps[24][0] + fps[24][2]) * 0.5, (fps[24][1] + fps[24][3]) * 0.5);
        assert_eq!(c24, (360.0, 360.0));
    }

    #[test]
    fn infeasible_specs_are_rejected() {
        let err = generate_scene(&base_spec(DensityMode::Periodic, 24, 0)).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)), "{err}");
        let mut cramped = base_spec(DensityMode::Sparse, 300, 0);
        cramped.extent = [60.0, 60.0];
        assert!(matches!(generate_scene(&cramped).unwrap_err(), Error::Infeasible(_)));
        let mut dense = base_spec(DensityMode::Dense, 500, 0);
        dense.extent = [100.0, 100.0];
        assert!(matches!(generate_scene(&dense).unwrap_err(), Error::Infeasible(_)));
    }

    #[test]
    fn scene_generation_is_seed_deterministic() {
        let a = generate_scene(&base_spec(DensityMode::Sparse, 30, 42)).unwrap();
        let b = generate_scene(&base_spec(DensityMode::Sparse, 30, 42)).unwrap();
        assert_eq!(a.mesh.vertices, b.mesh.vertices);
        assert_eq!(a.mesh.faces, b.mesh.faces);
        assert_eq!(a.face_instance, b.face_instance);
        let c = generate_scene(&base_spec(DensityMode::Sparse, 30, 43)).unwrap();
        assert_ne!(a.mesh.vertices, c.mesh.vertices);
    }

    fn view_spec(model_extent: f64, seed: u64) -> QuerySpec<f64> {
        // From a corner offset, aimed at the scene center with a wide FoV,
        // so any plausible scene puts buildings in frame.
        let center = model_extent * 0.5;
        let (dx, dy) = (100.0_f64.min(center), 140.0_f64.min(center));
        let yaw = (-dx).atan2(dy).to_degrees();
        QuerySpec {
            gt_pose: Pose4::new(center - dx, center - dy, 110.0, yaw).with_attitude(-45.0, 0.0),
            intrinsics: Intrinsics::new(240.0, 240.0, 160.0, 90.0, 320, 180).unwrap(),
            corruption: Corruption::default(),
            prior_offset: PriorOffset { max_xy: 10.0, max_z: 3.0, max_yaw_deg: 5.0 },
            rng_seed: seed,
        }
    }

    #[test]
    fn zero_corruption_oracle_matches_component_split_extraction() {
        let model = generate_scene(&base_spec(DensityMode::Sparse, 20, 5)).unwrap();
        let qspec = view_spec(400.0, 9);
        let (masks, _, gt) = oracle_query(&model, &qspec).unwrap();
        assert_eq!(gt, qspec.gt_pose);
        assert!(!masks.is_degenerate());
        assert!(masks.len() >= 3, "expected several buildings in frame, got {}", masks.len());
        let map = render_instance_map(&model, &qspec.intrinsics, &qspec.gt_pose).unwrap();
        let mut expect = Vec::new();
        for entry in &extract_hypothesis_masks::<f64>(&map, DEFAULT_MIN_INSTANCE_AREA).masks {
            expect.extend(entry.mask.connected_components(DEFAULT_MIN_INSTANCE_AREA));
        }
        assert_eq!(masks.len(), expect.len());
        for (got, want) in masks.masks.iter().zip(&expect) {
            assert_eq!(&got.mask, want);
            assert_eq!(got.confidence, 1.0);
        }
        // The perfect-alignment fixpoint: costing this query against its own
        // render scores essentially 1.
        let hyp = extract_hypothesis_masks::<f64>(&map, DEFAULT_MIN_INSTANCE_AREA);
        let b = cost_confidence(&masks, &hyp, DICE_EPSILON).unwrap();
        assert!(b.total > 1.0 - 1e-6, "fixpoint cost {}", b.total);
    }

    #[test]
    fn drop_prob_one_empties_the_query() {
        let model = generate_scene(&base_spec(DensityMode::Sparse, 10, 2)).unwrap();
        let mut qspec = view_spec(400.0, 1);
        qspec.corruption.drop_prob = 1.0;
        let (masks, _, _) = oracle_query(&model, &qspec).unwrap();
        assert!(masks.is_degenerate());
        assert!(masks.is_empty());
    }

    #[test]
    fn erosion_shrinks_a_rectangular_blob_arithmetically() {
        // One box at exact nadir projects a w x h rectangle; erode(1) must
        // leave (w-2)(h-2) pixels.
        let mut spec = base_spec(DensityMode::Sparse, 1, 7);
        spec.extent = [60.0, 60.0];
        let model = generate_scene(&spec).unwrap();
        let fp = footprints_of(&model)[0];
        let mut qspec = view_spec(60.0, 3);
        qspec.gt_pose = Pose4::new((fp[0] + fp[2]) * 0.5, (fp[1] + fp[3]) * 0.5, 80.0, 0.0).with_attitude(-90.0, 0.0);
        let (clean, _, _) = oracle_query(&model, &qspec).unwrap();
        assert_eq!(clean.len(), 1);
        let [x0, y0, x1, y1] = clean.masks[0].mask.bbox();
        let (w, h) = ((x1 - x0) as u64, (y1 - y0) as u64);
        assert_eq!(clean.masks[0].mask.ones(), w * h, "nadir blob must be a filled rectangle");
        qspec.corruption.boundary_erode_px = 1;
        let (eroded, _, _) = oracle_query(&model, &qspec).unwrap();
        assert_eq!(eroded.masks[0].mask.ones(), (w - 2) * (h - 2));
    }

    #[test]
    fn merge_touching_unions_transitively_by_bbox_contact() {
        let rect = |x0: u32, y0: u32, w: u32, h: u32| {
            let mut bits = vec![false; 32 * 32];
            for y in y0..y0 + h {
                for x in x0..x0 + w {
                    bits[(y * 32 + x) as usize] = true;
                }
            }
            Mask::from_dense(32, 32, &bits).unwrap()
        };
        // a touches b (abutting bboxes), b touches c, d is far away: the
        // chain collapses to one mask plus the loner.
        let (a, b, c, d) = (rect(0, 0, 4, 4), rect(4, 0, 4, 4), rect(8, 2, 4, 4), rect(20, 20, 4, 4));
        let merged = merge_touching(vec![a.clone(), b, c, d.clone()]);
        assert_eq!(merged.len(), 2);
        assert_eq!(merged[0].ones(), 48);
        assert_eq!(merged[0].bbox(), [0, 0, 12, 6]);
        assert_eq!(merged[1], d);
        // Disjoint bboxes stay separate.
        let kept = merge_touching(vec![rect(0, 0, 3, 3), rect(10, 10, 3, 3)]);
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn confidence_noise_and_prior_offsets_are_bounded_and_seeded() {
        let model = generate_scene(&base_spec(DensityMode::Sparse, 15, 4)).unwrap();
        let mut qspec = view_spec(400.0, 77);
        qspec.corruption.confidence_noise = 0.4;
        let (m1, p1, _) = oracle_query(&model, &qspec).unwrap();
        let (m2, p2, _) = oracle_query(&model, &qspec).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(p1, p2);
        for e in &m1.masks {
            assert!(e.confidence > 0.6 - 1e-12 && e.confidence <= 1.0, "confidence {}", e.confidence);
        }
        let gt = qspec.gt_pose;
        assert!((p1.x - gt.x).abs() <= 10.0 && (p1.y - gt.y).abs() <= 10.0);
        assert!((p1.z - gt.z).abs() <= 3.0);
        assert!((p1.yaw_deg - gt.yaw_deg).abs() <= 5.0);
        // The prior does not move when only corruption settings change.
        let mut heavier = qspec.clone();
        heavier.corruption.drop_prob = 0.5;
        let (_, p3, _) = oracle_query(&model, &heavier).unwrap();
        assert_eq!(p1, p3);
    }

    #[test]
    fn corruption_keeps_retained_masks_seed_paired() {
        let model = generate_scene(&base_spec(DensityMode::Sparse, 25, 6)).unwrap();
        let qspec = view_spec(400.0, 123);
        let (clean, _, _) = oracle_query(&model, &qspec).unwrap();
        let mut dropped_spec = qspec.clone();
        dropped_spec.corruption.drop_prob = 0.4;
        let (dropped, _, _) = oracle_query(&model, &dropped_spec).unwrap();
        assert!(dropped.len() < clean.len());
        // Every retained mask appears identically in the clean set.
        for e in &dropped.masks {
            assert!(clean.masks.iter().any(|c| c.mask == e.mask));
        }
    }

    #[test]
    fn grid_benchmark_covers_queries_and_sequence_bounds_gaps() {
        let spec = BenchmarkSpec {
            scene: base_spec(DensityMode::Sparse, 12, 21),
            n_queries: 6,
            trajectory: Trajectory::Grid,
            sequence_step: 15.0,
            margin: 60.0,
            template: view_spec(400.0, 55),
        };
        let bundle = build_benchmark(&spec).unwrap();
        assert_eq!(bundle.queries.len(), 6);
        assert!(bundle.queries.iter().all(|q| !q.masks.is_degenerate()));
        assert!(bundle.queries.iter().all(|q| q.gt.z == 110.0 && q.gt.pitch_deg == -45.0));

        let seq = BenchmarkSpec { trajectory: Trajectory::Sequence, ..spec };
        let bundle = build_benchmark(&seq).unwrap();
        for pair in bundle.queries.windows(2) {
            let d = pair[0].gt.translation_distance(&pair[1].gt);
            assert!(d <= 15.0 + 1e-9, "consecutive gap {d}");
        }
    }

    #[test]
    fn benchmarks_are_seed_deterministic() {
        let spec = BenchmarkSpec {
            scene: base_spec(DensityMode::Sparse, 10, 8),
            n_queries: 4,
            trajectory: Trajectory::Grid,
            sequence_step: 15.0,
            margin: 60.0,
            template: view_spec(400.0, 99),
        };
        let a = build_benchmark(&spec).unwrap();
        let b = build_benchmark(&spec).unwrap();
        assert_eq!(a.queries.len(), b.queries.len());
        for (qa, qb) in a.queries.iter().zip(&b.queries) {
            assert_eq!(qa, qb);
        }
    }
}
