use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::camera::{kv_parse, read_kv_record, write_kv_record, Intrinsics, Pose4};
use crate::cost::{cost_area, cost_confidence, iou, AreaKind, DICE_EPSILON};
use crate::error::{Error, Result};
use crate::instance::InstancedModel;
use crate::mask::{Mask, MaskSet};
use crate::raster::{
    extract_hypothesis_masks, render_with_scratch, semantic_silhouette, RenderScratch,
    DEFAULT_MIN_INSTANCE_AREA,
};
use crate::scalar::Scalar;

/// Yaw perturbation never shrinks below this, mirroring the translation
/// sigma floor.
pub const YAW_FLOOR_DEG: f64 = 0.1;

/// Which alignment cost drives the search.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CostKind {
    /// Best-match Dice per query mask, confidence-weighted.
    #[default]
    Confidence,
    /// Best-match Dice per query mask, bbox- or pixel-area-weighted.
    Area,
    /// IoU of the unioned query mask against the whole-model silhouette.
    Semantic,
}

#[derive(Clone, Copy, Debug)]
pub struct CostConfig<S> {
    pub kind: CostKind,
    pub area_kind: AreaKind,
    pub epsilon: S,
    pub min_area: u64,
}

impl<S: Scalar> Default for CostConfig<S> {
    fn default() -> Self {
        CostConfig {
            kind: CostKind::Confidence,
            area_kind: AreaKind::Bbox,
            epsilon: S::of(DICE_EPSILON),
            min_area: DEFAULT_MIN_INSTANCE_AREA,
        }
    }
}

impl<S: Scalar> CostConfig<S> {
    pub fn with_kind(kind: CostKind) -> Self {
        CostConfig { kind, ..Self::default() }
    }
}

/// Uniform 4-DoF grid centered on the prior. Each axis samples
/// 2*floor(half_range/step) + 1 points.
#[derive(Clone, Debug)]
pub struct SearchSpace<S> {
    pub center: Pose4<S>,
    pub half_range_xy: S,
    pub half_range_z: S,
    pub half_range_yaw: S,
    pub step_xy: S,
    pub step_z: S,
    pub step_yaw: S,
    /// Upper bound on grid size; exceeding it is a configuration error
    /// rather than a multi-hour render job.
    pub max_grid_points: usize,
}

pub const DEFAULT_MAX_GRID_POINTS: usize = 200_000;

impl<S: Scalar> SearchSpace<S> {
    /// Default ranges sized to typical prior error: +/-30 m xy and +/-10 m z
    /// at a 10 m step, +/-15 degrees yaw at 5 degrees.
    pub fn around(center: Pose4<S>) -> Self {
        SearchSpace {
            center,
            half_range_xy: S::of(30.0),
            half_range_z: S::of(10.0),
            half_range_yaw: S::of(15.0),
            step_xy: S::of(10.0),
            step_z: S::of(10.0),
            step_yaw: S::of(5.0),
            max_grid_points: DEFAULT_MAX_GRID_POINTS,
        }
    }

    pub fn recentered(&self, center: Pose4<S>) -> Self {
        SearchSpace { center, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        self.center.validate()?;
        for (name, v) in [
            ("half_range_xy", self.half_range_xy),
            ("half_range_z", self.half_range_z),
            ("half_range_yaw", self.half_range_yaw),
        ] {
            if !(v >= S::zero()) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        for (name, v) in [("step_xy", self.step_xy), ("step_z", self.step_z), ("step_yaw", self.step_yaw)] {
            if !(v > S::zero()) {
                return Err(Error::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    fn axis_count(half: S, step: S) -> usize {
        2 * (half / step).floor().to_f64_lossy() as usize + 1
    }

    /// Grid point count per axis as [x, y, z, yaw].
    pub fn shape(&self) -> [usize; 4] {
        let nxy = Self::axis_count(self.half_range_xy, self.step_xy);
        [
            nxy,
            nxy,
            Self::axis_count(self.half_range_z, self.step_z),
            Self::axis_count(self.half_range_yaw, self.step_yaw),
        ]
    }

    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Enumerates the grid in x-major order (x, then y, z, yaw innermost).
    pub fn grid_poses(&self) -> Result<Vec<Pose4<S>>> {
        self.validate()?;
        let shape = self.shape();
        let total: usize = shape.iter().product();
        if total > self.max_grid_points {
            return Err(Error::Config(format!(
                "search grid needs {total} points, budget is {}",
                self.max_grid_points
            )));
        }
        let offsets = |count: usize, step: S| -> Vec<S> {
            let n = (count as i64 - 1) / 2;
            (-n..=n).map(|k| S::of(k as f64) * step).collect()
        };
        let xs = offsets(shape[0], self.step_xy);
        let ys = offsets(shape[1], self.step_xy);
        let zs = offsets(shape[2], self.step_z);
        let yaws = offsets(shape[3], self.step_yaw);
        let mut poses = Vec::with_capacity(total);
        for &dx in &xs {
            for &dy in &ys {
                for &dz in &zs {
                    for &dyaw in &yaws {
                        poses.push(
                            Pose4::new(
                                self.center.x + dx,
                                self.center.y + dy,
                                self.center.z + dz,
                                self.center.yaw_deg + dyaw,
                            )
                            .with_attitude(self.center.pitch_deg, self.center.roll_deg),
                        );
                    }
                }
            }
        }
        Ok(poses)
    }
}

/// Costs evaluated over the coarse grid.
#[derive(Clone, Debug)]
pub struct CostVolume<S> {
    pub poses: Vec<Pose4<S>>,
    pub costs: Vec<S>,
    pub argmax: usize,
    /// True when the query carried no evidence; the volume is then a single
    /// zero-cost cell at the prior.
    pub degenerate: bool,
}

impl<S: Scalar> CostVolume<S> {
    pub fn best_pose(&self) -> &Pose4<S> {
        &self.poses[self.argmax]
    }

    pub fn best_cost(&self) -> S {
        self.costs[self.argmax]
    }

    /// Cells scoring at least `frac` of the maximum; a flat, ambiguous cost
    /// surface shows up as a large count.
    pub fn near_max_count(&self, frac: S) -> usize {
        let lo = self.best_cost() * frac;
        self.costs.iter().filter(|&&c| c >= lo).count()
    }

    /// Cell indices from best to worst under the deterministic order: higher
    /// cost, then nearer `prior`, then lower index.
    pub fn ranked(&self, prior: &Pose4<S>, k: usize) -> Vec<usize> {
        rank_cells(self, prior, k)
    }
}

/// Fine-stage schedule: per-beam greedy incumbent with Gaussian translation
/// and uniform yaw proposals, shrinking on stagnation.
#[derive(Clone, Debug)]
pub struct RefineConfig<S> {
    pub iterations: usize,
    pub beams: usize,
    pub candidates_per_iter: usize,
    pub sigma_translation: S,
    pub yaw_perturb_deg: S,
    pub gamma: S,
    pub sigma_floor: S,
    pub rng_seed: u64,
}

impl<S: Scalar> Default for RefineConfig<S> {
    fn default() -> Self {
        RefineConfig {
            iterations: 40,
            beams: 2,
            candidates_per_iter: 52,
            sigma_translation: S::of(1.5),
            yaw_perturb_deg: S::of(2.0),
            gamma: S::of(0.3),
            sigma_floor: S::of(0.1),
            rng_seed: 0,
        }
    }
}

impl<S: Scalar> RefineConfig<S> {
    pub fn validate(&self) -> Result<()> {
        if self.beams < 1 || self.candidates_per_iter < 1 {
            return Err(Error::Config("beams and candidates_per_iter must be >= 1".into()));
        }
        if !(self.sigma_translation > S::zero()) || !(self.sigma_floor > S::zero()) {
            return Err(Error::Config("sigma_translation and sigma_floor must be > 0".into()));
        }
        if !(self.yaw_perturb_deg >= S::zero()) {
            return Err(Error::Config("yaw_perturb_deg must be >= 0".into()));
        }
        if !(self.gamma > S::zero() && self.gamma < S::one()) {
            return Err(Error::Config("gamma must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// The no-refine wiring: zero fine-stage iterations returns the best of
    /// the start poses unchanged.
    pub fn disabled(mut self) -> Self {
        self.iterations = 0;
        self
    }
}

pub(crate) struct Evaluator<'a, S> {
    model: &'a InstancedModel<S>,
    intr: &'a Intrinsics<S>,
    query: &'a MaskSet<S>,
    /// Query union, precomputed once for the semantic cost.
    union: Option<Mask>,
    cfg: CostConfig<S>,
}

impl<'a, S: Scalar> Evaluator<'a, S> {
    fn new(
        model: &'a InstancedModel<S>,
        intr: &'a Intrinsics<S>,
        query: &'a MaskSet<S>,
        cfg: CostConfig<S>,
    ) -> Result<Self> {
        if (query.width, query.height) != (intr.width, intr.height) {
            return Err(Error::Domain(format!(
                "query masks are {}x{} but the camera renders {}x{}",
                query.width, query.height, intr.width, intr.height
            )));
        }
        let union = match cfg.kind {
            CostKind::Semantic => Some(query.union_all()?),
            _ => None,
        };
        Ok(Evaluator { model, intr, query, union, cfg })
    }

    fn cost_at(&self, pose: &Pose4<S>, scratch: &mut RenderScratch) -> Result<S> {
        let map = render_with_scratch(self.model, self.intr, pose, scratch)?;
        match self.cfg.kind {
            CostKind::Confidence => {
                let hyp = extract_hypothesis_masks(&map, self.cfg.min_area);
                Ok(cost_confidence(self.query, &hyp, self.cfg.epsilon)?.total)
            }
            CostKind::Area => {
                let hyp = extract_hypothesis_masks(&map, self.cfg.min_area);
                Ok(cost_area(self.query, &hyp, self.cfg.epsilon, self.cfg.area_kind)?.total)
            }
            CostKind::Semantic => iou(self.union.as_ref().expect("union precomputed"), &semantic_silhouette(&map)),
        }
    }

    /// Evaluates many poses in parallel. Each worker owns a framebuffer;
    /// outputs are positionally collected, so scheduling cannot reorder them.
    fn cost_of_each(&self, poses: &[Pose4<S>]) -> Result<Vec<S>> {
        poses
            .par_iter()
            .map_init(RenderScratch::new, |scratch, pose| self.cost_at(pose, scratch))
            .collect()
    }
}

/// Best-first cell order: higher cost, then nearer the prior by translation.
/// Index ties fall out of stable sorting / first-wins selection, so the full
/// rule is (cost desc, prior distance asc, index asc).
fn cell_order<S: Scalar>(
    costs: &[S],
    poses: &[Pose4<S>],
    prior: &Pose4<S>,
    a: usize,
    b: usize,
) -> std::cmp::Ordering {
    costs[b]
        .partial_cmp(&costs[a])
        .expect("costs are never NaN")
        .then_with(|| {
            let da = poses[a].translation_distance(prior);
            let db = poses[b].translation_distance(prior);
            da.partial_cmp(&db).expect("poses are finite")
        })
}

fn argmax_cell<S: Scalar>(costs: &[S], poses: &[Pose4<S>], prior: &Pose4<S>) -> usize {
    (0..costs.len())
        .min_by(|&a, &b| cell_order(costs, poses, prior, a, b))
        .expect("volume has at least one cell")
}

/// Evaluates the selected cost at every grid pose of `space`.
pub fn coarse_search<S: Scalar>(
    model: &InstancedModel<S>,
    intr: &Intrinsics<S>,
    query: &MaskSet<S>,
    space: &SearchSpace<S>,
    cfg: &CostConfig<S>,
) -> Result<CostVolume<S>> {
    space.validate()?;
    if query.is_degenerate() {
        return Ok(CostVolume {
            poses: vec![space.center.clone()],
            costs: vec![S::zero()],
            argmax: 0,
            degenerate: true,
        });
    }
    let eval = Evaluator::new(model, intr, query, *cfg)?;
    let poses = space.grid_poses()?;
    let costs = eval.cost_of_each(&poses)?;
    let argmax = argmax_cell(&costs, &poses, &space.center);
    Ok(CostVolume { poses, costs, argmax, degenerate: false })
}

/// Particle-style refinement: each beam greedily improves its incumbent
/// with `candidates_per_iter` perturbed proposals per iteration, shrinking
/// the proposal scale on stagnation. Returns the best (pose, cost) over all
/// beams. Reproducible for a given seed at any thread count.
pub fn refine<S: Scalar>(
    model: &InstancedModel<S>,
    intr: &Intrinsics<S>,
    query: &MaskSet<S>,
    start_poses: &[Pose4<S>],
    config: &RefineConfig<S>,
    cfg: &CostConfig<S>,
) -> Result<(Pose4<S>, S)> {
    config.validate()?;
    if start_poses.is_empty() {
        return Err(Error::Domain("refine needs at least one start pose".into()));
    }
    if start_poses.len() != config.beams {
        return Err(Error::Domain(format!(
            "got {} start poses for {} beams",
            start_poses.len(),
            config.beams
        )));
    }
    let eval = Evaluator::new(model, intr, query, *cfg)?;
    let start_costs = eval.cost_of_each(start_poses)?;

    let mut overall: Option<(Pose4<S>, S)> = None;
    for (beam, start) in start_poses.iter().enumerate() {
        let mut incumbent = start.clone();
        let mut inc_cost = start_costs[beam];
        let mut sigma = config.sigma_translation.to_f64_lossy();
        let mut theta = config.yaw_perturb_deg.to_f64_lossy();
        for iter in 0..config.iterations {
            // One counter-addressed stream per (beam, iteration): draws are
            // serial and tiny, evaluation is the parallel part, and results
            // cannot depend on how beams or workers are scheduled.
            let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
            rng.set_stream(((beam as u64) << 32) | iter as u64);
            let candidates: Vec<Pose4<S>> = (0..config.candidates_per_iter)
                .map(|_| {
                    let dx: f64 = rng.sample::<f64, _>(StandardNormal) * sigma;
                    let dy: f64 = rng.sample::<f64, _>(StandardNormal) * sigma;
                    let dz: f64 = rng.sample::<f64, _>(StandardNormal) * sigma;
                    let dyaw = (2.0 * rng.gen::<f64>() - 1.0) * theta;
                    Pose4::new(
                        incumbent.x + S::of(dx),
                        incumbent.y + S::of(dy),
                        incumbent.z + S::of(dz),
                        incumbent.yaw_deg + S::of(dyaw),
                    )
                    .with_attitude(incumbent.pitch_deg, incumbent.roll_deg)
                })
                .collect();
            let costs = eval.cost_of_each(&candidates)?;
            let mut best = 0usize;
            for i in 1..costs.len() {
                if costs[i] > costs[best] {
                    best = i;
                }
            }
            if costs[best] > inc_cost {
                incumbent = candidates[best].clone();
                inc_cost = costs[best];
            } else {
                let g = 1.0 - config.gamma.to_f64_lossy();
                sigma = (sigma * g).max(config.sigma_floor.to_f64_lossy());
                theta = (theta * g).max(YAW_FLOOR_DEG);
            }
        }
        let better = match &overall {
            None => true,
            Some((_, c)) => inc_cost > *c,
        };
        if better {
            overall = Some((incumbent, inc_cost));
        }
    }
    Ok(overall.expect("at least one beam ran"))
}

/// Full coarse-to-fine estimate and its provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalizationResult<S> {
    pub pose: Pose4<S>,
    pub cost: S,
    pub coarse_pose: Pose4<S>,
    /// The query carried no evidence; `pose` is the prior, answered anyway.
    pub degenerate: bool,
    pub wall_time_ms: f64,
}

/// Coarse grid search around the prior, then refinement. `select` starts
/// one beam per top-ranked coarse cell; without it every beam starts at the
/// single argmax. Zero refine iterations returns the coarse argmax.
#[allow(clippy::too_many_arguments)]
pub fn localize<S: Scalar>(
    model: &InstancedModel<S>,
    intr: &Intrinsics<S>,
    query: &MaskSet<S>,
    prior: &Pose4<S>,
    space: &SearchSpace<S>,
    refine_config: &RefineConfig<S>,
    cost_config: &CostConfig<S>,
    select: bool,
) -> Result<LocalizationResult<S>> {
    localize_with_volume(model, intr, query, prior, space, refine_config, cost_config, select).map(|(r, _)| r)
}

/// `localize`, also handing back the coarse cost volume for basin analysis.
#[allow(clippy::too_many_arguments)]
pub fn localize_with_volume<S: Scalar>(
    model: &InstancedModel<S>,
    intr: &Intrinsics<S>,
    query: &MaskSet<S>,
    prior: &Pose4<S>,
    space: &SearchSpace<S>,
    refine_config: &RefineConfig<S>,
    cost_config: &CostConfig<S>,
    select: bool,
) -> Result<(LocalizationResult<S>, CostVolume<S>)> {
    let started = Instant::now();
    let space = space.recentered(prior.clone());
    let volume = coarse_search(model, intr, query, &space, cost_config)?;
    if volume.degenerate {
        let result = LocalizationResult {
            pose: prior.clone(),
            cost: S::zero(),
            coarse_pose: prior.clone(),
            degenerate: true,
            wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
        };
        return Ok((result, volume));
    }
    let coarse_pose = volume.best_pose().clone();
    let starts: Vec<Pose4<S>> = if select {
        let ranked = rank_cells(&volume, prior, refine_config.beams);
        ranked.into_iter().map(|i| volume.poses[i].clone()).collect()
    } else {
        vec![coarse_pose.clone(); refine_config.beams]
    };
    let (pose, cost) = if refine_config.iterations == 0 {
        // Skip re-rendering the starts: with zero iterations refine returns
        // their best, and the volume already holds those costs.
        (coarse_pose.clone(), volume.best_cost())
    } else {
        refine(model, intr, query, &starts, refine_config, cost_config)?
    };
    let result = LocalizationResult {
        pose,
        cost,
        coarse_pose,
        degenerate: false,
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
    };
    Ok((result, volume))
}

/// Best-to-worst cell indices under `cell_order`, padded by repetition when
/// the grid has fewer than `k` cells.
fn rank_cells<S: Scalar>(volume: &CostVolume<S>, prior: &Pose4<S>, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..volume.costs.len()).collect();
    idx.sort_by(|&a, &b| cell_order(&volume.costs, &volume.poses, prior, a, b));
    while idx.len() < k {
        idx.push(*idx.last().expect("grid has at least one cell"));
    }
    idx.truncate(k);
    idx
}

impl<S: Scalar> LocalizationResult<S> {
    pub fn write_file(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        let pairs: Vec<(&str, String)> = vec![
            ("x", self.pose.x.to_string()),
            ("y", self.pose.y.to_string()),
            ("z", self.pose.z.to_string()),
            ("yaw_deg", self.pose.yaw_deg.to_string()),
            ("pitch_deg", self.pose.pitch_deg.to_string()),
            ("roll_deg", self.pose.roll_deg.to_string()),
            ("cost", self.cost.to_string()),
            ("coarse_x", self.coarse_pose.x.to_string()),
            ("coarse_y", self.coarse_pose.y.to_string()),
            ("coarse_z", self.coarse_pose.z.to_string()),
            ("coarse_yaw_deg", self.coarse_pose.yaw_deg.to_string()),
            ("coarse_pitch_deg", self.coarse_pose.pitch_deg.to_string()),
            ("coarse_roll_deg", self.coarse_pose.roll_deg.to_string()),
            ("degenerate", u8::from(self.degenerate).to_string()),
            ("wall_time_ms", self.wall_time_ms.to_string()),
        ];
        write_kv_record(&mut w, &pairs)
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let pairs = read_kv_record(BufReader::new(File::open(path)?))?;
        let pose = Pose4::new(
            kv_parse(&pairs, "x")?,
            kv_parse(&pairs, "y")?,
            kv_parse(&pairs, "z")?,
            kv_parse(&pairs, "yaw_deg")?,
        )
        .with_attitude(kv_parse(&pairs, "pitch_deg")?, kv_parse(&pairs, "roll_deg")?);
        let coarse_pose = Pose4::new(
            kv_parse(&pairs, "coarse_x")?,
            kv_parse(&pairs, "coarse_y")?,
            kv_parse(&pairs, "coarse_z")?,
            kv_parse(&pairs, "coarse_yaw_deg")?,
        )
        .with_attitude(kv_parse(&pairs, "coarse_pitch_deg")?, kv_parse(&pairs, "coarse_roll_deg")?);
        let degenerate: u8 = kv_parse(&pairs, "degenerate")?;
        Ok(LocalizationResult {
            pose,
            cost: kv_parse(&pairs, "cost")?,
            coarse_pose,
            degenerate: degenerate != 0,
            wall_time_ms: kv_parse(&pairs, "wall_time_ms")?,
        })
    }
}
