//! Configuration plumbing: whitespace-separated key/value files, flag
//! merging (flag beats file beats default), and the resolved run settings
//! shared by localize and bench.

use std::collections::HashMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use cityloc::solver::{CostKind, RefineConfig, SearchSpace};
use cityloc::synth::{Corruption, DensityMode, PriorOffset, QuerySpec, SceneSpec, Trajectory};
use cityloc::{Intrinsics, Pose4};

use crate::Failure;

/// Which pipeline stages run and on what query representation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Full,
    NoSelect,
    NoRefine,
    Semantic,
    Merged,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoSelect => "no-select",
            Variant::NoRefine => "no-refine",
            Variant::Semantic => "semantic",
            Variant::Merged => "merged",
        }
    }
}

impl FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "full" => Ok(Variant::Full),
            "no-select" => Ok(Variant::NoSelect),
            "no-refine" => Ok(Variant::NoRefine),
            "semantic" => Ok(Variant::Semantic),
            "merged" => Ok(Variant::Merged),
            other => Err(format!("unknown variant `{other}` (expected full|no-select|no-refine|semantic|merged)")),
        }
    }
}

pub fn parse_cost_kind(s: &str) -> Result<CostKind, Failure> {
    match s {
        "confidence" => Ok(CostKind::Confidence),
        "area" => Ok(CostKind::Area),
        "semantic" => Ok(CostKind::Semantic),
        other => Err(Failure::config(format!(
            "unknown cost `{other}` (expected confidence|area|semantic)"
        ))),
    }
}

pub fn cost_kind_name(kind: CostKind) -> &'static str {
    match kind {
        CostKind::Confidence => "confidence",
        CostKind::Area => "area",
        CostKind::Semantic => "semantic",
    }
}

/// Reads a `key value` per line file; `#` starts a comment.
pub fn read_kv_file(path: &Path) -> Result<HashMap<String, String>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
    let mut map = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| Failure::input(format!("{}:{}: expected `key value`", path.display(), lineno + 1)))?;
        map.insert(key.to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn parse_key<T: FromStr>(map: &HashMap<String, String>, key: &str) -> Result<Option<T>, Failure>
where
    T::Err: Display,
{
    match map.get(key) {
        None => Ok(None),
        Some(raw) => raw
            .parse()
            .map(Some)
            .map_err(|e| Failure::input(format!("bad value for `{key}`: {e}"))),
    }
}

fn require<T: FromStr>(map: &HashMap<String, String>, key: &str) -> Result<T, Failure>
where
    T::Err: Display,
{
    parse_key(map, key)?.ok_or_else(|| Failure::input(format!("missing required key `{key}`")))
}

/// A misspelled key would otherwise silently fall back to the default.
fn reject_unknown_keys(map: &HashMap<String, String>, allowed: &[&str], what: &str) -> Result<(), Failure> {
    let mut unknown: Vec<&str> = map.keys().map(String::as_str).filter(|k| !allowed.contains(k)).collect();
    if unknown.is_empty() {
        return Ok(());
    }
    unknown.sort_unstable();
    Err(Failure::input(format!(
        "unknown {what} key(s): {} (expected one of: {})",
        unknown.join(", "),
        allowed.join(", ")
    )))
}

const SOLVER_FILE_KEYS: &[&str] = &[
    "range-xy-m",
    "range-z-m",
    "range-yaw-deg",
    "grid-step-m",
    "grid-step-yaw-deg",
    "iters",
    "beams",
    "candidates",
    "sigma-m",
    "yaw-perturb-deg",
    "gamma",
    "seed",
];

const SCENE_FILE_KEYS: &[&str] = &[
    "extent-x",
    "extent-y",
    "buildings",
    "footprint-min",
    "footprint-max",
    "height-min",
    "height-max",
    "min-spacing",
    "density",
    "seed",
];

const QUERY_FILE_KEYS: &[&str] = &[
    "width",
    "height",
    "fx",
    "fy",
    "cx",
    "cy",
    "altitude-z",
    "pitch-deg",
    "roll-deg",
    "trajectory",
    "drop-prob",
    "erode-px",
    "merge-adjacent",
    "confidence-noise",
    "prior-xy-m",
    "prior-z-m",
    "prior-yaw-deg",
    "seed",
    "queries",
    "step-m",
    "margin-m",
];

/// Flag beats config file beats built-in default.
pub fn resolve<T: FromStr>(
    flag: Option<T>,
    file: Option<&HashMap<String, String>>,
    key: &str,
    default: T,
) -> Result<T, Failure>
where
    T::Err: Display,
{
    if let Some(v) = flag {
        return Ok(v);
    }
    if let Some(map) = file {
        if let Some(v) = parse_key(map, key)? {
            return Ok(v);
        }
    }
    Ok(default)
}

pub fn parse_render_size(s: &str) -> Result<(u32, u32), Failure> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| Failure::config(format!("render size `{s}` is not WxH")))?;
    let parse = |t: &str| {
        t.parse::<u32>()
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| Failure::config(format!("render size `{s}` is not WxH")))
    };
    Ok((parse(w)?, parse(h)?))
}

/// Search space and refinement settings resolved from flags and an optional
/// config file. Field names in the file equal the long flag names.
#[derive(Clone, Debug)]
pub struct SolverSettings {
    pub space: SearchSpace<f64>,
    pub refine: RefineConfig<f64>,
}

pub struct SolverFlags {
    pub grid_step_m: Option<f64>,
    pub grid_step_yaw_deg: Option<f64>,
    pub range_xy_m: Option<f64>,
    pub range_z_m: Option<f64>,
    pub range_yaw_deg: Option<f64>,
    pub iters: Option<usize>,
    pub beams: Option<usize>,
    pub candidates: Option<usize>,
    pub sigma_m: Option<f64>,
    pub yaw_perturb_deg: Option<f64>,
    pub gamma: Option<f64>,
    pub seed: Option<u64>,
}

pub fn resolve_solver(flags: &SolverFlags, file: Option<&HashMap<String, String>>) -> Result<SolverSettings, Failure> {
    if let Some(map) = file {
        reject_unknown_keys(map, SOLVER_FILE_KEYS, "solver config")?;
    }
    let defaults = SearchSpace::around(Pose4::new(0.0, 0.0, 0.0, 0.0));
    let refine_defaults = RefineConfig::default();
    let space = SearchSpace {
        center: Pose4::new(0.0, 0.0, 0.0, 0.0),
        half_range_xy: resolve(flags.range_xy_m, file, "range-xy-m", defaults.half_range_xy)?,
        half_range_z: resolve(flags.range_z_m, file, "range-z-m", defaults.half_range_z)?,
        half_range_yaw: resolve(flags.range_yaw_deg, file, "range-yaw-deg", defaults.half_range_yaw)?,
        step_xy: resolve(flags.grid_step_m, file, "grid-step-m", defaults.step_xy)?,
        step_z: resolve(flags.grid_step_m, file, "grid-step-m", defaults.step_z)?,
        step_yaw: resolve(flags.grid_step_yaw_deg, file, "grid-step-yaw-deg", defaults.step_yaw)?,
        max_grid_points: defaults.max_grid_points,
    };
    let refine = RefineConfig {
        iterations: resolve(flags.iters, file, "iters", refine_defaults.iterations)?,
        beams: resolve(flags.beams, file, "beams", refine_defaults.beams)?,
        candidates_per_iter: resolve(flags.candidates, file, "candidates", refine_defaults.candidates_per_iter)?,
        sigma_translation: resolve(flags.sigma_m, file, "sigma-m", refine_defaults.sigma_translation)?,
        yaw_perturb_deg: resolve(flags.yaw_perturb_deg, file, "yaw-perturb-deg", refine_defaults.yaw_perturb_deg)?,
        gamma: resolve(flags.gamma, file, "gamma", refine_defaults.gamma)?,
        sigma_floor: refine_defaults.sigma_floor,
        rng_seed: resolve(flags.seed, file, "seed", refine_defaults.rng_seed)?,
    };
    Ok(SolverSettings { space, refine })
}

/// Scene description file for `synth`.
pub fn parse_scene_spec(path: &Path) -> Result<SceneSpec<f64>, Failure> {
    let map = read_kv_file(path)?;
    reject_unknown_keys(&map, SCENE_FILE_KEYS, "scene spec")?;
    let density = match map.get("density").map(String::as_str) {
        None | Some("sparse") => DensityMode::Sparse,
        Some("dense") => DensityMode::Dense,
        Some("periodic") => DensityMode::Periodic,
        Some(other) => {
            return Err(Failure::input(format!(
                "unknown density `{other}` (expected sparse|dense|periodic)"
            )))
        }
    };
    Ok(SceneSpec {
        extent: [require(&map, "extent-x")?, require(&map, "extent-y")?],
        building_count: require(&map, "buildings")?,
        footprint_range: [require(&map, "footprint-min")?, require(&map, "footprint-max")?],
        height_range: [require(&map, "height-min")?, require(&map, "height-max")?],
        min_spacing: parse_key(&map, "min-spacing")?.unwrap_or(0.0),
        density_mode: density,
        rng_seed: parse_key(&map, "seed")?.unwrap_or(0),
    })
}

/// Query-template file for `synth`: camera, corruption, prior bounds, and
/// trajectory settings.
pub struct QueryFile {
    pub template: QuerySpec<f64>,
    pub n_queries: usize,
    pub trajectory: Trajectory,
    pub step: f64,
    pub margin: f64,
}

pub fn parse_query_file(path: &Path, render_size: Option<(u32, u32)>) -> Result<QueryFile, Failure> {
    let map = read_kv_file(path)?;
    reject_unknown_keys(&map, QUERY_FILE_KEYS, "query spec")?;
    let (dw, dh) = render_size.unwrap_or((640, 360));
    let width: u32 = parse_key(&map, "width")?.unwrap_or(dw);
    let height: u32 = parse_key(&map, "height")?.unwrap_or(dh);
    let fx: f64 = require(&map, "fx")?;
    let fy: f64 = parse_key(&map, "fy")?.unwrap_or(fx);
    let cx: f64 = parse_key(&map, "cx")?.unwrap_or(width as f64 * 0.5);
    let cy: f64 = parse_key(&map, "cy")?.unwrap_or(height as f64 * 0.5);
    let intrinsics = Intrinsics::new(fx, fy, cx, cy, width, height).map_err(Failure::from_core)?;
    let trajectory = match map.get("trajectory").map(String::as_str) {
        None | Some("grid") => Trajectory::Grid,
        Some("sequence") => Trajectory::Sequence,
        Some(other) => {
            return Err(Failure::input(format!(
                "unknown trajectory `{other}` (expected grid|sequence)"
            )))
        }
    };
    let gt_pose = Pose4::new(0.0, 0.0, require(&map, "altitude-z")?, 0.0)
        .with_attitude(parse_key(&map, "pitch-deg")?.unwrap_or(-45.0), parse_key(&map, "roll-deg")?.unwrap_or(0.0));
    Ok(QueryFile {
        template: QuerySpec {
            gt_pose,
            intrinsics,
            corruption: Corruption {
                drop_prob: parse_key(&map, "drop-prob")?.unwrap_or(0.0),
                boundary_erode_px: parse_key(&map, "erode-px")?.unwrap_or(0),
                merge_adjacent: parse_key::<u8>(&map, "merge-adjacent")?.unwrap_or(0) != 0,
                confidence_noise: parse_key(&map, "confidence-noise")?.unwrap_or(0.0),
            },
            prior_offset: PriorOffset {
                max_xy: parse_key(&map, "prior-xy-m")?.unwrap_or(0.0),
                max_z: parse_key(&map, "prior-z-m")?.unwrap_or(0.0),
                max_yaw_deg: parse_key(&map, "prior-yaw-deg")?.unwrap_or(0.0),
            },
            rng_seed: parse_key(&map, "seed")?.unwrap_or(0),
        },
        n_queries: parse_key(&map, "queries")?.unwrap_or(100),
        trajectory,
        step: parse_key(&map, "step-m")?.unwrap_or(15.0),
        margin: parse_key(&map, "margin-m")?.unwrap_or(50.0),
    })
}
