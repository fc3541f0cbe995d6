//! Subcommand implementations. Every command is deterministic given its
//! flags and seed; bench parallelizes across queries with a positional
//! collect so thread count never changes the output fields.

use std::io::Write;
use std::process::ExitCode;

use cityloc::bundle::{read_bundle, Bundle, BundleQuery};
use cityloc::camera::{read_intrinsics_file, read_pose_file};
use cityloc::eval::{csv_report, summarize, text_report, Summary};
use cityloc::instance::read_instanced_model;
use cityloc::mask::MaskSet;
use cityloc::mesh::parse_obj;
use cityloc::raster::{render_instance_map, write_instance_png};
use cityloc::solver::{localize, CostConfig, CostKind, LocalizationResult, RefineConfig, SearchSpace};
use cityloc::synth::{generate_benchmark, query_seed, BenchmarkSpec};
use cityloc::{instancify, merge_to_semantic, InstancedModel, Pose4};
use rayon::prelude::*;

use crate::config::{
    cost_kind_name, parse_cost_kind, parse_query_file, parse_render_size, parse_scene_spec, read_kv_file,
    resolve_solver, SolverSettings, Variant,
};
use crate::{Failure, InstancifyArgs, LocalizeArgs, RenderArgs, SynthArgs, BenchArgs, SolverArgs};

pub fn cmd_instancify(args: &InstancifyArgs) -> Result<ExitCode, Failure> {
    let text = std::fs::read_to_string(&args.model)
        .map_err(|e| Failure::input(format!("cannot read {}: {e}", args.model.display())))?;
    let mesh = parse_obj::<f64>(&text).map_err(Failure::from_core)?;
    let model = instancify(&mesh, args.weld_tolerance).map_err(Failure::from_core)?;
    let out = args.out.with_extension("obj");
    cityloc::write_instanced_model(&model, &out).map_err(Failure::from_core)?;
    println!("{} instances", model.instance_count());
    Ok(ExitCode::SUCCESS)
}

pub fn cmd_render(args: &RenderArgs) -> Result<ExitCode, Failure> {
    let model = read_instanced_model::<f64>(&args.model).map_err(Failure::from_core)?;
    let intr = read_intrinsics_file::<f64>(&args.intrinsics).map_err(Failure::from_core)?;
    if let Some(size) = &args.render_size {
        let (w, h) = parse_render_size(size)?;
        if (w, h) != (intr.width, intr.height) {
            return Err(Failure::config(format!(
                "--render-size {w}x{h} conflicts with intrinsics {}x{}",
                intr.width, intr.height
            )));
        }
    }
    let pose = read_pose_file::<f64>(&args.pose).map_err(Failure::from_core)?;
    let map = render_instance_map(&model, &intr, &pose).map_err(Failure::from_core)?;
    write_instance_png(&map, &args.out).map_err(Failure::from_core)?;
    println!("rendered {}x{} instance map", intr.width, intr.height);
    Ok(ExitCode::SUCCESS)
}

/// Applies a variant to one query: adjusts the mask set, cost kind, and
/// solver wiring, then runs the coarse-to-fine pipeline.
pub fn localize_variant(
    model: &InstancedModel<f64>,
    query: &BundleQuery<f64>,
    variant: Variant,
    cost_kind: CostKind,
    space: &SearchSpace<f64>,
    refine: &RefineConfig<f64>,
) -> Result<LocalizationResult<f64>, Failure> {
    let cost_kind = match variant {
        Variant::Semantic => CostKind::Semantic,
        _ => cost_kind,
    };
    let cost_cfg = CostConfig::with_kind(cost_kind);
    let masks = match variant {
        Variant::Merged => merge_to_semantic(&query.masks).map_err(Failure::from_core)?,
        _ => query.masks.clone(),
    };
    let refine_cfg = match variant {
        Variant::NoRefine => RefineConfig { iterations: 0, ..refine.clone() },
        _ => refine.clone(),
    };
    let select = !matches!(variant, Variant::NoSelect);
    localize(
        model,
        &query.intrinsics,
        &masks,
        &query.prior,
        space,
        &refine_cfg,
        &cost_cfg,
        select,
    )
    .map_err(Failure::from_core)
}

/// The semantic variant pins the cost; any other explicit cost is a
/// configuration conflict.
fn check_variant_cost(variant: Variant, explicit: Option<CostKind>) -> Result<(), Failure> {
    if variant == Variant::Semantic && explicit.is_some_and(|c| c != CostKind::Semantic) {
        return Err(Failure::config(
            "variant `semantic` forces `--cost semantic`".into(),
        ));
    }
    Ok(())
}

fn load_query(args: &LocalizeArgs, model: &mut Option<InstancedModel<f64>>) -> Result<BundleQuery<f64>, Failure> {
    if let Some(dir) = &args.bundle {
        let bundle: Bundle<f64> = read_bundle(dir).map_err(Failure::from_core)?;
        let idx = args.query;
        let n = bundle.queries.len();
        if idx >= n {
            return Err(Failure::config(format!("query index {idx} out of range, bundle has {n}")));
        }
        *model = Some(bundle.model);
        let mut it = bundle.queries.into_iter();
        return Ok(it.nth(idx).expect("index checked above"));
    }
    let (masks_path, prior_path, intr_path) = match (&args.masks, &args.prior, &args.intrinsics) {
        (Some(m), Some(p), Some(i)) => (m, p, i),
        _ => {
            return Err(Failure::config(
                "localize needs either --bundle or all of --masks, --prior, --intrinsics".into(),
            ))
        }
    };
    let masks = MaskSet::read_file(masks_path).map_err(Failure::from_core)?;
    let prior = read_pose_file(prior_path).map_err(Failure::from_core)?;
    let intrinsics = read_intrinsics_file(intr_path).map_err(Failure::from_core)?;
    Ok(BundleQuery { masks, prior, gt: prior, intrinsics })
}

pub fn cmd_localize(args: &LocalizeArgs) -> Result<ExitCode, Failure> {
    let solver = &args.solver;
    let file = solver.config.as_deref().map(read_kv_file).transpose()?;
    let settings: SolverSettings = resolve_solver(&solver.to_flags(), file.as_ref())?;
    let variant: Variant = solver
        .variant
        .as_deref()
        .unwrap_or("full")
        .parse()
        .map_err(Failure::config)?;
    let explicit_cost = solver.cost.as_deref().map(parse_cost_kind).transpose()?;
    check_variant_cost(variant, explicit_cost)?;
    let cost_kind = explicit_cost.unwrap_or_default();

    let mut bundle_model = None;
    let query = load_query(args, &mut bundle_model)?;
    let model = match (&args.model, bundle_model) {
        (Some(path), _) => read_instanced_model(path).map_err(Failure::from_core)?,
        (None, Some(m)) => m,
        (None, None) => return Err(Failure::config("localize needs --model or --bundle".into())),
    };
    if let Some(size) = &solver.render_size {
        let (w, h) = parse_render_size(size)?;
        if (w, h) != (query.intrinsics.width, query.intrinsics.height) {
            return Err(Failure::config(format!(
                "--render-size {w}x{h} conflicts with query intrinsics {}x{}",
                query.intrinsics.width, query.intrinsics.height
            )));
        }
    }

    let mut result = localize_variant(&model, &query, variant, cost_kind, &settings.space, &settings.refine)?;
    if solver.timing_disabled() {
        result.wall_time_ms = 0.0;
    }
    if let Some(out) = &args.out {
        result.write_file(out).map_err(Failure::from_core)?;
    }
    println!(
        "pose {} {} {} {} cost {} degenerate {}",
        result.pose.x,
        result.pose.y,
        result.pose.z,
        result.pose.yaw_deg,
        result.cost,
        result.degenerate as u8
    );
    if result.degenerate {
        return Ok(ExitCode::from(4));
    }
    Ok(ExitCode::SUCCESS)
}

pub fn cmd_bench(args: &BenchArgs) -> Result<ExitCode, Failure> {
    let solver = &args.solver;
    let file = solver.config.as_deref().map(read_kv_file).transpose()?;
    let settings = resolve_solver(&solver.to_flags(), file.as_ref())?;
    let variants: Vec<Variant> = solver
        .variant
        .as_deref()
        .unwrap_or("full")
        .split(',')
        .map(|v| v.trim().parse().map_err(Failure::config))
        .collect::<Result<_, _>>()?;
    let costs: Vec<CostKind> = solver
        .cost
        .as_deref()
        .unwrap_or("confidence")
        .split(',')
        .map(|c| parse_cost_kind(c.trim()))
        .collect::<Result<_, _>>()?;

    let bundle: Bundle<f64> = read_bundle(&args.bundle).map_err(Failure::from_core)?;
    if bundle.queries.is_empty() {
        return Err(Failure::input("bundle has no queries".into()));
    }
    if let Some(size) = &solver.render_size {
        let (w, h) = parse_render_size(size)?;
        let q = &bundle.queries[0].intrinsics;
        if (w, h) != (q.width, q.height) {
            return Err(Failure::config(format!(
                "--render-size {w}x{h} conflicts with bundle intrinsics {}x{}",
                q.width, q.height
            )));
        }
    }

    // Cross product with the semantic coercion applied, deduplicated while
    // preserving first-appearance order.
    let mut combos: Vec<(Variant, CostKind)> = Vec::new();
    for &v in &variants {
        for &c in &costs {
            let pair = (v, if v == Variant::Semantic { CostKind::Semantic } else { c });
            if !combos.contains(&pair) {
                combos.push(pair);
            }
        }
    }

    let base_seed = settings.refine.rng_seed;
    let mut rows: Vec<Summary> = Vec::with_capacity(combos.len());
    for (variant, cost_kind) in combos {
        let results: Vec<(LocalizationResult<f64>, Pose4<f64>)> = bundle
            .queries
            .par_iter()
            .enumerate()
            .map(|(i, q)| {
                let refine = RefineConfig { rng_seed: query_seed(base_seed, i), ..settings.refine.clone() };
                localize_variant(&bundle.model, q, variant, cost_kind, &settings.space, &refine)
                    .map(|mut r| {
                        if solver.timing_disabled() {
                            r.wall_time_ms = 0.0;
                        }
                        (r, q.gt)
                    })
            })
            .collect::<Result<_, Failure>>()?;
        rows.push(
            summarize("cityloc", variant.name(), cost_kind_name(cost_kind), &results).map_err(Failure::from_core)?,
        );
    }

    let csv = csv_report(&rows);
    match &args.out {
        Some(path) => {
            let mut f = std::fs::File::create(path)
                .map_err(|e| Failure::input(format!("cannot create {}: {e}", path.display())))?;
            f.write_all(csv.as_bytes())
                .map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))?;
            print!("{}", text_report(&rows));
        }
        None => print!("{csv}"),
    }
    Ok(ExitCode::SUCCESS)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<ExitCode, Failure> {
    let render_size = args.solver.render_size.as_deref().map(parse_render_size).transpose()?;
    let scene = parse_scene_spec(&args.scene)?;
    let qf = parse_query_file(&args.queries, render_size)?;
    let spec = BenchmarkSpec {
        scene,
        n_queries: qf.n_queries,
        trajectory: qf.trajectory,
        sequence_step: qf.step,
        margin: qf.margin,
        template: qf.template,
    };
    let bundle = generate_benchmark(&spec, &args.out).map_err(Failure::from_core)?;
    println!(
        "wrote bundle: {} buildings, {} queries at {}",
        bundle.model.instance_count(),
        bundle.queries.len(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

/// Runs `body` inside a rayon pool of the requested size; `None` keeps the
/// default global pool.
pub fn with_thread_pool<T: Send>(
    threads: Option<usize>,
    body: impl FnOnce() -> Result<T, Failure> + Send,
) -> Result<T, Failure> {
    match threads {
        None => body(),
        Some(n) => {
            if n == 0 {
                return Err(Failure::config("--threads must be >= 1".into()));
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Failure::config(format!("cannot build thread pool: {e}")))?;
            pool.install(body)
        }
    }
}

/// --threads beats the LODLOC_THREADS environment variable.
pub fn requested_threads(flag: Option<usize>) -> Result<Option<usize>, Failure> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("LODLOC_THREADS") {
        Err(_) => Ok(None),
        Ok(raw) => raw
            .parse::<usize>()
            .map(Some)
            .map_err(|_| Failure::config(format!("LODLOC_THREADS=`{raw}` is not a thread count"))),
    }
}

impl SolverArgs {
    pub fn timing_disabled(&self) -> bool {
        self.timing.as_deref() == Some("none")
    }
}

pub fn validate_timing(args: &SolverArgs) -> Result<(), Failure> {
    match args.timing.as_deref() {
        None | Some("wall") | Some("none") => Ok(()),
        Some(other) => Err(Failure::config(format!("unknown --timing `{other}` (expected wall|none)"))),
    }
}
