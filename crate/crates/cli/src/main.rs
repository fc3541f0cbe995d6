//! `cityloc`: estimate a 4-DoF aerial camera pose against an untextured
//! instanced city model by silhouette alignment, plus the tooling around it
//! (instancing, rendering, synthetic benchmarks, CSV sweeps).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::SolverFlags;

/// Exit discipline: 0 success, 2 configuration error, 3 input/parse error,
/// 4 degenerate (no-evidence) localization.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: String) -> Self {
        Failure { code: 2, message }
    }
    pub fn input(message: String) -> Self {
        Failure { code: 3, message }
    }
    pub fn from_core(err: cityloc::Error) -> Self {
        let code = match &err {
            cityloc::Error::Parse { .. } | cityloc::Error::Io(_) => 3,
            _ => 2,
        };
        Failure { code, message: err.to_string() }
    }
}

#[derive(Parser)]
#[command(name = "cityloc", version, about = "4-DoF aerial localization against instanced LoD city models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Weld an OBJ triangle soup and split it into building instances
    Instancify(InstancifyArgs),
    /// Render the instance-ID map of a model at a given pose
    Render(RenderArgs),
    /// Localize one query (from a bundle or from loose files)
    Localize(LocalizeArgs),
    /// Sweep a benchmark bundle and report recalls as CSV
    Bench(BenchArgs),
    /// Generate a synthetic benchmark bundle from spec files
    Synth(SynthArgs),
}

#[derive(Args)]
pub struct InstancifyArgs {
    /// Input OBJ file
    #[arg(long)]
    model: PathBuf,
    /// Output prefix; writes <out>.obj and <out>.instances
    #[arg(long)]
    out: PathBuf,
    /// Vertex weld tolerance in meters
    #[arg(long, default_value_t = cityloc::DEFAULT_WELD_TOLERANCE)]
    weld_tolerance: f64,
}

#[derive(Args)]
pub struct RenderArgs {
    /// Instanced model OBJ (with .instances manifest alongside)
    #[arg(long)]
    model: PathBuf,
    /// Pose file
    #[arg(long)]
    pose: PathBuf,
    /// Intrinsics file
    #[arg(long)]
    intrinsics: PathBuf,
    /// Output PNG
    #[arg(long)]
    out: PathBuf,
    /// Expected render size WxH; must match the intrinsics
    #[arg(long)]
    render_size: Option<String>,
}

/// Solver knobs shared by localize and bench. Defaults (shown in brackets)
/// are the full-pipeline configuration; a `--config` file may override any
/// of them, and explicit flags beat the file.
#[derive(Args, Clone)]
pub struct SolverArgs {
    /// Alignment cost: confidence|area|semantic [confidence]; bench accepts
    /// a comma-separated list
    #[arg(long)]
    cost: Option<String>,
    /// Pipeline variant: full|no-select|no-refine|semantic|merged [full];
    /// bench accepts a comma-separated list
    #[arg(long)]
    variant: Option<String>,
    /// Coarse grid step for x, y, z in meters [10]
    #[arg(long = "grid-step-m")]
    grid_step_m: Option<f64>,
    /// Coarse grid step for yaw in degrees [5]
    #[arg(long = "grid-step-yaw-deg")]
    grid_step_yaw_deg: Option<f64>,
    /// Half range of the search grid in x and y, meters [30]
    #[arg(long = "range-xy-m")]
    range_xy_m: Option<f64>,
    /// Half range of the search grid in z, meters [10]
    #[arg(long = "range-z-m")]
    range_z_m: Option<f64>,
    /// Half range of the search grid in yaw, degrees [15]
    #[arg(long = "range-yaw-deg")]
    range_yaw_deg: Option<f64>,
    /// Refinement iterations per beam [40]
    #[arg(long)]
    iters: Option<usize>,
    /// Refined beams (also the number of coarse poses kept) [2]
    #[arg(long)]
    beams: Option<usize>,
    /// Candidates per refinement iteration [52]
    #[arg(long)]
    candidates: Option<usize>,
    /// Initial translation proposal sigma in meters [1.5]
    #[arg(long = "sigma-m")]
    sigma_m: Option<f64>,
    /// Initial yaw proposal half range in degrees [2]
    #[arg(long = "yaw-perturb-deg")]
    yaw_perturb_deg: Option<f64>,
    /// Proposal shrink factor on stagnant iterations, in (0,1) [0.3]
    #[arg(long)]
    gamma: Option<f64>,
    /// RNG seed; bench derives one sub-seed per query [0]
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; falls back to LODLOC_THREADS, then all cores
    #[arg(long)]
    threads: Option<usize>,
    /// Expected render size WxH; must match the query intrinsics
    #[arg(long = "render-size")]
    render_size: Option<String>,
    /// Key/value file supplying any of the above solver knobs
    #[arg(long)]
    config: Option<PathBuf>,
    /// wall: report wall-clock times; none: zero them for byte-stable output [wall]
    #[arg(long)]
    timing: Option<String>,
}

impl SolverArgs {
    fn to_flags(&self) -> SolverFlags {
        SolverFlags {
            grid_step_m: self.grid_step_m,
            grid_step_yaw_deg: self.grid_step_yaw_deg,
            range_xy_m: self.range_xy_m,
            range_z_m: self.range_z_m,
            range_yaw_deg: self.range_yaw_deg,
            iters: self.iters,
            beams: self.beams,
            candidates: self.candidates,
            sigma_m: self.sigma_m,
            yaw_perturb_deg: self.yaw_perturb_deg,
            gamma: self.gamma,
            seed: self.seed,
        }
    }
}

#[derive(Args)]
pub struct LocalizeArgs {
    /// Instanced model OBJ; defaults to the bundle's model
    #[arg(long)]
    model: Option<PathBuf>,
    /// Benchmark bundle directory
    #[arg(long)]
    bundle: Option<PathBuf>,
    /// Query index within the bundle [0]
    #[arg(long, default_value_t = 0)]
    query: usize,
    /// Query mask set file (alternative to --bundle)
    #[arg(long)]
    masks: Option<PathBuf>,
    /// Prior pose file (alternative to --bundle)
    #[arg(long)]
    prior: Option<PathBuf>,
    /// Intrinsics file (alternative to --bundle)
    #[arg(long)]
    intrinsics: Option<PathBuf>,
    /// Write the localization record here
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
pub struct BenchArgs {
    /// Benchmark bundle directory
    #[arg(long)]
    bundle: PathBuf,
    /// CSV output path; without it the CSV goes to stdout
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
pub struct SynthArgs {
    /// Scene spec file (key/value)
    #[arg(long)]
    scene: PathBuf,
    /// Query template file (key/value)
    #[arg(long)]
    queries: PathBuf,
    /// Output bundle directory
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
}

fn dispatch(cli: Cli) -> Result<ExitCode, Failure> {
    match &cli.command {
        Command::Instancify(args) => commands::cmd_instancify(args),
        Command::Render(args) => commands::cmd_render(args),
        Command::Localize(args) => {
            commands::validate_timing(&args.solver)?;
            let threads = commands::requested_threads(args.solver.threads)?;
            commands::with_thread_pool(threads, || commands::cmd_localize(args))
        }
        Command::Bench(args) => {
            commands::validate_timing(&args.solver)?;
            let threads = commands::requested_threads(args.solver.threads)?;
            commands::with_thread_pool(threads, || commands::cmd_bench(args))
        }
        Command::Synth(args) => commands::cmd_synth(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
