//! Aerial camera localization against untextured city block models.
//!
//! The pipeline estimates a 4-DoF camera pose (x, y, z, yaw; pitch and roll
//! come from an attitude prior) by rendering per-building silhouettes of an
//! instanced low-detail city model and aligning them with segmentation
//! masks observed in a query image:
//!
//! 1. [`instance`] welds a raw triangle soup and splits it into connected
//!    building instances.
//! 2. [`raster`] renders an instance-ID map with a deterministic software
//!    rasterizer and extracts per-building silhouette masks.
//! 3. [`cost`] scores a query mask set against rendered hypothesis masks
//!    with Dice/IoU alignment costs.
//! 4. [`solver`] sweeps a coarse pose grid and refines the best cells with
//!    a seeded stochastic search.
//! 5. [`synth`] and [`bundle`] fabricate closed-loop benchmarks from
//!    procedural prism cities; [`eval`] scores the results.
//!
//! All geometry is generic over the floating-point scalar (f32 or f64);
//! the `*D`/`*F` aliases below pick one. Rendering, costing, and search
//! are bit-deterministic for a fixed seed, independent of thread count.

pub mod bundle;
pub mod camera;
pub mod cost;
pub mod error;
pub mod eval;
pub mod instance;
pub mod mask;
pub mod mesh;
pub mod raster;
pub mod scalar;
pub mod solver;
pub mod synth;

pub use bundle::{read_bundle, write_bundle, Bundle, BundleQuery};
pub use camera::{
    rotation_angle_deg, wrap_deg, Extrinsics, Intrinsics, Pose4, NEAR_PLANE,
};
pub use cost::{
    best_match, cost_area, cost_confidence, cost_semantic, dice, iou, merge_to_semantic, weighted_mean, AreaKind,
    CostBreakdown, MatchEntry, DICE_EPSILON,
};
pub use error::{Error, Result};
pub use eval::{
    csv_report, pose_error, recall_at, summarize, text_report, PoseError, Summary, CSV_HEADER, RECALL_THRESHOLDS,
};
pub use instance::{
    instancify, read_instanced_model, write_instanced_model, InstancedModel, DEFAULT_WELD_TOLERANCE, MAX_INSTANCE_ID,
};
pub use mask::{Mask, MaskBuilder, MaskEntry, MaskSet};
pub use mesh::{parse_obj, Mesh};
pub use raster::{
    extract_hypothesis_masks, read_instance_ids_png, render_instance_map, render_instance_map_parallel,
    semantic_silhouette, write_instance_png, InstanceMap, RenderScratch, DEFAULT_MIN_INSTANCE_AREA,
};
pub use scalar::Scalar;
pub use solver::{
    coarse_search, localize, localize_with_volume, refine, CostConfig, CostKind, CostVolume, LocalizationResult,
    RefineConfig, SearchSpace, YAW_FLOOR_DEG,
};
pub use synth::{
    build_benchmark, generate_benchmark, generate_scene, oracle_query, push_box, query_seed, BenchmarkSpec,
    Corruption, DensityMode, PriorOffset, QuerySpec, SceneSpec, Trajectory,
};

/// f64 aliases: the default precision for end-to-end localization.
pub type Pose4D = Pose4<f64>;
pub type IntrinsicsD = Intrinsics<f64>;
pub type MeshD = Mesh<f64>;
pub type InstancedModelD = InstancedModel<f64>;
pub type MaskSetD = MaskSet<f64>;
pub type SearchSpaceD = SearchSpace<f64>;
pub type CostVolumeD = CostVolume<f64>;
pub type RefineConfigD = RefineConfig<f64>;
pub type CostConfigD = CostConfig<f64>;
pub type LocalizationResultD = LocalizationResult<f64>;
pub type BundleD = Bundle<f64>;
pub type SceneSpecD = SceneSpec<f64>;
pub type BenchmarkSpecD = BenchmarkSpec<f64>;

/// f32 aliases for memory-constrained callers.
pub type Pose4F = Pose4<f32>;
pub type IntrinsicsF = Intrinsics<f32>;
pub type MeshF = Mesh<f32>;
pub type InstancedModelF = InstancedModel<f32>;
pub type MaskSetF = MaskSet<f32>;
pub type SearchSpaceF = SearchSpace<f32>;
pub type CostVolumeF = CostVolume<f32>;
pub type RefineConfigF = RefineConfig<f32>;
pub type CostConfigF = CostConfig<f32>;
pub type LocalizationResultF = LocalizationResult<f32>;
