//! On-disk benchmark bundles: an instanced model plus per-query directories
//! holding the observed mask set, the noisy prior, the ground-truth pose,
//! and the camera intrinsics. All files are plain text so bundles diff
//! cleanly and round-trip bit-exactly.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::camera::{
    read_intrinsics_file, read_pose_file, write_intrinsics_file, write_pose_file, Intrinsics, Pose4,
};
use crate::error::{Error, Result};
use crate::instance::{read_instanced_model, write_instanced_model, InstancedModel};
use crate::mask::MaskSet;
use crate::scalar::Scalar;

/// One fabricated query of a bundle.
#[derive(Clone, Debug, PartialEq)]
pub struct BundleQuery<S> {
    pub masks: MaskSet<S>,
    pub prior: Pose4<S>,
    pub gt: Pose4<S>,
    pub intrinsics: Intrinsics<S>,
}

/// A benchmark in memory: the instanced scene plus its queries.
#[derive(Clone, Debug)]
pub struct Bundle<S> {
    pub model: InstancedModel<S>,
    pub queries: Vec<BundleQuery<S>>,
}

fn query_dir_name(index: usize) -> String {
    format!("q{index:03}")
}

/// Writes `model.obj`, `model.instances`, `manifest`, and one directory per
/// query under `dir`, creating it as needed.
pub fn write_bundle<S: Scalar>(bundle: &Bundle<S>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_instanced_model(&bundle.model, &dir.join("model.obj"))?;
    let mut manifest = fs::File::create(dir.join("manifest"))?;
    writeln!(manifest, "queries {}", bundle.queries.len())?;
    for i in 0..bundle.queries.len() {
        writeln!(manifest, "query {}", query_dir_name(i))?;
    }
    for (i, q) in bundle.queries.iter().enumerate() {
        let qdir = dir.join(query_dir_name(i));
        fs::create_dir_all(&qdir)?;
        q.masks.write_file(&qdir.join("masks.rle"))?;
        write_pose_file(&q.prior, &qdir.join("prior.pose"))?;
        write_pose_file(&q.gt, &qdir.join("gt.pose"))?;
        write_intrinsics_file(&q.intrinsics, &qdir.join("intrinsics"))?;
    }
    Ok(())
}

/// Reads a bundle written by [`write_bundle`], validating the manifest
/// against the directories present.
pub fn read_bundle<S: Scalar>(dir: &Path) -> Result<Bundle<S>> {
    let model = read_instanced_model(&dir.join("model.obj"))?;
    let manifest = BufReader::new(fs::File::open(dir.join("manifest"))?);
    let mut lines = manifest.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty bundle manifest"))??;
    let n: usize = header
        .strip_prefix("queries ")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::parse(1, format!("expected `queries <n>`, got `{header}`")))?;
    let mut names = Vec::with_capacity(n);
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let name = line
            .strip_prefix("query ")
            .ok_or_else(|| Error::parse(lineno + 2, format!("expected `query <dir>`, got `{line}`")))?;
        names.push(name.to_string());
    }
    if names.len() != n {
        return Err(Error::parse(1, format!("manifest promises {n} queries, lists {}", names.len())));
    }
    let mut queries = Vec::with_capacity(n);
    for name in &names {
        let qdir = dir.join(name);
        queries.push(BundleQuery {
            masks: MaskSet::read_file(&qdir.join("masks.rle"))?,
            prior: read_pose_file(&qdir.join("prior.pose"))?,
            gt: read_pose_file(&qdir.join("gt.pose"))?,
            intrinsics: read_intrinsics_file(&qdir.join("intrinsics"))?,
        });
    }
    Ok(Bundle { model, queries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{extract_hypothesis_masks, render_instance_map, DEFAULT_MIN_INSTANCE_AREA};
    use crate::synth::{
        build_benchmark, BenchmarkSpec, Corruption, DensityMode, PriorOffset, QuerySpec, SceneSpec, Trajectory,
    };

    fn small_bundle() -> Bundle<f64> {
        let spec = BenchmarkSpec {
            scene: SceneSpec {
                extent: [300.0, 300.0],
                building_count: 9,
                footprint_range: [14.0, 24.0],
                height_range: [12.0, 30.0],
                min_spacing: 6.0,
                density_mode: DensityMode::Sparse,
                rng_seed: 17,
            },
            n_queries: 3,
            trajectory: Trajectory::Grid,
            sequence_step: 12.0,
            margin: 50.0,
            template: QuerySpec {
                gt_pose: Pose4::new(0.0, 0.0, 85.0, 0.0).with_attitude(-50.0, 0.0),
                intrinsics: Intrinsics::new(260.0, 260.0, 128.0, 72.0, 256, 144).unwrap(),
                corruption: Corruption::default(),
                prior_offset: PriorOffset { max_xy: 8.0, max_z: 2.0, max_yaw_deg: 4.0 },
                rng_seed: 31,
            },
        };
        build_benchmark(&spec).unwrap()
    }

    #[test]
    fn bundle_round_trips_bit_exactly() {
        let bundle = small_bundle();
        let dir = tempfile::tempdir().unwrap();
        write_bundle(&bundle, dir.path()).unwrap();
        let back: Bundle<f64> = read_bundle(dir.path()).unwrap();
        assert_eq!(back.model.mesh.vertices, bundle.model.mesh.vertices);
        assert_eq!(back.model.mesh.faces, bundle.model.mesh.faces);
        assert_eq!(back.model.face_instance, bundle.model.face_instance);
        assert_eq!(back.queries.len(), bundle.queries.len());
        for (a, b) in back.queries.iter().zip(&bundle.queries) {
            assert_eq!(a.masks.to_text(), b.masks.to_text());
            assert_eq!(a.prior, b.prior);
            assert_eq!(a.gt, b.gt);
            assert_eq!(a.intrinsics.width, b.intrinsics.width);
            assert_eq!(a.intrinsics.fx, b.intrinsics.fx);
        }
    }

    #[test]
    fn stored_masks_match_a_fresh_render_of_gt() {
        // Zero corruption means reading the bundle back and re-rendering at
        // the stored GT reproduces the stored masks bit-exactly.
        let bundle = small_bundle();
        let dir = tempfile::tempdir().unwrap();
        write_bundle(&bundle, dir.path()).unwrap();
        let back: Bundle<f64> = read_bundle(dir.path()).unwrap();
        for q in &back.queries {
            let map = render_instance_map(&back.model, &q.intrinsics, &q.gt).unwrap();
            let mut expect = MaskSet::new(q.intrinsics.width, q.intrinsics.height).unwrap();
            for e in &extract_hypothesis_masks::<f64>(&map, DEFAULT_MIN_INSTANCE_AREA).masks {
                for part in e.mask.connected_components(DEFAULT_MIN_INSTANCE_AREA) {
                    expect.push(part, 1.0).unwrap();
                }
            }
            assert_eq!(q.masks.to_text(), expect.to_text());
        }
    }

    #[test]
    fn corrupt_manifest_is_rejected() {
        let bundle = small_bundle();
        let dir = tempfile::tempdir().unwrap();
        write_bundle(&bundle, dir.path()).unwrap();
        fs::write(dir.path().join("manifest"), "queries 2\nquery q000\n").unwrap();
        let err = read_bundle::<f64>(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");
        fs::write(dir.path().join("manifest"), "bogus\n").unwrap();
        assert!(read_bundle::<f64>(dir.path()).is_err());
    }
}
