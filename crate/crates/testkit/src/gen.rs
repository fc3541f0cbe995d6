//! Seeded generators: random masks and mask sets for metric fuzzing, and
//! triangle-soup scenes with duplicated vertices for instancing and
//! rendering oracles.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use cityloc::camera::{Intrinsics, Pose4};
use cityloc::mask::{Mask, MaskSet};
use cityloc::mesh::Mesh;

/// Union of a few random rectangles plus occasional speckle; may be empty.
pub fn random_mask(rng: &mut ChaCha8Rng, width: u32, height: u32) -> Mask {
    let mut bits = vec![false; (width * height) as usize];
    let rects = rng.gen_range(0..=3);
    for _ in 0..rects {
        let x0 = rng.gen_range(0..width);
        let y0 = rng.gen_range(0..height);
        let x1 = rng.gen_range(x0..=width.min(x0 + width / 2).max(x0));
        let y1 = rng.gen_range(y0..=height.min(y0 + height / 2).max(y0));
        for y in y0..y1 {
            for x in x0..x1 {
                bits[(y * width + x) as usize] = true;
            }
        }
    }
    if rng.gen_bool(0.3) {
        let flips = ((width * height) / 20).max(1);
        for _ in 0..flips {
            let i = rng.gen_range(0..bits.len());
            bits[i] = true;
        }
    }
    Mask::from_dense(width, height, &bits).expect("generator dimensions are valid")
}

pub fn random_mask_nonempty(rng: &mut ChaCha8Rng, width: u32, height: u32) -> Mask {
    loop {
        let m = random_mask(rng, width, height);
        if !m.is_empty() {
            return m;
        }
    }
}

/// Up to `max_masks` random masks with confidences in (0, 1].
pub fn random_maskset(rng: &mut ChaCha8Rng, width: u32, height: u32, max_masks: usize) -> MaskSet<f64> {
    let mut set = MaskSet::new(width, height).expect("generator dimensions are valid");
    for _ in 0..rng.gen_range(0..=max_masks) {
        let conf = if rng.gen_bool(0.2) { 1.0 } else { rng.gen_range(0.01..=1.0) };
        set.push(random_mask(rng, width, height), conf).expect("confidence in range");
    }
    set
}

/// Triangle-soup city: every face carries its own vertex copies, face order
/// shuffled. On even `grid_snap`, box corners land on integers so touching
/// boxes share coordinates bit-exactly and weld into one component; with
/// jitter all boxes stay separate.
pub fn soup_scene(rng: &mut ChaCha8Rng, max_boxes: usize, grid_snap: bool) -> Mesh<f64> {
    let n = rng.gen_range(1..=max_boxes);
    let mut corner_tris: Vec<[[f64; 3]; 3]> = Vec::with_capacity(n * 12);
    for _ in 0..n {
        let (x0, y0) = (rng.gen_range(0..=34) as f64, rng.gen_range(0..=34) as f64);
        let (w, d) = (rng.gen_range(2..=6) as f64, rng.gen_range(2..=6) as f64);
        let h = rng.gen_range(2..=20) as f64;
        let (jx, jy) = if grid_snap { (0.0, 0.0) } else { (rng.gen::<f64>() * 0.4, rng.gen::<f64>() * 0.4) };
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        cityloc::push_box(&mut vertices, &mut faces, [x0 + jx, y0 + jy, 0.0], [x0 + jx + w, y0 + jy + d, h]);
        for f in &faces {
            corner_tris.push([vertices[f[0] as usize], vertices[f[1] as usize], vertices[f[2] as usize]]);
        }
    }
    corner_tris.shuffle(rng);
    let mut vertices = Vec::with_capacity(corner_tris.len() * 3);
    let mut faces = Vec::with_capacity(corner_tris.len());
    for tri in corner_tris {
        let base = vertices.len() as u32;
        vertices.extend(tri);
        faces.push([base, base + 1, base + 2]);
    }
    Mesh::new(vertices, faces).expect("generator produces valid meshes")
}

/// A 64x64 aerial view over the soup-scene footprint ([0, 40] square),
/// aimed near its center so most scenes are actually visible.
pub fn aimed_view(rng: &mut ChaCha8Rng) -> (Intrinsics<f64>, Pose4<f64>) {
    let intr = Intrinsics::new(
        rng.gen_range(40.0..80.0),
        rng.gen_range(40.0..80.0),
        32.0 + rng.gen_range(-3.0..3.0),
        32.0 + rng.gen_range(-3.0..3.0),
        64,
        64,
    )
    .expect("valid intrinsics");
    let (x, y): (f64, f64) = (rng.gen_range(5.0..35.0), rng.gen_range(5.0..35.0));
    let z = rng.gen_range(50.0..90.0);
    // Forward ground direction is (-sin yaw, +cos yaw); aim it at (20, 20).
    let (dx, dy) = (20.0 - x, 20.0 - y);
    let yaw = (-dx).atan2(dy).to_degrees() + rng.gen_range(-20.0..20.0);
    let pitch = rng.gen_range(-90.0..-50.0);
    let roll = rng.gen_range(-10.0..10.0);
    (intr, Pose4::new(x, y, z, yaw).with_attitude(pitch, roll))
}
