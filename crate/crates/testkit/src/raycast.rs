//! Per-pixel ray-casting oracle for the instance renderer, plus the
//! exemption maps. The comparison contract: the rasterizer must agree with
//! the nearest-hit ray caster at every pixel whose center lies more than
//! half a pixel from every projected triangle edge, excluding pixels where
//! two instances tie for the nearest depth (there the winner is undefined).

use cityloc::camera::{rotation_world_to_camera, Intrinsics, Pose4, NEAR_PLANE};
use cityloc::instance::InstancedModel;
use cityloc::scalar::Scalar;

struct Ctx {
    verts: Vec<[f64; 3]>,
    faces: Vec<[u32; 3]>,
    ids: Vec<u32>,
    rot: [[f64; 3]; 3],
    center: [f64; 3],
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
}

fn ctx<S: Scalar>(model: &InstancedModel<S>, intr: &Intrinsics<S>, pose: &Pose4<S>) -> Ctx {
    let pose64 = Pose4::new(
        pose.x.to_f64_lossy(),
        pose.y.to_f64_lossy(),
        pose.z.to_f64_lossy(),
        pose.yaw_deg.to_f64_lossy(),
    )
    .with_attitude(pose.pitch_deg.to_f64_lossy(), pose.roll_deg.to_f64_lossy());
    Ctx {
        verts: model
            .mesh
            .vertices
            .iter()
            .map(|v| [v[0].to_f64_lossy(), v[1].to_f64_lossy(), v[2].to_f64_lossy()])
            .collect(),
        faces: model.mesh.faces.clone(),
        ids: model.face_instance.clone(),
        rot: rotation_world_to_camera(&pose64),
        center: pose64.position(),
        fx: intr.fx.to_f64_lossy(),
        fy: intr.fy.to_f64_lossy(),
        cx: intr.cx.to_f64_lossy(),
        cy: intr.cy.to_f64_lossy(),
        width: intr.width,
        height: intr.height,
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Distance along the ray to the triangle, if hit. No backface culling;
/// boundary inclusivity is irrelevant under the edge exemption.
fn moller_trumbore(orig: [f64; 3], dir: [f64; 3], a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> Option<f64> {
    let e1 = sub(b, a);
    let e2 = sub(c, a);
    let p = cross(dir, e1);
    let det = dot(e2, p);
    if det == 0.0 {
        return None;
    }
    let inv = 1.0 / det;
    let tvec = sub(orig, a);
    let u = dot(tvec, p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = cross(tvec, e2);
    let v = dot(dir, q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some(dot(e1, q) * inv)
}

/// Casts one ray per pixel center and reports the instance ID of the
/// nearest hit at camera depth >= the near plane, 0 for misses. Exact depth
/// ties go to the lowest face index, like the renderer's submission order.
pub fn raycast_instance_map<S: Scalar>(model: &InstancedModel<S>, intr: &Intrinsics<S>, pose: &Pose4<S>) -> Vec<u32> {
    let c = ctx(model, intr, pose);
    let mut out = vec![0u32; (c.width as usize) * (c.height as usize)];
    for py in 0..c.height {
        for px in 0..c.width {
            let d_cam = [
                (px as f64 + 0.5 - c.cx) / c.fx,
                (py as f64 + 0.5 - c.cy) / c.fy,
                1.0,
            ];
            // Rows of the world-to-camera rotation are the camera axes in
            // world coordinates.
            let dir = [
                c.rot[0][0] * d_cam[0] + c.rot[1][0] * d_cam[1] + c.rot[2][0] * d_cam[2],
                c.rot[0][1] * d_cam[0] + c.rot[1][1] * d_cam[1] + c.rot[2][1] * d_cam[2],
                c.rot[0][2] * d_cam[0] + c.rot[1][2] * d_cam[1] + c.rot[2][2] * d_cam[2],
            ];
            let mut best_t = f64::INFINITY;
            let mut best_id = 0u32;
            for (f, face) in c.faces.iter().enumerate() {
                let (a, b, cc) = (
                    c.verts[face[0] as usize],
                    c.verts[face[1] as usize],
                    c.verts[face[2] as usize],
                );
                if let Some(t) = moller_trumbore(c.center, dir, a, b, cc) {
                    // The ray direction has unit camera-space z, so t is the
                    // camera depth of the hit.
                    if t >= NEAR_PLANE && t < best_t {
                        best_t = t;
                        best_id = c.ids[f];
                    }
                }
            }
            out[(py as usize) * (c.width as usize) + (px as usize)] = best_id;
        }
    }
    out
}

/// Marks every pixel where faces of two different instances hit within a
/// hair of the same depth. Coplanar overlapping faces (common in snapped
/// box soups) make the nearest-hit winner a floating-point coin toss: the
/// rasterizer and the ray caster may round the tied depths differently, so
/// these pixels carry no information about rasterizer correctness.
pub fn ambiguous_depth_pixels<S: Scalar>(model: &InstancedModel<S>, intr: &Intrinsics<S>, pose: &Pose4<S>) -> Vec<bool> {
    const REL_TOL: f64 = 1e-9;
    let c = ctx(model, intr, pose);
    let mut out = vec![false; (c.width as usize) * (c.height as usize)];
    for py in 0..c.height {
        for px in 0..c.width {
            let d_cam = [
                (px as f64 + 0.5 - c.cx) / c.fx,
                (py as f64 + 0.5 - c.cy) / c.fy,
                1.0,
            ];
            let dir = [
                c.rot[0][0] * d_cam[0] + c.rot[1][0] * d_cam[1] + c.rot[2][0] * d_cam[2],
                c.rot[0][1] * d_cam[0] + c.rot[1][1] * d_cam[1] + c.rot[2][1] * d_cam[2],
                c.rot[0][2] * d_cam[0] + c.rot[1][2] * d_cam[1] + c.rot[2][2] * d_cam[2],
            ];
            let mut hits: Vec<(f64, u32)> = Vec::new();
            for (f, face) in c.faces.iter().enumerate() {
                let (a, b, cc) = (
                    c.verts[face[0] as usize],
                    c.verts[face[1] as usize],
                    c.verts[face[2] as usize],
                );
                if let Some(t) = moller_trumbore(c.center, dir, a, b, cc) {
                    if t >= NEAR_PLANE {
                        hits.push((t, c.ids[f]));
                    }
                }
            }
            let Some(&(t_min, id_min)) = hits.iter().min_by(|a, b| a.0.partial_cmp(&b.0).unwrap()) else {
                continue;
            };
            let tied = hits
                .iter()
                .any(|&(t, id)| id != id_min && (t - t_min).abs() <= REL_TOL * t_min);
            out[(py as usize) * (c.width as usize) + (px as usize)] = tied;
        }
    }
    out
}

/// Marks every pixel whose center lies within half a pixel of a projected
/// edge of some triangle's visible (near-clipped) boundary. These pixels
/// are exempt from exact rasterizer/ray-caster agreement.
pub fn edge_exempt_pixels<S: Scalar>(model: &InstancedModel<S>, intr: &Intrinsics<S>, pose: &Pose4<S>) -> Vec<bool> {
    let c = ctx(model, intr, pose);
    let mut exempt = vec![false; (c.width as usize) * (c.height as usize)];
    let mut poly = Vec::with_capacity(4);
    let mut clipped = Vec::with_capacity(5);
    for face in &c.faces {
        poly.clear();
        for &vi in face {
            let v = c.verts[vi as usize];
            let p = sub(v, c.center);
            poly.push([
                c.rot[0][0] * p[0] + c.rot[0][1] * p[1] + c.rot[0][2] * p[2],
                c.rot[1][0] * p[0] + c.rot[1][1] * p[1] + c.rot[1][2] * p[2],
                c.rot[2][0] * p[0] + c.rot[2][1] * p[1] + c.rot[2][2] * p[2],
            ]);
        }
        clipped.clear();
        for i in 0..poly.len() {
            let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
            let (ina, inb) = (a[2] >= NEAR_PLANE, b[2] >= NEAR_PLANE);
            if ina {
                clipped.push(a);
            }
            if ina != inb {
                let s = (NEAR_PLANE - a[2]) / (b[2] - a[2]);
                clipped.push([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1]), NEAR_PLANE]);
            }
        }
        let screen: Vec<[f64; 2]> = clipped
            .iter()
            .map(|p| [c.fx * p[0] / p[2] + c.cx, c.fy * p[1] / p[2] + c.cy])
            .collect();
        for i in 0..screen.len() {
            mark_near_segment(&mut exempt, c.width, c.height, screen[i], screen[(i + 1) % screen.len()]);
        }
    }
    exempt
}

fn mark_near_segment(exempt: &mut [bool], width: u32, height: u32, a: [f64; 2], b: [f64; 2]) {
    // Pixel centers sit at integer + 0.5; exempt those within 0.5 px of the
    // segment (tiny slack so borderline distances never flake).
    const R: f64 = 0.5 + 1e-9;
    let x_lo = ((a[0].min(b[0]) - R - 0.5).floor().max(0.0)) as i64;
    let x_hi = ((a[0].max(b[0]) + R - 0.5).ceil().min(width as f64 - 1.0)) as i64;
    let y_lo = ((a[1].min(b[1]) - R - 0.5).floor().max(0.0)) as i64;
    let y_hi = ((a[1].max(b[1]) + R - 0.5).ceil().min(height as f64 - 1.0)) as i64;
    if x_hi < x_lo || y_hi < y_lo {
        return;
    }
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    for py in y_lo..=y_hi {
        for px in x_lo..=x_hi {
            let (qx, qy) = (px as f64 + 0.5, py as f64 + 0.5);
            let s = if len2 > 0.0 {
                (((qx - a[0]) * dx + (qy - a[1]) * dy) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let (ex, ey) = (a[0] + s * dx - qx, a[1] + s * dy - qy);
            if ex * ex + ey * ey <= R * R {
                exempt[(py as usize) * (width as usize) + (px as usize)] = true;
            }
        }
    }
}

/// Indices of pixels where the two maps disagree and no exemption applies.
pub fn disagreements(raster: &[u32], oracle: &[u32], exempt: &[bool]) -> Vec<usize> {
    assert_eq!(raster.len(), oracle.len());
    assert_eq!(raster.len(), exempt.len());
    (0..raster.len())
        .filter(|&i| raster[i] != oracle[i] && !exempt[i])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use cityloc::instance::instancify;
    use cityloc::mesh::Mesh;
    use cityloc::push_box;

    #[test]
    fn nadir_box_paints_the_expected_square() {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        push_box(&mut vertices, &mut faces, [-5.0, -5.0, 0.0], [5.0, 5.0, 20.0]);
        let model = instancify(&Mesh::new(vertices, faces).unwrap(), 1e-6).unwrap();
        let intr = Intrinsics::new(64.0, 64.0, 32.0, 32.0, 64, 64).unwrap();
        let pose = Pose4::new(0.0, 0.0, 100.0, 0.0).with_attitude(-90.0, 0.0);
        let ids = raycast_instance_map(&model, &intr, &pose);
        // Top face at z=20 spans 10 m at 80 m depth with f=64: 8 px square.
        let ones = ids.iter().filter(|&&i| i == 1).count();
        assert_eq!(ones, 64, "got {ones}");
        let exempt = edge_exempt_pixels(&model, &intr, &pose);
        assert!(exempt.iter().any(|&e| e), "square boundary must be exempt");
        assert!(!exempt.iter().all(|&e| e), "interior must not be exempt");
    }
}
