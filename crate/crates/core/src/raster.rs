use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;

use crate::camera::{extrinsics, Extrinsics, Intrinsics, Pose4, NEAR_PLANE};
use crate::error::{Error, Result};
use crate::instance::{color_to_id, id_to_color, InstancedModel};
use crate::mask::{Mask, MaskBuilder, MaskSet};
use crate::scalar::Scalar;

/// Rendered instance masks smaller than this are dropped before matching;
/// slivers of a few pixels produce meaningless Dice values.
pub const DEFAULT_MIN_INSTANCE_AREA: u64 = 25;

/// Per-pixel instance ids (0 = background) rendered at a pose.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceMap<S> {
    width: u32,
    height: u32,
    ids: Vec<u32>,
    pose: Pose4<S>,
    /// Half-open bbox of nonzero pixels; None when the map is all background.
    drawn: Option<[u32; 4]>,
}

impl<S: Scalar> InstanceMap<S> {
    /// Wraps an existing id grid, e.g. one read back from an image file.
    pub fn from_parts(width: u32, height: u32, ids: Vec<u32>, pose: Pose4<S>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Domain("instance map must have a nonzero viewport".into()));
        }
        if ids.len() != (width as usize) * (height as usize) {
            return Err(Error::Domain(format!(
                "id grid holds {} pixels, expected {}",
                ids.len(),
                (width as usize) * (height as usize)
            )));
        }
        let mut map = InstanceMap { width, height, ids, pose, drawn: None };
        map.drawn = map.scan_drawn();
        Ok(map)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn pose(&self) -> &Pose4<S> {
        &self.pose
    }

    pub fn id_at(&self, x: u32, y: u32) -> u32 {
        self.ids[(y as usize) * (self.width as usize) + x as usize]
    }

    fn scan_drawn(&self) -> Option<[u32; 4]> {
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0u32, 0u32);
        for y in 0..self.height {
            let row = &self.ids[(y as usize) * (self.width as usize)..][..self.width as usize];
            for (x, &id) in row.iter().enumerate() {
                if id != 0 {
                    x0 = x0.min(x as u32);
                    x1 = x1.max(x as u32 + 1);
                    y0 = y0.min(y);
                    y1 = y1.max(y + 1);
                }
            }
        }
        (x1 > 0).then_some([x0, y0, x1, y1])
    }
}

/// A screen-space triangle ready for scan conversion: vertices carry pixel
/// coordinates plus inverse depth, the winding is already fixed so the
/// interior has nonnegative edge values, and `id` is the owning instance.
struct ScreenTri<S> {
    v: [[S; 3]; 3],
    id: u32,
}

/// World-to-screen setup shared by the serial and banded rasterizers:
/// transform to camera space, clip to the near plane, project, fan
/// triangulate, orient.
fn setup_triangles<S: Scalar>(
    model: &InstancedModel<S>,
    intr: &Intrinsics<S>,
    ext: &Extrinsics<S>,
) -> Vec<ScreenTri<S>> {
    let near = S::of(NEAR_PLANE);
    let mut tris = Vec::with_capacity(model.mesh.faces.len());
    let mut clipped: Vec<[S; 3]> = Vec::with_capacity(4);
    for (f, face) in model.mesh.faces.iter().enumerate() {
        let id = model.face_instance[f];
        let cam: Vec<[S; 3]> = face.iter().map(|&vi| ext.transform(model.mesh.vertices[vi as usize])).collect();
        if cam.iter().all(|p| p[2] < near) {
            continue;
        }
        clip_near(&cam, near, &mut clipped);
        if clipped.len() < 3 {
            continue;
        }
        // Project; inverse depth is affine across the projected triangle, so
        // it can be interpolated with the same barycentric weights as ids.
        let proj: Vec<[S; 3]> = clipped
            .iter()
            .map(|p| {
                let iz = S::one() / p[2];
                [intr.fx * p[0] * iz + intr.cx, intr.fy * p[1] * iz + intr.cy, iz]
            })
            .collect();
        for k in 1..proj.len() - 1 {
            let (a, b, c) = (proj[0], proj[k], proj[k + 1]);
            let area2 = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
            if area2 == S::zero() || !area2.is_finite() {
                continue;
            }
            // Winding is normalized instead of culled: source meshes mix
            // orientations and the z-buffer alone resolves visibility.
            let v = if area2 > S::zero() { [a, b, c] } else { [a, c, b] };
            tris.push(ScreenTri { v, id });
        }
    }
    tris
}

/// Sutherland-Hodgman clip of a camera-space polygon against z >= near.
fn clip_near<S: Scalar>(poly: &[[S; 3]], near: S, out: &mut Vec<[S; 3]>) {
    out.clear();
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let (ain, bin) = (a[2] >= near, b[2] >= near);
        if ain {
            out.push(a);
        }
        if ain != bin {
            let t = (near - a[2]) / (b[2] - a[2]);
            out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), near]);
        }
    }
}

struct Edge<S> {
    a: S,
    b: S,
    c: S,
    /// Pixels exactly on this edge belong to the triangle only when the edge
    /// is a top or left edge, so abutting triangles never double-own a pixel.
    top_left: bool,
}

fn edge_between<S: Scalar>(p: [S; 3], q: [S; 3]) -> Edge<S> {
    let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
    Edge {
        a: p[1] - q[1],
        b: dx,
        c: p[0] * q[1] - q[0] * p[1],
        top_left: (dy == S::zero() && dx > S::zero()) || dy < S::zero(),
    }
}

impl<S: Scalar> Edge<S> {
    /// Fused evaluation at a pixel center; the same expression at every
    /// pixel, so results cannot depend on scan order or banding.
    #[inline]
    fn at(&self, px: S, py: S) -> S {
        self.a * px + self.b * py + self.c
    }

    #[inline]
    fn covers(&self, e: S) -> bool {
        e > S::zero() || (e == S::zero() && self.top_left)
    }
}

/// Rasterizes `tris` into the row band [row0, row0 + rows). `ids` and
/// `depth` are the band's slices. Returns the band's drawn bbox.
fn raster_rows<S: Scalar>(
    tris: &[ScreenTri<S>],
    width: u32,
    row0: u32,
    rows: u32,
    ids: &mut [u32],
    depth: &mut [f32],
) -> Option<[u32; 4]> {
    let half = S::of(0.5);
    let (mut bx0, mut by0, mut bx1, mut by1) = (u32::MAX, u32::MAX, 0u32, 0u32);
    for tri in tris {
        let [a, b, c] = tri.v;
        let e01 = edge_between(a, b);
        let e12 = edge_between(b, c);
        let e20 = edge_between(c, a);
        // Setup normalized the winding, but the area is re-derived here from
        // an edge function; slivers whose re-evaluation rounds to zero or
        // below are dropped rather than divided by.
        let area2 = e12.at(a[0], a[1]);
        if !(area2 > S::zero()) {
            continue;
        }
        let inv_area2 = S::one() / area2;

        let min = |i: usize| a[i].min(b[i]).min(c[i]);
        let max = |i: usize| a[i].max(b[i]).max(c[i]);
        // Pixel centers sit at integer + 0.5; the candidate range is every
        // center inside the triangle bbox, clamped to the band.
        let x_lo = ((min(0) - half).ceil().to_f64_lossy()).max(0.0) as i64;
        let x_hi = ((max(0) - half).floor().to_f64_lossy()).min(width as f64 - 1.0) as i64;
        let y_lo = ((min(1) - half).ceil().to_f64_lossy()).max(row0 as f64) as i64;
        let y_hi = ((max(1) - half).floor().to_f64_lossy()).min((row0 + rows) as f64 - 1.0) as i64;
        if x_lo > x_hi || y_lo > y_hi {
            continue;
        }
        for y in y_lo..=y_hi {
            let py = S::of_u64(y as u64) + half;
            let row_base = (y as usize - row0 as usize) * width as usize;
            for x in x_lo..=x_hi {
                let px = S::of_u64(x as u64) + half;
                let v01 = e01.at(px, py);
                if !e01.covers(v01) {
                    continue;
                }
                let v12 = e12.at(px, py);
                if !e12.covers(v12) {
                    continue;
                }
                let v20 = e20.at(px, py);
                if !e20.covers(v20) {
                    continue;
                }
                let iz = (v12 * a[2] + v20 * b[2] + v01 * c[2]) * inv_area2;
                let izf = iz.to_f64_lossy() as f32;
                let idx = row_base + x as usize;
                // Strict test: depth ties keep the first-drawn face, which is
                // the lowest face index since faces are submitted in order.
                if izf > depth[idx] {
                    depth[idx] = izf;
                    ids[idx] = tri.id;
                    bx0 = bx0.min(x as u32);
                    bx1 = bx1.max(x as u32 + 1);
                    by0 = by0.min(y as u32);
                    by1 = by1.max(y as u32 + 1);
                }
            }
        }
    }
    (bx1 > 0).then_some([bx0, by0, bx1, by1])
}

fn merge_bbox(a: Option<[u32; 4]>, b: Option<[u32; 4]>) -> Option<[u32; 4]> {
    match (a, b) {
        (Some(a), Some(b)) => Some([a[0].min(b[0]), a[1].min(b[1]), a[2].max(b[2]), a[3].max(b[3])]),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Reusable framebuffer memory for render loops that evaluate many poses.
#[derive(Default)]
pub struct RenderScratch {
    depth: Vec<f32>,
}

impl RenderScratch {
    pub fn new() -> Self {
        Self::default()
    }
}

fn prepare_buffers<S: Scalar>(
    model: &InstancedModel<S>,
    intr: &Intrinsics<S>,
    pose: &Pose4<S>,
    scratch: &mut RenderScratch,
) -> Result<(InstanceMap<S>, Vec<ScreenTri<S>>)> {
    pose.validate()?;
    let n = (intr.width as usize) * (intr.height as usize);
    scratch.depth.clear();
    scratch.depth.resize(n, 0.0);
    let map = InstanceMap {
        width: intr.width,
        height: intr.height,
        ids: vec![0; n],
        pose: pose.clone(),
        drawn: None,
    };
    let ext = extrinsics(pose);
    Ok((map, setup_triangles(model, intr, &ext)))
}

/// Renders the nearest-face instance id at every pixel center, with
/// near-plane clipping and z-buffer hidden-surface removal. Deterministic:
/// identical inputs give identical pixel arrays.
pub fn render_instance_map<S: Scalar>(
    model: &InstancedModel<S>,
    intr: &Intrinsics<S>,
    pose: &Pose4<S>,
) -> Result<InstanceMap<S>> {
    let mut scratch = RenderScratch::new();
    render_with_scratch(model, intr, pose, &mut scratch)
}

/// `render_instance_map` with caller-owned depth storage, for hot loops.
pub fn render_with_scratch<S: Scalar>(
    model: &InstancedModel<S>,
    intr: &Intrinsics<S>,
    pose: &Pose4<S>,
    scratch: &mut RenderScratch,
) -> Result<InstanceMap<S>> {
    let (mut map, tris) = prepare_buffers(model, intr, pose, scratch)?;
    map.drawn = raster_rows(&tris, intr.width, 0, intr.height, &mut map.ids, &mut scratch.depth);
    Ok(map)
}

/// Same output as `render_instance_map`, produced by scanline bands running
/// in parallel. Bands own disjoint rows and every band submits faces in the
/// same order, so each pixel sees the identical candidate sequence and the
/// result is bit-equal to the serial path at any thread count.
pub fn render_instance_map_parallel<S: Scalar>(
    model: &InstancedModel<S>,
    intr: &Intrinsics<S>,
    pose: &Pose4<S>,
) -> Result<InstanceMap<S>> {
    let mut scratch = RenderScratch::new();
    let (mut map, tris) = prepare_buffers(model, intr, pose, &mut scratch)?;
    let bands = rayon::current_num_threads().max(1) as u32;
    let band_rows = intr.height.div_ceil(bands).max(1);
    let chunk = (band_rows as usize) * (intr.width as usize);
    let boxes: Vec<Option<[u32; 4]>> = map
        .ids
        .par_chunks_mut(chunk)
        .zip(scratch.depth.par_chunks_mut(chunk))
        .enumerate()
        .map(|(band, (ids, depth))| {
            let row0 = band as u32 * band_rows;
            let rows = (ids.len() / intr.width as usize) as u32;
            raster_rows(&tris, intr.width, row0, rows, ids, depth)
        })
        .collect();
    map.drawn = boxes.into_iter().fold(None, merge_bbox);
    Ok(map)
}

/// Binary union of all instances: pixel set iff its id is nonzero.
pub fn semantic_silhouette<S: Scalar>(map: &InstanceMap<S>) -> Mask {
    let mut b = MaskBuilder::new(map.width, map.height).expect("map viewport already validated");
    scan_runs(map, |_, start, len| b.push_span(start, len).expect("spans emitted in order"));
    b.finish()
}

/// One mask per distinct nonzero id present, in ascending id order, each
/// with confidence 1 and its tight bbox. Masks under `min_area` pixels are
/// dropped. A building split into blobs by an occluder stays one mask; a
/// query fragment can then still match it.
pub fn extract_hypothesis_masks<S: Scalar>(map: &InstanceMap<S>, min_area: u64) -> MaskSet<S> {
    let mut builders: HashMap<u32, MaskBuilder> = HashMap::new();
    scan_runs(map, |id, start, len| {
        builders
            .entry(id)
            .or_insert_with(|| MaskBuilder::new(map.width, map.height).expect("map viewport already validated"))
            .push_span(start, len)
            .expect("spans emitted in order");
    });
    let mut ids: Vec<u32> = builders.keys().copied().collect();
    ids.sort_unstable();
    let mut set = MaskSet::new(map.width, map.height).expect("map viewport already validated");
    for id in ids {
        let mask = builders.remove(&id).unwrap().finish();
        if mask.ones() >= min_area {
            set.push(mask, S::one()).expect("dimensions and confidence are valid by construction");
        }
    }
    set
}

/// Walks maximal same-id runs of nonzero pixels inside the drawn window.
fn scan_runs<S: Scalar>(map: &InstanceMap<S>, mut emit: impl FnMut(u32, u64, u64)) {
    let Some([x0, y0, x1, y1]) = map.drawn else { return };
    let w = map.width as usize;
    for y in y0..y1 {
        let row = &map.ids[(y as usize) * w..][..w];
        let mut x = x0 as usize;
        while x < x1 as usize {
            let id = row[x];
            if id == 0 {
                x += 1;
                continue;
            }
            let start = x;
            while x < x1 as usize && row[x] == id {
                x += 1;
            }
            emit(id, (y as u64) * (w as u64) + start as u64, (x - start) as u64);
        }
    }
}

/// Writes the map as an RGB image under the big-endian id-to-color code;
/// background is black. `read_instance_ids_png` inverts it exactly.
pub fn write_instance_png<S: Scalar>(map: &InstanceMap<S>, path: &Path) -> Result<()> {
    let img = image::RgbImage::from_fn(map.width, map.height, |x, y| {
        image::Rgb(id_to_color(map.id_at(x, y)).expect("rendered ids fit 24 bits"))
    });
    img.save(path).map_err(|e| Error::Domain(format!("writing {}: {e}", path.display())))
}

pub fn read_instance_ids_png(path: &Path) -> Result<(u32, u32, Vec<u32>)> {
    let img = image::open(path)
        .map_err(|e| Error::Domain(format!("reading {}: {e}", path.display())))?
        .to_rgb8();
    let ids = img.pixels().map(|p| color_to_id([p.0[0], p.0[1], p.0[2]])).collect();
    Ok((img.width(), img.height(), ids))
}
