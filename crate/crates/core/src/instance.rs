use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::{parse_obj, Mesh};
use crate::scalar::Scalar;

/// Largest representable instance id: ids must survive a 24-bit RGB
/// round-trip, and 0 is reserved for background.
pub const MAX_INSTANCE_ID: u32 = 0x00FF_FFFF;

/// Vertices closer than this are welded into one adjacency node when
/// partitioning a mesh into instances.
pub const DEFAULT_WELD_TOLERANCE: f64 = 1e-6;

/// A mesh partitioned into building instances. `face_instance[i]` is the
/// 1-based id of the instance owning face `i`; `instance_ids` lists the ids
/// present, ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct InstancedModel<S> {
    pub mesh: Mesh<S>,
    pub face_instance: Vec<u32>,
    pub instance_ids: Vec<u32>,
}

impl<S: Scalar> InstancedModel<S> {
    pub fn new(mesh: Mesh<S>, face_instance: Vec<u32>) -> Result<Self> {
        if face_instance.len() != mesh.faces.len() {
            return Err(Error::Domain("face_instance length differs from face count".into()));
        }
        let mut ids: Vec<u32> = face_instance.clone();
        ids.sort_unstable();
        ids.dedup();
        if ids.first().is_some_and(|&i| i == 0) {
            return Err(Error::Domain("instance id 0 is reserved for background".into()));
        }
        if ids.last().is_some_and(|&i| i > MAX_INSTANCE_ID) {
            return Err(Error::Domain(format!("instance id beyond 24-bit capacity ({MAX_INSTANCE_ID})")));
        }
        Ok(InstancedModel { mesh, face_instance, instance_ids: ids })
    }

    pub fn instance_count(&self) -> usize {
        self.instance_ids.len()
    }

    pub fn face_count_of(&self, id: u32) -> usize {
        self.face_instance.iter().filter(|&&f| f == id).count()
    }
}

// ==== union-find ====

struct Dsu {
    parent: Vec<u32>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu { parent: (0..n as u32).collect() }
    }

    fn find(&mut self, i: u32) -> u32 {
        let mut r = i;
        while self.parent[r as usize] != r {
            r = self.parent[r as usize];
        }
        // Path compression; grandparent hops would also do, full splice is
        // simplest and this is far from hot.
        let mut c = i;
        while self.parent[c as usize] != r {
            let next = self.parent[c as usize];
            self.parent[c as usize] = r;
            c = next;
        }
        r
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Deterministic: smaller root wins, no rank heuristics.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

// ==== instancing ====

/// Partitions a mesh into connected components over shared-vertex adjacency
/// after welding vertices within `weld_tolerance` (Euclidean). Components
/// get ids 1..=M ordered by their smallest face index.
pub fn instancify<S: Scalar>(mesh: &Mesh<S>, weld_tolerance: f64) -> Result<InstancedModel<S>> {
    if weld_tolerance <= 0.0 || !weld_tolerance.is_finite() {
        return Err(Error::Domain("weld tolerance must be positive and finite".into()));
    }
    let n = mesh.vertices.len();
    let mut dsu = Dsu::new(n);

    // Spatial hash on cells of the weld tolerance; any pair within tolerance
    // lands in the same or a neighboring cell.
    let mut grid: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
    let tol2 = weld_tolerance * weld_tolerance;
    let cell_of = |v: &[S; 3]| -> [i64; 3] {
        [
            (v[0].to_f64_lossy() / weld_tolerance).floor() as i64,
            (v[1].to_f64_lossy() / weld_tolerance).floor() as i64,
            (v[2].to_f64_lossy() / weld_tolerance).floor() as i64,
        ]
    };
    for (i, v) in mesh.vertices.iter().enumerate() {
        let c = cell_of(v);
        for dx in -1..=1i64 {
            for dy in -1..=1i64 {
                for dz in -1..=1i64 {
                    let key = [c[0] + dx, c[1] + dy, c[2] + dz];
                    if let Some(bucket) = grid.get(&key) {
                        for &j in bucket {
                            let u = &mesh.vertices[j as usize];
                            let d2 = (0..3).fold(0.0f64, |acc, k| {
                                let d = v[k].to_f64_lossy() - u[k].to_f64_lossy();
                                acc + d * d
                            });
                            if d2 < tol2 {
                                dsu.union(i as u32, j);
                            }
                        }
                    }
                }
            }
        }
        grid.entry(c).or_default().push(i as u32);
    }

    for f in &mesh.faces {
        dsu.union(f[0], f[1]);
        dsu.union(f[0], f[2]);
    }

    let mut id_of_root: HashMap<u32, u32> = HashMap::new();
    let mut face_instance = Vec::with_capacity(mesh.faces.len());
    let mut next = 1u32;
    for f in &mesh.faces {
        let root = dsu.find(f[0]);
        let id = *id_of_root.entry(root).or_insert_with(|| {
            let id = next;
            next += 1;
            id
        });
        face_instance.push(id);
    }
    if next - 1 > MAX_INSTANCE_ID {
        return Err(Error::Domain(format!(
            "{} components exceed the 24-bit instance capacity",
            next - 1
        )));
    }
    InstancedModel::new(mesh.clone(), face_instance)
}

// ==== id <-> color ====

/// Big-endian 24-bit id to RGB: r carries the high byte. Id 0 (background)
/// maps to black.
pub fn id_to_color(id: u32) -> Result<[u8; 3]> {
    if id > MAX_INSTANCE_ID {
        return Err(Error::Domain(format!("id {id} exceeds 24-bit color capacity")));
    }
    Ok([(id >> 16) as u8, (id >> 8) as u8, id as u8])
}

pub fn color_to_id(rgb: [u8; 3]) -> u32 {
    ((rgb[0] as u32) << 16) | ((rgb[1] as u32) << 8) | rgb[2] as u32
}

// ==== model artifact io ====

/// Writes `<out>.obj` plus the `<out>.instances` manifest. Faces are grouped
/// under `o building_<id>` headers in ascending id order, so models whose
/// faces already arrive grouped (every generator here) round-trip with an
/// identical face order and id assignment.
pub fn write_instanced_model<S: Scalar>(model: &InstancedModel<S>, obj_path: &Path) -> Result<()> {
    let mut obj = String::new();
    for v in &model.mesh.vertices {
        writeln!(obj, "v {} {} {}", v[0], v[1], v[2]).unwrap();
    }
    for &id in &model.instance_ids {
        writeln!(obj, "o building_{id}").unwrap();
        for (f, &fid) in model.mesh.faces.iter().zip(&model.face_instance) {
            if fid == id {
                writeln!(obj, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).unwrap();
            }
        }
    }
    std::fs::write(obj_path, obj)?;
    std::fs::write(manifest_path_for(obj_path), manifest_text(model)?)?;
    Ok(())
}

pub fn manifest_path_for(obj_path: &Path) -> std::path::PathBuf {
    obj_path.with_extension("instances")
}

fn manifest_text<S: Scalar>(model: &InstancedModel<S>) -> Result<String> {
    let mut counts: HashMap<u32, usize> = HashMap::new();
    for &id in &model.face_instance {
        *counts.entry(id).or_default() += 1;
    }
    let mut s = format!("instances {}\n", model.instance_ids.len());
    for &id in &model.instance_ids {
        let [r, g, b] = id_to_color(id)?;
        writeln!(s, "{id} {r:02x}{g:02x}{b:02x} {}", counts[&id]).unwrap();
    }
    Ok(s)
}

/// Reads an OBJ written by `write_instanced_model` together with its
/// manifest. Faces take the id of the enclosing `o building_<id>` group; the
/// manifest's ids, colors and face counts are cross-checked.
pub fn read_instanced_model<S: Scalar>(obj_path: &Path) -> Result<InstancedModel<S>> {
    let obj_text = std::fs::read_to_string(obj_path)?;
    let manifest_text = std::fs::read_to_string(manifest_path_for(obj_path))?;

    let mesh: Mesh<S> = parse_obj(&obj_text)?;

    // Second pass for group structure; parse_obj already validated geometry.
    let mut face_instance: Vec<u32> = Vec::with_capacity(mesh.faces.len());
    let mut current: Option<u32> = None;
    for (lineno, raw) in obj_text.lines().enumerate() {
        let lineno = lineno + 1;
        let mut tok = raw.split_whitespace();
        match tok.next() {
            Some("o") => {
                let name = tok.next().unwrap_or("");
                let id: u32 = name
                    .strip_prefix("building_")
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::parse(lineno, format!("group {name:?} is not building_<id>")))?;
                current = Some(id);
            }
            Some("f") => {
                let id = current
                    .ok_or_else(|| Error::parse(lineno, "face before any instance group"))?;
                let ntri = tok.count().saturating_sub(2);
                face_instance.extend(std::iter::repeat(id).take(ntri));
            }
            _ => {}
        }
    }

    let model = InstancedModel::new(mesh, face_instance)?;

    let mut lines = manifest_text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "empty manifest"))?;
    let n: usize = header
        .strip_prefix("instances ")
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::parse(1, "manifest header must be 'instances <n>'"))?;
    if n != model.instance_ids.len() {
        return Err(Error::parse(1, format!(
            "manifest lists {n} instances, OBJ groups define {}",
            model.instance_ids.len()
        )));
    }
    let mut seen = 0usize;
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Error::parse(lineno, "manifest record must be '<id> <rrggbb> <faces>'"));
        }
        let id: u32 = parts[0]
            .parse()
            .map_err(|e| Error::parse(lineno, format!("bad id: {e}")))?;
        if !model.instance_ids.contains(&id) {
            return Err(Error::parse(lineno, format!("manifest id {id} has no OBJ group")));
        }
        let [r, g, b] = id_to_color(id)?;
        let expect_color = format!("{r:02x}{g:02x}{b:02x}");
        if parts[1] != expect_color {
            return Err(Error::parse(lineno, format!(
                "color {} does not match id {id} (expected {expect_color})",
                parts[1]
            )));
        }
        let fc: usize = parts[2]
            .parse()
            .map_err(|e| Error::parse(lineno, format!("bad face count: {e}")))?;
        let actual = model.face_count_of(id);
        if fc != actual {
            return Err(Error::parse(lineno, format!(
                "manifest says {fc} faces for id {id}, OBJ has {actual}"
            )));
        }
        seen += 1;
    }
    if seen != n {
        return Err(Error::parse(1, format!("manifest header says {n} records, found {seen}")));
    }
    Ok(model)
}
