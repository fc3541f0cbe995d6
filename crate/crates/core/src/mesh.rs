use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Indexed triangle soup. Faces always hold 3 distinct vertex indices; quads
/// and larger polygons are fan-triangulated at parse time.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh<S> {
    pub vertices: Vec<[S; 3]>,
    pub faces: Vec<[u32; 3]>,
}

impl<S: Scalar> Mesh<S> {
    pub fn new(vertices: Vec<[S; 3]>, faces: Vec<[u32; 3]>) -> Result<Self> {
        let n = vertices.len() as u64;
        for (i, f) in faces.iter().enumerate() {
            if f.iter().any(|&v| v as u64 >= n) {
                return Err(Error::Domain(format!("face {i} references vertex out of range")));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::Domain(format!("face {i} has repeated vertex indices")));
            }
        }
        Ok(Mesh { vertices, faces })
    }
}

/// Parses ASCII Wavefront OBJ text. Only `v` and `f` records are
/// interpreted; everything else (groups, normals, materials, comments) is
/// ignored. Vertex records must carry exactly three coordinates. Face
/// records may be polygons (fan-triangulated from the first vertex) and may
/// use the `i/t/n` forms; only the vertex index is read. Negative indices
/// resolve against the vertices defined so far, OBJ style.
pub fn parse_obj<S: Scalar>(text: &str) -> Result<Mesh<S>> {
    let mut vertices: Vec<[S; 3]> = Vec::new();
    // Positive indices may legally point forward, so faces are validated
    // against the final vertex count after the single pass.
    let mut faces: Vec<(usize, [u64; 3])> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let mut tok = raw.split_whitespace();
        match tok.next() {
            Some("v") => {
                let coords: Vec<&str> = tok.collect();
                if coords.len() != 3 {
                    return Err(Error::parse(
                        lineno,
                        format!("vertex record needs 3 coordinates, got {}", coords.len()),
                    ));
                }
                let mut v = [S::zero(); 3];
                for (i, c) in coords.iter().enumerate() {
                    v[i] = c.parse::<S>().map_err(|e| {
                        Error::parse(lineno, format!("bad vertex coordinate {c:?}: {e}"))
                    })?;
                }
                vertices.push(v);
            }
            Some("f") => {
                let mut idx: Vec<u64> = Vec::new();
                for t in tok {
                    let head = t.split('/').next().unwrap_or("");
                    let i: i64 = head
                        .parse()
                        .map_err(|e| Error::parse(lineno, format!("bad face index {t:?}: {e}")))?;
                    let resolved = match i {
                        0 => return Err(Error::parse(lineno, "face index 0 is not valid")),
                        n if n < 0 => {
                            let r = vertices.len() as i64 + n + 1;
                            if r < 1 {
                                return Err(Error::parse(lineno, format!("face index {n} out of range")));
                            }
                            r as u64
                        }
                        n => n as u64,
                    };
                    idx.push(resolved);
                }
                if idx.len() < 3 {
                    return Err(Error::parse(lineno, "face record needs at least 3 indices"));
                }
                for k in 1..idx.len() - 1 {
                    faces.push((lineno, [idx[0], idx[k], idx[k + 1]]));
                }
            }
            _ => {}
        }
    }

    let vcount = vertices.len() as u64;
    let mut out = Vec::with_capacity(faces.len());
    for (lineno, f) in faces {
        if f.iter().any(|&v| v > vcount) {
            return Err(Error::parse(lineno, format!("face index out of range (file has {vcount} vertices)")));
        }
        if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
            return Err(Error::parse(lineno, "degenerate face with repeated vertex"));
        }
        out.push([(f[0] - 1) as u32, (f[1] - 1) as u32, (f[2] - 1) as u32]);
    }
    Ok(Mesh { vertices, faces: out })
}
