//! Brute-force instancing oracle: weld vertices by exact coordinate
//! equality (hash of bit patterns), then breadth-first flood fill over the
//! shared-vertex face graph. Labels are 1..=M in order of each component's
//! smallest face index, matching the convention of the code under test.

use std::collections::HashMap;

use cityloc::mesh::Mesh;
use cityloc::scalar::Scalar;

/// Returns (per-face instance label, component count).
pub fn flood_fill_partition<S: Scalar>(mesh: &Mesh<S>) -> (Vec<u32>, u32) {
    let mut welded: HashMap<[u64; 3], u32> = HashMap::new();
    let mut vertex_group = Vec::with_capacity(mesh.vertices.len());
    for v in &mesh.vertices {
        let key = [
            v[0].to_f64_lossy().to_bits(),
            v[1].to_f64_lossy().to_bits(),
            v[2].to_f64_lossy().to_bits(),
        ];
        let next = welded.len() as u32;
        vertex_group.push(*welded.entry(key).or_insert(next));
    }

    let mut faces_of_group: Vec<Vec<u32>> = vec![Vec::new(); welded.len()];
    for (f, face) in mesh.faces.iter().enumerate() {
        for &vi in face {
            faces_of_group[vertex_group[vi as usize] as usize].push(f as u32);
        }
    }

    let mut labels = vec![0u32; mesh.faces.len()];
    let mut next_label = 0u32;
    let mut queue = Vec::new();
    for start in 0..mesh.faces.len() {
        if labels[start] != 0 {
            continue;
        }
        next_label += 1;
        labels[start] = next_label;
        queue.push(start as u32);
        while let Some(f) = queue.pop() {
            for &vi in &mesh.faces[f as usize] {
                for &g in &faces_of_group[vertex_group[vi as usize] as usize] {
                    if labels[g as usize] == 0 {
                        labels[g as usize] = next_label;
                        queue.push(g);
                    }
                }
            }
        }
    }
    (labels, next_label)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disjoint_indexed_boxes_form_two_components() {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        cityloc::push_box(&mut vertices, &mut faces, [0.0, 0.0, 0.0], [1.0, 1.0, 1.0]);
        cityloc::push_box(&mut vertices, &mut faces, [5.0, 0.0, 0.0], [6.0, 1.0, 1.0]);
        let mesh = Mesh::new(vertices, faces).unwrap();
        let (labels, count) = flood_fill_partition(&mesh);
        assert_eq!(count, 2);
        assert!(labels[..12].iter().all(|&l| l == 1));
        assert!(labels[12..].iter().all(|&l| l == 2));
    }

    #[test]
    fn exact_duplicate_vertices_weld_into_one_component() {
        // Two triangles sharing a corner only through duplicated coordinates.
        let vertices = vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [1.0, 0.0, 0.0],
            [2.0, 0.0, 0.0],
            [1.0, 1.0, 0.0],
        ];
        let mesh = Mesh::new(vertices, vec![[0, 1, 2], [3, 4, 5]]).unwrap();
        let (labels, count) = flood_fill_partition(&mesh);
        assert_eq!(count, 1);
        assert_eq!(labels, vec![1, 1]);
    }
}
