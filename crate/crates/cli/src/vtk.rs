//! Legacy ASCII VTK (version 3.0) unstructured grids of linear tetrahedra.

use std::fmt::Write as _;

use micromorph_core::assembly::MicromorphicSpace;
use micromorph_core::mesh::Mesh;
use micromorph_core::spaces::CellGeometry;
use micromorph_core::Mat3;

pub const VTK_TETRA: u8 = 10;

fn push_grid(s: &mut String, title: &str, mesh: &Mesh) {
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "{}", title.lines().next().unwrap_or("").chars().take(255).collect::<String>());
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {} double", mesh.num_vertices());
    for v in mesh.vertices() {
        let _ = writeln!(s, "{} {} {}", v.x, v.y, v.z);
    }
    let n = mesh.num_cells();
    let _ = writeln!(s, "CELLS {n} {}", 5 * n);
    for c in mesh.cells() {
        let _ = writeln!(s, "4 {} {} {} {}", c[0], c[1], c[2], c[3]);
    }
    let _ = writeln!(s, "CELL_TYPES {n}");
    for _ in 0..n {
        let _ = writeln!(s, "{VTK_TETRA}");
    }
}

/// Geometry only, with the cell index as cell data.
pub fn mesh_vtk(mesh: &Mesh, title: &str) -> String {
    let mut s = String::new();
    push_grid(&mut s, title, mesh);
    let _ = writeln!(s, "CELL_DATA {}", mesh.num_cells());
    let _ = writeln!(s, "SCALARS cell_id int 1");
    let _ = writeln!(s, "LOOKUP_TABLE default");
    for c in 0..mesh.num_cells() {
        let _ = writeln!(s, "{c}");
    }
    s
}

/// `u` as point vectors and `P`, `Curl P` at cell centroids as tensors.
/// Needs a P1 displacement space, whose nodes are the mesh vertices.
pub fn solution_vtk(space: &MicromorphicSpace, x: &[f64], title: &str) -> String {
    let mesh = space.mesh();
    let mut s = String::new();
    push_grid(&mut s, title, mesh);
    let (u, _) = space.split(x);
    let _ = writeln!(s, "POINT_DATA {}", mesh.num_vertices());
    let _ = writeln!(s, "VECTORS u double");
    for node in 0..mesh.num_vertices() {
        let _ = writeln!(s, "{} {} {}", u[3 * node], u[3 * node + 1], u[3 * node + 2]);
    }
    let mut p = Vec::with_capacity(mesh.num_cells());
    let mut curl = Vec::with_capacity(mesh.num_cells());
    for cell in 0..mesh.num_cells() {
        let geom = CellGeometry::new(mesh, cell);
        let f = space.evaluate(x, cell, &geom, &[0.25; 4]);
        p.push(f.p);
        curl.push(f.curl_p);
    }
    let _ = writeln!(s, "CELL_DATA {}", mesh.num_cells());
    push_tensors(&mut s, "P", &p);
    push_tensors(&mut s, "curl_P", &curl);
    s
}

fn push_tensors(s: &mut String, name: &str, values: &[Mat3]) {
    let _ = writeln!(s, "TENSORS {name} double");
    for m in values {
        for i in 0..3 {
            let _ = writeln!(s, "{} {} {}", m[(i, 0)], m[(i, 1)], m[(i, 2)]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use micromorph_core::mesh::{build_box_mesh, BoxSpec};
    use std::sync::Arc;

    fn section_count(text: &str, keyword: &str) -> usize {
        let line = text.lines().find(|l| l.starts_with(keyword)).unwrap();
        line.split_whitespace().nth(1).unwrap().parse().unwrap()
    }

    #[test]
    fn single_cube() {
        let mesh = build_box_mesh(BoxSpec::unit_cube(1)).unwrap();
        let text = mesh_vtk(&mesh, "cube");
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# vtk DataFile Version 3.0");
        assert_eq!(lines[2], "ASCII");
        assert_eq!(lines[3], "DATASET UNSTRUCTURED_GRID");
        assert_eq!(section_count(&text, "POINTS"), 8);
        assert_eq!(section_count(&text, "CELLS"), 6);
        assert!(text.contains("CELLS 6 30\n"));
        let types = lines.iter().position(|l| l.starts_with("CELL_TYPES")).unwrap();
        assert!(lines[types + 1..types + 7].iter().all(|l| *l == "10"));
    }

    #[test]
    fn solution_has_point_and_cell_sections() {
        let mesh = Arc::new(build_box_mesh(BoxSpec::unit_cube(2)).unwrap());
        let space = MicromorphicSpace::new(mesh.clone(), 1).unwrap();
        let x = space.interpolate(|p| *p, |_| Mat3::identity());
        let text = solution_vtk(&space, &x, "identity");
        assert_eq!(section_count(&text, "POINT_DATA"), 27);
        assert_eq!(section_count(&text, "CELL_DATA"), 48);
        let lines: Vec<&str> = text.lines().collect();
        let u = lines.iter().position(|l| *l == "VECTORS u double").unwrap();
        for (node, line) in lines[u + 1..u + 28].iter().enumerate() {
            let v = mesh.vertices()[node];
            assert_eq!(*line, format!("{} {} {}", v.x, v.y, v.z));
        }
        let p = lines.iter().position(|l| *l == "TENSORS P double").unwrap();
        for line in &lines[p + 1..p + 4] {
            let row: Vec<f64> = line.split(' ').map(|t| t.parse().unwrap()).collect();
            assert_eq!(row.len(), 3);
        }
        assert!((lines[p + 1].split(' ').next().unwrap().parse::<f64>().unwrap() - 1.0).abs() < 1e-12);
    }
}
