//! Conforming tetrahedral meshes of axis-aligned boxes.
//!
//! Vertices are numbered lexicographically with `x` fastest, then `y`, then
//! `z`. Every sub-cube is split into six tetrahedra around the diagonal from
//! its lowest to its highest corner (Kuhn subdivision), so neighbouring cubes
//! always agree on their shared face diagonals.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;


use crate::{Error, Result, Vec3};

/// Local vertex pairs of the six edges of a tetrahedron.
pub const LOCAL_EDGES: [[usize; 2]; 6] = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]];

/// Local vertex triples of the four faces; face `k` is opposite vertex `k`.
pub const LOCAL_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxSpec {
    pub lengths: [f64; 3],
    pub subdivisions: [usize; 3],
}

impl BoxSpec {
    pub fn new(lengths: [f64; 3], subdivisions: [usize; 3]) -> Result<Self> {
        let spec = BoxSpec {
            lengths,
            subdivisions,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Unit cube with `n` subdivisions per axis.
    pub fn unit_cube(n: usize) -> Self {
        BoxSpec {
            lengths: [1.0; 3],
            subdivisions: [n; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (axis, (&l, &n)) in self.lengths.iter().zip(&self.subdivisions).enumerate() {
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::InvalidSpec(format!(
                    "length along axis {axis} must be positive, got {l}"
                )));
            }
            if n == 0 {
                return Err(Error::InvalidSpec(format!(
                    "subdivisions along axis {axis} must be positive"
                )));
            }
        }
        Ok(())
    }

    /// Largest sub-cube edge length.
    pub fn h(&self) -> f64 {
        (0..3)
            .map(|a| self.lengths[a] / self.subdivisions[a] as f64)
            .fold(0.0, f64::max)
    }

    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    spec: BoxSpec,
    vertices: Vec<Vec3>,
    cells: Vec<[usize; 4]>,
    edges: Vec<[usize; 2]>,
    faces: Vec<[usize; 3]>,
    cell_edges: Vec<[usize; 6]>,
    cell_edge_signs: Vec<[i8; 6]>,
    cell_faces: Vec<[usize; 4]>,
    face_cells: Vec<(usize, Option<usize>)>,
    boundary_faces: Vec<usize>,
    boundary_normals: Vec<Vec3>,
    boundary_edges: Vec<usize>,
    boundary_vertices: Vec<usize>,
    edge_on_boundary: Vec<bool>,
    vertex_on_boundary: Vec<bool>,
}

/// Builds the Kuhn mesh of the box described by `spec`.
pub fn build_box_mesh(spec: BoxSpec) -> Result<Mesh> {
    spec.validate()?;
    let [nx, ny, nz] = spec.subdivisions;
    let step = [
        spec.lengths[0] / nx as f64,
        spec.lengths[1] / ny as f64,
        spec.lengths[2] / nz as f64,
    ];
    let vid = |i: usize, j: usize, k: usize| i + (nx + 1) * (j + (ny + 1) * k);

    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                let coord = |idx: usize, axis: usize| {
                    if idx == spec.subdivisions[axis] {
                        spec.lengths[axis]
                    } else {
                        idx as f64 * step[axis]
                    }
                };
                vertices.push(Vec3::new(coord(i, 0), coord(j, 1), coord(k, 2)));
            }
        }
    }

    const PERMUTATIONS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut cells = Vec::with_capacity(6 * nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                for perm in PERMUTATIONS {
                    let mut idx = [i, j, k];
                    let mut tet = [vid(i, j, k); 4];
                    for (slot, &axis) in perm.iter().enumerate() {
                        idx[axis] += 1;
                        tet[slot + 1] = vid(idx[0], idx[1], idx[2]);
                    }
                    if signed_volume(&vertices, &tet) < 0.0 {
                        tet.swap(2, 3);
                    }
                    cells.push(tet);
                }
            }
        }
    }
    Ok(Mesh::from_cells(spec, vertices, cells))
}

fn signed_volume(vertices: &[Vec3], tet: &[usize; 4]) -> f64 {
    let x0 = vertices[tet[0]];
    (vertices[tet[1]] - x0)
        .cross(&(vertices[tet[2]] - x0))
        .dot(&(vertices[tet[3]] - x0))
        / 6.0
}

fn sorted3(mut t: [usize; 3]) -> [usize; 3] {
    t.sort_unstable();
    t
}

impl Mesh {
    fn from_cells(spec: BoxSpec, vertices: Vec<Vec3>, cells: Vec<[usize; 4]>) -> Mesh {
        let mut edge_ids: BTreeMap<[usize; 2], usize> = BTreeMap::new();
        let mut face_ids: BTreeMap<[usize; 3], usize> = BTreeMap::new();
        for c in &cells {
            for [a, b] in LOCAL_EDGES {
                let (p, q) = (c[a].min(c[b]), c[a].max(c[b]));
                edge_ids.insert([p, q], 0);
            }
            for f in LOCAL_FACES {
                face_ids.insert(sorted3([c[f[0]], c[f[1]], c[f[2]]]), 0);
            }
        }
        let mut edges = Vec::with_capacity(edge_ids.len());
        for (n, (key, id)) in edge_ids.iter_mut().enumerate() {
            *id = n;
            edges.push(*key);
        }
        let mut faces = Vec::with_capacity(face_ids.len());
        for (n, (key, id)) in face_ids.iter_mut().enumerate() {
            *id = n;
            faces.push(*key);
        }

        let mut cell_edges = Vec::with_capacity(cells.len());
        let mut cell_edge_signs = Vec::with_capacity(cells.len());
        let mut cell_faces = Vec::with_capacity(cells.len());
        let mut face_cells: Vec<(usize, Option<usize>)> = vec![(usize::MAX, None); faces.len()];
        for (ci, c) in cells.iter().enumerate() {
            let mut ce = [0; 6];
            let mut cs = [0i8; 6];
            for (l, [a, b]) in LOCAL_EDGES.into_iter().enumerate() {
                let (p, q) = (c[a].min(c[b]), c[a].max(c[b]));
                ce[l] = edge_ids[&[p, q]];
                cs[l] = if c[a] < c[b] { 1 } else { -1 };
            }
            let mut cf = [0; 4];
            for (l, f) in LOCAL_FACES.into_iter().enumerate() {
                let id = face_ids[&sorted3([c[f[0]], c[f[1]], c[f[2]]])];
                cf[l] = id;
                let slot = &mut face_cells[id];
                if slot.0 == usize::MAX {
                    slot.0 = ci;
                } else {
                    slot.1 = Some(ci);
                }
            }
            cell_edges.push(ce);
            cell_edge_signs.push(cs);
            cell_faces.push(cf);
        }

        let mut boundary_faces = Vec::new();
        let mut boundary_normals = Vec::new();
        let mut edge_on_boundary = vec![false; edges.len()];
        let mut vertex_on_boundary = vec![false; vertices.len()];
        for (fi, &(c0, c1)) in face_cells.iter().enumerate() {
            if c1.is_some() {
                continue;
            }
            let f = faces[fi];
            let cell = cells[c0];
            let opposite = cell.iter().copied().find(|v| !f.contains(v)).unwrap();
            let mut n = (vertices[f[1]] - vertices[f[0]]).cross(&(vertices[f[2]] - vertices[f[0]]));
            if n.dot(&(vertices[f[0]] - vertices[opposite])) < 0.0 {
                n = -n;
            }
            boundary_faces.push(fi);
            boundary_normals.push(n / n.norm());
            for v in f {
                vertex_on_boundary[v] = true;
            }
            for (a, b) in [(f[0], f[1]), (f[0], f[2]), (f[1], f[2])] {
                edge_on_boundary[edge_ids[&[a.min(b), a.max(b)]]] = true;
            }
        }
        let boundary_edges = (0..edges.len()).filter(|&e| edge_on_boundary[e]).collect();
        let boundary_vertices = (0..vertices.len())
            .filter(|&v| vertex_on_boundary[v])
            .collect();

        Mesh {
            spec,
            vertices,
            cells,
            edges,
            faces,
            cell_edges,
            cell_edge_signs,
            cell_faces,
            face_cells,
            boundary_faces,
            boundary_normals,
            boundary_edges,
            boundary_vertices,
            edge_on_boundary,
            vertex_on_boundary,
        }
    }

    pub fn spec(&self) -> &BoxSpec {
        &self.spec
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn cells(&self) -> &[[usize; 4]] {
        &self.cells
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// Global edge ids of a cell, in [`LOCAL_EDGES`] order.
    pub fn cell_edges(&self, cell: usize) -> &[usize; 6] {
        &self.cell_edges[cell]
    }

    /// `+1` where the local edge direction matches the global one
    /// (lower to higher vertex id), `-1` otherwise.
    pub fn cell_edge_signs(&self, cell: usize) -> &[i8; 6] {
        &self.cell_edge_signs[cell]
    }

    pub fn cell_faces(&self, cell: usize) -> &[usize; 4] {
        &self.cell_faces[cell]
    }

    /// Cells adjacent to a face; the second entry is `None` on the boundary.
    pub fn face_cells(&self, face: usize) -> (usize, Option<usize>) {
        self.face_cells[face]
    }

    pub fn boundary_faces(&self) -> &[usize] {
        &self.boundary_faces
    }

    pub fn boundary_edges(&self) -> &[usize] {
        &self.boundary_edges
    }

    pub fn boundary_vertices(&self) -> &[usize] {
        &self.boundary_vertices
    }

    pub fn is_boundary_edge(&self, edge: usize) -> bool {
        self.edge_on_boundary[edge]
    }

    pub fn is_boundary_vertex(&self, vertex: usize) -> bool {
        self.vertex_on_boundary[vertex]
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn cell_vertices(&self, cell: usize) -> [Vec3; 4] {
        self.cells[cell].map(|v| self.vertices[v])
    }

    pub fn cell_volume(&self, cell: usize) -> f64 {
        signed_volume(&self.vertices, &self.cells[cell])
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.faces[face].map(|v| self.vertices[v]);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn edge_vector(&self, edge: usize) -> Vec3 {
        let [a, b] = self.edges[edge];
        self.vertices[b] - self.vertices[a]
    }

    /// Outward unit normal of a boundary face.
    pub fn boundary_normal(&self, face: usize) -> Result<Vec3> {
        match self.boundary_faces.binary_search(&face) {
            Ok(k) => Ok(self.boundary_normals[k]),
            Err(_) => Err(Error::Domain(format!("face {face} is not on the boundary"))),
        }
    }

    /// Outward unit normals of all boundary faces, parallel to
    /// [`Mesh::boundary_faces`].
    pub fn boundary_normals(&self) -> &[Vec3] {
        &self.boundary_normals
    }

    /// Box faces a point lies on, as a per-axis mask.
    pub fn on_box_planes(&self, x: &Vec3) -> [bool; 3] {
        let tol = 1e-12 * self.spec.h().max(1.0);
        core::array::from_fn(|a| x[a].abs() < tol || (x[a] - self.spec.lengths[a]).abs() < tol)
    }

    /// First Betti number `dim ker(curl) - dim im(grad)` of the edge complex,
    /// from exact ranks of the incidence matrices over a large prime field.
    pub fn first_betti_number(&self) -> usize {
        let ne = self.edges.len();
        let nv = self.vertices.len();
        // gradient: edges x vertices; curl: faces x edges
        let grad_rows: Vec<Vec<(usize, i64)>> = self
            .edges
            .iter()
            .map(|&[a, b]| vec![(a, -1), (b, 1)])
            .collect();
        let curl_rows: Vec<Vec<(usize, i64)>> = self
            .faces
            .iter()
            .map(|&[a, b, c]| {
                let e = |p: usize, q: usize| self.edge_index(p, q).unwrap();
                // boundary of the oriented triangle a -> b -> c
                vec![(e(a, b), 1), (e(b, c), 1), (e(a, c), -1)]
            })
            .collect();
        let rank_grad = modular_rank(&grad_rows, nv);
        let rank_curl = modular_rank(&curl_rows, ne);
        (ne - rank_curl) - rank_grad
    }

    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        let key = [a.min(b), a.max(b)];
        self.edges.binary_search(&key).ok()
    }
}

fn modular_rank(rows: &[Vec<(usize, i64)>], ncols: usize) -> usize {
    const P: i64 = 1_000_000_007;
    let inv = |a: i64| {
        let (mut base, mut exp, mut acc) = (a.rem_euclid(P), P - 2, 1i64);
        while exp > 0 {
            if exp & 1 == 1 {
                acc = acc * base % P;
            }
            base = base * base % P;
            exp >>= 1;
        }
        acc
    };
    let mut dense: Vec<Vec<i64>> = rows
        .iter()
        .map(|r| {
            let mut d = vec![0i64; ncols];
            for &(c, v) in r {
                d[c] = (d[c] + v).rem_euclid(P);
            }
            d
        })
        .collect();
    let mut rank = 0;
    for col in 0..ncols {
        let Some(pivot) = (rank..dense.len()).find(|&r| dense[r][col] != 0) else {
            continue;
        };
        dense.swap(rank, pivot);
        let pinv = inv(dense[rank][col]);
        let prow = dense[rank].clone();
        for r in 0..dense.len() {
            if r != rank && dense[r][col] != 0 {
                let factor = dense[r][col] * pinv % P;
                for c in col..ncols {
                    if prow[c] != 0 {
                        dense[r][c] = (dense[r][c] - factor * prow[c]).rem_euclid(P);
                    }
                }
            }
        }
        rank += 1;
    }
    rank
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn unit_cube_counts() {
        let mesh = build_box_mesh(BoxSpec::unit_cube(1)).unwrap();
        assert_eq!(mesh.num_vertices(), 8);
        assert_eq!(mesh.num_cells(), 6);
        // brute force: unique vertex pairs over the six tetrahedra
        let mut pairs = BTreeSet::new();
        for c in mesh.cells() {
            for a in 0..4 {
                for b in a + 1..4 {
                    pairs.insert((c[a].min(c[b]), c[a].max(c[b])));
                }
            }
        }
        assert_eq!(pairs.len(), 19);
        assert_eq!(mesh.num_edges(), 19);
    }

    #[test]
    fn elongated_box_volume() {
        let mesh = build_box_mesh(BoxSpec::new([2.0, 1.0, 1.0], [2, 1, 1]).unwrap()).unwrap();
        assert_eq!(mesh.num_vertices(), 12);
        let vol: f64 = (0..mesh.num_cells()).map(|c| mesh.cell_volume(c)).sum();
        assert!((vol - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(matches!(
            BoxSpec::new([1.0, 0.0, 1.0], [1, 1, 1]),
            Err(Error::InvalidSpec(_))
        ));
        assert!(matches!(
            build_box_mesh(BoxSpec {
                lengths: [1.0; 3],
                subdivisions: [1, 0, 1]
            }),
            Err(Error::InvalidSpec(_))
        ));
        assert!(BoxSpec::new([-1.0, 1.0, 1.0], [1, 1, 1]).is_err());
    }

    #[test]
    fn positive_orientation_and_face_sharing() {
        let mesh = build_box_mesh(BoxSpec::new([1.0, 2.0, 0.5], [2, 3, 2]).unwrap()).unwrap();
        for c in 0..mesh.num_cells() {
            assert!(mesh.cell_volume(c) > 0.0);
        }
        for f in 0..mesh.faces().len() {
            let (_, other) = mesh.face_cells(f);
            let on_boundary = mesh.boundary_faces().binary_search(&f).is_ok();
            assert_eq!(other.is_none(), on_boundary);
        }
    }

    #[test]
    fn edge_signs_follow_global_ids() {
        let mesh = build_box_mesh(BoxSpec::unit_cube(2)).unwrap();
        for (c, cell) in mesh.cells().iter().enumerate() {
            for (l, [a, b]) in LOCAL_EDGES.into_iter().enumerate() {
                let [p, q] = mesh.edges()[mesh.cell_edges(c)[l]];
                assert!(p < q);
                let s = mesh.cell_edge_signs(c)[l];
                assert_eq!(s == 1, cell[a] == p && cell[b] == q);
                assert_eq!(s == -1, cell[a] == q && cell[b] == p);
            }
        }
    }

    #[test]
    fn boundary_normals_outward_axis_aligned() {
        let mesh = build_box_mesh(BoxSpec::new([2.0, 1.0, 3.0], [2, 2, 3]).unwrap()).unwrap();
        let mut flux = Vec3::zeros();
        for (&f, n) in mesh.boundary_faces().iter().zip(mesh.boundary_normals()) {
            assert!((n.norm() - 1.0).abs() < 1e-14);
            let nonzero = (0..3).filter(|&a| n[a] != 0.0).count();
            assert_eq!(nonzero, 1);
            let centroid = mesh.faces()[f]
                .iter()
                .fold(Vec3::zeros(), |acc, &v| acc + mesh.vertices()[v])
                / 3.0;
            let axis = (0..3).find(|&a| n[a] != 0.0).unwrap();
            if n[axis] > 0.0 {
                assert!((centroid[axis] - mesh.spec().lengths[axis]).abs() < 1e-12);
            } else {
                assert!(centroid[axis].abs() < 1e-12);
            }
            flux += n * mesh.face_area(f);
        }
        assert!(flux.norm() < 1e-12);
    }

    #[test]
    fn specific_plane_normals() {
        let mesh = build_box_mesh(BoxSpec::unit_cube(1)).unwrap();
        let mut seen_x = false;
        let mut seen_z0 = false;
        for &f in mesh.boundary_faces() {
            let pts = mesh.faces()[f].map(|v| mesh.vertices()[v]);
            let n = mesh.boundary_normal(f).unwrap();
            if pts.iter().all(|p| p.x == 1.0) {
                assert_eq!(n, Vec3::new(1.0, 0.0, 0.0));
                seen_x = true;
            }
            if pts.iter().all(|p| p.z == 0.0) {
                assert_eq!(n, Vec3::new(0.0, 0.0, -1.0));
                seen_z0 = true;
            }
        }
        assert!(seen_x && seen_z0);
        let interior = (0..mesh.faces().len())
            .find(|&f| mesh.face_cells(f).1.is_some())
            .unwrap();
        assert!(matches!(mesh.boundary_normal(interior), Err(Error::Domain(_))));
    }

    #[test]
    fn boundary_is_closed_manifold() {
        let mesh = build_box_mesh(BoxSpec::unit_cube(3)).unwrap();
        let mut count = std::vec![0usize; mesh.num_edges()];
        for &f in mesh.boundary_faces() {
            let [a, b, c] = mesh.faces()[f];
            for (p, q) in [(a, b), (a, c), (b, c)] {
                count[mesh.edge_index(p, q).unwrap()] += 1;
            }
        }
        for &e in mesh.boundary_edges() {
            assert_eq!(count[e], 2);
        }
    }

    #[test]
    fn box_complex_is_simply_connected() {
        for n in 1..=3 {
            let mesh = build_box_mesh(BoxSpec::unit_cube(n)).unwrap();
            assert_eq!(mesh.first_betti_number(), 0);
        }
    }
}
