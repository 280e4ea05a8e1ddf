//! Finite-element spaces: scalar and vector Lagrange spaces of degree 1 or 2,
//! and the lowest-order Nédélec (first kind) edge space used for each row of
//! the micro-distortion.
//!
//! Nédélec dofs are tangential edge moments `∫_e v · t_e ds` with `t_e` the
//! unit tangent pointing from the lower to the higher global vertex id. The
//! matching basis function of edge `(a, b)` is `λ_a ∇λ_b − λ_b ∇λ_a`.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::mesh::{Mesh, LOCAL_EDGES};
use crate::quadrature::gauss_interval_2;
use crate::{Error, Mat3, Result, Vec3};

/// Affine map data of one tetrahedron.
#[derive(Debug, Clone, Copy)]
pub struct CellGeometry {
    pub vertices: [Vec3; 4],
    /// Gradients of the barycentric coordinates.
    pub grads: [Vec3; 4],
    pub volume: f64,
}

impl CellGeometry {
    pub fn new(mesh: &Mesh, cell: usize) -> Self {
        let vertices = mesh.cell_vertices(cell);
        let jac = Mat3::from_columns(&[
            vertices[1] - vertices[0],
            vertices[2] - vertices[0],
            vertices[3] - vertices[0],
        ]);
        let volume = jac.determinant() / 6.0;
        let inv = jac.try_inverse().expect("degenerate tetrahedron");
        let g1 = inv.row(0).transpose();
        let g2 = inv.row(1).transpose();
        let g3 = inv.row(2).transpose();
        CellGeometry {
            vertices,
            grads: [-(g1 + g2 + g3), g1, g2, g3],
            volume,
        }
    }

    pub fn point(&self, bary: &[f64; 4]) -> Vec3 {
        (0..4).fold(Vec3::zeros(), |acc, k| acc + self.vertices[k] * bary[k])
    }
}

/// Scalar Lagrange shape function values at a barycentric point; local
/// nodes are the four vertices followed (degree 2) by the six edges in
/// [`LOCAL_EDGES`] order.
pub fn lagrange_values(degree: usize, l: &[f64; 4], out: &mut [f64]) {
    match degree {
        1 => out[..4].copy_from_slice(l),
        _ => {
            for i in 0..4 {
                out[i] = l[i] * (2.0 * l[i] - 1.0);
            }
            for (k, [i, j]) in LOCAL_EDGES.into_iter().enumerate() {
                out[4 + k] = 4.0 * l[i] * l[j];
            }
        }
    }
}

pub fn lagrange_gradients(degree: usize, l: &[f64; 4], g: &[Vec3; 4], out: &mut [Vec3]) {
    match degree {
        1 => out[..4].copy_from_slice(g),
        _ => {
            for i in 0..4 {
                out[i] = g[i] * (4.0 * l[i] - 1.0);
            }
            for (k, [i, j]) in LOCAL_EDGES.into_iter().enumerate() {
                out[4 + k] = (g[j] * l[i] + g[i] * l[j]) * 4.0;
            }
        }
    }
}

pub fn local_node_count(degree: usize) -> usize {
    if degree == 1 {
        4
    } else {
        10
    }
}

/// Scalar continuous Lagrange space.
#[derive(Debug, Clone)]
pub struct LagrangeSpace {
    mesh: Arc<Mesh>,
    degree: usize,
    nodes: Vec<Vec3>,
    cell_nodes: Vec<[usize; 10]>,
    boundary: Vec<bool>,
}

impl LagrangeSpace {
    pub fn new(mesh: Arc<Mesh>, degree: usize) -> Result<Self> {
        if degree != 1 && degree != 2 {
            return Err(Error::Domain(alloc::format!(
                "Lagrange degree must be 1 or 2, got {degree}"
            )));
        }
        let nv = mesh.num_vertices();
        let mut nodes = mesh.vertices().to_vec();
        let mut boundary: Vec<bool> = (0..nv).map(|v| mesh.is_boundary_vertex(v)).collect();
        if degree == 2 {
            for (e, &[a, b]) in mesh.edges().iter().enumerate() {
                nodes.push((mesh.vertices()[a] + mesh.vertices()[b]) * 0.5);
                boundary.push(mesh.is_boundary_edge(e));
            }
        }
        let cell_nodes = (0..mesh.num_cells())
            .map(|c| {
                let mut ids = [usize::MAX; 10];
                ids[..4].copy_from_slice(&mesh.cells()[c]);
                if degree == 2 {
                    for (k, &e) in mesh.cell_edges(c).iter().enumerate() {
                        ids[4 + k] = nv + e;
                    }
                }
                ids
            })
            .collect();
        Ok(LagrangeSpace {
            mesh,
            degree,
            nodes,
            cell_nodes,
            boundary,
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    pub fn local_count(&self) -> usize {
        local_node_count(self.degree)
    }

    pub fn cell_nodes(&self, cell: usize) -> &[usize] {
        &self.cell_nodes[cell][..self.local_count()]
    }

    pub fn is_boundary_node(&self, node: usize) -> bool {
        self.boundary[node]
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes()).filter(|&n| self.boundary[n]).collect()
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes()).filter(|&n| !self.boundary[n]).collect()
    }

    pub fn interpolate(&self, f: impl Fn(&Vec3) -> f64) -> Vec<f64> {
        self.nodes.iter().map(f).collect()
    }

    /// Value and gradient of a discrete field inside `cell`.
    pub fn evaluate(&self, coeffs: &[f64], cell: usize, geom: &CellGeometry, bary: &[f64; 4]) -> (f64, Vec3) {
        let mut vals = [0.0; 10];
        let mut grads = [Vec3::zeros(); 10];
        lagrange_values(self.degree, bary, &mut vals);
        lagrange_gradients(self.degree, bary, &geom.grads, &mut grads);
        let mut v = 0.0;
        let mut g = Vec3::zeros();
        for (k, &n) in self.cell_nodes(cell).iter().enumerate() {
            v += vals[k] * coeffs[n];
            g += grads[k] * coeffs[n];
        }
        (v, g)
    }
}

/// Vector Lagrange space; dof `3 * node + component`.
#[derive(Debug, Clone)]
pub struct H1VectorSpace {
    scalar: LagrangeSpace,
}

impl H1VectorSpace {
    pub fn new(mesh: Arc<Mesh>, degree: usize) -> Result<Self> {
        Ok(H1VectorSpace {
            scalar: LagrangeSpace::new(mesh, degree)?,
        })
    }

    pub fn scalar(&self) -> &LagrangeSpace {
        &self.scalar
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        self.scalar.mesh()
    }

    pub fn degree(&self) -> usize {
        self.scalar.degree()
    }

    pub fn num_dofs(&self) -> usize {
        3 * self.scalar.num_nodes()
    }

    pub fn dof(node: usize, component: usize) -> usize {
        3 * node + component
    }

    pub fn boundary_dofs(&self) -> Vec<usize> {
        self.scalar
            .boundary_nodes()
            .into_iter()
            .flat_map(|n| (0..3).map(move |c| 3 * n + c))
            .collect()
    }

    pub fn is_boundary_dof(&self, dof: usize) -> bool {
        self.scalar.is_boundary_node(dof / 3)
    }

    /// Local dofs of a cell as `3 * local_node + component`.
    pub fn cell_dofs(&self, cell: usize) -> Vec<usize> {
        self.scalar
            .cell_nodes(cell)
            .iter()
            .flat_map(|&n| (0..3).map(move |c| 3 * n + c))
            .collect()
    }

    pub fn interpolate(&self, f: impl Fn(&Vec3) -> Vec3) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_dofs());
        for x in self.scalar.nodes() {
            let v = f(x);
            out.extend_from_slice(&[v.x, v.y, v.z]);
        }
        out
    }

    /// Value and gradient (row `i` is `∇u_i`) inside `cell`.
    pub fn evaluate(&self, coeffs: &[f64], cell: usize, geom: &CellGeometry, bary: &[f64; 4]) -> (Vec3, Mat3) {
        let degree = self.degree();
        let mut vals = [0.0; 10];
        let mut grads = [Vec3::zeros(); 10];
        lagrange_values(degree, bary, &mut vals);
        lagrange_gradients(degree, bary, &geom.grads, &mut grads);
        let mut v = Vec3::zeros();
        let mut g = Mat3::zeros();
        for (k, &n) in self.scalar.cell_nodes(cell).iter().enumerate() {
            for c in 0..3 {
                let coef = coeffs[3 * n + c];
                v[c] += vals[k] * coef;
                for d in 0..3 {
                    g[(c, d)] += grads[k][d] * coef;
                }
            }
        }
        (v, g)
    }
}

/// Lowest-order Nédélec space, one dof per global edge.
#[derive(Debug, Clone)]
pub struct HcurlSpace {
    mesh: Arc<Mesh>,
}

/// Values and curls of the six local Nédélec basis functions, oriented by
/// global edge direction.
#[derive(Debug, Clone, Copy)]
pub struct NedelecLocal {
    pub values: [Vec3; 6],
    pub curls: [Vec3; 6],
}

impl HcurlSpace {
    pub fn new(mesh: Arc<Mesh>) -> Self {
        HcurlSpace { mesh }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn num_dofs(&self) -> usize {
        self.mesh.num_edges()
    }

    pub fn boundary_dofs(&self) -> &[usize] {
        self.mesh.boundary_edges()
    }

    pub fn interior_dofs(&self) -> Vec<usize> {
        (0..self.num_dofs())
            .filter(|&e| !self.mesh.is_boundary_edge(e))
            .collect()
    }

    pub fn cell_dofs(&self, cell: usize) -> &[usize; 6] {
        self.mesh.cell_edges(cell)
    }

    pub fn local_basis(&self, cell: usize, geom: &CellGeometry, bary: &[f64; 4]) -> NedelecLocal {
        let verts = &self.mesh.cells()[cell];
        let mut values = [Vec3::zeros(); 6];
        let mut curls = [Vec3::zeros(); 6];
        for (k, [i, j]) in LOCAL_EDGES.into_iter().enumerate() {
            let (a, b) = if verts[i] < verts[j] { (i, j) } else { (j, i) };
            values[k] = geom.grads[b] * bary[a] - geom.grads[a] * bary[b];
            curls[k] = geom.grads[a].cross(&geom.grads[b]) * 2.0;
        }
        NedelecLocal { values, curls }
    }

    /// Value and curl of a discrete field inside `cell`.
    pub fn evaluate(&self, coeffs: &[f64], cell: usize, geom: &CellGeometry, bary: &[f64; 4]) -> (Vec3, Vec3) {
        let basis = self.local_basis(cell, geom, bary);
        let mut v = Vec3::zeros();
        let mut c = Vec3::zeros();
        for (k, &e) in self.cell_dofs(cell).iter().enumerate() {
            v += basis.values[k] * coeffs[e];
            c += basis.curls[k] * coeffs[e];
        }
        (v, c)
    }

    /// Element-wise (constant) curl of a discrete field.
    pub fn cell_curl(&self, coeffs: &[f64], cell: usize) -> Vec3 {
        let geom = CellGeometry::new(&self.mesh, cell);
        self.evaluate(coeffs, cell, &geom, &[0.25; 4]).1
    }

    /// Edge moments by two-point Gauss quadrature along every edge.
    pub fn interpolate(&self, v: impl Fn(&Vec3) -> Vec3) -> Vec<f64> {
        (0..self.num_dofs()).map(|e| edge_moment(&self.mesh, e, &v)).collect()
    }

    /// Interpolates each row of a tensor field into its own coefficient vector.
    pub fn interpolate_rows(&self, p: impl Fn(&Vec3) -> Mat3) -> [Vec<f64>; 3] {
        core::array::from_fn(|i| self.interpolate(|x| p(x).row(i).transpose()))
    }
}

/// `∫_e v · t_e ds` over edge `e`.
pub fn edge_moment(mesh: &Mesh, edge: usize, v: &impl Fn(&Vec3) -> Vec3) -> f64 {
    let [a, b] = mesh.edges()[edge];
    let (xa, xb) = (mesh.vertices()[a], mesh.vertices()[b]);
    let d = xb - xa;
    gauss_interval_2()
        .iter()
        .map(|&(t, w)| w * v(&(xa + d * t)).dot(&d))
        .sum()
}

/// Discrete tangential trace: one tangential moment per boundary edge, in
/// [`Mesh::boundary_edges`] order. Only tangential information is stored,
/// so the normal component of the represented field is zero by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentialTraceData {
    values: Vec<f64>,
}

impl TangentialTraceData {
    pub fn zeros(mesh: &Mesh) -> Self {
        TangentialTraceData {
            values: vec![0.0; mesh.boundary_edges().len()],
        }
    }

    pub fn from_values(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.boundary_edges().len() {
            return Err(Error::DimensionMismatch {
                what: "tangential trace data",
                expected: mesh.boundary_edges().len(),
                found: values.len(),
            });
        }
        Ok(TangentialTraceData { values })
    }

    /// Tangential moments of a smooth ambient field.
    pub fn from_field(mesh: &Mesh, v: impl Fn(&Vec3) -> Vec3) -> Self {
        TangentialTraceData {
            values: mesh
                .boundary_edges()
                .iter()
                .map(|&e| edge_moment(mesh, e, &v))
                .collect(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        TangentialTraceData {
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
        TangentialTraceData {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        }
    }

    /// Coefficient vector carrying these boundary moments and zero interior
    /// dofs; this realises surjectivity of the discrete trace.
    pub fn extend_by_zero(&self, space: &HcurlSpace) -> Vec<f64> {
        let mut out = vec![0.0; space.num_dofs()];
        for (&e, &v) in space.boundary_dofs().iter().zip(&self.values) {
            out[e] = v;
        }
        out
    }

    /// Per-edge access keyed by global edge id.
    pub fn edge_values(&self, mesh: &Mesh) -> Vec<f64> {
        let mut out = vec![0.0; mesh.num_edges()];
        for (&e, &v) in mesh.boundary_edges().iter().zip(&self.values) {
            out[e] = v;
        }
        out
    }
}

/// Restriction of edge dofs to the boundary edges.
pub fn tangential_trace(space: &HcurlSpace, coeffs: &[f64]) -> Result<TangentialTraceData> {
    if coeffs.len() != space.num_dofs() {
        return Err(Error::DimensionMismatch {
            what: "Nédélec coefficients",
            expected: space.num_dofs(),
            found: coeffs.len(),
        });
    }
    Ok(TangentialTraceData {
        values: space.boundary_dofs().iter().map(|&e| coeffs[e]).collect(),
    })
}

/// Geometry of one boundary triangle with its in-plane Whitney basis.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryTriangle {
    pub face: usize,
    pub vertices: [usize; 3],
    pub points: [Vec3; 3],
    /// Tangential gradients of the triangle's barycentric coordinates.
    pub grads: [Vec3; 3],
    pub area: f64,
    pub normal: Vec3,
    /// Global edge ids with the local vertex pair `(a, b)` in global order.
    pub edges: [(usize, usize, usize); 3],
}

impl BoundaryTriangle {
    pub fn new(mesh: &Mesh, face: usize, normal: Vec3) -> Self {
        let vertices = mesh.faces()[face];
        let points = vertices.map(|v| mesh.vertices()[v]);
        let cross = (points[1] - points[0]).cross(&(points[2] - points[0]));
        let twice_area = cross.norm();
        let unit = cross / twice_area;
        let grads = core::array::from_fn(|i| {
            let opp = points[(i + 2) % 3] - points[(i + 1) % 3];
            unit.cross(&opp) / twice_area
        });
        let edges = [(0, 1), (0, 2), (1, 2)].map(|(i, j)| {
            let e = mesh.edge_index(vertices[i], vertices[j]).unwrap();
            if vertices[i] < vertices[j] {
                (e, i, j)
            } else {
                (e, j, i)
            }
        });
        BoundaryTriangle {
            face,
            vertices,
            points,
            grads,
            area: 0.5 * twice_area,
            normal,
            edges,
        }
    }

    pub fn all(mesh: &Mesh) -> Vec<BoundaryTriangle> {
        mesh.boundary_faces()
            .iter()
            .zip(mesh.boundary_normals())
            .map(|(&f, &n)| BoundaryTriangle::new(mesh, f, n))
            .collect()
    }

    pub fn point(&self, bary: &[f64; 3]) -> Vec3 {
        self.points[0] * bary[0] + self.points[1] * bary[1] + self.points[2] * bary[2]
    }

    /// Whitney basis functions of the three edges at a barycentric point.
    pub fn whitney(&self, bary: &[f64; 3]) -> [Vec3; 3] {
        self.edges
            .map(|(_, a, b)| self.grads[b] * bary[a] - self.grads[a] * bary[b])
    }

    /// Tangential field reconstructed from edge moments keyed by global edge.
    pub fn reconstruct(&self, edge_values: &[f64], bary: &[f64; 3]) -> Vec3 {
        let w = self.whitney(bary);
        (0..3).fold(Vec3::zeros(), |acc, k| acc + w[k] * edge_values[self.edges[k].0])
    }
}
