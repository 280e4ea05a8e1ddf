//! Boundary-data lifting.
//!
//! Two tangential liftings are provided. [`direct_lifting`] fixes the
//! boundary edge dofs and minimises `‖curl G̃‖² + ‖G̃‖²` over the interior.
//! [`ExtensionContext::constructive_extension`] builds `R = curl r` from a
//! scalar Neumann problem and a vector curl/div problem, so that in the
//! continuous setting `curl curl R = 0`, `div R = 0` and the tangential
//! trace of `R` is the data.
//!
//! Boundary `H^{-1/2}` pairings are replaced by boundary `L²` pairings
//! throughout; the reported norms are surrogates in that sense.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods whenever std is linked
use num_traits::Float;

use crate::assembly::{
    assemble_curl_div, assemble_nedelec_curl_curl, assemble_nedelec_gradient_coupling, assemble_nedelec_mass,
    assemble_scalar_integrals, assemble_scalar_laplacian, assemble_scalar_mass, assemble_vector_mass,
    axial_of_skew,
};
use crate::linalg::{generalized_symmetric_eigen, lowest_eigenpairs, SolverOptions, SpdSolver};
use crate::mesh::{Mesh, LOCAL_EDGES};
use crate::quadrature::{default_tetrahedron, gauss_interval_2, triangle};
use crate::sparse::{conjugate_gradient, dot, inverse_diagonal, CgOptions, CsrMatrix, LinearOperator};
use crate::spaces::{
    lagrange_values, tangential_trace, BoundaryTriangle, CellGeometry, H1VectorSpace, HcurlSpace, LagrangeSpace,
    TangentialTraceData,
};
use crate::{Error, Result, Vec3};

/// A symmetric positive definite problem with a prescribed part of the
/// unknowns: solves `A_II x_I = b_I − A_IB x_B`.
#[derive(Debug, Clone)]
pub struct ConstrainedSolver {
    n: usize,
    free: Vec<usize>,
    fixed: Vec<usize>,
    coupling: CsrMatrix,
    solver: SpdSolver,
}

impl ConstrainedSolver {
    pub fn new(a: &CsrMatrix, fixed: &[usize], opts: SolverOptions) -> Result<Self> {
        let n = a.nrows();
        let mut is_fixed = vec![false; n];
        for &d in fixed {
            is_fixed[d] = true;
        }
        let free: Vec<usize> = (0..n).filter(|&d| !is_fixed[d]).collect();
        let fixed: Vec<usize> = (0..n).filter(|&d| is_fixed[d]).collect();
        Ok(ConstrainedSolver {
            n,
            coupling: a.submatrix(&free, &fixed),
            solver: SpdSolver::new(a.submatrix(&free, &free), opts)?,
            free,
            fixed,
        })
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    pub fn fixed(&self) -> &[usize] {
        &self.fixed
    }

    pub fn reduced(&self) -> &SpdSolver {
        &self.solver
    }

    /// Full vector agreeing with `x` on the fixed dofs; `rhs` (full length,
    /// optional) supplies the load.
    pub fn solve(&self, x: &[f64], rhs: Option<&[f64]>) -> Result<(Vec<f64>, f64)> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                what: "constrained solve",
                expected: self.n,
                found: x.len(),
            });
        }
        let xb: Vec<f64> = self.fixed.iter().map(|&d| x[d]).collect();
        let mut b = self.coupling.mul_vec(&xb);
        for (k, v) in b.iter_mut().enumerate() {
            *v = rhs.map_or(0.0, |r| r[self.free[k]]) - *v;
        }
        let rep = self.solver.solve(&b)?;
        let mut out = x.to_vec();
        for (k, &d) in self.free.iter().enumerate() {
            out[d] = rep.x[k];
        }
        Ok((out, rep.relative_residual))
    }
}

/// Discrete-harmonic Dirichlet extension, reusable across time samples.
#[derive(Debug, Clone)]
pub struct DirichletLifter {
    space: H1VectorSpace,
    laplace: ConstrainedSolver,
}

impl DirichletLifter {
    pub fn new(space: &H1VectorSpace, opts: SolverOptions) -> Result<Self> {
        let scalar = space.scalar();
        let k = assemble_scalar_laplacian(scalar);
        Ok(DirichletLifter {
            space: space.clone(),
            laplace: ConstrainedSolver::new(&k, &scalar.boundary_nodes(), opts)?,
        })
    }

    /// `samples` is a full u-coefficient vector; only the boundary entries
    /// are read.
    pub fn lift(&self, samples: &[f64]) -> Result<Vec<f64>> {
        if samples.len() != self.space.num_dofs() {
            return Err(Error::DimensionMismatch {
                what: "Dirichlet samples",
                expected: self.space.num_dofs(),
                found: samples.len(),
            });
        }
        let nn = self.space.scalar().num_nodes();
        let mut out = vec![0.0; samples.len()];
        for c in 0..3 {
            let mut comp = vec![0.0; nn];
            for &b in self.laplace.fixed() {
                comp[b] = samples[H1VectorSpace::dof(b, c)];
            }
            let (sol, _) = self.laplace.solve(&comp, None)?;
            for (node, v) in sol.into_iter().enumerate() {
                out[H1VectorSpace::dof(node, c)] = v;
            }
        }
        Ok(out)
    }
}

/// Extension `g̃` of Dirichlet data `g`: samples at boundary nodes,
/// component-wise discrete-harmonic interior.
pub fn lift_dirichlet(space: &H1VectorSpace, g: impl Fn(&Vec3) -> Vec3) -> Result<Vec<f64>> {
    let scalar = space.scalar();
    let mut samples = vec![0.0; space.num_dofs()];
    for node in scalar.boundary_nodes() {
        let v = g(&scalar.nodes()[node]);
        for c in 0..3 {
            samples[H1VectorSpace::dof(node, c)] = v[c];
        }
    }
    DirichletLifter::new(space, SolverOptions::default())?.lift(&samples)
}

/// Tangential lifting with boundary dofs equal to the data and interior
/// dofs minimising `‖curl G̃‖² + ‖G̃‖²`.
#[derive(Debug, Clone)]
pub struct TangentialLifter {
    space: HcurlSpace,
    solver: ConstrainedSolver,
}

impl TangentialLifter {
    pub fn new(space: &HcurlSpace, opts: SolverOptions) -> Result<Self> {
        let a = assemble_nedelec_curl_curl(space).linear_combination(1.0, &assemble_nedelec_mass(space), 1.0);
        Ok(TangentialLifter {
            space: space.clone(),
            solver: ConstrainedSolver::new(&a, space.boundary_dofs(), opts)?,
        })
    }

    pub fn space(&self) -> &HcurlSpace {
        &self.space
    }

    /// The operator `curl-curl + mass` restricted to interior edges.
    pub fn interior_solver(&self) -> &ConstrainedSolver {
        &self.solver
    }

    pub fn lift(&self, g: &TangentialTraceData) -> Result<Vec<f64>> {
        check_trace_len(&self.space, g)?;
        Ok(self.solver.solve(&g.extend_by_zero(&self.space), None)?.0)
    }
}

fn check_trace_len(space: &HcurlSpace, g: &TangentialTraceData) -> Result<()> {
    if g.len() != space.boundary_dofs().len() {
        return Err(Error::DimensionMismatch {
            what: "tangential trace data",
            expected: space.boundary_dofs().len(),
            found: g.len(),
        });
    }
    Ok(())
}

pub fn direct_lifting(g: &TangentialTraceData, space: &HcurlSpace) -> Result<Vec<f64>> {
    TangentialLifter::new(space, SolverOptions::default())?.lift(g)
}

/// Tangential data induced by the displacement data through `P_i × n =
/// ∇g_i × n`: the edge moment of `∇g_i` is `g_i(x_b) − g_i(x_a)`.
pub fn coupling_trace(mesh: &Mesh, g: impl Fn(&Vec3) -> Vec3) -> [TangentialTraceData; 3] {
    let mut values: [Vec<f64>; 3] = Default::default();
    for &e in mesh.boundary_edges() {
        let [a, b] = mesh.edges()[e];
        let d = g(&mesh.vertices()[b]) - g(&mesh.vertices()[a]);
        for i in 0..3 {
            values[i].push(d[i]);
        }
    }
    values.map(|v| TangentialTraceData::from_values(mesh, v).unwrap())
}

/// Row-wise coupling trace of a discrete displacement (its P1 vertex values).
pub fn coupling_trace_discrete(space: &H1VectorSpace, u: &[f64]) -> [TangentialTraceData; 3] {
    let mesh = space.mesh();
    coupling_trace(mesh, |x| {
        let v = mesh.vertices().iter().position(|p| p == x).unwrap();
        Vec3::new(u[3 * v], u[3 * v + 1], u[3 * v + 2])
    })
}

/// `w ↦ −∫_∂Ω ⟨X, ∇_τ w⟩ ds` on P1 hat functions, for a tangential field
/// given triangle by triangle.
fn tangential_div_of(mesh: &Mesh, field: impl Fn(&BoundaryTriangle, &[f64; 3]) -> Vec3) -> Vec<f64> {
    let rule = triangle(2);
    let mut out = vec![0.0; mesh.num_vertices()];
    for tri in BoundaryTriangle::all(mesh) {
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            let x = field(&tri, bary);
            for k in 0..3 {
                out[tri.vertices[k]] -= w * tri.area * x.dot(&tri.grads[k]);
            }
        }
    }
    out
}

/// Discrete tangential divergence of `G`, as its action on the P1 hat
/// functions (indexed by vertex; interior vertices get zero).
pub fn tangential_div_boundary(mesh: &Mesh, g: &TangentialTraceData) -> Vec<f64> {
    let ev = g.edge_values(mesh);
    tangential_div_of(mesh, |tri, bary| tri.reconstruct(&ev, bary))
}

/// `−∫_∂Ω ⟨G, ∇_τ w⟩ ds` for a boundary P1 function `w` given by vertex values.
pub fn apply_tangential_div(functional: &[f64], w: &[f64]) -> f64 {
    dot(functional, w)
}

/// Neumann data `v = n × G_rep`, the rotated boundary reconstruction.
fn rotated(tri: &BoundaryTriangle, edge_values: &[f64], bary: &[f64; 3]) -> Vec3 {
    tri.normal.cross(&tri.reconstruct(edge_values, bary))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeumannScalarSolution {
    pub w: Vec<f64>,
    /// `∫_Ω w dx`.
    pub mean: f64,
    pub residual: f64,
    pub iterations: usize,
    /// Lagrange multiplier of the mean constraint (vanishes for
    /// compatible data).
    pub multiplier: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicBasis {
    /// Members as full W-space coefficient vectors, L²-orthonormal.
    pub members: Vec<Vec<f64>>,
    /// Smallest eigenvalue of the pencil, for diagnostics.
    pub smallest_eigenvalue: f64,
    pub threshold: f64,
}

impl HarmonicBasis {
    pub fn dimension(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryField {
    /// Degree-2 vector Lagrange coefficients with pinned normal components.
    pub r: Vec<f64>,
    /// `⟨r, λ_i⟩` after projection.
    pub harmonic_coefficients: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Property report of one constructive extension.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ExtensionReport {
    /// Boundary-L² norm of the reconstructed trace mismatch `γ_τ(R) − G`.
    pub trace_error: f64,
    /// Largest boundary-edge moment mismatch.
    pub trace_error_max: f64,
    /// `sup ⟨curl R, curl φ⟩ / ‖φ‖_{H(curl)}` over interior-supported `φ`.
    pub curl_curl_residual: f64,
    /// `sup ⟨R, ∇q⟩ / ‖∇q‖` over interior P1 `q`.
    pub div_residual: f64,
    /// `sup ⟨div r, q⟩ / ‖q‖` over P1 `q`.
    pub auxiliary_div_residual: f64,
    pub neumann_residual: f64,
    pub neumann_multiplier: f64,
    pub harmonic_dimension: usize,
    pub data_norm: f64,
    pub div_tau_norm: f64,
    pub w_h1_norm: f64,
    pub grad_w_norm: f64,
    pub curl_r_norm: f64,
}

impl ExtensionReport {
    /// `‖w‖_{H¹} / ‖div_τ v‖`, or `None` for vanishing data.
    pub fn neumann_ratio(&self) -> Option<f64> {
        (self.div_tau_norm > 0.0).then(|| self.w_h1_norm / self.div_tau_norm)
    }

    /// `‖curl r‖ / (‖∇w‖ + ‖v‖)`, or `None` for vanishing data.
    pub fn auxiliary_ratio(&self) -> Option<f64> {
        let d = self.grad_w_norm + self.data_norm;
        (d > 0.0).then(|| self.curl_r_norm / d)
    }
}

/// Augmented Neumann operator `K + c cᵀ`, nonsingular on the whole space.
struct Augmented<'a> {
    k: &'a CsrMatrix,
    c: &'a [f64],
}

impl LinearOperator for Augmented<'_> {
    fn dim(&self) -> usize {
        self.k.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.k.mul_vec_into(x, y);
        let s = dot(self.c, x);
        for (yi, ci) in y.iter_mut().zip(self.c) {
            *yi += s * ci;
        }
    }
}

/// Everything the constructive extension needs on one mesh, built once.
#[derive(Debug, Clone)]
pub struct ExtensionContext {
    mesh: Arc<Mesh>,
    hcurl: HcurlSpace,
    p1: LagrangeSpace,
    w_space: H1VectorSpace,
    neumann_k: CsrMatrix,
    neumann_mass: CsrMatrix,
    integrals: Vec<f64>,
    w_free: Vec<usize>,
    aux_mass: CsrMatrix,
    aux_solver: SpdSolver,
    basis: HarmonicBasis,
    tangential: TangentialLifter,
    interior_laplace: SpdSolver,
    interior_p1: Vec<usize>,
    gradient_coupling: CsrMatrix,
    p1_mass_solver: SpdSolver,
    boundary_mass: SpdSolver,
    boundary_vertices: Vec<usize>,
    triangles: Vec<BoundaryTriangle>,
    cg: CgOptions,
}

impl ExtensionContext {
    pub fn new(mesh: Arc<Mesh>) -> Result<Self> {
        ExtensionContext::with_options(mesh, SolverOptions::default())
    }

    pub fn with_options(mesh: Arc<Mesh>, opts: SolverOptions) -> Result<Self> {
        let hcurl = HcurlSpace::new(mesh.clone());
        let p1 = LagrangeSpace::new(mesh.clone(), 1)?;
        let w_space = H1VectorSpace::new(mesh.clone(), 2)?;
        let neumann_k = assemble_scalar_laplacian(&p1);
        let neumann_mass = assemble_scalar_mass(&p1);
        let integrals = assemble_scalar_integrals(&p1);

        let w_free = free_w_dofs(&w_space);
        let aux_a = assemble_curl_div(&w_space).submatrix(&w_free, &w_free);
        let aux_mass = assemble_vector_mass(&w_space).submatrix(&w_free, &w_free);
        let basis = compute_harmonic_basis(&mesh, &aux_a, &aux_mass, &w_free, w_space.num_dofs(), opts.cg)?;
        // With harmonic fields present the operator is only semidefinite;
        // CG then works on the consistent right-hand sides built below.
        let aux_opts = if basis.is_empty() { opts } else { SolverOptions::iterative(opts.cg) };
        let aux_solver = SpdSolver::new(aux_a.clone(), aux_opts)?;

        let tangential = TangentialLifter::new(&hcurl, opts)?;
        let interior_p1 = p1.interior_nodes();
        let interior_laplace = SpdSolver::new(neumann_k.submatrix(&interior_p1, &interior_p1), opts)?;
        let gradient_coupling = assemble_nedelec_gradient_coupling(&hcurl, &p1);
        let p1_mass_solver = SpdSolver::new(neumann_mass.clone(), opts)?;
        let boundary_vertices = mesh.boundary_vertices().to_vec();
        let boundary_mass = SpdSolver::new(boundary_p1_mass(&mesh, &boundary_vertices), opts)?;
        let triangles = BoundaryTriangle::all(&mesh);
        Ok(ExtensionContext {
            mesh,
            hcurl,
            p1,
            w_space,
            neumann_k,
            neumann_mass,
            integrals,
            w_free,
            aux_mass,
            aux_solver,
            basis,
            tangential,
            interior_laplace,
            interior_p1,
            gradient_coupling,
            p1_mass_solver,
            boundary_mass,
            boundary_vertices,
            triangles,
            cg: opts.cg,
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn hcurl(&self) -> &HcurlSpace {
        &self.hcurl
    }

    pub fn w_space(&self) -> &H1VectorSpace {
        &self.w_space
    }

    pub fn harmonic_basis(&self) -> &HarmonicBasis {
        &self.basis
    }

    pub fn tangential_lifter(&self) -> &TangentialLifter {
        &self.tangential
    }

    /// Boundary-L² norm of the field reconstructed from tangential moments.
    pub fn trace_l2_norm(&self, g: &TangentialTraceData) -> f64 {
        let ev = g.edge_values(&self.mesh);
        let rule = triangle(2);
        let mut acc = 0.0;
        for tri in &self.triangles {
            for (bary, w) in rule.points.iter().zip(&rule.weights) {
                acc += w * tri.area * tri.reconstruct(&ev, bary).norm_squared();
            }
        }
        acc.sqrt()
    }

    /// Boundary-L² norm of the Riesz representer of a boundary functional
    /// on P1 (surrogate for the `H^{-1/2}` norm of `div_τ v`).
    fn boundary_dual_norm(&self, functional: &[f64]) -> Result<f64> {
        let b: Vec<f64> = self.boundary_vertices.iter().map(|&v| functional[v]).collect();
        let x = self.boundary_mass.solve(&b)?.x;
        Ok(dot(&x, &b).max(0.0).sqrt())
    }

    /// Neumann problem `−Δw = 0`, `∂_n w = −div_τ v`, `∫ w = 0` with
    /// `v = n × G`.
    pub fn solve_neumann(&self, g: &TangentialTraceData) -> Result<NeumannScalarSolution> {
        check_trace_len(&self.hcurl, g)?;
        let ev = g.edge_values(&self.mesh);
        let div_v = tangential_div_of(&self.mesh, |tri, bary| rotated(tri, &ev, bary));
        self.solve_neumann_functional(&div_v)
    }

    fn solve_neumann_functional(&self, div_v: &[f64]) -> Result<NeumannScalarSolution> {
        // ∫ ∇w·∇q = ∫_∂Ω v·∇_τ q = −(div_τ v)(q)
        let b: Vec<f64> = div_v.iter().map(|v| -v).collect();
        let vol: f64 = self.integrals.iter().sum();
        let multiplier = b.iter().sum::<f64>() / vol;
        let op = Augmented {
            k: &self.neumann_k,
            c: &self.integrals,
        };
        let diag: Vec<f64> = self
            .neumann_k
            .diagonal()
            .iter()
            .zip(&self.integrals)
            .map(|(d, c)| d + c * c)
            .collect();
        let mut w = vec![0.0; b.len()];
        let out = conjugate_gradient(&op, &b, &mut w, &inverse_diagonal(&diag), self.cg)?;
        Ok(NeumannScalarSolution {
            mean: dot(&self.integrals, &w),
            residual: out.relative_residual,
            iterations: out.iterations,
            multiplier,
            w,
        })
    }

    /// Auxiliary problem on the constrained degree-2 space:
    /// `(curl r, curl φ) + (div r, div φ) = (∇w + μ, φ) − ∫_∂Ω v·φ`.
    pub fn solve_auxiliary(&self, g: &TangentialTraceData, w: &NeumannScalarSolution) -> Result<AuxiliaryField> {
        check_trace_len(&self.hcurl, g)?;
        let ev = g.edge_values(&self.mesh);
        let full = self.auxiliary_rhs(&ev, &w.w);
        let mut b: Vec<f64> = self.w_free.iter().map(|&d| full[d]).collect();
        // μ(v): the harmonic component the data would otherwise inject,
        // removed so that the semidefinite system stays consistent
        for member in &self.basis.members {
            let lam: Vec<f64> = self.w_free.iter().map(|&d| member[d]).collect();
            let c = dot(&b, &lam);
            let m_lam = self.aux_mass.mul_vec(&lam);
            for (bi, mi) in b.iter_mut().zip(&m_lam) {
                *bi -= c * mi;
            }
        }
        let rep = self.aux_solver.solve(&b)?;
        let mut r = rep.x;
        let mut harmonic_coefficients = Vec::new();
        for member in &self.basis.members {
            let lam: Vec<f64> = self.w_free.iter().map(|&d| member[d]).collect();
            let c = self.aux_mass.bilinear(&lam, &r);
            for (ri, li) in r.iter_mut().zip(&lam) {
                *ri -= c * li;
            }
            harmonic_coefficients.push(self.aux_mass.bilinear(&lam, &r));
        }
        let mut full_r = vec![0.0; self.w_space.num_dofs()];
        for (k, &d) in self.w_free.iter().enumerate() {
            full_r[d] = r[k];
        }
        Ok(AuxiliaryField {
            r: full_r,
            harmonic_coefficients,
            residual: rep.relative_residual,
            iterations: rep.iterations,
        })
    }

    /// `(∇w, φ_j) − ∫_∂Ω v·φ_j` on every W dof.
    fn auxiliary_rhs(&self, edge_values: &[f64], w: &[f64]) -> Vec<f64> {
        let mut out = self.boundary_pairing(edge_values);
        for v in out.iter_mut() {
            *v = -*v;
        }
        let rule = default_tetrahedron();
        let mut vals = [0.0; 10];
        for cell in 0..self.mesh.num_cells() {
            let geom = CellGeometry::new(&self.mesh, cell);
            let (_, grad_w) = self.p1.evaluate(w, cell, &geom, &[0.25; 4]);
            let dofs = self.w_space.cell_dofs(cell);
            for (bary, wt) in rule.points.iter().zip(&rule.weights) {
                lagrange_values(2, bary, &mut vals);
                for a in 0..10 {
                    for c in 0..3 {
                        out[dofs[3 * a + c]] += wt * geom.volume * vals[a] * grad_w[c];
                    }
                }
            }
        }
        out
    }

    /// `∫_∂Ω v·φ_j ds` for every W dof, `v = n × G_rep`.
    fn boundary_pairing(&self, edge_values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.w_space.num_dofs()];
        let rule = triangle(2);
        let mut vals = [0.0; 10];
        for tri in &self.triangles {
            let (cell, local) = face_in_cell(&self.mesh, tri);
            let dofs = self.w_space.cell_dofs(cell);
            for (bary, wt) in rule.points.iter().zip(&rule.weights) {
                let v = rotated(tri, edge_values, bary);
                let mut b4 = [0.0; 4];
                for k in 0..3 {
                    b4[local[k]] = bary[k];
                }
                lagrange_values(2, &b4, &mut vals);
                for a in 0..10 {
                    if vals[a] == 0.0 {
                        continue;
                    }
                    for c in 0..3 {
                        out[dofs[3 * a + c]] += wt * tri.area * vals[a] * v[c];
                    }
                }
            }
        }
        out
    }

    /// Edge moments of the element-wise curl of `r`, averaged over the
    /// cells sharing each edge.
    pub fn curl_interpolant(&self, r: &[f64]) -> Vec<f64> {
        let mesh = &self.mesh;
        let mut sum = vec![0.0; mesh.num_edges()];
        let mut count = vec![0usize; mesh.num_edges()];
        let gauss = gauss_interval_2();
        for cell in 0..mesh.num_cells() {
            let geom = CellGeometry::new(mesh, cell);
            for (k, &[la, lb]) in LOCAL_EDGES.iter().enumerate() {
                let e = mesh.cell_edges(cell)[k];
                let [ga, gb] = mesh.edges()[e];
                // local vertex order may be reversed against the global edge
                let (a, b) = if mesh.cells()[cell][la] == ga { (la, lb) } else { (lb, la) };
                debug_assert_eq!(mesh.cells()[cell][b], gb);
                let t = mesh.edge_vector(e);
                let mut m = 0.0;
                for (s, wt) in gauss {
                    let mut bary = [0.0; 4];
                    bary[a] = 1.0 - s;
                    bary[b] = s;
                    let (_, grad) = self.w_space.evaluate(r, cell, &geom, &bary);
                    m += wt * axial_of_skew(&grad).dot(&t);
                }
                sum[e] += m;
                count[e] += 1;
            }
        }
        sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect()
    }

    /// `sup ⟨div r, q⟩ / ‖q‖_{L²}` over P1 `q`.
    fn auxiliary_div_residual(&self, r: &[f64]) -> Result<f64> {
        let mut d = vec![0.0; self.p1.num_nodes()];
        let rule = default_tetrahedron();
        let mut vals = [0.0; 10];
        for cell in 0..self.mesh.num_cells() {
            let geom = CellGeometry::new(&self.mesh, cell);
            for (bary, wt) in rule.points.iter().zip(&rule.weights) {
                let (_, grad) = self.w_space.evaluate(r, cell, &geom, bary);
                lagrange_values(1, bary, &mut vals);
                for (k, &n) in self.p1.cell_nodes(cell).iter().enumerate() {
                    d[n] += wt * geom.volume * grad.trace() * vals[k];
                }
            }
        }
        let x = self.p1_mass_solver.solve(&d)?.x;
        Ok(dot(&x, &d).max(0.0).sqrt())
    }

    /// The three-step construction, plus its property report.
    pub fn constructive_extension(&self, g: &TangentialTraceData) -> Result<(Vec<f64>, ExtensionReport)> {
        check_trace_len(&self.hcurl, g)?;
        let ev = g.edge_values(&self.mesh);
        let div_v = tangential_div_of(&self.mesh, |tri, bary| rotated(tri, &ev, bary));
        let w = self.solve_neumann_functional(&div_v)?;
        let aux = self.solve_auxiliary(g, &w)?;
        let r_coeffs = self.curl_interpolant(&aux.r);

        let trace = tangential_trace(&self.hcurl, &r_coeffs)?;
        let mismatch = trace.combine(1.0, g, -1.0);

        // curl-curl residual: dual norm of (curl R, curl ·) on interior edges
        let solver = self.tangential.interior_solver();
        let cc = assemble_nedelec_curl_curl(&self.hcurl).mul_vec(&r_coeffs);
        let res: Vec<f64> = solver.free().iter().map(|&e| cc[e]).collect();
        let y = solver.reduced().solve(&res)?.x;
        let curl_curl_residual = dot(&y, &res).max(0.0).sqrt();

        // weak divergence of R against interior P1 functions, in the dual
        // norm of ‖∇q‖
        let full_div = transpose_mul(&self.gradient_coupling, &r_coeffs);
        let d: Vec<f64> = self.interior_p1.iter().map(|&n| full_div[n]).collect();
        let div_residual = if d.is_empty() {
            0.0
        } else {
            let z = self.interior_laplace.solve(&d)?.x;
            dot(&z, &d).max(0.0).sqrt()
        };

        let grad_w_norm = self.neumann_k.quadratic_form(&w.w).max(0.0).sqrt();
        let w_h1_norm = (self.neumann_k.quadratic_form(&w.w) + self.neumann_mass.quadratic_form(&w.w))
            .max(0.0)
            .sqrt();
        let curl_r_norm = self.curl_l2_norm(&aux.r);
        let report = ExtensionReport {
            trace_error: self.trace_l2_norm(&mismatch),
            trace_error_max: mismatch.max_abs(),
            curl_curl_residual,
            div_residual,
            auxiliary_div_residual: self.auxiliary_div_residual(&aux.r)?,
            neumann_residual: w.residual,
            neumann_multiplier: w.multiplier,
            harmonic_dimension: self.basis.dimension(),
            data_norm: self.trace_l2_norm(g),
            div_tau_norm: self.boundary_dual_norm(&div_v)?,
            w_h1_norm,
            grad_w_norm,
            curl_r_norm,
        };
        Ok((r_coeffs, report))
    }

    fn curl_l2_norm(&self, r: &[f64]) -> f64 {
        let rule = default_tetrahedron();
        let mut acc = 0.0;
        for cell in 0..self.mesh.num_cells() {
            let geom = CellGeometry::new(&self.mesh, cell);
            for (bary, wt) in rule.points.iter().zip(&rule.weights) {
                let (_, grad) = self.w_space.evaluate(r, cell, &geom, bary);
                acc += wt * geom.volume * axial_of_skew(&grad).norm_squared();
            }
        }
        acc.sqrt()
    }

    /// Constructive lifting used as a solver lift: the interior comes from
    /// the construction and the boundary dofs are set to the data, so the
    /// lifted unknown has exactly homogeneous traces.
    pub fn constructive_lift(&self, g: &TangentialTraceData) -> Result<Vec<f64>> {
        let (mut r, _) = self.constructive_extension(g)?;
        for (&e, &v) in self.hcurl.boundary_dofs().iter().zip(g.values()) {
            r[e] = v;
        }
        Ok(r)
    }
}

fn transpose_mul(a: &CsrMatrix, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.ncols()];
    for (i, j, v) in a.triplets() {
        out[j] += v * x[i];
    }
    out
}

/// W dofs left free after pinning normal components on the box planes.
fn free_w_dofs(space: &H1VectorSpace) -> Vec<usize> {
    let mesh = space.mesh();
    let scalar = space.scalar();
    let mut free = Vec::new();
    for (node, x) in scalar.nodes().iter().enumerate() {
        let planes = mesh.on_box_planes(x);
        for c in 0..3 {
            if !planes[c] {
                free.push(H1VectorSpace::dof(node, c));
            }
        }
    }
    free
}

fn face_in_cell(mesh: &Mesh, tri: &BoundaryTriangle) -> (usize, [usize; 3]) {
    let (cell, _) = mesh.face_cells(tri.face);
    let verts = mesh.cells()[cell];
    let local = tri.vertices.map(|v| verts.iter().position(|&c| c == v).unwrap());
    (cell, local)
}

fn boundary_p1_mass(mesh: &Mesh, boundary_vertices: &[usize]) -> CsrMatrix {
    let index = |v: usize| boundary_vertices.binary_search(&v).unwrap();
    let tris = BoundaryTriangle::all(mesh);
    let mut pb = crate::sparse::PatternBuilder::new(boundary_vertices.len(), boundary_vertices.len());
    for t in &tris {
        let ids = t.vertices.map(index);
        pb.add_block(&ids, &ids);
    }
    let mut m = pb.build(true);
    for t in &tris {
        let ids = t.vertices.map(index);
        let mut local = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                local[3 * i + j] = t.area / if i == j { 6.0 } else { 12.0 };
            }
        }
        m.add_block(&ids, &ids, &local);
    }
    m
}

/// Largest system solved densely in the harmonic-field eigenproblem.
const DENSE_EIGEN_LIMIT: usize = 1500;

fn compute_harmonic_basis(
    mesh: &Mesh,
    a: &CsrMatrix,
    b: &CsrMatrix,
    free: &[usize],
    full_dim: usize,
    cg: CgOptions,
) -> Result<HarmonicBasis> {
    let n = a.nrows();
    let scale = a
        .diagonal()
        .iter()
        .zip(b.diagonal())
        .map(|(x, y)| x / y)
        .fold(0.0f64, f64::max);
    let threshold = 1e-8 * scale;
    let expand = |v: &[f64]| {
        let mut out = vec![0.0; full_dim];
        for (k, &d) in free.iter().enumerate() {
            out[d] = v[k];
        }
        out
    };
    if n == 0 {
        return Ok(HarmonicBasis {
            members: Vec::new(),
            smallest_eigenvalue: f64::INFINITY,
            threshold,
        });
    }
    let (values, vectors): (Vec<f64>, Vec<Vec<f64>>) = if n <= DENSE_EIGEN_LIMIT {
        let (vals, vecs) = generalized_symmetric_eigen(&a.to_dense(), &b.to_dense(), true)?;
        let vecs = vecs.unwrap();
        let cols = (0..n).map(|j| vecs.column(j).iter().copied().collect()).collect();
        (vals, cols)
    } else {
        let k = mesh.first_betti_number() + 1;
        let diam = mesh.spec().lengths.iter().map(|l| l * l).sum::<f64>();
        let pairs = lowest_eigenpairs(a, b, k, 1.0 / diam, CgOptions { rtol: 1e-10, ..cg })?;
        (pairs.values, pairs.vectors)
    };
    let smallest_eigenvalue = values[0];
    let mut members = Vec::new();
    for (val, vec) in values.iter().zip(vectors) {
        if *val < threshold {
            let norm = b.quadratic_form(&vec).sqrt();
            members.push(expand(&vec.iter().map(|x| x / norm).collect::<Vec<_>>()));
        }
    }
    Ok(HarmonicBasis {
        members,
        smallest_eigenvalue,
        threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_box_mesh, BoxSpec};
    use crate::spaces::edge_moment;
    use core::f64::consts::PI;
    use proptest::prelude::*;

    fn cube(n: usize) -> Arc<Mesh> {
        Arc::new(build_box_mesh(BoxSpec::unit_cube(n)).unwrap())
    }

    #[test]
    fn dirichlet_lift_examples() {
        let space = H1VectorSpace::new(cube(3), 1).unwrap();
        assert!(lift_dirichlet(&space, |_| Vec3::zeros()).unwrap().iter().all(|&v| v == 0.0));
        let lin = lift_dirichlet(&space, |x| Vec3::new(x.x + x.y, x.z, 0.0)).unwrap();
        let exact = space.interpolate(|x| Vec3::new(x.x + x.y, x.z, 0.0));
        for (a, b) in lin.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-10);
        }
        let sq = lift_dirichlet(&space, |x| Vec3::new(x.x * x.x, 0.0, 0.0)).unwrap();
        let scalar = space.scalar();
        let bvals: Vec<f64> = scalar.boundary_nodes().iter().map(|&n| sq[3 * n]).collect();
        let (lo, hi) = bvals.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        for n in scalar.interior_nodes() {
            assert!(sq[3 * n] >= lo - 1e-12 && sq[3 * n] <= hi + 1e-12);
        }
        for &n in &scalar.boundary_nodes() {
            assert_eq!(sq[3 * n], scalar.nodes()[n].x * scalar.nodes()[n].x);
        }
    }

    #[test]
    fn tangential_divergence_examples() {
        let mesh = cube(2);
        let c = Vec3::new(1.0, -2.0, 0.5);
        let g = TangentialTraceData::from_field(&mesh, |_| c);
        let f = tangential_div_boundary(&mesh, &g);
        assert!(f.iter().sum::<f64>().abs() < 1e-13);
        // gradient of a linear function: zero at vertices interior to a face
        let grad = TangentialTraceData::from_field(&mesh, |_| Vec3::new(0.3, 0.7, -1.1));
        let f = tangential_div_boundary(&mesh, &grad);
        for &v in mesh.boundary_vertices() {
            let planes = mesh.on_box_planes(&mesh.vertices()[v]);
            if planes.iter().filter(|&&p| p).count() == 1 {
                assert!(f[v].abs() < 1e-13, "{}", f[v]);
            }
        }
        let random = TangentialTraceData::from_values(&mesh, (0..g.len()).map(|k| (k as f64 * 0.37).sin()).collect()).unwrap();
        assert!(tangential_div_boundary(&mesh, &random).iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn neumann_examples() {
        let ctx = ExtensionContext::new(cube(2)).unwrap();
        let zero = ctx.solve_neumann(&TangentialTraceData::zeros(&ctx.mesh)).unwrap();
        assert!(zero.w.iter().all(|&v| v == 0.0));
        // v = n × G for G the trace of a constant field is divergence free
        // on every face; solution vanishes
        let g = TangentialTraceData::from_field(&ctx.mesh, |_| Vec3::new(0.2, 0.0, 0.0));
        let s = ctx.solve_neumann(&g).unwrap();
        assert!(dot(&s.w, &s.w).sqrt() < 1e-12);
        assert!(s.multiplier.abs() < 1e-12);
        // a trace with nonzero surface divergence gives a nontrivial mean-zero w
        let g = TangentialTraceData::from_field(&ctx.mesh, |x| Vec3::new(x.x * x.y, x.z, -x.y * x.y));
        let s = ctx.solve_neumann(&g).unwrap();
        assert!(dot(&s.w, &s.w).sqrt() > 1e-3);
        assert!(s.mean.abs() < 1e-10);
        assert!(s.residual < 1e-8);
    }

    #[test]
    fn harmonic_basis_is_empty_on_boxes() {
        for n in [1, 2] {
            let ctx = ExtensionContext::new(cube(n)).unwrap();
            assert!(ctx.harmonic_basis().is_empty());
            assert!(ctx.harmonic_basis().smallest_eigenvalue > ctx.harmonic_basis().threshold);
        }
    }

    #[test]
    fn zero_data_gives_exact_zeros() {
        let ctx = ExtensionContext::new(cube(2)).unwrap();
        let z = TangentialTraceData::zeros(&ctx.mesh);
        let (r, rep) = ctx.constructive_extension(&z).unwrap();
        assert!(r.iter().all(|&v| v == 0.0));
        assert_eq!(rep.trace_error, 0.0);
        assert_eq!(rep.curl_curl_residual, 0.0);
        assert_eq!(rep.div_residual, 0.0);
        assert_eq!(rep.auxiliary_div_residual, 0.0);
        let aux = ctx.solve_auxiliary(&z, &ctx.solve_neumann(&z).unwrap()).unwrap();
        assert!(aux.r.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constructive_extension_recovers_smooth_traces() {
        // ∇(sin πx sin πy sinh(√2πz)): curl free and divergence free, with no
        // tangential component along the box edges
        let k = core::f64::consts::SQRT_2 * PI;
        let field = move |x: &Vec3| {
            let (sx, sy, cx, cy) = ((PI * x.x).sin(), (PI * x.y).sin(), (PI * x.x).cos(), (PI * x.y).cos());
            let (sh, ch) = ((k * x.z).sinh(), (k * x.z).cosh());
            Vec3::new(PI * cx * sy * sh, PI * sx * cy * sh, k * sx * sy * ch)
        };
        let mut reports = Vec::new();
        for n in [2, 4] {
            let ctx = ExtensionContext::new(cube(n)).unwrap();
            let g = TangentialTraceData::from_field(&ctx.mesh, field);
            reports.push(ctx.constructive_extension(&g).unwrap().1);
        }
        assert!(reports[1].trace_error < 0.6 * reports[0].trace_error);
        assert!(reports[1].curl_curl_residual < reports[0].curl_curl_residual);
        assert!(reports[1].div_residual < reports[0].div_residual);
    }

    #[test]
    fn direct_lifting_examples() {
        let mesh = cube(2);
        let space = HcurlSpace::new(mesh.clone());
        let lifter = TangentialLifter::new(&space, SolverOptions::default()).unwrap();
        assert!(lifter.lift(&TangentialTraceData::zeros(&mesh)).unwrap().iter().all(|&v| v == 0.0));
        let g1 = TangentialTraceData::from_field(&mesh, |x| Vec3::new(x.y, -x.x, x.z * x.z));
        let g2 = TangentialTraceData::from_field(&mesh, |_| Vec3::new(1.0, 2.0, 3.0));
        let (a, b) = (0.7, -1.9);
        let l1 = lifter.lift(&g1).unwrap();
        let l2 = lifter.lift(&g2).unwrap();
        let l12 = lifter.lift(&g1.combine(a, &g2, b)).unwrap();
        for k in 0..l1.len() {
            assert!((a * l1[k] + b * l2[k] - l12[k]).abs() < 1e-12);
        }
        assert_eq!(tangential_trace(&space, &l1).unwrap(), g1);
        assert!(lifter.lift(&TangentialTraceData::from_values(&cube(1), vec![0.0; 18]).unwrap()).is_err());
    }

    #[test]
    fn coupling_trace_examples() {
        let mesh = cube(2);
        let zero = coupling_trace(&mesh, |_| Vec3::zeros());
        assert!(zero.iter().all(|g| g.max_abs() == 0.0));
        let a = crate::Mat3::new(1.0, 2.0, 3.0, -1.0, 0.0, 0.5, 0.2, 0.3, -0.4);
        let g = coupling_trace(&mesh, |x| a * x + Vec3::new(1.0, 1.0, 1.0));
        for i in 0..3 {
            let row: Vec3 = a.row(i).transpose();
            let expected = TangentialTraceData::from_field(&mesh, |_| row);
            for (p, q) in g[i].values().iter().zip(expected.values()) {
                assert!((p - q).abs() < 1e-14);
            }
        }
        // the moment of a gradient is the difference of end values
        let e = mesh.boundary_edges()[5];
        let m = edge_moment(&mesh, e, &|x: &Vec3| Vec3::new(2.0 * x.x, 0.0, 0.0));
        let [p, q] = mesh.edges()[e];
        let (xa, xb) = (mesh.vertices()[p].x, mesh.vertices()[q].x);
        assert!((m - (xb * xb - xa * xa)).abs() < 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn direct_lifting_recovers_any_trace(seed in proptest::collection::vec(-1.0f64..1.0, 72)) {
            let mesh = cube(2);
            let space = HcurlSpace::new(mesh.clone());
            let g = TangentialTraceData::from_values(&mesh, seed).unwrap();
            let lifted = direct_lifting(&g, &space).unwrap();
            prop_assert_eq!(tangential_trace(&space, &lifted).unwrap(), g);
        }

        #[test]
        fn tangential_divergence_has_zero_total(seed in proptest::collection::vec(-1.0f64..1.0, 72)) {
            let mesh = cube(2);
            let g = TangentialTraceData::from_values(&mesh, seed).unwrap();
            prop_assert!(tangential_div_boundary(&mesh, &g).iter().sum::<f64>().abs() < 1e-12);
        }
    }
}
