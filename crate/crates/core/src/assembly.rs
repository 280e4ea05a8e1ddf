//! Sparse operators and load vectors.
//!
//! Global unknown layout of the coupled problem: the vector Lagrange dofs of
//! `u` first, then the Nédélec dofs of `P_1`, `P_2`, `P_3` in that order.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::mesh::Mesh;
use crate::quadrature::{default_tetrahedron, SimplexRule};
use crate::sparse::{CsrMatrix, PatternBuilder};
use crate::spaces::{lagrange_gradients, lagrange_values, CellGeometry, H1VectorSpace, HcurlSpace, LagrangeSpace};
use crate::{Error, Mat3, Result, Vec3};

/// Constitutive constants of the relaxed micromorphic model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialParams {
    pub mu_e: f64,
    pub lambda_e: f64,
    pub mu_c: f64,
    pub mu_micro: f64,
    pub lambda_micro: f64,
    pub mu_macro: f64,
    pub l_c: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        MaterialParams {
            mu_e: 1.0,
            lambda_e: 1.0,
            mu_c: 0.0,
            mu_micro: 1.0,
            lambda_micro: 1.0,
            mu_macro: 1.0,
            l_c: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ParamViolation {
    MuE,
    BulkE,
    MuC,
    MuMicro,
    BulkMicro,
    MuMacro,
    CharacteristicLength,
}

impl ParamViolation {
    pub fn inequality(&self) -> &'static str {
        match self {
            ParamViolation::MuE => "μ_e > 0",
            ParamViolation::BulkE => "2μ_e + 3λ_e > 0",
            ParamViolation::MuC => "μ_c ≥ 0",
            ParamViolation::MuMicro => "μ_micro > 0",
            ParamViolation::BulkMicro => "2μ_micro + 3λ_micro > 0",
            ParamViolation::MuMacro => "μ_macro > 0",
            ParamViolation::CharacteristicLength => "L_c > 0",
        }
    }
}

impl MaterialParams {
    /// Every violated admissibility inequality. Non-finite values count as
    /// violations of the inequalities they enter.
    pub fn violations(&self) -> Vec<ParamViolation> {
        let p = self;
        let mut out = Vec::new();
        if !(p.mu_e > 0.0) || !p.mu_e.is_finite() {
            out.push(ParamViolation::MuE);
        }
        let bulk_e = 2.0 * p.mu_e + 3.0 * p.lambda_e;
        if !(bulk_e > 0.0) || !bulk_e.is_finite() {
            out.push(ParamViolation::BulkE);
        }
        if !(p.mu_c >= 0.0) || !p.mu_c.is_finite() {
            out.push(ParamViolation::MuC);
        }
        if !(p.mu_micro > 0.0) || !p.mu_micro.is_finite() {
            out.push(ParamViolation::MuMicro);
        }
        let bulk_micro = 2.0 * p.mu_micro + 3.0 * p.lambda_micro;
        if !(bulk_micro > 0.0) || !bulk_micro.is_finite() {
            out.push(ParamViolation::BulkMicro);
        }
        if !(p.mu_macro > 0.0) || !p.mu_macro.is_finite() {
            out.push(ParamViolation::MuMacro);
        }
        if !(p.l_c > 0.0) || !p.l_c.is_finite() {
            out.push(ParamViolation::CharacteristicLength);
        }
        out
    }

    /// All six moduli multiplied by `factor`; `L_c` unchanged.
    pub fn scaled(&self, factor: f64) -> Self {
        MaterialParams {
            mu_e: self.mu_e * factor,
            lambda_e: self.lambda_e * factor,
            mu_c: self.mu_c * factor,
            mu_micro: self.mu_micro * factor,
            lambda_micro: self.lambda_micro * factor,
            mu_macro: self.mu_macro * factor,
            l_c: self.l_c,
        }
    }

    /// Coupling stress `2μ_e sym D + 2μ_c skew D + λ_e tr(D) 1` for `D = ∇u − P`.
    pub fn coupling_stress(&self, d: &Mat3) -> Mat3 {
        let sym = (d + d.transpose()) * 0.5;
        let skew = (d - d.transpose()) * 0.5;
        sym * (2.0 * self.mu_e) + skew * (2.0 * self.mu_c) + Mat3::identity() * (self.lambda_e * d.trace())
    }

    /// Micro stress `2μ_micro sym P + λ_micro tr(P) 1`.
    pub fn micro_stress(&self, p: &Mat3) -> Mat3 {
        (p + p.transpose()) * self.mu_micro + Mat3::identity() * (self.lambda_micro * p.trace())
    }
}

pub fn validate_params(p: &MaterialParams) -> Result<()> {
    let v = p.violations();
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidParams(v))
    }
}

/// The coupled discrete space for `(u, P)`.
#[derive(Debug, Clone)]
pub struct MicromorphicSpace {
    pub u: H1VectorSpace,
    pub p: HcurlSpace,
}

impl MicromorphicSpace {
    pub fn new(mesh: Arc<Mesh>, u_degree: usize) -> Result<Self> {
        Ok(MicromorphicSpace {
            u: H1VectorSpace::new(mesh.clone(), u_degree)?,
            p: HcurlSpace::new(mesh),
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        self.u.mesh()
    }

    pub fn num_u(&self) -> usize {
        self.u.num_dofs()
    }

    pub fn num_p_row(&self) -> usize {
        self.p.num_dofs()
    }

    pub fn num_dofs(&self) -> usize {
        self.num_u() + 3 * self.num_p_row()
    }

    pub fn p_offset(&self, row: usize) -> usize {
        self.num_u() + row * self.num_p_row()
    }

    /// Dofs fixed by the Dirichlet and tangential boundary conditions.
    pub fn constrained_dofs(&self) -> Vec<usize> {
        let mut out = self.u.boundary_dofs();
        for row in 0..3 {
            let off = self.p_offset(row);
            out.extend(self.p.boundary_dofs().iter().map(|&e| off + e));
        }
        out.sort_unstable();
        out
    }

    pub fn free_dofs(&self) -> Vec<usize> {
        let mut fixed = vec![false; self.num_dofs()];
        for d in self.constrained_dofs() {
            fixed[d] = true;
        }
        (0..self.num_dofs()).filter(|&d| !fixed[d]).collect()
    }

    pub fn split<'a>(&self, x: &'a [f64]) -> (&'a [f64], [&'a [f64]; 3]) {
        let (u, p) = x.split_at(self.num_u());
        let n = self.num_p_row();
        (u, [&p[..n], &p[n..2 * n], &p[2 * n..]])
    }

    pub fn join(&self, u: &[f64], rows: [&[f64]; 3]) -> Result<Vec<f64>> {
        if u.len() != self.num_u() {
            return Err(Error::DimensionMismatch {
                what: "displacement coefficients",
                expected: self.num_u(),
                found: u.len(),
            });
        }
        let mut out = Vec::with_capacity(self.num_dofs());
        out.extend_from_slice(u);
        for r in rows {
            if r.len() != self.num_p_row() {
                return Err(Error::DimensionMismatch {
                    what: "micro-distortion row coefficients",
                    expected: self.num_p_row(),
                    found: r.len(),
                });
            }
            out.extend_from_slice(r);
        }
        Ok(out)
    }

    /// Local-to-global dof map of a cell: u dofs then P rows.
    pub fn cell_dofs(&self, cell: usize) -> Vec<usize> {
        let mut dofs = self.u.cell_dofs(cell);
        for row in 0..3 {
            let off = self.p_offset(row);
            dofs.extend(self.p.cell_dofs(cell).iter().map(|&e| off + e));
        }
        dofs
    }

    /// Nodal/edge interpolant of analytic `(u, P)`.
    pub fn interpolate(&self, u: impl Fn(&Vec3) -> Vec3, p: impl Fn(&Vec3) -> Mat3) -> Vec<f64> {
        let uc = self.u.interpolate(u);
        let rows = self.p.interpolate_rows(p);
        self.join(&uc, [&rows[0], &rows[1], &rows[2]]).unwrap()
    }

    /// Values of `u`, `∇u`, `P`, and `Curl P` at a point of `cell`.
    pub fn evaluate(&self, x: &[f64], cell: usize, geom: &CellGeometry, bary: &[f64; 4]) -> FieldValues {
        let (uc, rows) = self.split(x);
        let (u, grad_u) = self.u.evaluate(uc, cell, geom, bary);
        let mut p = Mat3::zeros();
        let mut curl_p = Mat3::zeros();
        for (i, r) in rows.iter().enumerate() {
            let (v, c) = self.p.evaluate(r, cell, geom, bary);
            p.set_row(i, &v.transpose());
            curl_p.set_row(i, &c.transpose());
        }
        FieldValues {
            u,
            grad_u,
            p,
            curl_p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldValues {
    pub u: Vec3,
    pub grad_u: Mat3,
    pub p: Mat3,
    pub curl_p: Mat3,
}

/// Per-basis-function tensors of the coupled space at one quadrature point.
struct CoupledBasis {
    grad_u: Vec<Mat3>,
    p: Vec<Mat3>,
    curl_p: Vec<Mat3>,
    u: Vec<Vec3>,
}

fn coupled_basis(space: &MicromorphicSpace, cell: usize, geom: &CellGeometry, bary: &[f64; 4]) -> CoupledBasis {
    let degree = space.u.degree();
    let nloc = crate::spaces::local_node_count(degree);
    let mut vals = [0.0; 10];
    let mut grads = [Vec3::zeros(); 10];
    lagrange_values(degree, bary, &mut vals);
    lagrange_gradients(degree, bary, &geom.grads, &mut grads);
    let ned = space.p.local_basis(cell, geom, bary);
    let n = 3 * nloc + 18;
    let mut basis = CoupledBasis {
        grad_u: vec![Mat3::zeros(); n],
        p: vec![Mat3::zeros(); n],
        curl_p: vec![Mat3::zeros(); n],
        u: vec![Vec3::zeros(); n],
    };
    for a in 0..nloc {
        for c in 0..3 {
            let k = 3 * a + c;
            basis.grad_u[k].set_row(c, &grads[a].transpose());
            basis.u[k][c] = vals[a];
        }
    }
    for row in 0..3 {
        for e in 0..6 {
            let k = 3 * nloc + 6 * row + e;
            basis.p[k].set_row(row, &ned.values[e].transpose());
            basis.curl_p[k].set_row(row, &ned.curls[e].transpose());
        }
    }
    basis
}

fn pattern_from_cells(n: usize, cells: impl Iterator<Item = Vec<usize>>) -> CsrMatrix {
    let mut pb = PatternBuilder::new(n, n);
    for dofs in cells {
        pb.add_block(&dofs, &dofs);
    }
    pb.build(true)
}

fn sym(m: &Mat3) -> Mat3 {
    (m + m.transpose()) * 0.5
}

fn skew(m: &Mat3) -> Mat3 {
    (m - m.transpose()) * 0.5
}

/// Generic symmetric assembly over the coupled space: `form` receives the
/// per-basis tensors and returns the pointwise value of the bilinear form
/// for a pair of local basis functions.
fn assemble_coupled(
    space: &MicromorphicSpace,
    rule: &SimplexRule<4>,
    form: impl Fn(&Precomputed, usize, usize) -> f64,
) -> CsrMatrix {
    let mesh = space.mesh();
    let mut k = pattern_from_cells(space.num_dofs(), (0..mesh.num_cells()).map(|c| space.cell_dofs(c)));
    for cell in 0..mesh.num_cells() {
        let geom = CellGeometry::new(mesh, cell);
        let dofs = space.cell_dofs(cell);
        let n = dofs.len();
        let mut local = vec![0.0; n * n];
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            let basis = coupled_basis(space, cell, &geom, bary);
            let pre = Precomputed::new(&basis);
            let scale = w * geom.volume;
            for i in 0..n {
                for j in i..n {
                    let v = scale * form(&pre, i, j);
                    local[i * n + j] += v;
                    if j != i {
                        local[j * n + i] += v;
                    }
                }
            }
        }
        k.add_block(&dofs, &dofs, &local);
    }
    k
}

struct Precomputed {
    sym_d: Vec<Mat3>,
    skew_d: Vec<Mat3>,
    tr_d: Vec<f64>,
    sym_p: Vec<Mat3>,
    skew_p: Vec<Mat3>,
    tr_p: Vec<f64>,
    p: Vec<Mat3>,
    curl_p: Vec<Mat3>,
    grad_u: Vec<Mat3>,
    u: Vec<Vec3>,
}

impl Precomputed {
    fn new(b: &CoupledBasis) -> Self {
        let d: Vec<Mat3> = b.grad_u.iter().zip(&b.p).map(|(g, p)| g - p).collect();
        Precomputed {
            sym_d: d.iter().map(sym).collect(),
            skew_d: d.iter().map(skew).collect(),
            tr_d: d.iter().map(|m| m.trace()).collect(),
            sym_p: b.p.iter().map(sym).collect(),
            skew_p: b.p.iter().map(skew).collect(),
            tr_p: b.p.iter().map(|m| m.trace()).collect(),
            p: b.p.clone(),
            curl_p: b.curl_p.clone(),
            grad_u: b.grad_u.clone(),
            u: b.u.clone(),
        }
    }
}

/// Galerkin matrix of the full micromorphic bilinear form over `(u, P)`;
/// its quadratic form equals twice the stored energy.
pub fn assemble_micromorphic(params: &MaterialParams, space: &MicromorphicSpace) -> Result<CsrMatrix> {
    validate_params(params)?;
    let p = *params;
    let curl_coef = p.mu_macro * p.l_c * p.l_c;
    Ok(assemble_coupled(space, &default_tetrahedron(), move |q, i, j| {
        2.0 * p.mu_e * q.sym_d[i].dot(&q.sym_d[j])
            + 2.0 * p.mu_c * q.skew_d[i].dot(&q.skew_d[j])
            + p.lambda_e * q.tr_d[i] * q.tr_d[j]
            + 2.0 * p.mu_micro * q.sym_p[i].dot(&q.sym_p[j])
            + p.lambda_micro * q.tr_p[i] * q.tr_p[j]
            + curl_coef * q.curl_p[i].dot(&q.curl_p[j])
    }))
}

/// Block-diagonal L² Gram matrix with unit density.
pub fn assemble_mass(space: &MicromorphicSpace) -> CsrMatrix {
    assemble_coupled(space, &default_tetrahedron(), |q, i, j| {
        q.u[i].dot(&q.u[j]) + q.p[i].dot(&q.p[j])
    })
}

/// Gram matrix of `‖∇u‖² + ‖P‖² + ‖Curl P‖²`.
pub fn assemble_coercivity_norm(space: &MicromorphicSpace) -> CsrMatrix {
    assemble_coupled(space, &default_tetrahedron(), |q, i, j| {
        q.grad_u[i].dot(&q.grad_u[j]) + q.p[i].dot(&q.p[j]) + q.curl_p[i].dot(&q.curl_p[j])
    })
}

/// Gram matrix of `‖sym P‖² + ‖Curl P‖²` (u block identically zero).
pub fn assemble_korn_numerator(space: &MicromorphicSpace) -> CsrMatrix {
    assemble_coupled(space, &default_tetrahedron(), |q, i, j| {
        q.sym_p[i].dot(&q.sym_p[j]) + q.curl_p[i].dot(&q.curl_p[j])
    })
}

/// Gram matrix of `‖P‖² + ‖Curl P‖²` (u block identically zero).
pub fn assemble_korn_denominator(space: &MicromorphicSpace) -> CsrMatrix {
    assemble_coupled(space, &default_tetrahedron(), |q, i, j| {
        q.p[i].dot(&q.p[j]) + q.curl_p[i].dot(&q.curl_p[j])
    })
}

/// Gram matrix of `‖skew P‖²`, used by the in-suite sanity checks.
pub fn assemble_skew_gram(space: &MicromorphicSpace) -> CsrMatrix {
    assemble_coupled(space, &default_tetrahedron(), |q, i, j| q.skew_p[i].dot(&q.skew_p[j]))
}

/// `∫ (⟨F, ū⟩ + ⟨M, P̄⟩) dx` for every basis function.
pub fn assemble_loads(
    space: &MicromorphicSpace,
    f: impl Fn(&Vec3) -> Vec3,
    m: impl Fn(&Vec3) -> Mat3,
) -> Vec<f64> {
    let mesh = space.mesh();
    let rule = default_tetrahedron();
    let mut b = vec![0.0; space.num_dofs()];
    for cell in 0..mesh.num_cells() {
        let geom = CellGeometry::new(mesh, cell);
        let dofs = space.cell_dofs(cell);
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            let x = geom.point(bary);
            let (fx, mx) = (f(&x), m(&x));
            let basis = coupled_basis(space, cell, &geom, bary);
            let scale = w * geom.volume;
            for (k, &d) in dofs.iter().enumerate() {
                b[d] += scale * (fx.dot(&basis.u[k]) + mx.dot(&basis.p[k]));
            }
        }
    }
    b
}

/// Stiffness and mass of the coupled problem, assembled once.
#[derive(Debug, Clone)]
pub struct SystemOperators {
    pub space: MicromorphicSpace,
    pub params: MaterialParams,
    pub stiffness: CsrMatrix,
    pub mass: CsrMatrix,
}

impl SystemOperators {
    pub fn new(space: MicromorphicSpace, params: MaterialParams) -> Result<Self> {
        let stiffness = assemble_micromorphic(&params, &space)?;
        let mass = assemble_mass(&space);
        Ok(SystemOperators {
            space,
            params,
            stiffness,
            mass,
        })
    }
}

/// Loads of the lifted problem for the unknown `x − lift`:
/// `ℓ(F, M) − a(lift, ·) − m(lift_tt, ·)`.
///
/// The divergence and curl-curl contributions of the lift never appear in
/// strong form; they enter through the bilinear form, i.e. after
/// integration by parts.
pub fn assemble_modified_loads(
    ops: &SystemOperators,
    loads: &[f64],
    lift: &[f64],
    lift_tt: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let n = ops.space.num_dofs();
    for (what, v) in [("load vector", loads), ("lift", lift)] {
        if v.len() != n {
            return Err(Error::DimensionMismatch {
                what,
                expected: n,
                found: v.len(),
            });
        }
    }
    let ka = ops.stiffness.mul_vec(lift);
    let mut out: Vec<f64> = loads.iter().zip(&ka).map(|(b, k)| b - k).collect();
    if let Some(acc) = lift_tt {
        if acc.len() != n {
            return Err(Error::DimensionMismatch {
                what: "lift acceleration",
                expected: n,
                found: acc.len(),
            });
        }
        let ma = ops.mass.mul_vec(acc);
        for (o, m) in out.iter_mut().zip(&ma) {
            *o -= m;
        }
    }
    Ok(out)
}

/// The six contributions to the stored energy.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyTerms {
    /// `μ_e ‖sym(∇u − P)‖²`
    pub sym_e: f64,
    /// `μ_c ‖skew(∇u − P)‖²`
    pub skew_c: f64,
    /// `λ_e/2 (tr(∇u − P))²`
    pub trace_e: f64,
    /// `μ_micro ‖sym P‖²`
    pub sym_micro: f64,
    /// `λ_micro/2 (tr P)²`
    pub trace_micro: f64,
    /// `μ_macro L_c²/2 ‖Curl P‖²`
    pub curl: f64,
}

impl EnergyTerms {
    pub fn total(&self) -> f64 {
        self.sym_e + self.skew_c + self.trace_e + self.sym_micro + self.trace_micro + self.curl
    }

    pub fn as_array(&self) -> [f64; 6] {
        [
            self.sym_e,
            self.skew_c,
            self.trace_e,
            self.sym_micro,
            self.trace_micro,
            self.curl,
        ]
    }
}

/// Stored energy of a discrete state, term by term.
pub fn energy_terms(params: &MaterialParams, space: &MicromorphicSpace, x: &[f64]) -> EnergyTerms {
    let mesh = space.mesh();
    let rule = default_tetrahedron();
    let mut e = EnergyTerms::default();
    for cell in 0..mesh.num_cells() {
        let geom = CellGeometry::new(mesh, cell);
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            let v = space.evaluate(x, cell, &geom, bary);
            let d = v.grad_u - v.p;
            let s = w * geom.volume;
            e.sym_e += s * params.mu_e * sym(&d).norm_squared();
            e.skew_c += s * params.mu_c * skew(&d).norm_squared();
            e.trace_e += s * 0.5 * params.lambda_e * d.trace() * d.trace();
            e.sym_micro += s * params.mu_micro * sym(&v.p).norm_squared();
            e.trace_micro += s * 0.5 * params.lambda_micro * v.p.trace() * v.p.trace();
            e.curl += s * 0.5 * params.mu_macro * params.l_c * params.l_c * v.curl_p.norm_squared();
        }
    }
    e
}

/// Linear elasticity stiffness `2μ ⟨sym ∇u, sym ∇v⟩ + λ div u div v`.
pub fn assemble_elastic(mu: f64, lambda: f64, space: &H1VectorSpace) -> CsrMatrix {
    vector_lagrange_form(space, |gi, gj, _, _| {
        2.0 * mu * sym(gi).dot(&sym(gj)) + lambda * gi.trace() * gj.trace()
    })
}

/// `∫ (curl r · curl φ + div r div φ)` on a vector Lagrange space.
pub fn assemble_curl_div(space: &H1VectorSpace) -> CsrMatrix {
    vector_lagrange_form(space, |gi, gj, _, _| {
        let ci = axial_of_skew(gi);
        let cj = axial_of_skew(gj);
        ci.dot(&cj) + gi.trace() * gj.trace()
    })
}

/// Vector L² mass on a vector Lagrange space.
pub fn assemble_vector_mass(space: &H1VectorSpace) -> CsrMatrix {
    vector_lagrange_form(space, |_, _, ui, uj| ui.dot(uj))
}

/// `∫ f · φ` for every vector Lagrange basis function.
pub fn assemble_vector_load(space: &H1VectorSpace, f: impl Fn(&Vec3) -> Vec3) -> Vec<f64> {
    let mesh = space.mesh();
    let rule = default_tetrahedron();
    let degree = space.degree();
    let nloc = crate::spaces::local_node_count(degree);
    let mut b = vec![0.0; space.num_dofs()];
    let mut vals = [0.0; 10];
    for cell in 0..mesh.num_cells() {
        let geom = CellGeometry::new(mesh, cell);
        let dofs = space.cell_dofs(cell);
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            lagrange_values(degree, bary, &mut vals);
            let fx = f(&geom.point(bary));
            let s = w * geom.volume;
            for a in 0..nloc {
                for c in 0..3 {
                    b[dofs[3 * a + c]] += s * vals[a] * fx[c];
                }
            }
        }
    }
    b
}

/// Curl of a vector field from its gradient matrix (row `i` = `∇u_i`).
pub fn axial_of_skew(g: &Mat3) -> Vec3 {
    Vec3::new(g[(2, 1)] - g[(1, 2)], g[(0, 2)] - g[(2, 0)], g[(1, 0)] - g[(0, 1)])
}

fn vector_lagrange_form(space: &H1VectorSpace, form: impl Fn(&Mat3, &Mat3, &Vec3, &Vec3) -> f64) -> CsrMatrix {
    let mesh = space.mesh();
    let rule = default_tetrahedron();
    let degree = space.degree();
    let nloc = crate::spaces::local_node_count(degree);
    let mut k = pattern_from_cells(space.num_dofs(), (0..mesh.num_cells()).map(|c| space.cell_dofs(c)));
    let n = 3 * nloc;
    for cell in 0..mesh.num_cells() {
        let geom = CellGeometry::new(mesh, cell);
        let dofs = space.cell_dofs(cell);
        let mut local = vec![0.0; n * n];
        let mut vals = [0.0; 10];
        let mut grads = [Vec3::zeros(); 10];
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            lagrange_values(degree, bary, &mut vals);
            lagrange_gradients(degree, bary, &geom.grads, &mut grads);
            let mut g = vec![Mat3::zeros(); n];
            let mut u = vec![Vec3::zeros(); n];
            for a in 0..nloc {
                for c in 0..3 {
                    g[3 * a + c].set_row(c, &grads[a].transpose());
                    u[3 * a + c][c] = vals[a];
                }
            }
            let s = w * geom.volume;
            for i in 0..n {
                for j in i..n {
                    let v = s * form(&g[i], &g[j], &u[i], &u[j]);
                    local[i * n + j] += v;
                    if i != j {
                        local[j * n + i] += v;
                    }
                }
            }
        }
        k.add_block(&dofs, &dofs, &local);
    }
    k
}

fn scalar_form(space: &LagrangeSpace, form: impl Fn(f64, &Vec3, f64, &Vec3) -> f64) -> CsrMatrix {
    let mesh = space.mesh();
    let rule = default_tetrahedron();
    let degree = space.degree();
    let n = space.local_count();
    let mut k = pattern_from_cells(space.num_nodes(), (0..mesh.num_cells()).map(|c| space.cell_nodes(c).to_vec()));
    for cell in 0..mesh.num_cells() {
        let geom = CellGeometry::new(mesh, cell);
        let mut local = vec![0.0; n * n];
        let mut vals = [0.0; 10];
        let mut grads = [Vec3::zeros(); 10];
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            lagrange_values(degree, bary, &mut vals);
            lagrange_gradients(degree, bary, &geom.grads, &mut grads);
            let s = w * geom.volume;
            for i in 0..n {
                for j in 0..n {
                    local[i * n + j] += s * form(vals[i], &grads[i], vals[j], &grads[j]);
                }
            }
        }
        k.add_block(space.cell_nodes(cell), space.cell_nodes(cell), &local);
    }
    k
}

pub fn assemble_scalar_laplacian(space: &LagrangeSpace) -> CsrMatrix {
    scalar_form(space, |_, gi, _, gj| gi.dot(gj))
}

pub fn assemble_scalar_mass(space: &LagrangeSpace) -> CsrMatrix {
    scalar_form(space, |vi, _, vj, _| vi * vj)
}

/// `∫ φ_j dx` for each scalar basis function.
pub fn assemble_scalar_integrals(space: &LagrangeSpace) -> Vec<f64> {
    let mesh = space.mesh();
    let rule = default_tetrahedron();
    let mut out = vec![0.0; space.num_nodes()];
    let mut vals = [0.0; 10];
    for cell in 0..mesh.num_cells() {
        let geom = CellGeometry::new(mesh, cell);
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            lagrange_values(space.degree(), bary, &mut vals);
            for (k, &n) in space.cell_nodes(cell).iter().enumerate() {
                out[n] += w * geom.volume * vals[k];
            }
        }
    }
    out
}

fn nedelec_form(space: &HcurlSpace, form: impl Fn(&Vec3, &Vec3, &Vec3, &Vec3) -> f64) -> CsrMatrix {
    let mesh = space.mesh();
    let rule = default_tetrahedron();
    let mut k = pattern_from_cells(space.num_dofs(), (0..mesh.num_cells()).map(|c| space.cell_dofs(c).to_vec()));
    for cell in 0..mesh.num_cells() {
        let geom = CellGeometry::new(mesh, cell);
        let mut local = [0.0; 36];
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            let b = space.local_basis(cell, &geom, bary);
            let s = w * geom.volume;
            for i in 0..6 {
                for j in 0..6 {
                    local[6 * i + j] += s * form(&b.values[i], &b.curls[i], &b.values[j], &b.curls[j]);
                }
            }
        }
        k.add_block(space.cell_dofs(cell), space.cell_dofs(cell), &local);
    }
    k
}

/// L² Gram matrix of one Nédélec row.
pub fn assemble_nedelec_mass(space: &HcurlSpace) -> CsrMatrix {
    nedelec_form(space, |vi, _, vj, _| vi.dot(vj))
}

/// `∫ curl v · curl w` for one Nédélec row.
pub fn assemble_nedelec_curl_curl(space: &HcurlSpace) -> CsrMatrix {
    nedelec_form(space, |_, ci, _, cj| ci.dot(cj))
}

/// `∫ ⟨v, ∇q⟩` between a Nédélec row (rows of the result) and a scalar
/// Lagrange space (columns).
pub fn assemble_nedelec_gradient_coupling(hcurl: &HcurlSpace, scalar: &LagrangeSpace) -> CsrMatrix {
    let mesh = hcurl.mesh();
    let rule = default_tetrahedron();
    let mut pb = PatternBuilder::new(hcurl.num_dofs(), scalar.num_nodes());
    for c in 0..mesh.num_cells() {
        pb.add_block(hcurl.cell_dofs(c), scalar.cell_nodes(c));
    }
    let mut k = pb.build(false);
    let nloc = scalar.local_count();
    let mut grads = [Vec3::zeros(); 10];
    for cell in 0..mesh.num_cells() {
        let geom = CellGeometry::new(mesh, cell);
        let mut local = vec![0.0; 6 * nloc];
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            let b = hcurl.local_basis(cell, &geom, bary);
            lagrange_gradients(scalar.degree(), bary, &geom.grads, &mut grads);
            for i in 0..6 {
                for j in 0..nloc {
                    local[i * nloc + j] += w * geom.volume * b.values[i].dot(&grads[j]);
                }
            }
        }
        k.add_block(hcurl.cell_dofs(cell), scalar.cell_nodes(cell), &local);
    }
    k
}

/// `∫ div r q` between a vector Lagrange space (columns) and a scalar
/// Lagrange space (rows).
pub fn assemble_divergence_coupling(vector: &H1VectorSpace, scalar: &LagrangeSpace) -> CsrMatrix {
    let mesh = vector.mesh();
    let rule = default_tetrahedron();
    let mut pb = PatternBuilder::new(scalar.num_nodes(), vector.num_dofs());
    for c in 0..mesh.num_cells() {
        pb.add_block(scalar.cell_nodes(c), &vector.cell_dofs(c));
    }
    let mut k = pb.build(false);
    let nq = scalar.local_count();
    let nv = crate::spaces::local_node_count(vector.degree());
    let mut qv = [0.0; 10];
    let mut vg = [Vec3::zeros(); 10];
    for cell in 0..mesh.num_cells() {
        let geom = CellGeometry::new(mesh, cell);
        let mut local = vec![0.0; nq * 3 * nv];
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            lagrange_values(scalar.degree(), bary, &mut qv);
            lagrange_gradients(vector.degree(), bary, &geom.grads, &mut vg);
            for i in 0..nq {
                for a in 0..nv {
                    for c in 0..3 {
                        local[i * 3 * nv + 3 * a + c] += w * geom.volume * qv[i] * vg[a][c];
                    }
                }
            }
        }
        k.add_block(scalar.cell_nodes(cell), &vector.cell_dofs(cell), &local);
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_box_mesh, BoxSpec};
    use crate::sparse::dot;
    use approx::assert_relative_eq;

    fn unit_space(n: usize) -> MicromorphicSpace {
        let mesh = Arc::new(build_box_mesh(BoxSpec::unit_cube(n)).unwrap());
        MicromorphicSpace::new(mesh, 1).unwrap()
    }

    fn basic() -> MaterialParams {
        MaterialParams {
            mu_e: 1.0,
            lambda_e: 0.0,
            mu_c: 0.0,
            mu_micro: 1.0,
            lambda_micro: 0.0,
            mu_macro: 1.0,
            l_c: 1.0,
        }
    }

    #[test]
    fn parameter_gate_examples() {
        assert!(validate_params(&basic()).is_ok());
        let neg_mu = MaterialParams { mu_e: -1.0, ..basic() };
        assert!(neg_mu.violations().contains(&ParamViolation::MuE));
        let neg_lambda = MaterialParams { lambda_e: -1.0, ..basic() };
        assert_eq!(neg_lambda.violations(), vec![ParamViolation::BulkE]);
        let msg = alloc::format!("{}", validate_params(&neg_lambda).unwrap_err());
        assert!(msg.contains("2μ_e + 3λ_e > 0"));
        let nan = MaterialParams { mu_c: f64::NAN, ..basic() };
        assert_eq!(nan.violations(), vec![ParamViolation::MuC]);
    }

    #[test]
    fn refuses_invalid_params() {
        let space = unit_space(1);
        let bad = MaterialParams { mu_micro: 0.0, ..basic() };
        assert!(matches!(assemble_micromorphic(&bad, &space), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn stiffness_symmetric_and_translation_free() {
        let space = unit_space(2);
        let p = MaterialParams { mu_c: 0.7, lambda_e: 0.3, lambda_micro: 0.2, ..basic() };
        let k = assemble_micromorphic(&p, &space).unwrap();
        assert!(k.max_asymmetry() < 1e-12);
        let x = space.interpolate(|_| Vec3::new(1.0, -2.0, 0.5), |_| Mat3::zeros());
        assert!(k.quadratic_form(&x).abs() < 1e-12);
    }

    #[test]
    fn compatible_identity_state_energy() {
        // u = x, P = 1: all coupling terms vanish, leaving the micro terms.
        let space = unit_space(1);
        let p = MaterialParams { mu_micro: 1.3, lambda_micro: 0.4, ..basic() };
        let k = assemble_micromorphic(&p, &space).unwrap();
        let x = space.interpolate(|x| *x, |_| Mat3::identity());
        // oracle: 2μ_micro‖sym 1‖² + λ_micro (tr 1)² over unit volume
        let oracle = 2.0 * p.mu_micro * 3.0 + p.lambda_micro * 9.0;
        assert_relative_eq!(k.quadratic_form(&x), oracle, epsilon = 1e-12);
        let e = energy_terms(&p, &space, &x);
        assert!(e.sym_e.abs() < 1e-24 && e.skew_c.abs() < 1e-24 && e.trace_e.abs() < 1e-24);
        assert!(e.curl.abs() < 1e-22);
        assert_relative_eq!(e.total(), 3.0 * p.mu_micro + 4.5 * p.lambda_micro, epsilon = 1e-12);
    }

    #[test]
    fn constant_micro_distortion_has_no_curl_energy() {
        let space = unit_space(2);
        let only_curl = MaterialParams { mu_e: 1e-300, mu_micro: 1e-300, ..basic() };
        let p0 = Mat3::new(1.0, 2.0, 3.0, -1.0, 0.5, 0.2, 0.0, 4.0, -2.0);
        let x = space.interpolate(|_| Vec3::zeros(), |_| p0);
        let e = energy_terms(&only_curl, &space, &x);
        assert!(e.curl.abs() < 1e-12);
        let full = assemble_micromorphic(&basic(), &space).unwrap();
        let micro = assemble_micromorphic(&MaterialParams { mu_macro: 7.0, ..basic() }, &space).unwrap();
        // changing μ_macro changes nothing for constant P
        let (a, b) = (full.quadratic_form(&x), micro.quadratic_form(&x));
        assert!((a - b).abs() < 1e-12 * a, "{a} {b}");
    }

    #[test]
    fn quadratic_form_is_twice_energy() {
        let space = unit_space(2);
        let p = MaterialParams { mu_c: 0.5, lambda_e: 0.7, lambda_micro: -0.2, l_c: 0.3, ..basic() };
        let k = assemble_micromorphic(&p, &space).unwrap();
        let x = space.interpolate(
            |x| Vec3::new(x.y * x.z, x.x * x.x, x.y - x.z),
            |x| Mat3::new(x.x, x.y * x.z, 1.0, 0.0, x.z, x.x * x.y, -x.y, 2.0, x.x + x.z),
        );
        assert_relative_eq!(k.quadratic_form(&x), 2.0 * energy_terms(&p, &space, &x).total(), max_relative = 1e-12);
    }

    #[test]
    fn mass_examples() {
        let space = unit_space(1);
        let m = assemble_mass(&space);
        let u = space.interpolate(|_| Vec3::new(1.0, 0.0, 0.0), |_| Mat3::zeros());
        assert_relative_eq!(m.quadratic_form(&u), 1.0, epsilon = 1e-12);
        let p = space.interpolate(|_| Vec3::zeros(), |_| Mat3::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0));
        assert_relative_eq!(m.quadratic_form(&p), 1.0, epsilon = 1e-12);
        assert!(nalgebra::Cholesky::new(m.to_dense()).is_some());
        assert!(m.max_asymmetry() < 1e-14);
    }

    #[test]
    fn load_examples() {
        let space = unit_space(1);
        let zero = assemble_loads(&space, |_| Vec3::zeros(), |_| Mat3::zeros());
        assert!(zero.iter().all(|&v| v == 0.0));
        let b = assemble_loads(&space, |_| Vec3::new(1.0, 0.0, 0.0), |_| Mat3::zeros());
        let test = space.interpolate(|_| Vec3::new(1.0, 0.0, 0.0), |_| Mat3::zeros());
        assert_relative_eq!(dot(&b, &test), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn polynomial_load_against_one_basis_function() {
        // F = (x y, 0, 0) tested with the hat function of vertex (1,1,1):
        // oracle by an independent product Gauss rule on the cube, where the
        // hat is the piecewise-linear Kuhn interpolant min(x, y, z).
        let space = unit_space(1);
        let b = assemble_loads(&space, |x| Vec3::new(x.x * x.y, 0.0, 0.0), |_| Mat3::zeros());
        let node = space.mesh().vertices().iter().position(|v| *v == Vec3::new(1.0, 1.0, 1.0)).unwrap();
        let pts = [0.5 - 0.5 * (3.0f64 / 5.0).sqrt(), 0.5, 0.5 + 0.5 * (3.0f64 / 5.0).sqrt()];
        let wts = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
        // min(x,y,z) is only piecewise smooth; integrate exactly by symmetry
        // instead: ∫ x y min(x,y,z) over the cube split by orderings.
        let mut oracle = 0.0;
        let n = 64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for (a, wa) in pts.iter().zip(&wts) {
                        for (bq, wb) in pts.iter().zip(&wts) {
                            for (c, wc) in pts.iter().zip(&wts) {
                                let x = (i as f64 + a) / n as f64;
                                let y = (j as f64 + bq) / n as f64;
                                let z = (k as f64 + c) / n as f64;
                                oracle += wa * wb * wc * x * y * x.min(y).min(z);
                            }
                        }
                    }
                }
            }
        }
        oracle /= (n * n * n) as f64;
        assert!((b[3 * node] - oracle).abs() < 1e-6, "{} vs {}", b[3 * node], oracle);
    }

    #[test]
    fn modified_loads_reduce_to_plain_loads_without_lift() {
        let space = unit_space(1);
        let ops = SystemOperators::new(space.clone(), basic()).unwrap();
        let loads = assemble_loads(&space, |x| Vec3::new(x.x, 1.0, 0.0), |_| Mat3::identity());
        let zero = vec![0.0; space.num_dofs()];
        let out = assemble_modified_loads(&ops, &loads, &zero, Some(&zero)).unwrap();
        assert_eq!(out, loads);
        assert!(assemble_modified_loads(&ops, &loads, &[0.0; 2], None).is_err());
    }

    #[test]
    fn elastic_rigid_motions_have_no_energy() {
        let mesh = Arc::new(build_box_mesh(BoxSpec::unit_cube(2)).unwrap());
        let space = H1VectorSpace::new(mesh, 1).unwrap();
        let k = assemble_elastic(1.0, 2.0, &space);
        let rot = space.interpolate(|x| Vec3::new(-x.y, x.x, 0.3) );
        assert!(k.quadratic_form(&rot).abs() < 1e-12);
    }

    #[test]
    fn curl_div_form_on_linear_field() {
        let mesh = Arc::new(build_box_mesh(BoxSpec::unit_cube(1)).unwrap());
        let space = H1VectorSpace::new(mesh, 2).unwrap();
        let a = assemble_curl_div(&space);
        // r = (-y, x, z): curl = (0,0,2), div = 1 → ‖curl‖² + ‖div‖² = 5
        let r = space.interpolate(|x| Vec3::new(-x.y, x.x, x.z));
        assert_relative_eq!(a.quadratic_form(&r), 5.0, epsilon = 1e-12);
    }
}
