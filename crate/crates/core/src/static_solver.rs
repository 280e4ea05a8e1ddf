//! Static equilibrium with homogeneous or lifted boundary data, and the
//! linear-elasticity baseline.
//!
//! Boundary conditions are imposed by eliminating the constrained dofs.
//! For non-homogeneous data the unknown is split as `x = L + y`, where `L`
//! carries the boundary values (a discrete-harmonic `g̃` and a tangential
//! lift `G̃`) and `y` vanishes on every constrained dof.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::assembly::{
    assemble_elastic, assemble_loads, assemble_modified_loads, assemble_vector_load, energy_terms, validate_params,
    EnergyTerms, MaterialParams, MicromorphicSpace, ParamViolation, SystemOperators,
};
use crate::boundary::{sample_dirichlet, BoundaryData};
use crate::extension::{ConstrainedSolver, DirichletLifter, ExtensionContext, TangentialLifter};
use crate::linalg::SolverOptions;
use crate::mesh::Mesh;
use crate::sparse::{dot, norm};
use crate::spaces::{H1VectorSpace, TangentialTraceData};
use crate::{Error, Mat3, Result, Vec3};

/// Body force `F` and micro-moment `M`.
pub trait Loads {
    fn body_force(&self, x: &Vec3, t: f64) -> Vec3;
    fn micro_moment(&self, x: &Vec3, t: f64) -> Mat3;

    fn is_zero(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroLoads;

impl Loads for ZeroLoads {
    fn body_force(&self, _x: &Vec3, _t: f64) -> Vec3 {
        Vec3::zeros()
    }

    fn micro_moment(&self, _x: &Vec3, _t: f64) -> Mat3 {
        Mat3::zeros()
    }

    fn is_zero(&self) -> bool {
        true
    }
}

/// How the tangential data `G` is extended into the interior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LiftingPath {
    /// Boundary dofs set to `G`, interior minimising `‖curl‖² + ‖·‖²`.
    #[default]
    Direct,
    /// `R = curl r` from the constructive extension, boundary dofs set to `G`.
    Constructive,
}

impl LiftingPath {
    pub fn name(&self) -> &'static str {
        match self {
            LiftingPath::Direct => "direct",
            LiftingPath::Constructive => "constructive",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "direct" => Some(LiftingPath::Direct),
            "constructive" => Some(LiftingPath::Constructive),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StaticSolution {
    /// Full coefficient vector `(u, P_1, P_2, P_3)`.
    pub x: Vec<f64>,
    /// The boundary lift `L` (zero for homogeneous data).
    pub lift: Vec<f64>,
    pub energy: EnergyTerms,
    /// `‖K_ff y − b̃_f‖ / ‖b̃_f‖` on the free dofs.
    pub relative_residual: f64,
    pub iterations: usize,
    /// Largest `|u − g|` over boundary nodes.
    pub dirichlet_mismatch: f64,
    /// Largest `|P_i − G_i|` over boundary edge moments.
    pub tangential_mismatch: f64,
}

/// Assembled operators, lifters and the reduced factorisation for one mesh
/// and parameter set; reusable across loads, data and time samples.
#[derive(Debug, Clone)]
pub struct StaticSolver {
    ops: SystemOperators,
    constrained: ConstrainedSolver,
    dirichlet: DirichletLifter,
    tangential: TangentialLifter,
    extension: Option<ExtensionContext>,
    lifting: LiftingPath,
    opts: SolverOptions,
}

impl StaticSolver {
    pub fn new(mesh: Arc<Mesh>, params: MaterialParams, lifting: LiftingPath, opts: SolverOptions) -> Result<Self> {
        validate_params(&params)?;
        let space = MicromorphicSpace::new(mesh.clone(), 1)?;
        let ops = SystemOperators::new(space, params)?;
        let constrained = ConstrainedSolver::new(&ops.stiffness, &ops.space.constrained_dofs(), opts)?;
        let dirichlet = DirichletLifter::new(&ops.space.u, opts)?;
        let tangential = TangentialLifter::new(&ops.space.p, opts)?;
        let extension = match lifting {
            LiftingPath::Direct => None,
            LiftingPath::Constructive => Some(ExtensionContext::with_options(mesh, opts)?),
        };
        Ok(StaticSolver {
            ops,
            constrained,
            dirichlet,
            tangential,
            extension,
            lifting,
            opts,
        })
    }

    pub fn operators(&self) -> &SystemOperators {
        &self.ops
    }

    pub fn space(&self) -> &MicromorphicSpace {
        &self.ops.space
    }

    pub fn params(&self) -> &MaterialParams {
        &self.ops.params
    }

    pub fn lifting(&self) -> LiftingPath {
        self.lifting
    }

    pub fn options(&self) -> SolverOptions {
        self.opts
    }

    pub fn free_dofs(&self) -> &[usize] {
        self.constrained.free()
    }

    pub fn constrained_dofs(&self) -> &[usize] {
        self.constrained.fixed()
    }

    pub fn reduced(&self) -> &crate::linalg::SpdSolver {
        self.constrained.reduced()
    }

    /// Load functional `ℓ(F, M)` at time `t`.
    pub fn load_vector(&self, loads: &dyn Loads, t: f64) -> Vec<f64> {
        if loads.is_zero() {
            return vec![0.0; self.space().num_dofs()];
        }
        assemble_loads(self.space(), |x| loads.body_force(x, t), |x| loads.micro_moment(x, t))
    }

    /// Lift of `∂ₜ^order (g, G)` at time `t`.
    pub fn lift(&self, data: &dyn BoundaryData, t: f64, order: usize) -> Result<Vec<f64>> {
        let space = self.space();
        if data.is_homogeneous() {
            return Ok(vec![0.0; space.num_dofs()]);
        }
        let g = self.dirichlet.lift(&sample_dirichlet(&space.u, data, t, order))?;
        let traces = data.tangential(space.mesh(), t, order);
        let mut rows = Vec::with_capacity(3);
        for tr in &traces {
            rows.push(self.lift_tangential(tr)?);
        }
        space.join(&g, [&rows[0], &rows[1], &rows[2]])
    }

    fn lift_tangential(&self, g: &TangentialTraceData) -> Result<Vec<f64>> {
        match &self.extension {
            None => self.tangential.lift(g),
            Some(ctx) => ctx.constructive_lift(g),
        }
    }

    pub fn solve_homogeneous(&self, loads: &dyn Loads) -> Result<StaticSolution> {
        self.solve_from(loads, None, 0.0, None)
    }

    pub fn solve(&self, loads: &dyn Loads, data: &dyn BoundaryData) -> Result<StaticSolution> {
        self.solve_from(loads, Some(data), 0.0, None)
    }

    /// Full solve at time `t`. `guess` is a full-length starting vector for
    /// the iterative path; only its free entries are used.
    pub fn solve_from(
        &self,
        loads: &dyn Loads,
        data: Option<&dyn BoundaryData>,
        t: f64,
        guess: Option<&[f64]>,
    ) -> Result<StaticSolution> {
        let n = self.space().num_dofs();
        let lift = match data {
            Some(d) => self.lift(d, t, 0)?,
            None => vec![0.0; n],
        };
        let b = assemble_modified_loads(&self.ops, &self.load_vector(loads, t), &lift, None)?;
        let free = self.constrained.free();
        let bf: Vec<f64> = free.iter().map(|&d| b[d]).collect();
        let x0 = match guess {
            Some(g) => {
                if g.len() != n {
                    return Err(Error::DimensionMismatch {
                        what: "initial guess",
                        expected: n,
                        found: g.len(),
                    });
                }
                free.iter().map(|&d| g[d]).collect()
            }
            None => vec![0.0; free.len()],
        };
        let rep = self.constrained.reduced().solve_from(&bf, x0)?;
        let mut x = lift.clone();
        for (k, &d) in free.iter().enumerate() {
            x[d] += rep.x[k];
        }
        let (dirichlet_mismatch, tangential_mismatch) = match data {
            Some(d) => self.boundary_mismatch(&x, d, t),
            None => self.boundary_mismatch(&x, &crate::boundary::Homogeneous, t),
        };
        Ok(StaticSolution {
            energy: energy_terms(&self.ops.params, self.space(), &x),
            x,
            lift,
            relative_residual: rep.relative_residual,
            iterations: rep.iterations,
            dirichlet_mismatch,
            tangential_mismatch,
        })
    }

    /// Largest deviation of `x` from the boundary data on constrained dofs.
    pub fn boundary_mismatch(&self, x: &[f64], data: &dyn BoundaryData, t: f64) -> (f64, f64) {
        let space = self.space();
        let g = sample_dirichlet(&space.u, data, t, 0);
        let u_err = space.u.boundary_dofs().iter().map(|&d| (x[d] - g[d]).abs()).fold(0.0, f64::max);
        let traces = data.tangential(space.mesh(), t, 0);
        let mut p_err: f64 = 0.0;
        for (row, tr) in traces.iter().enumerate() {
            let off = space.p_offset(row);
            for (&e, &v) in space.p.boundary_dofs().iter().zip(tr.values()) {
                p_err = p_err.max((x[off + e] - v).abs());
            }
        }
        (u_err, p_err)
    }

    /// `½ xᵀ K x − bᵀ x`, the discrete total potential.
    pub fn total_potential(&self, x: &[f64], b: &[f64]) -> f64 {
        0.5 * self.ops.stiffness.quadratic_form(x) - dot(b, x)
    }
}

#[derive(Debug, Clone)]
pub struct ElasticSolution {
    pub u: Vec<f64>,
    pub relative_residual: f64,
    pub iterations: usize,
    pub dirichlet_mismatch: f64,
}

/// Linear elasticity `−Div(2μ sym ∇u + λ tr(∇u) 1) = F`, `u = g` on the
/// boundary, with the Dirichlet-lifting reduction to homogeneous data.
pub fn solve_elastic_static(
    mesh: Arc<Mesh>,
    mu: f64,
    lambda: f64,
    f: impl Fn(&Vec3) -> Vec3,
    g: impl Fn(&Vec3) -> Vec3,
    opts: SolverOptions,
) -> Result<ElasticSolution> {
    let mut bad = Vec::new();
    if !(mu > 0.0) {
        bad.push(ParamViolation::MuE);
    }
    if !(2.0 * mu + 3.0 * lambda > 0.0) {
        bad.push(ParamViolation::BulkE);
    }
    if !bad.is_empty() {
        return Err(Error::InvalidParams(bad));
    }
    let space = H1VectorSpace::new(mesh, 1)?;
    let k = assemble_elastic(mu, lambda, &space);
    let scalar = space.scalar();
    let mut samples = vec![0.0; space.num_dofs()];
    for node in scalar.boundary_nodes() {
        let v = g(&scalar.nodes()[node]);
        for c in 0..3 {
            samples[H1VectorSpace::dof(node, c)] = v[c];
        }
    }
    let lift = DirichletLifter::new(&space, opts)?.lift(&samples)?;
    let load = assemble_vector_load(&space, f);
    let kl = k.mul_vec(&lift);
    let b: Vec<f64> = load.iter().zip(&kl).map(|(p, q)| p - q).collect();
    let solver = ConstrainedSolver::new(&k, &space.boundary_dofs(), opts)?;
    let bf: Vec<f64> = solver.free().iter().map(|&d| b[d]).collect();
    let rep = solver.reduced().solve(&bf)?;
    let mut u = lift;
    for (k, &d) in solver.free().iter().enumerate() {
        u[d] += rep.x[k];
    }
    let dirichlet_mismatch = space
        .boundary_dofs()
        .iter()
        .map(|&d| (u[d] - samples[d]).abs())
        .fold(0.0, f64::max);
    Ok(ElasticSolution {
        u,
        relative_residual: rep.relative_residual,
        iterations: rep.iterations,
        dirichlet_mismatch,
    })
}

/// `‖a − b‖ / max(‖b‖, 1)`.
pub fn relative_difference(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(p, q)| p - q).collect();
    norm(&d) / norm(b).max(1.0)
}
