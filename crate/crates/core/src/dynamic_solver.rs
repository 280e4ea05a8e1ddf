//! Implicit time integration of `M ẍ + K x = ℓ(t)` with lifted boundary
//! data and energy bookkeeping.
//!
//! With `x = L(t) + y` and `y` vanishing on constrained dofs, the free part
//! satisfies `M_ff ÿ + K_ff y = r(t)`, `r = (ℓ − K L − M L_tt)_f`. The lift
//! of `∂ₜ² (g, G)` is the lift of the analytic second derivative of the data.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::assembly::{energy_terms, EnergyTerms, MicromorphicSpace};
use crate::boundary::{sample_dirichlet, BoundaryData, Homogeneous};
use crate::linalg::SpdSolver;
use crate::static_solver::{Loads, StaticSolver};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    #[default]
    ImplicitMidpoint,
    /// Average-acceleration Newmark, `β = 1/4`, `γ = 1/2`.
    Newmark,
}

impl Integrator {
    pub fn name(&self) -> &'static str {
        match self {
            Integrator::ImplicitMidpoint => "implicit-midpoint",
            Integrator::Newmark => "newmark",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "implicit-midpoint" | "midpoint" => Some(Integrator::ImplicitMidpoint),
            "newmark" => Some(Integrator::Newmark),
            _ => None,
        }
    }
}

/// Positions and velocities of `(u, P)` at `t = 0` as full coefficient
/// vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
}

impl InitialData {
    pub fn zeros(space: &MicromorphicSpace) -> Self {
        InitialData {
            position: vec![0.0; space.num_dofs()],
            velocity: vec![0.0; space.num_dofs()],
        }
    }

    /// `(u⁰, P⁰) = (g̃, G̃)(0)` and `(u¹, P¹) = ∂ₜ(g̃, G̃)(0)`.
    pub fn from_boundary(solver: &StaticSolver, data: &dyn BoundaryData) -> Result<Self> {
        Ok(InitialData {
            position: solver.lift(data, 0.0, 0)?,
            velocity: solver.lift(data, 0.0, 1)?,
        })
    }

    /// From separate `u` and `P`-row coefficients.
    pub fn from_parts(
        space: &MicromorphicSpace,
        u0: &[f64],
        u1: &[f64],
        p0: [&[f64]; 3],
        p1: [&[f64]; 3],
    ) -> Result<Self> {
        Ok(InitialData {
            position: space.join(u0, p0)?,
            velocity: space.join(u1, p1)?,
        })
    }

    fn check(&self, space: &MicromorphicSpace) -> Result<()> {
        for (what, v) in [("initial position", &self.position), ("initial velocity", &self.velocity)] {
            if v.len() != space.num_dofs() {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: space.num_dofs(),
                    found: v.len(),
                });
            }
        }
        Ok(())
    }
}

/// Largest boundary mismatches of initial data against `(g, g_t, G, G_t)`
/// at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompatibilityReport {
    pub displacement: f64,
    pub velocity: f64,
    pub micro: f64,
    pub micro_rate: f64,
    pub tolerance: f64,
}

impl CompatibilityReport {
    pub fn max_mismatch(&self) -> f64 {
        self.displacement.max(self.velocity).max(self.micro).max(self.micro_rate)
    }

    pub fn passes(&self) -> bool {
        self.max_mismatch() < self.tolerance
    }
}

pub const COMPATIBILITY_TOL: f64 = 1e-10;

pub fn check_compatibility(space: &MicromorphicSpace, init: &InitialData, data: &dyn BoundaryData) -> Result<CompatibilityReport> {
    init.check(space)?;
    let dirichlet = |x: &[f64], order: usize| {
        let g = sample_dirichlet(&space.u, data, 0.0, order);
        space.u.boundary_dofs().iter().map(|&d| (x[d] - g[d]).abs()).fold(0.0, f64::max)
    };
    let tangential = |x: &[f64], order: usize| {
        let traces = data.tangential(space.mesh(), 0.0, order);
        let mut worst: f64 = 0.0;
        for (row, tr) in traces.iter().enumerate() {
            let off = space.p_offset(row);
            for (&e, &v) in space.p.boundary_dofs().iter().zip(tr.values()) {
                worst = worst.max((x[off + e] - v).abs());
            }
        }
        worst
    };
    Ok(CompatibilityReport {
        displacement: dirichlet(&init.position, 0),
        velocity: dirichlet(&init.velocity, 1),
        micro: tangential(&init.position, 0),
        micro_rate: tangential(&init.velocity, 1),
        tolerance: COMPATIBILITY_TOL,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicRun {
    pub dt: f64,
    pub steps: usize,
    pub integrator: Integrator,
    /// Energy records and snapshots every this many steps (and at the end).
    pub output_every: usize,
}

impl DynamicRun {
    pub fn horizon(&self) -> f64 {
        self.dt * self.steps as f64
    }

    fn check(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) || self.steps == 0 || self.output_every == 0 {
            return Err(Error::Domain(format!(
                "dynamic run needs dt > 0, steps > 0 and output_every > 0 (got dt = {}, steps = {}, output_every = {})",
                self.dt, self.steps, self.output_every
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRecord {
    pub time: f64,
    /// `½ (‖u_t‖² + ‖P_t‖²)`
    pub kinetic: f64,
    pub potential: EnergyTerms,
}

impl EnergyRecord {
    pub fn of(solver: &StaticSolver, time: f64, x: &[f64], v: &[f64]) -> Self {
        EnergyRecord {
            time,
            kinetic: 0.5 * solver.operators().mass.quadratic_form(v),
            potential: energy_terms(solver.params(), solver.space(), x),
        }
    }

    pub fn total(&self) -> f64 {
        self.kinetic + self.potential.total()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub energies: Vec<EnergyRecord>,
    pub snapshots: Vec<Snapshot>,
    /// State at the final time.
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    /// Largest boundary mismatch over all output times.
    pub boundary_mismatch: f64,
}

impl Trajectory {
    /// `|E(T) − E(0)| / E(0)`.
    pub fn relative_energy_drift(&self) -> f64 {
        let e0 = self.energies.first().map_or(0.0, EnergyRecord::total);
        let e1 = self.energies.last().map_or(0.0, EnergyRecord::total);
        if e0 == 0.0 {
            (e1 - e0).abs()
        } else {
            ((e1 - e0) / e0).abs()
        }
    }

    /// Final state with the velocity reversed, for integrating backwards.
    pub fn reversed(&self) -> InitialData {
        InitialData {
            position: self.position.clone(),
            velocity: self.velocity.iter().map(|v| -v).collect(),
        }
    }
}

/// Time-dependent right-hand side on the free dofs, with the lift.
struct Forcing<'a> {
    solver: &'a StaticSolver,
    loads: &'a dyn Loads,
    data: &'a dyn BoundaryData,
    free: &'a [usize],
}

impl Forcing<'_> {
    fn restrict(&self, v: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&d| v[d]).collect()
    }

    fn lift(&self, t: f64, order: usize) -> Result<Vec<f64>> {
        self.solver.lift(self.data, t, order)
    }

    fn rhs(&self, t: f64) -> Result<Vec<f64>> {
        let mut b = self.solver.load_vector(self.loads, t);
        if !self.data.is_homogeneous() {
            let ops = self.solver.operators();
            let kl = ops.stiffness.mul_vec(&self.lift(t, 0)?);
            let ml = ops.mass.mul_vec(&self.lift(t, 2)?);
            for i in 0..b.len() {
                b[i] -= kl[i] + ml[i];
            }
        }
        Ok(self.restrict(&b))
    }

    fn full(&self, y: &[f64], t: f64, order: usize) -> Result<Vec<f64>> {
        let mut x = self.lift(t, order)?;
        for (k, &d) in self.free.iter().enumerate() {
            x[d] += y[k];
        }
        Ok(x)
    }
}

/// Integrates from `init`; `data = None` means homogeneous boundary
/// conditions. Refuses initial data failing the compatibility check.
pub fn run_dynamic(
    solver: &StaticSolver,
    loads: &dyn Loads,
    data: Option<&dyn BoundaryData>,
    init: &InitialData,
    run: &DynamicRun,
) -> Result<Trajectory> {
    run.check()?;
    let data: &dyn BoundaryData = data.unwrap_or(&Homogeneous);
    let space = solver.space();
    let report = check_compatibility(space, init, data)?;
    if !report.passes() {
        return Err(Error::Incompatible(format!(
            "initial data differs from the boundary data at t = 0 by {:e} (tolerance {:e})",
            report.max_mismatch(),
            report.tolerance
        )));
    }
    let free = solver.free_dofs();
    let ops = solver.operators();
    let k_ff = solver.reduced().matrix();
    let m_ff = ops.mass.submatrix(free, free);
    let dt = run.dt;
    let system = SpdSolver::new(m_ff.linear_combination(1.0, k_ff, 0.25 * dt * dt), solver.options())?;
    let forcing = Forcing {
        solver,
        loads,
        data,
        free,
    };
    let step_err = |step: usize| move |e: Error| Error::Step {
        step,
        source: Box::new(e),
    };

    let lift0 = forcing.lift(0.0, 0)?;
    let lift_t0 = forcing.lift(0.0, 1)?;
    let mut y: Vec<f64> = free.iter().map(|&d| init.position[d] - lift0[d]).collect();
    let mut v: Vec<f64> = free.iter().map(|&d| init.velocity[d] - lift_t0[d]).collect();
    let mut a = match run.integrator {
        Integrator::Newmark => {
            let mut r = forcing.rhs(0.0)?;
            let ky = k_ff.mul_vec(&y);
            for i in 0..r.len() {
                r[i] -= ky[i];
            }
            SpdSolver::new(m_ff.clone(), solver.options())?.solve(&r)?.x
        }
        Integrator::ImplicitMidpoint => Vec::new(),
    };

    let mut out = Trajectory {
        energies: Vec::new(),
        snapshots: Vec::new(),
        position: init.position.clone(),
        velocity: init.velocity.clone(),
        boundary_mismatch: 0.0,
    };
    record(solver, data, &mut out, 0, 0.0, init.position.clone(), init.velocity.clone());

    for step in 1..=run.steps {
        let t_prev = (step - 1) as f64 * dt;
        let t = step as f64 * dt;
        match run.integrator {
            Integrator::ImplicitMidpoint => {
                let r = forcing.rhs(t_prev + 0.5 * dt).map_err(step_err(step))?;
                let mv = m_ff.mul_vec(&v);
                let ky = k_ff.mul_vec(&y);
                let kv = k_ff.mul_vec(&v);
                let b: Vec<f64> = (0..y.len())
                    .map(|i| mv[i] - dt * ky[i] - 0.25 * dt * dt * kv[i] + dt * r[i])
                    .collect();
                let v_new = system.solve_from(&b, v.clone()).map_err(step_err(step))?.x;
                for i in 0..y.len() {
                    y[i] += 0.5 * dt * (v[i] + v_new[i]);
                }
                v = v_new;
            }
            Integrator::Newmark => {
                let r = forcing.rhs(t).map_err(step_err(step))?;
                let pred: Vec<f64> = (0..y.len()).map(|i| y[i] + dt * v[i] + 0.25 * dt * dt * a[i]).collect();
                let kp = k_ff.mul_vec(&pred);
                let b: Vec<f64> = (0..y.len()).map(|i| r[i] - kp[i]).collect();
                let a_new = system.solve_from(&b, a.clone()).map_err(step_err(step))?.x;
                for i in 0..y.len() {
                    y[i] = pred[i] + 0.25 * dt * dt * a_new[i];
                    v[i] += 0.5 * dt * (a[i] + a_new[i]);
                }
                a = a_new;
            }
        }
        if step % run.output_every == 0 || step == run.steps {
            let x = forcing.full(&y, t, 0).map_err(step_err(step))?;
            let xv = forcing.full(&v, t, 1).map_err(step_err(step))?;
            record(solver, data, &mut out, step, t, x, xv);
        }
    }
    Ok(out)
}

fn record(solver: &StaticSolver, data: &dyn BoundaryData, out: &mut Trajectory, step: usize, t: f64, x: Vec<f64>, v: Vec<f64>) {
    let (du, dp) = solver.boundary_mismatch(&x, data, t);
    out.boundary_mismatch = out.boundary_mismatch.max(du).max(dp);
    out.energies.push(EnergyRecord::of(solver, t, &x, &v));
    out.snapshots.push(Snapshot { step, time: t, x: x.clone() });
    out.position = x;
    out.velocity = v;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::MaterialParams;
    use crate::cases::{CaseKind, ManufacturedCase};
    use crate::linalg::SolverOptions;
    use crate::mesh::{build_box_mesh, BoxSpec};
    use crate::sparse::norm;
    use crate::static_solver::{LiftingPath, ZeroLoads};
    use alloc::sync::Arc;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> MaterialParams {
        MaterialParams {
            mu_c: 0.3,
            lambda_e: 0.5,
            ..MaterialParams::default()
        }
    }

    fn solver(n: usize) -> StaticSolver {
        let mesh = Arc::new(build_box_mesh(BoxSpec::unit_cube(n)).unwrap());
        StaticSolver::new(mesh, params(), LiftingPath::Direct, SolverOptions::default()).unwrap()
    }

    fn random_interior_state(s: &StaticSolver, seed: u64) -> InitialData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = InitialData::zeros(s.space());
        for &d in s.free_dofs() {
            init.position[d] = rng.random_range(-1.0..1.0);
            init.velocity[d] = rng.random_range(-1.0..1.0);
        }
        init
    }

    fn run(integrator: Integrator, dt: f64, steps: usize) -> DynamicRun {
        DynamicRun {
            dt,
            steps,
            integrator,
            output_every: 1,
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let s = solver(1);
        let traj = run_dynamic(&s, &ZeroLoads, None, &InitialData::zeros(s.space()), &run(Integrator::ImplicitMidpoint, 0.1, 10)).unwrap();
        assert!(traj.position.iter().all(|&v| v == 0.0));
        assert!(traj.energies.iter().all(|e| e.total() == 0.0));
    }

    #[test]
    fn midpoint_conserves_energy() {
        let s = solver(2);
        let init = random_interior_state(&s, 3);
        let traj = run_dynamic(&s, &ZeroLoads, None, &init, &run(Integrator::ImplicitMidpoint, 0.05, 200)).unwrap();
        assert!(traj.relative_energy_drift() < 1e-8, "{}", traj.relative_energy_drift());
        assert_eq!(traj.energies.len(), 201);
    }

    #[test]
    fn midpoint_is_time_reversible() {
        let s = solver(2);
        let init = random_interior_state(&s, 5);
        let cfg = run(Integrator::ImplicitMidpoint, 0.05, 50);
        let fwd = run_dynamic(&s, &ZeroLoads, None, &init, &cfg).unwrap();
        let back = run_dynamic(&s, &ZeroLoads, None, &fwd.reversed(), &cfg).unwrap();
        let d: Vec<f64> = back.position.iter().zip(&init.position).map(|(a, b)| a - b).collect();
        assert!(norm(&d) < 1e-8 * norm(&init.position));
    }

    #[test]
    fn compatibility_gate() {
        let s = solver(2);
        let case = ManufacturedCase::new(CaseKind::HarmonicBc, &params());
        let init = InitialData::from_boundary(&s, &case).unwrap();
        let rep = check_compatibility(s.space(), &init, &case).unwrap();
        assert_eq!(rep.max_mismatch(), 0.0);
        let mut bad = init.clone();
        let d = s.space().u.boundary_dofs()[4];
        bad.position[d] += 1e-3;
        let rep = check_compatibility(s.space(), &bad, &case).unwrap();
        assert!(!rep.passes());
        assert!((rep.displacement - 1e-3).abs() < 1e-4);
        assert!(matches!(
            run_dynamic(&s, &ZeroLoads, Some(&case), &bad, &run(Integrator::Newmark, 0.1, 2)),
            Err(Error::Incompatible(_))
        ));
        let zero = InitialData::zeros(s.space());
        assert!(check_compatibility(s.space(), &zero, &Homogeneous).unwrap().passes());
    }

    #[test]
    fn boundary_data_holds_at_every_output() {
        let s = solver(2);
        let case = ManufacturedCase::new(CaseKind::HarmonicBc, &params());
        let init = InitialData::from_boundary(&s, &case).unwrap();
        let traj = run_dynamic(&s, &case, Some(&case), &init, &run(Integrator::ImplicitMidpoint, 0.05, 20)).unwrap();
        assert_eq!(traj.boundary_mismatch, 0.0);
        assert!(traj.energies.last().unwrap().total() > 0.0);
    }

    #[test]
    fn trajectories_are_linear_in_the_data() {
        let s = solver(1);
        let case = ManufacturedCase::new(CaseKind::HarmonicBc, &params());
        let doubled = ManufacturedCase::with_affine(
            CaseKind::HarmonicBc,
            &params(),
            crate::cases::AffineField {
                a: crate::cases::AffineField::default().a * 2.0,
                b: crate::cases::AffineField::default().b * 2.0,
            },
            crate::cases::DEFAULT_OMEGA,
        );
        let cfg = run(Integrator::Newmark, 0.1, 10);
        let one = run_dynamic(&s, &case, Some(&case), &InitialData::from_boundary(&s, &case).unwrap(), &cfg).unwrap();
        let two = run_dynamic(&s, &doubled, Some(&doubled), &InitialData::from_boundary(&s, &doubled).unwrap(), &cfg).unwrap();
        for (a, b) in one.position.iter().zip(&two.position) {
            assert!((2.0 * a - b).abs() < 1e-10 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn newmark_and_midpoint_differ_at_second_order() {
        let s = solver(1);
        let case = ManufacturedCase::new(CaseKind::HarmonicBc, &params());
        let init = InitialData::from_boundary(&s, &case).unwrap();
        let gap = |dt: f64, steps: usize| {
            let a = run_dynamic(&s, &case, Some(&case), &init, &run(Integrator::ImplicitMidpoint, dt, steps)).unwrap();
            let b = run_dynamic(&s, &case, Some(&case), &init, &run(Integrator::Newmark, dt, steps)).unwrap();
            let d: Vec<f64> = a.position.iter().zip(&b.position).map(|(p, q)| p - q).collect();
            norm(&d)
        };
        let ratio = gap(0.02, 25) / gap(0.01, 50);
        assert!((3.0..=5.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn bad_run_settings_are_refused() {
        let s = solver(1);
        let init = InitialData::zeros(s.space());
        assert!(run_dynamic(&s, &ZeroLoads, None, &init, &run(Integrator::Newmark, 0.0, 3)).is_err());
        assert!(run_dynamic(&s, &ZeroLoads, None, &init, &run(Integrator::Newmark, 0.1, 0)).is_err());
    }
}
