//! Command execution and artifact emission.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use micromorph_core::boundary::BoundaryData;
use micromorph_core::cases::{CaseKind, ManufacturedCase};
use micromorph_core::dynamic_solver::{check_compatibility, run_dynamic, DynamicRun, InitialData};
use micromorph_core::mesh::{build_box_mesh, Mesh};
use micromorph_core::static_solver::{Loads, StaticSolver, ZeroLoads};
use micromorph_core::verification::{
    coercivity_study, default_trace_ensemble, extension_property_suite, korn_study, l2_errors, manufactured_convergence,
    unconstrained_skew_quotient,
};

use crate::config::{Command, InitialKind, RunConfig};
use crate::report::{energy_csv, Csv, Report};
use crate::vtk::{mesh_vtk, solution_vtk};

/// Files written by one command, in creation order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Artifacts {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
}

impl Artifacts {
    fn write(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(path);
        Ok(())
    }

    pub fn path(&self, name: &str) -> Option<&Path> {
        self.files.iter().map(PathBuf::as_path).find(|p| p.file_name().is_some_and(|f| f == name))
    }
}

struct Session<'a> {
    config: &'a RunConfig,
    command: Command,
    out: Artifacts,
}

/// Runs the configured command, writing into `config.output.dir`.
pub fn run(config: &RunConfig) -> Result<Artifacts> {
    let command = config.command.context("no command given")?;
    let dir = config.output.dir.clone();
    fs::create_dir_all(&dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    let mut cx = Session {
        config,
        command,
        out: Artifacts {
            dir,
            files: Vec::new(),
        },
    };
    match command {
        Command::Mesh => mesh(&mut cx),
        Command::SolveStatic => solve_static(&mut cx),
        Command::SolveDynamic => solve_dynamic(&mut cx),
        Command::VerifyExtension => verify_extension(&mut cx),
        Command::Korn => korn(&mut cx),
        Command::Convergence => convergence(&mut cx),
    }
    .with_context(|| format!("{command} failed"))?;
    Ok(cx.out)
}

fn build_mesh(config: &RunConfig) -> Result<Arc<Mesh>> {
    Ok(Arc::new(build_box_mesh(config.mesh).context("building box mesh")?))
}

fn case(config: &RunConfig, kind: CaseKind) -> ManufacturedCase {
    ManufacturedCase::with_affine(kind, &config.material, config.affine, config.omega)
}

fn report(cx: &Session) -> Report {
    let mut r = Report::new(cx.command.name());
    let c = cx.config;
    r.put_list("mesh.lengths", c.mesh.lengths).put_list("mesh.subdivisions", c.mesh.subdivisions);
    r
}

fn mesh(cx: &mut Session) -> Result<()> {
    let mesh = build_mesh(cx.config)?;
    let mut r = report(cx);
    r.put("vertices", mesh.num_vertices())
        .put("cells", mesh.num_cells())
        .put("edges", mesh.num_edges())
        .put("faces", mesh.faces().len())
        .put("boundary_faces", mesh.boundary_faces().len())
        .put("boundary_edges", mesh.boundary_edges().len())
        .put("boundary_vertices", mesh.boundary_vertices().len())
        .put("h", mesh.spec().h())
        .put("volume", mesh.spec().volume())
        .put("first_betti_number", mesh.first_betti_number());
    if cx.config.output.vtk {
        cx.out.write("mesh.vtk", &mesh_vtk(&mesh, "micromorph mesh"))?;
    }
    cx.out.write("mesh.txt", &r.render())
}

/// Loads and boundary data of the configured cases. `zero` maps to no
/// loads and homogeneous data respectively.
struct Problem {
    loads: Option<ManufacturedCase>,
    data: Option<ManufacturedCase>,
}

impl Problem {
    fn new(config: &RunConfig) -> Self {
        let pick = |k: CaseKind| (k != CaseKind::Zero).then(|| case(config, k));
        Problem {
            loads: pick(config.loads),
            data: pick(config.boundary),
        }
    }

    fn loads(&self) -> &dyn Loads {
        match &self.loads {
            Some(c) => c,
            None => &ZeroLoads,
        }
    }

    fn data(&self) -> Option<&dyn BoundaryData> {
        self.data.as_ref().map(|c| c as &dyn BoundaryData)
    }
}

fn static_solver(config: &RunConfig) -> Result<StaticSolver> {
    let mesh = build_mesh(config)?;
    StaticSolver::new(mesh, config.material, config.lifting, config.solver).context("assembling the coupled system")
}

fn solve_static(cx: &mut Session) -> Result<()> {
    let config = cx.config;
    let solver = static_solver(config)?;
    let problem = Problem::new(config);
    let sol = solver.solve_from(problem.loads(), problem.data(), 0.0, None).context("static solve")?;
    let space = solver.space();
    let mut r = report(cx);
    r.put("case.boundary", config.boundary.name())
        .put("case.loads", config.loads.name())
        .put("case.lifting", config.lifting.name())
        .put("dofs", space.num_dofs())
        .put("free_dofs", solver.free_dofs().len())
        .put("iterations", sol.iterations)
        .put("relative_residual", sol.relative_residual)
        .put("dirichlet_mismatch", sol.dirichlet_mismatch)
        .put("tangential_mismatch", sol.tangential_mismatch);
    let e = &sol.energy;
    for (name, v) in ["sym_e", "skew_c", "trace_e", "sym_micro", "trace_micro", "curl"].iter().zip(e.as_array()) {
        r.put(format!("energy.{name}"), v);
    }
    r.put("energy.total", e.total());
    let exact = config.boundary == config.loads && config.boundary != CaseKind::Zero;
    if let Some(c) = problem.data.as_ref().filter(|c| exact && c.has_exact_solution()) {
        let curl = c.micro_field().curl();
        let err = l2_errors(space, &sol.x, |x| c.u(x, 0.0), |x| c.p(x, 0.0), |x| curl.eval(x));
        r.put("error.u", err.u).put("error.p", err.p).put("error.curl_p", err.curl_p);
    }
    if config.output.vtk {
        cx.out.write("solution.vtk", &solution_vtk(space, &sol.x, "micromorph static solution"))?;
    }
    cx.out.write("static.txt", &r.render())
}

fn solve_dynamic(cx: &mut Session) -> Result<()> {
    let config = cx.config;
    let solver = static_solver(config)?;
    let problem = Problem::new(config);
    let d = &config.dynamic;
    let init = match d.initial {
        InitialKind::Zero => InitialData::zeros(solver.space()),
        InitialKind::Boundary => match problem.data() {
            Some(data) => InitialData::from_boundary(&solver, data).context("lifting initial data")?,
            None => InitialData::zeros(solver.space()),
        },
        InitialKind::Bubble => bubble_state(&solver, problem.data())?,
    };
    let homogeneous = micromorph_core::boundary::Homogeneous;
    let compat = check_compatibility(solver.space(), &init, problem.data().unwrap_or(&homogeneous))?;
    let run = DynamicRun {
        dt: d.dt,
        steps: d.steps,
        integrator: d.integrator,
        output_every: d.output_every,
    };
    let traj = run_dynamic(&solver, problem.loads(), problem.data(), &init, &run).context("time integration")?;
    let mut r = report(cx);
    r.put("case.boundary", config.boundary.name())
        .put("case.loads", config.loads.name())
        .put("integrator", d.integrator.name())
        .put("dt", d.dt)
        .put("steps", d.steps)
        .put("horizon", run.horizon())
        .put("dofs", solver.space().num_dofs())
        .put("compatibility.displacement", compat.displacement)
        .put("compatibility.velocity", compat.velocity)
        .put("compatibility.micro", compat.micro)
        .put("compatibility.micro_rate", compat.micro_rate)
        .put("boundary_mismatch", traj.boundary_mismatch)
        .put("energy.initial", traj.energies.first().map_or(0.0, |e| e.total()))
        .put("energy.final", traj.energies.last().map_or(0.0, |e| e.total()))
        .put("relative_energy_drift", traj.relative_energy_drift());
    cx.out.write("energy.csv", &energy_csv(&traj.energies).render())?;
    if config.output.vtk {
        for s in &traj.snapshots {
            let title = format!("micromorph dynamic step {} t = {}", s.step, s.time);
            cx.out.write(&format!("dynamic_{:06}.vtk", s.step), &solution_vtk(solver.space(), &s.x, &title))?;
        }
    }
    cx.out.write("dynamic.txt", &r.render())
}

/// Lift of `data` and its rate, plus `sin πx̂ sin πŷ sin πẑ` times fixed
/// directions in `u` and `P` on the free dofs.
fn bubble_state(solver: &StaticSolver, data: Option<&dyn BoundaryData>) -> Result<InitialData> {
    use micromorph_core::{Mat3, Vec3};
    use std::f64::consts::PI;
    let space = solver.space();
    let l = space.mesh().spec().lengths;
    let bump = move |x: &Vec3| (0..3).map(|a| (PI * x[a] / l[a]).sin()).product::<f64>();
    let dir = Vec3::new(1.0, -0.5, 0.25);
    let m = Mat3::new(0.2, 0.1, 0.0, -0.1, 0.3, 0.05, 0.0, 0.15, -0.2);
    let shape = space.interpolate(|x| dir * bump(x), |x| m * bump(x));
    let mut init = match data {
        Some(d) => InitialData::from_boundary(solver, d).context("lifting initial data")?,
        None => InitialData::zeros(space),
    };
    for &d in solver.free_dofs() {
        init.position[d] += shape[d];
    }
    Ok(init)
}

fn verify_extension(cx: &mut Session) -> Result<()> {
    let config = cx.config;
    let Some(seed) = config.seed else {
        bail!("verify-extension needs a seed (set `seed` in the config or pass --seed)");
    };
    let levels = config.levels_for(cx.command);
    let suite = extension_property_suite(config.mesh.lengths, &levels, &default_trace_ensemble(), seed, config.solver)?;
    let mut csv = Csv::new(&[
        "case",
        "kind",
        "nx",
        "h",
        "trace_error",
        "trace_error_max",
        "curl_curl_residual",
        "div_residual",
        "auxiliary_div_residual",
        "neumann_residual",
        "harmonic_dimension",
        "data_norm",
        "div_tau_norm",
        "w_h1_norm",
        "curl_r_norm",
    ]);
    let mut r = report(cx);
    r.put("seed", seed)
        .put_list("levels", &levels)
        .put_list("h", &suite.h)
        .put_list("harmonic_dimensions", &suite.harmonic_dimensions)
        .put("harmonic_basis_empty", suite.harmonic_basis_empty())
        .put("zero_exact", suite.zero_exact())
        .put("edge_compatible_monotone", suite.edge_compatible_monotone());
    for e in &suite.entries {
        for ((&n, &h), rep) in levels.iter().zip(&suite.h).zip(&e.reports) {
            csv.push(vec![
                e.name.to_string(),
                e.kind.name().to_string(),
                n.to_string(),
                h.to_string(),
                rep.trace_error.to_string(),
                rep.trace_error_max.to_string(),
                rep.curl_curl_residual.to_string(),
                rep.div_residual.to_string(),
                rep.auxiliary_div_residual.to_string(),
                rep.neumann_residual.to_string(),
                rep.harmonic_dimension.to_string(),
                rep.data_norm.to_string(),
                rep.div_tau_norm.to_string(),
                rep.w_h1_norm.to_string(),
                rep.curl_r_norm.to_string(),
            ]);
        }
        r.put(format!("{}.kind", e.name), e.kind.name()).put(format!("{}.monotone", e.name), e.monotone());
        if let Some(rate) = e.trace_rate(&suite.h) {
            r.put(format!("{}.trace_rate", e.name), rate);
        }
    }
    for c in [&suite.neumann_constant, &suite.auxiliary_constant] {
        r.put_list(c.name, &c.values).put(format!("{}.spread", c.name), c.spread());
    }
    cx.out.write("extension.csv", &csv.render())?;
    cx.out.write("extension.txt", &r.render())
}

fn korn(cx: &mut Session) -> Result<()> {
    let config = cx.config;
    let levels = config.levels_for(cx.command);
    let lengths = config.mesh.lengths;
    let korn = korn_study(lengths, &levels).context("Korn eigenvalue study")?;
    let coercivity = coercivity_study(&config.material, lengths, &levels).context("coercivity eigenvalue study")?;
    let witness = unconstrained_skew_quotient(build_mesh(config)?)?;
    let mut csv = Csv::new(&["nx", "korn", "coercivity"]);
    for (k, n) in levels.iter().enumerate() {
        csv.push(vec![n.to_string(), korn.values[k].to_string(), coercivity.values[k].to_string()]);
    }
    let mut r = report(cx);
    r.put_list("levels", &levels)
        .put_list("korn", &korn.values)
        .put("korn.min", korn.min())
        .put("korn.spread", korn.spread())
        .put("skew_witness_quotient", witness)
        .put("material.mu_c", config.material.mu_c)
        .put_list("coercivity", &coercivity.values)
        .put("coercivity.min", coercivity.min());
    cx.out.write("korn.csv", &csv.render())?;
    cx.out.write("korn.txt", &r.render())
}

fn convergence(cx: &mut Session) -> Result<()> {
    let config = cx.config;
    let kind = config.boundary;
    if !case(config, kind).has_exact_solution() {
        bail!("case `{}` has no exact solution to converge to", kind.name());
    }
    let levels = config.levels_for(cx.command);
    let table = manufactured_convergence(kind, &config.material, config.mesh.lengths, &levels, config.lifting, config.solver)?;
    let mut csv = Csv::new(&[
        "nx",
        "h",
        "dofs",
        "error_u",
        "error_p",
        "error_curl_p",
        "energy_error",
        "relative_residual",
        "iterations",
    ]);
    for row in &table.rows {
        csv.push(vec![
            row.nx.to_string(),
            row.h.to_string(),
            row.dofs.to_string(),
            row.errors.u.to_string(),
            row.errors.p.to_string(),
            row.errors.curl_p.to_string(),
            row.energy_error.to_string(),
            row.relative_residual.to_string(),
            row.iterations.to_string(),
        ]);
    }
    let mut r = report(cx);
    r.put("case", table.case)
        .put("lifting", table.lifting.name())
        .put("oracle_residual", table.oracle_residual)
        .put_list("levels", &levels);
    for (name, order) in [("order.u", table.order_u()), ("order.p", table.order_p()), ("order.curl_p", table.order_curl_p())] {
        if let Some(o) = order {
            r.put(name, o);
        }
    }
    cx.out.write("convergence.csv", &csv.render())?;
    cx.out.write("convergence.txt", &r.render())
}
