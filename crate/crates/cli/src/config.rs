//! Run configuration in INI form.
//!
//! ```text
//! seed = 7
//!
//! [mesh]
//! lengths = 1 1 1
//! subdivisions = 4
//!
//! [material]
//! mu_e = 1
//! lambda_e = 1
//!
//! [case]
//! boundary = poly3
//! loads = poly3
//! ```
//!
//! Keys may also be written dotted at top level (`material.mu_c = 0.5`).
//! `#` and `;` start comments. Anything not listed in [`KEYS`] is rejected.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use micromorph_core::assembly::{validate_params, MaterialParams};
use micromorph_core::cases::{AffineField, CaseKind, DEFAULT_OMEGA};
use micromorph_core::dynamic_solver::Integrator;
use micromorph_core::linalg::SolverOptions;
use micromorph_core::mesh::BoxSpec;
use micromorph_core::static_solver::LiftingPath;
use micromorph_core::{Mat3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Mesh,
    SolveStatic,
    SolveDynamic,
    VerifyExtension,
    Korn,
    Convergence,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Mesh,
        Command::SolveStatic,
        Command::SolveDynamic,
        Command::VerifyExtension,
        Command::Korn,
        Command::Convergence,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::Mesh => "mesh",
            Command::SolveStatic => "solve-static",
            Command::SolveDynamic => "solve-dynamic",
            Command::VerifyExtension => "verify-extension",
            Command::Korn => "korn",
            Command::Convergence => "convergence",
        }
    }

    pub fn from_name(name: &str) -> Option<Command> {
        Command::ALL.into_iter().find(|c| c.name() == name)
    }

    /// Refinement levels used when `study.levels` is absent.
    pub fn default_levels(&self) -> Vec<usize> {
        match self {
            Command::Korn => vec![2, 3, 4],
            _ => vec![2, 4, 8],
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How the dynamic run obtains `(u⁰, P⁰, u¹, P¹)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialKind {
    /// Lift of the boundary data and its rate at `t = 0`.
    #[default]
    Boundary,
    Zero,
    /// As `Boundary`, plus a smooth interior bump in the position.
    Bubble,
}

impl InitialKind {
    pub fn name(&self) -> &'static str {
        match self {
            InitialKind::Boundary => "boundary",
            InitialKind::Zero => "zero",
            InitialKind::Bubble => "bubble",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        [InitialKind::Boundary, InitialKind::Zero, InitialKind::Bubble].into_iter().find(|k| k.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicSettings {
    pub integrator: Integrator,
    pub dt: f64,
    pub steps: usize,
    pub output_every: usize,
    pub initial: InitialKind,
}

impl Default for DynamicSettings {
    fn default() -> Self {
        DynamicSettings {
            integrator: Integrator::ImplicitMidpoint,
            dt: 0.01,
            steps: 100,
            output_every: 10,
            initial: InitialKind::Boundary,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSettings {
    pub dir: PathBuf,
    /// Write VTK files for commands that produce fields.
    pub vtk: bool,
}

impl Default for OutputSettings {
    fn default() -> Self {
        OutputSettings {
            dir: PathBuf::from("out"),
            vtk: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Set by the command line when absent from the file.
    pub command: Option<Command>,
    pub mesh: BoxSpec,
    pub material: MaterialParams,
    pub boundary: CaseKind,
    pub loads: CaseKind,
    pub lifting: LiftingPath,
    pub affine: AffineField,
    pub omega: f64,
    pub dynamic: DynamicSettings,
    pub levels: Option<Vec<usize>>,
    pub solver: SolverOptions,
    pub output: OutputSettings,
    pub seed: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: None,
            mesh: BoxSpec::unit_cube(2),
            material: MaterialParams::default(),
            boundary: CaseKind::Zero,
            loads: CaseKind::Zero,
            lifting: LiftingPath::Direct,
            affine: AffineField::default(),
            omega: DEFAULT_OMEGA,
            dynamic: DynamicSettings::default(),
            levels: None,
            solver: SolverOptions::default(),
            output: OutputSettings::default(),
            seed: None,
        }
    }
}

impl RunConfig {
    pub fn levels_for(&self, command: Command) -> Vec<usize> {
        self.levels.clone().unwrap_or_else(|| command.default_levels())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        ConfigError {
            line: Some(line),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Every accepted key, in serialization order.
pub const KEYS: &[&str] = &[
    "command",
    "seed",
    "mesh.lengths",
    "mesh.subdivisions",
    "material.mu_e",
    "material.lambda_e",
    "material.mu_c",
    "material.mu_micro",
    "material.lambda_micro",
    "material.mu_macro",
    "material.l_c",
    "case.boundary",
    "case.loads",
    "case.lifting",
    "case.affine_a",
    "case.affine_b",
    "case.omega",
    "dynamic.integrator",
    "dynamic.dt",
    "dynamic.steps",
    "dynamic.output_every",
    "dynamic.initial",
    "study.levels",
    "solver.cg_rtol",
    "solver.cg_max_iterations",
    "solver.dense_below",
    "output.dir",
    "output.vtk",
];

fn scalar<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .parse()
        .map_err(|_| ConfigError::at(line, format!("`{key}`: cannot parse `{value}`")))
}

fn list<T: FromStr>(line: usize, key: &str, value: &str) -> Result<Vec<T>, ConfigError> {
    value
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| scalar(line, key, s))
        .collect()
}

/// One value for all three axes, or exactly three.
fn triple<T: FromStr + Copy>(line: usize, key: &str, value: &str) -> Result<[T; 3], ConfigError> {
    match list::<T>(line, key, value)?.as_slice() {
        [a] => Ok([*a; 3]),
        [a, b, c] => Ok([*a, *b, *c]),
        other => Err(ConfigError::at(line, format!("`{key}` takes 1 or 3 values, got {}", other.len()))),
    }
}

fn named<T>(line: usize, key: &str, value: &str, lookup: impl Fn(&str) -> Option<T>, known: &str) -> Result<T, ConfigError> {
    lookup(value).ok_or_else(|| ConfigError::at(line, format!("`{key}`: unknown name `{value}` (expected one of {known})")))
}

fn case_names() -> String {
    CaseKind::ALL.iter().map(|k| k.name()).collect::<Vec<_>>().join(", ")
}

fn set(config: &mut RunConfig, line: usize, key: &str, value: &str) -> Result<(), ConfigError> {
    let m = &mut config.material;
    match key {
        "command" => {
            let names = Command::ALL.iter().map(|c| c.name()).collect::<Vec<_>>().join(", ");
            config.command = Some(named(line, key, value, Command::from_name, &names)?);
        }
        "seed" => config.seed = Some(scalar(line, key, value)?),
        "mesh.lengths" => config.mesh.lengths = triple(line, key, value)?,
        "mesh.subdivisions" => config.mesh.subdivisions = triple(line, key, value)?,
        "material.mu_e" => m.mu_e = scalar(line, key, value)?,
        "material.lambda_e" => m.lambda_e = scalar(line, key, value)?,
        "material.mu_c" => m.mu_c = scalar(line, key, value)?,
        "material.mu_micro" => m.mu_micro = scalar(line, key, value)?,
        "material.lambda_micro" => m.lambda_micro = scalar(line, key, value)?,
        "material.mu_macro" => m.mu_macro = scalar(line, key, value)?,
        "material.l_c" => m.l_c = scalar(line, key, value)?,
        "case.boundary" => config.boundary = named(line, key, value, CaseKind::from_name, &case_names())?,
        "case.loads" => config.loads = named(line, key, value, CaseKind::from_name, &case_names())?,
        "case.lifting" => config.lifting = named(line, key, value, LiftingPath::from_name, "direct, constructive")?,
        "case.affine_a" => {
            let v: Vec<f64> = list(line, key, value)?;
            if v.len() != 9 {
                return Err(ConfigError::at(line, format!("`{key}` takes 9 values (row-major), got {}", v.len())));
            }
            config.affine.a = Mat3::from_row_slice(&v);
        }
        "case.affine_b" => config.affine.b = Vec3::from(triple::<f64>(line, key, value)?),
        "case.omega" => config.omega = scalar(line, key, value)?,
        "dynamic.integrator" => {
            config.dynamic.integrator = named(line, key, value, Integrator::from_name, "implicit-midpoint, newmark")?
        }
        "dynamic.dt" => config.dynamic.dt = scalar(line, key, value)?,
        "dynamic.steps" => config.dynamic.steps = scalar(line, key, value)?,
        "dynamic.output_every" => config.dynamic.output_every = scalar(line, key, value)?,
        "dynamic.initial" => config.dynamic.initial = named(line, key, value, InitialKind::from_name, "boundary, zero, bubble")?,
        "study.levels" => {
            let v: Vec<usize> = list(line, key, value)?;
            if v.is_empty() || v.contains(&0) {
                return Err(ConfigError::at(line, "`study.levels` needs positive subdivision counts"));
            }
            config.levels = Some(v);
        }
        "solver.cg_rtol" => config.solver.cg.rtol = scalar(line, key, value)?,
        "solver.cg_max_iterations" => config.solver.cg.max_iterations = scalar(line, key, value)?,
        "solver.dense_below" => config.solver.dense_below = scalar(line, key, value)?,
        "output.dir" => config.output.dir = PathBuf::from(value),
        "output.vtk" => config.output.vtk = scalar(line, key, value)?,
        _ => return Err(ConfigError::at(line, format!("unknown key `{key}`"))),
    }
    Ok(())
}

fn check(config: &RunConfig) -> Result<(), ConfigError> {
    let whole = |message: String| ConfigError { line: None, message };
    config.mesh.validate().map_err(|e| whole(e.to_string()))?;
    validate_params(&config.material).map_err(|e| whole(e.to_string()))?;
    let d = &config.dynamic;
    if !(d.dt > 0.0 && d.dt.is_finite()) {
        return Err(whole(format!("dynamic.dt must be positive, got {}", d.dt)));
    }
    if d.steps == 0 || d.output_every == 0 {
        return Err(whole(String::from("dynamic.steps and dynamic.output_every must be positive")));
    }
    if !config.omega.is_finite() {
        return Err(whole(String::from("case.omega must be finite")));
    }
    if !(config.solver.cg.rtol > 0.0) || config.solver.cg.max_iterations == 0 {
        return Err(whole(String::from("solver.cg_rtol and solver.cg_max_iterations must be positive")));
    }
    Ok(())
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut config = RunConfig::default();
    let mut section = String::new();
    let mut seen: Vec<String> = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split(['#', ';']).next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::at(line, "unterminated section header"))?
                .trim();
            if name.is_empty() || !KEYS.iter().any(|key| key.starts_with(&format!("{name}."))) {
                return Err(ConfigError::at(line, format!("unknown section `[{name}]`")));
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| ConfigError::at(line, format!("expected `key = value`, found `{content}`")))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(ConfigError::at(line, "missing key before `=`"));
        }
        let full = if section.is_empty() || key.contains('.') && !KEYS.contains(&format!("{section}.{key}").as_str()) {
            key.to_string()
        } else {
            format!("{section}.{key}")
        };
        if seen.contains(&full) {
            return Err(ConfigError::at(line, format!("duplicate key `{full}`")));
        }
        set(&mut config, line, &full, value)?;
        seen.push(full);
    }
    check(&config)?;
    Ok(config)
}

fn join<T: fmt::Display>(values: impl IntoIterator<Item = T>) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

/// Writes every setting explicitly; `parse_config` of the result equals
/// `config`.
pub fn serialize_config(config: &RunConfig) -> String {
    let mut s = String::new();
    let m = &config.material;
    if let Some(c) = config.command {
        let _ = writeln!(s, "command = {c}");
    }
    if let Some(seed) = config.seed {
        let _ = writeln!(s, "seed = {seed}");
    }
    let _ = writeln!(s, "\n[mesh]");
    let _ = writeln!(s, "lengths = {}", join(config.mesh.lengths));
    let _ = writeln!(s, "subdivisions = {}", join(config.mesh.subdivisions));
    let _ = writeln!(s, "\n[material]");
    for (k, v) in [
        ("mu_e", m.mu_e),
        ("lambda_e", m.lambda_e),
        ("mu_c", m.mu_c),
        ("mu_micro", m.mu_micro),
        ("lambda_micro", m.lambda_micro),
        ("mu_macro", m.mu_macro),
        ("l_c", m.l_c),
    ] {
        let _ = writeln!(s, "{k} = {v}");
    }
    let a = &config.affine.a;
    let _ = writeln!(s, "\n[case]");
    let _ = writeln!(s, "boundary = {}", config.boundary.name());
    let _ = writeln!(s, "loads = {}", config.loads.name());
    let _ = writeln!(s, "lifting = {}", config.lifting.name());
    let _ = writeln!(s, "affine_a = {}", join((0..3).flat_map(|i| (0..3).map(move |j| a[(i, j)]))));
    let _ = writeln!(s, "affine_b = {}", join(config.affine.b.iter()));
    let _ = writeln!(s, "omega = {}", config.omega);
    let d = &config.dynamic;
    let _ = writeln!(s, "\n[dynamic]");
    let _ = writeln!(s, "integrator = {}", d.integrator.name());
    let _ = writeln!(s, "dt = {}", d.dt);
    let _ = writeln!(s, "steps = {}", d.steps);
    let _ = writeln!(s, "output_every = {}", d.output_every);
    let _ = writeln!(s, "initial = {}", d.initial.name());
    if let Some(levels) = &config.levels {
        let _ = writeln!(s, "\n[study]");
        let _ = writeln!(s, "levels = {}", join(levels));
    }
    let _ = writeln!(s, "\n[solver]");
    let _ = writeln!(s, "cg_rtol = {}", config.solver.cg.rtol);
    let _ = writeln!(s, "cg_max_iterations = {}", config.solver.cg.max_iterations);
    let _ = writeln!(s, "dense_below = {}", config.solver.dense_below);
    let _ = writeln!(s, "\n[output]");
    let _ = writeln!(s, "dir = {}", config.output.dir.display());
    let _ = writeln!(s, "vtk = {}", config.output.vtk);
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = parse_config("[mesh]\nsubdivisions = 3\n").unwrap();
        assert_eq!(c.material.mu_c, 0.0);
        assert_eq!(c.mesh.subdivisions, [3; 3]);
        assert_eq!(c.mesh.lengths, [1.0; 3]);
        assert_eq!(c.boundary, CaseKind::Zero);
        assert_eq!(c.seed, None);
        assert_eq!(parse_config("").unwrap(), RunConfig::default());
    }

    #[test]
    fn negative_bulk_modulus_names_the_inequality() {
        let err = parse_config("[material]\nmu_e = 1\nlambda_e = -1\n").unwrap_err();
        assert!(err.to_string().contains("2μ_e + 3λ_e > 0"), "{err}");
        assert_eq!(err.line, None);
    }

    #[test]
    fn unknown_keys_report_their_line() {
        let err = parse_config("seed = 1\n\n[material]\nmu_e = 1\nnu = 0.3\n").unwrap_err();
        assert_eq!(err.line, Some(5));
        assert!(err.message.contains("material.nu"), "{err}");
        assert_eq!(parse_config("[solvers]\n").unwrap_err().line, Some(1));
        assert_eq!(parse_config("material.mu_x = 2").unwrap_err().line, Some(1));
    }

    #[test]
    fn malformed_lines() {
        for (text, line) in [
            ("[mesh\n", 1),
            ("seed\n", 1),
            ("seed = x\n", 1),
            ("\n[mesh]\nsubdivisions = 1 2\n", 3),
            ("[case]\nboundary = cubic\n", 2),
            ("seed = 1\nseed = 2\n", 2),
            ("[case]\naffine_a = 1 2 3\n", 2),
            ("[study]\nlevels = 2 0\n", 2),
        ] {
            assert_eq!(parse_config(text).unwrap_err().line, Some(line), "{text:?}");
        }
        assert_eq!(parse_config("[mesh]\nsubdivisions = 0\n").unwrap_err().line, None);
        assert_eq!(parse_config("[dynamic]\ndt = -1\n").unwrap_err().line, None);
    }

    #[test]
    fn dotted_keys_and_sections_agree() {
        let a = parse_config("material.mu_c = 0.5\ncase.boundary = poly3\n").unwrap();
        let b = parse_config("[material]\nmu_c = 0.5 # comment\n[case]\nboundary = poly3\n").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.material.mu_c, 0.5);
    }

    #[test]
    fn every_key_is_settable() {
        let c = RunConfig {
            command: Some(Command::Korn),
            seed: Some(3),
            levels: Some(vec![2, 3]),
            ..RunConfig::default()
        };
        let text = serialize_config(&c);
        let lines = text.lines().filter(|l| l.contains('=')).count();
        assert_eq!(lines, KEYS.len());
        assert_eq!(parse_config(&text).unwrap(), c);
    }

    prop_compose! {
        fn configs()(
            lengths in prop::array::uniform3(0.1f64..5.0),
            subs in prop::array::uniform3(1usize..9),
            mu_e in 0.01f64..10.0,
            lambda_e in -0.6f64..10.0,
            mu_c in 0.0f64..5.0,
            mu_micro in 0.01f64..10.0,
            lambda_micro in -0.6f64..10.0,
            l_c in 0.01f64..3.0,
            case in 0usize..4,
            dt in 1e-4f64..1.0,
            steps in 1usize..1000,
            seed in proptest::option::of(any::<u64>()),
            b in prop::array::uniform3(-1.0f64..1.0),
        ) -> RunConfig {
            RunConfig {
                mesh: BoxSpec { lengths, subdivisions: subs },
                material: MaterialParams {
                    mu_e,
                    lambda_e: lambda_e * mu_e,
                    mu_c,
                    mu_micro,
                    lambda_micro: lambda_micro * mu_micro,
                    l_c,
                    ..MaterialParams::default()
                },
                boundary: CaseKind::ALL[case],
                loads: CaseKind::ALL[3 - case],
                affine: AffineField { b: Vec3::from(b), ..AffineField::default() },
                dynamic: DynamicSettings { dt, steps, ..DynamicSettings::default() },
                seed,
                ..RunConfig::default()
            }
        }
    }

    proptest! {
        #[test]
        fn serialization_round_trips(c in configs()) {
            let text = serialize_config(&c);
            let back = parse_config(&text).unwrap();
            prop_assert_eq!(&back, &c);
            prop_assert_eq!(serialize_config(&back), text);
        }
    }
}
