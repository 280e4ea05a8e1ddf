//! Named manufactured cases: exact fields, their loads, and the boundary
//! data they induce.

use crate::assembly::MaterialParams;
use crate::boundary::{BoundaryData, TimeProfile};
use crate::extension::coupling_trace;
use crate::mesh::Mesh;
use crate::poly::{static_loads, MatPoly, Poly, VecPoly};
use crate::spaces::TangentialTraceData;
use crate::{Error, Mat3, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CaseKind {
    Zero,
    Affine,
    Poly3,
    HarmonicBc,
}

impl CaseKind {
    pub const ALL: [CaseKind; 4] = [CaseKind::Zero, CaseKind::Affine, CaseKind::Poly3, CaseKind::HarmonicBc];

    pub fn name(&self) -> &'static str {
        match self {
            CaseKind::Zero => "zero",
            CaseKind::Affine => "affine",
            CaseKind::Poly3 => "poly3",
            CaseKind::HarmonicBc => "harmonic-bc",
        }
    }

    pub fn from_name(name: &str) -> Option<CaseKind> {
        CaseKind::ALL.into_iter().find(|k| k.name() == name)
    }
}

/// Affine displacement `A x + b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineField {
    pub a: Mat3,
    pub b: Vec3,
}

impl Default for AffineField {
    fn default() -> Self {
        AffineField {
            a: Mat3::new(0.1, 0.2, -0.05, 0.0, -0.1, 0.15, 0.3, 0.05, 0.2),
            b: Vec3::new(0.01, -0.02, 0.03),
        }
    }
}

impl AffineField {
    fn poly(&self) -> VecPoly {
        VecPoly(core::array::from_fn(|i| {
            Poly::affine(self.b[i], [self.a[(i, 0)], self.a[(i, 1)], self.a[(i, 2)]])
        }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManufacturedCase {
    kind: CaseKind,
    u: VecPoly,
    p: MatPoly,
    f: VecPoly,
    m: MatPoly,
    time: TimeProfile,
    exact: bool,
}

pub const DEFAULT_OMEGA: f64 = 2.0;

fn poly3_fields() -> (VecPoly, MatPoly) {
    let t = |c: f64, e: [u32; 3]| Poly::monomial(c, e);
    let u = VecPoly([
        t(1.0, [2, 1, 0]).add(&t(0.5, [0, 0, 3])),
        t(1.0, [0, 1, 2]).add(&t(-1.0, [3, 0, 0])).add(&t(0.3, [1, 0, 0])),
        t(1.0, [1, 1, 1]).add(&t(1.0 / 3.0, [0, 3, 0])),
    ]);
    let q = MatPoly([
        [t(1.0, [1, 1, 0]), t(1.0, [0, 0, 2]), Poly::zero()],
        [Poly::zero(), t(1.0, [2, 0, 0]), t(1.0, [0, 1, 1])],
        [t(1.0, [1, 0, 1]), Poly::zero(), t(1.0, [0, 2, 0])],
    ]);
    (u.clone(), u.gradient().add(&q.scale(0.5)))
}

impl ManufacturedCase {
    pub fn new(kind: CaseKind, params: &MaterialParams) -> Self {
        ManufacturedCase::with_affine(kind, params, AffineField::default(), DEFAULT_OMEGA)
    }

    /// `affine` uses `field` as its exact displacement and `harmonic-bc` as
    /// the spatial profile of `g`, oscillating with angular frequency `omega`.
    pub fn with_affine(kind: CaseKind, params: &MaterialParams, field: AffineField, omega: f64) -> Self {
        let (u, p, time, exact) = match kind {
            CaseKind::Zero => (VecPoly::zero(), MatPoly::zero(), TimeProfile::Constant, true),
            CaseKind::Affine => (field.poly(), MatPoly::constant(&field.a), TimeProfile::Constant, true),
            CaseKind::Poly3 => {
                let (u, p) = poly3_fields();
                (u, p, TimeProfile::Constant, true)
            }
            CaseKind::HarmonicBc => (field.poly(), MatPoly::zero(), TimeProfile::Sine { omega }, false),
        };
        let (f, m) = if exact {
            static_loads(params, &u, &p)
        } else {
            (VecPoly::zero(), MatPoly::zero())
        };
        ManufacturedCase {
            kind,
            u,
            p,
            f,
            m,
            time,
            exact,
        }
    }

    pub fn kind(&self) -> CaseKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    /// Whether `(u, P)` solves the equations with the case's loads.
    pub fn has_exact_solution(&self) -> bool {
        self.exact
    }

    pub fn time_profile(&self) -> TimeProfile {
        self.time
    }

    pub fn displacement_field(&self) -> &VecPoly {
        &self.u
    }

    pub fn micro_field(&self) -> &MatPoly {
        &self.p
    }

    pub fn u(&self, x: &Vec3, t: f64) -> Vec3 {
        self.u.eval(x) * self.time.value(t)
    }

    pub fn p(&self, x: &Vec3, t: f64) -> Mat3 {
        self.p.eval(x) * self.time.value(t)
    }

    pub fn u_rate(&self, x: &Vec3, t: f64, order: usize) -> Vec3 {
        self.u.eval(x) * self.time.derivative(t, order)
    }

    pub fn p_rate(&self, x: &Vec3, t: f64, order: usize) -> Mat3 {
        self.p.eval(x) * self.time.derivative(t, order)
    }

    /// Body force; includes the inertia of the exact field in dynamics.
    pub fn body_force(&self, x: &Vec3, t: f64) -> Vec3 {
        let mut f = self.f.eval(x) * self.time.value(t);
        if self.exact {
            f += self.u.eval(x) * self.time.derivative(t, 2);
        }
        f
    }

    pub fn micro_moment(&self, x: &Vec3, t: f64) -> Mat3 {
        let mut m = self.m.eval(x) * self.time.value(t);
        if self.exact {
            m += self.p.eval(x) * self.time.derivative(t, 2);
        }
        m
    }

    /// Largest pointwise residual of the static strong equations, evaluated
    /// with nested fourth-order finite differences of the exact fields on a
    /// grid over `[0, L]` (relative to the load magnitude). Cases without an
    /// exact solution carry no loads and pass vacuously.
    pub fn oracle_residual(&self, params: &MaterialParams, lengths: [f64; 3]) -> f64 {
        if !self.exact {
            return 0.0;
        }
        let u = |x: &Vec3| self.u.eval(x);
        let p = |x: &Vec3| self.p.eval(x);
        let h = 1e-2 * lengths.iter().cloned().fold(f64::INFINITY, f64::min);
        let grad_u = |x: &Vec3| fd_jacobian(&u, x, h);
        let sigma = |x: &Vec3| params.coupling_stress(&(grad_u(x) - p(x)));
        let curl_p = |x: &Vec3| row_curl(&fd_tensor_gradient(&p, x, h));
        let n = 4;
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 1e-300;
        for i in 0..=n {
            for j in 0..=n {
                for k in 0..=n {
                    let x = Vec3::new(
                        lengths[0] * i as f64 / n as f64,
                        lengths[1] * j as f64 / n as f64,
                        lengths[2] * k as f64 / n as f64,
                    );
                    let ds = fd_tensor_gradient(&sigma, &x, h);
                    let div_sigma = Vec3::from_fn(|r, _| (0..3).map(|c| ds[c][(r, c)]).sum());
                    let curl_curl = row_curl(&fd_tensor_gradient(&curl_p, &x, h));
                    let pv = p(&x);
                    let f = self.f.eval(&x);
                    let m = self.m.eval(&x);
                    let rf = -div_sigma - f;
                    let rm = -sigma(&x) + params.micro_stress(&pv) + curl_curl * (params.mu_macro * params.l_c * params.l_c) - m;
                    worst = worst.max(rf.amax()).max(rm.amax());
                    scale = scale.max(f.amax()).max(m.amax());
                }
            }
        }
        worst / scale.max(1.0)
    }

    /// Refuses the case when the finite-difference check fails.
    pub fn check_oracle(&self, params: &MaterialParams, lengths: [f64; 3]) -> Result<f64> {
        let r = self.oracle_residual(params, lengths);
        if r < 1e-6 {
            Ok(r)
        } else {
            Err(Error::Domain(alloc::format!(
                "manufactured case {} fails its finite-difference check (residual {r:e})",
                self.name()
            )))
        }
    }
}

fn fd4<T>(f: impl Fn(f64) -> T, h: f64) -> T
where
    T: core::ops::Add<Output = T> + core::ops::Sub<Output = T> + core::ops::Mul<f64, Output = T>,
{
    (f(-2.0 * h) - f(2.0 * h) + (f(h) - f(-h)) * 8.0) * (1.0 / (12.0 * h))
}

fn shifted(x: &Vec3, axis: usize, s: f64) -> Vec3 {
    let mut y = *x;
    y[axis] += s;
    y
}

/// Row `i` is `∇f_i`.
fn fd_jacobian(f: &impl Fn(&Vec3) -> Vec3, x: &Vec3, h: f64) -> Mat3 {
    let mut j = Mat3::zeros();
    for axis in 0..3 {
        let col = fd4(|s| f(&shifted(x, axis, s)), h);
        j.set_column(axis, &col);
    }
    j
}

/// `out[c] = ∂_c T`.
fn fd_tensor_gradient(f: &impl Fn(&Vec3) -> Mat3, x: &Vec3, h: f64) -> [Mat3; 3] {
    core::array::from_fn(|axis| fd4(|s| f(&shifted(x, axis, s)), h))
}

fn row_curl(d: &[Mat3; 3]) -> Mat3 {
    Mat3::from_fn(|i, k| {
        let (a, b) = ((k + 1) % 3, (k + 2) % 3);
        d[a][(i, b)] - d[b][(i, a)]
    })
}

impl crate::static_solver::Loads for ManufacturedCase {
    fn body_force(&self, x: &Vec3, t: f64) -> Vec3 {
        ManufacturedCase::body_force(self, x, t)
    }

    fn micro_moment(&self, x: &Vec3, t: f64) -> Mat3 {
        ManufacturedCase::micro_moment(self, x, t)
    }

    fn is_zero(&self) -> bool {
        self.f.is_zero() && self.m.is_zero() && !(self.exact && !self.time.is_static())
    }
}

impl BoundaryData for ManufacturedCase {
    fn displacement(&self, x: &Vec3, t: f64, order: usize) -> Vec3 {
        self.u_rate(x, t, order)
    }

    fn tangential(&self, mesh: &Mesh, t: f64, order: usize) -> [TangentialTraceData; 3] {
        let factor = self.time.derivative(t, order);
        let spatial: [TangentialTraceData; 3] = if self.exact {
            core::array::from_fn(|i| {
                let row = self.p.row(i);
                TangentialTraceData::from_field(mesh, |x| row.eval(x))
            })
        } else {
            coupling_trace(mesh, |x| self.u.eval(x))
        };
        spatial.map(|g| g.scaled(factor))
    }

    fn is_homogeneous(&self) -> bool {
        self.u.is_zero() && self.p.is_zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> MaterialParams {
        MaterialParams {
            mu_c: 0.4,
            lambda_e: 0.6,
            lambda_micro: 0.3,
            l_c: 0.8,
            ..MaterialParams::default()
        }
    }

    #[test]
    fn names_round_trip() {
        for k in CaseKind::ALL {
            assert_eq!(CaseKind::from_name(k.name()), Some(k));
        }
        assert_eq!(CaseKind::from_name("cubic"), None);
    }

    #[test]
    fn finite_difference_oracle_accepts_every_case() {
        for k in CaseKind::ALL {
            let case = ManufacturedCase::new(k, &params());
            let r = case.check_oracle(&params(), [1.0, 2.0, 0.5]).unwrap();
            assert!(r < 1e-6, "{}: {r}", k.name());
        }
    }

    #[test]
    fn oracle_rejects_wrong_loads() {
        let mut case = ManufacturedCase::new(CaseKind::Poly3, &params());
        case.m = case.m.add(&MatPoly::constant(&Mat3::identity()).scale(1e-3));
        assert!(case.check_oracle(&params(), [1.0; 3]).is_err());
    }

    #[test]
    fn affine_case_loads() {
        let case = ManufacturedCase::new(CaseKind::Affine, &params());
        let x = Vec3::new(0.3, 0.1, 0.9);
        assert!(case.body_force(&x, 0.0).amax() < 1e-15);
        let a = AffineField::default().a;
        assert!((case.micro_moment(&x, 0.0) - params().micro_stress(&a)).amax() < 1e-14);
    }

    #[test]
    fn harmonic_case_starts_at_rest_position() {
        let case = ManufacturedCase::new(CaseKind::HarmonicBc, &params());
        let x = Vec3::new(1.0, 0.5, 0.0);
        assert_eq!(case.displacement(&x, 0.0, 0), Vec3::zeros());
        let g_t = case.displacement(&x, 0.0, 1);
        assert!((g_t - case.displacement_field().eval(&x) * DEFAULT_OMEGA).amax() < 1e-15);
        assert!(!case.has_exact_solution());
    }
}
