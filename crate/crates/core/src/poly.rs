//! Exact polynomials in `(x, y, z)` for manufactured fields and their loads.

use alloc::collections::BTreeMap;

#[allow(unused_imports)] // shadowed by inherent methods whenever std is linked
use num_traits::Float;

use crate::assembly::MaterialParams;
use crate::{Mat3, Vec3};

/// A polynomial `Σ c_α x^α₀ y^α₁ z^α₂`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Poly {
    terms: BTreeMap<[u32; 3], f64>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly::default()
    }

    pub fn constant(c: f64) -> Self {
        Poly::monomial(c, [0, 0, 0])
    }

    pub fn monomial(c: f64, exponents: [u32; 3]) -> Self {
        let mut p = Poly::zero();
        p.add_term(c, exponents);
        p
    }

    /// The coordinate `x_axis`.
    pub fn coordinate(axis: usize) -> Self {
        let mut e = [0; 3];
        e[axis] = 1;
        Poly::monomial(1.0, e)
    }

    /// `c₀ + g·x`.
    pub fn affine(c0: f64, g: [f64; 3]) -> Self {
        let mut p = Poly::constant(c0);
        for (axis, &c) in g.iter().enumerate() {
            p = p.add(&Poly::coordinate(axis).scale(c));
        }
        p
    }

    pub fn add_term(&mut self, c: f64, exponents: [u32; 3]) {
        if c == 0.0 {
            return;
        }
        let entry = self.terms.entry(exponents).or_insert(0.0);
        *entry += c;
        if *entry == 0.0 {
            self.terms.remove(&exponents);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = ([u32; 3], f64)> + '_ {
        self.terms.iter().map(|(e, c)| (*e, *c))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &Vec3) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| c * x.x.powi(e[0] as i32) * x.y.powi(e[1] as i32) * x.z.powi(e[2] as i32))
            .sum()
    }

    pub fn derivative(&self, axis: usize) -> Poly {
        let mut out = Poly::zero();
        for (e, c) in &self.terms {
            if e[axis] > 0 {
                let mut f = *e;
                f[axis] -= 1;
                out.add_term(c * e[axis] as f64, f);
            }
        }
        out
    }

    pub fn gradient(&self) -> VecPoly {
        VecPoly([self.derivative(0), self.derivative(1), self.derivative(2)])
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(*c, *e);
        }
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Poly {
        let mut out = Poly::zero();
        for (e, c) in &self.terms {
            out.add_term(c * s, *e);
        }
        out
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (e, c) in &self.terms {
            for (f, d) in &other.terms {
                out.add_term(c * d, [e[0] + f[0], e[1] + f[1], e[2] + f[2]]);
            }
        }
        out
    }
}

/// A polynomial vector field.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VecPoly(pub [Poly; 3]);

impl VecPoly {
    pub fn zero() -> Self {
        VecPoly::default()
    }

    pub fn eval(&self, x: &Vec3) -> Vec3 {
        Vec3::new(self.0[0].eval(x), self.0[1].eval(x), self.0[2].eval(x))
    }

    /// Row `i` is `∇v_i`.
    pub fn gradient(&self) -> MatPoly {
        MatPoly(core::array::from_fn(|i| core::array::from_fn(|j| self.0[i].derivative(j))))
    }

    pub fn divergence(&self) -> Poly {
        self.0[0].derivative(0).add(&self.0[1].derivative(1)).add(&self.0[2].derivative(2))
    }

    pub fn curl(&self) -> VecPoly {
        let d = |i: usize, j: usize| self.0[i].derivative(j);
        VecPoly([d(2, 1).sub(&d(1, 2)), d(0, 2).sub(&d(2, 0)), d(1, 0).sub(&d(0, 1))])
    }

    pub fn add(&self, other: &VecPoly) -> VecPoly {
        VecPoly(core::array::from_fn(|i| self.0[i].add(&other.0[i])))
    }

    pub fn scale(&self, s: f64) -> VecPoly {
        VecPoly(core::array::from_fn(|i| self.0[i].scale(s)))
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(Poly::is_zero)
    }
}

/// A polynomial tensor field; row `i` is the vector field `P_i`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatPoly(pub [[Poly; 3]; 3]);

impl MatPoly {
    pub fn zero() -> Self {
        MatPoly::default()
    }

    pub fn constant(m: &Mat3) -> Self {
        MatPoly(core::array::from_fn(|i| core::array::from_fn(|j| Poly::constant(m[(i, j)]))))
    }

    pub fn identity_times(p: &Poly) -> Self {
        MatPoly(core::array::from_fn(|i| {
            core::array::from_fn(|j| if i == j { p.clone() } else { Poly::zero() })
        }))
    }

    pub fn eval(&self, x: &Vec3) -> Mat3 {
        Mat3::from_fn(|i, j| self.0[i][j].eval(x))
    }

    pub fn row(&self, i: usize) -> VecPoly {
        VecPoly(self.0[i].clone())
    }

    pub fn from_rows(rows: [VecPoly; 3]) -> Self {
        MatPoly(rows.map(|r| r.0))
    }

    pub fn transpose(&self) -> MatPoly {
        MatPoly(core::array::from_fn(|i| core::array::from_fn(|j| self.0[j][i].clone())))
    }

    pub fn trace(&self) -> Poly {
        self.0[0][0].add(&self.0[1][1]).add(&self.0[2][2])
    }

    pub fn add(&self, other: &MatPoly) -> MatPoly {
        MatPoly(core::array::from_fn(|i| core::array::from_fn(|j| self.0[i][j].add(&other.0[i][j]))))
    }

    pub fn sub(&self, other: &MatPoly) -> MatPoly {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> MatPoly {
        MatPoly(core::array::from_fn(|i| core::array::from_fn(|j| self.0[i][j].scale(s))))
    }

    pub fn sym(&self) -> MatPoly {
        self.add(&self.transpose()).scale(0.5)
    }

    pub fn skew(&self) -> MatPoly {
        self.sub(&self.transpose()).scale(0.5)
    }

    /// Row-wise divergence.
    pub fn divergence(&self) -> VecPoly {
        VecPoly(core::array::from_fn(|i| self.row(i).divergence()))
    }

    /// Row-wise curl.
    pub fn curl(&self) -> MatPoly {
        MatPoly::from_rows(core::array::from_fn(|i| self.row(i).curl()))
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().flatten().all(Poly::is_zero)
    }
}

/// Coupling stress for `D = ∇u − P`.
pub fn coupling_stress(params: &MaterialParams, d: &MatPoly) -> MatPoly {
    d.sym()
        .scale(2.0 * params.mu_e)
        .add(&d.skew().scale(2.0 * params.mu_c))
        .add(&MatPoly::identity_times(&d.trace().scale(params.lambda_e)))
}

/// Loads `(F, M)` for which `(u, P)` is a static equilibrium.
pub fn static_loads(params: &MaterialParams, u: &VecPoly, p: &MatPoly) -> (VecPoly, MatPoly) {
    let sigma = coupling_stress(params, &u.gradient().sub(p));
    let f = sigma.divergence().scale(-1.0);
    let micro = p
        .sym()
        .scale(2.0 * params.mu_micro)
        .add(&MatPoly::identity_times(&p.trace().scale(params.lambda_micro)));
    let curl_curl = p.curl().curl().scale(params.mu_macro * params.l_c * params.l_c);
    let m = sigma.scale(-1.0).add(&micro).add(&curl_curl);
    (f, m)
}
