//! Simplex and interval quadrature.
//!
//! Simplex rules are Grundmann–Möller rules in barycentric coordinates with
//! weights normalised to sum to one; multiply by the simplex measure.

use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods whenever std is linked
use num_traits::Float;

#[derive(Debug, Clone)]
pub struct SimplexRule<const N: usize> {
    pub points: Vec<[f64; N]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

/// Tetrahedral rule exact for polynomials of degree `2s + 1`.
pub fn tetrahedron(s: usize) -> SimplexRule<4> {
    grundmann_moeller::<4>(s)
}

/// Triangle rule exact for polynomials of degree `2s + 1`.
pub fn triangle(s: usize) -> SimplexRule<3> {
    grundmann_moeller::<3>(s)
}

/// Default element rule: degree 5, exact for every product of lowest-order
/// basis functions and their derivatives.
pub fn default_tetrahedron() -> SimplexRule<4> {
    tetrahedron(2)
}

/// Rule used for error norms against analytic fields.
pub fn accurate_tetrahedron() -> SimplexRule<4> {
    tetrahedron(3)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn grundmann_moeller<const N: usize>(s: usize) -> SimplexRule<N> {
    let n = N - 1;
    let d = 2 * s + 1;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for i in 0..=s {
        let denom = (d + n - 2 * i) as f64;
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        let w = sign * 2f64.powi(-2 * s as i32) * denom.powi(d as i32)
            / (factorial(i) * factorial(d + n - i))
            * factorial(n);
        for beta in compositions::<N>(s - i) {
            points.push(beta.map(|b| (2 * b + 1) as f64 / denom));
            weights.push(w);
        }
    }
    SimplexRule {
        points,
        weights,
        degree: d,
    }
}

/// All `N`-tuples of non-negative integers summing to `total`.
fn compositions<const N: usize>(total: usize) -> Vec<[usize; N]> {
    let mut out = Vec::new();
    let mut cur = [0usize; N];
    fn rec<const N: usize>(slot: usize, left: usize, cur: &mut [usize; N], out: &mut Vec<[usize; N]>) {
        if slot == N - 1 {
            cur[slot] = left;
            out.push(*cur);
            return;
        }
        for v in (0..=left).rev() {
            cur[slot] = v;
            rec(slot + 1, left - v, cur, out);
        }
    }
    rec(0, total, &mut cur, &mut out);
    out
}

/// Two-point Gauss rule on `[0, 1]`.
pub fn gauss_interval_2() -> [(f64, f64); 2] {
    let off = 0.5 / 3f64.sqrt();
    [(0.5 - off, 0.5), (0.5 + off, 0.5)]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exact_monomial(alpha: &[usize]) -> f64 {
        // average of prod lambda_j^alpha_j over the n-simplex
        let n = alpha.len() - 1;
        let total: usize = alpha.iter().sum();
        alpha.iter().map(|&a| factorial(a)).product::<f64>() * factorial(n) / factorial(total + n)
    }

    fn check<const N: usize>(rule: &SimplexRule<N>) {
        let wsum: f64 = rule.weights.iter().sum();
        assert!((wsum - 1.0).abs() < 1e-13);
        for alpha in (0..=rule.degree).flat_map(compositions::<N>) {
            let q: f64 = rule
                .points
                .iter()
                .zip(&rule.weights)
                .map(|(p, w)| w * (0..N).map(|j| p[j].powi(alpha[j] as i32)).product::<f64>())
                .sum();
            let exact = exact_monomial(&alpha);
            assert!((q - exact).abs() < 1e-13, "{alpha:?}: {q} vs {exact}");
        }
    }

    #[test]
    fn tetrahedron_rules_are_exact() {
        for s in 0..=3 {
            check(&tetrahedron(s));
        }
    }

    #[test]
    fn triangle_rules_are_exact() {
        for s in 0..=3 {
            check(&triangle(s));
        }
    }

    #[test]
    fn gauss_two_point_integrates_cubics() {
        let q: f64 = gauss_interval_2().iter().map(|(t, w)| w * t.powi(3)).sum();
        assert!((q - 0.25).abs() < 1e-15);
    }
}
