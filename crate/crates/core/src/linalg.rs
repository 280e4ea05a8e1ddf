//! Linear solvers and symmetric (generalized) eigensolvers.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::sparse::{conjugate_gradient, dot, inverse_diagonal, norm, CgOptions, CsrMatrix};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub cg: CgOptions,
    /// Systems with fewer unknowns than this are factorised densely.
    pub dense_below: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            cg: CgOptions::default(),
            dense_below: 3000,
        }
    }
}

impl SolverOptions {
    pub fn iterative(cg: CgOptions) -> Self {
        SolverOptions { cg, dense_below: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// A reusable solver for one symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct SpdSolver {
    matrix: CsrMatrix,
    kind: SolverKind,
}

#[derive(Debug, Clone)]
enum SolverKind {
    Dense(Cholesky<f64, Dyn>),
    Iterative { inv_diag: Vec<f64>, opts: CgOptions },
}

impl SpdSolver {
    pub fn new(matrix: CsrMatrix, opts: SolverOptions) -> Result<Self> {
        let kind = if matrix.nrows() < opts.dense_below {
            let chol = Cholesky::new(matrix.to_dense())
                .ok_or(Error::Factorization("reduced system matrix"))?;
            SolverKind::Dense(chol)
        } else {
            SolverKind::Iterative {
                inv_diag: inverse_diagonal(&matrix.diagonal()),
                opts: opts.cg,
            }
        };
        Ok(SpdSolver { matrix, kind })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.kind, SolverKind::Dense(_))
    }

    pub fn solve(&self, b: &[f64]) -> Result<SolveReport> {
        self.solve_from(b, vec![0.0; self.dim()])
    }

    /// Solves starting from the initial guess `x0` (ignored by the dense path).
    pub fn solve_from(&self, b: &[f64], x0: Vec<f64>) -> Result<SolveReport> {
        if b.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "right-hand side",
                expected: self.dim(),
                found: b.len(),
            });
        }
        match &self.kind {
            SolverKind::Dense(chol) => {
                let x = chol.solve(&DVector::from_column_slice(b));
                let x: Vec<f64> = x.iter().copied().collect();
                let relative_residual = relative_residual(&self.matrix, &x, b);
                Ok(SolveReport {
                    x,
                    iterations: 0,
                    relative_residual,
                })
            }
            SolverKind::Iterative { inv_diag, opts } => {
                let mut x = x0;
                let out = conjugate_gradient(&self.matrix, b, &mut x, inv_diag, *opts)?;
                Ok(SolveReport {
                    x,
                    iterations: out.iterations,
                    relative_residual: out.relative_residual,
                })
            }
        }
    }
}

pub fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let bn = norm(b);
    if bn == 0.0 {
        return norm(x);
    }
    let ax = a.mul_vec(x);
    let r: Vec<f64> = ax.iter().zip(b).map(|(p, q)| q - p).collect();
    norm(&r) / bn
}

/// Eigenpairs of `A x = lambda B x` for symmetric `A` and SPD `B`, sorted
/// ascending; eigenvectors are `B`-orthonormal columns.
pub fn generalized_symmetric_eigen(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    with_vectors: bool,
) -> Result<(Vec<f64>, Option<DMatrix<f64>>)> {
    let n = a.nrows();
    if n == 0 {
        return Ok((Vec::new(), with_vectors.then(|| DMatrix::zeros(0, 0))));
    }
    let l = Cholesky::new(b.clone())
        .ok_or(Error::Eigen("right-hand matrix is not positive definite"))?
        .l();
    let y = l
        .solve_lower_triangular(a)
        .ok_or(Error::Eigen("triangular solve"))?;
    let mut c = l
        .solve_lower_triangular(&y.transpose())
        .ok_or(Error::Eigen("triangular solve"))?;
    let ct = c.transpose();
    c += ct;
    c *= 0.5;
    if !with_vectors {
        let mut vals: Vec<f64> = c.symmetric_eigenvalues().iter().copied().collect();
        vals.sort_by(|p, q| p.partial_cmp(q).unwrap());
        return Ok((vals, None));
    }
    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&p, &q| eig.eigenvalues[p].partial_cmp(&eig.eigenvalues[q]).unwrap());
    let vals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut sorted = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        sorted.set_column(dst, &eig.eigenvectors.column(src));
    }
    let vecs = l
        .transpose()
        .solve_upper_triangular(&sorted)
        .ok_or(Error::Eigen("back substitution"))?;
    Ok((vals, Some(vecs)))
}

/// Smallest eigenvalue of the pencil `(A, B)`.
pub fn smallest_generalized_eigenvalue(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let (vals, _) = generalized_symmetric_eigen(a, b, false)?;
    vals.first().copied().ok_or(Error::Eigen("empty pencil"))
}

#[derive(Debug, Clone)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub iterations: usize,
}

/// Lowest `k` eigenpairs of the sparse pencil `(A, B)` by shifted inverse
/// subspace iteration with Rayleigh–Ritz projection. `shift > 0` keeps
/// `A + shift B` positive definite even when `A` is singular.
pub fn lowest_eigenpairs(
    a: &CsrMatrix,
    b: &CsrMatrix,
    k: usize,
    shift: f64,
    solver: CgOptions,
) -> Result<Eigenpairs> {
    let n = a.nrows();
    let block = (k + 2).min(n);
    if block == 0 {
        return Ok(Eigenpairs {
            values: Vec::new(),
            vectors: Vec::new(),
            iterations: 0,
        });
    }
    let shifted = SpdSolver::new(a.linear_combination(1.0, b, shift), SolverOptions::iterative(solver))?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_e16e);
    let mut x: Vec<Vec<f64>> = (0..block)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut previous = vec![f64::INFINITY; block];
    let max_iterations = 300;
    for it in 1..=max_iterations {
        let y: Vec<Vec<f64>> = x
            .iter()
            .map(|xj| shifted.solve(&b.mul_vec(xj)).map(|r| r.x))
            .collect::<Result<_>>()?;
        let ay: Vec<Vec<f64>> = y.iter().map(|v| a.mul_vec(v)).collect();
        let by: Vec<Vec<f64>> = y.iter().map(|v| b.mul_vec(v)).collect();
        let ahat = DMatrix::from_fn(block, block, |i, j| dot(&y[i], &ay[j]));
        let bhat = DMatrix::from_fn(block, block, |i, j| dot(&y[i], &by[j]));
        let ahat = (&ahat + ahat.transpose()) * 0.5;
        let bhat = (&bhat + bhat.transpose()) * 0.5;
        let (theta, v) = generalized_symmetric_eigen(&ahat, &bhat, true)?;
        let v = v.unwrap();
        x = (0..block)
            .map(|j| {
                let mut col = vec![0.0; n];
                for (i, yi) in y.iter().enumerate() {
                    let c = v[(i, j)];
                    for (dst, src) in col.iter_mut().zip(yi) {
                        *dst += c * src;
                    }
                }
                col
            })
            .collect();
        let scale = theta.iter().fold(0.0f64, |m, t| m.max(t.abs())).max(f64::MIN_POSITIVE);
        let change = (0..k)
            .map(|j| (theta[j] - previous[j]).abs())
            .fold(0.0f64, f64::max);
        previous = theta;
        if change <= 1e-11 * scale {
            return Ok(Eigenpairs {
                values: previous[..k].to_vec(),
                vectors: x.into_iter().take(k).collect(),
                iterations: it,
            });
        }
    }
    Err(Error::Eigen("subspace iteration did not converge"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::PatternBuilder;

    fn tridiag(n: usize, d: f64, o: f64) -> CsrMatrix {
        let mut pb = PatternBuilder::new(n, n);
        for i in 0..n {
            pb.add_block(&[i], &(i.saturating_sub(1)..=(i + 1).min(n - 1)).collect::<Vec<_>>());
        }
        let mut m = pb.build(true);
        for i in 0..n {
            m.add(i, i, d);
            if i + 1 < n {
                m.add(i, i + 1, o);
                m.add(i + 1, i, o);
            }
        }
        m
    }

    #[test]
    fn dense_and_iterative_agree() {
        let a = tridiag(40, 4.0, -1.0);
        let b: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let dense = SpdSolver::new(a.clone(), SolverOptions::default()).unwrap();
        let iter = SpdSolver::new(a, SolverOptions::iterative(CgOptions::default())).unwrap();
        assert!(dense.is_dense() && !iter.is_dense());
        let x1 = dense.solve(&b).unwrap().x;
        let x2 = iter.solve(&b).unwrap().x;
        for (p, q) in x1.iter().zip(&x2) {
            assert!((p - q).abs() < 1e-8);
        }
    }

    #[test]
    fn generalized_eigen_matches_scaled_standard() {
        // A = tridiag(2,-1), B = 2 I: eigenvalues are (2 - 2 cos(k pi/(n+1))) / 2
        let n = 10;
        let a = tridiag(n, 2.0, -1.0).to_dense();
        let b = DMatrix::<f64>::identity(n, n) * 2.0;
        let (vals, vecs) = generalized_symmetric_eigen(&a, &b, true).unwrap();
        for (k, v) in vals.iter().enumerate() {
            let exact = (2.0 - 2.0 * ((k + 1) as f64 * core::f64::consts::PI / (n + 1) as f64).cos()) / 2.0;
            assert!((v - exact).abs() < 1e-12);
        }
        let vecs = vecs.unwrap();
        let gram = vecs.transpose() * &b * &vecs;
        assert!((gram - DMatrix::<f64>::identity(n, n)).amax() < 1e-12);
    }

    #[test]
    fn subspace_iteration_finds_lowest_modes() {
        let n = 60;
        let a = tridiag(n, 2.0, -1.0);
        let b = CsrMatrix::from_diagonal(&vec![1.0; n]);
        let pairs = lowest_eigenpairs(&a, &b, 3, 0.01, CgOptions { rtol: 1e-13, max_iterations: 1000 }).unwrap();
        for k in 0..3 {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * core::f64::consts::PI / (n + 1) as f64).cos();
            assert!((pairs.values[k] - exact).abs() < 1e-9, "{} vs {}", pairs.values[k], exact);
        }
    }
}
