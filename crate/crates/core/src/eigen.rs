//! Frobenius eigenpair of a primitive nonnegative matrix and the matrices
//! built from it.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct EigenData {
    /// Mean matrix `M`.
    pub mean: DMatrix<f64>,
    pub rho: f64,
    /// Left eigenvector, `sum v = 1`.
    pub v: Vec<f64>,
    /// Right eigenvector, `v . u = 1`.
    pub u: Vec<f64>,
    /// `R1 = M - rho u^t v`.
    pub r1: DMatrix<f64>,
    /// `Lambda = (I - R1)^{-1} (I - 1^t v)`.
    pub lambda: DMatrix<f64>,
    pub iterations: usize,
}

/// Power iteration on `M` and `M^t` from the uniform vector, stopped when
/// both residuals `|vM - rho v|_inf` and `|Mu - rho u|_inf` drop to `tol`.
pub fn frobenius_eigenpair(m: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<EigenData> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "mean matrix must be square");
    let mt = m.transpose();
    let (v, rho_left, it_left) = power_iteration(&mt, tol, max_iter)?;
    let (mut u, _, it_right) = power_iteration(m, tol, max_iter)?;
    let rho = rho_left;

    let vu: f64 = v.iter().zip(&u).map(|(a, b)| a * b).sum();
    for x in &mut u {
        *x /= vu;
    }

    let uv = DMatrix::from_fn(n, n, |i, j| u[i] * v[j]);
    let r1 = m - uv * rho;
    let identity = DMatrix::<f64>::identity(n, n);
    let ones_v = DMatrix::from_fn(n, n, |_, j| v[j]);
    let rhs = &identity - ones_v;
    let lambda = (&identity - &r1)
        .lu()
        .solve(&rhs)
        .filter(|x| x.iter().all(|e| e.is_finite()))
        .ok_or(Error::SingularResolvent)?;

    Ok(EigenData {
        mean: m.clone(),
        rho,
        v,
        u,
        r1,
        lambda,
        iterations: it_left.max(it_right),
    })
}

/// Dominant eigenvector of `a` (as a column, `a x = rho x`), normalized to
/// unit sum.
fn power_iteration(a: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<(Vec<f64>, f64, usize)> {
    let n = a.nrows();
    let mut x = vec![1.0 / n as f64; n];
    let mut y = vec![0.0; n];
    for it in 1..=max_iter {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = (0..n).map(|j| a[(i, j)] * x[j]).sum();
        }
        let rho: f64 = y.iter().sum();
        if !rho.is_finite() || rho <= 0.0 {
            return Err(Error::NoConvergence(it));
        }
        let residual = y
            .iter()
            .zip(&x)
            .map(|(yi, xi)| (yi - rho * xi).abs())
            .fold(0.0, f64::max);
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / rho;
        }
        if residual <= tol {
            return Ok((x, rho, it));
        }
    }
    Err(Error::NoConvergence(max_iter))
}

impl EigenData {
    /// Row-major nested vectors of a matrix field, for reports.
    pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
        (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
            .collect()
    }

    pub fn num_types(&self) -> usize {
        self.v.len()
    }

    /// `max |vM - rho v|` and `max |Mu - rho u|`.
    pub fn residuals(&self) -> (f64, f64) {
        let n = self.num_types();
        let left = (0..n)
            .map(|j| {
                let vm: f64 = (0..n).map(|i| self.v[i] * self.mean[(i, j)]).sum();
                (vm - self.rho * self.v[j]).abs()
            })
            .fold(0.0, f64::max);
        let right = (0..n)
            .map(|i| {
                let mu: f64 = (0..n).map(|j| self.mean[(i, j)] * self.u[j]).sum();
                (mu - self.rho * self.u[i]).abs()
            })
            .fold(0.0, f64::max);
        (left, right)
    }

    /// Spectral radius of `R1` estimated as `|R1^(2^j)|^(2^-j)` (Frobenius
    /// norm) by repeated squaring.
    pub fn residual_spectral_radius(&self) -> f64 {
        let norm = self.r1.norm();
        if norm == 0.0 {
            return 0.0;
        }
        // log |R1^e| tracked separately from the normalized power
        let mut log_norm = norm.ln();
        let mut p = &self.r1 / norm;
        let mut exponent = 1.0;
        for _ in 0..10 {
            let sq = &p * &p;
            let n = sq.norm();
            if n == 0.0 {
                return 0.0;
            }
            log_norm = 2.0 * log_norm + n.ln();
            p = sq / n;
            exponent *= 2.0;
        }
        (log_norm / exponent).exp()
    }
}
