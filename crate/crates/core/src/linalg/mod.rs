//! Sparse matrices and linear solvers for desk-scale systems.

mod csr;
mod lu;
mod ordering;

pub use csr::{dot, norm2, norm_inf, CsrMatrix};
pub use lu::LuFactorization;
pub use ordering::reverse_cuthill_mckee;

use crate::error::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMethod {
    Direct,
    Cg,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LinearSolveReport {
    pub residual_norm: f64,
    pub relative_residual: f64,
    /// Zero for a direct solve without refinement.
    pub iterations: usize,
    pub success: bool,
}

impl LinearSolveReport {
    pub(crate) fn failed(relative_residual: f64, iterations: usize) -> Self {
        Self { residual_norm: f64::NAN, relative_residual, iterations, success: false }
    }
}

fn residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    a.matvec(x).iter().zip(b).map(|(ax, b)| b - ax).collect()
}

fn report(a: &CsrMatrix, x: &[f64], b: &[f64], iterations: usize, tol: f64) -> LinearSolveReport {
    let r = norm2(&residual(a, x, b));
    let bn = norm2(b);
    let rel = if bn > 0.0 { r / bn } else { r };
    LinearSolveReport { residual_norm: r, relative_residual: rel, iterations, success: rel <= tol }
}

/// Solves `A x = b` to relative residual `tol`. The residual is always
/// recomputed from `A` and recorded in the report.
pub fn solve(a: &CsrMatrix, b: &[f64], method: SolveMethod, tol: f64) -> Result<(Vec<f64>, LinearSolveReport)> {
    if a.nrows() != a.ncols() || b.len() != a.nrows() {
        return Err(Error::invalid(format!(
            "solve needs a square matrix matching the right-hand side ({}×{}, len {})",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    match method {
        SolveMethod::Direct => {
            let lu = LuFactorization::factor(a)?;
            solve_factored(a, &lu, b, tol)
        }
        SolveMethod::Cg => conjugate_gradient(a, b, tol, 10 * a.nrows().max(10)),
    }
}

/// Direct solve with an existing factorization, followed by up to two steps
/// of iterative refinement when the first residual misses `tol`.
pub fn solve_factored(
    a: &CsrMatrix,
    lu: &LuFactorization,
    b: &[f64],
    tol: f64,
) -> Result<(Vec<f64>, LinearSolveReport)> {
    let mut x = lu.solve(b);
    let mut rep = report(a, &x, b, 0, tol);
    let mut steps = 0;
    while !rep.success && steps < 2 && rep.relative_residual.is_finite() {
        let r = residual(a, &x, b);
        let dx = lu.solve(&r);
        x.iter_mut().zip(&dx).for_each(|(x, d)| *x += d);
        steps += 1;
        rep = report(a, &x, b, steps, tol);
    }
    if rep.success {
        Ok((x, rep))
    } else {
        Err(Error::SolverFailure { message: "direct solve missed the residual tolerance".into(), report: rep })
    }
}

/// Conjugate gradients with a Jacobi preconditioner. Requires a symmetric
/// positive definite matrix.
pub fn conjugate_gradient(
    a: &CsrMatrix,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, LinearSolveReport)> {
    let n = b.len();
    let diag = a.diagonal();
    if diag.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::SolverFailure {
            message: "cg needs a positive diagonal".into(),
            report: LinearSolveReport::failed(f64::NAN, 0),
        });
    }
    let bn = norm2(b);
    let mut x = vec![0.0; n];
    if bn == 0.0 {
        let r = report(a, &x, b, 0, tol);
        return Ok((x, r));
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        let ap = a.matvec(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::SolverFailure {
                message: "cg breakdown: matrix is not positive definite".into(),
                report: LinearSolveReport::failed(norm2(&r) / bn, it),
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if norm2(&r) / bn <= 0.1 * tol {
            let rep = report(a, &x, b, it, tol);
            if rep.success {
                return Ok((x, rep));
            }
        }
        z = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rep = report(a, &x, b, max_iter, tol);
    if rep.success {
        Ok((x, rep))
    } else {
        Err(Error::SolverFailure { message: "cg reached the iteration cap".into(), report: rep })
    }
}
