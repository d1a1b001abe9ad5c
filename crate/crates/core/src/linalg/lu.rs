//! Left-looking sparse LU with threshold partial pivoting.
//!
//! The matrix is first symmetrically permuted by reverse Cuthill–McKee to
//! limit fill. Each column is then computed by a sparse triangular solve
//! against the columns of `L` already finished (depth-first reach for the
//! nonzero pattern, numeric update in topological order), after which the
//! pivot is chosen among the rows not yet pivoted.

use super::{ordering::reverse_cuthill_mckee, CsrMatrix, LinearSolveReport};
use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

/// Rows whose magnitude is within this factor of the column maximum may be
/// chosen as pivot; the diagonal is preferred among them.
const PIVOT_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct LuFactorization {
    n: usize,
    perm: Vec<usize>,
    /// Unit lower factor by column; row indices in pivot order.
    l_ptr: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    /// Strict upper factor by column; row indices are pivot steps.
    u_ptr: Vec<usize>,
    u_idx: Vec<usize>,
    u_val: Vec<f64>,
    u_diag: Vec<f64>,
    /// `row_pivot[i]` = pivot step of (permuted) row `i`.
    row_pivot: Vec<usize>,
}

impl LuFactorization {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::invalid(format!("LU needs a square matrix, got {}×{}", n, a.ncols())));
        }
        let perm = reverse_cuthill_mckee(a);
        let mut perm_inv = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            perm_inv[p] = k;
        }
        // Columns of B = P A Pᵀ: column k of B is column perm[k] of A.
        let at = a.transpose();
        let col = |k: usize| at.row(perm[k]).map(|(i, v)| (perm_inv[i], v));

        let mut l_ptr = vec![0usize];
        let mut l_idx: Vec<usize> = Vec::new();
        let mut l_val: Vec<f64> = Vec::new();
        let mut u_ptr = vec![0usize];
        let mut u_idx: Vec<usize> = Vec::new();
        let mut u_val: Vec<f64> = Vec::new();
        let mut u_diag = vec![0.0; n];
        let mut row_pivot = vec![NONE; n];

        let mut x = vec![0.0; n];
        let mut mark = vec![NONE; n];
        let mut pattern: Vec<usize> = Vec::new();
        let mut topo: Vec<usize> = Vec::new();
        let mut stack: Vec<(usize, usize)> = Vec::new();

        for k in 0..n {
            pattern.clear();
            topo.clear();
            for (i, v) in col(k) {
                x[i] = v;
                if mark[i] != k {
                    // Depth-first search through the graph of L from row i.
                    mark[i] = k;
                    stack.push((i, 0));
                    while let Some(&mut (node, ref mut pos)) = stack.last_mut() {
                        let j = row_pivot[node];
                        let children = if j == NONE { &l_idx[0..0] } else { &l_idx[l_ptr[j]..l_ptr[j + 1]] };
                        let mut pushed = None;
                        while *pos < children.len() {
                            let c = children[*pos];
                            *pos += 1;
                            if mark[c] != k {
                                mark[c] = k;
                                pushed = Some(c);
                                break;
                            }
                        }
                        match pushed {
                            Some(c) => stack.push((c, 0)),
                            None => {
                                stack.pop();
                                topo.push(node);
                            }
                        }
                    }
                }
            }
            // Rows reached only through L start at zero.
            pattern.extend_from_slice(&topo);
            // Numeric solve in topological order (reverse postorder).
            for &i in topo.iter().rev() {
                let j = row_pivot[i];
                if j == NONE {
                    continue;
                }
                let xj = x[i];
                if xj != 0.0 {
                    for p in l_ptr[j]..l_ptr[j + 1] {
                        x[l_idx[p]] -= l_val[p] * xj;
                    }
                }
            }
            // Pivot selection among non-pivoted rows.
            let mut max_abs = 0.0f64;
            let mut max_row = NONE;
            for &i in &pattern {
                if row_pivot[i] == NONE && x[i].abs() > max_abs {
                    max_abs = x[i].abs();
                    max_row = i;
                }
            }
            if max_row == NONE || max_abs == 0.0 || !max_abs.is_finite() {
                for &i in &pattern {
                    x[i] = 0.0;
                }
                return Err(Error::SolverFailure {
                    message: format!("matrix is singular (zero pivot in column {k})"),
                    report: LinearSolveReport::failed(f64::NAN, 0),
                });
            }
            let pivot_row = if row_pivot[k] == NONE && mark[k] == k && x[k].abs() >= PIVOT_THRESHOLD * max_abs {
                k
            } else {
                max_row
            };
            let pivot = x[pivot_row];
            u_diag[k] = pivot;
            row_pivot[pivot_row] = k;
            for &i in &pattern {
                let v = x[i];
                x[i] = 0.0;
                if i == pivot_row {
                    continue;
                }
                let j = row_pivot[i];
                if j != NONE {
                    if v != 0.0 {
                        u_idx.push(j);
                        u_val.push(v);
                    }
                } else if v != 0.0 {
                    l_idx.push(i);
                    l_val.push(v / pivot);
                }
            }
            l_ptr.push(l_idx.len());
            u_ptr.push(u_idx.len());
        }
        for r in l_idx.iter_mut() {
            *r = row_pivot[*r];
        }
        Ok(Self { n, perm, l_ptr, l_idx, l_val, u_ptr, u_idx, u_val, u_diag, row_pivot })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored entries in both factors.
    pub fn fill(&self) -> usize {
        self.l_val.len() + self.u_val.len() + self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut y = vec![0.0; self.n];
        for (k, &p) in self.perm.iter().enumerate() {
            y[self.row_pivot[k]] = b[p];
        }
        for j in 0..self.n {
            let yj = y[j];
            if yj != 0.0 {
                for p in self.l_ptr[j]..self.l_ptr[j + 1] {
                    y[self.l_idx[p]] -= self.l_val[p] * yj;
                }
            }
        }
        for k in (0..self.n).rev() {
            y[k] /= self.u_diag[k];
            let yk = y[k];
            if yk != 0.0 {
                for p in self.u_ptr[k]..self.u_ptr[k + 1] {
                    y[self.u_idx[p]] -= self.u_val[p] * yk;
                }
            }
        }
        let mut x = vec![0.0; self.n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = y[k];
        }
        x
    }
}
