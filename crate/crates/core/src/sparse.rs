//! Sparse symmetric positive definite solves.
//!
//! Systems are assembled from `(row, col, value)` triplets (duplicates are
//! summed), factored with faer's sparse Cholesky and checked against a
//! relative residual bound. If the factorization fails or misses the bound,
//! a Jacobi-preconditioned conjugate gradient run takes over.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use crate::error::{Error, Result};

/// Relative residual every accepted solution must satisfy.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

/// Compressed sparse row matrix with summed duplicates.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col = Vec::with_capacity(triplets.len());
        let mut val: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *val.last_mut().unwrap() += v;
            } else {
                col.push(c);
                val.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, col, val }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.val[k] * x[self.col[k]];
            }
            *o = s;
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1]).find(|&k| self.col[k] == i).map(|k| self.val[k]).unwrap_or(0.0)
            })
            .collect()
    }

    fn relative_residual(&self, x: &[f64], b: &[f64]) -> f64 {
        let mut ax = vec![0.0; self.n];
        self.mul_vec(x, &mut ax);
        let r: f64 = ax.iter().zip(b).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nb == 0.0 {
            r
        } else {
            r / nb
        }
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let mut trip = Vec::with_capacity(self.val.len());
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                trip.push(Triplet::new(i, self.col[k], self.val[k]));
            }
        }
        SparseColMat::try_new_from_triplets(self.n, self.n, &trip)
            .map_err(|e| Error::SolverFailure(format!("matrix assembly: {e:?}")))
    }
}

/// Solves `A x = b` for each right-hand side, with `A` symmetric positive
/// definite.
pub fn solve_spd(a: &CsrMatrix, rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = a.dim();
    if n == 0 {
        return Ok(rhs.iter().map(|_| Vec::new()).collect());
    }
    let direct = cholesky_solve(a, rhs);
    let mut out = Vec::with_capacity(rhs.len());
    for (k, b) in rhs.iter().enumerate() {
        let candidate = match &direct {
            Ok(sols) if a.relative_residual(&sols[k], b) <= RESIDUAL_TOLERANCE => Some(sols[k].clone()),
            _ => None,
        };
        let x = match candidate {
            Some(x) => x,
            None => {
                let start = direct.as_ref().map(|s| s[k].clone()).unwrap_or_else(|_| vec![0.0; n]);
                conjugate_gradient(a, b, start, 10 * n + 100)?
            }
        };
        out.push(x);
    }
    Ok(out)
}

fn cholesky_solve(a: &CsrMatrix, rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = a.dim();
    let mat = a.to_faer()?;
    let llt = mat.sp_cholesky(Side::Lower).map_err(|e| Error::SolverFailure(format!("cholesky: {e:?}")))?;
    let mut b = Mat::<f64>::zeros(n, rhs.len());
    for (k, r) in rhs.iter().enumerate() {
        for i in 0..n {
            b[(i, k)] = r[i];
        }
    }
    let x = llt.solve(&b);
    // one step of iterative refinement
    let mut sols = Vec::with_capacity(rhs.len());
    let mut resid = Mat::<f64>::zeros(n, rhs.len());
    let mut ax = vec![0.0; n];
    for k in 0..rhs.len() {
        let xk: Vec<f64> = (0..n).map(|i| x[(i, k)]).collect();
        a.mul_vec(&xk, &mut ax);
        for i in 0..n {
            resid[(i, k)] = rhs[k][i] - ax[i];
        }
        sols.push(xk);
    }
    let dx = llt.solve(&resid);
    for (k, s) in sols.iter_mut().enumerate() {
        for (i, v) in s.iter_mut().enumerate() {
            *v += dx[(i, k)];
        }
    }
    if sols.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::SolverFailure("non-finite cholesky solution".into()));
    }
    Ok(sols)
}

/// Jacobi-preconditioned conjugate gradient, run to [`RESIDUAL_TOLERANCE`].
pub fn conjugate_gradient(a: &CsrMatrix, b: &[f64], mut x: Vec<f64>, max_iter: usize) -> Result<Vec<f64>> {
    let n = a.dim();
    let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nb == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let inv_diag: Vec<f64> = a.diagonal().into_iter().map(|d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut ax = vec![0.0; n];
    a.mul_vec(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    for _ in 0..max_iter {
        let rn: f64 = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rn / nb <= RESIDUAL_TOLERANCE * 0.5 {
            break;
        }
        a.mul_vec(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            return Err(Error::SolverFailure("matrix is not positive definite".into()));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res = a.relative_residual(&x, b);
    if res <= RESIDUAL_TOLERANCE && x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::SolverFailure(format!("relative residual {res:e} above {RESIDUAL_TOLERANCE:e}")))
    }
}
