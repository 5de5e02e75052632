//! Dense symmetric solves backing the kernel machine.
//!
//! Factorization runs through `faer` with sequential parallelism so the
//! result does not depend on the thread pool.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt;
use faer::linalg::evd;
use faer::diag::Diag;
use faer::{Mat, Par};

use crate::error::{Error, Result};

/// Dot product with a fixed 4-way accumulation order.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SolveMethod {
    Cholesky,
    /// Eigendecomposition pseudoinverse after a failed factorization.
    Pseudoinverse,
}

#[derive(Debug, Clone)]
pub struct SpdSolution {
    pub x: Vec<f64>,
    pub method: SolveMethod,
    /// `max_i |(A x - b)_i|`
    pub residual_inf: f64,
}

/// Solve `A x = b` for symmetric `A` given as its full `n x n` matrix.
///
/// Tries a Cholesky factorization first and falls back to the
/// eigendecomposition pseudoinverse when a non-positive pivot appears.
pub fn solve_spd(a: &Mat<f64>, b: &[f64]) -> Result<SpdSolution> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: b.len() });
    }
    let (x, method) = match cholesky_solve(a, b) {
        Some(x) => (x, SolveMethod::Cholesky),
        None => (pinv_solve(a, b)?, SolveMethod::Pseudoinverse),
    };
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("{method:?} solve produced non-finite values")));
    }
    let residual_inf = residual_inf(a, &x, b);
    Ok(SpdSolution { x, method, residual_inf })
}

pub fn residual_inf(a: &Mat<f64>, x: &[f64], b: &[f64]) -> f64 {
    inf_norm(&residual_vec(a, x, b))
}

/// `A x - b`
fn residual_vec(a: &Mat<f64>, x: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.nrows();
    let mut ax = vec![0.0; n];
    // column-major access: accumulate x_j * A[:, j]
    for j in 0..n {
        let col = a.col(j);
        let xj = x[j];
        for (i, v) in ax.iter_mut().enumerate() {
            *v += col[i] * xj;
        }
    }
    ax.iter().zip(b).map(|(v, b)| v - b).collect()
}

fn cholesky_solve(a: &Mat<f64>, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.nrows();
    let mut l = a.clone();
    let par = Par::Seq;
    let mut buf = MemBuffer::new(llt::factor::cholesky_in_place_scratch::<f64>(n, par, Default::default()));
    llt::factor::cholesky_in_place(
        l.as_mut(),
        Default::default(),
        par,
        MemStack::new(&mut buf),
        Default::default(),
    )
    .ok()?;
    let solve = |rhs: &[f64]| -> Vec<f64> {
        let mut m = Mat::<f64>::from_fn(n, 1, |i, _| rhs[i]);
        let mut buf = MemBuffer::new(llt::solve::solve_in_place_scratch::<f64>(n, 1, par));
        llt::solve::solve_in_place(l.as_ref(), m.as_mut(), par, MemStack::new(&mut buf));
        (0..n).map(|i| m[(i, 0)]).collect()
    };
    let mut x = solve(b);
    // iterative refinement against the unfactored matrix
    let mut res = residual_vec(a, &x, b);
    let mut worst = inf_norm(&res);
    for _ in 0..REFINE_STEPS {
        if worst == 0.0 {
            break;
        }
        let dx = solve(&res);
        let cand: Vec<f64> = x.iter().zip(&dx).map(|(x, d)| x - d).collect();
        let cand_res = residual_vec(a, &cand, b);
        let cand_worst = inf_norm(&cand_res);
        if cand_worst >= worst {
            break;
        }
        x = cand;
        res = cand_res;
        worst = cand_worst;
    }
    Some(x)
}

const REFINE_STEPS: usize = 3;

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn pinv_solve(a: &Mat<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.nrows();
    let par = Par::Seq;
    let mut u = Mat::<f64>::zeros(n, n);
    let mut s = Diag::<f64>::zeros(n);
    let mut buf = MemBuffer::new(evd::self_adjoint_evd_scratch::<f64>(
        n,
        evd::ComputeEigenvectors::Yes,
        par,
        Default::default(),
    ));
    evd::self_adjoint_evd(
        a.as_ref(),
        s.as_mut(),
        Some(u.as_mut()),
        par,
        MemStack::new(&mut buf),
        Default::default(),
    )
    .map_err(|e| Error::Numeric(format!("eigendecomposition failed: {e:?}")))?;

    let s = s.column_vector();
    let s_max = (0..n).map(|i| s[i].abs()).fold(0.0, f64::max);
    let tol = s_max * n as f64 * f64::EPSILON;
    let mut x = vec![0.0; n];
    for k in 0..n {
        if s[k].abs() <= tol {
            continue;
        }
        let col = u.col(k);
        let proj: f64 = (0..n).map(|i| col[i] * b[i]).sum::<f64>() / s[k];
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += col[i] * proj;
        }
    }
    Ok(x)
}
