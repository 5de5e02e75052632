//! Kernel extreme learning machine with a polynomial kernel.
//!
//! Training solves `(Omega + I / reg_c) alpha = y` where
//! `Omega_ij = (<x_i, x_j> + c)^d` and `y` holds +1 (Slip) / -1 (NonSlip)
//! targets. Scores are the kernel expansion `f(x) = sum_i alpha_i k(x, x_i)`.
//! `reg_c = inf` drops the ridge term; a singular Gram matrix then goes
//! through the pseudoinverse.

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ContactStatus;
use crate::error::{Error, Result};
use crate::linalg::{dot, solve_spd, SolveMethod};

/// Residual bound (relative to the +-1 targets) a well-posed solve meets.
pub const SOLVE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub c: f64,
    pub d: u32,
    /// Ridge constant; `f64::INFINITY` disables regularization.
    #[serde(with = "inf_as_null")]
    pub reg_c: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams { c: 0.5, d: 2, reg_c: 100.0 }
    }
}

impl KernelParams {
    pub fn validate(&self) -> Result<()> {
        if self.d < 1 {
            return Err(Error::Config("kernel degree must be at least 1".into()));
        }
        if !(self.reg_c > 0.0) {
            return Err(Error::Config(format!("reg_c must be positive, got {}", self.reg_c)));
        }
        if !self.c.is_finite() {
            return Err(Error::Config("kernel offset must be finite".into()));
        }
        Ok(())
    }

    #[inline]
    fn eval(&self, u: &[f64], v: &[f64]) -> f64 {
        (dot(u, v) + self.c).powi(self.d as i32)
    }
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// `(<u, v> + c)^d`
pub fn poly_kernel(u: &[f64], v: &[f64], params: &KernelParams) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch { expected: u.len(), got: v.len() });
    }
    Ok(params.eval(u, v))
}

pub fn target(status: ContactStatus) -> Option<f64> {
    match status {
        ContactStatus::Slip => Some(1.0),
        ContactStatus::NonSlip => Some(-1.0),
        ContactStatus::Unlabeled => None,
    }
}

/// Sign decision; a zero score counts as Slip.
pub fn decide(score: f64) -> ContactStatus {
    if score < 0.0 {
        ContactStatus::NonSlip
    } else {
        ContactStatus::Slip
    }
}

/// A trained kernel machine over fixed-length (already standardized) rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelElm {
    pub params: KernelParams,
    pub train_rows: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    pub solve_method: SolveMethod,
    /// Training-system residual; compare against [`SOLVE_TOLERANCE`].
    pub residual_inf: f64,
}

/// Gram matrix with `diag` added on the diagonal.
pub fn gram_matrix(rows: &[Vec<f64>], params: &KernelParams, diag: f64) -> Mat<f64> {
    let n = rows.len();
    // lower triangle row by row, mirrored afterwards
    let lower: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..=i).map(|j| params.eval(&rows[i], &rows[j])).collect())
        .collect();
    Mat::from_fn(n, n, |i, j| {
        let v = if j <= i { lower[i][j] } else { lower[j][i] };
        if i == j {
            v + diag
        } else {
            v
        }
    })
}

/// Closed-form training on `rows` with +1/-1 `targets`.
pub fn elm_train(rows: &[Vec<f64>], targets: &[f64], params: KernelParams) -> Result<KernelElm> {
    params.validate()?;
    let n = rows.len();
    if n < 2 {
        return Err(Error::Training(format!("need at least 2 training rows, got {n}")));
    }
    if targets.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: targets.len() });
    }
    if targets.iter().any(|&t| t != 1.0 && t != -1.0) {
        return Err(Error::Training("targets must be +1 or -1".into()));
    }
    if !(targets.contains(&1.0) && targets.contains(&-1.0)) {
        return Err(Error::Training("both classes must be present".into()));
    }
    let k = rows[0].len();
    for r in rows {
        if r.len() != k {
            return Err(Error::LengthMismatch { expected: k, got: r.len() });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::Training("training rows contain non-finite values".into()));
        }
    }

    let ridge = if params.reg_c.is_infinite() { 0.0 } else { 1.0 / params.reg_c };
    let system = gram_matrix(rows, &params, ridge);
    let sol = solve_spd(&system, targets)?;
    Ok(KernelElm {
        params,
        train_rows: rows.to_vec(),
        alpha: sol.x,
        solve_method: sol.method,
        residual_inf: sol.residual_inf,
    })
}

impl KernelElm {
    pub fn n_features(&self) -> usize {
        self.train_rows.first().map_or(0, Vec::len)
    }

    /// `f(x) = sum_i alpha_i k(x, x_i)`
    pub fn score(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.n_features() {
            return Err(Error::LengthMismatch { expected: self.n_features(), got: row.len() });
        }
        Ok(self
            .train_rows
            .iter()
            .zip(&self.alpha)
            .map(|(t, a)| a * self.params.eval(row, t))
            .sum())
    }

    pub fn predict(&self, row: &[f64]) -> Result<ContactStatus> {
        self.score(row).map(decide)
    }
}

/// Binary classification metrics. `confusion[t][p]` counts rows of true
/// class `t` predicted as `p`, index 0 = NonSlip, 1 = Slip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub accuracy: f64,
    pub recall_nonslip: f64,
    pub recall_slip: f64,
    pub confusion: [[usize; 2]; 2],
}

fn class_index(s: ContactStatus) -> Option<usize> {
    match s {
        ContactStatus::NonSlip => Some(0),
        ContactStatus::Slip => Some(1),
        ContactStatus::Unlabeled => None,
    }
}

impl Metrics {
    pub fn from_predictions(truth: &[ContactStatus], predicted: &[ContactStatus]) -> Result<Self> {
        if truth.is_empty() {
            return Err(Error::Validation("cannot evaluate on an empty set".into()));
        }
        if truth.len() != predicted.len() {
            return Err(Error::LengthMismatch { expected: truth.len(), got: predicted.len() });
        }
        let mut confusion = [[0usize; 2]; 2];
        for (&t, &p) in truth.iter().zip(predicted) {
            let (ti, pi) = match (class_index(t), class_index(p)) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(Error::Validation("evaluation requires labeled rows".into())),
            };
            confusion[ti][pi] += 1;
        }
        let recall = |c: usize| {
            let total = confusion[c][0] + confusion[c][1];
            if total == 0 {
                0.0
            } else {
                confusion[c][c] as f64 / total as f64
            }
        };
        Ok(Metrics {
            n: truth.len(),
            accuracy: (confusion[0][0] + confusion[1][1]) as f64 / truth.len() as f64,
            recall_nonslip: recall(0),
            recall_slip: recall(1),
            confusion,
        })
    }
}
