//! Two-sample pooled-variance t-score ranking, top-K selection and
//! z-score standardization of the selected columns.

use serde::{Deserialize, Serialize};

use crate::data::ContactStatus;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

pub const DEFAULT_K: usize = 120;
pub const STD_FLOOR: f64 = 1e-12;
const POOLED_VAR_GUARD: f64 = 1e-24;

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

fn t_from_moments(mean_a: f64, var_a: f64, n_a: usize, mean_b: f64, var_b: f64, n_b: usize) -> f64 {
    let (na, nb) = (n_a as f64, n_b as f64);
    let pooled = ((na - 1.0) * var_a + (nb - 1.0) * var_b) / (na + nb - 2.0);
    if pooled < POOLED_VAR_GUARD {
        return 0.0;
    }
    (mean_a - mean_b) / (pooled * (1.0 / na + 1.0 / nb)).sqrt()
}

/// Student's two-sample t statistic with pooled variance, `a` minus `b`.
/// Returns 0 when the pooled variance vanishes.
pub fn pooled_t_score(class_a: &[f64], class_b: &[f64]) -> Result<f64> {
    if class_a.len() < 2 || class_b.len() < 2 {
        return Err(Error::Score(format!(
            "each class needs at least 2 samples, got {} and {}",
            class_a.len(),
            class_b.len()
        )));
    }
    let (ma, va) = mean_var(class_a);
    let (mb, vb) = mean_var(class_b);
    Ok(t_from_moments(ma, va, class_a.len(), mb, vb, class_b.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    /// Signed t (Slip minus NonSlip) per slot.
    pub t_scores: Vec<f64>,
    /// Slot indices sorted by descending |t|, ties by ascending index.
    pub order: Vec<usize>,
    pub k: usize,
}

impl FeatureRanking {
    pub fn score(&self, slot: usize) -> f64 {
        self.t_scores[slot].abs()
    }

    pub fn selected(&self) -> &[usize] {
        &self.order[..self.k]
    }
}

/// Sort slots by descending |t| with ascending-index tie-break.
pub fn rank_order(t_scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..t_scores.len()).collect();
    order.sort_by(|&a, &b| {
        t_scores[b]
            .abs()
            .total_cmp(&t_scores[a].abs())
            .then(a.cmp(&b))
    });
    order
}

/// Score every column of a labeled matrix and keep the top `k`.
pub fn rank_features(matrix: &FeatureMatrix, k: usize) -> Result<FeatureRanking> {
    let slip: Vec<usize> = (0..matrix.n_rows()).filter(|&i| matrix.labels[i] == ContactStatus::Slip).collect();
    let nonslip: Vec<usize> = (0..matrix.n_rows()).filter(|&i| matrix.labels[i] == ContactStatus::NonSlip).collect();
    if slip.len() < 2 || nonslip.len() < 2 {
        return Err(Error::Ranking(format!(
            "need at least 2 rows per class, found {} Slip and {} NonSlip",
            slip.len(),
            nonslip.len()
        )));
    }
    if slip.len() + nonslip.len() != matrix.n_rows() {
        return Err(Error::Ranking("matrix contains unlabeled rows".into()));
    }
    if k == 0 || k > matrix.n_cols {
        return Err(Error::Ranking(format!("k = {k} outside 1..={}", matrix.n_cols)));
    }

    // column moments accumulated row by row for cache-friendly access
    let class_moments = |rows: &[usize]| -> (Vec<f64>, Vec<f64>) {
        let n = rows.len() as f64;
        let mut mean = vec![0.0; matrix.n_cols];
        for &i in rows {
            for (m, v) in mean.iter_mut().zip(matrix.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; matrix.n_cols];
        for &i in rows {
            for ((s, v), m) in var.iter_mut().zip(matrix.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        var.iter_mut().for_each(|s| *s /= n - 1.0);
        (mean, var)
    };
    let (ms, vs) = class_moments(&slip);
    let (mn, vn) = class_moments(&nonslip);
    let t_scores: Vec<f64> = (0..matrix.n_cols)
        .map(|j| t_from_moments(ms[j], vs[j], slip.len(), mn[j], vn[j], nonslip.len()))
        .collect();
    let order = rank_order(&t_scores);
    Ok(FeatureRanking { t_scores, order, k })
}

/// Per-column z-scoring for the selected slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    /// Pick `selected` columns out of a full pool row and standardize them.
    pub fn transform_row(&self, full_row: &[f64], selected: &[usize]) -> Vec<f64> {
        selected
            .iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(&j, (m, s))| (full_row[j] - m) / s)
            .collect()
    }
}

/// Population mean and standard deviation (floored at [`STD_FLOOR`]) of
/// each selected column over all rows.
pub fn fit_standardizer(matrix: &FeatureMatrix, selected: &[usize]) -> Result<Standardizer> {
    let n = matrix.n_rows();
    if n < 2 {
        return Err(Error::Training(format!("standardizer needs at least 2 rows, got {n}")));
    }
    let mut means = Vec::with_capacity(selected.len());
    let mut stds = Vec::with_capacity(selected.len());
    for &j in selected {
        let mean = matrix.column(j).sum::<f64>() / n as f64;
        let var = matrix.column(j).map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        means.push(mean);
        stds.push(var.sqrt().max(STD_FLOOR));
    }
    Ok(Standardizer { means, stds })
}
