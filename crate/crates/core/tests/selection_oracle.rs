mod common;

use rand::Rng;
use slipsense::data::ContactStatus;
use slipsense::features::FeatureMatrix;
use slipsense::selection::{fit_standardizer, pooled_t_score, rank_features};

use common::{brute_force_t, rng};

fn random_matrix(seed: u64, rows: usize, cols: usize) -> FeatureMatrix {
    let mut r = rng(seed);
    let labels: Vec<ContactStatus> =
        (0..rows).map(|i| if i % 2 == 0 { ContactStatus::Slip } else { ContactStatus::NonSlip }).collect();
    let data = (0..rows)
        .map(|i| {
            (0..cols)
                .map(|j| {
                    let shift = if labels[i] == ContactStatus::Slip { 0.1 * j as f64 } else { 0.0 };
                    r.gen_range(-1.0..1.0) * (1.0 + j as f64 * 0.2) + shift
                })
                .collect()
        })
        .collect();
    FeatureMatrix::from_rows(data, labels).unwrap()
}

fn split_column(m: &FeatureMatrix, j: usize) -> (Vec<f64>, Vec<f64>) {
    let (mut slip, mut non) = (Vec::new(), Vec::new());
    for i in 0..m.n_rows() {
        match m.labels[i] {
            ContactStatus::Slip => slip.push(m.get(i, j)),
            _ => non.push(m.get(i, j)),
        }
    }
    (slip, non)
}

#[test]
fn matches_scipy_two_sample_t() {
    // scipy.stats.ttest_ind(a, b, equal_var=True).statistic
    let t = pooled_t_score(&[1.0, 2.0, 4.0, 3.5, 2.5], &[0.5, 1.5, 1.0, 0.0]).unwrap();
    assert!((t - 2.767719599701881).abs() < 1e-12);
}

#[test]
fn ranking_matches_brute_force() {
    for seed in 0..50 {
        let m = random_matrix(seed, 50, 30);
        let ranking = rank_features(&m, 10).unwrap();
        let mut expected: Vec<(usize, f64)> = (0..30)
            .map(|j| {
                let (s, n) = split_column(&m, j);
                (j, brute_force_t(&s, &n))
            })
            .collect();
        for &(j, t) in &expected {
            assert!((ranking.t_scores[j] - t).abs() <= 1e-9, "seed {seed} slot {j}");
        }
        expected.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
        let order: Vec<usize> = expected.iter().map(|e| e.0).collect();
        assert_eq!(ranking.order, order, "seed {seed}");
    }
}

#[test]
fn ranking_ignores_positive_column_scaling() {
    let m = random_matrix(99, 50, 30);
    let scaled_rows = (0..m.n_rows())
        .map(|i| m.row(i).iter().enumerate().map(|(j, v)| v * (0.01 + 3.0 * j as f64)).collect())
        .collect();
    let scaled = FeatureMatrix::from_rows(scaled_rows, m.labels.clone()).unwrap();
    assert_eq!(rank_features(&m, 30).unwrap().order, rank_features(&scaled, 30).unwrap().order);
}

#[test]
fn separating_slot_ranks_first() {
    let mut r = rng(5);
    let labels: Vec<ContactStatus> =
        (0..40).map(|i| if i < 20 { ContactStatus::Slip } else { ContactStatus::NonSlip }).collect();
    let rows = (0..40)
        .map(|i| {
            let mut row: Vec<f64> = (0..12).map(|_| r.gen_range(-1.0..1.0)).collect();
            row[7] = if i < 20 { r.gen_range(2.0..3.0) } else { r.gen_range(-3.0..-2.0) };
            row
        })
        .collect();
    let m = FeatureMatrix::from_rows(rows, labels).unwrap();
    assert_eq!(rank_features(&m, 1).unwrap().selected(), &[7]);
}

#[test]
fn standardized_training_columns_have_zero_mean_unit_variance() {
    let m = random_matrix(3, 60, 8);
    let sel = [0, 3, 7];
    let st = fit_standardizer(&m, &sel).unwrap();
    let z: Vec<Vec<f64>> = (0..m.n_rows()).map(|i| st.transform_row(m.row(i), &sel)).collect();
    for c in 0..sel.len() {
        let col: Vec<f64> = z.iter().map(|r| r[c]).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
    }
}
