//! Reference implementations shared by the integration and acceptance tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use slipsense::data::ContactStatus;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_signal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Centered moving average; `None` where the window leaves the signal.
pub fn moving_average(x: &[f64], frame: usize) -> Vec<Option<f64>> {
    let h = frame / 2;
    (0..x.len())
        .map(|i| (i >= h && i + h < x.len()).then(|| x[i - h..=i + h].iter().sum::<f64>() / frame as f64))
        .collect()
}

/// Pooled-variance t statistic written straight from the textbook formula.
pub fn brute_force_t(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let ma = a.iter().sum::<f64>() / na;
    let mb = b.iter().sum::<f64>() / nb;
    let ssa: f64 = a.iter().map(|v| (v - ma).powi(2)).sum();
    let ssb: f64 = b.iter().map(|v| (v - mb).powi(2)).sum();
    let sp2 = (ssa + ssb) / (na + nb - 2.0);
    (ma - mb) / (sp2 * (1.0 / na + 1.0 / nb)).sqrt()
}

/// Onset times by scanning maximal runs: a Slip run of length >= m whose
/// preceding maximal NonSlip run has length >= p (a run at the start only
/// counts when p == 0).
pub fn reference_onsets(statuses: &[ContactStatus], m: usize, p: usize) -> Vec<usize> {
    let mut runs: Vec<(ContactStatus, usize, usize)> = Vec::new();
    for (i, &s) in statuses.iter().enumerate() {
        match runs.last_mut() {
            Some(r) if r.0 == s => r.2 += 1,
            _ => runs.push((s, i, 1)),
        }
    }
    let mut out = Vec::new();
    for (k, &(s, start, len)) in runs.iter().enumerate() {
        if s != ContactStatus::Slip || len < m {
            continue;
        }
        let before = if k == 0 {
            if p == 0 {
                out.push(start);
            }
            continue;
        } else {
            runs[k - 1]
        };
        if before.0 == ContactStatus::NonSlip && before.2 >= p {
            out.push(start);
        } else if p == 0 {
            out.push(start);
        }
    }
    out
}
