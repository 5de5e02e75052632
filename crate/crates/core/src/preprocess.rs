//! Savitzky-Golay smoothing and fixed-width binning.

use serde::{Deserialize, Serialize};

use crate::data::{ContactStatus, LabeledWindowPair, SeKind, TactileTrial, TimeWindow};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub frame_length: usize,
    pub poly_order: usize,
}

impl FilterSpec {
    pub const PVDF_DEFAULT: FilterSpec = FilterSpec { frame_length: 11, poly_order: 1 };
    pub const SG_DEFAULT: FilterSpec = FilterSpec { frame_length: 51, poly_order: 1 };

    pub fn new(frame_length: usize, poly_order: usize) -> Result<Self> {
        let spec = FilterSpec { frame_length, poly_order };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_length == 0 || self.frame_length % 2 == 0 {
            return Err(Error::Filter(format!(
                "frame length must be odd and positive, got {}",
                self.frame_length
            )));
        }
        if self.poly_order >= self.frame_length {
            return Err(Error::Filter(format!(
                "polynomial order {} must be below frame length {}",
                self.poly_order, self.frame_length
            )));
        }
        Ok(())
    }
}

/// Weights `w` such that `sum_j w[j] * y[j]` is the value at `eval_pos` of
/// the least-squares polynomial of degree `order` through
/// `y[0..frame_length]`.
pub fn fit_weights(frame_length: usize, order: usize, eval_pos: usize) -> Vec<f64> {
    let m = order + 1;
    let center = (frame_length as f64 - 1.0) / 2.0;
    let scale = center.max(1.0);
    let t = |j: usize| (j as f64 - center) / scale;

    // normal equations (V^T V) z = e, e_k = t(eval_pos)^k
    let mut a = vec![vec![0.0; m + 1]; m];
    for j in 0..frame_length {
        let tj = t(j);
        let mut pk = 1.0;
        let mut powers = vec![0.0; 2 * m - 1];
        for p in powers.iter_mut() {
            *p = pk;
            pk *= tj;
        }
        for r in 0..m {
            for c in 0..m {
                a[r][c] += powers[r + c];
            }
        }
    }
    let te = t(eval_pos);
    let mut pk = 1.0;
    for row in a.iter_mut() {
        row[m] = pk;
        pk *= te;
    }
    let z = solve_augmented(a);

    (0..frame_length)
        .map(|j| {
            let tj = t(j);
            let mut pk = 1.0;
            let mut w = 0.0;
            for zk in &z {
                w += zk * pk;
                pk *= tj;
            }
            w
        })
        .collect()
}

// Gaussian elimination with partial pivoting on an [m x (m+1)] system.
fn solve_augmented(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let m = a.len();
    for col in 0..m {
        let piv = (col..m)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap_or(col);
        a.swap(col, piv);
        for r in col + 1..m {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..=m {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    let mut x = vec![0.0; m];
    for r in (0..m).rev() {
        let mut s = a[r][m];
        for c in r + 1..m {
            s -= a[r][c] * x[c];
        }
        x[r] = s / a[r][r];
    }
    x
}

/// Savitzky-Golay smoothing.
///
/// Interior points use the centered frame. The first and last
/// `frame_length / 2` points are evaluated on the polynomial fitted to the
/// first (last) full frame, so no padding is introduced at the edges.
pub fn savitzky_golay(signal: &[f64], spec: FilterSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let n = signal.len();
    let len = spec.frame_length;
    if n < len {
        return Err(Error::Filter(format!(
            "signal of length {n} is shorter than frame length {len}"
        )));
    }
    let half = len / 2;
    let mut out = vec![0.0; n];

    let center = fit_weights(len, spec.poly_order, half);
    for i in half..n - half {
        let window = &signal[i - half..i + half + 1];
        out[i] = window.iter().zip(&center).map(|(x, w)| x * w).sum();
    }
    for pos in 0..half {
        let w = fit_weights(len, spec.poly_order, pos);
        out[pos] = signal[..len].iter().zip(&w).map(|(x, w)| x * w).sum();
        let w_end = fit_weights(len, spec.poly_order, len - 1 - pos);
        out[n - 1 - pos] = signal[n - len..].iter().zip(&w_end).map(|(x, w)| x * w).sum();
    }
    Ok(out)
}

/// Smooth every channel with the spec matching its sensing element type.
pub fn preprocess_trial(trial: &TactileTrial, pvdf: FilterSpec, sg: FilterSpec) -> Result<TactileTrial> {
    let samples = trial
        .channels
        .iter()
        .zip(&trial.samples)
        .map(|(ch, col)| {
            let spec = match ch.kind {
                SeKind::PVDF => pvdf,
                SeKind::SG => sg,
            };
            savitzky_golay(col, spec).map_err(|e| Error::Filter(format!("channel {}: {e}", ch.id)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TactileTrial { samples, ..trial.clone() })
}

/// One fixed-width slice of a trial across all channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Bin {
    pub trial_id: String,
    /// `None` for bins cut from an unsegmented stream.
    pub segment_index: Option<usize>,
    pub start_s: f64,
    pub width_s: f64,
    pub sample_rate_hz: f64,
    pub label: ContactStatus,
    /// `samples[c]` holds `bin_len` samples of channel `c`.
    pub samples: Vec<Vec<f64>>,
}

impl Bin {
    pub fn bin_len(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }
}

/// Number of samples per bin for a width at a sample rate.
pub fn bin_length(width_s: f64, sample_rate_hz: f64) -> Result<usize> {
    let len = (width_s * sample_rate_hz).round();
    if !(len >= 2.0) {
        return Err(Error::Config(format!(
            "bin width {width_s} s at {sample_rate_hz} Hz gives {len} samples; at least 2 are required"
        )));
    }
    Ok(len as usize)
}

fn cut_bins(
    trial: &TactileTrial,
    start_idx: usize,
    len: usize,
    bin_len: usize,
    width_s: f64,
    label: ContactStatus,
    segment_index: Option<usize>,
    out: &mut Vec<Bin>,
) {
    for k in 0..len / bin_len {
        let a = start_idx + k * bin_len;
        out.push(Bin {
            trial_id: trial.id.clone(),
            segment_index,
            start_s: a as f64 / trial.sample_rate_hz,
            width_s,
            sample_rate_hz: trial.sample_rate_hz,
            label,
            samples: trial.samples.iter().map(|col| col[a..a + bin_len].to_vec()).collect(),
        });
    }
}

fn window_range(w: &TimeWindow, fs: f64, n: usize) -> (usize, usize) {
    let a = ((w.start_s * fs).round().max(0.0) as usize).min(n);
    let b = ((w.end_s * fs).round().max(0.0) as usize).min(n);
    (a, b.max(a) - a)
}

/// Cut each labeled window into consecutive bins aligned to the window
/// start. A trailing remainder shorter than one bin is dropped.
pub fn bin_windows(trial: &TactileTrial, pairs: &[LabeledWindowPair], width_s: f64) -> Result<Vec<Bin>> {
    let fs = trial.sample_rate_hz;
    let bin_len = bin_length(width_s, fs)?;
    let n = trial.n_samples();
    let mut out = Vec::new();
    for p in pairs {
        for (w, label) in [(&p.nonslip, ContactStatus::NonSlip), (&p.slip, ContactStatus::Slip)] {
            let (a, len) = window_range(w, fs, n);
            cut_bins(trial, a, len, bin_len, width_s, label, Some(p.segment_index), &mut out);
        }
    }
    Ok(out)
}

/// Tile the whole trial into unlabeled bins.
pub fn bin_stream(trial: &TactileTrial, width_s: f64) -> Result<Vec<Bin>> {
    let bin_len = bin_length(width_s, trial.sample_rate_hz)?;
    let mut out = Vec::new();
    cut_bins(trial, 0, trial.n_samples(), bin_len, width_s, ContactStatus::Unlabeled, None, &mut out);
    Ok(out)
}
