//! Multilevel discrete wavelet decomposition into sub-band reconstructions,
//! and one-sided magnitude spectra.
//!
//! The single-level transform works on the half-sample symmetric extension
//! of its input (`x[-1] = x[0]`, `x[n] = x[n-1]`, period `2n`):
//!
//! ```text
//! a[k] = sum_j lo[j] * x[2k + 1 - j]      d[k] = sum_j hi[j] * x[2k + 1 - j]
//! ```
//!
//! for `k` in `0..(n + taps - 1) / 2`. Synthesis is the adjoint of that
//! map, which for an orthonormal filter pair reconstructs the input
//! exactly on `0..n`.

use std::fmt;
use std::str::FromStr;

use std::cell::RefCell;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Orthonormal wavelet family, named by filter tap count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Wavelet {
    /// 2 taps, 1 vanishing moment.
    #[serde(rename = "haar")]
    Haar,
    /// 4-tap Daubechies, 2 vanishing moments.
    #[serde(rename = "db4")]
    Db4,
    /// 8-tap Daubechies, 4 vanishing moments.
    #[serde(rename = "db8")]
    Db8,
}

impl Default for Wavelet {
    fn default() -> Self {
        Wavelet::Db4
    }
}

impl Wavelet {
    pub fn name(self) -> &'static str {
        match self {
            Wavelet::Haar => "haar",
            Wavelet::Db4 => "db4",
            Wavelet::Db8 => "db8",
        }
    }

    /// Decomposition low-pass filter.
    pub fn lowpass(self) -> Vec<f64> {
        match self {
            Wavelet::Haar => vec![std::f64::consts::FRAC_1_SQRT_2; 2],
            Wavelet::Db4 => {
                let s3 = 3f64.sqrt();
                let d = 4.0 * 2f64.sqrt();
                vec![(1.0 - s3) / d, (3.0 - s3) / d, (3.0 + s3) / d, (1.0 + s3) / d]
            }
            Wavelet::Db8 => vec![
                -0.010597401785069032,
                0.0328830116668852,
                0.030841381835560764,
                -0.18703481171909309,
                -0.027983769416859854,
                0.6308807679298589,
                0.7148465705529156,
                0.2303778133088965,
            ],
        }
    }

    /// Decomposition high-pass filter, `hi[j] = (-1)^(j+1) lo[taps-1-j]`.
    pub fn highpass(self) -> Vec<f64> {
        let lo = self.lowpass();
        let n = lo.len();
        (0..n)
            .map(|j| if j % 2 == 0 { -lo[n - 1 - j] } else { lo[n - 1 - j] })
            .collect()
    }
}

impl fmt::Display for Wavelet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Wavelet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "haar" => Ok(Wavelet::Haar),
            "db4" => Ok(Wavelet::Db4),
            "db8" => Ok(Wavelet::Db8),
            other => Err(Error::Config(format!("unknown wavelet `{other}`"))),
        }
    }
}

#[inline]
fn sym_index(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period) as usize;
    if m < n {
        m
    } else {
        2 * n - 1 - m
    }
}

/// Number of coefficients produced by one analysis step.
pub fn coeff_len(n: usize, taps: usize) -> usize {
    (n + taps - 1) / 2
}

/// One analysis step: (approximation, detail).
pub fn dwt_step(x: &[f64], lo: &[f64], hi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let taps = lo.len();
    let m = coeff_len(n, taps);
    let mut a = vec![0.0; m];
    let mut d = vec![0.0; m];
    for k in 0..m {
        let base = 2 * k as isize + 1;
        let (mut sa, mut sd) = (0.0, 0.0);
        for j in 0..taps {
            let v = x[sym_index(base - j as isize, n)];
            sa += lo[j] * v;
            sd += hi[j] * v;
        }
        a[k] = sa;
        d[k] = sd;
    }
    (a, d)
}

/// One synthesis step producing `n` samples. Either band may be absent
/// (treated as zeros).
pub fn idwt_step(a: Option<&[f64]>, d: Option<&[f64]>, lo: &[f64], hi: &[f64], n: usize) -> Vec<f64> {
    let taps = lo.len() as isize;
    let mut out = vec![0.0; n];
    for (i, o) in out.iter_mut().enumerate() {
        // contributing k satisfy 0 <= 2k + 1 - i < taps
        let i = i as isize;
        let k_lo = (i).div_euclid(2).max(0);
        let k_hi = (i + taps - 2).div_euclid(2);
        let mut s = 0.0;
        for k in k_lo..=k_hi {
            let j = 2 * k + 1 - i;
            if j < 0 || j >= taps {
                continue;
            }
            let (k, j) = (k as usize, j as usize);
            if let Some(a) = a {
                if k < a.len() {
                    s += lo[j] * a[k];
                }
            }
            if let Some(d) = d {
                if k < d.len() {
                    s += hi[j] * d[k];
                }
            }
        }
        *o = s;
    }
    out
}

/// Sub-band identifier. `Raw` denotes the undecomposed signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Band {
    Raw,
    A1,
    A2,
    A3,
    A4,
    D1,
    D2,
    D3,
    D4,
}

impl Band {
    /// Sub-band order used throughout feature layouts.
    pub const SUBBANDS: [Band; 8] = [
        Band::A1,
        Band::A2,
        Band::A3,
        Band::A4,
        Band::D1,
        Band::D2,
        Band::D3,
        Band::D4,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Band::Raw => "Raw",
            Band::A1 => "A1",
            Band::A2 => "A2",
            Band::A3 => "A3",
            Band::A4 => "A4",
            Band::D1 => "D1",
            Band::D2 => "D2",
            Band::D3 => "D3",
            Band::D4 => "D4",
        }
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Input-length reconstructions of each approximation and detail level.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandSet {
    /// `approx[k]` is A_{k+1}.
    pub approx: Vec<Vec<f64>>,
    /// `detail[k]` is D_{k+1}.
    pub detail: Vec<Vec<f64>>,
}

impl SubbandSet {
    pub fn levels(&self) -> usize {
        self.approx.len()
    }

    pub fn band(&self, band: Band) -> Option<&[f64]> {
        let (set, level) = match band {
            Band::Raw => return None,
            Band::A1 => (&self.approx, 0),
            Band::A2 => (&self.approx, 1),
            Band::A3 => (&self.approx, 2),
            Band::A4 => (&self.approx, 3),
            Band::D1 => (&self.detail, 0),
            Band::D2 => (&self.detail, 1),
            Band::D3 => (&self.detail, 2),
            Band::D4 => (&self.detail, 3),
        };
        set.get(level).map(Vec::as_slice)
    }
}

/// Decompose `signal` over `levels` levels and reconstruct every
/// approximation and detail band at the input length.
pub fn dwt_subbands(signal: &[f64], levels: usize, wavelet: Wavelet) -> Result<SubbandSet> {
    if levels == 0 {
        return Err(Error::Decomposition("at least one level is required".into()));
    }
    let min_len = 1usize.checked_shl(levels as u32).unwrap_or(usize::MAX);
    if signal.len() < min_len {
        return Err(Error::Decomposition(format!(
            "signal of length {} is too short for {levels} levels (needs {min_len})",
            signal.len()
        )));
    }
    let lo = wavelet.lowpass();
    let hi = wavelet.highpass();

    // lengths[k] is the length of the level-k approximation input
    let mut lengths = vec![signal.len()];
    let mut approx_coeffs = Vec::with_capacity(levels);
    let mut detail_coeffs = Vec::with_capacity(levels);
    let mut current = signal.to_vec();
    for _ in 0..levels {
        let (a, d) = dwt_step(&current, &lo, &hi);
        lengths.push(a.len());
        approx_coeffs.push(a.clone());
        detail_coeffs.push(d);
        current = a;
    }

    // Lift a band living at level `level` (1-based) back to the input length.
    let lift = |level: usize, coeffs: &[f64], is_detail: bool| -> Vec<f64> {
        let n = lengths[level - 1];
        let mut sig = if is_detail {
            idwt_step(None, Some(coeffs), &lo, &hi, n)
        } else {
            idwt_step(Some(coeffs), None, &lo, &hi, n)
        };
        for l in (1..level).rev() {
            sig = idwt_step(Some(&sig), None, &lo, &hi, lengths[l - 1]);
        }
        sig
    };

    let approx = (1..=levels).map(|l| lift(l, &approx_coeffs[l - 1], false)).collect();
    let detail = (1..=levels).map(|l| lift(l, &detail_coeffs[l - 1], true)).collect();
    Ok(SubbandSet { approx, detail })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeSpectrum {
    pub freqs_hz: Vec<f64>,
    pub mags: Vec<f64>,
    pub resolution_hz: f64,
    /// Length of the time-domain signal.
    pub n: usize,
}

impl MagnitudeSpectrum {
    /// Time-domain energy `sum x^2` recovered from the one-sided amplitudes.
    pub fn energy(&self) -> f64 {
        let last = self.mags.len() - 1;
        let nyquist_bin = self.n % 2 == 0;
        let mut s = 0.0;
        for (k, m) in self.mags.iter().enumerate() {
            if k == 0 || (k == last && nyquist_bin) {
                s += m * m;
            } else {
                s += m * m / 2.0;
            }
        }
        s * self.n as f64
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// One-sided amplitude spectrum: `|X_k| / n`, doubled for bins strictly
/// between DC and Nyquist. A cosine of amplitude `A` on an exact bin shows
/// up with magnitude `A`. No window is applied.
pub fn magnitude_spectrum(signal: &[f64], sample_rate_hz: f64) -> MagnitudeSpectrum {
    let n = signal.len();
    let mut buf: Vec<Complex<f64>> = signal.iter().map(|&x| Complex::new(x, 0.0)).collect();
    if n > 0 {
        let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n));
        fft.process(&mut buf);
    }
    let n_bins = n / 2 + 1;
    let resolution_hz = if n > 0 { sample_rate_hz / n as f64 } else { 0.0 };
    let mut mags = Vec::with_capacity(n_bins);
    let mut freqs_hz = Vec::with_capacity(n_bins);
    for k in 0..n_bins.min(n.max(1)) {
        let raw = if n > 0 { buf[k].norm() / n as f64 } else { 0.0 };
        let edge = k == 0 || (n % 2 == 0 && k == n / 2);
        mags.push(if edge { raw } else { 2.0 * raw });
        freqs_hz.push(k as f64 * resolution_hz);
    }
    MagnitudeSpectrum { freqs_hz, mags, resolution_hz, n }
}
