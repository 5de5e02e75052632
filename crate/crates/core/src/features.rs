//! Per-bin feature definitions and the ordered feature pool.
//!
//! Pool layout, for the standard 14 SG / 10 PVDF hand:
//!
//! * every SG channel (ascending id) contributes the 13 SG time features of
//!   its filtered bin signal: 14 x 13 = 182 slots;
//! * every PVDF channel (ascending id) is decomposed into A1..A4, D1..D4 and
//!   each band contributes 14 time then 16 frequency features:
//!   10 x 8 x 30 = 2400 slots.
//!
//! giving 2582 slots in total. Any degenerate ratio (denominator below
//! [`GUARD`]) evaluates to 0, so rows are always finite for finite input.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ChannelMeta, ContactStatus, Finger, SeKind};
use crate::error::{Error, Result};
use crate::preprocess::Bin;
use crate::spectral::{dwt_subbands, magnitude_spectrum, Band, MagnitudeSpectrum, Wavelet};

pub const GUARD: f64 = 1e-12;
pub const ENTROPY_BINS: usize = 16;
pub const DWT_LEVELS: usize = 4;

pub const TIME_FEATURES: [&str; 14] = [
    "mean",
    "std",
    "rms",
    "peak",
    "peak_to_peak",
    "skewness",
    "kurtosis",
    "crest_factor",
    "shape_factor",
    "impulse_factor",
    "clearance_factor",
    "energy",
    "zero_crossing_rate",
    "entropy",
];

/// Time features used for strain-gauge channels: all but the zero-crossing
/// rate, which is degenerate on offset signals.
pub const SG_TIME_FEATURES: [&str; 13] = [
    "mean",
    "std",
    "rms",
    "peak",
    "peak_to_peak",
    "skewness",
    "kurtosis",
    "crest_factor",
    "shape_factor",
    "impulse_factor",
    "clearance_factor",
    "energy",
    "entropy",
];

const ZCR_INDEX: usize = 12;

pub const FREQ_FEATURES: [&str; 16] = [
    "mean_magnitude",
    "magnitude_std",
    "peak_magnitude",
    "peak_frequency",
    "centroid_frequency",
    "mean_frequency",
    "rms_frequency",
    "frequency_variance",
    "spectral_skewness",
    "spectral_kurtosis",
    "spectral_crest_factor",
    "spectral_entropy",
    "median_frequency",
    "spectral_energy",
    "spectral_shape_factor",
    "upper_band_energy_ratio",
];

#[inline]
fn ratio(num: f64, den: f64) -> f64 {
    if den.abs() < GUARD {
        0.0
    } else {
        num / den
    }
}

/// Shannon entropy (nats) of the amplitude histogram over `[min, max]`.
fn histogram_entropy(x: &[f64], min: f64, max: f64) -> f64 {
    let range = max - min;
    if x.is_empty() || range < GUARD {
        return 0.0;
    }
    let mut counts = [0usize; ENTROPY_BINS];
    for &v in x {
        let k = (((v - min) / range) * ENTROPY_BINS as f64) as usize;
        counts[k.min(ENTROPY_BINS - 1)] += 1;
    }
    let n = x.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// The 14 time-domain features, in [`TIME_FEATURES`] order.
///
/// Moments are population (1/n) moments; kurtosis is non-excess.
pub fn time_features(x: &[f64]) -> [f64; 14] {
    let n = x.len();
    if n == 0 {
        return [0.0; 14];
    }
    let nf = n as f64;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut sum_abs = 0.0;
    let mut sum_sqrt_abs = 0.0;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in x {
        sum += v;
        sum_sq += v * v;
        sum_abs += v.abs();
        sum_sqrt_abs += v.abs().sqrt();
        min = min.min(v);
        max = max.max(v);
    }
    let mean = sum / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    let std = m2.sqrt();
    let rms = (sum_sq / nf).sqrt();
    let peak = min.abs().max(max.abs());
    let mean_abs = sum_abs / nf;
    let mean_sqrt_abs = sum_sqrt_abs / nf;

    let skewness = if std < GUARD { 0.0 } else { m3 / (std * std * std) };
    let kurtosis = if std < GUARD { 0.0 } else { m4 / (m2 * m2) };
    let crossings = x.windows(2).filter(|w| w[0] * w[1] < 0.0).count();
    let zcr = if n > 1 { crossings as f64 / (nf - 1.0) } else { 0.0 };

    [
        mean,
        std,
        rms,
        peak,
        max - min,
        skewness,
        kurtosis,
        ratio(peak, rms),
        ratio(rms, mean_abs),
        ratio(peak, mean_abs),
        ratio(peak, mean_sqrt_abs * mean_sqrt_abs),
        sum_sq,
        zcr,
        histogram_entropy(x, min, max),
    ]
}

/// The 13 strain-gauge time features, in [`SG_TIME_FEATURES`] order.
pub fn time_features_sg(x: &[f64]) -> [f64; 13] {
    let all = time_features(x);
    let mut out = [0.0; 13];
    let mut k = 0;
    for (i, v) in all.iter().enumerate() {
        if i != ZCR_INDEX {
            out[k] = *v;
            k += 1;
        }
    }
    out
}

/// The 16 frequency-domain features, in [`FREQ_FEATURES`] order.
///
/// Magnitude-weighted statistics (centroid, variance, skewness, kurtosis)
/// use the amplitudes as weights; the mean/RMS/median frequencies, the
/// entropy and the band ratio use power (`mag^2`).
pub fn freq_features(spec: &MagnitudeSpectrum) -> [f64; 16] {
    let m = &spec.mags;
    let f = &spec.freqs_hz;
    let nb = m.len();
    if nb == 0 {
        return [0.0; 16];
    }
    let nbf = nb as f64;
    let sum_m: f64 = m.iter().sum();
    let sum_p: f64 = m.iter().map(|v| v * v).sum();
    let mean_m = sum_m / nbf;
    let std_m = (m.iter().map(|v| (v - mean_m).powi(2)).sum::<f64>() / nbf).sqrt();
    let mut peak_k = 0;
    for k in 1..nb {
        if m[k] > m[peak_k] {
            peak_k = k;
        }
    }
    let peak_m = m[peak_k];

    let centroid = ratio(f.iter().zip(m).map(|(f, m)| f * m).sum(), sum_m);
    let mean_freq = ratio(f.iter().zip(m).map(|(f, m)| f * m * m).sum(), sum_p);
    let rms_freq = ratio(f.iter().zip(m).map(|(f, m)| f * f * m * m).sum(), sum_p).sqrt();
    let central = |p: i32| -> f64 {
        ratio(f.iter().zip(m).map(|(f, m)| (f - centroid).powi(p) * m).sum(), sum_m)
    };
    let variance = central(2);
    let sigma = variance.sqrt();
    let skew = if sigma < GUARD { 0.0 } else { central(3) / sigma.powi(3) };
    let kurt = if sigma < GUARD { 0.0 } else { central(4) / (variance * variance) };

    let entropy = if sum_p < GUARD {
        0.0
    } else {
        m.iter()
            .map(|v| v * v / sum_p)
            .filter(|&q| q > 0.0)
            .map(|q| -q * q.ln())
            .sum()
    };
    let median = if sum_p < GUARD {
        0.0
    } else {
        let half = 0.5 * sum_p;
        let mut acc = 0.0;
        let mut med = f[nb - 1];
        for k in 0..nb {
            acc += m[k] * m[k];
            if acc >= half {
                med = f[k];
                break;
            }
        }
        med
    };
    let fs = spec.resolution_hz * spec.n as f64;
    let upper: f64 = f
        .iter()
        .zip(m)
        .filter(|(f, _)| **f >= fs / 4.0)
        .map(|(_, m)| m * m)
        .sum();

    [
        mean_m,
        std_m,
        peak_m,
        f[peak_k],
        centroid,
        mean_freq,
        rms_freq,
        variance,
        skew,
        kurt,
        ratio(peak_m, mean_m),
        entropy,
        median,
        sum_p,
        ratio((sum_p / nbf).sqrt(), mean_m),
        ratio(upper, sum_p),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Domain {
    Time,
    Frequency,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Time => "Time",
            Domain::Frequency => "Frequency",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureDef {
    pub name: &'static str,
    pub domain: Domain,
    pub applicable_to: Vec<SeKind>,
}

/// Registry of feature definitions with their channel applicability.
pub fn feature_defs() -> Vec<FeatureDef> {
    let time = TIME_FEATURES.iter().map(|&name| FeatureDef {
        name,
        domain: Domain::Time,
        applicable_to: if SG_TIME_FEATURES.contains(&name) {
            vec![SeKind::SG, SeKind::PVDF]
        } else {
            vec![SeKind::PVDF]
        },
    });
    let freq = FREQ_FEATURES.iter().map(|&name| FeatureDef {
        name,
        domain: Domain::Frequency,
        applicable_to: vec![SeKind::PVDF],
    });
    time.chain(freq).collect()
}

/// Provenance of one feature-pool column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FeatureSlot {
    pub index: usize,
    pub channel_id: u32,
    pub se_kind: SeKind,
    pub finger: Finger,
    pub band: Band,
    pub domain: Domain,
    pub feature_name: &'static str,
}

impl FeatureSlot {
    /// `chNN.KIND.BAND.DOMAIN.feature`
    pub fn name(&self) -> String {
        format!(
            "ch{:02}.{}.{}.{}.{}",
            self.channel_id,
            self.se_kind,
            self.band,
            self.domain.as_str(),
            self.feature_name
        )
    }
}

/// Pool size for a channel mix.
pub fn pool_size(n_sg: usize, n_pvdf: usize) -> usize {
    n_sg * SG_TIME_FEATURES.len() + n_pvdf * Band::SUBBANDS.len() * (TIME_FEATURES.len() + FREQ_FEATURES.len())
}

/// Canonical slot map for a channel layout.
pub fn slot_map(channels: &[ChannelMeta]) -> Vec<FeatureSlot> {
    let mut sg: Vec<&ChannelMeta> = channels.iter().filter(|c| c.kind == SeKind::SG).collect();
    let mut pvdf: Vec<&ChannelMeta> = channels.iter().filter(|c| c.kind == SeKind::PVDF).collect();
    sg.sort_by_key(|c| c.id);
    pvdf.sort_by_key(|c| c.id);

    let mut slots = Vec::with_capacity(pool_size(sg.len(), pvdf.len()));
    let mut push = |c: &ChannelMeta, band, domain, feature_name| {
        slots.push(FeatureSlot {
            index: slots.len(),
            channel_id: c.id,
            se_kind: c.kind,
            finger: c.finger,
            band,
            domain,
            feature_name,
        })
    };
    for c in sg {
        for name in SG_TIME_FEATURES {
            push(c, Band::Raw, Domain::Time, name);
        }
    }
    for c in pvdf {
        for band in Band::SUBBANDS {
            for name in TIME_FEATURES {
                push(c, band, Domain::Time, name);
            }
            for name in FREQ_FEATURES {
                push(c, band, Domain::Frequency, name);
            }
        }
    }
    slots
}

/// Computes feature-pool rows for bins of one channel layout.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    /// (column index in the bin, channel) for SG then PVDF channels, by id.
    sg: Vec<usize>,
    pvdf: Vec<usize>,
    slots: Vec<FeatureSlot>,
    wavelet: Wavelet,
}

impl FeatureExtractor {
    pub fn new(channels: &[ChannelMeta], wavelet: Wavelet) -> Self {
        let mut sg: Vec<usize> = (0..channels.len()).filter(|&i| channels[i].kind == SeKind::SG).collect();
        let mut pvdf: Vec<usize> = (0..channels.len()).filter(|&i| channels[i].kind == SeKind::PVDF).collect();
        sg.sort_by_key(|&i| channels[i].id);
        pvdf.sort_by_key(|&i| channels[i].id);
        FeatureExtractor { sg, pvdf, slots: slot_map(channels), wavelet }
    }

    pub fn slots(&self) -> &[FeatureSlot] {
        &self.slots
    }

    pub fn n_features(&self) -> usize {
        self.slots.len()
    }

    pub fn wavelet(&self) -> Wavelet {
        self.wavelet
    }

    /// One feature-pool row for `bin`, in slot order.
    pub fn assemble(&self, bin: &Bin) -> Result<Vec<f64>> {
        let mut row = Vec::with_capacity(self.slots.len());
        for &c in &self.sg {
            row.extend_from_slice(&time_features_sg(&bin.samples[c]));
        }
        for &c in &self.pvdf {
            let bands = dwt_subbands(&bin.samples[c], DWT_LEVELS, self.wavelet)?;
            for band in Band::SUBBANDS {
                let sig = bands.band(band).unwrap_or(&[]);
                row.extend_from_slice(&time_features(sig));
                let spec = magnitude_spectrum(sig, bin.sample_rate_hz);
                row.extend_from_slice(&freq_features(&spec));
            }
        }
        if let Some(k) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "feature {} of bin at {} s in `{}` is not finite",
                self.slots[k].name(),
                bin.start_s,
                bin.trial_id
            )));
        }
        Ok(row)
    }

    /// Rows for many bins, computed in parallel; row order follows `bins`.
    pub fn build_matrix(&self, bins: &[Bin]) -> Result<FeatureMatrix> {
        let rows: Vec<Vec<f64>> = bins.par_iter().map(|b| self.assemble(b)).collect::<Result<_>>()?;
        let n_cols = self.n_features();
        let mut values = Vec::with_capacity(rows.len() * n_cols);
        for r in &rows {
            values.extend_from_slice(r);
        }
        Ok(FeatureMatrix {
            n_cols,
            values,
            labels: bins.iter().map(|b| b.label).collect(),
        })
    }
}

/// Row-major bins x features matrix with per-row labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureMatrix {
    pub n_cols: usize,
    pub values: Vec<f64>,
    pub labels: Vec<ContactStatus>,
}

impl FeatureMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>, labels: Vec<ContactStatus>) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.len() != labels.len() {
            return Err(Error::LengthMismatch { expected: rows.len(), got: labels.len() });
        }
        let mut values = Vec::with_capacity(rows.len() * n_cols);
        for r in &rows {
            if r.len() != n_cols {
                return Err(Error::LengthMismatch { expected: n_cols, got: r.len() });
            }
            values.extend_from_slice(r);
        }
        Ok(FeatureMatrix { n_cols, values, labels })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols + j]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_rows()).map(move |i| self.get(i, j))
    }

    /// Append rows of another matrix with the same column count.
    pub fn extend(&mut self, other: FeatureMatrix) -> Result<()> {
        if self.n_rows() == 0 && self.n_cols == 0 {
            *self = other;
            return Ok(());
        }
        if other.n_cols != self.n_cols {
            return Err(Error::LengthMismatch { expected: self.n_cols, got: other.n_cols });
        }
        self.values.extend(other.values);
        self.labels.extend(other.labels);
        Ok(())
    }

    /// CSV with one column per slot (named by [`FeatureSlot::name`]) and a
    /// trailing `label` column.
    pub fn to_csv(&self, slots: &[FeatureSlot], w: &mut impl std::io::Write) -> std::io::Result<()> {
        let header: Vec<String> = slots.iter().map(FeatureSlot::name).collect();
        writeln!(w, "{},label", header.join(","))?;
        for i in 0..self.n_rows() {
            for v in self.row(i) {
                write!(w, "{v},")?;
            }
            writeln!(w, "{}", self.labels[i])?;
        }
        Ok(())
    }
}
