//! Trial data model, on-disk trial format, window labeling and
//! trial-level train/test splitting.
//!
//! A trial is stored as two sibling files sharing a stem:
//!
//! * `<stem>.meta.json`: material, sample rate, channel layout and slip
//!   segment annotations (`format_version` 1).
//! * `<stem>.csv`: header `t,ch01,...,ch24` followed by one row per sample.
//!
//! Reals are written in Rust's shortest round-trip decimal form, so
//! `load_trial(save_trial(t)) == t` holds bit for bit.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_CHANNELS: usize = 24;
pub const N_SG: usize = 14;
pub const N_PVDF: usize = 10;
pub const FORMAT_VERSION: u32 = 1;

/// Sensing element type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SeKind {
    /// Piezoresistive strain gauge (quasi-static force).
    SG,
    /// Piezoelectric film (dynamic force / vibration).
    PVDF,
}

impl SeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SeKind::SG => "SG",
            SeKind::PVDF => "PVDF",
        }
    }
}

impl fmt::Display for SeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Finger {
    Thumb,
    Index,
    Middle,
    Ring,
    Little,
}

impl Finger {
    pub const ALL: [Finger; 5] = [
        Finger::Thumb,
        Finger::Index,
        Finger::Middle,
        Finger::Ring,
        Finger::Little,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Finger::Thumb => "thumb",
            Finger::Index => "index",
            Finger::Middle => "middle",
            Finger::Ring => "ring",
            Finger::Little => "little",
        }
    }
}

/// Finger segment (phalanx) the sensing element sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phalanx {
    Distal,
    Middle,
    Proximal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelMeta {
    pub id: u32,
    pub kind: SeKind,
    pub finger: Finger,
    pub segment: Phalanx,
}

/// The 24-channel hand layout: 14 strain gauges (ids 1..=14) followed by
/// 10 PVDF films (ids 15..=24).
///
/// Strain gauges cover every phalanx (the thumb has no middle phalanx);
/// PVDF films sit on the distal and proximal phalanx of each finger.
pub fn standard_layout() -> Vec<ChannelMeta> {
    let mut out = Vec::with_capacity(N_CHANNELS);
    let mut id = 1;
    for finger in Finger::ALL {
        let phalanges: &[Phalanx] = if finger == Finger::Thumb {
            &[Phalanx::Distal, Phalanx::Proximal]
        } else {
            &[Phalanx::Distal, Phalanx::Middle, Phalanx::Proximal]
        };
        for &segment in phalanges {
            out.push(ChannelMeta { id, kind: SeKind::SG, finger, segment });
            id += 1;
        }
    }
    for finger in Finger::ALL {
        for segment in [Phalanx::Distal, Phalanx::Proximal] {
            out.push(ChannelMeta { id, kind: SeKind::PVDF, finger, segment });
            id += 1;
        }
    }
    out
}

fn validate_channels(channels: &[ChannelMeta]) -> Result<()> {
    if channels.len() != N_CHANNELS {
        return Err(Error::Schema(format!(
            "expected {N_CHANNELS} channels, found {}",
            channels.len()
        )));
    }
    let n_sg = channels.iter().filter(|c| c.kind == SeKind::SG).count();
    let n_pvdf = channels.len() - n_sg;
    if n_sg != N_SG || n_pvdf != N_PVDF {
        return Err(Error::Schema(format!(
            "expected {N_SG} SG and {N_PVDF} PVDF channels, found {n_sg} and {n_pvdf}"
        )));
    }
    for (i, c) in channels.iter().enumerate() {
        if c.id as usize != i + 1 {
            return Err(Error::Schema(format!(
                "channel ids must be 1..={N_CHANNELS} in order; position {} has id {}",
                i + 1,
                c.id
            )));
        }
    }
    Ok(())
}

/// One constant-velocity sliding segment with its ground-truth slip period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentAnnotation {
    pub velocity_mm_s: f64,
    pub slip_onset_s: f64,
    pub slip_end_s: f64,
}

fn validate_segments(segments: &[SegmentAnnotation]) -> Result<()> {
    for (i, s) in segments.iter().enumerate() {
        if !(s.slip_onset_s.is_finite() && s.slip_end_s.is_finite() && s.velocity_mm_s.is_finite()) {
            return Err(Error::Validation(format!("segment {i} has non-finite fields")));
        }
        if s.slip_onset_s >= s.slip_end_s {
            return Err(Error::Validation(format!(
                "segment {i}: onset {} is not before end {}",
                s.slip_onset_s, s.slip_end_s
            )));
        }
        if i > 0 && s.slip_onset_s < segments[i - 1].slip_end_s {
            return Err(Error::Validation(format!(
                "segment {i} overlaps or precedes segment {}",
                i - 1
            )));
        }
    }
    Ok(())
}

/// A multi-channel recording of one grasp-and-slide trial.
///
/// Samples are stored column-per-channel: `samples[c][i]` is sample `i` of
/// `channels[c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TactileTrial {
    pub id: String,
    pub material_id: String,
    pub sample_rate_hz: f64,
    pub channels: Vec<ChannelMeta>,
    pub samples: Vec<Vec<f64>>,
    pub segments: Vec<SegmentAnnotation>,
}

impl TactileTrial {
    pub fn new(
        id: impl Into<String>,
        material_id: impl Into<String>,
        sample_rate_hz: f64,
        channels: Vec<ChannelMeta>,
        samples: Vec<Vec<f64>>,
        segments: Vec<SegmentAnnotation>,
    ) -> Result<Self> {
        let trial = TactileTrial {
            id: id.into(),
            material_id: material_id.into(),
            sample_rate_hz,
            channels,
            samples,
            segments,
        };
        trial.validate()?;
        Ok(trial)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(Error::Validation(format!(
                "sample rate must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        validate_channels(&self.channels)?;
        if self.samples.len() != self.channels.len() {
            return Err(Error::Schema(format!(
                "{} channels declared but {} sample columns present",
                self.channels.len(),
                self.samples.len()
            )));
        }
        let n = self.samples[0].len();
        if n == 0 {
            return Err(Error::Validation("trial has no samples".into()));
        }
        if let Some(c) = self.samples.iter().position(|col| col.len() != n) {
            return Err(Error::Validation(format!(
                "channel {} has {} samples, expected {n}",
                c + 1,
                self.samples[c].len()
            )));
        }
        validate_segments(&self.segments)
    }

    pub fn n_samples(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples() as f64 / self.sample_rate_hz
    }

    /// Stratum used for splitting: material plus the velocity sequence.
    pub fn case_key(&self) -> String {
        case_key(&self.material_id, &self.segments)
    }
}

/// Contents of a `<stem>.meta.json` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMeta {
    pub material_id: String,
    pub sample_rate_hz: f64,
    pub channels: Vec<ChannelMeta>,
    pub segments: Vec<SegmentAnnotation>,
    pub format_version: u32,
}

impl TrialMeta {
    pub fn case_key(&self) -> String {
        case_key(&self.material_id, &self.segments)
    }
}

fn case_key(material_id: &str, segments: &[SegmentAnnotation]) -> String {
    let v: Vec<String> = segments.iter().map(|s| format!("{}", s.velocity_mm_s)).collect();
    format!("{}@{}", material_id, v.join("+"))
}

/// Parse a trial's metadata file without touching its samples. Only the
/// format version is checked.
pub fn read_meta(path: &Path) -> Result<TrialMeta> {
    let (meta_path, _) = trial_paths(path);
    let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: TrialMeta = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: meta_path.clone(),
        line: e.line(),
        field: "meta".into(),
        msg: e.to_string(),
    })?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::Version(format!(
            "{}: unsupported format_version {}",
            meta_path.display(),
            meta.format_version
        )));
    }
    Ok(meta)
}

/// Resolve `<stem>`, `<stem>.meta.json` or `<stem>.csv` to the file pair.
pub fn trial_paths(path: &Path) -> (PathBuf, PathBuf) {
    let s = path.to_string_lossy();
    let stem = s
        .strip_suffix(".meta.json")
        .or_else(|| s.strip_suffix(".csv"))
        .unwrap_or(&s)
        .to_string();
    (PathBuf::from(format!("{stem}.meta.json")), PathBuf::from(format!("{stem}.csv")))
}

fn trial_id_from(path: &Path) -> String {
    let (meta, _) = trial_paths(path);
    let name = meta.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    name.strip_suffix(".meta.json").unwrap_or(&name).to_string()
}

/// Write a trial as a `<stem>.meta.json` + `<stem>.csv` pair.
pub fn save_trial(trial: &TactileTrial, path: &Path) -> Result<()> {
    trial.validate()?;
    let (meta_path, csv_path) = trial_paths(path);
    if let Some(dir) = meta_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let meta = TrialMeta {
        material_id: trial.material_id.clone(),
        sample_rate_hz: trial.sample_rate_hz,
        channels: trial.channels.clone(),
        segments: trial.segments.clone(),
        format_version: FORMAT_VERSION,
    };
    let mut json = serde_json::to_string_pretty(&meta)?;
    json.push('\n');
    std::fs::write(&meta_path, json).map_err(|e| Error::io(&meta_path, e))?;

    let file = File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let mut w = BufWriter::new(file);
    let write_all = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        w.write_all(b"t")?;
        for c in &trial.channels {
            write!(w, ",ch{:02}", c.id)?;
        }
        w.write_all(b"\n")?;
        for i in 0..trial.n_samples() {
            write!(w, "{}", i as f64 / trial.sample_rate_hz)?;
            for col in &trial.samples {
                write!(w, ",{}", col[i])?;
            }
            w.write_all(b"\n")?;
        }
        w.flush()
    };
    write_all(&mut w).map_err(|e| Error::io(&csv_path, e))
}

/// Load and validate a trial pair. `path` may name either file or the stem.
pub fn load_trial(path: &Path) -> Result<TactileTrial> {
    let (_, csv_path) = trial_paths(path);
    let meta = read_meta(path)?;
    validate_channels(&meta.channels)?;
    validate_segments(&meta.segments)?;

    let samples = read_samples(&csv_path, &meta.channels)?;
    TactileTrial::new(
        trial_id_from(path),
        meta.material_id,
        meta.sample_rate_hz,
        meta.channels,
        samples,
        meta.segments,
    )
}

fn read_samples(path: &Path, channels: &[ChannelMeta]) -> Result<Vec<Vec<f64>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        Some(h) => h.map_err(|e| Error::io(path, e))?,
        None => {
            return Err(Error::Parse {
                path: path.into(),
                line: 1,
                field: "header".into(),
                msg: "empty sample file".into(),
            })
        }
    };
    let names: Vec<&str> = header.trim_end().split(',').collect();
    if names.len() != channels.len() + 1 {
        return Err(Error::Schema(format!(
            "{}: header lists {} channels, metadata lists {}",
            path.display(),
            names.len().saturating_sub(1),
            channels.len()
        )));
    }
    for (k, name) in names.iter().enumerate() {
        let expected = if k == 0 { "t".to_string() } else { format!("ch{:02}", channels[k - 1].id) };
        if *name != expected {
            return Err(Error::Parse {
                path: path.into(),
                line: 1,
                field: expected,
                msg: format!("unexpected column name `{name}`"),
            });
        }
    }

    let mut cols = vec![Vec::new(); channels.len()];
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        // time column is derived from the sample index; only checked for syntax
        let t = fields.next().unwrap_or("");
        t.parse::<f64>().map_err(|e| Error::Parse {
            path: path.into(),
            line: line_no,
            field: "t".into(),
            msg: e.to_string(),
        })?;
        let mut n = 0;
        for (c, field) in fields.enumerate() {
            if c >= cols.len() {
                n = c + 1;
                break;
            }
            let v = field.parse::<f64>().map_err(|e| Error::Parse {
                path: path.into(),
                line: line_no,
                field: names[c + 1].to_string(),
                msg: format!("`{field}`: {e}"),
            })?;
            cols[c].push(v);
            n = c + 1;
        }
        if n != cols.len() || line.split(',').count() != cols.len() + 1 {
            return Err(Error::Parse {
                path: path.into(),
                line: line_no,
                field: "row".into(),
                msg: format!("expected {} fields", cols.len() + 1),
            });
        }
    }
    Ok(cols)
}

/// Contact status of a bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ContactStatus {
    NonSlip,
    Slip,
    Unlabeled,
}

impl ContactStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ContactStatus::NonSlip => "NonSlip",
            ContactStatus::Slip => "Slip",
            ContactStatus::Unlabeled => "Unlabeled",
        }
    }
}

impl fmt::Display for ContactStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Half-open time interval `[start_s, end_s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start_s: f64,
    pub end_s: f64,
}

impl TimeWindow {
    pub fn len_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// Non-slip window directly before a slip onset and the slip window
/// starting at it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledWindowPair {
    pub segment_index: usize,
    pub nonslip: TimeWindow,
    pub slip: TimeWindow,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WindowLabels {
    pub pairs: Vec<LabeledWindowPair>,
    /// Segments whose windows did not fit and were dropped.
    pub omitted: usize,
}

const TIME_EPS: f64 = 1e-9;

/// Label `window_s` before each onset as non-slip and `window_s` after it
/// as slip. Pairs that leave the trial, run past the segment's slip end or
/// reach back into the previous segment's slip period are omitted.
pub fn label_windows(trial: &TactileTrial, window_s: f64) -> WindowLabels {
    let duration = trial.duration_s();
    let mut out = WindowLabels::default();
    for (i, seg) in trial.segments.iter().enumerate() {
        let onset = seg.slip_onset_s;
        let nonslip = TimeWindow { start_s: onset - window_s, end_s: onset };
        let slip = TimeWindow { start_s: onset, end_s: onset + window_s };
        let prev_end = if i > 0 { trial.segments[i - 1].slip_end_s } else { 0.0 };
        let fits = window_s > 0.0
            && nonslip.start_s >= prev_end - TIME_EPS
            && slip.end_s <= seg.slip_end_s + TIME_EPS
            && slip.end_s <= duration + TIME_EPS;
        if fits {
            out.pairs.push(LabeledWindowPair { segment_index: i, nonslip, slip });
        } else {
            out.omitted += 1;
        }
    }
    out
}

/// Trial-level split, stratified by [`TactileTrial::case_key`].
///
/// Each stratum contributes `floor(n * train_fraction)` training trials;
/// the remaining fractional parts are summed, rounded, and handed out one
/// extra training trial at a time to strata in a seeded order. Returned
/// index lists are ascending.
pub fn split_indices(keys: &[String], train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut strata: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, k) in keys.iter().enumerate() {
        strata.entry(k.as_str()).or_default().push(i);
    }
    if let Some((k, v)) = strata.iter().find(|(_, v)| v.len() < 2) {
        return Err(Error::Stratification(format!(
            "stratum `{k}` has {} trial(s); at least 2 are required",
            v.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut quota: Vec<usize> = Vec::with_capacity(strata.len());
    let mut remainder_sum = 0.0;
    for members in strata.values() {
        let exact = members.len() as f64 * train_fraction;
        let base = exact.floor();
        remainder_sum += exact - base;
        quota.push(base as usize);
    }
    let mut extra = (remainder_sum + 1e-9).round() as usize;
    let mut order: Vec<usize> = (0..strata.len()).collect();
    order.shuffle(&mut rng);
    for &s in &order {
        if extra == 0 {
            break;
        }
        quota[s] += 1;
        extra -= 1;
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    for (s, members) in strata.values().enumerate() {
        let n_train = quota[s].clamp(1, members.len() - 1);
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        train.extend_from_slice(&shuffled[..n_train]);
        test.extend_from_slice(&shuffled[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Split trials into (train, test) by whole trial. See [`split_indices`].
pub fn split_trials<'a>(
    trials: &'a [TactileTrial],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<&'a TactileTrial>, Vec<&'a TactileTrial>)> {
    let keys: Vec<String> = trials.iter().map(TactileTrial::case_key).collect();
    let (tr, te) = split_indices(&keys, train_fraction, seed)?;
    Ok((tr.iter().map(|&i| &trials[i]).collect(), te.iter().map(|&i| &trials[i]).collect()))
}
