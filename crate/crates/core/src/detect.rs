//! Slip-onset detection from per-bin contact status sequences.

use serde::{Deserialize, Serialize};

use crate::data::ContactStatus;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StatusSequence {
    pub bin_width_s: f64,
    pub bin_start_s: Vec<f64>,
    pub statuses: Vec<ContactStatus>,
    pub scores: Vec<f64>,
}

impl StatusSequence {
    /// Uniformly spaced sequence starting at `t0`.
    pub fn uniform(t0: f64, bin_width_s: f64, statuses: Vec<ContactStatus>, scores: Vec<f64>) -> Result<Self> {
        if statuses.len() != scores.len() {
            return Err(Error::LengthMismatch { expected: statuses.len(), got: scores.len() });
        }
        let bin_start_s = (0..statuses.len()).map(|i| t0 + i as f64 * bin_width_s).collect();
        Ok(StatusSequence { bin_width_s, bin_start_s, statuses, scores })
    }

    pub fn len(&self) -> usize {
        self.statuses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.statuses.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.statuses.len();
        if self.bin_start_s.len() != n || self.scores.len() != n {
            return Err(Error::Validation("status sequence fields differ in length".into()));
        }
        for w in self.bin_start_s.windows(2) {
            let step = w[1] - w[0];
            if !(step > 0.0) || (step - self.bin_width_s).abs() > 1e-9 * self.bin_width_s.max(1.0) {
                return Err(Error::Validation(format!(
                    "bin starts must increase by the bin width {}; found step {step}",
                    self.bin_width_s
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DebounceParams {
    /// Consecutive Slip bins required to confirm an onset.
    pub m: usize,
    /// Consecutive NonSlip bins required right before the Slip run.
    pub p: usize,
}

impl Default for DebounceParams {
    fn default() -> Self {
        DebounceParams { m: 2, p: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlipEvent {
    pub onset_s: f64,
    pub bin_index: usize,
    pub confirm_count: usize,
    pub preceding_nonslip_count: usize,
}

/// Emit an event at the first bin of every maximal run of at least `m`
/// Slip bins that directly follows at least `p` NonSlip bins. A run at
/// the very start of the sequence qualifies only when `p == 0`.
pub fn detect_onsets(seq: &StatusSequence, params: DebounceParams) -> Result<Vec<SlipEvent>> {
    if params.m == 0 {
        return Err(Error::Config("confirmation count m must be at least 1".into()));
    }
    let mut det = OnsetDetector::new(params);
    Ok(seq
        .statuses
        .iter()
        .zip(&seq.bin_start_s)
        .filter_map(|(&s, &t)| det.push(s, t))
        .collect())
}

/// Incremental form of [`detect_onsets`]: feed statuses one bin at a time.
/// An event is reported on the bin that completes its confirmation.
#[derive(Debug, Clone)]
pub struct OnsetDetector {
    params: DebounceParams,
    index: usize,
    nonslip_run: usize,
    /// NonSlip run length in front of the current Slip run.
    armed_with: usize,
    slip_run: usize,
    slip_start: Option<(usize, f64)>,
}

impl OnsetDetector {
    pub fn new(params: DebounceParams) -> Self {
        OnsetDetector { params, index: 0, nonslip_run: 0, armed_with: 0, slip_run: 0, slip_start: None }
    }

    pub fn push(&mut self, status: ContactStatus, bin_start_s: f64) -> Option<SlipEvent> {
        let i = self.index;
        self.index += 1;
        match status {
            ContactStatus::Slip => {
                if self.slip_run == 0 {
                    self.armed_with = self.nonslip_run;
                    // leading runs count as armed only when p == 0
                    self.slip_start = Some((i, bin_start_s));
                }
                self.slip_run += 1;
                self.nonslip_run = 0;
                if self.slip_run == self.params.m && self.armed_with >= self.params.p {
                    let (bin_index, onset_s) = self.slip_start.unwrap_or((i, bin_start_s));
                    return Some(SlipEvent {
                        onset_s,
                        bin_index,
                        confirm_count: self.params.m,
                        preceding_nonslip_count: self.armed_with,
                    });
                }
            }
            ContactStatus::NonSlip => {
                self.nonslip_run += 1;
                self.slip_run = 0;
            }
            ContactStatus::Unlabeled => {
                self.nonslip_run = 0;
                self.slip_run = 0;
            }
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OnsetMatch {
    pub truth_index: usize,
    pub event_index: usize,
    /// Event time minus true onset time.
    pub error_s: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OnsetReport {
    pub matches: Vec<OnsetMatch>,
    /// Indices of unmatched true onsets.
    pub misses: Vec<usize>,
    /// Indices of unmatched events.
    pub false_alarms: Vec<usize>,
}

/// Match events to true onsets within `tol_s`, closest pairs first; each
/// truth and each event is used at most once.
pub fn onset_error(events: &[SlipEvent], truth: &[f64], tol_s: f64) -> OnsetReport {
    let mut pairs = Vec::new();
    for (ti, &t) in truth.iter().enumerate() {
        for (ei, e) in events.iter().enumerate() {
            let d = e.onset_s - t;
            if d.abs() <= tol_s + 1e-12 {
                pairs.push((d.abs(), ti, ei, d));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut truth_used = vec![false; truth.len()];
    let mut event_used = vec![false; events.len()];
    let mut matches = Vec::new();
    for (_, ti, ei, d) in pairs {
        if truth_used[ti] || event_used[ei] {
            continue;
        }
        truth_used[ti] = true;
        event_used[ei] = true;
        matches.push(OnsetMatch { truth_index: ti, event_index: ei, error_s: d });
    }
    matches.sort_by_key(|m| m.truth_index);
    OnsetReport {
        matches,
        misses: (0..truth.len()).filter(|&i| !truth_used[i]).collect(),
        false_alarms: (0..events.len()).filter(|&i| !event_used[i]).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusRun {
    pub status: ContactStatus,
    pub start_bin: usize,
    pub len: usize,
}

pub fn run_length_encode(statuses: &[ContactStatus]) -> Vec<StatusRun> {
    let mut runs: Vec<StatusRun> = Vec::new();
    for (i, &s) in statuses.iter().enumerate() {
        match runs.last_mut() {
            Some(r) if r.status == s => r.len += 1,
            _ => runs.push(StatusRun { status: s, start_bin: i, len: 1 }),
        }
    }
    runs
}
