//! End-to-end training, evaluation and stream detection over trial corpora.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{
    label_windows, read_meta, split_indices, ChannelMeta, ContactStatus, SeKind, TactileTrial, TrialMeta,
    FORMAT_VERSION,
};
use crate::detect::{detect_onsets, run_length_encode, DebounceParams, SlipEvent, StatusRun, StatusSequence};
use crate::elm::{decide, elm_train, target, KernelElm, KernelParams, Metrics};
use crate::error::{Error, Result};
use crate::features::{slot_map, FeatureExtractor, FeatureMatrix, FeatureSlot};
use crate::preprocess::{bin_stream, bin_windows, preprocess_trial, Bin, FilterSpec};
use crate::selection::{fit_standardizer, rank_features, FeatureRanking, Standardizer, DEFAULT_K};
use crate::spectral::Wavelet;
use crate::synth::{GenConfig, MaterialParams, PlannedTrial};

/// Every tunable of the processing chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineParams {
    pub bin_width_s: f64,
    /// Length of the labeled non-slip and slip windows around each onset.
    pub window_s: f64,
    pub pvdf_filter: FilterSpec,
    pub sg_filter: FilterSpec,
    pub wavelet: Wavelet,
    pub k: usize,
    pub kernel: KernelParams,
    pub train_fraction: f64,
    pub seed: u64,
    pub debounce: DebounceParams,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            bin_width_s: 0.05,
            window_s: 0.5,
            pvdf_filter: FilterSpec::PVDF_DEFAULT,
            sg_filter: FilterSpec::SG_DEFAULT,
            wavelet: Wavelet::default(),
            k: DEFAULT_K,
            kernel: KernelParams::default(),
            train_fraction: 0.8,
            seed: 7,
            debounce: DebounceParams::default(),
        }
    }
}

impl PipelineParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.bin_width_s > 0.0 && self.bin_width_s.is_finite()) {
            return Err(Error::Config(format!("bin width must be positive, got {}", self.bin_width_s)));
        }
        if !(self.window_s > 0.0 && self.window_s.is_finite()) {
            return Err(Error::Config(format!("window length must be positive, got {}", self.window_s)));
        }
        self.pvdf_filter.validate()?;
        self.sg_filter.validate()?;
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        self.kernel.validate()?;
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!("train fraction must lie in (0, 1), got {}", self.train_fraction)));
        }
        if self.debounce.m == 0 {
            return Err(Error::Config("debounce m must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunPaths {
    pub corpus_dir: Option<PathBuf>,
    pub model_path: Option<PathBuf>,
    pub report_dir: Option<PathBuf>,
}

/// Full configuration of a command run; embedded in every report.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub paths: RunPaths,
    pub pipeline: PipelineParams,
    pub generator: GenConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.into(),
            line: e.line(),
            field: "config".into(),
            msg: e.to_string(),
        })
    }
}

/// Indexed access to the trials of a corpus.
pub trait TrialSource: Sync {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Split stratum of trial `i`.
    fn case_key(&self, i: usize) -> String;
    fn material(&self, i: usize) -> String;
    fn channels(&self, i: usize) -> &[ChannelMeta];
    fn load(&self, i: usize) -> Result<TactileTrial>;
}

impl TrialSource for [TactileTrial] {
    fn len(&self) -> usize {
        <[TactileTrial]>::len(self)
    }
    fn case_key(&self, i: usize) -> String {
        self[i].case_key()
    }
    fn material(&self, i: usize) -> String {
        self[i].material_id.clone()
    }
    fn channels(&self, i: usize) -> &[ChannelMeta] {
        &self[i].channels
    }
    fn load(&self, i: usize) -> Result<TactileTrial> {
        Ok(self[i].clone())
    }
}

/// A directory of `<stem>.meta.json` + `<stem>.csv` pairs. Only metadata
/// is read up front; samples are loaded on demand.
#[derive(Debug, Clone)]
pub struct CorpusDir {
    pub stems: Vec<PathBuf>,
    pub metas: Vec<TrialMeta>,
}

pub const TRIALS_SUBDIR: &str = "trials";

impl CorpusDir {
    /// Scan `dir` (or its `trials/` subdirectory when present) for trial
    /// metadata files, in file-name order.
    pub fn open(dir: &Path) -> Result<Self> {
        let sub = dir.join(TRIALS_SUBDIR);
        let root = if sub.is_dir() { sub } else { dir.to_path_buf() };
        let entries = std::fs::read_dir(&root).map_err(|e| Error::io(&root, e))?;
        let mut stems = Vec::new();
        for e in entries {
            let e = e.map_err(|e| Error::io(&root, e))?;
            let name = e.file_name().to_string_lossy().into_owned();
            if let Some(stem) = name.strip_suffix(".meta.json") {
                stems.push(root.join(stem));
            }
        }
        if stems.is_empty() {
            return Err(Error::Validation(format!("no trials found in {}", root.display())));
        }
        stems.sort();
        let metas = stems.iter().map(|s| read_meta(s)).collect::<Result<_>>()?;
        Ok(CorpusDir { stems, metas })
    }

    /// Every file backing the corpus, in a fixed order.
    pub fn files(&self) -> Vec<PathBuf> {
        self.stems
            .iter()
            .flat_map(|s| {
                let (m, c) = crate::data::trial_paths(s);
                [m, c]
            })
            .collect()
    }
}

impl TrialSource for CorpusDir {
    fn len(&self) -> usize {
        self.stems.len()
    }
    fn case_key(&self, i: usize) -> String {
        self.metas[i].case_key()
    }
    fn material(&self, i: usize) -> String {
        self.metas[i].material_id.clone()
    }
    fn channels(&self, i: usize) -> &[ChannelMeta] {
        &self.metas[i].channels
    }
    fn load(&self, i: usize) -> Result<TactileTrial> {
        crate::data::load_trial(&self.stems[i])
    }
}

/// A generated corpus whose trials are synthesized on demand.
pub struct SyntheticCorpus {
    pub materials: Vec<MaterialParams>,
    pub config: GenConfig,
    pub plan: Vec<PlannedTrial>,
    layout: Vec<ChannelMeta>,
}

impl SyntheticCorpus {
    pub fn new(materials: Vec<MaterialParams>, config: GenConfig) -> Result<Self> {
        config.validate()?;
        for m in &materials {
            m.validate(config.sample_rate_hz)?;
        }
        let plan = crate::synth::corpus_plan(&materials, &config);
        Ok(SyntheticCorpus { materials, config, plan, layout: crate::data::standard_layout() })
    }
}

impl TrialSource for SyntheticCorpus {
    fn len(&self) -> usize {
        self.plan.len()
    }
    fn case_key(&self, i: usize) -> String {
        let p = &self.plan[i];
        format!("{}@{}", self.materials[p.material_index].name, p.velocity_mm_s)
    }
    fn material(&self, i: usize) -> String {
        self.materials[self.plan[i].material_index].name.clone()
    }
    fn channels(&self, _i: usize) -> &[ChannelMeta] {
        &self.layout
    }
    fn load(&self, i: usize) -> Result<TactileTrial> {
        self.plan[i].generate(&self.materials, &self.config)
    }
}

/// Smoothed, labeled bins of one trial.
pub fn labeled_bins(trial: &TactileTrial, params: &PipelineParams) -> Result<Vec<Bin>> {
    let smooth = preprocess_trial(trial, params.pvdf_filter, params.sg_filter)?;
    let labels = label_windows(&smooth, params.window_s);
    bin_windows(&smooth, &labels.pairs, params.bin_width_s)
}

/// Feature rows of the labeled bins of the given trials, in trial order.
/// `map_row` turns each full pool row into the stored row.
fn labeled_rows<S: TrialSource + ?Sized>(
    source: &S,
    indices: &[usize],
    params: &PipelineParams,
    extractor: &FeatureExtractor,
    map_row: &(dyn Fn(Vec<f64>) -> Vec<f64> + Sync),
) -> Result<(Vec<Vec<f64>>, Vec<ContactStatus>, Vec<usize>)> {
    let per_trial: Vec<(Vec<Vec<f64>>, Vec<ContactStatus>)> = indices
        .par_iter()
        .map(|&i| {
            let trial = source.load(i)?;
            let bins = labeled_bins(&trial, params)?;
            let mut rows = Vec::with_capacity(bins.len());
            for b in &bins {
                rows.push(map_row(extractor.assemble(b)?));
            }
            Ok((rows, bins.iter().map(|b| b.label).collect()))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut owner = Vec::new();
    for (&i, (r, l)) in indices.iter().zip(per_trial) {
        owner.extend(std::iter::repeat(i).take(r.len()));
        rows.extend(r);
        labels.extend(l);
    }
    Ok((rows, labels, owner))
}

/// Everything needed to classify bins of a compatible trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub params: PipelineParams,
    pub channels: Vec<ChannelMeta>,
    pub pool_size: usize,
    pub selected: Vec<usize>,
    pub selected_names: Vec<String>,
    pub selected_t: Vec<f64>,
    pub standardizer: Standardizer,
    pub elm: KernelElm,
}

impl TrainedModel {
    pub fn extractor(&self) -> FeatureExtractor {
        FeatureExtractor::new(&self.channels, self.params.wavelet)
    }

    pub fn slots(&self) -> Vec<FeatureSlot> {
        slot_map(&self.channels)
    }

    pub fn check_layout(&self, channels: &[ChannelMeta]) -> Result<()> {
        if channels != self.channels.as_slice() {
            return Err(Error::Version(format!(
                "channel layout ({} channels) does not match the model's ({} channels)",
                channels.len(),
                self.channels.len()
            )));
        }
        Ok(())
    }

    /// Standardized selected features of a full pool row.
    pub fn transform(&self, full_row: &[f64]) -> Vec<f64> {
        self.standardizer.transform_row(full_row, &self.selected)
    }

    pub fn score_bin(&self, extractor: &FeatureExtractor, bin: &Bin) -> Result<f64> {
        let row = extractor.assemble(bin)?;
        self.elm.score(&self.transform(&row))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value = serde_json::from_reader(BufReader::new(file))?;
        let version = value.get("format_version").and_then(|v| v.as_u64());
        if version != Some(FORMAT_VERSION as u64) {
            return Err(Error::Version(format!(
                "{}: model format_version {version:?} is not {FORMAT_VERSION}",
                path.display()
            )));
        }
        Ok(serde_json::from_value(value)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: Metrics,
    pub by_material: BTreeMap<String, Metrics>,
}

fn eval_report(
    scores: &[f64],
    labels: &[ContactStatus],
    owner: &[usize],
    material: impl Fn(usize) -> String,
) -> Result<EvalReport> {
    let predicted: Vec<ContactStatus> = scores.iter().map(|&s| decide(s)).collect();
    let metrics = Metrics::from_predictions(labels, &predicted)?;
    let mut groups: BTreeMap<String, (Vec<ContactStatus>, Vec<ContactStatus>)> = BTreeMap::new();
    for ((&t, &p), &o) in labels.iter().zip(&predicted).zip(owner) {
        let g = groups.entry(material(o)).or_default();
        g.0.push(t);
        g.1.push(p);
    }
    let by_material = groups
        .into_iter()
        .map(|(k, (t, p))| Ok((k, Metrics::from_predictions(&t, &p)?)))
        .collect::<Result<_>>()?;
    Ok(EvalReport { metrics, by_material })
}

pub struct TrainOutcome {
    pub model: TrainedModel,
    pub ranking: FeatureRanking,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub train: EvalReport,
    pub test: EvalReport,
}

/// Split, extract, rank, standardize and fit; then score both splits.
pub fn train<S: TrialSource + ?Sized>(source: &S, params: &PipelineParams) -> Result<TrainOutcome> {
    params.validate()?;
    if source.is_empty() {
        return Err(Error::Validation("corpus is empty".into()));
    }
    let channels = source.channels(0).to_vec();
    for i in 0..source.len() {
        if source.channels(i) != channels.as_slice() {
            return Err(Error::Schema(format!("trial {i} uses a different channel layout")));
        }
    }
    let keys: Vec<String> = (0..source.len()).map(|i| source.case_key(i)).collect();
    let (train_idx, test_idx) = split_indices(&keys, params.train_fraction, params.seed)?;

    let extractor = FeatureExtractor::new(&channels, params.wavelet);
    let (rows, labels, owner) = labeled_rows(source, &train_idx, params, &extractor, &|r| r)?;
    let matrix = FeatureMatrix::from_rows(rows, labels)?;
    let ranking = rank_features(&matrix, params.k)?;
    let selected = ranking.selected().to_vec();
    let standardizer = fit_standardizer(&matrix, &selected)?;
    let train_rows: Vec<Vec<f64>> =
        (0..matrix.n_rows()).map(|i| standardizer.transform_row(matrix.row(i), &selected)).collect();
    let labels = matrix.labels.clone();
    drop(matrix);
    let targets: Vec<f64> = labels.iter().map(|&l| target(l).unwrap_or(0.0)).collect();
    let elm = elm_train(&train_rows, &targets, params.kernel)?;
    drop(train_rows);

    let slots = slot_map(&channels);
    let model = TrainedModel {
        format_version: FORMAT_VERSION,
        params: params.clone(),
        pool_size: slots.len(),
        selected_names: selected.iter().map(|&j| slots[j].name()).collect(),
        selected_t: selected.iter().map(|&j| ranking.t_scores[j]).collect(),
        selected,
        standardizer,
        elm,
        channels,
    };

    let train_scores = score_rows(&model.elm, &model.elm.train_rows)?;
    let train = eval_report(&train_scores, &labels, &owner, |i| source.material(i))?;
    let test = evaluate_indices(&model, source, &test_idx)?;
    Ok(TrainOutcome { model, ranking, train_indices: train_idx, test_indices: test_idx, train, test })
}

fn score_rows(elm: &KernelElm, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    rows.par_iter().map(|r| elm.score(r)).collect()
}

/// Metrics of a frozen model on the labeled bins of the given trials.
pub fn evaluate_indices<S: TrialSource + ?Sized>(
    model: &TrainedModel,
    source: &S,
    indices: &[usize],
) -> Result<EvalReport> {
    for &i in indices {
        model.check_layout(source.channels(i))?;
    }
    let extractor = model.extractor();
    let (rows, labels, owner) =
        labeled_rows(source, indices, &model.params, &extractor, &|r| model.transform(&r))?;
    let scores = score_rows(&model.elm, &rows)?;
    eval_report(&scores, &labels, &owner, |i| source.material(i))
}

pub fn evaluate<S: TrialSource + ?Sized>(model: &TrainedModel, source: &S) -> Result<EvalReport> {
    let all: Vec<usize> = (0..source.len()).collect();
    evaluate_indices(model, source, &all)
}

/// Which trials of a corpus an evaluation covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitPart {
    All,
    Train,
    Test,
}

/// Trial indices of `part`, recomputing the model's training split.
pub fn split_part<S: TrialSource + ?Sized>(model: &TrainedModel, source: &S, part: SplitPart) -> Result<Vec<usize>> {
    if part == SplitPart::All {
        return Ok((0..source.len()).collect());
    }
    let keys: Vec<String> = (0..source.len()).map(|i| source.case_key(i)).collect();
    let (tr, te) = split_indices(&keys, model.params.train_fraction, model.params.seed)?;
    Ok(if part == SplitPart::Train { tr } else { te })
}

/// Score every bin of a preprocessed stream.
pub fn classify_stream(model: &TrainedModel, bins: &[Bin]) -> Result<StatusSequence> {
    let width = bins.first().map_or(model.params.bin_width_s, |b| b.width_s);
    if bins.iter().any(|b| (b.width_s - width).abs() > 1e-12) {
        return Err(Error::Validation("stream bins must share one width".into()));
    }
    let extractor = model.extractor();
    let scores: Vec<f64> = bins.par_iter().map(|b| model.score_bin(&extractor, b)).collect::<Result<_>>()?;
    let seq = StatusSequence {
        bin_width_s: width,
        bin_start_s: bins.iter().map(|b| b.start_s).collect(),
        statuses: scores.iter().map(|&s| decide(s)).collect(),
        scores,
    };
    seq.validate()?;
    Ok(seq)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionParams {
    pub m: usize,
    pub p: usize,
    pub bin_width_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub onset_s: f64,
    pub bin_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub trial_id: String,
    pub n_bins: usize,
    pub events: Vec<EventRecord>,
    pub statuses: Vec<StatusRun>,
    pub params: DetectionParams,
    /// The stream starts inside a Slip run, which never yields an event
    /// while `p >= 1`.
    pub ongoing_slip_at_start: bool,
}

pub struct Detection {
    pub sequence: StatusSequence,
    pub events: Vec<SlipEvent>,
    pub report: DetectionReport,
}

/// Preprocess, bin, classify and debounce a whole trial.
pub fn detect_trial(model: &TrainedModel, trial: &TactileTrial, debounce: DebounceParams) -> Result<Detection> {
    model.check_layout(&trial.channels)?;
    let p = &model.params;
    let smooth = preprocess_trial(trial, p.pvdf_filter, p.sg_filter)?;
    let bins = bin_stream(&smooth, p.bin_width_s)?;
    let sequence = classify_stream(model, &bins)?;
    let events = detect_onsets(&sequence, debounce)?;
    let report = DetectionReport {
        trial_id: trial.id.clone(),
        n_bins: sequence.len(),
        events: events.iter().map(|e| EventRecord { onset_s: e.onset_s, bin_index: e.bin_index }).collect(),
        statuses: run_length_encode(&sequence.statuses),
        params: DetectionParams { m: debounce.m, p: debounce.p, bin_width_s: sequence.bin_width_s },
        ongoing_slip_at_start: sequence.statuses.first() == Some(&ContactStatus::Slip),
    };
    Ok(Detection { sequence, events, report })
}

/// Per-bin status and score as CSV for external plotting.
pub fn write_plot_data(seq: &StatusSequence, w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "bin,start_s,status,score")?;
    for (i, ((t, s), f)) in seq.bin_start_s.iter().zip(&seq.statuses).zip(&seq.scores).enumerate() {
        writeln!(w, "{i},{t},{s},{f}")?;
    }
    Ok(())
}

/// Ranking of the whole pool: rank, slot, name, t, |t|.
pub fn write_ranking_csv(ranking: &FeatureRanking, slots: &[FeatureSlot], w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "rank,slot,name,t,abs_t")?;
    for (r, &j) in ranking.order.iter().enumerate() {
        let t = ranking.t_scores[j];
        writeln!(w, "{},{},{},{},{}", r + 1, j, slots[j].name(), t, t.abs())?;
    }
    Ok(())
}

/// Counts of selected slots along the four grouping axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub k: usize,
    pub by_se_kind: BTreeMap<String, usize>,
    pub by_band: BTreeMap<String, usize>,
    pub by_finger: BTreeMap<String, usize>,
    pub by_feature: BTreeMap<String, usize>,
    pub pvdf_at_least_sg: bool,
}

pub fn feature_stats(slots: &[FeatureSlot], selected: &[usize]) -> FeatureStats {
    let mut s = FeatureStats {
        k: selected.len(),
        by_se_kind: BTreeMap::new(),
        by_band: BTreeMap::new(),
        by_finger: BTreeMap::new(),
        by_feature: BTreeMap::new(),
        pvdf_at_least_sg: false,
    };
    for &j in selected {
        let slot = &slots[j];
        *s.by_se_kind.entry(slot.se_kind.to_string()).or_default() += 1;
        *s.by_band.entry(slot.band.to_string()).or_default() += 1;
        *s.by_finger.entry(slot.finger.as_str().to_string()).or_default() += 1;
        *s.by_feature.entry(slot.feature_name.to_string()).or_default() += 1;
    }
    let count = |k: SeKind| s.by_se_kind.get(k.as_str()).copied().unwrap_or(0);
    s.pvdf_at_least_sg = count(SeKind::PVDF) >= count(SeKind::SG);
    s
}

/// SHA-256 over the given files, each prefixed by its length.
pub fn hash_files(paths: &[PathBuf]) -> Result<String> {
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    for p in paths {
        let len = std::fs::metadata(p).map_err(|e| Error::io(p, e))?.len();
        h.update(len.to_le_bytes());
        let mut f = File::open(p).map_err(|e| Error::io(p, e))?;
        loop {
            let n = f.read(&mut buf).map_err(|e| Error::io(p, e))?;
            if n == 0 {
                break;
            }
            h.update(&buf[..n]);
        }
    }
    Ok(hex(&h.finalize()))
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
