//! Command-line front end: generation, training, evaluation, detection
//! and feature reports. Every report is JSON and embeds the run
//! configuration plus a hash of its inputs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{save_trial, trial_paths, TactileTrial};
use crate::detect::{onset_error, DebounceParams, OnsetReport};
use crate::error::{Error, Result};
use crate::pipeline::{
    detect_trial, evaluate_indices, feature_stats, hash_bytes, hash_files, split_part, train, write_plot_data,
    write_ranking_csv, CorpusDir, DetectionReport, EvalReport, FeatureStats, RunConfig, SplitPart, TrainedModel,
};
use crate::synth::{corpus_plan, default_materials, derive_seed, gen_cycle, load_registry, save_registry, MaterialParams};

/// Tolerance used when a detected onset is compared with the annotation.
pub const ONSET_TOLERANCE_S: f64 = 0.1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_SCHEMA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_IO: i32 = 5;
pub const EXIT_CONFIG: i32 = 6;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse { .. } | Error::Schema(_) | Error::Version(_) | Error::Json(_) => EXIT_SCHEMA,
        Error::Numeric(_)
        | Error::Training(_)
        | Error::Score(_)
        | Error::Ranking(_)
        | Error::Decomposition(_) => EXIT_NUMERIC,
        Error::Io { .. } => EXIT_IO,
        Error::Config(_)
        | Error::Validation(_)
        | Error::Filter(_)
        | Error::Stratification(_)
        | Error::LengthMismatch { .. } => EXIT_CONFIG,
    }
}

#[derive(Debug, Parser)]
#[command(name = "slipsense", version, about = "Slip detection from multi-channel tactile signals")]
pub struct Cli {
    /// Master seed; overrides both the generator and the split seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for reports and artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus with its material registry and manifest.
    Generate(GenerateArgs),
    /// Fit a model on the training split of a corpus.
    Train(TrainArgs),
    /// Score a frozen model on the labeled bins of a corpus.
    Eval(EvalArgs),
    /// Classify every bin of a trial and report slip onsets.
    Detect(DetectArgs),
    /// Group the selected features of a model.
    FeatureReport(FeatureReportArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// `default`, `unseen`, or a path to a material registry JSON file.
    #[arg(long, default_value = "default")]
    pub materials: String,
    #[arg(long)]
    pub trials_per_case: Option<usize>,
    /// Write this many three-velocity cycle trials instead of a corpus.
    #[arg(long)]
    pub cycles: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Polynomial kernel offset.
    #[arg(long)]
    pub c: Option<f64>,
    /// Polynomial kernel degree.
    #[arg(long)]
    pub d: Option<u32>,
    #[arg(long)]
    pub reg_c: Option<f64>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub bin_width: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    All,
    Train,
    Test,
}

impl From<SplitArg> for SplitPart {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::All => SplitPart::All,
            SplitArg::Train => SplitPart::Train,
            SplitArg::Test => SplitPart::Test,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "all")]
    pub split: SplitArg,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Trial stem, `.meta.json` or `.csv` path.
    #[arg(long)]
    pub trial: PathBuf,
    /// Consecutive Slip bins needed to confirm an onset.
    #[arg(long)]
    pub m: Option<usize>,
    /// Consecutive NonSlip bins needed before the Slip run.
    #[arg(long)]
    pub p: Option<usize>,
    /// Also write per-bin statuses and scores as CSV.
    #[arg(long)]
    pub plot: bool,
}

#[derive(Debug, Args)]
pub struct FeatureReportArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
}

/// Files a command wrote, for the caller to print or inspect.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub written: Vec<PathBuf>,
    pub summary: String,
}

pub fn run(cli: Cli) -> Result<Outcome> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.pipeline.seed = seed;
        config.generator.seed = seed;
    }
    let out = cli.out.clone().or_else(|| config.paths.report_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    match cli.command {
        Command::Generate(a) => cmd_generate(&a, config, &out),
        Command::Train(a) => cmd_train(&a, config, &out),
        Command::Eval(a) => cmd_eval(&a, config, &out),
        Command::Detect(a) => cmd_detect(&a, config, &out),
        Command::FeatureReport(a) => cmd_feature_report(&a, config, &out),
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hash_bytes(&bytes))
}

fn required(flag: Option<&PathBuf>, fallback: Option<&PathBuf>, what: &str) -> Result<PathBuf> {
    flag.or(fallback)
        .cloned()
        .ok_or_else(|| Error::Config(format!("no {what} given; pass the flag or set it in the config file")))
}

fn model_path(flag: Option<&PathBuf>, config: &RunConfig, out: &Path) -> PathBuf {
    flag.or(config.paths.model_path.as_ref()).cloned().unwrap_or_else(|| out.join("model.json"))
}

fn resolve_materials(spec: &str) -> Result<Vec<MaterialParams>> {
    let (training, unseen) = default_materials();
    match spec {
        "default" => Ok(training),
        "unseen" => Ok(unseen),
        path => load_registry(Path::new(path)),
    }
}

#[derive(Debug, Serialize)]
struct ManifestEntry {
    id: String,
    material: String,
    velocities_mm_s: Vec<f64>,
    seed: u64,
    meta_sha256: String,
    csv_sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest {
    config: RunConfig,
    materials: Vec<MaterialParams>,
    cycles: bool,
    trials: Vec<ManifestEntry>,
    corpus_sha256: String,
}

fn cmd_generate(a: &GenerateArgs, mut config: RunConfig, out: &Path) -> Result<Outcome> {
    if let Some(n) = a.trials_per_case {
        config.generator.trials_per_case = n;
    }
    config.generator.validate()?;
    let materials = resolve_materials(&a.materials)?;
    if materials.is_empty() {
        return Err(Error::Config("at least one material is required".into()));
    }
    for m in &materials {
        m.validate(config.generator.sample_rate_hz)?;
    }
    let dir = out.join(crate::pipeline::TRIALS_SUBDIR);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let gen = &config.generator;

    let write = |trial: TactileTrial, seed: u64| -> Result<ManifestEntry> {
        let stem = dir.join(&trial.id);
        save_trial(&trial, &stem)?;
        let (meta, csv) = trial_paths(&stem);
        Ok(ManifestEntry {
            id: trial.id.clone(),
            material: trial.material_id.clone(),
            velocities_mm_s: trial.segments.iter().map(|s| s.velocity_mm_s).collect(),
            seed,
            meta_sha256: sha256_file(&meta)?,
            csv_sha256: sha256_file(&csv)?,
        })
    };
    let trials: Vec<ManifestEntry> = match a.cycles {
        Some(n) => (0..n)
            .into_par_iter()
            .map(|i| {
                let material = &materials[i % materials.len()];
                let seed = derive_seed(gen.seed, i as u64);
                let mut t = gen_cycle(material, gen, seed)?;
                t.id = format!("{}_cycle_{i:03}", material.name);
                write(t, seed)
            })
            .collect::<Result<_>>()?,
        None => corpus_plan(&materials, gen)
            .into_par_iter()
            .map(|p| write(p.generate(&materials, gen)?, p.seed))
            .collect::<Result<_>>()?,
    };

    let registry = out.join("materials.json");
    save_registry(&materials, &registry)?;
    let corpus_sha256 = hash_bytes(
        trials.iter().map(|t| format!("{} {} {}\n", t.id, t.meta_sha256, t.csv_sha256)).collect::<String>().as_bytes(),
    );
    let manifest_path = out.join("manifest.json");
    let n = trials.len();
    let manifest = Manifest { config, materials, cycles: a.cycles.is_some(), trials, corpus_sha256 };
    write_json(&manifest, &manifest_path)?;
    Ok(Outcome {
        written: vec![dir, registry, manifest_path],
        summary: format!("generated {n} trials\ncorpus sha256 {}\n", manifest.corpus_sha256),
    })
}

#[derive(Debug, Serialize)]
struct SolveSummary {
    method: String,
    residual_inf: f64,
}

#[derive(Debug, Serialize)]
struct TrainReport {
    config: RunConfig,
    corpus: PathBuf,
    input_sha256: String,
    model_sha256: String,
    n_trials: usize,
    train_trials: usize,
    test_trials: usize,
    solve: SolveSummary,
    train: EvalReport,
    test: EvalReport,
}

fn metrics_table(title: &str, r: &EvalReport) -> String {
    let mut s = format!("{title}\n  {:<12} {:>8} {:>9} {:>9} {:>7}\n", "material", "accuracy", "nonslip", "slip", "bins");
    let mut line = |name: &str, m: &crate::elm::Metrics| {
        s += &format!(
            "  {:<12} {:>8.4} {:>9.4} {:>9.4} {:>7}\n",
            name, m.accuracy, m.recall_nonslip, m.recall_slip, m.n
        );
    };
    for (k, m) in &r.by_material {
        line(k, m);
    }
    line("all", &r.metrics);
    s
}

fn cmd_train(a: &TrainArgs, mut config: RunConfig, out: &Path) -> Result<Outcome> {
    let p = &mut config.pipeline;
    if let Some(k) = a.k {
        p.k = k;
    }
    if let Some(c) = a.c {
        p.kernel.c = c;
    }
    if let Some(d) = a.d {
        p.kernel.d = d;
    }
    if let Some(r) = a.reg_c {
        p.kernel.reg_c = r;
    }
    if let Some(f) = a.train_fraction {
        p.train_fraction = f;
    }
    if let Some(w) = a.bin_width {
        p.bin_width_s = w;
    }
    p.validate()?;
    let corpus_dir = required(a.corpus.as_ref(), config.paths.corpus_dir.as_ref(), "corpus directory")?;
    let corpus = CorpusDir::open(&corpus_dir)?;
    let input_sha256 = hash_files(&corpus.files())?;
    let outcome = train(&corpus, &config.pipeline)?;

    let model_path = model_path(None, &config, out);
    outcome.model.save(&model_path)?;
    let ranking_path = out.join("ranking.csv");
    let mut w = BufWriter::new(File::create(&ranking_path).map_err(|e| Error::io(&ranking_path, e))?);
    write_ranking_csv(&outcome.ranking, &outcome.model.slots(), &mut w).map_err(|e| Error::io(&ranking_path, e))?;
    w.flush().map_err(|e| Error::io(&ranking_path, e))?;

    let report = TrainReport {
        corpus: corpus_dir,
        input_sha256,
        model_sha256: sha256_file(&model_path)?,
        n_trials: corpus.stems.len(),
        train_trials: outcome.train_indices.len(),
        test_trials: outcome.test_indices.len(),
        solve: SolveSummary {
            method: format!("{:?}", outcome.model.elm.solve_method),
            residual_inf: outcome.model.elm.residual_inf,
        },
        train: outcome.train,
        test: outcome.test,
        config,
    };
    let report_path = out.join("train_report.json");
    write_json(&report, &report_path)?;
    let summary = metrics_table("train", &report.train) + &metrics_table("test", &report.test);
    Ok(Outcome { written: vec![model_path, ranking_path, report_path], summary })
}

#[derive(Debug, Serialize)]
struct EvalFileReport {
    config: RunConfig,
    model: PathBuf,
    corpus: PathBuf,
    model_sha256: String,
    input_sha256: String,
    split: SplitPart,
    n_trials: usize,
    report: EvalReport,
}

fn cmd_eval(a: &EvalArgs, config: RunConfig, out: &Path) -> Result<Outcome> {
    let model_file = model_path(a.model.as_ref(), &config, out);
    let model = TrainedModel::load(&model_file)?;
    let corpus_dir = required(a.corpus.as_ref(), config.paths.corpus_dir.as_ref(), "corpus directory")?;
    let corpus = CorpusDir::open(&corpus_dir)?;
    let split: SplitPart = a.split.into();
    let indices = split_part(&model, &corpus, split)?;
    let files: Vec<PathBuf> = indices
        .iter()
        .flat_map(|&i| {
            let (m, c) = trial_paths(&corpus.stems[i]);
            [m, c]
        })
        .collect();
    let report = evaluate_indices(&model, &corpus, &indices)?;
    let file_report = EvalFileReport {
        config,
        model_sha256: sha256_file(&model_file)?,
        input_sha256: hash_files(&files)?,
        model: model_file,
        corpus: corpus_dir,
        split,
        n_trials: indices.len(),
        report,
    };
    let path = out.join("eval_report.json");
    write_json(&file_report, &path)?;
    Ok(Outcome { written: vec![path], summary: metrics_table("eval", &file_report.report) })
}

#[derive(Debug, Serialize)]
struct DetectFileReport {
    config: RunConfig,
    model_sha256: String,
    input_sha256: String,
    detection: DetectionReport,
    truth_onsets_s: Vec<f64>,
    tolerance_s: f64,
    onset_match: OnsetReport,
}

fn cmd_detect(a: &DetectArgs, mut config: RunConfig, out: &Path) -> Result<Outcome> {
    if let Some(m) = a.m {
        config.pipeline.debounce.m = m;
    }
    if let Some(p) = a.p {
        config.pipeline.debounce.p = p;
    }
    let debounce: DebounceParams = config.pipeline.debounce;
    let model_file = model_path(a.model.as_ref(), &config, out);
    let model = TrainedModel::load(&model_file)?;
    let trial = crate::data::load_trial(&a.trial)?;
    let (meta, csv) = trial_paths(&a.trial);
    let det = detect_trial(&model, &trial, debounce)?;

    let mut written = Vec::new();
    if a.plot {
        let path = out.join(format!("{}.plot.csv", trial.id));
        let mut w = BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
        write_plot_data(&det.sequence, &mut w).map_err(|e| Error::io(&path, e))?;
        w.flush().map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    let truth: Vec<f64> = trial.segments.iter().map(|s| s.slip_onset_s).collect();
    let report = DetectFileReport {
        config,
        model_sha256: sha256_file(&model_file)?,
        input_sha256: hash_files(&[meta, csv])?,
        onset_match: onset_error(&det.events, &truth, ONSET_TOLERANCE_S),
        truth_onsets_s: truth,
        tolerance_s: ONSET_TOLERANCE_S,
        detection: det.report,
    };
    let path = out.join(format!("{}.detect.json", trial.id));
    write_json(&report, &path)?;
    written.insert(0, path);

    let mut summary = format!("{}: {} bins, {} events\n", trial.id, report.detection.n_bins, report.detection.events.len());
    for e in &report.detection.events {
        summary += &format!("  onset {:.2} s (bin {})\n", e.onset_s, e.bin_index);
    }
    if !report.truth_onsets_s.is_empty() {
        summary += &format!(
            "  matched {}/{} annotated onsets, {} false alarms\n",
            report.onset_match.matches.len(),
            report.truth_onsets_s.len(),
            report.onset_match.false_alarms.len()
        );
    }
    Ok(Outcome { written, summary })
}

#[derive(Debug, Serialize)]
struct SelectedFeature {
    rank: usize,
    slot: usize,
    name: String,
    t: f64,
}

#[derive(Debug, Serialize)]
struct FeatureFileReport {
    config: RunConfig,
    model_sha256: String,
    stats: FeatureStats,
    selected: Vec<SelectedFeature>,
}

fn cmd_feature_report(a: &FeatureReportArgs, mut config: RunConfig, out: &Path) -> Result<Outcome> {
    let model_file = model_path(a.model.as_ref(), &config, out);
    let model = TrainedModel::load(&model_file)?;
    config.pipeline = model.params.clone();
    let stats = feature_stats(&model.slots(), &model.selected);
    if !stats.pvdf_at_least_sg {
        eprintln!("note: fewer PVDF than SG features were selected");
    }
    let selected = model
        .selected
        .iter()
        .enumerate()
        .map(|(r, &slot)| SelectedFeature {
            rank: r + 1,
            slot,
            name: model.selected_names[r].clone(),
            t: model.selected_t[r],
        })
        .collect();
    let report = FeatureFileReport { config, model_sha256: sha256_file(&model_file)?, stats, selected };
    let path = out.join("feature_report.json");
    write_json(&report, &path)?;

    let s = &report.stats;
    let mut summary = format!("{} selected features\n", s.k);
    for (axis, group) in [
        ("sensor", &s.by_se_kind),
        ("band", &s.by_band),
        ("finger", &s.by_finger),
        ("feature", &s.by_feature),
    ] {
        summary += &format!("{axis}\n");
        for (k, n) in group {
            summary += &format!("  {k:<24} {n:>4}\n");
        }
    }
    Ok(Outcome { written: vec![path], summary })
}
