use std::collections::BTreeMap;

use slipsense::data::{label_windows, load_trial, save_trial, split_indices, trial_paths};
use slipsense::error::Error;
use slipsense::preprocess::{bin_windows, preprocess_trial, FilterSpec};
use slipsense::synth::{default_materials, gen_cycle, gen_trial, GenConfig};

fn small_config() -> GenConfig {
    GenConfig { hold_s: (1.0, 1.0), ..GenConfig::default() }
}

#[test]
fn trial_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let (training, _) = default_materials();
    let mut trial = gen_trial(&training[2], 60.0, &small_config(), 17).unwrap();
    trial.id = "roundtrip".into();
    let stem = dir.path().join("roundtrip");
    save_trial(&trial, &stem).unwrap();
    let back = load_trial(&stem.with_extension("csv")).unwrap();
    assert_eq!(back, trial);
}

fn saved_cycle(dir: &std::path::Path) -> std::path::PathBuf {
    let (training, _) = default_materials();
    let trial = gen_cycle(&training[0], &small_config(), 3).unwrap();
    let stem = dir.join("cycle");
    save_trial(&trial, &stem).unwrap();
    stem
}

#[test]
fn missing_channel_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let stem = saved_cycle(dir.path());
    let (meta, _) = trial_paths(&stem);
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&meta).unwrap()).unwrap();
    v["channels"].as_array_mut().unwrap().pop();
    std::fs::write(&meta, v.to_string()).unwrap();
    assert!(matches!(load_trial(&stem), Err(Error::Schema(_))));
}

#[test]
fn unknown_format_version_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let stem = saved_cycle(dir.path());
    let (meta, _) = trial_paths(&stem);
    let text = std::fs::read_to_string(&meta).unwrap().replace("\"format_version\": 1", "\"format_version\": 2");
    std::fs::write(&meta, text).unwrap();
    assert!(matches!(load_trial(&stem), Err(Error::Version(_))));
}

#[test]
fn bad_sample_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let stem = saved_cycle(dir.path());
    let (_, csv) = trial_paths(&stem);
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[4] = lines[4].replacen(',', ",oops", 1);
    std::fs::write(&csv, lines.join("\n") + "\n").unwrap();
    match load_trial(&stem) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn cycle_windows_give_sixty_bins() {
    let (training, _) = default_materials();
    let trial = gen_cycle(&training[1], &small_config(), 9).unwrap();
    let labels = label_windows(&trial, 0.5);
    assert_eq!(labels.pairs.len(), 3);
    let smooth = preprocess_trial(&trial, FilterSpec::PVDF_DEFAULT, FilterSpec::SG_DEFAULT).unwrap();
    let bins = bin_windows(&smooth, &labels.pairs, 0.05).unwrap();
    assert_eq!(bins.len(), 60);
    assert!(bins.iter().all(|b| b.bin_len() == 100));
}

#[test]
fn split_is_stratified_and_seeded() {
    let keys: Vec<String> = (0..18).flat_map(|c| (0..28).map(move |_| format!("case{c}"))).collect();
    let (train, test) = split_indices(&keys, 0.8, 7).unwrap();
    assert_eq!(train.len() + test.len(), keys.len());
    let mut per_case: BTreeMap<&str, usize> = BTreeMap::new();
    for &i in &train {
        *per_case.entry(keys[i].as_str()).or_default() += 1;
    }
    assert!(per_case.values().all(|&n| n == 22 || n == 23));
    assert_eq!(split_indices(&keys, 0.8, 7).unwrap(), (train.clone(), test));
    assert_ne!(split_indices(&keys, 0.8, 8).unwrap().0, train);
}
