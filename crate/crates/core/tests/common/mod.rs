#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use igap_core::data::{CheckpointEval, CheckpointPool, EvalSet, ExampleLabel, PredictionRecord, Role};
use rand::Rng;

pub fn golden_manifest() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden/manifest.json")
}

pub fn golden_expected(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden_expected").join(name)
}

/// Copies the golden fixture into a fresh temp dir so a test may edit it.
pub fn golden_copy() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let src = golden_manifest();
    copy_tree(src.parent().unwrap(), dir.path());
    let manifest = dir.path().join("manifest.json");
    (dir, manifest)
}

fn copy_tree(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let dest = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_tree(&entry.path(), &dest);
        } else {
            std::fs::copy(entry.path(), dest).unwrap();
        }
    }
}

pub fn edit_manifest(path: &Path, f: impl FnOnce(&mut serde_json::Value)) {
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    f(&mut v);
    std::fs::write(path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
}

pub fn labels(ids_and_labels: &[(String, u32)]) -> Vec<ExampleLabel> {
    ids_and_labels
        .iter()
        .map(|(id, l)| ExampleLabel { example_id: id.clone(), label: *l })
        .collect()
}

pub fn eval_set(id: &str, language: &str, role: Role, k: u32, labels: Vec<ExampleLabel>) -> EvalSet {
    EvalSet {
        eval_set_id: id.into(),
        language: language.into(),
        role,
        num_labels: k,
        labels,
        translation_of: None,
    }
}

pub fn predictions_with_errors<R: Rng>(set: &EvalSet, error_rate: f64, rng: &mut R) -> Vec<PredictionRecord> {
    let k = set.num_labels;
    set.labels
        .iter()
        .map(|l| {
            let predicted_label = if rng.random_bool(error_rate) {
                (l.label + rng.random_range(1..k)) % k
            } else {
                l.label
            };
            PredictionRecord { example_id: l.example_id.clone(), predicted_label }
        })
        .collect()
}

/// A one-direction pool (`en` -> `de`) with random labels and predictions
/// whose error rates are drawn per checkpoint.
pub fn random_pool<R: Rng>(rng: &mut R, n_train: usize, n_val: usize, k: u32, n_checkpoints: usize) -> CheckpointPool {
    let train: Vec<(String, u32)> = (0..n_train).map(|i| (format!("t{i:04}"), rng.random_range(0..k))).collect();
    let val: Vec<(String, u32)> = (0..n_val).map(|i| (format!("v{i:04}"), rng.random_range(0..k))).collect();
    let src = eval_set("en-train", "en", Role::SourceTrain, k, labels(&train));
    let mut tr = eval_set("de-train", "de", Role::TranslatedTrain, k, labels(&train));
    tr.translation_of = Some("en-train".into());
    let tv = eval_set("de-val", "de", Role::TargetVal, k, labels(&val));
    let checkpoints = (0..n_checkpoints)
        .map(|c| {
            let p: f64 = rng.random_range(0.0..0.3);
            let mut predictions = BTreeMap::new();
            predictions.insert("en-train".to_string(), predictions_with_errors(&src, p, rng));
            predictions.insert("de-train".to_string(), predictions_with_errors(&tr, rng.random_range(p..0.6), rng));
            predictions.insert("de-val".to_string(), predictions_with_errors(&tv, rng.random_range(0.0..0.8), rng));
            CheckpointEval {
                checkpoint_id: format!("c{c:03}"),
                seed: (c % 3) as i64,
                step: (c / 3) as u64 * 10,
                predictions,
            }
        })
        .collect();
    let mut pool = CheckpointPool {
        pool_id: "random".into(),
        model_name: "m".into(),
        algorithm_name: "a".into(),
        num_labels: k,
        label_map: BTreeMap::new(),
        eval_sets: vec![src, tr, tv],
        checkpoints,
    };
    pool.canonicalize();
    pool
}
