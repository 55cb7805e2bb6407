use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::validate::{validate_pool, IssueKind};
use super::{CheckpointEval, CheckpointPool, EvalSet, ExampleLabel, PredictionRecord, Role};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    pool_id: String,
    model_name: String,
    algorithm_name: String,
    num_labels: u32,
    #[serde(default)]
    label_map: BTreeMap<String, u32>,
    eval_sets: Vec<ManifestEvalSet>,
    checkpoints: Vec<ManifestCheckpoint>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEvalSet {
    eval_set_id: String,
    language: String,
    role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    translation_of: Option<String>,
    labels_path: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestCheckpoint {
    checkpoint_id: String,
    seed: i64,
    step: u64,
    predictions: BTreeMap<String, String>,
}

/// A class label as written on disk: either the dense index or a name
/// resolved through the manifest's label map.
#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum RawLabel {
    Index(u64),
    Name(String),
}

#[derive(Debug, Deserialize)]
struct LabelLine {
    example_id: String,
    label: RawLabel,
}

#[derive(Debug, Deserialize)]
struct PredictionLine {
    example_id: String,
    predicted_label: RawLabel,
}

fn resolve_label(raw: RawLabel, label_map: &BTreeMap<String, u32>, location: &str) -> Result<u32> {
    match raw {
        RawLabel::Index(i) => u32::try_from(i)
            .map_err(|_| Error::schema(location, format!("label {i} does not fit a class index"))),
        RawLabel::Name(name) => label_map
            .get(&name)
            .copied()
            .ok_or_else(|| Error::schema(location, format!("unknown label name '{name}'"))),
    }
}

/// Reads a JSONL file into typed records. Blank lines are skipped; any
/// malformed line is a schema error carrying `path:line`.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile {
            path: path.to_path_buf(),
        },
        _ => Error::io(format!("opening {}", path.display()), e),
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| Error::schema(format!("{}:{}", path.display(), i + 1), e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

/// Writes `bytes` to `path` through a temp file in the same directory and a
/// rename, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| Error::io(format!("creating temp file in {}", dir.display()), e))?;
    tmp.write_all(bytes)
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    tmp.persist(path)
        .map_err(|e| Error::io(format!("renaming into {}", path.display()), e.error))?;
    Ok(())
}

/// Serializes records one per line.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut buf = BufWriter::new(Vec::new());
    for r in records {
        serde_json::to_writer(&mut buf, r).expect("record serialization is infallible");
        buf.write_all(b"\n").expect("in-memory write");
    }
    write_atomic(path, &buf.into_inner().expect("in-memory buffer"))
}

/// Writes integer labels in canonical (example_id) order.
pub fn write_labels(path: &Path, labels: &[ExampleLabel]) -> Result<()> {
    write_jsonl(path, labels)
}

fn read_labels(path: &Path, label_map: &BTreeMap<String, u32>) -> Result<Vec<ExampleLabel>> {
    let lines: Vec<LabelLine> = read_jsonl(path)?;
    let loc = path.display().to_string();
    lines
        .into_iter()
        .map(|l| {
            Ok(ExampleLabel {
                example_id: l.example_id,
                label: resolve_label(l.label, label_map, &loc)?,
            })
        })
        .collect()
}

fn read_predictions(path: &Path, label_map: &BTreeMap<String, u32>) -> Result<Vec<PredictionRecord>> {
    let lines: Vec<PredictionLine> = read_jsonl(path)?;
    let loc = path.display().to_string();
    lines
        .into_iter()
        .map(|l| {
            Ok(PredictionRecord {
                example_id: l.example_id,
                predicted_label: resolve_label(l.predicted_label, label_map, &loc)?,
            })
        })
        .collect()
}

fn resolve_path(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Parses a manifest and every file it references, without checking
/// cross-file invariants. Use [`load_pool`] for the validated entry point.
pub fn read_pool(manifest_path: &Path) -> Result<CheckpointPool> {
    let text = fs::read_to_string(manifest_path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile {
            path: manifest_path.to_path_buf(),
        },
        _ => Error::io(format!("reading {}", manifest_path.display()), e),
    })?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::schema(manifest_path.display().to_string(), e.to_string()))?;
    if manifest.num_labels == 0 {
        return Err(Error::schema(
            manifest_path.display().to_string(),
            "num_labels must be positive",
        ));
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let label_map = &manifest.label_map;

    let eval_sets = manifest
        .eval_sets
        .par_iter()
        .map(|es| {
            let labels = read_labels(&resolve_path(base, &es.labels_path), label_map)?;
            Ok(EvalSet {
                eval_set_id: es.eval_set_id.clone(),
                language: es.language.clone(),
                role: es.role,
                num_labels: manifest.num_labels,
                labels,
                translation_of: es.translation_of.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let checkpoints = manifest
        .checkpoints
        .par_iter()
        .map(|c| {
            let predictions = c
                .predictions
                .iter()
                .map(|(set_id, rel)| {
                    Ok((set_id.clone(), read_predictions(&resolve_path(base, rel), label_map)?))
                })
                .collect::<Result<BTreeMap<_, _>>>()?;
            Ok(CheckpointEval {
                checkpoint_id: c.checkpoint_id.clone(),
                seed: c.seed,
                step: c.step,
                predictions,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut pool = CheckpointPool {
        pool_id: manifest.pool_id,
        model_name: manifest.model_name,
        algorithm_name: manifest.algorithm_name,
        num_labels: manifest.num_labels,
        label_map: manifest.label_map,
        eval_sets,
        checkpoints,
    };
    pool.canonicalize();
    Ok(pool)
}

/// Loads a pool and enforces every invariant; the first error-severity
/// validation issue becomes the returned error.
pub fn load_pool(manifest_path: &Path) -> Result<CheckpointPool> {
    let pool = read_pool(manifest_path)?;
    let report = validate_pool(&pool);
    if let Some(issue) = report.errors().next() {
        let message = format!("{}: {}", issue.location, issue.message);
        return Err(match issue.kind {
            IssueKind::PredictionCoverage
            | IssueKind::TranslationCoverage
            | IssueKind::TranslationLabel
            | IssueKind::TranslationLink => Error::Alignment(message),
            _ => Error::schema(issue.location.clone(), issue.message.clone()),
        });
    }
    Ok(pool)
}

fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
        .collect()
}

/// Writes a pool as `manifest.json` plus `labels/` and `predictions/`
/// trees under `dir`. Output is byte-stable for equal pools.
pub fn write_pool(pool: &CheckpointPool, dir: &Path) -> Result<PathBuf> {
    let eval_sets: Vec<ManifestEvalSet> = pool
        .eval_sets
        .iter()
        .map(|s| ManifestEvalSet {
            eval_set_id: s.eval_set_id.clone(),
            language: s.language.clone(),
            role: s.role,
            translation_of: s.translation_of.clone(),
            labels_path: format!("labels/{}.jsonl", file_stem(&s.eval_set_id)),
        })
        .collect();
    pool.eval_sets
        .par_iter()
        .zip(eval_sets.par_iter())
        .try_for_each(|(s, m)| write_labels(&dir.join(&m.labels_path), &s.labels))?;

    let checkpoints: Vec<ManifestCheckpoint> = pool
        .checkpoints
        .iter()
        .map(|c| ManifestCheckpoint {
            checkpoint_id: c.checkpoint_id.clone(),
            seed: c.seed,
            step: c.step,
            predictions: c
                .predictions
                .keys()
                .map(|k| {
                    (
                        k.clone(),
                        format!("predictions/{}/{}.jsonl", file_stem(&c.checkpoint_id), file_stem(k)),
                    )
                })
                .collect(),
        })
        .collect();
    pool.checkpoints
        .par_iter()
        .zip(checkpoints.par_iter())
        .try_for_each(|(c, m)| {
            c.predictions.iter().try_for_each(|(set_id, preds)| {
                write_jsonl(&dir.join(&m.predictions[set_id]), preds)
            })
        })?;

    let manifest = Manifest {
        pool_id: pool.pool_id.clone(),
        model_name: pool.model_name.clone(),
        algorithm_name: pool.algorithm_name.clone(),
        num_labels: pool.num_labels,
        label_map: pool.label_map.clone(),
        eval_sets,
        checkpoints,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    let path = dir.join("manifest.json");
    write_atomic(&path, text.as_bytes())?;
    Ok(path)
}
