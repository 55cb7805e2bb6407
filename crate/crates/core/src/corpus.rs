//! Synthetic-label datasets over parallel corpora.
//!
//! Random labels over a parallel corpus give a task the pre-trained model has
//! never seen, with pair members always sharing a label. Corrupted label sets
//! replace a seeded subset of gold labels with uniform draws for
//! memorization tests.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::Serialize;

use crate::data::{write_atomic, write_labels, EvalSet, ExampleLabel, Role};
use crate::error::{Error, Result};
use crate::keyed::Key;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentencePair {
    pub example_id: String,
    pub text_a: String,
    pub text_b: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelCorpus {
    pub language_a: String,
    pub language_b: String,
    pub sentence_pairs: Vec<SentencePair>,
}

impl ParallelCorpus {
    pub fn new(
        language_a: impl Into<String>,
        language_b: impl Into<String>,
        sentence_pairs: Vec<SentencePair>,
    ) -> Result<Self> {
        let mut seen = HashSet::new();
        for p in &sentence_pairs {
            if !seen.insert(p.example_id.as_str()) {
                return Err(Error::schema("parallel corpus", format!("duplicate id \"{}\"", p.example_id)));
            }
            if p.text_a.trim().is_empty() || p.text_b.trim().is_empty() {
                return Err(Error::schema("parallel corpus", format!("empty text for \"{}\"", p.example_id)));
            }
        }
        Ok(Self {
            language_a: language_a.into(),
            language_b: language_b.into(),
            sentence_pairs,
        })
    }

    /// Reads `example_id<TAB>text_a<TAB>text_b` lines; blank lines are skipped.
    pub fn read_tsv(path: &Path, language_a: &str, language_b: &str) -> Result<Self> {
        let text = read_text(path)?;
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.splitn(3, '\t');
            let (Some(id), Some(a), Some(b)) = (cols.next(), cols.next(), cols.next()) else {
                return Err(Error::schema(
                    format!("{}:{}", path.display(), i + 1),
                    "expected 3 tab-separated columns",
                ));
            };
            pairs.push(SentencePair {
                example_id: id.to_string(),
                text_a: a.to_string(),
                text_b: b.to_string(),
            });
        }
        Self::new(language_a, language_b, pairs)
    }

    /// Reads line-aligned text files plus an id file of the same length.
    pub fn read_paired_files(
        ids: &Path,
        side_a: &Path,
        side_b: &Path,
        language_a: &str,
        language_b: &str,
    ) -> Result<Self> {
        let ids = read_text(ids)?;
        let a = read_text(side_a)?;
        let b = read_text(side_b)?;
        let (ids, a, b): (Vec<&str>, Vec<&str>, Vec<&str>) =
            (ids.lines().collect(), a.lines().collect(), b.lines().collect());
        if ids.len() != a.len() || ids.len() != b.len() {
            return Err(Error::Alignment(format!(
                "paired files have {} ids, {} and {} sentences",
                ids.len(),
                a.len(),
                b.len()
            )));
        }
        let pairs = ids
            .iter()
            .zip(a.iter().zip(b.iter()))
            .map(|(id, (a, b))| SentencePair {
                example_id: id.to_string(),
                text_a: a.to_string(),
                text_b: b.to_string(),
            })
            .collect();
        Self::new(language_a, language_b, pairs)
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile {
            path: path.to_path_buf(),
        },
        _ => Error::io(format!("reading {}", path.display()), e),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledParallelCorpus {
    pub base: ParallelCorpus,
    pub num_labels: u32,
    pub labels: BTreeMap<String, u32>,
    pub generator_seed: i64,
}

#[derive(Serialize)]
struct EvalSetEntry<'a> {
    eval_set_id: &'a str,
    language: &'a str,
    role: Role,
    #[serde(skip_serializing_if = "Option::is_none")]
    translation_of: Option<&'a str>,
    labels_path: String,
}

impl LabeledParallelCorpus {
    /// The two sides as eval sets: side A is the training set, side B its
    /// translation.
    pub fn eval_sets(&self) -> (EvalSet, EvalSet) {
        let labels: Vec<ExampleLabel> = self
            .labels
            .iter()
            .map(|(id, &label)| ExampleLabel {
                example_id: id.clone(),
                label,
            })
            .collect();
        let a_id = format!("{}-random", self.base.language_a);
        let a = EvalSet {
            eval_set_id: a_id.clone(),
            language: self.base.language_a.clone(),
            role: Role::SourceTrain,
            num_labels: self.num_labels,
            labels: labels.clone(),
            translation_of: None,
        };
        let b = EvalSet {
            eval_set_id: format!("{}-random", self.base.language_b),
            language: self.base.language_b.clone(),
            role: Role::TranslatedTrain,
            num_labels: self.num_labels,
            labels,
            translation_of: Some(a_id),
        };
        (a, b)
    }

    /// Writes both label files and an `eval_sets.json` fragment that can be
    /// pasted into a pool manifest. Returns the written paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let (a, b) = self.eval_sets();
        let mut written = Vec::new();
        let mut entries = Vec::new();
        for set in [&a, &b] {
            let file = format!("{}.jsonl", set.eval_set_id);
            let path = dir.join(&file);
            write_labels(&path, &set.labels)?;
            written.push(path);
            entries.push(EvalSetEntry {
                eval_set_id: &set.eval_set_id,
                language: &set.language,
                role: set.role,
                translation_of: set.translation_of.as_deref(),
                labels_path: file,
            });
        }
        let mut text = serde_json::to_string_pretty(&entries).expect("entries serialize");
        text.push('\n');
        let path = dir.join("eval_sets.json");
        write_atomic(&path, text.as_bytes())?;
        written.push(path);
        Ok(written)
    }
}

/// Draws one uniform label in `[0, num_labels)` per example, shared by both
/// sides of the pair. The draw depends only on `(seed, example_id)`.
pub fn gen_random_labels(corpus: &ParallelCorpus, seed: i64, num_labels: u32) -> Result<LabeledParallelCorpus> {
    if corpus.sentence_pairs.is_empty() {
        return Err(Error::EmptySet("parallel corpus".into()));
    }
    if num_labels == 0 {
        return Err(Error::Config("num_labels must be positive".into()));
    }
    let labels = corpus
        .sentence_pairs
        .iter()
        .map(|p| {
            let label = Key::new("random-label")
                .int(seed)
                .str(&p.example_id)
                .rng()
                .random_range(0..num_labels);
            (p.example_id.clone(), label)
        })
        .collect();
    Ok(LabeledParallelCorpus {
        base: corpus.clone(),
        num_labels,
        labels,
        generator_seed: seed,
    })
}

/// Number of positions corrupted at `ratio`, rounding half to even.
pub fn corruption_count(ratio: f64, n: usize) -> usize {
    (ratio * n as f64).round_ties_even() as usize
}

/// Replaces the labels of `round(ratio * n)` examples with uniform draws over
/// all classes (a draw may equal the original label).
///
/// Positions are the first ones in a seeded per-id ordering, so a larger
/// ratio with the same seed corrupts a superset of positions, and sets that
/// share ids are corrupted identically.
pub fn corrupt_labels(set: &EvalSet, ratio: f64, seed: i64) -> Result<EvalSet> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::RatioOutOfRange(ratio));
    }
    if set.is_empty() {
        return Err(Error::EmptySet(format!("eval set '{}'", set.eval_set_id)));
    }
    let count = corruption_count(ratio, set.len());
    let mut order: Vec<(u64, &str)> = set
        .labels
        .iter()
        .map(|l| (Key::new("corrupt-order").int(seed).str(&l.example_id).value(), l.example_id.as_str()))
        .collect();
    order.sort_unstable();
    let chosen: HashSet<&str> = order.into_iter().take(count).map(|(_, id)| id).collect();

    let mut out = set.clone();
    for l in &mut out.labels {
        if chosen.contains(l.example_id.as_str()) {
            l.label = Key::new("corrupt-label")
                .int(seed)
                .str(&l.example_id)
                .rng()
                .random_range(0..set.num_labels);
        }
    }
    Ok(out)
}

/// Corrupts translation-linked sets together so every pair keeps one label.
/// All sets must hold the same ids with the same labels.
pub fn corrupt_labels_joint(sets: &[EvalSet], ratio: f64, seed: i64) -> Result<Vec<EvalSet>> {
    if let Some((first, rest)) = sets.split_first() {
        let reference: HashMap<&str, u32> =
            first.labels.iter().map(|l| (l.example_id.as_str(), l.label)).collect();
        for s in rest {
            if s.len() != first.len() || s.num_labels != first.num_labels {
                return Err(Error::Alignment(format!(
                    "eval sets '{}' and '{}' differ in size or label space",
                    first.eval_set_id, s.eval_set_id
                )));
            }
            for l in &s.labels {
                match reference.get(l.example_id.as_str()) {
                    None => {
                        return Err(Error::Alignment(format!(
                            "example_id \"{}\" of '{}' missing from '{}'",
                            l.example_id, s.eval_set_id, first.eval_set_id
                        )))
                    }
                    Some(&label) if label != l.label => return Err(Error::LabelMismatch(l.example_id.clone())),
                    Some(_) => {}
                }
            }
        }
    }
    sets.iter().map(|s| corrupt_labels(s, ratio, seed)).collect()
}

/// One translation pair: the same example on both sides.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranslationPair<'a> {
    pub example_id: &'a str,
    pub label: u32,
    pub source: &'a ExampleLabel,
    pub translated: &'a ExampleLabel,
}

pub fn pair_translations<'a>(source: &'a EvalSet, translated: &'a EvalSet) -> Result<Vec<TranslationPair<'a>>> {
    if translated.translation_of.as_deref() != Some(source.eval_set_id.as_str()) {
        return Err(Error::Alignment(format!(
            "'{}' is not a translation of '{}'",
            translated.eval_set_id, source.eval_set_id
        )));
    }
    let by_id: HashMap<&str, &ExampleLabel> =
        translated.labels.iter().map(|l| (l.example_id.as_str(), l)).collect();
    let source_ids: HashSet<&str> = source.labels.iter().map(|l| l.example_id.as_str()).collect();
    if let Some(extra) = translated.labels.iter().find(|l| !source_ids.contains(l.example_id.as_str())) {
        return Err(Error::Alignment(format!(
            "example_id \"{}\" only in '{}'",
            extra.example_id, translated.eval_set_id
        )));
    }
    source
        .labels
        .iter()
        .map(|s| {
            let t = by_id.get(s.example_id.as_str()).ok_or_else(|| {
                Error::Alignment(format!("example_id \"{}\" only in '{}'", s.example_id, source.eval_set_id))
            })?;
            if t.label != s.label {
                return Err(Error::LabelMismatch(s.example_id.clone()));
            }
            Ok(TranslationPair {
                example_id: &s.example_id,
                label: s.label,
                source: s,
                translated: t,
            })
        })
        .collect()
}
