//! Domain types for checkpoint pools and the loaders that build them.
//!
//! A pool is a set of fine-tuned checkpoints plus the labeled evaluation
//! sets they were scored on. Gold labels live once per [`EvalSet`];
//! each [`CheckpointEval`] only carries predictions keyed by eval set id.
//! Translation pairs are linked through shared example ids, never position.

mod embeddings;
mod io;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use embeddings::{read_embeddings, EmbeddingPair, EmbeddingPairSet, EmbeddingRecord};
pub use io::{load_pool, read_jsonl, read_pool, write_atomic, write_jsonl, write_labels, write_pool};
pub use validate::{validate_pool, Issue, IssueKind, Severity, ValidationReport};

use crate::error::{Error, Result};

/// What an eval set is used for within a transfer direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    SourceTrain,
    TranslatedTrain,
    SourceVal,
    TargetVal,
    Generic,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::SourceTrain => "source_train",
            Role::TranslatedTrain => "translated_train",
            Role::SourceVal => "source_val",
            Role::TargetVal => "target_val",
            Role::Generic => "generic",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleLabel {
    pub example_id: String,
    pub label: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub example_id: String,
    pub predicted_label: u32,
}

/// A labeled example collection in one language.
///
/// Labels are kept sorted by `example_id` once loaded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalSet {
    pub eval_set_id: String,
    pub language: String,
    pub role: Role,
    pub num_labels: u32,
    pub labels: Vec<ExampleLabel>,
    pub translation_of: Option<String>,
}

impl EvalSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Sorts labels by example id. Loaders call this so that line order in
    /// label files never matters.
    pub fn canonicalize(&mut self) {
        self.labels.sort_by(|a, b| a.example_id.cmp(&b.example_id));
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointEval {
    pub checkpoint_id: String,
    pub seed: i64,
    pub step: u64,
    /// eval_set_id -> predictions sorted by example_id.
    pub predictions: BTreeMap<String, Vec<PredictionRecord>>,
}

impl CheckpointEval {
    pub fn predictions_for(&self, eval_set_id: &str) -> Result<&[PredictionRecord]> {
        self.predictions
            .get(eval_set_id)
            .map(Vec::as_slice)
            .ok_or_else(|| {
                Error::Alignment(format!(
                    "checkpoint '{}' has no predictions for eval set '{}'",
                    self.checkpoint_id, eval_set_id
                ))
            })
    }

    pub fn canonicalize(&mut self) {
        for preds in self.predictions.values_mut() {
            preds.sort_by(|a, b| a.example_id.cmp(&b.example_id));
        }
    }
}

/// All checkpoints obtained from one pre-trained model and one fine-tuning
/// algorithm, varying seeds and training steps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointPool {
    pub pool_id: String,
    pub model_name: String,
    pub algorithm_name: String,
    pub num_labels: u32,
    pub label_map: BTreeMap<String, u32>,
    pub eval_sets: Vec<EvalSet>,
    pub checkpoints: Vec<CheckpointEval>,
}

/// An ordered (source, target) language pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Direction {
    pub source: String,
    pub target: String,
}

impl Direction {
    pub fn new(source: impl Into<String>, target: impl Into<String>) -> Self {
        Self {
            source: source.into(),
            target: target.into(),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.source, self.target)
    }
}

/// The eval sets one transfer direction is computed over.
#[derive(Debug, Clone, Copy)]
pub struct DirectionSets<'a> {
    pub source_train: &'a EvalSet,
    pub translated_train: &'a EvalSet,
    pub target_val: &'a EvalSet,
    pub source_val: Option<&'a EvalSet>,
}

impl CheckpointPool {
    pub fn eval_set(&self, eval_set_id: &str) -> Option<&EvalSet> {
        self.eval_sets.iter().find(|s| s.eval_set_id == eval_set_id)
    }

    pub fn languages(&self) -> Vec<String> {
        let mut langs: Vec<String> = self.eval_sets.iter().map(|s| s.language.clone()).collect();
        langs.sort();
        langs.dedup();
        langs
    }

    /// Languages that have a source_train set.
    pub fn source_languages(&self) -> Vec<String> {
        let mut langs: Vec<String> = self
            .eval_sets
            .iter()
            .filter(|s| s.role == Role::SourceTrain)
            .map(|s| s.language.clone())
            .collect();
        langs.sort();
        langs.dedup();
        langs
    }

    /// Languages with a translated_train set linked to `source`'s training set.
    pub fn target_languages(&self, source: &str) -> Vec<String> {
        let Ok(train) = self.unique_set(Role::SourceTrain, source, |_| true) else {
            return Vec::new();
        };
        let mut langs: Vec<String> = self
            .eval_sets
            .iter()
            .filter(|s| {
                s.role == Role::TranslatedTrain
                    && s.translation_of.as_deref() == Some(train.eval_set_id.as_str())
            })
            .map(|s| s.language.clone())
            .collect();
        langs.sort();
        langs.dedup();
        langs
    }

    fn unique_set(
        &self,
        role: Role,
        language: &str,
        extra: impl Fn(&EvalSet) -> bool,
    ) -> Result<&EvalSet> {
        let found: Vec<&EvalSet> = self
            .eval_sets
            .iter()
            .filter(|s| s.role == role && s.language == language && extra(s))
            .collect();
        match found.as_slice() {
            [one] => Ok(one),
            [] => Err(Error::MissingEvalSet {
                role: role.to_string(),
                language: language.to_string(),
            }),
            many => Err(Error::AmbiguousEvalSet {
                role: role.to_string(),
                language: language.to_string(),
                candidates: many.iter().map(|s| s.eval_set_id.clone()).collect(),
            }),
        }
    }

    /// Validation set for a language. Prefers the requested role and falls
    /// back to the other validation role, so one validation set per language
    /// can serve as both source and target side.
    fn val_set(&self, preferred: Role, language: &str) -> Result<&EvalSet> {
        let other = match preferred {
            Role::SourceVal => Role::TargetVal,
            _ => Role::SourceVal,
        };
        match self.unique_set(preferred, language, |_| true) {
            Err(Error::MissingEvalSet { .. }) => self.unique_set(other, language, |_| true),
            r => r,
        }
    }

    pub fn direction_sets(&self, direction: &Direction) -> Result<DirectionSets<'_>> {
        let source_train = self.unique_set(Role::SourceTrain, &direction.source, |_| true)?;
        let translated_train =
            self.unique_set(Role::TranslatedTrain, &direction.target, |s| {
                s.translation_of.as_deref() == Some(source_train.eval_set_id.as_str())
            })?;
        let target_val = self.val_set(Role::TargetVal, &direction.target)?;
        let source_val = match self.val_set(Role::SourceVal, &direction.source) {
            Ok(s) => Some(s),
            Err(Error::MissingEvalSet { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(DirectionSets {
            source_train,
            translated_train,
            target_val,
            source_val,
        })
    }

    /// Source and target validation sets, for the transfer-gap baseline.
    pub fn validation_pair(&self, direction: &Direction) -> Result<(&EvalSet, &EvalSet)> {
        Ok((
            self.val_set(Role::SourceVal, &direction.source)?,
            self.val_set(Role::TargetVal, &direction.target)?,
        ))
    }

    pub fn canonicalize(&mut self) {
        for s in &mut self.eval_sets {
            s.canonicalize();
        }
        for c in &mut self.checkpoints {
            c.canonicalize();
        }
    }
}
