use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use super::{CheckpointPool, EvalSet, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IssueKind {
    DuplicateEvalSet,
    DuplicateId,
    EmptySet,
    LabelOutOfRange,
    NumLabels,
    TranslationLink,
    TranslationCoverage,
    TranslationLabel,
    UnknownEvalSet,
    PredictionCoverage,
    DuplicateCheckpoint,
    DuplicateSeedStep,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub severity: Severity,
    pub kind: IssueKind,
    pub location: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{sev}: {}: {}", self.location, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    fn push(&mut self, kind: IssueKind, location: impl Into<String>, message: impl Into<String>) {
        self.issues.push(Issue {
            severity: Severity::Error,
            kind,
            location: location.into(),
            message: message.into(),
        });
    }
}

const MAX_LISTED_IDS: usize = 5;

fn list_ids<'a>(ids: impl Iterator<Item = &'a str>) -> String {
    let ids: Vec<&str> = ids.collect();
    let shown: Vec<String> = ids.iter().take(MAX_LISTED_IDS).map(|s| format!("\"{s}\"")).collect();
    if ids.len() > MAX_LISTED_IDS {
        format!("{}, ... ({} total)", shown.join(", "), ids.len())
    } else {
        shown.join(", ")
    }
}

fn duplicates<'a>(ids: impl Iterator<Item = &'a str>) -> BTreeSet<&'a str> {
    let mut seen = HashSet::new();
    ids.filter(|id| !seen.insert(*id)).collect()
}

fn check_eval_set(set: &EvalSet, pool_labels: u32, report: &mut ValidationReport) {
    let loc = format!("eval set '{}'", set.eval_set_id);
    if set.is_empty() {
        report.push(IssueKind::EmptySet, &loc, "no examples");
    }
    if set.num_labels != pool_labels {
        report.push(
            IssueKind::NumLabels,
            &loc,
            format!("num_labels {} differs from pool num_labels {}", set.num_labels, pool_labels),
        );
    }
    for id in duplicates(set.labels.iter().map(|l| l.example_id.as_str())) {
        report.push(IssueKind::DuplicateId, &loc, format!("duplicate id \"{id}\""));
    }
    let out_of_range: Vec<&str> = set
        .labels
        .iter()
        .filter(|l| l.label >= set.num_labels)
        .map(|l| l.example_id.as_str())
        .collect();
    if !out_of_range.is_empty() {
        report.push(
            IssueKind::LabelOutOfRange,
            &loc,
            format!(
                "{} labels >= num_labels {}: {}",
                out_of_range.len(),
                set.num_labels,
                list_ids(out_of_range.into_iter())
            ),
        );
    }
}

fn check_translation(set: &EvalSet, pool: &CheckpointPool, report: &mut ValidationReport) {
    let loc = format!("eval set '{}'", set.eval_set_id);
    let Some(parent_id) = set.translation_of.as_deref() else {
        if set.role == Role::TranslatedTrain {
            report.push(IssueKind::TranslationLink, &loc, "translated_train without translation_of");
        }
        return;
    };
    let Some(parent) = pool.eval_set(parent_id) else {
        report.push(
            IssueKind::TranslationLink,
            &loc,
            format!("translation_of refers to unknown eval set '{parent_id}'"),
        );
        return;
    };
    let parent_labels: HashMap<&str, u32> =
        parent.labels.iter().map(|l| (l.example_id.as_str(), l.label)).collect();
    let own: HashSet<&str> = set.labels.iter().map(|l| l.example_id.as_str()).collect();
    let covered = parent_labels.keys().filter(|id| own.contains(*id)).count();
    let mut extra: Vec<&str> = own
        .iter()
        .copied()
        .filter(|id| !parent_labels.contains_key(id))
        .collect();
    extra.sort_unstable();
    if covered != parent_labels.len() || !extra.is_empty() {
        let mut message = format!("translation coverage {}/{}", covered, parent_labels.len());
        if !extra.is_empty() {
            message.push_str(&format!(
                "; {} ids absent from '{}': {}",
                extra.len(),
                parent_id,
                list_ids(extra.into_iter())
            ));
        }
        report.push(IssueKind::TranslationCoverage, &loc, message);
    }
    let mismatched: Vec<&str> = set
        .labels
        .iter()
        .filter(|l| parent_labels.get(l.example_id.as_str()).is_some_and(|p| *p != l.label))
        .map(|l| l.example_id.as_str())
        .collect();
    if !mismatched.is_empty() {
        report.push(
            IssueKind::TranslationLabel,
            &loc,
            format!(
                "{} labels differ from '{}': {}",
                mismatched.len(),
                parent_id,
                list_ids(mismatched.into_iter())
            ),
        );
    }
}

/// Checks every pool invariant and returns the issues found. Never mutates
/// the pool; an empty report means every metric is defined on it.
pub fn validate_pool(pool: &CheckpointPool) -> ValidationReport {
    let mut report = ValidationReport::default();

    for id in duplicates(pool.eval_sets.iter().map(|s| s.eval_set_id.as_str())) {
        report.push(IssueKind::DuplicateEvalSet, format!("eval set '{id}'"), "duplicate eval_set_id");
    }
    for set in &pool.eval_sets {
        check_eval_set(set, pool.num_labels, &mut report);
    }
    for set in &pool.eval_sets {
        check_translation(set, pool, &mut report);
    }

    for id in duplicates(pool.checkpoints.iter().map(|c| c.checkpoint_id.as_str())) {
        report.push(
            IssueKind::DuplicateCheckpoint,
            format!("checkpoint '{id}'"),
            "duplicate checkpoint_id",
        );
    }
    let mut seed_steps: BTreeMap<(i64, u64), &str> = BTreeMap::new();
    for c in &pool.checkpoints {
        if let Some(prev) = seed_steps.insert((c.seed, c.step), &c.checkpoint_id) {
            report.push(
                IssueKind::DuplicateSeedStep,
                format!("checkpoint '{}'", c.checkpoint_id),
                format!("(seed {}, step {}) already used by '{}'", c.seed, c.step, prev),
            );
        }
    }

    let sets: HashMap<&str, &EvalSet> =
        pool.eval_sets.iter().map(|s| (s.eval_set_id.as_str(), s)).collect();
    for c in &pool.checkpoints {
        for (set_id, preds) in &c.predictions {
            let loc = format!("checkpoint '{}' / eval set '{}'", c.checkpoint_id, set_id);
            let Some(set) = sets.get(set_id.as_str()) else {
                report.push(IssueKind::UnknownEvalSet, loc, "predictions reference an unknown eval set");
                continue;
            };
            let gold: HashSet<&str> = set.labels.iter().map(|l| l.example_id.as_str()).collect();
            let predicted: HashSet<&str> = preds.iter().map(|p| p.example_id.as_str()).collect();
            let mut extra: Vec<&str> = predicted.difference(&gold).copied().collect();
            let mut missing: Vec<&str> = gold.difference(&predicted).copied().collect();
            extra.sort_unstable();
            missing.sort_unstable();
            let dups = duplicates(preds.iter().map(|p| p.example_id.as_str()));
            if extra.is_empty() && missing.is_empty() && dups.is_empty() {
                continue;
            }
            let mut parts = Vec::new();
            if !extra.is_empty() {
                parts.push(format!("example_id {} not in labels", list_ids(extra.into_iter())));
            }
            if !missing.is_empty() {
                parts.push(format!("{} labeled ids without prediction: {}", missing.len(), list_ids(missing.into_iter())));
            }
            if !dups.is_empty() {
                parts.push(format!("duplicate predictions for {}", list_ids(dups.into_iter())));
            }
            report.push(
                IssueKind::PredictionCoverage,
                loc,
                format!("coverage {}/{}: {}", predicted.intersection(&gold).count(), gold.len(), parts.join("; ")),
            );
        }
    }
    report
}
