//! Synthetic checkpoint pools with planted transferability.
//!
//! Each simulated checkpoint is a fixed (seed, step). Its predictions come
//! from three stochastic channels, each with one knob:
//!
//! * source side: correct with probability `1 - p`, otherwise a uniform
//!   wrong label (`p` from the training-error schedule);
//! * translation: each translated prediction keeps the source-side
//!   prediction with probability `1 - δ`, otherwise is redrawn uniformly
//!   over all `K` labels;
//! * validation: on top of that, correct predictions are flipped so the
//!   correctness probability drops by `g` (clamped at zero).
//!
//! [`expected_metrics`] gives the closed-form expectation of every
//! decomposition component under these channels.

use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{CheckpointEval, CheckpointPool, EvalSet, ExampleLabel, PredictionRecord, Role};
use crate::error::{Error, Result};
use crate::keyed::Key;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub code: String,
    /// Probability that a prediction is redrawn when crossing into this
    /// language.
    pub transfer_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub step: u64,
    pub train_error: f64,
}

fn default_source() -> String {
    "en".into()
}

fn default_model() -> String {
    "simulated".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "default_source")]
    pub source_language: String,
    #[serde(default = "default_model")]
    pub model_name: String,
    pub num_labels: u32,
    pub n_train: usize,
    pub n_val: usize,
    pub target_languages: Vec<TargetSpec>,
    pub train_error_schedule: Vec<ScheduleEntry>,
    pub generalization_gap: f64,
    pub seeds: Vec<i64>,
    /// Seed for gold labels, independent of the checkpoint seeds.
    #[serde(default)]
    pub data_seed: i64,
}

fn unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} = {v} outside [0, 1]")))
    }
}

impl SimConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SimConfig =
            serde_json::from_str(text).map_err(|e| Error::schema("simulator config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_labels < 2 {
            return Err(Error::Config("num_labels must be at least 2".into()));
        }
        if self.n_train == 0 || self.n_val == 0 {
            return Err(Error::Config("n_train and n_val must be positive".into()));
        }
        if self.target_languages.is_empty() {
            return Err(Error::Config("no target languages".into()));
        }
        let mut codes = HashSet::new();
        for t in &self.target_languages {
            if t.code == self.source_language || !codes.insert(t.code.as_str()) {
                return Err(Error::Config(format!("target language '{}' repeated or equal to source", t.code)));
            }
            unit(&format!("transfer_loss[{}]", t.code), t.transfer_loss)?;
        }
        unit("generalization_gap", self.generalization_gap)?;
        if self.train_error_schedule.is_empty() {
            return Err(Error::Config("empty training-error schedule".into()));
        }
        for e in &self.train_error_schedule {
            unit(&format!("train_error[step {}]", e.step), e.train_error)?;
        }
        for w in self.train_error_schedule.windows(2) {
            if w[1].step <= w[0].step {
                return Err(Error::Config("schedule steps must be strictly increasing".into()));
            }
            if w[1].train_error > w[0].train_error {
                return Err(Error::Config("training error must be non-increasing along the schedule".into()));
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("no seeds".into()));
        }
        let mut seeds = HashSet::new();
        if !self.seeds.iter().all(|s| seeds.insert(*s)) {
            return Err(Error::Config("duplicate seed".into()));
        }
        Ok(())
    }

    /// Training error in force at `step`: the last schedule entry at or
    /// before it.
    pub fn train_error_at(&self, step: u64) -> Result<f64> {
        self.train_error_schedule
            .iter()
            .take_while(|e| e.step <= step)
            .last()
            .map(|e| e.train_error)
            .ok_or_else(|| Error::Config(format!("step {step} precedes the schedule")))
    }

    fn transfer_loss(&self, target: &str) -> Result<f64> {
        self.target_languages
            .iter()
            .find(|t| t.code == target)
            .map(|t| t.transfer_loss)
            .ok_or_else(|| Error::Config(format!("unknown target language '{target}'")))
    }
}

/// Closed-form expectation of a decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectedMetrics {
    pub e_train: f64,
    pub err_translated: f64,
    pub g_inter: f64,
    pub g_intra: f64,
    pub e: f64,
}

/// Expected decomposition for one target at one step.
///
/// `e = min(1, err_translated + g)`; the clamp only binds when the
/// validation flip has nothing left to flip.
pub fn expected_metrics(config: &SimConfig, step: u64, target_language: &str) -> Result<ExpectedMetrics> {
    config.validate()?;
    let p = config.train_error_at(step)?;
    let delta = config.transfer_loss(target_language)?;
    let k = f64::from(config.num_labels);
    let err_translated = (1.0 - delta) * p + delta * (1.0 - 1.0 / k);
    let e = (err_translated + config.generalization_gap).min(1.0);
    Ok(ExpectedMetrics {
        e_train: p,
        err_translated,
        g_inter: err_translated - p,
        g_intra: e - err_translated,
        e,
    })
}

fn wrong_label(gold: u32, k: u32, rng: &mut ChaCha8Rng) -> u32 {
    (gold + 1 + rng.random_range(0..k - 1)) % k
}

fn source_prediction(gold: u32, k: u32, p: f64, rng: &mut ChaCha8Rng) -> u32 {
    if rng.random_bool(p) {
        wrong_label(gold, k, rng)
    } else {
        gold
    }
}

fn translate(pred: u32, k: u32, delta: f64, rng: &mut ChaCha8Rng) -> u32 {
    if rng.random_bool(delta) {
        rng.random_range(0..k)
    } else {
        pred
    }
}

/// Flips a correct prediction with probability `g / p_correct` so that the
/// overall correctness probability drops from `p_correct` by `g`.
fn generalize(pred: u32, gold: u32, k: u32, g: f64, p_correct: f64, rng: &mut ChaCha8Rng) -> u32 {
    if pred == gold && p_correct > 0.0 && rng.random_bool((g / p_correct).min(1.0)) {
        wrong_label(gold, k, rng)
    } else {
        pred
    }
}

fn ids(prefix: &str, n: usize) -> Vec<String> {
    let width = n.saturating_sub(1).to_string().len().max(6);
    (0..n).map(|i| format!("{prefix}-{i:0width$}")).collect()
}

fn labels(ids: &[String], k: u32, data_seed: i64, split: &str) -> Vec<ExampleLabel> {
    ids.iter()
        .map(|id| ExampleLabel {
            example_id: id.clone(),
            label: Key::new("sim-label").int(data_seed).str(split).str(id).rng().random_range(0..k),
        })
        .collect()
}

struct Channels<'a> {
    config: &'a SimConfig,
    k: u32,
    seed: i64,
    step: u64,
    p: f64,
}

impl Channels<'_> {
    fn key(&self, domain: &str, lang: &str, id: &str) -> ChaCha8Rng {
        Key::new(domain).int(self.seed).int(self.step as i64).str(lang).str(id).rng()
    }

    fn source_train(&self, golds: &[ExampleLabel]) -> Vec<u32> {
        golds
            .iter()
            .map(|g| source_prediction(g.label, self.k, self.p, &mut self.key("sim-src", "", &g.example_id)))
            .collect()
    }

    fn translated(&self, golds: &[ExampleLabel], source: &[u32], lang: &str, delta: f64) -> Vec<u32> {
        golds
            .iter()
            .zip(source)
            .map(|(g, &s)| translate(s, self.k, delta, &mut self.key("sim-tr", lang, &g.example_id)))
            .collect()
    }

    /// Validation predictions in `lang` with transfer loss `delta`; the
    /// source language uses `delta = 0`.
    fn validation(&self, golds: &[ExampleLabel], lang: &str, delta: f64) -> Vec<u32> {
        let k = f64::from(self.k);
        let p_correct = 1.0 - ((1.0 - delta) * self.p + delta * (1.0 - 1.0 / k));
        let g = self.config.generalization_gap;
        golds
            .iter()
            .map(|gold| {
                let base = source_prediction(gold.label, self.k, self.p, &mut self.key("sim-val-src", "", &gold.example_id));
                let t = translate(base, self.k, delta, &mut self.key("sim-val-tr", lang, &gold.example_id));
                generalize(t, gold.label, self.k, g, p_correct, &mut self.key("sim-val-gap", lang, &gold.example_id))
            })
            .collect()
    }
}

fn records(golds: &[ExampleLabel], preds: Vec<u32>) -> Vec<PredictionRecord> {
    golds
        .iter()
        .zip(preds)
        .map(|(g, predicted_label)| PredictionRecord {
            example_id: g.example_id.clone(),
            predicted_label,
        })
        .collect()
}

pub fn checkpoint_id(seed: i64, step: u64) -> String {
    format!("seed{seed}-step{step}")
}

/// Generates a pool with one checkpoint per (seed, schedule step). Eval sets
/// are `<src>-train`, `<src>-val`, and per target `<t>-train` (translation of
/// the source training set) and `<t>-val`. Validation sets share ids and
/// labels across languages.
pub fn simulate_pool(config: &SimConfig) -> Result<CheckpointPool> {
    config.validate()?;
    let k = config.num_labels;
    let src = &config.source_language;
    let train_ids = ids("train", config.n_train);
    let val_ids = ids("val", config.n_val);
    let train_labels = labels(&train_ids, k, config.data_seed, "train");
    let val_labels = labels(&val_ids, k, config.data_seed, "val");

    let set = |id: String, lang: &str, role, labels: &Vec<ExampleLabel>, translation_of| EvalSet {
        eval_set_id: id,
        language: lang.to_string(),
        role,
        num_labels: k,
        labels: labels.clone(),
        translation_of,
    };
    let src_train_id = format!("{src}-train");
    let src_val_id = format!("{src}-val");
    let mut eval_sets = vec![
        set(src_train_id.clone(), src, Role::SourceTrain, &train_labels, None),
        set(src_val_id.clone(), src, Role::SourceVal, &val_labels, None),
    ];
    for t in &config.target_languages {
        eval_sets.push(set(
            format!("{}-train", t.code),
            &t.code,
            Role::TranslatedTrain,
            &train_labels,
            Some(src_train_id.clone()),
        ));
        eval_sets.push(set(format!("{}-val", t.code), &t.code, Role::TargetVal, &val_labels, None));
    }

    let grid: Vec<(i64, &ScheduleEntry)> = config
        .seeds
        .iter()
        .flat_map(|&s| config.train_error_schedule.iter().map(move |e| (s, e)))
        .collect();
    let checkpoints = grid
        .par_iter()
        .map(|&(seed, entry)| {
            let ch = Channels {
                config,
                k,
                seed,
                step: entry.step,
                p: entry.train_error,
            };
            let mut predictions = BTreeMap::new();
            let source = ch.source_train(&train_labels);
            for t in &config.target_languages {
                let tr = ch.translated(&train_labels, &source, &t.code, t.transfer_loss);
                predictions.insert(format!("{}-train", t.code), records(&train_labels, tr));
                let val = ch.validation(&val_labels, &t.code, t.transfer_loss);
                predictions.insert(format!("{}-val", t.code), records(&val_labels, val));
            }
            predictions.insert(src_val_id.clone(), records(&val_labels, ch.validation(&val_labels, src, 0.0)));
            predictions.insert(src_train_id.clone(), records(&train_labels, source));
            CheckpointEval {
                checkpoint_id: checkpoint_id(seed, entry.step),
                seed,
                step: entry.step,
                predictions,
            }
        })
        .collect();

    Ok(CheckpointPool {
        pool_id: format!("sim-{}", config.data_seed),
        model_name: config.model_name.clone(),
        algorithm_name: "simulated".into(),
        num_labels: k,
        label_map: BTreeMap::new(),
        eval_sets,
        checkpoints,
    })
}
