//! Transfer error, its three-way decomposition, the transfer-gap baseline
//! and IGap.
//!
//! Every error rate is kept as an exact mismatch count over a denominator
//! and combined in rational arithmetic, so
//! `e == g_inter + g_intra + e_train` holds exactly for every checkpoint.
//! Floats only appear at the formatting boundary.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use num_rational::Ratio;
use rayon::prelude::*;

use crate::data::{CheckpointEval, CheckpointPool, Direction, EvalSet, PredictionRecord};
use crate::error::{Error, Result};

/// Exact rational value of a rate or a difference of rates.
pub type Fraction = Ratio<i64>;

pub fn to_f64(x: Fraction) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

/// Grid for quantizing user-supplied e' and epsilon before exact comparison.
const PARAM_SCALE: i64 = 1_000_000_000;

/// Converts a decimal parameter such as 0.025 to the rational it denotes,
/// to 9 decimal places.
pub fn param_fraction(x: f64) -> Fraction {
    Ratio::new((x * PARAM_SCALE as f64).round() as i64, PARAM_SCALE)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ErrorCount {
    pub mismatches: u64,
    pub total: u64,
}

impl ErrorCount {
    pub fn fraction(&self) -> Fraction {
        Ratio::new(self.mismatches as i64, self.total as i64)
    }

    pub fn rate(&self) -> f64 {
        self.mismatches as f64 / self.total as f64
    }

    pub fn accuracy(&self) -> Fraction {
        Fraction::from_integer(1) - self.fraction()
    }
}

fn sorted_by_id<T>(items: &[T], id: impl Fn(&T) -> &str) -> bool {
    items.windows(2).all(|w| id(&w[0]) < id(&w[1]))
}

/// Counts predictions that disagree with the gold labels of `golds`.
///
/// Predictions must cover the gold ids exactly: one record per id, no
/// extras.
pub fn error_count(predictions: &[PredictionRecord], golds: &EvalSet) -> Result<ErrorCount> {
    if golds.is_empty() {
        return Err(Error::EmptySet(format!("eval set '{}'", golds.eval_set_id)));
    }
    let misaligned = |detail: String| {
        Error::Alignment(format!("predictions vs eval set '{}': {detail}", golds.eval_set_id))
    };
    if predictions.len() != golds.len() {
        return Err(misaligned(format!(
            "{} predictions for {} examples",
            predictions.len(),
            golds.len()
        )));
    }
    let mut mismatches = 0;
    if sorted_by_id(predictions, |p| &p.example_id)
        && sorted_by_id(&golds.labels, |l| &l.example_id)
    {
        for (p, g) in predictions.iter().zip(&golds.labels) {
            if p.example_id != g.example_id {
                return Err(misaligned(format!(
                    "example_id \"{}\" not matched by \"{}\"",
                    p.example_id, g.example_id
                )));
            }
            mismatches += u64::from(p.predicted_label != g.label);
        }
    } else {
        let gold: HashMap<&str, u32> =
            golds.labels.iter().map(|l| (l.example_id.as_str(), l.label)).collect();
        if gold.len() != golds.len() {
            return Err(misaligned("duplicate gold ids".into()));
        }
        let mut seen = std::collections::HashSet::with_capacity(predictions.len());
        for p in predictions {
            let Some(label) = gold.get(p.example_id.as_str()) else {
                return Err(misaligned(format!("example_id \"{}\" not in labels", p.example_id)));
            };
            if !seen.insert(p.example_id.as_str()) {
                return Err(misaligned(format!("duplicate prediction \"{}\"", p.example_id)));
            }
            mismatches += u64::from(p.predicted_label != *label);
        }
    }
    Ok(ErrorCount {
        mismatches,
        total: golds.len() as u64,
    })
}

/// Fraction of mispredicted examples.
pub fn error_rate(predictions: &[PredictionRecord], golds: &EvalSet) -> Result<f64> {
    error_count(predictions, golds).map(|c| c.rate())
}

/// Interlingual gap, intralingual gap and training error of one checkpoint
/// for one direction. All components are exact.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionReport {
    pub checkpoint_id: String,
    pub seed: i64,
    pub step: u64,
    pub source_language: String,
    pub target_language: String,
    pub train: ErrorCount,
    pub translated: ErrorCount,
    pub target: ErrorCount,
    pub e_train: Fraction,
    pub g_inter: Fraction,
    pub g_intra: Fraction,
    pub e: Fraction,
    /// Source minus target validation accuracy, when the pool has a source
    /// validation set.
    pub transfer_gap: Option<Fraction>,
}

impl DecompositionReport {
    /// `e - (g_inter + g_intra + e_train)`; zero by construction.
    pub fn identity_residual(&self) -> Fraction {
        self.e - (self.g_inter + self.g_intra + self.e_train)
    }
}

/// Decomposes the target-language error of `ckpt`.
///
/// Predictions on the translated training set are scored against the
/// source training labels, pairing examples by id.
pub fn decompose(
    ckpt: &CheckpointEval,
    source_train: &EvalSet,
    translated_train: &EvalSet,
    target_val: &EvalSet,
) -> Result<DecompositionReport> {
    if translated_train.translation_of.as_deref() != Some(source_train.eval_set_id.as_str()) {
        return Err(Error::Alignment(format!(
            "eval set '{}' is not a translation of '{}'",
            translated_train.eval_set_id, source_train.eval_set_id
        )));
    }
    if translated_train.len() != source_train.len() {
        return Err(Error::Alignment(format!(
            "translation coverage {}/{} for '{}'",
            translated_train.len(),
            source_train.len(),
            translated_train.eval_set_id
        )));
    }
    let train = error_count(ckpt.predictions_for(&source_train.eval_set_id)?, source_train)?;
    let translated = error_count(
        ckpt.predictions_for(&translated_train.eval_set_id)?,
        source_train,
    )?;
    let target = error_count(ckpt.predictions_for(&target_val.eval_set_id)?, target_val)?;

    let e_train = train.fraction();
    let err_translated = translated.fraction();
    let e = target.fraction();
    Ok(DecompositionReport {
        checkpoint_id: ckpt.checkpoint_id.clone(),
        seed: ckpt.seed,
        step: ckpt.step,
        source_language: source_train.language.clone(),
        target_language: target_val.language.clone(),
        train,
        translated,
        target,
        e_train,
        g_inter: err_translated - e_train,
        g_intra: e - err_translated,
        e,
        transfer_gap: None,
    })
}

/// Source-validation accuracy minus target-validation accuracy.
pub fn transfer_gap(ckpt: &CheckpointEval, source_val: &EvalSet, target_val: &EvalSet) -> Result<Fraction> {
    let s = error_count(ckpt.predictions_for(&source_val.eval_set_id)?, source_val)?;
    let t = error_count(ckpt.predictions_for(&target_val.eval_set_id)?, target_val)?;
    Ok(s.accuracy() - t.accuracy())
}

/// Transfer gap for every checkpoint of the pool in one direction.
pub fn transfer_gaps(pool: &CheckpointPool, direction: &Direction) -> Result<Vec<(String, i64, u64, Fraction)>> {
    let (source_val, target_val) = pool.validation_pair(direction)?;
    pool.checkpoints
        .par_iter()
        .map(|c| Ok((c.checkpoint_id.clone(), c.seed, c.step, transfer_gap(c, source_val, target_val)?)))
        .collect()
}

/// Decomposes every checkpoint of the pool for one direction, in pool
/// order. The transfer gap is filled in when a source validation set
/// exists.
pub fn decompose_pool(pool: &CheckpointPool, direction: &Direction) -> Result<Vec<DecompositionReport>> {
    let sets = pool.direction_sets(direction)?;
    pool.checkpoints
        .par_iter()
        .map(|c| {
            let mut r = decompose(c, sets.source_train, sets.translated_train, sets.target_val)?;
            if let Some(source_val) = sets.source_val {
                r.transfer_gap = Some(transfer_gap(c, source_val, sets.target_val)?);
            }
            Ok(r)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct IGapResult {
    pub e_prime: f64,
    pub epsilon: f64,
    /// Minimum interlingual gap over qualifying checkpoints.
    pub value: Option<Fraction>,
    pub witness: Option<String>,
    pub qualifying_count: usize,
}

impl IGapResult {
    pub fn value_f64(&self) -> Option<f64> {
        self.value.map(to_f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IGapCurve {
    pub epsilon: f64,
    /// Ordered by e' descending.
    pub points: Vec<(f64, IGapResult)>,
}

fn witness_order(a: &DecompositionReport, b: &DecompositionReport) -> Ordering {
    a.g_inter
        .cmp(&b.g_inter)
        .then(a.e_train.cmp(&b.e_train))
        .then(a.step.cmp(&b.step))
        .then(a.seed.cmp(&b.seed))
        .then_with(|| a.checkpoint_id.cmp(&b.checkpoint_id))
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    Ok(())
}

/// IGap over precomputed decompositions: the smallest interlingual gap
/// among checkpoints with `0 <= e_train - e_prime < epsilon`.
pub fn igap_from_reports(reports: &[DecompositionReport], e_prime: f64, epsilon: f64) -> Result<IGapResult> {
    check_epsilon(epsilon)?;
    let lo = param_fraction(e_prime);
    let hi = lo + param_fraction(epsilon);
    let qualifying: Vec<&DecompositionReport> = reports
        .iter()
        .filter(|r| r.e_train >= lo && r.e_train < hi)
        .collect();
    let best = qualifying.iter().copied().min_by(|a, b| witness_order(a, b));
    Ok(IGapResult {
        e_prime,
        epsilon,
        value: best.map(|r| r.g_inter),
        witness: best.map(|r| r.checkpoint_id.clone()),
        qualifying_count: qualifying.len(),
    })
}

/// IGap for one direction, pooling checkpoints across all seeds and steps.
pub fn igap(pool: &CheckpointPool, direction: &Direction, e_prime: f64, epsilon: f64) -> Result<IGapResult> {
    check_epsilon(epsilon)?;
    igap_from_reports(&decompose_pool(pool, direction)?, e_prime, epsilon)
}

/// IGap computed separately within each seed's checkpoints.
pub fn igap_per_seed(
    reports: &[DecompositionReport],
    e_prime: f64,
    epsilon: f64,
) -> Result<BTreeMap<i64, IGapResult>> {
    let mut by_seed: BTreeMap<i64, Vec<DecompositionReport>> = BTreeMap::new();
    for r in reports {
        by_seed.entry(r.seed).or_default().push(r.clone());
    }
    by_seed
        .into_iter()
        .map(|(seed, rs)| Ok((seed, igap_from_reports(&rs, e_prime, epsilon)?)))
        .collect()
}

fn normalize_grid(grid: &[f64]) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(Error::Config("IGap grid is empty".into()));
    }
    if let Some(bad) = grid.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::Config(format!("grid value {bad} outside [0, 1]")));
    }
    let mut g = grid.to_vec();
    g.sort_by(|a, b| b.total_cmp(a));
    g.dedup();
    Ok(g)
}

pub fn igap_curve_from_reports(reports: &[DecompositionReport], grid: &[f64], epsilon: f64) -> Result<IGapCurve> {
    check_epsilon(epsilon)?;
    let points = normalize_grid(grid)?
        .into_iter()
        .map(|e_prime| Ok((e_prime, igap_from_reports(reports, e_prime, epsilon)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(IGapCurve { epsilon, points })
}

/// IGap at every grid value, reusing one set of decompositions.
pub fn igap_curve(pool: &CheckpointPool, direction: &Direction, grid: &[f64], epsilon: f64) -> Result<IGapCurve> {
    check_epsilon(epsilon)?;
    normalize_grid(grid)?;
    igap_curve_from_reports(&decompose_pool(pool, direction)?, grid, epsilon)
}

/// Descending grid `start, start - step, ...` down to `stop` inclusive.
pub fn descending_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if step.is_nan() || step <= 0.0 || start < stop || !start.is_finite() || !stop.is_finite() {
        return Err(Error::Config(format!("invalid grid {start}:{stop}:{step}")));
    }
    let count = ((start - stop) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|i| ((start - i as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

/// Target-validation accuracy per target, averaged over seeds at each
/// seed's last saved step.
pub fn final_target_accuracy(pool: &CheckpointPool, direction: &Direction) -> Result<f64> {
    let (_, target_val) = pool.validation_pair(direction)?;
    let mut last: BTreeMap<i64, &CheckpointEval> = BTreeMap::new();
    for c in &pool.checkpoints {
        let e = last.entry(c.seed).or_insert(c);
        if c.step > e.step {
            *e = c;
        }
    }
    if last.is_empty() {
        return Err(Error::EmptySet(format!("pool '{}' has no checkpoints", pool.pool_id)));
    }
    let accs = last
        .values()
        .map(|c| Ok(to_f64(error_count(c.predictions_for(&target_val.eval_set_id)?, target_val)?.accuracy())))
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean(&accs).expect("non-empty"))
}

/// Unweighted arithmetic mean.
pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}
