//! Transfer-direction ranking: turning per-target scores into target-language
//! orders and scoring a predicted order against the gold order by pairwise
//! concordance.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use crate::data::EmbeddingPairSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreDirection {
    LowerIsBetter,
    HigherIsBetter,
}

/// A strict best-first order of target languages for one source language.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ranking {
    pub source_language: String,
    pub ordered_targets: Vec<String>,
}

impl Ranking {
    pub fn new(source_language: impl Into<String>, ordered_targets: Vec<String>) -> Result<Self> {
        let source_language = source_language.into();
        let mut seen = HashSet::new();
        for t in &ordered_targets {
            if *t == source_language {
                return Err(Error::InvalidRanking(format!("source '{t}' listed as a target")));
            }
            if !seen.insert(t.as_str()) {
                return Err(Error::InvalidRanking(format!("duplicate target '{t}'")));
            }
        }
        Ok(Self {
            source_language,
            ordered_targets,
        })
    }

    pub fn len(&self) -> usize {
        self.ordered_targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ordered_targets.is_empty()
    }

    pub fn reversed(&self) -> Self {
        Self {
            source_language: self.source_language.clone(),
            ordered_targets: self.ordered_targets.iter().rev().cloned().collect(),
        }
    }

    fn positions(&self) -> HashMap<&str, usize> {
        self.ordered_targets
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i))
            .collect()
    }
}

/// Per-target scores for one source language.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub source_language: String,
    pub scores: BTreeMap<String, f64>,
    pub direction: ScoreDirection,
}

impl ScoreTable {
    pub fn new(
        source_language: impl Into<String>,
        scores: BTreeMap<String, f64>,
        direction: ScoreDirection,
    ) -> Result<Self> {
        let table = Self {
            source_language: source_language.into(),
            scores,
            direction,
        };
        table.check()?;
        Ok(table)
    }

    fn check(&self) -> Result<()> {
        if self.scores.is_empty() {
            return Err(Error::EmptySet(format!("score table for '{}'", self.source_language)));
        }
        if let Some((lang, _)) = self.scores.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteScore(lang.clone()));
        }
        Ok(())
    }

    /// Number of target pairs whose scores are exactly equal. These pairs
    /// are ordered by language code rather than by score.
    pub fn tie_count(&self) -> usize {
        let mut counts: HashMap<u64, usize> = HashMap::new();
        for v in self.scores.values() {
            // +0.0 and -0.0 compare equal, so fold them onto one key.
            let key = if *v == 0.0 { 0 } else { v.to_bits() };
            *counts.entry(key).or_default() += 1;
        }
        counts.values().map(|&k| k * (k - 1) / 2).sum()
    }
}

/// Sorts targets best-first; exact ties fall back to ascending language code.
pub fn rank_by_scores(table: &ScoreTable) -> Result<Ranking> {
    table.check()?;
    let mut entries: Vec<(&String, f64)> = table.scores.iter().map(|(k, v)| (k, *v)).collect();
    entries.sort_by(|(la, a), (lb, b)| {
        let by_score = match table.direction {
            ScoreDirection::LowerIsBetter => a.total_cmp(b),
            ScoreDirection::HigherIsBetter => b.total_cmp(a),
        };
        // total_cmp separates -0.0 from 0.0; those are a tie here.
        let by_score = if a == b { std::cmp::Ordering::Equal } else { by_score };
        by_score.then_with(|| la.cmp(lb))
    });
    Ranking::new(
        table.source_language.clone(),
        entries.into_iter().map(|(k, _)| k.clone()).collect(),
    )
}

/// Gold order from measured target-language accuracies, best first.
pub fn gold_ranking(source_language: &str, accuracies: &BTreeMap<String, f64>) -> Result<Ranking> {
    rank_by_scores(&ScoreTable::new(
        source_language,
        accuracies.clone(),
        ScoreDirection::HigherIsBetter,
    )?)
}

/// Concordant pairs out of all unordered target pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Concordance {
    pub concordant: u64,
    pub pairs: u64,
}

impl Concordance {
    pub fn accuracy(&self) -> f64 {
        self.concordant as f64 / self.pairs as f64
    }
}

pub fn tdr_concordance(gold: &Ranking, predicted: &Ranking) -> Result<Concordance> {
    let gold_pos = gold.positions();
    let pred_pos = predicted.positions();
    let same_set = gold_pos.len() == pred_pos.len() && gold_pos.keys().all(|k| pred_pos.contains_key(k));
    if !same_set {
        let mut g = gold.ordered_targets.clone();
        let mut p = predicted.ordered_targets.clone();
        g.sort();
        p.sort();
        return Err(Error::LanguageSetMismatch { gold: g, predicted: p });
    }
    let n = gold.len();
    if n < 2 {
        return Err(Error::DegenerateRanking(n));
    }
    // Walk the gold order: for i < j in gold, the pair is concordant iff the
    // predicted order agrees.
    let pred_index: Vec<usize> = gold.ordered_targets.iter().map(|t| pred_pos[t.as_str()]).collect();
    let mut concordant = 0u64;
    for i in 0..n {
        for j in i + 1..n {
            concordant += u64::from(pred_index[i] < pred_index[j]);
        }
    }
    Ok(Concordance {
        concordant,
        pairs: (n * (n - 1) / 2) as u64,
    })
}

/// Fraction of target pairs ordered the same way in both rankings.
pub fn tdr_accuracy(gold: &Ranking, predicted: &Ranking) -> Result<f64> {
    tdr_concordance(gold, predicted).map(|c| c.accuracy())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SimilarityMetric {
    L2,
    Dot,
    Cos,
}

impl SimilarityMetric {
    pub fn direction(self) -> ScoreDirection {
        match self {
            SimilarityMetric::L2 => ScoreDirection::LowerIsBetter,
            SimilarityMetric::Dot | SimilarityMetric::Cos => ScoreDirection::HigherIsBetter,
        }
    }
}

impl fmt::Display for SimilarityMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SimilarityMetric::L2 => "l2",
            SimilarityMetric::Dot => "dot",
            SimilarityMetric::Cos => "cos",
        })
    }
}

impl FromStr for SimilarityMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" => Ok(SimilarityMetric::L2),
            "dot" => Ok(SimilarityMetric::Dot),
            "cos" | "cosine" => Ok(SimilarityMetric::Cos),
            other => Err(Error::Config(format!("unknown similarity metric '{other}'"))),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean over pairs of the L2 distance, inner product or cosine between the
/// two sides' sentence vectors.
pub fn similarity_score(pairs: &EmbeddingPairSet, metric: SimilarityMetric) -> Result<f64> {
    if pairs.pairs.is_empty() {
        return Err(Error::EmptySet(format!(
            "embedding pairs {}-{}",
            pairs.language_a, pairs.language_b
        )));
    }
    let dim = pairs.pairs[0].vector_a.len();
    let mut total = 0.0;
    for p in &pairs.pairs {
        for v in [&p.vector_a, &p.vector_b] {
            if v.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: v.len() });
            }
        }
        let (a, b) = (&p.vector_a, &p.vector_b);
        total += match metric {
            SimilarityMetric::L2 => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            SimilarityMetric::Dot => dot(a, b),
            SimilarityMetric::Cos => {
                let na = dot(a, a).sqrt();
                let nb = dot(b, b).sqrt();
                if na == 0.0 || nb == 0.0 {
                    return Err(Error::ZeroVector(p.example_id.clone()));
                }
                (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
            }
        };
    }
    Ok(total / pairs.pairs.len() as f64)
}

/// Similarity score per target language against one source.
pub fn similarity_table(
    source_language: &str,
    per_target: &BTreeMap<String, EmbeddingPairSet>,
    metric: SimilarityMetric,
) -> Result<ScoreTable> {
    use rayon::prelude::*;
    let scores = per_target
        .par_iter()
        .map(|(t, pairs)| Ok((t.clone(), similarity_score(pairs, metric)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    ScoreTable::new(source_language, scores, metric.direction())
}

pub fn predict_ranking_from_similarity(
    source_language: &str,
    per_target: &BTreeMap<String, EmbeddingPairSet>,
    metric: SimilarityMetric,
) -> Result<Ranking> {
    rank_by_scores(&similarity_table(source_language, per_target, metric)?)
}

/// Lower-is-better table from per-target IGap values. A target without an
/// IGap value cannot be ranked.
pub fn igap_table(source_language: &str, values: &BTreeMap<String, Option<f64>>) -> Result<ScoreTable> {
    let scores = values
        .iter()
        .map(|(t, v)| {
            v.map(|v| (t.clone(), v)).ok_or_else(|| {
                Error::EmptySet(format!("no IGap value for {source_language}-{t}; cannot rank a hole"))
            })
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    ScoreTable::new(source_language, scores, ScoreDirection::LowerIsBetter)
}
