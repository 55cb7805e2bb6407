use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::io::read_jsonl;
use crate::error::{Error, Result};

/// One pre-pooled sentence vector as written by the exporter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub example_id: String,
    pub language: String,
    pub vector: Vec<f64>,
}

pub fn read_embeddings(path: &Path) -> Result<Vec<EmbeddingRecord>> {
    read_jsonl(path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingPair {
    pub example_id: String,
    pub vector_a: Vec<f64>,
    pub vector_b: Vec<f64>,
}

/// Translation-aligned sentence vectors for two languages, all of one
/// dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingPairSet {
    pub language_a: String,
    pub language_b: String,
    pub pairs: Vec<EmbeddingPair>,
}

impl EmbeddingPairSet {
    pub fn new(
        language_a: impl Into<String>,
        language_b: impl Into<String>,
        pairs: Vec<EmbeddingPair>,
    ) -> Result<Self> {
        if let Some(first) = pairs.first() {
            let dim = first.vector_a.len();
            if dim == 0 {
                return Err(Error::DimensionMismatch { expected: 1, got: 0 });
            }
            for p in &pairs {
                for v in [&p.vector_a, &p.vector_b] {
                    if v.len() != dim {
                        return Err(Error::DimensionMismatch {
                            expected: dim,
                            got: v.len(),
                        });
                    }
                }
            }
        }
        Ok(Self {
            language_a: language_a.into(),
            language_b: language_b.into(),
            pairs,
        })
    }

    /// Joins the records of two languages by example id. Every id must be
    /// present exactly once on each side.
    pub fn assemble(language_a: &str, language_b: &str, records: &[EmbeddingRecord]) -> Result<Self> {
        let side = |lang: &str| -> Result<BTreeMap<&str, &Vec<f64>>> {
            let mut map = BTreeMap::new();
            for r in records.iter().filter(|r| r.language == lang) {
                if map.insert(r.example_id.as_str(), &r.vector).is_some() {
                    return Err(Error::schema(
                        format!("embeddings for '{lang}'"),
                        format!("duplicate id \"{}\"", r.example_id),
                    ));
                }
            }
            Ok(map)
        };
        let a = side(language_a)?;
        let b = side(language_b)?;
        if let Some(id) = a.keys().find(|id| !b.contains_key(*id)) {
            return Err(Error::Alignment(format!(
                "embedding \"{id}\" present for '{language_a}' but not '{language_b}'"
            )));
        }
        if let Some(id) = b.keys().find(|id| !a.contains_key(*id)) {
            return Err(Error::Alignment(format!(
                "embedding \"{id}\" present for '{language_b}' but not '{language_a}'"
            )));
        }
        let pairs = a
            .into_iter()
            .map(|(id, va)| EmbeddingPair {
                example_id: id.to_string(),
                vector_a: va.clone(),
                vector_b: b[id].clone(),
            })
            .collect();
        Self::new(language_a, language_b, pairs)
    }

    pub fn dimension(&self) -> Option<usize> {
        self.pairs.first().map(|p| p.vector_a.len())
    }
}
