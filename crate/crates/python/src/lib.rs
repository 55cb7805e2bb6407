//! Python bindings: pools, decompositions, IGap, rankings, random labels and
//! the simulator. Error rates come back as floats; the exact fractions stay
//! on the Rust side.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use igap_core::corpus::{self, ParallelCorpus, SentencePair};
use igap_core::data::{
    self, CheckpointPool, Direction, EmbeddingPair, EmbeddingPairSet, EvalSet, ExampleLabel, Role,
};
use igap_core::metrics::{self, to_f64, DecompositionReport, IGapResult};
use igap_core::ranking::{self, Ranking, ScoreDirection, ScoreTable, SimilarityMetric};
use igap_core::simulator::{self, SimConfig};

create_exception!(igap, IgapError, PyException);

fn err(e: igap_core::Error) -> PyErr {
    IgapError::new_err(e.to_string())
}

fn report_dict<'py>(py: Python<'py>, r: &DecompositionReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("checkpoint_id", &r.checkpoint_id)?;
    d.set_item("seed", r.seed)?;
    d.set_item("step", r.step)?;
    d.set_item("source", &r.source_language)?;
    d.set_item("target", &r.target_language)?;
    d.set_item("e_train", to_f64(r.e_train))?;
    d.set_item("g_inter", to_f64(r.g_inter))?;
    d.set_item("g_intra", to_f64(r.g_intra))?;
    d.set_item("e", to_f64(r.e))?;
    d.set_item("transfer_gap", r.transfer_gap.map(to_f64))?;
    Ok(d)
}

fn igap_dict<'py>(py: Python<'py>, r: &IGapResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("e_prime", r.e_prime)?;
    d.set_item("epsilon", r.epsilon)?;
    d.set_item("value", r.value_f64())?;
    d.set_item("witness", r.witness.clone())?;
    d.set_item("qualifying_count", r.qualifying_count)?;
    Ok(d)
}

/// A loaded checkpoint pool.
#[pyclass(name = "Pool", module = "igap", frozen)]
pub struct PyPool {
    inner: CheckpointPool,
}

#[pymethods]
impl PyPool {
    #[getter]
    fn pool_id(&self) -> &str {
        &self.inner.pool_id
    }

    #[getter]
    fn model_name(&self) -> &str {
        &self.inner.model_name
    }

    #[getter]
    fn num_labels(&self) -> u32 {
        self.inner.num_labels
    }

    #[getter]
    fn languages(&self) -> Vec<String> {
        self.inner.languages()
    }

    #[getter]
    fn checkpoint_ids(&self) -> Vec<String> {
        self.inner.checkpoints.iter().map(|c| c.checkpoint_id.clone()).collect()
    }

    fn target_languages(&self, source: &str) -> Vec<String> {
        self.inner.target_languages(source)
    }

    /// Every validation issue as a formatted line; empty when clean.
    fn validate(&self) -> Vec<String> {
        data::validate_pool(&self.inner).issues.iter().map(|i| i.to_string()).collect()
    }

    fn decompose<'py>(&self, py: Python<'py>, source: &str, target: &str) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let reports = metrics::decompose_pool(&self.inner, &Direction::new(source, target)).map_err(err)?;
        reports.iter().map(|r| report_dict(py, r)).collect()
    }

    /// `(checkpoint_id, seed, step, gap)` per checkpoint.
    fn transfer_gaps(&self, source: &str, target: &str) -> PyResult<Vec<(String, i64, u64, f64)>> {
        let gaps = metrics::transfer_gaps(&self.inner, &Direction::new(source, target)).map_err(err)?;
        Ok(gaps.into_iter().map(|(id, seed, step, g)| (id, seed, step, to_f64(g))).collect())
    }

    #[pyo3(signature = (source, target, e_prime = 0.0, epsilon = 0.001))]
    fn igap<'py>(
        &self,
        py: Python<'py>,
        source: &str,
        target: &str,
        e_prime: f64,
        epsilon: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let r = metrics::igap(&self.inner, &Direction::new(source, target), e_prime, epsilon).map_err(err)?;
        igap_dict(py, &r)
    }

    /// Per-seed IGap keyed by seed.
    #[pyo3(signature = (source, target, e_prime = 0.0, epsilon = 0.001))]
    fn igap_per_seed<'py>(
        &self,
        py: Python<'py>,
        source: &str,
        target: &str,
        e_prime: f64,
        epsilon: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let reports = metrics::decompose_pool(&self.inner, &Direction::new(source, target)).map_err(err)?;
        let by_seed = metrics::igap_per_seed(&reports, e_prime, epsilon).map_err(err)?;
        let out = PyDict::new(py);
        for (seed, r) in &by_seed {
            out.set_item(seed, igap_dict(py, r)?)?;
        }
        Ok(out)
    }

    /// `(e_prime, value_or_None)` from the highest e' down.
    #[pyo3(signature = (source, target, grid = None, epsilon = 0.025))]
    fn igap_curve(
        &self,
        source: &str,
        target: &str,
        grid: Option<Vec<f64>>,
        epsilon: f64,
    ) -> PyResult<Vec<(f64, Option<f64>)>> {
        let grid = match grid {
            Some(g) => g,
            None => metrics::descending_grid(0.2, 0.0, 0.025).map_err(err)?,
        };
        let curve =
            metrics::igap_curve(&self.inner, &Direction::new(source, target), &grid, epsilon).map_err(err)?;
        Ok(curve.points.iter().map(|(e, r)| (*e, r.value_f64())).collect())
    }

    fn final_target_accuracy(&self, source: &str, target: &str) -> PyResult<f64> {
        metrics::final_target_accuracy(&self.inner, &Direction::new(source, target)).map_err(err)
    }

    /// Writes the pool under `directory` and returns the manifest path.
    fn write(&self, directory: PathBuf) -> PyResult<PathBuf> {
        data::write_pool(&self.inner, &directory).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.checkpoints.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Pool(pool_id={:?}, checkpoints={}, eval_sets={})",
            self.inner.pool_id,
            self.inner.checkpoints.len(),
            self.inner.eval_sets.len()
        )
    }
}

/// Loads and validates a pool manifest.
#[pyfunction]
fn load_pool(manifest: PathBuf) -> PyResult<PyPool> {
    Ok(PyPool {
        inner: data::load_pool(&manifest).map_err(err)?,
    })
}

/// Simulates a pool from a JSON config string.
#[pyfunction]
fn simulate(config_json: &str) -> PyResult<PyPool> {
    let cfg = SimConfig::from_json(config_json).map_err(err)?;
    Ok(PyPool {
        inner: simulator::simulate_pool(&cfg).map_err(err)?,
    })
}

#[pyfunction]
fn expected_metrics<'py>(py: Python<'py>, config_json: &str, step: u64, target: &str) -> PyResult<Bound<'py, PyDict>> {
    let cfg = SimConfig::from_json(config_json).map_err(err)?;
    let m = simulator::expected_metrics(&cfg, step, target).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("e_train", m.e_train)?;
    d.set_item("err_translated", m.err_translated)?;
    d.set_item("g_inter", m.g_inter)?;
    d.set_item("g_intra", m.g_intra)?;
    d.set_item("e", m.e)?;
    Ok(d)
}

/// Pairwise-order accuracy of `predicted` against `gold` (best first).
#[pyfunction]
fn tdr_accuracy(gold: Vec<String>, predicted: Vec<String>) -> PyResult<f64> {
    let g = Ranking::new("", gold).map_err(err)?;
    let p = Ranking::new("", predicted).map_err(err)?;
    ranking::tdr_accuracy(&g, &p).map_err(err)
}

/// Targets best first; exact ties fall back to language code order.
#[pyfunction]
#[pyo3(signature = (scores, higher_is_better = false))]
fn rank_by_scores(scores: BTreeMap<String, f64>, higher_is_better: bool) -> PyResult<Vec<String>> {
    let direction = if higher_is_better {
        ScoreDirection::HigherIsBetter
    } else {
        ScoreDirection::LowerIsBetter
    };
    let table = ScoreTable::new("", scores, direction).map_err(err)?;
    Ok(ranking::rank_by_scores(&table).map_err(err)?.ordered_targets)
}

/// Mean pairwise `l2`, `dot` or `cos` between row-aligned vectors.
#[pyfunction]
#[pyo3(signature = (vectors_a, vectors_b, metric = "cos"))]
fn similarity_score(vectors_a: Vec<Vec<f64>>, vectors_b: Vec<Vec<f64>>, metric: &str) -> PyResult<f64> {
    let metric: SimilarityMetric = metric.parse().map_err(|e: igap_core::Error| PyValueError::new_err(e.to_string()))?;
    if vectors_a.len() != vectors_b.len() {
        return Err(PyValueError::new_err(format!(
            "{} vectors on one side, {} on the other",
            vectors_a.len(),
            vectors_b.len()
        )));
    }
    let pairs = vectors_a
        .into_iter()
        .zip(vectors_b)
        .enumerate()
        .map(|(i, (a, b))| EmbeddingPair {
            example_id: i.to_string(),
            vector_a: a,
            vector_b: b,
        })
        .collect();
    let set = EmbeddingPairSet::new("a", "b", pairs).map_err(err)?;
    ranking::similarity_score(&set, metric).map_err(err)
}

/// One keyed random label per example id.
#[pyfunction]
#[pyo3(signature = (example_ids, seed, num_labels = 2))]
fn gen_random_labels(example_ids: Vec<String>, seed: i64, num_labels: u32) -> PyResult<BTreeMap<String, u32>> {
    let pairs = example_ids
        .into_iter()
        .map(|id| SentencePair {
            example_id: id,
            text_a: "-".into(),
            text_b: "-".into(),
        })
        .collect();
    let corpus = ParallelCorpus::new("a", "b", pairs).map_err(err)?;
    Ok(corpus::gen_random_labels(&corpus, seed, num_labels).map_err(err)?.labels)
}

/// Resamples `round(ratio * n)` labels uniformly over `num_labels` classes.
#[pyfunction]
fn corrupt_labels(labels: BTreeMap<String, u32>, ratio: f64, seed: i64, num_labels: u32) -> PyResult<BTreeMap<String, u32>> {
    let set = EvalSet {
        eval_set_id: "labels".into(),
        language: String::new(),
        role: Role::Generic,
        num_labels,
        labels: labels
            .into_iter()
            .map(|(example_id, label)| ExampleLabel { example_id, label })
            .collect(),
        translation_of: None,
    };
    let out = corpus::corrupt_labels(&set, ratio, seed).map_err(err)?;
    Ok(out.labels.into_iter().map(|l| (l.example_id, l.label)).collect())
}

/// Runs the command line with `argv` (without the program name) and returns
/// the exit code.
#[pyfunction]
fn cli(argv: Vec<String>) -> i32 {
    igap_core::cli::run(std::iter::once("igap".to_string()).chain(argv))
}

#[pymodule]
fn igap(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("IgapError", m.py().get_type::<IgapError>())?;
    m.add_class::<PyPool>()?;
    m.add_function(wrap_pyfunction!(load_pool, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(expected_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(tdr_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(rank_by_scores, m)?)?;
    m.add_function(wrap_pyfunction!(similarity_score, m)?)?;
    m.add_function(wrap_pyfunction!(gen_random_labels, m)?)?;
    m.add_function(wrap_pyfunction!(corrupt_labels, m)?)?;
    m.add_function(wrap_pyfunction!(cli, m)?)?;
    Ok(())
}
