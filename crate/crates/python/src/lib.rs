//! Python bindings: CRF inference, metrics, experiment graphs, training and
//! checkpointed models.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;
use sdpkit::crf::{CrfModel, CrfParams, EmissionTable, LabelSet};
use sdpkit::infer::{DataSplit, InferError, LoadedModel};
use serde::Serialize;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Converts any serializable value into Python objects via `json.loads`.
fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn infer_err(e: InferError) -> PyErr {
    match e {
        InferError::Io { .. } => PyOSError::new_err(e.to_string()),
        InferError::Engine(_) | InferError::Pipeline(_) => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn flatten(rows: &[Vec<f64>], cols: usize, what: &str) -> PyResult<Vec<f64>> {
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err(format!("{what} rows must have {cols} entries")));
    }
    Ok(rows.concat())
}

/// Linear-chain CRF over dense emission scores.
#[pyclass(name = "LinearChainCrf", module = "sdpkit")]
struct PyCrf {
    model: CrfModel,
}

#[pymethods]
impl PyCrf {
    /// `transitions[prev][next]`; `start` and `end` default to zeros.
    #[new]
    #[pyo3(signature = (labels, transitions, start=None, end=None))]
    fn new(labels: Vec<String>, transitions: Vec<Vec<f64>>, start: Option<Vec<f64>>, end: Option<Vec<f64>>) -> PyResult<Self> {
        let labels = LabelSet::new(labels).map_err(value_err)?;
        let k = labels.len();
        let mut params = CrfParams::zeros(k, 0, 0);
        if transitions.len() != k {
            return Err(PyValueError::new_err(format!("transitions must be {k} x {k}")));
        }
        params.transitions = flatten(&transitions, k, "transitions")?;
        params.start = start.unwrap_or_else(|| vec![0.0; k]);
        params.end = end.unwrap_or_else(|| vec![0.0; k]);
        let model = CrfModel::new(labels, 0, 0, 0.0).with_params(params).map_err(value_err)?;
        Ok(PyCrf { model })
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.model.labels().labels().to_vec()
    }

    fn log_partition(&self, emissions: Vec<Vec<f64>>) -> PyResult<f64> {
        self.model.log_partition(&self.table(&emissions)?).map_err(value_err)
    }

    /// Per-position label marginals, `L x K`.
    fn marginals(&self, emissions: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        self.model.marginals(&self.table(&emissions)?).map_err(value_err)
    }

    /// Pairwise marginals for each adjacent pair, flattened `K x K` rows.
    fn edge_marginals(&self, emissions: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        self.model.edge_marginals(&self.table(&emissions)?).map_err(value_err)
    }

    /// Best path as `(labels, score)`.
    #[pyo3(signature = (emissions, constrained=false))]
    fn viterbi(&self, emissions: Vec<Vec<f64>>, constrained: bool) -> PyResult<(Vec<String>, f64)> {
        let em = self.table(&emissions)?;
        let (path, score) = if constrained {
            self.model.constrained_viterbi(&em)
        } else {
            self.model.viterbi(&em)
        }
        .map_err(value_err)?;
        Ok((self.names(&path), score))
    }

    fn path_score(&self, emissions: Vec<Vec<f64>>, path: Vec<String>) -> PyResult<f64> {
        let em = self.table(&emissions)?;
        self.model.path_score(&em, &self.indices(&path)?).map_err(value_err)
    }

    fn nll(&self, emissions: Vec<Vec<f64>>, gold: Vec<String>) -> PyResult<f64> {
        let em = self.table(&emissions)?;
        self.model.nll(&em, &self.indices(&gold)?).map_err(value_err)
    }
}

impl PyCrf {
    fn table(&self, rows: &[Vec<f64>]) -> PyResult<EmissionTable> {
        EmissionTable::from_rows(rows).map_err(value_err)
    }

    fn names(&self, path: &[usize]) -> Vec<String> {
        path.iter().map(|&y| self.model.labels().label(y).to_string()).collect()
    }

    fn indices(&self, names: &[String]) -> PyResult<Vec<usize>> {
        names
            .iter()
            .map(|n| {
                self.model
                    .labels()
                    .index_of(n)
                    .ok_or_else(|| PyValueError::new_err(format!("unknown label `{n}`")))
            })
            .collect()
    }
}

/// A trained checkpoint.
#[pyclass(name = "Model", module = "sdpkit")]
struct PyModel {
    inner: LoadedModel,
}

fn parse_split(name: &str) -> PyResult<DataSplit> {
    match name {
        "train" => Ok(DataSplit::Train),
        "dev" => Ok(DataSplit::Dev),
        "test" => Ok(DataSplit::Test),
        other => Err(PyValueError::new_err(format!("split must be train, dev or test, not `{other}`"))),
    }
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(checkpoint_dir: PathBuf) -> PyResult<Self> {
        Ok(PyModel {
            inner: sdpkit::infer::load_model(&checkpoint_dir).map_err(infer_err)?,
        })
    }

    /// `"tagger"` or `"classifier"`.
    #[getter]
    fn kind(&self) -> String {
        self.inner.kind().to_string()
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.model.labels().labels().to_vec()
    }

    /// Tags or classifies one text; returns the same object as the HTTP API.
    fn predict<'py>(&self, py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
        let p = self.inner.predict_for_text(text).map_err(infer_err)?;
        to_py(py, &p)
    }

    /// Metric report for a split named in the experiment.
    #[pyo3(signature = (split="dev"))]
    fn evaluate<'py>(&self, py: Python<'py>, split: &str) -> PyResult<Bound<'py, PyAny>> {
        let eval = self.inner.evaluate_split(parse_split(split)?).map_err(infer_err)?;
        to_py(py, eval.report())
    }

    /// Tokens whose gold label is `gold` but were predicted as `pred`.
    #[pyo3(signature = (gold, pred, split="dev"))]
    fn errors<'py>(&self, py: Python<'py>, gold: &str, pred: &str, split: &str) -> PyResult<Bound<'py, PyAny>> {
        let eval = self.inner.evaluate_split(parse_split(split)?).map_err(infer_err)?;
        to_py(py, &eval.query_errors(gold, pred).map_err(infer_err)?)
    }
}

/// Trains an experiment file; returns a summary dict.
#[pyfunction]
fn train<'py>(py: Python<'py>, experiment: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let exp = sdpkit::components::load_experiment(&experiment).map_err(value_err)?;
    let out = py
        .allow_threads(|| sdpkit::engine::train_experiment(&exp))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    #[derive(Serialize)]
    struct Summary {
        best_metric: f64,
        best_epoch: usize,
        checkpoint_dir: String,
        epochs: usize,
    }
    let epochs = out
        .records
        .iter()
        .filter(|r| r.split == sdpkit::engine::Split::Dev)
        .count();
    to_py(
        py,
        &Summary {
            best_metric: out.best_metric,
            best_epoch: out.best_epoch,
            checkpoint_dir: out.checkpoint_dir.display().to_string(),
            epochs,
        },
    )
}

/// Component ids of an experiment file in instantiation order.
#[pyfunction]
fn instantiation_order(experiment_text: &str) -> PyResult<Vec<String>> {
    let g = sdpkit::graphconfig::parse_experiment_str(experiment_text).map_err(value_err)?;
    Ok(sdpkit::graphconfig::topo_order(&g).map_err(value_err)?.order)
}

#[pyfunction]
fn conll_f1<'py>(py: Python<'py>, gold: Vec<Vec<String>>, pred: Vec<Vec<String>>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &sdpkit::metrics::conll_f1(&gold, &pred).map_err(value_err)?)
}

#[pyfunction]
fn classification_prf<'py>(py: Python<'py>, gold: Vec<String>, pred: Vec<String>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &sdpkit::metrics::classification_prf(&gold, &pred).map_err(value_err)?)
}

#[pyfunction]
fn token_accuracy(gold: Vec<Vec<String>>, pred: Vec<Vec<String>>) -> PyResult<f64> {
    sdpkit::metrics::token_accuracy(&gold, &pred).map_err(value_err)
}

/// `(type, start, end)` triples, inclusive ends.
#[pyfunction]
fn extract_spans(labels: Vec<String>) -> PyResult<Vec<(String, usize, usize)>> {
    Ok(sdpkit::metrics::extract_spans(&labels)
        .map_err(value_err)?
        .into_iter()
        .map(|s| (s.kind, s.start, s.end))
        .collect())
}

#[pymodule]
#[pyo3(name = "sdpkit")]
fn sdpkit_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCrf>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(instantiation_order, m)?)?;
    m.add_function(wrap_pyfunction!(conll_f1, m)?)?;
    m.add_function(wrap_pyfunction!(classification_prf, m)?)?;
    m.add_function(wrap_pyfunction!(token_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(extract_spans, m)?)?;
    Ok(())
}
