//! Python bindings: datasets, feature extraction, representations, LDA and experiment cells.

use std::path::PathBuf;

use gaitforge::classification::{ClassifierKind, EvaluationReport, GridSpec};
use gaitforge::dataset::{self, Level};
use gaitforge::discriminativity::{lda_accuracy, LdaEval, LdaProtocol};
use gaitforge::experiments::{self, BalanceMode, CellSpec, PipelineConfig, PreparedDataset, Task};
use gaitforge::features::{ControlSide, FeatureConfig, Param};
use gaitforge::linalg::FeatureMatrix;
use gaitforge::preprocess::{butterworth_lowpass as lowpass, FilterSpec};
use gaitforge::representations::{pca_fit as fit_pca, Normalization, RepresentationKind};
use gaitforge::synth::{generate, GeneratorConfig};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<FeatureMatrix> {
    let width = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != width) {
        return Err(value_err("rows have unequal lengths"));
    }
    Ok(FeatureMatrix::from_rows(rows))
}

fn grid(name: &str) -> PyResult<GridSpec> {
    match name {
        "full" => Ok(GridSpec::full()),
        "quick" => Ok(GridSpec::quick()),
        other => Err(value_err(format!("unknown grid '{other}' (expected full or quick)"))),
    }
}

/// Subjects, sessions and trials with class labels.
#[pyclass(name = "Dataset", module = "gaitforge_py", skip_from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: dataset::Dataset,
}

#[pymethods]
impl PyDataset {
    /// Generates a synthetic corpus from a built-in preset.
    #[staticmethod]
    #[pyo3(signature = (preset, seed=None))]
    fn synthetic(preset: &str, seed: Option<u64>) -> PyResult<Self> {
        let mut cfg = GeneratorConfig::preset(preset).map_err(value_err)?;
        if let Some(s) = seed {
            cfg.seed = s;
        }
        Ok(PyDataset {
            inner: generate(&cfg).map_err(runtime_err)?,
        })
    }

    /// Generates a synthetic corpus from a generator TOML document.
    #[staticmethod]
    fn from_generator_toml(text: &str) -> PyResult<Self> {
        let cfg = GeneratorConfig::from_toml(text).map_err(value_err)?;
        Ok(PyDataset {
            inner: generate(&cfg).map_err(runtime_err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (metadata, recordings=None, sample_rate=dataset::DEFAULT_SAMPLE_RATE))]
    fn load(metadata: PathBuf, recordings: Option<PathBuf>, sample_rate: f64) -> PyResult<Self> {
        let recordings = recordings.unwrap_or_else(|| {
            metadata
                .parent()
                .map(|p| p.join("recordings"))
                .unwrap_or_else(|| PathBuf::from("recordings"))
        });
        Ok(PyDataset {
            inner: dataset::load_dataset(&metadata, &recordings, sample_rate).map_err(value_err)?,
        })
    }

    /// Writes `meta.csv` and `recordings/` under `out_dir`; returns the metadata path.
    fn write(&self, out_dir: PathBuf) -> PyResult<PathBuf> {
        std::fs::create_dir_all(&out_dir).map_err(runtime_err)?;
        dataset::write_dataset(&self.inner, &out_dir).map_err(runtime_err)
    }

    /// `(subjects, sessions, trials)`.
    fn counts(&self) -> (usize, usize, usize) {
        self.inner.counts()
    }

    /// Counts per class code at `level` (`subject`, `session` or `trial`).
    #[pyo3(signature = (level="trial"))]
    fn class_counts(&self, level: &str) -> PyResult<Vec<(String, usize)>> {
        let level = match level {
            "subject" => Level::Subject,
            "session" => Level::Session,
            "trial" => Level::Trial,
            other => return Err(value_err(format!("unknown level '{other}'"))),
        };
        Ok(self
            .inner
            .class_counts(level)
            .into_iter()
            .map(|(c, n)| (c.code().to_string(), n))
            .collect())
    }

    /// Keeps a balanced subset for `task` under `mode` (see the experiment balance modes).
    #[pyo3(signature = (task, mode, seed=0))]
    fn balanced(&self, task: &str, mode: &str, seed: u64) -> PyResult<Self> {
        let task: Task = task.parse().map_err(value_err)?;
        let mode: BalanceMode = mode.parse().map_err(value_err)?;
        let spec = experiments::BalanceSpec::for_task(&self.inner, task, mode, seed);
        Ok(PyDataset {
            inner: experiments::apply_balance(&self.inner, &spec).map_err(value_err)?,
        })
    }
}

/// Evaluation of one trained classifier on held-out subjects.
#[pyclass(name = "Report", module = "gaitforge_py")]
struct PyReport {
    inner: EvaluationReport,
}

#[pymethods]
impl PyReport {
    #[getter]
    fn accuracy(&self) -> f64 {
        self.inner.accuracy
    }

    #[getter]
    fn baseline(&self) -> f64 {
        self.inner.baseline
    }

    #[getter]
    fn divergence(&self) -> f64 {
        self.inner.divergence
    }

    #[getter]
    fn dims(&self) -> usize {
        self.inner.dims
    }

    #[getter]
    fn class_names(&self) -> Vec<String> {
        self.inner.class_names.clone()
    }

    /// Rows are true classes, columns predicted classes.
    #[getter]
    fn confusion(&self) -> Vec<Vec<usize>> {
        self.inner.confusion.clone()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(runtime_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Report(task={:?}, representation={:?}, accuracy={:.2}, baseline={:.2}, divergence={:.2})",
            self.inner.task, self.inner.representation, self.inner.accuracy, self.inner.baseline, self.inner.divergence
        )
    }
}

/// A dataset with preprocessed trials and its parameter table.
#[pyclass(name = "Features", module = "gaitforge_py")]
struct PyFeatures {
    inner: PreparedDataset,
}

#[pymethods]
impl PyFeatures {
    #[new]
    #[pyo3(signature = (dataset, control_side="first-contact"))]
    fn new(py: Python<'_>, dataset: &PyDataset, control_side: &str) -> PyResult<Self> {
        let cfg = FeatureConfig {
            control_side: control_side.parse::<ControlSide>().map_err(value_err)?,
            ..FeatureConfig::default()
        };
        let ds = dataset.inner.clone();
        let inner = py.detach(move || PreparedDataset::new(ds, &cfg));
        Ok(PyFeatures { inner })
    }

    #[staticmethod]
    fn parameter_names() -> Vec<&'static str> {
        Param::ALL.iter().map(|p| p.name()).collect()
    }

    /// One row of 52 parameters per trial with a complete parameter set.
    fn parameters(&self) -> Vec<Vec<f64>> {
        self.inner.table.rows.iter().map(|r| r.as_slice().to_vec()).collect()
    }

    fn parameter_trial_ids(&self) -> Vec<String> {
        self.inner.table.trial_ids.clone()
    }

    /// Class code of each parameter-table row.
    fn parameter_classes(&self) -> Vec<String> {
        self.inner
            .table
            .trial_indices
            .iter()
            .map(|&t| self.inner.dataset.class_of_trial(t).code().to_string())
            .collect()
    }

    /// Trials that preprocessed successfully.
    fn n_trials(&self) -> usize {
        self.inner.features.trials.len()
    }

    fn n_exclusions(&self) -> usize {
        self.inner.features.exclusions.len()
    }

    /// Trains and evaluates one experiment cell.
    #[pyo3(signature = (task="ncakh", rep="pca-all5", classifier="svm-linear", norm="zscore", balance="none", seed=0, grid="quick", variance=0.98))]
    #[allow(clippy::too_many_arguments)]
    fn run_cell(
        &self,
        py: Python<'_>,
        task: &str,
        rep: &str,
        classifier: &str,
        norm: &str,
        balance: &str,
        seed: u64,
        grid: &str,
        variance: f64,
    ) -> PyResult<PyReport> {
        let task: Task = task.parse().map_err(value_err)?;
        let cell = CellSpec {
            table: "custom".into(),
            row: rep.to_string(),
            task,
            representation: RepresentationKind::parse_cli(rep).map_err(value_err)?,
            normalization: norm.parse::<Normalization>().map_err(value_err)?,
            classifier: classifier.parse::<ClassifierKind>().map_err(value_err)?,
            balance: balance.parse::<BalanceMode>().map_err(value_err)?,
        };
        let cfg = PipelineConfig {
            seed,
            variance_target: variance,
            grid: self::grid(grid)?,
            ..PipelineConfig::default()
        };
        let prep = &self.inner;
        let report = py.detach(|| {
            let prep = experiments::balanced(prep, cell.task, cell.balance, seed)?;
            experiments::run_cell(&prep, &cell, &cfg).map(|(r, _)| r)
        });
        Ok(PyReport {
            inner: report.map_err(runtime_err)?,
        })
    }

    /// Runs `table3`, `table4` or `merge`; returns one JSON document per cell.
    #[pyo3(signature = (table, seed=0, grid="quick", annotate=false))]
    fn run_table(&self, py: Python<'_>, table: &str, seed: u64, grid: &str, annotate: bool) -> PyResult<Vec<String>> {
        let cells = match table {
            "table3" => experiments::table3_cells(),
            "table4" => experiments::table4_cells(),
            "merge" => vec![experiments::merge_cell()],
            other => return Err(value_err(format!("unknown table '{other}'"))),
        };
        let cfg = PipelineConfig {
            seed,
            grid: self::grid(grid)?,
            ..PipelineConfig::default()
        };
        let prep = &self.inner;
        let mut results = py.detach(|| experiments::run_cells(prep, &cells, &cfg));
        if annotate {
            experiments::annotate(&mut results, &experiments::builtin_reference());
        }
        results
            .iter()
            .map(|r| serde_json::to_string(r).map_err(runtime_err))
            .collect()
    }
}

/// Zero-phase Butterworth low-pass filter.
#[pyfunction]
#[pyo3(signature = (signal, sample_rate, cutoff, order=2))]
fn butterworth_lowpass(signal: Vec<f64>, sample_rate: f64, cutoff: f64, order: usize) -> PyResult<Vec<f64>> {
    lowpass(&signal, &FilterSpec { order, cutoff }, sample_rate).map_err(value_err)
}

/// PCA of the rows; returns `(retained, eigenvalues, components)` with components as rows.
#[pyfunction]
#[pyo3(signature = (rows, target_variance=0.98))]
fn pca_fit(rows: Vec<Vec<f64>>, target_variance: f64) -> PyResult<(usize, Vec<f64>, Vec<Vec<f64>>)> {
    let model = fit_pca(&matrix(&rows)?, target_variance).map_err(value_err)?;
    Ok((model.retained, model.eigenvalues, model.components))
}

/// LDA accuracy (%) with patient-disjoint cross-validation, or resubstitution.
#[pyfunction]
#[pyo3(signature = (rows, labels, subjects, eval="cv", folds=5, seed=0))]
fn lda_score(
    rows: Vec<Vec<f64>>,
    labels: Vec<usize>,
    subjects: Vec<usize>,
    eval: &str,
    folds: usize,
    seed: u64,
) -> PyResult<f64> {
    if labels.len() != rows.len() || subjects.len() != rows.len() {
        return Err(value_err("rows, labels and subjects must have equal lengths"));
    }
    let x = matrix(&rows)?;
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let protocol = LdaProtocol {
        eval: eval.parse::<LdaEval>().map_err(value_err)?,
        folds,
        seed,
    };
    let idx: Vec<usize> = (0..rows.len()).collect();
    lda_accuracy(&x, &idx, &labels, &subjects, n_classes, &protocol).map_err(value_err)
}

#[pymodule]
fn gaitforge_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyFeatures>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(butterworth_lowpass, m)?)?;
    m.add_function(wrap_pyfunction!(pca_fit, m)?)?;
    m.add_function(wrap_pyfunction!(lda_score, m)?)?;
    Ok(())
}
