//! Python bindings: datasets, poisoning, training and the experiment drivers.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use rftrojan::attack::{self, PoisonAmount, PoisonMode, PoisonSpec};
use rftrojan::defense::{self, EmbeddingConfig, TsneInit};
use rftrojan::harness::{self, ExperimentConfig, RunReport};
use rftrojan::matrix::Matrix;
use rftrojan::nn::{self, NetworkConfig, TrainedModel};
use rftrojan::sigsynth::{self, ComplexSample, DatasetSpec, IQFrame, LabeledDataset, ModulationScheme};
use rftrojan::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        e if e.is_validation() => PyValueError::new_err(e.to_string()),
        Error::Io { .. } | Error::Format(_) => PyOSError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for rftrojan::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn scheme(name: &str) -> PyResult<ModulationScheme> {
    name.parse::<ModulationScheme>().py()
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    Matrix::from_rows(&rows).py()
}

fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows).map(|i| m.row(i).to_vec()).collect()
}

fn config(toml: Option<&str>) -> PyResult<ExperimentConfig> {
    let cfg = match toml {
        Some(text) => ExperimentConfig::from_toml(text).py()?,
        None => ExperimentConfig::default(),
    };
    cfg.validate().py()?;
    Ok(cfg)
}

/// A list of labeled I/Q frames.
#[pyclass(module = "rftrojan", name = "Dataset", skip_from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: LabeledDataset,
}

#[pymethods]
impl PyDataset {
    /// Synthesize a dataset. `spec` is TOML with dataset fields at top level,
    /// layered over the defaults.
    #[staticmethod]
    #[pyo3(signature = (spec=None, seed=None))]
    fn generate(py: Python<'_>, spec: Option<&str>, seed: Option<u64>) -> PyResult<Self> {
        let mut s = match spec {
            Some(text) => harness::dataset_spec_from_toml(text, &DatasetSpec::default()).py()?,
            None => DatasetSpec::default(),
        };
        if let Some(seed) = seed {
            s.seed = seed;
        }
        let inner = py.detach(|| sigsynth::generate_dataset(&s)).py()?;
        Ok(PyDataset { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyDataset { inner: sigsynth::load_dataset(path).py()? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        sigsynth::save_dataset(&self.inner, path).py()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        let labels: Vec<String> = self.inner.labels().iter().map(|l| l.to_string()).collect();
        format!("Dataset({} frames, labels {:?})", self.inner.len(), labels)
    }

    /// Distinct labels, in scheme order.
    fn labels(&self) -> Vec<String> {
        self.inner.labels().iter().map(|l| l.to_string()).collect()
    }

    fn snrs(&self) -> Vec<f64> {
        self.inner.snrs()
    }

    /// `(i, q, label, snr_db, poisoned, original_label)` for one frame.
    #[allow(clippy::type_complexity)]
    fn frame(&self, index: usize) -> PyResult<(Vec<f64>, Vec<f64>, String, f64, bool, String)> {
        let f = self
            .inner
            .frames
            .get(index)
            .ok_or_else(|| pyo3::exceptions::PyIndexError::new_err(format!("frame {index} of {}", self.inner.len())))?;
        Ok((
            f.samples.iter().map(|s| s.re).collect(),
            f.samples.iter().map(|s| s.im).collect(),
            f.label.to_string(),
            f.snr_db,
            f.poisoned,
            f.original_label.to_string(),
        ))
    }

    /// Per-frame labels, SNRs and poison flags as parallel lists.
    fn to_lists(&self) -> (Vec<String>, Vec<f64>, Vec<bool>) {
        (
            self.inner.iter().map(|f| f.label.to_string()).collect(),
            self.inner.iter().map(|f| f.snr_db).collect(),
            self.inner.iter().map(|f| f.poisoned).collect(),
        )
    }

    /// Build a dataset from raw samples; `i` and `q` must have one frame's length.
    #[staticmethod]
    fn from_frames(frames: Vec<(Vec<f64>, Vec<f64>, String, f64)>) -> PyResult<Self> {
        let mut out = Vec::with_capacity(frames.len());
        for (i, q, label, snr) in frames {
            if i.len() != q.len() {
                return Err(PyValueError::new_err("i and q differ in length"));
            }
            let samples = i.into_iter().zip(q).map(|(re, im)| ComplexSample::new(re, im)).collect();
            out.push(IQFrame::new(samples, scheme(&label)?, snr).py()?);
        }
        Ok(PyDataset { inner: LabeledDataset::new(out) })
    }

    /// Stratified split; returns `(train, test)`.
    fn split(&self, train_fraction: f64, seed: u64) -> PyResult<(PyDataset, PyDataset)> {
        let s = self.inner.split_train_test(train_fraction, seed).py()?;
        Ok((PyDataset { inner: s.train }, PyDataset { inner: s.test }))
    }

    /// Scale every frame to unit average power.
    fn normalized(&self) -> PyResult<PyDataset> {
        Ok(PyDataset { inner: harness::normalize_dataset(&self.inner).py()? })
    }
}

/// Rotate every frame by `theta_degrees` (the trigger).
#[pyfunction]
fn apply_trigger(dataset: &PyDataset, theta_degrees: f64) -> PyDataset {
    PyDataset { inner: LabeledDataset::new(dataset.inner.iter().map(|f| attack::apply_trigger(f, theta_degrees)).collect()) }
}

/// Poison a dataset. Give exactly one of `ratio` and `count`.
/// Returns `(poisoned_dataset, poisoned_indices)`.
#[pyfunction]
#[pyo3(signature = (dataset, target, ratio=None, count=None, theta_degrees=45.0, seed=0, replace=false))]
fn poison(
    dataset: &PyDataset,
    target: &str,
    ratio: Option<f64>,
    count: Option<usize>,
    theta_degrees: f64,
    seed: u64,
    replace: bool,
) -> PyResult<(PyDataset, Vec<usize>)> {
    let amount = match (ratio, count) {
        (Some(r), None) => PoisonAmount::Ratio(r),
        (None, Some(n)) => PoisonAmount::Count(n),
        _ => return Err(PyValueError::new_err("give exactly one of ratio and count")),
    };
    let spec = PoisonSpec {
        theta_degrees,
        seed,
        mode: if replace { PoisonMode::Replace } else { PoisonMode::Append },
        ..PoisonSpec::new(scheme(target)?, amount)
    };
    let pd = attack::poison_dataset(&dataset.inner, &spec).py()?;
    Ok((PyDataset { inner: pd.dataset }, pd.poisoned_indices))
}

/// A trained classifier.
#[pyclass(module = "rftrojan", name = "Model")]
struct PyModel {
    inner: TrainedModel,
}

#[pymethods]
impl PyModel {
    /// Train on `dataset`. `config` is experiment-config TOML; its
    /// `[training]` and `[network]` tables are used.
    #[staticmethod]
    #[pyo3(signature = (dataset, config=None, seed=0))]
    fn train(py: Python<'_>, dataset: &PyDataset, config: Option<&str>, seed: u64) -> PyResult<Self> {
        let cfg = self::config(config)?;
        let net = cfg.network.clone().unwrap_or_else(|| NetworkConfig::desk_scale(dataset.inner.labels()));
        let tc = nn::TrainConfig { seed, ..cfg.training };
        let data = dataset.inner.clone();
        let inner = py.detach(move || nn::train(&data, &net, &tc)).py()?;
        Ok(PyModel { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyModel { inner: nn::load_model(path).py()? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        nn::save_model(&self.inner, path).py()
    }

    /// Class names in output order.
    fn classes(&self) -> Vec<String> {
        self.inner.config().classes.iter().map(|c| c.to_string()).collect()
    }

    /// `(label, probabilities)` for every frame.
    fn predict(&self, dataset: &PyDataset) -> PyResult<Vec<(String, Vec<f32>)>> {
        dataset
            .inner
            .iter()
            .map(|f| self.inner.predict(f).map(|(l, p)| (l.to_string(), p)))
            .collect::<rftrojan::Result<_>>()
            .py()
    }

    fn accuracy(&self, py: Python<'_>, dataset: &PyDataset) -> PyResult<f64> {
        py.detach(|| self.inner.accuracy(&dataset.inner)).py()
    }

    /// Last hidden layer activations, one row per frame.
    fn activations(&self, py: Python<'_>, dataset: &PyDataset) -> PyResult<Vec<Vec<f64>>> {
        let m = py.detach(|| self.inner.last_hidden_activations(dataset.inner.iter())).py()?;
        Ok(to_rows(&m))
    }

    #[getter]
    fn loss_history(&self) -> Vec<f64> {
        self.inner.loss_history.clone()
    }
}

/// Results of an experiment driver.
#[pyclass(module = "rftrojan", name = "Report")]
struct PyReport {
    inner: RunReport,
}

#[pymethods]
impl PyReport {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyReport { inner: RunReport::load(path).py()? })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().py()
    }

    /// Write the tables, plots and summary into `dir`; returns the paths.
    fn emit(&self, dir: PathBuf) -> PyResult<Vec<PathBuf>> {
        harness::emit_reports(&self.inner, dir).py()
    }

    /// Per-cell means: dicts with amount, theta, snr and the three accuracies.
    fn attack_summary<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, pyo3::types::PyDict>>> {
        self.inner
            .attack_summary
            .iter()
            .map(|a| {
                let d = pyo3::types::PyDict::new(py);
                d.set_item("amount", harness::amount_label(&a.amount))?;
                d.set_item("theta_degrees", a.theta_degrees)?;
                d.set_item("snr_db", a.snr_db)?;
                d.set_item("acc_clean_cleanmodel", a.acc_clean_cleanmodel.mean)?;
                d.set_item("acc_clean_poisonedmodel", a.acc_clean_poisonedmodel.mean)?;
                d.set_item("attack_success", a.attack_success.mean)?;
                d.set_item("repetitions", a.repetitions)?;
                Ok(d)
            })
            .collect()
    }
}

#[pyfunction]
#[pyo3(signature = (config=None))]
fn run_binary_experiment(py: Python<'_>, config: Option<&str>) -> PyResult<PyReport> {
    let cfg = self::config(config)?;
    Ok(PyReport { inner: py.detach(|| harness::run_binary_experiment(&cfg)).py()? })
}

#[pyfunction]
#[pyo3(signature = (config=None))]
fn run_poison_sweep(py: Python<'_>, config: Option<&str>) -> PyResult<PyReport> {
    let cfg = self::config(config)?;
    Ok(PyReport { inner: py.detach(|| harness::run_poison_sweep(&cfg)).py()? })
}

#[pyfunction]
#[pyo3(signature = (config=None))]
fn run_defense_suite(py: Python<'_>, config: Option<&str>) -> PyResult<PyReport> {
    let cfg = self::config(config)?;
    Ok(PyReport { inner: py.detach(|| harness::run_defense_suite(&cfg)).py()? })
}

/// `(anomaly_index, flagged, mad, median)` for a list of scalars.
#[pyfunction]
fn anomaly_index(values: Vec<f64>) -> PyResult<(Vec<f64>, Vec<bool>, f64, f64)> {
    let r = defense::anomaly_index(&values).py()?;
    Ok((r.anomaly_index, r.flagged, r.mad_value, r.median_value))
}

#[pyfunction]
fn mad(values: Vec<f64>) -> PyResult<f64> {
    defense::mad(&values).py()
}

/// Embed rows of `data`; returns `(coords, kl_final)`.
#[pyfunction]
#[pyo3(signature = (data, perplexity=30.0, iterations=1000, seed=0, pca_init=false))]
fn tsne(
    py: Python<'_>,
    data: Vec<Vec<f64>>,
    perplexity: f64,
    iterations: usize,
    seed: u64,
    pca_init: bool,
) -> PyResult<(Vec<Vec<f64>>, f64)> {
    let m = matrix(data)?;
    let cfg = EmbeddingConfig {
        perplexity,
        iterations,
        seed,
        init: if pca_init { TsneInit::Pca } else { TsneInit::Random },
        ..Default::default()
    };
    let e = py.detach(|| defense::tsne(&m, &cfg)).py()?;
    Ok((to_rows(&e.coords), e.kl_final))
}

/// Seed for `(master, tag, index)`, matching the Rust drivers.
#[pyfunction]
#[pyo3(signature = (master, tag, index=0))]
fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    rftrojan::seed::derive_seed(master, tag, index)
}

/// The default experiment configuration as TOML.
#[pyfunction]
#[pyo3(signature = (full_scale=false))]
fn default_config(full_scale: bool) -> PyResult<String> {
    let cfg = if full_scale { ExperimentConfig::full_scale() } else { ExperimentConfig::default() };
    cfg.to_toml().py()
}

#[pymodule]
#[pyo3(name = "rftrojan")]
fn rftrojan_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(apply_trigger, m)?)?;
    m.add_function(wrap_pyfunction!(poison, m)?)?;
    m.add_function(wrap_pyfunction!(run_binary_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(run_poison_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(run_defense_suite, m)?)?;
    m.add_function(wrap_pyfunction!(anomaly_index, m)?)?;
    m.add_function(wrap_pyfunction!(mad, m)?)?;
    m.add_function(wrap_pyfunction!(tsne, m)?)?;
    m.add_function(wrap_pyfunction!(derive_seed, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add("SCHEMES", ModulationScheme::ALL.iter().map(|s| s.to_string()).collect::<Vec<_>>())?;
    m.add("FRAME_LEN", sigsynth::FRAME_LEN)?;
    Ok(())
}
