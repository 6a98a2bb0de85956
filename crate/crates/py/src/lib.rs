//! Python bindings. Images cross the boundary as lists of pixel rows
//! (one flattened row-major image per row).

use lgrad_cli::{CliError, ExperimentConfig, RunOptions};
use lgrad_core::channels::{generate_channels as generate, ChannelMethod, GenerationInputs, NoiseCovariance};
use lgrad_core::observers::{build_cho, build_rho, score as score_images, ChoTraining, LinearObserver, ScoreSet};
use lgrad_core::phantom::{self, GaussianSignalConfig, MvnLumpyConfig, NoiseConfig, DEFAULT_SIGNAL_AMPLITUDE};
use lgrad_core::{eval, mobs, ObserverError, SignalImage};
use ndarray::{Array1, Array2};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: ObserverError) -> PyErr {
    match e {
        ObserverError::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn cli_err(e: CliError) -> PyErr {
    match e {
        CliError::Config(msg) => PyValueError::new_err(msg),
        CliError::Runtime(msg) => PyRuntimeError::new_err(msg),
    }
}

fn to_array(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Array2::from_shape_vec((n, m), rows.into_iter().flatten().collect()).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn to_rows(a: ndarray::ArrayView2<'_, f64>) -> Vec<Vec<f64>> {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

fn signal_image(signal: Option<Vec<f64>>, height: usize, width: usize) -> PyResult<Option<SignalImage>> {
    signal
        .map(|s| SignalImage::new(Array1::from(s), height, width).map_err(py_err))
        .transpose()
}

/// Labelled image stack (label 0 = signal absent, 1 = present).
#[pyclass(name = "ImageStack", module = "lgrad", skip_from_py_object)]
#[derive(Clone)]
struct PyImageStack {
    inner: lgrad_core::ImageStack,
}

#[pymethods]
impl PyImageStack {
    #[new]
    fn new(data: Vec<Vec<f64>>, labels: Vec<u8>, height: usize, width: usize) -> PyResult<Self> {
        let inner = lgrad_core::ImageStack::new(to_array(data)?, labels, height, width).map_err(py_err)?;
        Ok(PyImageStack { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyImageStack {
            inner: mobs::load(path).map_err(py_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        mobs::save(&self.inner, path).map_err(py_err)
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn labels(&self) -> Vec<u8> {
        self.inner.labels().to_vec()
    }

    fn data(&self) -> Vec<Vec<f64>> {
        to_rows(self.inner.data())
    }

    fn count(&self, label: u8) -> usize {
        self.inner.count(label)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "ImageStack({} images, {}×{}, {} present)",
            self.inner.len(),
            self.inner.height(),
            self.inner.width(),
            self.inner.count(lgrad_core::PRESENT)
        )
    }
}

/// Channel rows T (D × M).
#[pyclass(name = "ChannelMatrix", module = "lgrad", skip_from_py_object)]
#[derive(Clone)]
struct PyChannelMatrix {
    inner: lgrad_core::ChannelMatrix,
}

#[pymethods]
impl PyChannelMatrix {
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(PyChannelMatrix {
            inner: lgrad_core::ChannelMatrix::new(to_array(rows)?).map_err(py_err)?,
        })
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        to_rows(self.inner.rows())
    }

    #[getter]
    fn num_channels(&self) -> usize {
        self.inner.num_channels()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn prefix(&self, d: usize) -> PyResult<Self> {
        Ok(PyChannelMatrix {
            inner: self.inner.prefix(d).map_err(py_err)?,
        })
    }

    /// Writes a PGM montage of the channels.
    fn save_montage(&self, path: &str, height: usize, width: usize) -> PyResult<()> {
        lgrad_cli::montage::emit_channel_montage(&self.inner, height, width, path.as_ref()).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.num_channels()
    }

    fn __repr__(&self) -> String {
        format!("ChannelMatrix({} × {})", self.inner.num_channels(), self.inner.dim())
    }
}

#[pyfunction]
#[pyo3(signature = (count, height=32, width=32, dc_offset=100.0, kernel_sigma=5.0, field_magnitude=30.0, seed=1))]
fn generate_mvn_lumpy(
    count: usize,
    height: usize,
    width: usize,
    dc_offset: f64,
    kernel_sigma: f64,
    field_magnitude: f64,
    seed: u64,
) -> PyResult<PyImageStack> {
    let cfg = MvnLumpyConfig {
        height,
        width,
        dc_offset,
        kernel_sigma,
        field_magnitude,
        seed,
    };
    Ok(PyImageStack {
        inner: phantom::generate_mvn_lumpy(&cfg, count).map_err(py_err)?,
    })
}

/// Flattened Gaussian signal; centered unless a center is given.
#[pyfunction]
#[pyo3(signature = (height, width, sigma=3.0, amplitude=DEFAULT_SIGNAL_AMPLITUDE, center_row=None, center_col=None))]
fn render_gaussian_signal(
    height: usize,
    width: usize,
    sigma: f64,
    amplitude: f64,
    center_row: Option<f64>,
    center_col: Option<f64>,
) -> PyResult<Vec<f64>> {
    let base = GaussianSignalConfig::default_profile(height, width);
    let cfg = GaussianSignalConfig {
        center_row: center_row.unwrap_or(base.center_row),
        center_col: center_col.unwrap_or(base.center_col),
        sigma,
        amplitude,
    };
    Ok(phantom::render_gaussian_signal(&cfg, height, width).map_err(py_err)?.data().to_vec())
}

#[pyfunction]
#[pyo3(signature = (backgrounds, signal, sigma_n=10.0, fraction_present=0.5, seed=2))]
fn assemble_dataset(
    backgrounds: &PyImageStack,
    signal: Vec<f64>,
    sigma_n: f64,
    fraction_present: f64,
    seed: u64,
) -> PyResult<PyImageStack> {
    let b = &backgrounds.inner;
    let s = SignalImage::new(Array1::from(signal), b.height(), b.width()).map_err(py_err)?;
    let noise = NoiseConfig { sigma_n, seed };
    Ok(PyImageStack {
        inner: phantom::assemble_dataset(b, &s, &noise, fraction_present).map_err(py_err)?,
    })
}

/// `method` is one of "lgrad", "lgrad_cmd", "pls". L-grad-CMD needs
/// `backgrounds`, `noise_var` and `signal`.
#[pyfunction]
#[pyo3(signature = (method, train, num_channels, signal=None, backgrounds=None, noise_var=None))]
fn generate_channels(
    method: &str,
    train: &PyImageStack,
    num_channels: usize,
    signal: Option<Vec<f64>>,
    backgrounds: Option<&PyImageStack>,
    noise_var: Option<f64>,
) -> PyResult<PyChannelMatrix> {
    let method: ChannelMethod = method.parse().map_err(py_err)?;
    let t = &train.inner;
    let signal = signal_image(signal, t.height(), t.width())?;
    let noise = noise_var.map(NoiseCovariance::White);
    let inputs = GenerationInputs {
        train: t,
        backgrounds: backgrounds.map(|b| &b.inner),
        noise: noise.as_ref(),
        signal: signal.as_ref(),
    };
    Ok(PyChannelMatrix {
        inner: generate(method, inputs, num_channels).map_err(py_err)?,
    })
}

/// Trains a CHO on `train` and returns its scores on `test`.
#[pyfunction]
#[pyo3(signature = (channels, train, test, signal=None))]
fn cho_scores(channels: &PyChannelMatrix, train: &PyImageStack, test: &PyImageStack, signal: Option<Vec<f64>>) -> PyResult<Vec<f64>> {
    let signal = signal_image(signal, train.inner.height(), train.inner.width())?;
    let model = build_cho(&channels.inner, ChoTraining::Samples(&train.inner), signal.as_ref()).map_err(py_err)?;
    Ok(model.score(&test.inner).map_err(py_err)?.scores)
}

/// Regularized Hotelling template (pseudoinverse of the sample covariance).
#[pyfunction]
#[pyo3(signature = (train, signal=None, rank_tol=1e-10))]
fn rho_template(train: &PyImageStack, signal: Option<Vec<f64>>, rank_tol: f64) -> PyResult<Vec<f64>> {
    let signal = signal_image(signal, train.inner.height(), train.inner.width())?;
    let w = build_rho(&train.inner, signal.as_ref(), rank_tol).map_err(py_err)?;
    Ok(w.weights().to_vec())
}

/// Scores wᵀg of every image.
#[pyfunction]
fn template_scores(template: Vec<f64>, images: &PyImageStack) -> PyResult<Vec<f64>> {
    let w = lgrad_core::ObserverTemplate::new(Array1::from(template), lgrad_core::ObserverKind::Ho).map_err(py_err)?;
    Ok(score_images(&w, &images.inner).map_err(py_err)?.scores)
}

#[pyfunction]
fn compute_auc(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<f64> {
    let set = ScoreSet::new(scores, labels).map_err(py_err)?;
    Ok(eval::compute_auc(&set).map_err(py_err)?.auc)
}

/// (low, high, standard error) of the 95% percentile bootstrap.
#[pyfunction]
#[pyo3(signature = (scores, labels, resamples=1000, seed=0))]
fn bootstrap_auc_ci(scores: Vec<f64>, labels: Vec<u8>, resamples: usize, seed: u64) -> PyResult<(f64, f64, f64)> {
    let set = ScoreSet::new(scores, labels).map_err(py_err)?;
    let ci = eval::bootstrap_auc_ci(&set, resamples, seed).map_err(py_err)?;
    Ok((ci.low, ci.high, ci.std_err))
}

#[pyfunction]
fn analytic_gaussian_auc(snr: f64) -> f64 {
    eval::analytic_gaussian_auc(snr)
}

/// Runs an experiment grid from TOML text. Returns the result rows as
/// (method, num_train, num_channels, replicate, auc, auc_lo, auc_hi, seconds)
/// and the number of failed grid points.
#[pyfunction]
#[pyo3(signature = (config, out_dir, seed=None, threads=None))]
#[allow(clippy::type_complexity)]
fn run_experiment(
    py: Python<'_>,
    config: &str,
    out_dir: &str,
    seed: Option<u64>,
    threads: Option<usize>,
) -> PyResult<(Vec<(String, usize, usize, usize, f64, f64, f64, f64)>, usize)> {
    let cfg = ExperimentConfig::parse(config).map_err(cli_err)?;
    let opts = RunOptions {
        out_dir: Some(out_dir.into()),
        seed,
        threads,
        point: None,
    };
    let outcome = py.detach(|| lgrad_cli::run_experiment(&cfg, &opts)).map_err(cli_err)?;
    let rows = outcome
        .rows
        .iter()
        .map(|r| {
            (
                r.method.name().to_string(),
                r.num_train,
                r.num_channels,
                r.replicate,
                r.auc,
                r.auc_lo,
                r.auc_hi,
                r.seconds,
            )
        })
        .collect();
    Ok((rows, outcome.errors.len()))
}

#[pymodule]
fn lgrad(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyImageStack>()?;
    m.add_class::<PyChannelMatrix>()?;
    m.add_function(wrap_pyfunction!(generate_mvn_lumpy, m)?)?;
    m.add_function(wrap_pyfunction!(render_gaussian_signal, m)?)?;
    m.add_function(wrap_pyfunction!(assemble_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(generate_channels, m)?)?;
    m.add_function(wrap_pyfunction!(cho_scores, m)?)?;
    m.add_function(wrap_pyfunction!(rho_template, m)?)?;
    m.add_function(wrap_pyfunction!(template_scores, m)?)?;
    m.add_function(wrap_pyfunction!(compute_auc, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap_auc_ci, m)?)?;
    m.add_function(wrap_pyfunction!(analytic_gaussian_auc, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("DEFAULT_SIGNAL_AMPLITUDE", DEFAULT_SIGNAL_AMPLITUDE)?;
    Ok(())
}
