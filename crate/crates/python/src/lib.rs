//! Python bindings. Images cross the boundary as `Frame` objects or flat
//! row-major lists; everything heavier goes through `run_cli`.

use std::path::PathBuf;

use motionflow::fvd::{compute_fvd, frechet_distance, EmbedderSpec, GaussianStats};
use motionflow::pipeline::{read_videos, run_command_in, smooth_poses, PipelineConfig, DATA_ROOT_ENV};
use motionflow::pose::{
    read_keypoint_file, savgol_coefficients, select_appearance_frame, smooth_sequence, write_keypoint_file,
    PoseSequence, SmoothingConfig,
};
use motionflow::region::{composite as composite_frames, read_frame_png, write_frame_png, Frame, Mask};
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: motionflow::Error) -> PyErr {
    match e.kind() {
        "invalid_argument" | "no_foreground" => PyValueError::new_err(e.to_string()),
        "io" | "image" => PyIOError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// RGB image with channels in `[0, 1]`, stored row-major as `h × w × 3`.
#[pyclass(name = "Frame", module = "motionflow", skip_from_py_object)]
#[derive(Clone)]
struct PyFrame {
    inner: Frame,
}

#[pymethods]
impl PyFrame {
    #[new]
    fn new(height: usize, width: usize, data: Vec<f32>) -> PyResult<Self> {
        Ok(Self { inner: Frame::new(height, width, data).map_err(to_py)? })
    }

    #[staticmethod]
    fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Self {
        Self { inner: Frame::filled(height, width, rgb) }
    }

    #[staticmethod]
    fn read_png(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: read_frame_png(&path).map_err(to_py)? })
    }

    fn write_png(&self, path: PathBuf) -> PyResult<()> {
        write_frame_png(&path, &self.inner).map_err(to_py)
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width
    }

    #[getter]
    fn data(&self) -> Vec<f32> {
        self.inner.data.clone()
    }

    fn pixel(&self, y: usize, x: usize) -> PyResult<[f32; 3]> {
        if y >= self.inner.height || x >= self.inner.width {
            return Err(PyValueError::new_err("pixel outside the frame"));
        }
        Ok(self.inner.pixel(y, x))
    }

    fn mean_abs_diff(&self, other: &PyFrame) -> PyResult<f64> {
        self.inner.mean_abs_diff(&other.inner).map_err(to_py)
    }

    fn __eq__(&self, other: &PyFrame) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("Frame({}x{})", self.inner.height, self.inner.width)
    }
}

/// Keypoint sequence: 18 `(x, y, confidence)` joints per frame.
#[pyclass(name = "PoseSequence", module = "motionflow", skip_from_py_object)]
#[derive(Clone)]
struct PyPoseSequence {
    inner: PoseSequence,
}

#[pymethods]
impl PyPoseSequence {
    #[staticmethod]
    #[pyo3(signature = (path, fps = 30.0))]
    fn read(path: PathBuf, fps: f64) -> PyResult<Self> {
        Ok(Self { inner: read_keypoint_file(&path, fps).map_err(to_py)? })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        write_keypoint_file(&path, &self.inner).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn fps(&self) -> f64 {
        self.inner.fps
    }

    /// Joints of frame `t` as `(x, y, confidence)` triples.
    fn frame(&self, t: usize) -> PyResult<Vec<(f64, f64, f64)>> {
        let f = self.inner.frames.get(t).ok_or_else(|| PyValueError::new_err("frame index out of range"))?;
        Ok(f.keypoints.iter().map(|k| (k.x, k.y, k.confidence)).collect())
    }

    /// Savitzky–Golay smoothing with an exact window (errors if too long).
    fn smooth(&self, window: usize, polyorder: usize) -> PyResult<Self> {
        Ok(Self { inner: smooth_sequence(&self.inner, window, polyorder).map_err(to_py)? })
    }

    /// Pipeline smoothing: the window shrinks to fit short sequences.
    #[pyo3(signature = (window = 11, polyorder = 3))]
    fn smooth_for_pipeline(&self, window: usize, polyorder: usize) -> PyResult<Self> {
        let cfg = SmoothingConfig { window, polyorder };
        Ok(Self { inner: smooth_poses(&self.inner, &cfg).map_err(to_py)? })
    }

    fn appearance_index(&self) -> PyResult<usize> {
        select_appearance_frame(&self.inner).map_err(to_py)
    }
}

/// Full pipeline configuration; round-trips through JSON.
#[pyclass(name = "PipelineConfig", module = "motionflow", skip_from_py_object)]
#[derive(Clone)]
struct PyPipelineConfig {
    inner: PipelineConfig,
}

#[pymethods]
impl PyPipelineConfig {
    #[new]
    fn new() -> Self {
        Self { inner: PipelineConfig::default() }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: PipelineConfig::load(&path).map_err(to_py)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: PipelineConfig = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py)
    }

    #[getter]
    fn working_size(&self) -> usize {
        self.inner.working_size
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }
}

/// Least-squares weights evaluating the fitted polynomial at offset 0.
#[pyfunction]
fn savgol_weights(offsets: Vec<f64>, polyorder: usize) -> PyResult<Vec<f64>> {
    if offsets.len() <= polyorder {
        return Err(PyValueError::new_err("need more offsets than the polynomial order"));
    }
    Ok(savgol_coefficients(&offsets, polyorder))
}

/// `mask · fg + (1 − mask) · bg` with a row-major `h × w` mask.
#[pyfunction]
fn composite(fg: &PyFrame, bg: &PyFrame, mask: Vec<f32>) -> PyResult<PyFrame> {
    let m = Mask::new(fg.inner.height, fg.inner.width, mask).map_err(to_py)?;
    Ok(PyFrame { inner: composite_frames(&fg.inner, &bg.inner, &m).map_err(to_py)? })
}

fn stats(mean: Vec<f64>, cov: Vec<Vec<f64>>, n: usize) -> PyResult<GaussianStats> {
    let d = mean.len();
    if cov.len() != d || cov.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err(format!("covariance must be {d}x{d}")));
    }
    let c = DMatrix::from_fn(d, d, |i, j| cov[i][j]);
    GaussianStats::new(DVector::from_vec(mean), c, n).map_err(to_py)
}

/// Fréchet distance between two Gaussians given as mean vectors and
/// covariance matrices (lists of rows).
#[pyfunction]
fn frechet(mean_a: Vec<f64>, cov_a: Vec<Vec<f64>>, mean_b: Vec<f64>, cov_b: Vec<Vec<f64>>) -> PyResult<f64> {
    frechet_distance(&stats(mean_a, cov_a, 2)?, &stats(mean_b, cov_b, 2)?).map_err(to_py)
}

/// FVD between two directories of videos (numbered PNG folders).
#[pyfunction]
#[pyo3(signature = (real, fake, clip_len = 30, embedder = "random"))]
fn fvd<'py>(py: Python<'py>, real: PathBuf, fake: PathBuf, clip_len: usize, embedder: &str) -> PyResult<Bound<'py, PyDict>> {
    let spec: EmbedderSpec = embedder.parse().map_err(to_py)?;
    let emb = spec.build().map_err(to_py)?;
    let r = read_videos(&real).map_err(to_py)?;
    let f = read_videos(&fake).map_err(to_py)?;
    let report = compute_fvd(&r, &f, emb.as_ref(), clip_len).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("fvd", report.fvd)?;
    out.set_item("n_real", report.n_real)?;
    out.set_item("n_fake", report.n_fake)?;
    out.set_item("d", report.d)?;
    Ok(out)
}

/// Runs a `motionflow` command line (`prepare`, `train`, `transfer`,
/// `eval fvd`) and returns its exit code.
#[pyfunction]
#[pyo3(signature = (args, data_root = None))]
fn run_cli(args: Vec<String>, data_root: Option<PathBuf>) -> i32 {
    let root = data_root
        .or_else(|| std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let argv = std::iter::once("motionflow".to_string()).chain(args);
    run_command_in(argv, root)
}

#[pymodule]
#[pyo3(name = "motionflow")]
fn motionflow_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyFrame>()?;
    m.add_class::<PyPoseSequence>()?;
    m.add_class::<PyPipelineConfig>()?;
    m.add_function(wrap_pyfunction!(savgol_weights, m)?)?;
    m.add_function(wrap_pyfunction!(composite, m)?)?;
    m.add_function(wrap_pyfunction!(frechet, m)?)?;
    m.add_function(wrap_pyfunction!(fvd, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
