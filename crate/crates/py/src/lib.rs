//! Python bindings (`pyiyolo`) over the core detector crate.

use std::collections::BTreeMap;
use std::path::PathBuf;

use iyolo_core::datapipe::{self, to_model_tensor};
use iyolo_core::detector::{self, count_macs, count_params, HeadOutputs};
use iyolo_core::evalkit::{self, BBox, GroundTruthBox};
use iyolo_core::postproc::{self, Detection};
use iyolo_core::Error;
use pyo3::exceptions::{PyIOError, PyKeyError, PyValueError};
use pyo3::prelude::*;

/// (class_id, score, x1, y1, x2, y2)
type DetTuple = (usize, f64, f64, f64, f64, f64);
/// (class_id, x1, y1, x2, y2)
type GtTuple = (usize, f64, f64, f64, f64);
/// (class_id, cx, cy, w, h), normalized
type LabelTuple = (usize, f64, f64, f64, f64);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::UnknownImage(_) => PyKeyError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn det_tuple(d: &Detection) -> DetTuple {
    (d.class_id, d.score, d.bbox.x1, d.bbox.y1, d.bbox.x2, d.bbox.y2)
}

fn det_from(t: &DetTuple) -> Detection {
    Detection { class_id: t.0, score: t.1, bbox: BBox::new(t.2, t.3, t.4, t.5) }
}

/// Dense f32 tensor, row-major.
#[pyclass(name = "Tensor", module = "pyiyolo", skip_from_py_object)]
#[derive(Clone)]
struct PyTensor {
    inner: iyolo_core::Tensor,
}

#[pymethods]
impl PyTensor {
    #[new]
    fn new(dims: Vec<usize>, data: Vec<f32>) -> PyResult<Self> {
        Ok(Self { inner: iyolo_core::Tensor::new(dims, data).map_err(to_py)? })
    }

    #[staticmethod]
    fn zeros(dims: Vec<usize>) -> PyResult<Self> {
        Ok(Self { inner: iyolo_core::Tensor::zeros(&dims).map_err(to_py)? })
    }

    #[getter]
    fn dims(&self) -> Vec<usize> {
        self.inner.dims().to_vec()
    }

    #[getter]
    fn data(&self) -> Vec<f32> {
        self.inner.data().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.data().len()
    }

    fn __repr__(&self) -> String {
        format!("Tensor(dims={:?})", self.inner.dims())
    }
}

/// Model configuration, exchanged with Python as JSON.
#[pyclass(name = "ModelConfig", module = "pyiyolo", skip_from_py_object)]
#[derive(Clone)]
struct PyModelConfig {
    inner: detector::ModelConfig,
}

#[pymethods]
impl PyModelConfig {
    /// Improved defaults; `json` overrides any subset of fields.
    #[new]
    #[pyo3(signature = (json=None))]
    fn new(json: Option<&str>) -> PyResult<Self> {
        let inner = match json {
            Some(text) => detector::ModelConfig::from_json(text).map_err(to_py)?,
            None => detector::ModelConfig::default(),
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    fn baseline() -> Self {
        Self { inner: detector::ModelConfig::baseline() }
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn input_size(&self) -> usize {
        self.inner.input_size
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes
    }

    fn __repr__(&self) -> String {
        format!("ModelConfig({})", self.inner.to_json())
    }
}

#[pyclass(name = "Detector", module = "pyiyolo")]
struct PyDetector {
    inner: detector::Detector,
}

#[pymethods]
impl PyDetector {
    /// Builds a detector with seeded random weights.
    #[staticmethod]
    fn build(config: &PyModelConfig) -> PyResult<Self> {
        Ok(Self { inner: detector::Detector::build(&config.inner).map_err(to_py)? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: detector::Detector::load(&path).map_err(to_py)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py)
    }

    #[getter]
    fn config(&self) -> PyModelConfig {
        PyModelConfig { inner: self.inner.config().clone() }
    }

    /// Raw head output shapes for a batch tensor.
    fn forward_shapes(&self, batch: &PyTensor) -> PyResult<Vec<Vec<usize>>> {
        Ok(match self.inner.forward(&batch.inner).map_err(to_py)? {
            HeadOutputs::Anchor(maps) => maps.iter().map(|m| m.dims().to_vec()).collect(),
            HeadOutputs::SetPrediction { class_logits, boxes } => {
                vec![class_logits.dims().to_vec(), boxes.dims().to_vec()]
            }
        })
    }

    /// Detections per batch item, in model-input pixels.
    fn detect(&self, batch: &PyTensor) -> PyResult<Vec<Vec<DetTuple>>> {
        let out = self.inner.detect(&batch.inner).map_err(to_py)?;
        Ok(out.iter().map(|d| d.iter().map(det_tuple).collect()).collect())
    }

    /// Detections for a PPM file, in that image's pixels.
    fn predict_ppm(&self, path: PathBuf) -> PyResult<Vec<DetTuple>> {
        let img = datapipe::read_ppm(&path).map_err(to_py)?;
        let dets = iyolo_core::cli::predict_image(&self.inner, &img).map_err(to_py)?;
        Ok(dets.iter().map(det_tuple).collect())
    }

    fn count_params(&self) -> u64 {
        count_params(self.inner.graph()).total_params
    }

    fn count_macs(&self) -> u64 {
        count_macs(self.inner.graph(), self.inner.config().input_size).total_macs
    }
}

#[pyfunction]
fn iou(a: (f64, f64, f64, f64), b: (f64, f64, f64, f64)) -> PyResult<f64> {
    evalkit::iou(&BBox::new(a.0, a.1, a.2, a.3), &BBox::new(b.0, b.1, b.2, b.3)).map_err(to_py)
}

#[pyfunction]
fn nms(dets: Vec<DetTuple>, iou_thresh: f64) -> Vec<DetTuple> {
    let dets: Vec<Detection> = dets.iter().map(det_from).collect();
    postproc::nms(&dets, iou_thresh).iter().map(det_tuple).collect()
}

/// Minimum-cost assignment for a rectangular cost matrix given as rows.
#[pyfunction]
fn hungarian_match(cost: Vec<Vec<f32>>) -> PyResult<Vec<(usize, usize)>> {
    let n = cost.len();
    let m = cost.first().map_or(0, Vec::len);
    if cost.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("cost rows differ in length"));
    }
    let t = iyolo_core::Tensor::new(vec![n, m], cost.concat()).map_err(to_py)?;
    postproc::hungarian_match(&t).map_err(to_py)
}

#[pyfunction]
fn positional_encoding(seq_len: usize, d_model: usize) -> PyResult<PyTensor> {
    let pe = iyolo_core::attention::positional_encoding(seq_len, d_model).map_err(to_py)?;
    Ok(PyTensor { inner: pe.table })
}

/// Returns (mAP, report JSON).
#[pyfunction]
#[pyo3(signature = (detections, ground_truth, iou_thresh=0.5))]
fn evaluate(
    detections: BTreeMap<String, Vec<DetTuple>>,
    ground_truth: BTreeMap<String, Vec<GtTuple>>,
    iou_thresh: f64,
) -> PyResult<(f64, String)> {
    let dets = detections
        .iter()
        .map(|(k, v)| (k.clone(), v.iter().map(det_from).collect()))
        .collect();
    let gts = ground_truth
        .iter()
        .map(|(k, v)| {
            let g = v
                .iter()
                .map(|t| GroundTruthBox { class_id: t.0, bbox: BBox::new(t.1, t.2, t.3, t.4) })
                .collect();
            (k.clone(), g)
        })
        .collect();
    let r = evalkit::evaluate(&dets, &gts, iou_thresh).map_err(to_py)?;
    Ok((r.map, r.to_json()))
}

/// Reads a PPM as a 1×3×S×S model input resized to `size`.
#[pyfunction]
fn load_ppm(path: PathBuf, size: usize) -> PyResult<PyTensor> {
    let img = datapipe::read_ppm(&path).map_err(to_py)?;
    let (t, _) = to_model_tensor(&img, size).map_err(to_py)?;
    Ok(PyTensor { inner: t })
}

/// YOLO label file as (class_id, cx, cy, w, h) rows.
#[pyfunction]
fn read_labels(path: PathBuf) -> PyResult<Vec<LabelTuple>> {
    let set = datapipe::parse_yolo_labels(&path).map_err(to_py)?;
    Ok(set.boxes.iter().map(|b| (b.class_id, b.cx, b.cy, b.w, b.h)).collect())
}

/// Writes a synthetic dataset; returns (train, val) counts.
#[pyfunction]
fn generate_fixtures(n: usize, seed: u64, out_dir: PathBuf) -> PyResult<(usize, usize)> {
    let idx = datapipe::generate_fixture_dataset(n, seed, &out_dir).map_err(to_py)?;
    Ok((idx.train.len(), idx.val.len()))
}

#[pymodule]
fn pyiyolo(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTensor>()?;
    m.add_class::<PyModelConfig>()?;
    m.add_class::<PyDetector>()?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(nms, m)?)?;
    m.add_function(wrap_pyfunction!(hungarian_match, m)?)?;
    m.add_function(wrap_pyfunction!(positional_encoding, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(load_ppm, m)?)?;
    m.add_function(wrap_pyfunction!(read_labels, m)?)?;
    m.add_function(wrap_pyfunction!(generate_fixtures, m)?)?;
    Ok(())
}
