//! Python bindings: trajectories, query planning, composition, and the generation pipeline.

use std::path::PathBuf;

use chatcam_core::camera::{CameraFrame, CameraPath, Trajectory as CoreTrajectory};
use chatcam_core::dataset::{generate_dataset as core_dataset, DatasetConfig};
use chatcam_core::gpt::SamplerParams;
use chatcam_core::planner::{self, Models as CoreModels, PipelineContext, PipelineOptions, Plan};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

create_exception!(chatcam, ChatCamError, PyException, "Raised for every library error; the message starts with its code.");

fn err(e: chatcam_core::Error) -> PyErr {
    ChatCamError::new_err(format!("{}: {e}", e.code()))
}

#[pyclass(name = "Trajectory", module = "chatcam", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyTrajectory {
    inner: CoreTrajectory,
}

#[pymethods]
impl PyTrajectory {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        CoreTrajectory::from_json(text).map(|inner| Self { inner }).map_err(err)
    }

    /// Re-imports a camera-path export.
    #[staticmethod]
    fn from_camera_path(text: &str) -> PyResult<Self> {
        let path = CameraPath::from_json(text).map_err(err)?;
        path.to_trajectory().map(|inner| Self { inner }).map_err(err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn to_camera_path(&self) -> String {
        CameraPath::from_trajectory(&self.inner).to_json()
    }

    #[getter]
    fn duration_s(&self) -> f64 {
        self.inner.duration_s()
    }

    fn translations(&self) -> Vec<[f64; 3]> {
        self.inner.frames().iter().map(|f| [f.trans.x, f.trans.y, f.trans.z]).collect()
    }

    fn focals(&self) -> Vec<f64> {
        self.inner.frames().iter().map(|f| f.focal).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Trajectory(frames={}, duration_s={:.3})", self.inner.len(), self.inner.duration_s())
    }
}

/// Trained tokenizer and generator loaded from a checkpoint directory.
#[pyclass(name = "Models", module = "chatcam", frozen)]
pub struct PyModels {
    inner: CoreModels,
}

#[pymethods]
impl PyModels {
    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        CoreModels::load(&dir).map(|inner| Self { inner }).map_err(err)
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        self.inner.save(&dir).map_err(err)
    }

    /// Runs the scene-free pipeline; returns `(trajectory, plan_json)`.
    #[pyo3(signature = (prompt, seed = 0))]
    fn generate(&self, prompt: &str, seed: u64) -> PyResult<(PyTrajectory, String)> {
        let ctx = PipelineContext { models: &self.inner, scene: None, provider: None, planner: None };
        let opts = PipelineOptions { sampler: SamplerParams { seed, ..SamplerParams::greedy() }, refine: None };
        let out = planner::run_pipeline(prompt, ctx, &opts).map_err(err)?;
        Ok((PyTrajectory { inner: out.trajectory }, out.plan.to_json()))
    }
}

/// Parses a query into a plan with the built-in grammar; returns plan JSON.
#[pyfunction]
fn parse_query(query: &str) -> PyResult<String> {
    planner::parse_query(query).map(|p| p.to_json()).map_err(err)
}

/// Composes one trajectory per atomic step through anchor frames (JSON array, one per anchor step).
#[pyfunction]
#[pyo3(signature = (plan_json, trajectories, anchors_json = None))]
fn compose(plan_json: &str, trajectories: Vec<PyTrajectory>, anchors_json: Option<&str>) -> PyResult<PyTrajectory> {
    let plan = Plan::from_json(plan_json).map_err(err)?;
    let anchors: Vec<CameraFrame> = match anchors_json {
        Some(s) => serde_json::from_str(s).map_err(|e| ChatCamError::new_err(format!("InvalidRequest: {e}")))?,
        None => Vec::new(),
    };
    let trajs: Vec<CoreTrajectory> = trajectories.into_iter().map(|t| t.inner).collect();
    planner::compose(&plan, &trajs, &anchors).map(|c| PyTrajectory { inner: c.trajectory }).map_err(err)
}

/// Synthetic corpus as `(text, trajectory)` pairs.
#[pyfunction]
#[pyo3(signature = (n, seed = 0))]
fn generate_dataset(n: usize, seed: u64) -> PyResult<Vec<(String, PyTrajectory)>> {
    let pairs = core_dataset(n, seed, &DatasetConfig::default()).map_err(err)?;
    Ok(pairs.into_iter().map(|p| (p.text, PyTrajectory { inner: p.traj })).collect())
}

#[pymodule]
fn chatcam(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ChatCamError", m.py().get_type::<ChatCamError>())?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyModels>()?;
    m.add_function(wrap_pyfunction!(parse_query, m)?)?;
    m.add_function(wrap_pyfunction!(compose, m)?)?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    Ok(())
}
