//! Python bindings: traces, variance matrices, features, synthetic
//! repositories, assessors and rendering.

use std::path::PathBuf;

use ivtest_core::assessors::{self, cross_validate, Algorithm, CvOptions};
use ivtest_core::features::{assemble_vector, extract_all, FeatureConfig, FEATURE_NAMES};
use ivtest_core::render::render_matrix;
use ivtest_core::synth::{self, RepoOptions};
use ivtest_core::trace::{self, PlaneKey, SignalTrace};
use ivtest_core::varmat::{self, VarianceMatrix};
use ivtest_core::workflow::{labelled_examples, load_models};
use ivtest_core::Error;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn plane_key(name: &str) -> PyResult<PlaneKey> {
    name.parse().map_err(to_py)
}

fn config(tau: f64, r: f64, seed: u64) -> PyResult<FeatureConfig> {
    let cfg = FeatureConfig {
        tau,
        r,
        sensitivity_seed: seed,
    };
    cfg.validate().map_err(to_py)?;
    Ok(cfg)
}

/// A model's signal trace.
#[pyclass(name = "Trace", module = "ivtest", frozen)]
struct PyTrace {
    inner: SignalTrace,
}

#[pymethods]
impl PyTrace {
    /// Reads and validates a trace directory.
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        let inner = trace::read_trace(&path).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        trace::write_trace(&self.inner, &path).map_err(to_py)
    }

    #[getter]
    fn model_id(&self) -> &str {
        &self.inner.model_id
    }

    /// Number of test objects.
    #[getter]
    fn m(&self) -> usize {
        self.inner.m
    }

    #[getter]
    fn v_values(&self) -> Vec<f64> {
        self.inner.family.v_values.clone()
    }

    #[getter]
    fn planes(&self) -> Vec<String> {
        self.inner
            .planes
            .iter()
            .map(|p| p.key.to_string())
            .collect()
    }

    #[getter]
    fn labels(&self) -> Vec<(String, u8)> {
        self.inner
            .labels
            .iter()
            .map(|(k, v)| (k.clone(), *v))
            .collect()
    }

    /// Signals of one plane as rows, one per transformation.
    fn signals(&self, plane: &str) -> PyResult<Vec<Vec<f32>>> {
        let p = self.inner.plane(&plane_key(plane)?).map_err(to_py)?;
        Ok(p.values.chunks(self.inner.m).map(<[f32]>::to_vec).collect())
    }

    /// Validation violations as `field: message` strings; empty if valid.
    fn validate(&self) -> Vec<String> {
        self.inner
            .validate()
            .iter()
            .map(ToString::to_string)
            .collect()
    }

    fn robust_accuracy(&self) -> PyResult<f64> {
        assessors::robust_accuracy(&self.inner).map_err(to_py)
    }

    /// Variance matrix of one plane, optionally over a subset of objects.
    #[pyo3(signature = (plane, objects=None))]
    fn variance_matrix(
        &self,
        plane: &str,
        objects: Option<Vec<usize>>,
    ) -> PyResult<PyVarianceMatrix> {
        let key = plane_key(plane)?;
        let inner = varmat::compute_variance_matrix(&self.inner, &key, objects.as_deref())
            .map_err(to_py)?;
        Ok(PyVarianceMatrix { inner })
    }

    /// Sixteen features of one plane as `(name, value)` pairs.
    #[pyo3(signature = (plane, tau=0.15, r=90.0, seed=0))]
    fn plane_features(
        &self,
        plane: &str,
        tau: f64,
        r: f64,
        seed: u64,
    ) -> PyResult<Vec<(String, f64)>> {
        let cfg = config(tau, r, seed)?;
        let key = plane_key(plane)?;
        let m = varmat::compute_variance_matrix(&self.inner, &key, None).map_err(to_py)?;
        let feats = extract_all(&m, &cfg, &self.inner).map_err(to_py)?;
        Ok(feats.iter().map(|(n, v)| (n.to_string(), v)).collect())
    }

    /// The 80-entry vector as `(plane, feature, value)` triples.
    #[pyo3(signature = (tau=0.15, r=90.0, seed=0))]
    fn features(
        &self,
        py: Python<'_>,
        tau: f64,
        r: f64,
        seed: u64,
    ) -> PyResult<Vec<(String, String, f64)>> {
        let cfg = config(tau, r, seed)?;
        let v = py
            .detach(|| assemble_vector(&self.inner, &cfg))
            .map_err(to_py)?;
        Ok(v.entries
            .into_iter()
            .map(|e| (e.plane, e.feature, e.value))
            .collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "Trace(model_id={:?}, m={}, transforms={}, planes={})",
            self.inner.model_id,
            self.inner.m,
            self.inner.n_transforms(),
            self.inner.planes.len()
        )
    }
}

#[pyclass(name = "VarianceMatrix", module = "ivtest", frozen)]
struct PyVarianceMatrix {
    inner: VarianceMatrix,
}

#[pymethods]
impl PyVarianceMatrix {
    #[getter]
    fn size(&self) -> usize {
        self.inner.size()
    }

    #[getter]
    fn plane(&self) -> String {
        self.inner.plane.to_string()
    }

    fn get(&self, i: usize, j: usize) -> PyResult<f64> {
        let size = self.inner.size();
        if i >= size || j >= size {
            return Err(PyValueError::new_err(format!(
                "index ({i}, {j}) out of range for size {size}"
            )));
        }
        Ok(self.inner.get(i, j))
    }

    fn max(&self) -> f64 {
        self.inner.max()
    }

    fn to_list(&self) -> Vec<Vec<f64>> {
        self.inner
            .as_slice()
            .chunks(self.inner.size())
            .map(<[f64]>::to_vec)
            .collect()
    }

    /// Writes a heat map as binary PPM.
    #[pyo3(signature = (path, scale_max=None))]
    fn render(&self, path: PathBuf, scale_max: Option<f64>) -> PyResult<()> {
        let img = render_matrix(&self.inner, scale_max).map_err(to_py)?;
        img.write_ppm(&path).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "VarianceMatrix(plane={}, size={})",
            self.inner.plane,
            self.inner.size()
        )
    }
}

/// A trained invariance assessor.
#[pyclass(name = "Assessor", module = "ivtest", frozen)]
struct PyAssessor {
    inner: assessors::Assessor,
}

#[pymethods]
impl PyAssessor {
    /// Trains on every model of a repository manifest.
    #[staticmethod]
    #[pyo3(signature = (repo, algo="forest", seed=0, tau=0.15, r=90.0))]
    fn train(
        py: Python<'_>,
        repo: PathBuf,
        algo: &str,
        seed: u64,
        tau: f64,
        r: f64,
    ) -> PyResult<Self> {
        let algo: Algorithm = algo.parse().map_err(to_py)?;
        let cfg = config(tau, r, 0)?;
        let inner = py
            .detach(|| {
                let (_, models) = load_models(&repo)?;
                let examples = labelled_examples(&models, algo, &cfg)?;
                let mut a = assessors::train(algo, &examples, seed)?;
                if algo != Algorithm::Baseline {
                    a.feature_config = Some(cfg);
                }
                Ok::<_, Error>(a)
            })
            .map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = assessors::Assessor::load(&path).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn algorithm(&self) -> &'static str {
        self.inner.algorithm().name()
    }

    /// `(label, score)` for a trace; label 1 means variant.
    fn assess(&self, trace: &PyTrace) -> PyResult<(u8, f64)> {
        let inputs = match self.inner.algorithm() {
            Algorithm::Baseline => vec![assessors::robust_accuracy(&trace.inner).map_err(to_py)?],
            _ => {
                let cfg = self.inner.feature_config.unwrap_or_default();
                assemble_vector(&trace.inner, &cfg).map_err(to_py)?.values()
            }
        };
        self.predict(inputs)
    }

    /// `(label, score)` for a raw input vector.
    fn predict(&self, inputs: Vec<f64>) -> PyResult<(u8, f64)> {
        let p = self.inner.predict(&inputs).map_err(to_py)?;
        Ok((p.label, p.score))
    }

    fn __repr__(&self) -> String {
        format!(
            "Assessor(algorithm={}, dim={})",
            self.inner.algorithm(),
            self.inner.dim
        )
    }
}

/// Repeated 3-fold cross-validation; returns `(mean, std)` accuracy in percent.
#[pyfunction]
#[pyo3(signature = (repo, algo="forest", repeats=10, seed=0))]
fn cross_validation(
    py: Python<'_>,
    repo: PathBuf,
    algo: &str,
    repeats: usize,
    seed: u64,
) -> PyResult<(f64, f64)> {
    let algo: Algorithm = algo.parse().map_err(to_py)?;
    py.detach(|| {
        let (_, models) = load_models(&repo)?;
        let examples = labelled_examples(&models, algo, &FeatureConfig::default())?;
        let r = cross_validate(&examples, algo, CvOptions { repeats, seed })?;
        Ok((r.mean, r.std))
    })
    .map_err(to_py)
}

/// Writes a labelled synthetic repository; returns `(model_id, label)` pairs.
#[pyfunction]
#[pyo3(signature = (out, count=150, balance=0.5, seed=0, m=100))]
fn synth_repository(
    py: Python<'_>,
    out: PathBuf,
    count: usize,
    balance: f64,
    seed: u64,
    m: usize,
) -> PyResult<Vec<(String, u8)>> {
    let opts = RepoOptions {
        count,
        balance,
        seed,
        m,
    };
    let manifest = py
        .detach(|| synth::generate_repository(&opts, &out))
        .map_err(to_py)?;
    Ok(manifest
        .models
        .into_iter()
        .map(|e| (e.model_id, e.label))
        .collect())
}

#[pymodule]
fn ivtest(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTrace>()?;
    m.add_class::<PyVarianceMatrix>()?;
    m.add_class::<PyAssessor>()?;
    m.add_function(wrap_pyfunction!(cross_validation, m)?)?;
    m.add_function(wrap_pyfunction!(synth_repository, m)?)?;
    m.add("FEATURE_NAMES", FEATURE_NAMES.to_vec())?;
    m.add(
        "CANONICAL_PLANES",
        trace::canonical_planes()
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>(),
    )?;
    Ok(())
}
