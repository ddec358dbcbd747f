//! Python bindings: metrics, distance, closed maximizers, Busemann grids and stable
//! time separation.
//!
//! Points and classes are `(t, x)` tuples. Structured results are returned as dicts.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

use torus_lab::action::ActionOptions;
use torus_lab::busemann::{busemann_field, eikonal_residual, BusemannGrid as CoreGrid, BusemannOptions, ReferenceLine, Side};
use torus_lab::config::ExperimentConfig;
use torus_lab::distance::{periodic_maximizer as core_maximizer, DistanceOptions, GridSpec};
use torus_lab::error::LabError;
use torus_lab::foliation::{stable_cone as core_cone, StableCone};
use torus_lab::metric::{Bump, MetricField, Shear};
use torus_lab::stablesep::{unit_sphere, StableSep as CoreSep};
use torus_lab::vec2::{Homology, Vec2};
use torus_lab::verify::run_suite;

fn err(e: LabError) -> PyErr {
    match e {
        LabError::Config(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn v(p: (f64, f64)) -> Vec2 {
    Vec2::new(p.0, p.1)
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let s = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (s,))
}

/// A Lorentzian metric on the torus.
#[pyclass(frozen, module = "torus_lab_py")]
pub struct Metric {
    inner: MetricField,
}

#[pymethods]
impl Metric {
    #[staticmethod]
    fn flat() -> Self {
        Metric { inner: MetricField::flat() }
    }

    /// Flat metric scaled by `e^{2φ}` for a periodic bump `φ`; omit `width_t` for a stripe.
    #[staticmethod]
    #[pyo3(signature = (amplitude, center, width_x, width_t=None))]
    fn conformal(amplitude: f64, center: (f64, f64), width_x: f64, width_t: Option<f64>) -> PyResult<Self> {
        let inner = MetricField::conformal(Bump { amplitude, center: v(center), width_t, width_x }).map_err(err)?;
        Ok(Metric { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (half_opening, tilt=0.0, shear_t=0.0, shear_x=0.0))]
    fn tilted(half_opening: f64, tilt: f64, shear_t: f64, shear_x: f64) -> PyResult<Self> {
        let inner = MetricField::tilted(Shear { tilt, shear_t, shear_x, half_opening }).map_err(err)?;
        Ok(Metric { inner })
    }

    /// The quadratic form `g_p(v, v)`; negative on timelike vectors.
    fn lorentz_norm(&self, p: (f64, f64), vel: (f64, f64)) -> f64 {
        self.inner.lorentz_norm(v(p), v(vel))
    }

    /// Slopes `dx/dt` of the two null directions at `p`.
    fn null_slopes(&self, p: (f64, f64)) -> PyResult<(f64, f64)> {
        self.inner.null_slopes(v(p)).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Metric({:?})", self.inner.family)
    }
}

/// Stable time cone as a dict; raises `RuntimeError` when the metric is not class A.
#[pyfunction]
fn stable_cone<'py>(py: Python<'py>, metric: &Metric) -> PyResult<Bound<'py, PyAny>> {
    let c = core_cone(&metric.inner).map_err(err)?;
    let d = to_py(py, &c)?;
    d.set_item("angle", c.angle())?;
    Ok(d)
}

/// Lorentzian distance `d(p, q)`; 0 when `q` is not in the causal future of `p`.
#[pyfunction]
#[pyo3(signature = (metric, p, q, polish=true))]
fn distance(metric: &Metric, p: (f64, f64), q: (f64, f64), polish: bool) -> PyResult<f64> {
    let opts = DistanceOptions { polish, ..DistanceOptions::default() };
    Ok(torus_lab::distance::distance(&metric.inner, v(p), v(q), &opts).map_err(err)?.value)
}

fn cone_of(m: &MetricField) -> PyResult<StableCone> {
    core_cone(m).map_err(err)
}

/// Closed maximizer in class `(q, p)`: dict with `period`, `base` and curve `nodes`.
#[pyfunction]
fn periodic_maximizer<'py>(py: Python<'py>, metric: &Metric, homology: (i64, i64)) -> PyResult<Bound<'py, PyDict>> {
    let cone = cone_of(&metric.inner)?;
    let pm = core_maximizer(&metric.inner, &cone, Homology::new(homology.0, homology.1), &ActionOptions::default()).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("period", pm.period)?;
    d.set_item("base", (pm.base.t, pm.base.x))?;
    let nodes: Vec<(f64, f64)> = pm.curve.nodes.iter().map(|p| (p.t, p.x)).collect();
    d.set_item("nodes", nodes)?;
    Ok(d)
}

/// Busemann function of the closed maximizer in a class, sampled on a window.
#[pyclass(frozen, module = "torus_lab_py")]
pub struct BusemannGrid {
    metric: MetricField,
    inner: CoreGrid,
}

#[pymethods]
impl BusemannGrid {
    #[new]
    #[pyo3(signature = (metric, direction=(1, 0), side="minus", window_t=(0.0, 2.0), window_x=(-1.0, 1.0), n=128))]
    fn new(
        metric: &Metric,
        direction: (i64, i64),
        side: &str,
        window_t: (f64, f64),
        window_x: (f64, f64),
        n: usize,
    ) -> PyResult<Self> {
        let side: Side = side.parse().map_err(|e: String| PyValueError::new_err(e))?;
        let m = metric.inner;
        let cone = cone_of(&m)?;
        let pm = core_maximizer(&m, &cone, Homology::new(direction.0, direction.1), &ActionOptions::default()).map_err(err)?;
        let line = ReferenceLine::periodic(&m, &pm);
        let spec = GridSpec::new(window_t, window_x, n, n).map_err(err)?;
        let inner = busemann_field(&m, &line, side, &spec, &BusemannOptions::default()).map_err(err)?;
        Ok(BusemannGrid { metric: m, inner })
    }

    /// Interpolated value, `None` outside the window.
    fn value_at(&self, p: (f64, f64)) -> Option<f64> {
        self.inner.value_at(v(p))
    }

    /// Node values as a list of rows, `t` major.
    fn values(&self) -> Vec<Vec<f64>> {
        let s = &self.inner.spec;
        (0..=s.n_t).map(|i| (0..=s.n_x).map(|j| self.inner.value(i, j)).collect()).collect()
    }

    /// Residual statistics of `g(∇b, ∇b) = −1` over smooth nodes.
    fn eikonal<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &eikonal_residual(&self.metric, &self.inner))
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn corner_fraction(&self) -> f64 {
        self.inner.corner_fraction()
    }
}

/// Stable time separation `𝔩` of a class A metric.
#[pyclass(frozen, module = "torus_lab_py")]
pub struct StableSep {
    inner: CoreSep,
}

#[pymethods]
impl StableSep {
    #[new]
    #[pyo3(signature = (metric, tol=1e-3))]
    fn new(metric: &Metric, tol: f64) -> PyResult<Self> {
        let cone = cone_of(&metric.inner)?;
        let mut inner = CoreSep::new(metric.inner, cone);
        inner.tol = tol;
        Ok(StableSep { inner })
    }

    /// `𝔩(h)` for a real vector `h` inside the cone.
    fn value(&self, h: (f64, f64)) -> PyResult<f64> {
        Ok(self.inner.value(v(h)).map_err(err)?.value)
    }

    /// `D_v𝔩(h) + D_{−v}𝔩(h)` at an integral class, with its parts.
    fn corner_gap<'py>(&self, py: Python<'py>, h: (i64, i64), direction: (f64, f64)) -> PyResult<Bound<'py, PyAny>> {
        let g = self.inner.corner_gap(Homology::new(h.0, h.1), v(direction)).map_err(err)?;
        to_py(py, &g)
    }

    /// Unit-sphere profile over `n_dirs` directions.
    #[pyo3(signature = (n_dirs=17, derivative_q=2))]
    fn unit_sphere<'py>(&self, py: Python<'py>, n_dirs: usize, derivative_q: i64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &unit_sphere(&self.inner, n_dirs, derivative_q).map_err(err)?)
    }
}

/// Runs the verification suite on a TOML configuration and returns the verdict as JSON.
#[pyfunction]
fn verify_json(config: &str) -> PyResult<String> {
    let cfg = ExperimentConfig::parse(config).map_err(err)?;
    let r = run_suite(&cfg).map_err(err)?;
    serde_json::to_string_pretty(&r.verdict).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn torus_lab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Metric>()?;
    m.add_class::<BusemannGrid>()?;
    m.add_class::<StableSep>()?;
    m.add_function(wrap_pyfunction!(stable_cone, m)?)?;
    m.add_function(wrap_pyfunction!(distance, m)?)?;
    m.add_function(wrap_pyfunction!(periodic_maximizer, m)?)?;
    m.add_function(wrap_pyfunction!(verify_json, m)?)?;
    Ok(())
}
