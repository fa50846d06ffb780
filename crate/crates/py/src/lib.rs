//! Python bindings: fields, Möbius maps, energies, balancing, checks and the
//! optimizer. Structured results come back as plain dicts and lists.

use ballconf::fields::{cone_membership, pullback_factor, DEFAULT_BOUNDARY_SAMPLES, DEFAULT_INTERIOR_SAMPLES};
use ballconf::functionals::{self as fun, default_degree, E2Formula};
use ballconf::mobius::{self, BalanceOptions};
use ballconf::optimize::{self, OptimizationConfig};
use ballconf::{verify, Error, FieldSpec, MobiusMap, Rules, ScalarField};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde::Serialize;

create_exception!(ballconf_py, BallconfError, PyException);
create_exception!(ballconf_py, ValidationError, BallconfError);
create_exception!(ballconf_py, ConvergenceError, BallconfError);

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Validation(_) | Error::Registry(_) | Error::Json(_) => ValidationError::new_err(e.to_string()),
        Error::Convergence { .. } | Error::LineSearch { .. } => ConvergenceError::new_err(e.to_string()),
        _ => BallconfError::new_err(e.to_string()),
    }
}

/// Converts any serializable value to Python objects through JSON.
fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| py_err(e.into()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn rules(n: usize, degree: Option<usize>) -> PyResult<Rules> {
    Rules::new(n, degree.unwrap_or(default_degree(n))).map_err(py_err)
}

/// Conformal factor u on B^{n+1}.
#[pyclass(name = "Field", module = "ballconf_py", frozen, from_py_object)]
#[derive(Clone)]
struct PyField {
    inner: ScalarField,
}

#[pymethods]
impl PyField {
    /// Parses a field spec, e.g. `{"n": 4, "variant": "Constant", "params": {"c": 1.0}}`.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = FieldSpec::from_json(text).and_then(|s| s.build()).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn constant(n: usize, c: f64) -> Self {
        Self {
            inner: ScalarField::constant(n + 1, c),
        }
    }

    /// Extremal of the quadratic trace inequality concentrating toward ξ as r → 1.
    #[staticmethod]
    fn bubble(n: usize, a: f64, r: f64, xi: Vec<f64>) -> PyResult<Self> {
        if xi.len() != n + 1 {
            return Err(ValidationError::new_err(format!("xi needs {} components", n + 1)));
        }
        Ok(Self {
            inner: ScalarField::bubble(n + 1, a, r, &xi).map_err(py_err)?,
        })
    }

    /// Seeded random polynomial of the given degree around `shift`.
    #[staticmethod]
    #[pyo3(signature = (n, seed, degree=4, amplitude=0.1, shift=1.0))]
    fn random(n: usize, seed: u64, degree: usize, amplitude: f64, shift: f64) -> PyResult<Self> {
        Ok(Self {
            inner: ballconf::fields::random_smooth(n + 1, seed, degree, amplitude, shift).map_err(py_err)?,
        })
    }

    /// Seeded perturbation of the constant placed inside the cone.
    #[staticmethod]
    #[pyo3(signature = (n, seed, degree=4, amplitude=0.05))]
    fn perturbed_constant(n: usize, seed: u64, degree: usize, amplitude: f64) -> PyResult<Self> {
        Ok(Self {
            inner: ballconf::fields::perturbed_constant(n, seed, degree, amplitude).map_err(py_err)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner.to_spec()).map_err(|e| py_err(e.into()))
    }

    fn __call__(&self, x: Vec<f64>) -> PyResult<f64> {
        if x.len() != self.inner.dim() {
            return Err(ValidationError::new_err(format!("point needs {} coordinates", self.inner.dim())));
        }
        Ok(self.inner.value_at(&x))
    }

    /// Conformal pullback of this field by a Möbius map.
    fn pullback(&self, map: &PyMobius) -> PyResult<Self> {
        Ok(Self {
            inner: pullback_factor(&map.inner, &self.inner).map_err(py_err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!("Field(n={})", self.inner.n())
    }
}

/// Conformal self-map of the unit ball: rotation composed with a boost.
#[pyclass(name = "MobiusMap", module = "ballconf_py", frozen, from_py_object)]
#[derive(Clone)]
struct PyMobius {
    inner: MobiusMap,
}

#[pymethods]
impl PyMobius {
    #[new]
    fn new(rotation: Vec<Vec<f64>>, base_point: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: MobiusMap::new(&rotation, &base_point).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn identity(dim: usize) -> Self {
        Self {
            inner: MobiusMap::identity(dim),
        }
    }

    #[staticmethod]
    fn random(dim: usize, seed: u64, radius: f64) -> PyResult<Self> {
        Ok(Self {
            inner: mobius::random_map(dim, seed, radius).map_err(py_err)?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn base_point(&self) -> Vec<f64> {
        self.inner.base_point().to_vec()
    }

    fn __call__(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        let d = self.inner.dim();
        if x.len() != d {
            return Err(ValidationError::new_err(format!("point needs {d} coordinates")));
        }
        Ok(self.inner.apply(&x)[..d].to_vec())
    }

    fn conformal_factor(&self, x: Vec<f64>) -> f64 {
        self.inner.conformal_factor(&x)
    }

    fn inverse(&self) -> Self {
        Self {
            inner: self.inner.inverse(),
        }
    }

    fn compose(&self, other: &PyMobius) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.compose(&other.inner).map_err(py_err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| py_err(e.into()))
    }
}

/// 𝓔₂ by the direct formula (n = 4, 5).
#[pyfunction]
#[pyo3(signature = (field, degree=None))]
fn e2(py: Python<'_>, field: &PyField, degree: Option<usize>) -> PyResult<f64> {
    let r = rules(field.inner.n(), degree)?;
    py.detach(|| fun::e2(&field.inner, &r)).map_err(py_err)
}

/// 𝓔₂ through several formulas, with their spread.
#[pyfunction]
#[pyo3(signature = (field, formulas=None, degree=None))]
fn e2_report(py: Python<'_>, field: &PyField, formulas: Option<Vec<String>>, degree: Option<usize>) -> PyResult<Py<PyAny>> {
    let r = rules(field.inner.n(), degree)?;
    let fs = match formulas {
        Some(names) => names.iter().map(|s| E2Formula::parse(s)).collect::<Result<Vec<_>, _>>().map_err(py_err)?,
        None => E2Formula::EXPANDED.to_vec(),
    };
    let report = py.detach(|| fun::e2_report(&field.inner, &r, &fs)).map_err(py_err)?;
    to_py(py, &report)
}

/// Escobar's quadratic energy 𝓔₁.
#[pyfunction]
#[pyo3(signature = (field, degree=None))]
fn e1(py: Python<'_>, field: &PyField, degree: Option<usize>) -> PyResult<f64> {
    let r = rules(field.inner.n(), degree)?;
    py.detach(|| fun::e1(&field.inner, &r)).map_err(py_err)
}

/// 𝓕₂ on B⁴ (n = 3).
#[pyfunction]
#[pyo3(signature = (field, degree=None))]
fn f2(py: Python<'_>, field: &PyField, degree: Option<usize>) -> PyResult<f64> {
    let r = rules(field.inner.n(), degree)?;
    py.detach(|| fun::f2(&field.inner, &r)).map_err(py_err)
}

/// 𝓖₂ = 𝓕₂ − (ω₃/3) log(∮e^{3u}/ω₃) on B⁴.
#[pyfunction]
#[pyo3(signature = (field, degree=None))]
fn g2(py: Python<'_>, field: &PyField, degree: Option<usize>) -> PyResult<f64> {
    let r = rules(field.inner.n(), degree)?;
    py.detach(|| fun::g2(&field.inner, &r)).map_err(py_err)
}

/// Rescales (n = 4, 5) or shifts (n = 3) so the boundary volume is ω_n.
#[pyfunction]
#[pyo3(signature = (field, degree=None))]
fn normalize(py: Python<'_>, field: &PyField, degree: Option<usize>) -> PyResult<PyField> {
    let r = rules(field.inner.n(), degree)?;
    let inner = py.detach(|| fun::normalize(&field.inner, &r)).map_err(py_err)?;
    Ok(PyField { inner })
}

/// Conjectured sharp constant for the k-th trace energy at boundary volume `volume`.
#[pyfunction]
fn sharp_constant(n: usize, k: usize, volume: f64) -> PyResult<f64> {
    fun::sharp_constant_conjecture(n, k, volume).map_err(py_err)
}

/// Sampled test of the cone conditions σ₁ ≥ 0 and H > 0.
#[pyfunction]
fn cone_report(py: Python<'_>, field: &PyField) -> PyResult<Py<PyAny>> {
    let rep = py
        .detach(|| cone_membership(&field.inner, DEFAULT_INTERIOR_SAMPLES, DEFAULT_BOUNDARY_SAMPLES))
        .map_err(py_err)?;
    to_py(py, &rep)
}

/// Balancing Möbius map; returns (map, moment norm, iterations).
#[pyfunction]
#[pyo3(signature = (field, tol=1e-8, max_iter=50))]
fn balance(py: Python<'_>, field: &PyField, tol: f64, max_iter: usize) -> PyResult<(PyMobius, f64, usize)> {
    let rep = py
        .detach(|| mobius::balance(&field.inner, &BalanceOptions::new(tol, max_iter)))
        .map_err(py_err)?;
    Ok((PyMobius { inner: rep.map }, rep.moment_norm, rep.iterations))
}

/// Distance of a field from the flat configurations, zero exactly on them.
#[pyfunction]
#[pyo3(signature = (field, degree=None))]
fn flatness_metric(py: Python<'_>, field: &PyField, degree: Option<usize>) -> PyResult<f64> {
    let r = rules(field.inner.n(), degree)?;
    py.detach(|| optimize::flatness_metric(&field.inner, &r)).map_err(py_err)
}

/// Registered checks as (name, dimensions, evidence, summary).
#[pyfunction]
fn list_checks() -> Vec<(String, Vec<usize>, bool, String)> {
    verify::registry()
        .iter()
        .map(|c| (c.name.to_string(), c.dims.to_vec(), c.evidence, c.summary.to_string()))
        .collect()
}

#[pyfunction]
#[pyo3(signature = (name, n, seed=42, degree=None))]
fn run_check(py: Python<'_>, name: &str, n: usize, seed: u64, degree: Option<usize>) -> PyResult<Py<PyAny>> {
    let cfg = verify::CheckConfig {
        seed,
        degree,
        ..Default::default()
    };
    let res = py.detach(|| verify::run_check(name, n, &cfg)).map_err(py_err)?;
    to_py(py, &res)
}

#[pyfunction]
#[pyo3(signature = (filter="all", ns=vec![3, 4, 5], seed=42))]
fn run_suite(py: Python<'_>, filter: &str, ns: Vec<usize>, seed: u64) -> PyResult<Py<PyAny>> {
    let cfg = verify::CheckConfig {
        seed,
        ..Default::default()
    };
    let rep = py.detach(|| verify::run_suite_with(filter, &ns, &cfg, |_| {})).map_err(py_err)?;
    to_py(py, &rep)
}

/// Minimizes 𝓔₂ (n = 4, 5) or 𝓖₂ (n = 3); returns (final field, trace dict).
#[pyfunction]
#[pyo3(signature = (n, init=None, seed=0, max_iter=500, degree=4, gradient_tol=1e-6))]
fn minimize(
    py: Python<'_>,
    n: usize,
    init: Option<&PyField>,
    seed: u64,
    max_iter: usize,
    degree: usize,
    gradient_tol: f64,
) -> PyResult<(PyField, Py<PyAny>)> {
    let cfg = OptimizationConfig {
        init: init.map(|f| f.inner.to_spec()),
        seed,
        max_iter,
        degree,
        gradient_tol,
        ..Default::default()
    };
    let (field, trace) = py
        .detach(|| if n == 3 { optimize::minimize_g2(&cfg) } else { optimize::minimize_e2(&cfg, n) })
        .map_err(py_err)?;
    Ok((PyField { inner: field }, to_py(py, &trace)?))
}

#[pymodule]
fn ballconf_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add_class::<PyField>()?;
    m.add_class::<PyMobius>()?;
    m.add("BallconfError", py.get_type::<BallconfError>())?;
    m.add("ValidationError", py.get_type::<ValidationError>())?;
    m.add("ConvergenceError", py.get_type::<ConvergenceError>())?;
    m.add_function(wrap_pyfunction!(e1, m)?)?;
    m.add_function(wrap_pyfunction!(e2, m)?)?;
    m.add_function(wrap_pyfunction!(e2_report, m)?)?;
    m.add_function(wrap_pyfunction!(f2, m)?)?;
    m.add_function(wrap_pyfunction!(g2, m)?)?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(sharp_constant, m)?)?;
    m.add_function(wrap_pyfunction!(cone_report, m)?)?;
    m.add_function(wrap_pyfunction!(balance, m)?)?;
    m.add_function(wrap_pyfunction!(flatness_metric, m)?)?;
    m.add_function(wrap_pyfunction!(list_checks, m)?)?;
    m.add_function(wrap_pyfunction!(run_check, m)?)?;
    m.add_function(wrap_pyfunction!(run_suite, m)?)?;
    m.add_function(wrap_pyfunction!(minimize, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
