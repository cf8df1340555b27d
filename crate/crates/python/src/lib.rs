//! Python bindings. Exact rationals cross the boundary as
//! `fractions.Fraction`, big integers as `int`, reports as plain dicts.

use ahcert_core::cohomology;
use ahcert_core::comparison::{self, ComparisonCertificate};
use ahcert_core::diagram;
use ahcert_core::dynamics;
use ahcert_core::exact::{parse_rational, Rational};
use ahcert_core::pipeline::{self, RunConfig};
use ahcert_core::schedule::{self, DerivedSequences, KappaInterval, ParameterSchedule};
use ahcert_core::system::{self, density, ProjectionClass};
use num_bigint::{BigInt, BigUint};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn fraction<'py>(py: Python<'py>, r: &Rational) -> PyResult<Bound<'py, PyAny>> {
    py.import("fractions")?
        .getattr("Fraction")?
        .call1((r.numer().clone(), r.denom().clone()))
}

fn to_dict<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn rational_arg(text: &str) -> PyResult<Rational> {
    parse_rational(text).ok_or_else(|| PyValueError::new_err(format!("{text:?} is not a rational")))
}

/// A parameter schedule `d(n)`.
#[pyclass(name = "Schedule", module = "ahcert", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySchedule(ParameterSchedule);

#[pymethods]
impl PySchedule {
    #[staticmethod]
    fn geometric(coefficient: u64, base: u64) -> Self {
        PySchedule(ParameterSchedule::geometric(coefficient, base))
    }

    #[staticmethod]
    fn explicit(d: Vec<u64>) -> Self {
        PySchedule(ParameterSchedule::explicit(d))
    }

    #[staticmethod]
    fn powers_of_ten() -> Self {
        PySchedule(ParameterSchedule::powers_of_ten())
    }

    fn d(&self, n: usize) -> PyResult<BigUint> {
        self.0.d(n).map_err(err)
    }

    fn derive(&self, cap: usize) -> PyResult<PySequences> {
        schedule::derive_sequences(&self.0, cap).map(PySequences).map_err(err)
    }

    fn validate<'py>(&self, py: Python<'py>, cap: usize) -> PyResult<Bound<'py, PyAny>> {
        to_dict(py, &schedule::validate_schedule(&self.0, cap))
    }

    fn kappa(&self, stage: usize) -> PyResult<PyKappa> {
        schedule::kappa_interval(&self.0, stage).map(PyKappa).map_err(err)
    }

    fn __repr__(&self) -> String {
        match &self.0 {
            ParameterSchedule::Geometric { coefficient, base } => format!("Schedule.geometric({coefficient}, {base})"),
            ParameterSchedule::Explicit { d } => format!("Schedule.explicit({d:?})"),
        }
    }
}

/// `d, l, r, s` and `s/r` through a stage cap.
#[pyclass(name = "Sequences", module = "ahcert", frozen)]
struct PySequences(DerivedSequences);

#[pymethods]
impl PySequences {
    #[getter]
    fn cap(&self) -> usize {
        self.0.cap
    }

    fn check(&self, n: usize) -> PyResult<()> {
        self.0.require_stage(n).map_err(err)
    }

    fn d(&self, n: usize) -> PyResult<BigUint> {
        self.check(n)?;
        Ok(self.0.d(n).clone())
    }

    fn l(&self, n: usize) -> PyResult<BigUint> {
        self.check(n)?;
        Ok(self.0.l(n).clone())
    }

    fn r(&self, n: usize) -> PyResult<BigUint> {
        self.check(n)?;
        Ok(self.0.r(n).clone())
    }

    fn s(&self, n: usize) -> PyResult<BigUint> {
        self.check(n)?;
        Ok(self.0.s(n).clone())
    }

    fn ratio<'py>(&self, py: Python<'py>, n: usize) -> PyResult<Bound<'py, PyAny>> {
        self.check(n)?;
        fraction(py, self.0.ratio(n))
    }

    fn __repr__(&self) -> String {
        format!("Sequences(cap={})", self.0.cap)
    }
}

#[pyclass(name = "KappaInterval", module = "ahcert", frozen)]
struct PyKappa(KappaInterval);

#[pymethods]
impl PyKappa {
    #[getter]
    fn lo<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        fraction(py, &self.0.lo)
    }

    #[getter]
    fn hi<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        fraction(py, &self.0.hi)
    }

    #[getter]
    fn tail_bound<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        fraction(py, &self.0.tail_bound)
    }

    #[getter]
    fn stage_used(&self) -> usize {
        self.0.stage_used
    }

    #[getter]
    fn certified(&self) -> bool {
        self.0.certified
    }

    #[getter]
    fn lo_exceeds_half(&self) -> bool {
        self.0.lo_exceeds_half
    }

    fn width<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        fraction(py, &self.0.width())
    }

    fn __repr__(&self) -> String {
        format!(
            "KappaInterval(stage_used={}, certified={}, lo~{:.10}, hi~{:.10})",
            self.0.stage_used,
            self.0.certified,
            ahcert_core::exact::to_f64(&self.0.lo),
            ahcert_core::exact::to_f64(&self.0.hi)
        )
    }
}

#[pyclass(name = "Certificate", module = "ahcert", frozen)]
struct PyCertificate(ComparisonCertificate);

#[pymethods]
impl PyCertificate {
    #[getter]
    fn n(&self) -> usize {
        self.0.n
    }

    #[getter(M)]
    fn m_rank(&self) -> BigUint {
        self.0.m_rank.clone()
    }

    #[getter]
    fn rho<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        fraction(py, &self.0.rho)
    }

    #[getter]
    fn check_depth(&self) -> usize {
        self.0.check_depth
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        ComparisonCertificate::from_json(text).map(PyCertificate).map_err(err)
    }

    #[pyo3(signature = (seq, depth=None))]
    fn replay<'py>(&self, py: Python<'py>, seq: &PySequences, depth: Option<usize>) -> PyResult<Bound<'py, PyAny>> {
        to_dict(py, &comparison::replay(&self.0, &seq.0, depth.unwrap_or(self.0.check_depth)))
    }

    fn trace_gap<'py>(&self, py: Python<'py>, seq: &PySequences, m: usize) -> PyResult<Bound<'py, PyAny>> {
        fraction(py, &comparison::trace_gap(&self.0, &seq.0, m).map_err(err)?)
    }

    fn __repr__(&self) -> String {
        format!("Certificate(n={}, M={})", self.0.n, self.0.m_rank)
    }
}

/// Produces a comparison certificate for `rho` (a rational string).
#[pyfunction]
#[pyo3(signature = (rho, seq, kappa, check_depth=comparison::DEFAULT_CHECK_DEPTH))]
fn certify(rho: &str, seq: &PySequences, kappa: &PyKappa, check_depth: usize) -> PyResult<PyCertificate> {
    comparison::certify_with_depth(&rational_arg(rho)?, &seq.0, &kappa.0, check_depth)
        .map(PyCertificate)
        .map_err(err)
}

/// Closed-form verdict for `L^{×k}` inside a trivial bundle of rank `r`.
#[pyfunction]
fn embeds_in_trivial<'py>(py: Python<'py>, k: BigUint, r: BigUint) -> PyResult<Bound<'py, PyAny>> {
    to_dict(py, &cohomology::embeds_in_trivial(&k, &r))
}

/// Same verdict by expanding the inverse total Chern class.
#[pyfunction]
fn obstruction_by_expansion<'py>(py: Python<'py>, k: usize, r: usize) -> PyResult<Bound<'py, PyAny>> {
    to_dict(py, &cohomology::obstruction_by_expansion(k, r).map_err(err)?)
}

#[pyfunction]
fn chern_inverse_coeff(k: u64, j: u64) -> BigInt {
    cohomology::chern_inverse_coeff(k, j).value
}

/// `Π (1 + sign_i x_i)` as `{(indices...): coefficient}`.
#[pyfunction]
fn total_chern(k: usize, signs: Vec<i8>) -> PyResult<Vec<(Vec<usize>, i64)>> {
    let c = cohomology::total_chern_external_sum(k, &signs).map_err(err)?;
    Ok(c.terms().map(|(m, coeff)| (m.indices().collect(), coeff)).collect())
}

#[pyfunction]
fn bott_decomposition<'py>(py: Python<'py>, seq: &PySequences, m: usize) -> PyResult<Bound<'py, PyAny>> {
    let b = system::bott_class(&seq.0, m).map_err(err)?;
    to_dict(py, &system::bott_decomposition(&b, &seq.0).map_err(err)?)
}

/// Trace of `Γ_{m,n}` applied to the trivial class of rank `rank` at stage `n`.
#[pyfunction]
fn trace_of_trivial<'py>(
    py: Python<'py>,
    seq: &PySequences,
    n: usize,
    m: usize,
    rank: BigUint,
) -> PyResult<Bound<'py, PyAny>> {
    let e = ProjectionClass::trivial(n, rank).map_err(err)?;
    let g = system::connecting_map_between(&seq.0, n, m).map_err(err)?;
    let pushed = system::push_class(&e, &g, &seq.0).map_err(err)?;
    fraction(py, &system::trace_of_class(&pushed, &seq.0).map_err(err)?)
}

#[pyfunction]
fn verify_intertwine<'py>(py: Python<'py>, seq: &PySequences, n: usize) -> PyResult<Bound<'py, PyAny>> {
    to_dict(py, &dynamics::verify_intertwine(&seq.0, n).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (seq, n, seed=0, samples=100))]
fn spot_check_intertwine<'py>(
    py: Python<'py>,
    seq: &PySequences,
    n: usize,
    seed: u64,
    samples: usize,
) -> PyResult<Bound<'py, PyAny>> {
    to_dict(py, &dynamics::spot_check_intertwine(&seq.0, n, seed, samples).map_err(err)?)
}

/// Tower check and periodicity report at stage `n`.
#[pyfunction]
fn rokhlin_tower<'py>(py: Python<'py>, seq: &PySequences, n: usize) -> PyResult<Bound<'py, PyAny>> {
    let aut = dynamics::build_automorphism(&seq.0, n).map_err(err)?;
    let tower = dynamics::rokhlin_tower(&seq.0, n).map_err(err)?;
    to_dict(
        py,
        &(dynamics::verify_tower(&tower, &aut), dynamics::check_periodicity(&aut)),
    )
}

#[pyfunction]
#[pyo3(signature = (seq, depth, with_cross_evals=false))]
fn emit_dot(seq: &PySequences, depth: usize, with_cross_evals: bool) -> PyResult<String> {
    diagram::emit_dot(&seq.0, depth, with_cross_evals).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (seq, target_stage, cutoff, samples, seed, scheme_seed=None))]
fn density_diagnostic<'py>(
    py: Python<'py>,
    seq: &PySequences,
    target_stage: usize,
    cutoff: usize,
    samples: usize,
    seed: u64,
    scheme_seed: Option<u64>,
) -> PyResult<Bound<'py, PyAny>> {
    let scheme = density::PointScheme::new(scheme_seed.unwrap_or(seed));
    let report = py
        .detach(|| density::density_diagnostic(&scheme, &seq.0, target_stage, cutoff, samples, seed))
        .map_err(err)?;
    to_dict(py, &report)
}

/// Runs the whole pipeline on a TOML config string, or a bundled preset.
#[pyfunction]
#[pyo3(signature = (config=None, preset=None))]
fn run<'py>(py: Python<'py>, config: Option<&str>, preset: Option<&str>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = match (config, preset) {
        (Some(text), None) => RunConfig::from_toml(text),
        (None, Some(name)) => RunConfig::preset(name),
        (None, None) => RunConfig::preset("paper-10n"),
        _ => return Err(PyValueError::new_err("give config or preset, not both")),
    }
    .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let report = py
        .detach(|| pipeline::run(&cfg))
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    to_dict(py, &report)
}

#[pymodule]
fn ahcert(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySchedule>()?;
    m.add_class::<PySequences>()?;
    m.add_class::<PyKappa>()?;
    m.add_class::<PyCertificate>()?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    m.add_function(wrap_pyfunction!(embeds_in_trivial, m)?)?;
    m.add_function(wrap_pyfunction!(obstruction_by_expansion, m)?)?;
    m.add_function(wrap_pyfunction!(chern_inverse_coeff, m)?)?;
    m.add_function(wrap_pyfunction!(total_chern, m)?)?;
    m.add_function(wrap_pyfunction!(bott_decomposition, m)?)?;
    m.add_function(wrap_pyfunction!(trace_of_trivial, m)?)?;
    m.add_function(wrap_pyfunction!(verify_intertwine, m)?)?;
    m.add_function(wrap_pyfunction!(spot_check_intertwine, m)?)?;
    m.add_function(wrap_pyfunction!(rokhlin_tower, m)?)?;
    m.add_function(wrap_pyfunction!(emit_dot, m)?)?;
    m.add_function(wrap_pyfunction!(density_diagnostic, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
