//! Python bindings: traces, ladders, segment tables, single sessions,
//! metrics, the validation scenario and matrix runs.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use abrsim::abr::{AlgorithmKind, AlgorithmSpec};
use abrsim::engine::{run_session as run_core, ClientConfig, SessionLog};
use abrsim::experiment::{run_matrix, validate_fig3, write_validation, ExperimentConfig, ValidateConfig};
use abrsim::metrics::MetricsReport;
use abrsim::trace::{
    parse_trace, synth_controlled, synth_mobile, write_trace, MobileProfileSpec, Sample, ThroughputTrace,
    TraceFormat, TraceLabel,
};
use abrsim::video::{load_segments, synth_segments, RepresentationLadder, SegmentSizeTable};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn kind_of(name: &str) -> PyResult<AlgorithmKind> {
    AlgorithmKind::ALL
        .into_iter()
        .find(|k| k.id() == name)
        .ok_or_else(|| err(format!("unknown algorithm {name:?}")))
}

#[pyclass(name = "Trace", frozen)]
struct PyTrace(ThroughputTrace);

#[pymethods]
impl PyTrace {
    /// `samples` is a list of `(t_seconds, bits_per_second)` pairs.
    #[new]
    #[pyo3(signature = (samples, label = "custom"))]
    fn new(samples: Vec<(f64, f64)>, label: &str) -> PyResult<Self> {
        let samples = samples.into_iter().map(|(t, rate)| Sample { t, rate }).collect();
        let label = label.parse::<TraceLabel>().expect("infallible");
        ThroughputTrace::new(samples, label).map(Self).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (text, format = "csv-rate", label = "custom"))]
    fn from_csv(text: &str, format: &str, label: &str) -> PyResult<Self> {
        let format: TraceFormat = format.parse().map_err(err)?;
        let label = label.parse::<TraceLabel>().expect("infallible");
        parse_trace(text.as_bytes(), format, label).map(Self).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (high = 4e6, low = 4e5, phase = 30.0, duration = 90.0))]
    fn controlled(high: f64, low: f64, phase: f64, duration: f64) -> PyResult<Self> {
        synth_controlled(high, low, phase, duration).map(Self).map_err(err)
    }

    /// Synthetic mobile trace with `(start, length)` outages.
    #[staticmethod]
    #[pyo3(signature = (duration, seed, outages = Vec::new()))]
    fn mobile(duration: f64, seed: u64, outages: Vec<(f64, f64)>) -> PyResult<Self> {
        let mut spec = MobileProfileSpec::normal(duration);
        spec.outages = outages;
        let label = if spec.outages.is_empty() { TraceLabel::Normal } else { TraceLabel::Challenging };
        synth_mobile(&spec, label, seed).map(Self).map_err(err)
    }

    #[getter]
    fn duration(&self) -> f64 {
        self.0.duration()
    }

    #[getter]
    fn label(&self) -> String {
        self.0.label().to_string()
    }

    fn samples(&self) -> Vec<(f64, f64)> {
        self.0.samples().iter().map(|s| (s.t, s.rate)).collect()
    }

    fn rate_at(&self, t: f64) -> f64 {
        self.0.rate_at(t)
    }

    fn volume(&self, t0: f64, t1: f64) -> PyResult<f64> {
        if t1 < t0 {
            return Err(err("t1 must not precede t0"));
        }
        Ok(self.0.volume(t0, t1))
    }

    fn download_time(&self, start: f64, bits: f64) -> PyResult<f64> {
        self.0.download_time(start, bits).map_err(err)
    }

    fn to_csv(&self) -> String {
        write_trace(&self.0)
    }

    fn __len__(&self) -> usize {
        self.0.samples().len()
    }

    fn __repr__(&self) -> String {
        format!("Trace(label={:?}, samples={}, duration={})", self.0.label().to_string(), self.0.samples().len(), self.0.duration())
    }
}

#[pyclass(name = "Ladder", frozen)]
struct PyLadder(RepresentationLadder);

#[pymethods]
impl PyLadder {
    #[new]
    #[pyo3(signature = (rates_bps, segment_duration = 4.0))]
    fn new(rates_bps: Vec<u64>, segment_duration: f64) -> PyResult<Self> {
        RepresentationLadder::from_rates(&rates_bps, segment_duration).map(Self).map_err(err)
    }

    #[staticmethod]
    fn default() -> Self {
        Self(RepresentationLadder::default())
    }

    #[getter]
    fn rates(&self) -> Vec<u64> {
        self.0.rates()
    }

    #[getter]
    fn segment_duration(&self) -> f64 {
        self.0.segment_duration()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("Ladder(rates_bps={:?}, segment_duration={})", self.0.rates(), self.0.segment_duration())
    }
}

#[pyclass(name = "SegmentTable", frozen)]
struct PySegmentTable(SegmentSizeTable);

#[pymethods]
impl PySegmentTable {
    #[staticmethod]
    #[pyo3(signature = (ladder, count, vbr_cv = 0.15, seed = 0))]
    fn synthetic(ladder: &PyLadder, count: usize, vbr_cv: f64, seed: u64) -> PyResult<Self> {
        synth_segments(&ladder.0, count, vbr_cv, seed).map(Self).map_err(err)
    }

    /// `level,segment_index,bytes` rows, zero-based.
    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        load_segments(text.as_bytes()).map(Self).map_err(err)
    }

    /// Size in bits.
    fn size(&self, level: usize, k: usize) -> PyResult<u64> {
        if level >= self.0.levels() {
            return Err(err(format!("level {level} out of range")));
        }
        Ok(self.0.size(level, k))
    }

    #[getter]
    fn levels(&self) -> usize {
        self.0.levels()
    }

    #[getter]
    fn segment_count(&self) -> usize {
        self.0.segment_count()
    }
}

#[pyclass(name = "Session", frozen)]
struct PySession(SessionLog);

fn report_dict<'py>(py: Python<'py>, r: &MetricsReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("A", r.a)?;
    d.set_item("AF", r.af)?;
    d.set_item("AA", r.aa)?;
    d.set_item("RD", r.rd)?;
    d.set_item("RF", r.rf)?;
    d.set_item("k", r.k)?;
    d.set_item("played", r.l)?;
    d.set_item("switches", r.switches)?;
    d.set_item("rebuffer_events", r.rebuffer_events)?;
    d.set_item("rebuffer_time", r.rebuffer_time)?;
    d.set_item("flagged", r.flagged)?;
    Ok(d)
}

#[pymethods]
impl PySession {
    /// One `(k, level, rate_bps, start, end, buffer_at_decision)` tuple per
    /// segment; levels are zero-based.
    fn records(&self) -> Vec<(usize, usize, u64, f64, f64, f64)> {
        self.0
            .records
            .iter()
            .map(|r| (r.k, r.level, r.rate, r.start, r.end, r.buffer_at_decision))
            .collect()
    }

    /// `(t_start, t_end, segment)` per stall.
    fn stalls(&self) -> Vec<(f64, f64, usize)> {
        self.0.stalls.iter().map(|s| (s.t_start, s.t_end, s.segment)).collect()
    }

    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let s = &self.0.summary;
        let d = PyDict::new(py);
        d.set_item("algorithm", &s.algorithm)?;
        d.set_item("b_max", s.b_max)?;
        d.set_item("played", s.played)?;
        d.set_item("startup_time", s.startup_time)?;
        d.set_item("stall_time", s.stall_time)?;
        d.set_item("residual_buffer", s.residual_buffer)?;
        d.set_item("end_time", s.end_time)?;
        d.set_item("total_bits", s.total_bits)?;
        d.set_item("truncated", s.truncated)?;
        Ok(d)
    }

    fn metrics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let r = MetricsReport::from_log(&self.0).map_err(err)?;
        report_dict(py, &r)
    }

    fn to_csv(&self) -> PyResult<String> {
        self.0.to_csv().map_err(err)
    }

    fn __len__(&self) -> usize {
        self.0.records.len()
    }
}

/// Simulates one session. `params` overrides algorithm parameters by name.
#[pyfunction]
#[pyo3(signature = (trace, ladder, segments, algorithm, b_max, omega = 2, params = None, seed = 0, session_end = None))]
#[allow(clippy::too_many_arguments)]
fn run_session(
    py: Python<'_>,
    trace: &PyTrace,
    ladder: &PyLadder,
    segments: &PySegmentTable,
    algorithm: &str,
    b_max: f64,
    omega: u32,
    params: Option<BTreeMap<String, f64>>,
    seed: u64,
    session_end: Option<f64>,
) -> PyResult<PySession> {
    let spec = AlgorithmSpec {
        kind: kind_of(algorithm)?,
        params: params.unwrap_or_default(),
    };
    let mut cfg = ClientConfig::new(spec, b_max);
    cfg.omega = omega;
    cfg.segment_duration = ladder.0.segment_duration();
    cfg.session_end = session_end;
    py.detach(|| run_core(&trace.0, &ladder.0, &segments.0, &cfg, seed))
        .map(PySession)
        .map_err(err)
}

/// Runs the square-wave validation scenario with default settings and
/// returns `{check_id: (passed, detail)}`. Writes its CSVs when `out` is set.
#[pyfunction]
#[pyo3(signature = (out = None))]
fn validate<'py>(py: Python<'py>, out: Option<PathBuf>) -> PyResult<Bound<'py, PyDict>> {
    let v = py.detach(|| validate_fig3(&ValidateConfig::default())).map_err(err)?;
    if let Some(dir) = out {
        write_validation(&dir, &v).map_err(err)?;
    }
    let d = PyDict::new(py);
    for c in &v.report.checks {
        d.set_item(&c.id, (c.passed, &c.detail))?;
    }
    Ok(d)
}

/// Runs an experiment matrix from a TOML config and writes the bundle to
/// `out`. Returns `(sessions, cells, flagged, failed)`.
#[pyfunction]
fn run_experiment(py: Python<'_>, config: PathBuf, out: PathBuf) -> PyResult<(usize, usize, usize, usize)> {
    let outcome = py
        .detach(|| ExperimentConfig::load(&config).and_then(|cfg| run_matrix(&cfg, &out)))
        .map_err(err)?;
    let s = outcome.summary;
    Ok((s.sessions, s.cells, s.flagged, s.failed))
}

#[pymodule]
fn abrsim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTrace>()?;
    m.add_class::<PyLadder>()?;
    m.add_class::<PySegmentTable>()?;
    m.add_class::<PySession>()?;
    m.add_function(wrap_pyfunction!(run_session, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("ALGORITHMS", AlgorithmKind::ALL.iter().map(|k| k.id()).collect::<Vec<_>>())?;
    Ok(())
}
