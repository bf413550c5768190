//! Python bindings: tags, the sequential register, histories, simulation,
//! the checkers, ranked registers and the consensus register.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use coverable::checker::{self, Property, Status};
use coverable::cli::{self, Protocol, SimArgs, WorkloadKind};
use coverable::consensus::{propose_value, OracleRegister};
use coverable::history::History;
use coverable::ranked::{self, Policy, Rank, RrResult};
use coverable::seqreg::SeqRegister;
use coverable::{Error, ProcessId, Tag, Value};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Byte payloads accept `bytes` or `str`.
#[derive(FromPyObject)]
enum Bytes {
    B(Vec<u8>),
    S(String),
}

impl From<Bytes> for Value {
    fn from(b: Bytes) -> Value {
        match b {
            Bytes::B(v) => Value(v),
            Bytes::S(s) => Value(s.into_bytes()),
        }
    }
}

#[pyclass(name = "Tag", frozen, eq, ord, hash, from_py_object)]
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct PyTag(Tag);

#[pymethods]
impl PyTag {
    #[new]
    #[pyo3(signature = (ts = 0, wid = 0))]
    fn new(ts: u64, wid: u64) -> Self {
        PyTag(Tag::new(ts, wid))
    }

    #[getter]
    fn ts(&self) -> u64 {
        self.0.ts
    }

    #[getter]
    fn wid(&self) -> u64 {
        self.0.wid.0
    }

    fn successor(&self, wid: u64) -> PyResult<PyTag> {
        self.0.successor(ProcessId(wid)).map(PyTag).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Tag({}, {})", self.0.ts, self.0.wid.0)
    }
}

type Outcome = (Vec<u8>, PyTag, bool);

/// Sequential coverable register.
#[pyclass(name = "SeqRegister")]
struct PySeqRegister(SeqRegister);

#[pymethods]
impl PySeqRegister {
    #[new]
    #[pyo3(signature = (v0 = Bytes::B(Vec::new())))]
    fn new(v0: Bytes) -> Self {
        PySeqRegister(SeqRegister::new(v0.into()))
    }

    /// Returns `(value, tag, changed)`.
    fn write(&mut self, value: Bytes, ver: PyTag, proc: u64) -> PyResult<Outcome> {
        let o = self.0.write(value.into(), ver.0, ProcessId(proc)).map_err(py_err)?;
        Ok((o.value.0.clone(), PyTag(o.tag), o.changed()))
    }

    fn read(&self) -> (Vec<u8>, PyTag) {
        let (v, t) = self.0.read();
        (v.0, PyTag(t))
    }
}

#[pyclass(name = "History", from_py_object)]
#[derive(Clone)]
struct PyHistory(History);

#[pymethods]
impl PyHistory {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<PyHistory> {
        History::parse(text).map(PyHistory).map_err(py_err)
    }

    fn to_text(&self) -> String {
        self.0.to_text()
    }

    /// Number of operations.
    fn __len__(&self) -> PyResult<usize> {
        Ok(self.0.operations().map_err(py_err)?.len())
    }

    #[getter]
    fn events(&self) -> usize {
        self.0.events.len()
    }
}

/// Run a simulation; returns `(register_history, app_history)`.
#[pyfunction]
#[pyo3(signature = (protocol = "vmwabd", seed = 0, replicas = None, writers = 1, readers = 0, ops = 1, crashes = 0, delay_bound = None, f = 1))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    protocol: &str,
    seed: u64,
    replicas: Option<usize>,
    writers: usize,
    readers: usize,
    ops: usize,
    crashes: usize,
    delay_bound: Option<u64>,
    f: usize,
) -> PyResult<(PyHistory, PyHistory)> {
    let protocol = match protocol {
        "vmwabd" => Protocol::Vmwabd,
        "ldr" => Protocol::Ldr,
        "strongtr" => Protocol::Strongtr,
        other => return Err(PyValueError::new_err(format!("unknown protocol {other:?}"))),
    };
    let args = SimArgs {
        protocol,
        replicas,
        writers,
        readers,
        ops,
        crashes,
        dir_crashes: 0,
        client_crashes: 0,
        seed,
        delay_bound,
        f,
        replica_servers: None,
        workload: WorkloadKind::Random,
        fixture: None,
        out: None,
        app_out: None,
        initial: None,
    };
    let (h, app) = cli::simulate(&args).map_err(py_err)?;
    Ok((PyHistory(h), PyHistory(app)))
}

/// Verdicts as `(property, status, reason)`; defaults to the weak suite.
#[pyfunction]
#[pyo3(signature = (history, props = None))]
fn check(history: &PyHistory, props: Option<Vec<String>>) -> PyResult<Vec<(String, String, Option<String>)>> {
    let props = match props {
        None => Property::WEAK_SUITE.to_vec(),
        Some(names) => names
            .iter()
            .map(|n| Property::parse(n).ok_or_else(|| PyValueError::new_err(format!("unknown property {n:?}"))))
            .collect::<PyResult<_>>()?,
    };
    let verdicts = checker::report(&history.0, &props).map_err(py_err)?;
    Ok(verdicts
        .into_iter()
        .map(|v| {
            let s = match v.status {
                Status::Pass => "pass",
                Status::Fail => "fail",
                Status::Skipped => "skip",
            };
            (v.property.as_str().to_string(), s.to_string(), v.reason)
        })
        .collect())
}

/// Constructive atomicity check.
#[pyfunction]
fn is_atomic(history: &PyHistory) -> PyResult<bool> {
    Ok(checker::check_atomicity(&history.0).map_err(py_err)?.passed())
}

/// Exhaustive search; small histories only.
#[pyfunction]
fn is_linearizable(history: &PyHistory) -> PyResult<bool> {
    Ok(checker::brute_force_linearizable(&history.0).map_err(py_err)?.passed())
}

/// Edges of the version tree.
#[pyfunction]
fn version_tree(history: &PyHistory) -> PyResult<Vec<(PyTag, PyTag)>> {
    let t = checker::build_version_tree(&history.0).map_err(py_err)?;
    Ok(t.edges().into_iter().map(|(a, b)| (PyTag(a), PyTag(b))).collect())
}

#[pyclass(name = "RankedRegister")]
struct PyRankedRegister(ranked::RankedRegister);

#[pymethods]
impl PyRankedRegister {
    #[new]
    #[pyo3(signature = (policy = "permissive", v0 = Bytes::B(Vec::new())))]
    fn new(policy: &str, v0: Bytes) -> PyResult<Self> {
        let p = match policy {
            "permissive" => Policy::Permissive,
            "strict" => Policy::Strict,
            other => return Err(PyValueError::new_err(format!("unknown policy {other:?}"))),
        };
        Ok(PyRankedRegister(ranked::RankedRegister::new(v0.into(), p)))
    }

    /// Returns `("commit" | "abort", highest rank seen)`.
    fn rr_write(&mut self, rank: u64, value: Bytes) -> (&'static str, u64) {
        let (r, h) = self.0.rr_write(Rank(rank), value.into());
        (if r == RrResult::Commit { "commit" } else { "abort" }, h.0)
    }

    fn rr_read(&mut self, rank: u64) -> (u64, Vec<u8>) {
        let (r, v) = self.0.rr_read(Rank(rank));
        (r.0, v.0)
    }
}

/// Strongly coverable register over a local consensus oracle.
#[pyclass(name = "ConsensusRegister")]
struct PyConsensusRegister(OracleRegister);

#[pymethods]
impl PyConsensusRegister {
    #[new]
    #[pyo3(signature = (v0 = Bytes::B(Vec::new())))]
    fn new(v0: Bytes) -> Self {
        PyConsensusRegister(OracleRegister::new(v0.into()))
    }

    fn propose(&mut self, value: Bytes, proc: u64) -> PyResult<Vec<u8>> {
        Ok(propose_value(&mut self.0, value.into(), ProcessId(proc)).map_err(py_err)?.0)
    }
}

/// Run the command line with `args` (without the program name); returns
/// `(exit_code, stdout, stderr)`.
#[pyfunction]
fn run_cli(args: Vec<String>) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = cli::main_with(std::iter::once("coverable".to_string()).chain(args), &mut out, &mut err);
    (code, String::from_utf8_lossy(&out).into_owned(), String::from_utf8_lossy(&err).into_owned())
}

#[pymodule]
fn coverable_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTag>()?;
    m.add_class::<PySeqRegister>()?;
    m.add_class::<PyHistory>()?;
    m.add_class::<PyRankedRegister>()?;
    m.add_class::<PyConsensusRegister>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    m.add_function(wrap_pyfunction!(is_atomic, m)?)?;
    m.add_function(wrap_pyfunction!(is_linearizable, m)?)?;
    m.add_function(wrap_pyfunction!(version_tree, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
