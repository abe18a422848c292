//! Python module `provenance`: the trie, the relay, the simulated ledger
//! and the fitting helpers. Structured results come back as plain dicts
//! and lists decoded from the library's JSON forms.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde::Serialize;

use provenance_core::bench::{self, reference, FitModel};
use provenance_core::ledger::{self, Cluster as CoreCluster, SimConfig};
use provenance_core::merkle::{self, Digest, KvPair, Proof};
use provenance_core::relay::{
    self, NullPublisher, ProofOfProvenance, Relay as CoreRelay, RelayConfig, Strategy,
};

create_exception!(provenance, ProvenanceError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    ProvenanceError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn digest(hex: &str) -> PyResult<Digest> {
    Digest::from_hex(hex).map_err(err)
}

fn kv(key: &[u8], value: &[u8]) -> PyResult<KvPair> {
    KvPair::new(key.to_vec(), value.to_vec()).map_err(err)
}

/// Fixed-depth sparse Merkle trie over SHA-256.
#[pyclass(unsendable)]
struct SparseTrie(merkle::SparseTrie);

#[pymethods]
impl SparseTrie {
    #[new]
    fn new() -> Self {
        SparseTrie(merkle::SparseTrie::new())
    }

    /// Returns True if the pair was new.
    fn insert(&mut self, key: &[u8], value: &[u8]) -> PyResult<bool> {
        Ok(self.0.insert(kv(key, value)?).map_err(err)? == merkle::Inserted::New)
    }

    fn root(&self) -> String {
        self.0.root().to_hex()
    }

    fn contains(&self, key: &[u8]) -> bool {
        self.0.contains(key)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    /// Proof as JSON text.
    fn prove_inclusion(&self, key: &[u8]) -> PyResult<String> {
        Ok(Proof::from(self.0.prove_inclusion(key).map_err(err)?).to_json())
    }

    fn prove_exclusion(&self, key: &[u8]) -> PyResult<String> {
        Ok(Proof::from(self.0.prove_exclusion(key).map_err(err)?).to_json())
    }

    fn last_insert_hashes(&self) -> u64 {
        self.0.last_insert_hashes()
    }
}

/// Checks a JSON proof against a hex root.
#[pyfunction]
fn verify_proof(root: &str, proof_json: &str) -> PyResult<bool> {
    let proof = Proof::from_json(proof_json).map_err(err)?;
    merkle::verify_proof(&digest(root)?, &proof).map_err(err)
}

/// Relay on a logical clock; nothing is published anywhere.
#[pyclass(unsendable)]
struct Relay(CoreRelay);

#[pymethods]
impl Relay {
    #[new]
    #[pyo3(signature = (cycle_time_ms=1000, cycles_per_period=10, strategy="novel", retained_periods=2))]
    fn new(
        cycle_time_ms: u64,
        cycles_per_period: u64,
        strategy: &str,
        retained_periods: usize,
    ) -> PyResult<Self> {
        let config = RelayConfig {
            cycle_time_ms,
            cycles_per_period,
            strategy: strategy.parse::<Strategy>().map_err(err)?,
            retained_periods,
            ..RelayConfig::default()
        };
        Ok(Relay(CoreRelay::new(config, NullPublisher).map_err(err)?))
    }

    /// Returns `(cycle_index, accepted)`.
    fn submit(&mut self, key: &[u8], value: &[u8]) -> PyResult<(u64, bool)> {
        let r = self.0.submit(kv(key, value)?).map_err(err)?;
        Ok((r.cycle_index, r.accepted))
    }

    fn close_cycle<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let root = self.0.close_cycle().map_err(err)?;
        to_py(py, &root)
    }

    fn rotate_period<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let summary = self.0.rotate_period().map_err(err)?;
        to_py(py, &summary)
    }

    /// Moves the clock forward, closing cycles and rotating periods on the way.
    fn advance_to<'py>(&mut self, py: Python<'py>, t_ms: u64) -> PyResult<Bound<'py, PyAny>> {
        let events = self.0.advance_to(t_ms).map_err(err)?;
        to_py(py, &events)
    }

    /// Proof bundle as JSON text.
    fn retrieve_pop(
        &self,
        key: &[u8],
        inception_cycle: u64,
        current_cycle: u64,
    ) -> PyResult<String> {
        Ok(self
            .0
            .retrieve_pop(key, inception_cycle, current_cycle)
            .map_err(err)?
            .to_json())
    }

    fn verify_pop(&self, pop_json: &str) -> PyResult<bool> {
        let pop: ProofOfProvenance = serde_json::from_str(pop_json).map_err(err)?;
        relay::verify_pop(&pop, self.0.archived_roots()).map_err(err)
    }

    fn archived_roots<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0.archived_roots())
    }

    #[getter]
    fn current_cycle(&self) -> u64 {
        self.0.current_cycle()
    }
}

/// Hash evaluations needed to check a JSON proof bundle.
#[pyfunction]
fn hash_cost_of_pop(pop_json: &str) -> PyResult<u64> {
    let pop: ProofOfProvenance = serde_json::from_str(pop_json).map_err(err)?;
    Ok(relay::hash_cost_of_pop(&pop))
}

/// Simulated Raft cluster storing roots.
#[pyclass(unsendable)]
struct Cluster(CoreCluster);

#[pymethods]
impl Cluster {
    #[new]
    #[pyo3(signature = (node_count=3, seed=0, drop_probability=0.0))]
    fn new(node_count: u32, seed: u64, drop_probability: f64) -> PyResult<Self> {
        let config = SimConfig {
            node_count,
            seed,
            drop_probability,
            ..SimConfig::default()
        };
        Ok(Cluster(CoreCluster::new(config).map_err(err)?))
    }

    fn propose_root<'py>(
        &mut self,
        py: Python<'py>,
        cycle: u64,
        root: &str,
    ) -> PyResult<Bound<'py, PyAny>> {
        let result = self.0.propose_root(cycle, digest(root)?).map_err(err)?;
        to_py(py, &result)
    }

    fn settle(&mut self, max_ticks: u64) -> bool {
        self.0.settle(max_ticks)
    }

    /// Returns `(found, block_index)`.
    fn query_root(&self, node: u32, root: &str) -> PyResult<(bool, Option<u64>)> {
        if node >= self.0.config().node_count {
            return Err(err(format!("no node {node}")));
        }
        let q = self.0.query_root(node, &digest(root)?);
        Ok((q.found, q.block_index))
    }

    fn chain_valid(&self, node: u32) -> PyResult<bool> {
        if node >= self.0.config().node_count {
            return Err(err(format!("no node {node}")));
        }
        Ok(ledger::verify_chain(self.0.node(node).store().blocks()))
    }

    fn safety_report<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0.safety_report())
    }

    #[getter]
    fn leader(&self) -> Option<u32> {
        self.0.leader()
    }
}

fn report(model: PyResult<FitModel>) -> PyResult<(Vec<f64>, f64)> {
    let m = model?;
    Ok((m.coefficients, m.rms_residual))
}

/// Returns `(coefficients, rms_residual)`.
#[pyfunction]
fn fit_linear(xs: Vec<f64>, ys: Vec<f64>) -> PyResult<(Vec<f64>, f64)> {
    report(bench::fit_linear(&xs, &ys).map_err(err))
}

#[pyfunction]
fn fit_poly2(xs: Vec<f64>, ys: Vec<f64>) -> PyResult<(Vec<f64>, f64)> {
    report(bench::fit_poly2(&xs, &ys).map_err(err))
}

#[pyfunction]
#[pyo3(signature = (xs, ys, step=0.01))]
fn fit_invlog(xs: Vec<f64>, ys: Vec<f64>, step: f64) -> PyResult<(Vec<f64>, f64)> {
    report(bench::fit_invlog_with(&xs, &ys, step).map_err(err))
}

/// Cycle difference where the published legacy and novel retrieval
/// models meet, for `n` pairs per cycle.
#[pyfunction]
fn reference_crossover(n: f64) -> PyResult<f64> {
    let c = bench::crossover(&reference::legacy_rpr(), &reference::novel_rpr(), n).map_err(err)?;
    Ok(c.delta_c_star)
}

/// Checks a block store file.
#[pyfunction]
fn verify_chain_file(path: &str) -> PyResult<bool> {
    let blocks = ledger::load_block_file(path).map_err(err)?;
    Ok(ledger::verify_chain(&blocks))
}

#[pymodule]
fn provenance(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ProvenanceError", m.py().get_type::<ProvenanceError>())?;
    m.add_class::<SparseTrie>()?;
    m.add_class::<Relay>()?;
    m.add_class::<Cluster>()?;
    m.add_function(wrap_pyfunction!(verify_proof, m)?)?;
    m.add_function(wrap_pyfunction!(hash_cost_of_pop, m)?)?;
    m.add_function(wrap_pyfunction!(fit_linear, m)?)?;
    m.add_function(wrap_pyfunction!(fit_poly2, m)?)?;
    m.add_function(wrap_pyfunction!(fit_invlog, m)?)?;
    m.add_function(wrap_pyfunction!(reference_crossover, m)?)?;
    m.add_function(wrap_pyfunction!(verify_chain_file, m)?)?;
    Ok(())
}
