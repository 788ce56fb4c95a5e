//! Python entry points. Graphs travel as the same JSON the run directory
//! stores, so a `kg.json` snapshot can be fed straight in.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use gapgraph_core::gap::{self, ChainConfig};
use gapgraph_core::kg::{detect_communities, KnowledgeGraph};
use gapgraph_core::outline::parse_outline;
use gapgraph_core::providers::HashEmbedder;
use gapgraph_core::sim::{run_ablation, SimConfig};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn load_kg(kg_json: &str) -> PyResult<KnowledgeGraph> {
    KnowledgeGraph::from_json(kg_json).map_err(value_err)
}

/// Community label per node id, from Leiden with the given seed.
#[pyfunction]
#[pyo3(signature = (kg_json, seed = 0))]
fn communities(kg_json: &str, seed: u64) -> PyResult<Vec<(String, u32)>> {
    let kg = load_kg(kg_json)?;
    Ok(detect_communities(&kg, seed).assignment.into_iter().map(|(n, c)| (n.to_string(), c)).collect())
}

/// Search chains for a graph as a JSON array. Nodes without an embedding get
/// the hash embedding mock runs use, keyed by `seed`.
#[pyfunction]
#[pyo3(signature = (kg_json, budget = 20, seed = 0))]
fn chains(kg_json: &str, budget: usize, seed: u64) -> PyResult<String> {
    let mut kg = load_kg(kg_json)?;
    kg.ensure_embeddings(&HashEmbedder::new(64, seed)).map_err(value_err)?;
    let p = detect_communities(&kg, seed);
    let cfg = ChainConfig { budget, ..ChainConfig::default() };
    let out = gap::build_search_chains(&kg, &p, &cfg).map_err(value_err)?;
    serde_json::to_string(&out).map_err(value_err)
}

/// (enrich, per exploratory type, leftover) for a budget.
#[pyfunction]
fn quotas(budget: usize) -> PyResult<(usize, usize, usize)> {
    let q = gap::allocate_quotas(budget).map_err(value_err)?;
    Ok((q.enrich, q.per_explore_type, q.leftover))
}

#[pyfunction]
fn entropy(p: f64) -> PyResult<f64> {
    gap::bernoulli_entropy(p).map_err(value_err)
}

/// Evidence ids cited anywhere in an outline.
#[pyfunction]
fn outline_citations(text: &str) -> PyResult<Vec<u32>> {
    let og = parse_outline(text).map_err(value_err)?;
    Ok(og.all_citations().into_iter().map(|id| id.0).collect())
}

/// The outline re-rendered without citation markers.
#[pyfunction]
fn strip_citations(text: &str) -> PyResult<String> {
    Ok(parse_outline(text).map_err(value_err)?.render(false))
}

/// Run the ablation on the given seeds; returns the summary as JSON.
#[pyfunction]
#[pyo3(signature = (seeds, config_toml = None))]
fn simulate(py: Python<'_>, seeds: Vec<u64>, config_toml: Option<&str>) -> PyResult<String> {
    let cfg = match config_toml {
        Some(t) => SimConfig::from_toml(t).map_err(value_err)?,
        None => SimConfig::default(),
    };
    let res = py.detach(|| run_ablation(&seeds, &cfg)).map_err(value_err)?;
    Ok(res.summary_json())
}

#[pymodule]
fn gapgraph(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(communities, m)?)?;
    m.add_function(wrap_pyfunction!(chains, m)?)?;
    m.add_function(wrap_pyfunction!(quotas, m)?)?;
    m.add_function(wrap_pyfunction!(entropy, m)?)?;
    m.add_function(wrap_pyfunction!(outline_citations, m)?)?;
    m.add_function(wrap_pyfunction!(strip_citations, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
