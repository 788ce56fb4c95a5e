//! Synthetic worlds with a known answer: a planted-partition truth graph,
//! documents that state its edges, a keyword search engine over them and a
//! rule-based chat stand-in. Used to measure coverage and termination of both
//! loop variants without a network or a model.

mod ablation;
mod chat;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{KnowledgeGraph, NodeId};
use crate::orchestrator::OrchestratorError;
use crate::providers::{FetchProvider, ProviderError, SearchProvider, SearchResult};

pub use ablation::{
    coverage_of_bank, run_ablation, sim_providers, simulate_run, AblationResult, AblationSummary, RunMetrics, SimConfig,
};
pub use chat::{Rubric, SimChat};

pub const RELATIONS: [&str; 6] = ["supports", "extends", "shapes", "requires", "limits", "informs"];

const ONSETS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

static FACT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b([A-Z][a-z]+) ([a-z]+) ([A-Z][a-z]+)\.").unwrap());
static FACT_TITLE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^([A-Z][a-z]+) ([a-z]+) ([A-Z][a-z]+)$").unwrap());

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation input: {0}")]
    Input(String),
    #[error(transparent)]
    Run(#[from] OrchestratorError),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldParams {
    pub n_core: usize,
    pub n_concepts: usize,
    pub n_communities: usize,
    pub docs_per_edge: usize,
    /// Edge probability inside a community, on top of a spanning path.
    pub p_intra: f64,
    /// Edge probability across communities, on top of one bridge per pair of
    /// consecutive communities.
    pub p_inter: f64,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self { n_core: 4, n_concepts: 56, n_communities: 4, docs_per_edge: 1, p_intra: 0.15, p_inter: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDocument {
    pub url: String,
    pub title: String,
    pub text: String,
}

/// A truth edge by endpoint names, source first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Fact {
    pub source: String,
    pub relation: String,
    pub target: String,
}

impl Fact {
    pub fn sentence(&self) -> String {
        format!("{} {} {}.", self.source, self.relation, self.target)
    }

    pub fn title(&self) -> String {
        format!("{} {} {}", self.source, self.relation, self.target)
    }

    /// Endpoint pair, order-free.
    pub fn pair(&self) -> (String, String) {
        if self.source <= self.target {
            (self.source.clone(), self.target.clone())
        } else {
            (self.target.clone(), self.source.clone())
        }
    }
}

/// Facts stated as sentences anywhere in `text`.
pub fn facts_in(text: &str) -> Vec<Fact> {
    FACT.captures_iter(text)
        .filter(|c| RELATIONS.contains(&&c[2]))
        .map(|c| Fact { source: c[1].to_string(), relation: c[2].to_string(), target: c[3].to_string() })
        .collect()
}

/// A fact written as an outline line title.
pub fn fact_title(title: &str) -> Option<Fact> {
    let c = FACT_TITLE.captures(title.trim())?;
    RELATIONS
        .contains(&&c[2])
        .then(|| Fact { source: c[1].to_string(), relation: c[2].to_string(), target: c[3].to_string() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorld {
    pub seed: u64,
    pub truth_kg: KnowledgeGraph,
    /// Planted community per truth node.
    pub communities: BTreeMap<NodeId, usize>,
    pub documents: Vec<SimDocument>,
    /// Lower-cased node name → indices of documents mentioning it.
    pub query_index: BTreeMap<String, Vec<usize>>,
    pub planted_intra: usize,
    pub planted_inter: usize,
}

fn make_name(rng: &mut ChaCha8Rng) -> String {
    let mut s = String::new();
    for i in 0..3 {
        let c = ONSETS[rng.random_range(0..ONSETS.len())] as char;
        s.push(if i == 0 { c.to_ascii_uppercase() } else { c });
        s.push(VOWELS[rng.random_range(0..VOWELS.len())] as char);
    }
    s
}

pub fn generate_world(
    seed: u64,
    n_core: usize,
    n_concepts: usize,
    n_communities: usize,
    docs_per_edge: usize,
) -> Result<SyntheticWorld, SimError> {
    let p = WorldParams { n_core, n_concepts, n_communities, docs_per_edge, ..WorldParams::default() };
    generate_world_with(seed, &p)
}

pub fn generate_world_with(seed: u64, p: &WorldParams) -> Result<SyntheticWorld, SimError> {
    let n = p.n_core + p.n_concepts;
    if p.n_core == 0 || p.n_concepts == 0 || p.n_communities == 0 || p.docs_per_edge == 0 {
        return Err(SimError::Input("world sizes must all be at least 1".into()));
    }
    if p.n_communities > n {
        return Err(SimError::Input(format!("{} communities cannot be filled by {n} nodes", p.n_communities)));
    }
    if n > 20_000 {
        return Err(SimError::Input(format!("{n} nodes exceeds the name space")));
    }
    for (key, v) in [("p_intra", p.p_intra), ("p_inter", p.p_inter)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(SimError::Input(format!("{key} must lie in [0, 1]")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut names = BTreeSet::new();
    let mut kg = KnowledgeGraph::new();
    let mut ids = Vec::with_capacity(n);
    let mut communities = BTreeMap::new();
    while ids.len() < n {
        let name = make_name(&mut rng);
        if !names.insert(name.clone()) {
            continue;
        }
        let i = ids.len();
        let id = kg.add_node(&name, i < p.n_core);
        communities.insert(id, i % p.n_communities);
        ids.push(id);
    }

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); p.n_communities];
    for i in 0..n {
        members[i % p.n_communities].push(i);
    }
    let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    let key = |a: usize, b: usize| if a < b { (a, b) } else { (b, a) };
    // Spanning path per community, then one bridge between consecutive ones,
    // so the world is always connected.
    for m in &members {
        let mut order = m.clone();
        order.shuffle(&mut rng);
        for w in order.windows(2) {
            pairs.insert(key(w[0], w[1]));
        }
    }
    for c in 1..p.n_communities {
        let a = members[c - 1][rng.random_range(0..members[c - 1].len())];
        let b = members[c][rng.random_range(0..members[c].len())];
        pairs.insert(key(a, b));
    }
    for a in 0..n {
        for b in a + 1..n {
            let same = a % p.n_communities == b % p.n_communities;
            let prob = if same { p.p_intra } else { p.p_inter };
            if rng.random_bool(prob) {
                pairs.insert((a, b));
            }
        }
    }

    let mut planted_intra = 0;
    let mut planted_inter = 0;
    let mut edges = Vec::new();
    for (a, b) in pairs {
        if a % p.n_communities == b % p.n_communities {
            planted_intra += 1;
        } else {
            planted_inter += 1;
        }
        let (s, t) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
        let rel = RELATIONS[rng.random_range(0..RELATIONS.len())];
        let e = kg.add_edge(ids[s], ids[t], rel, []).expect("fresh nodes");
        edges.push(e);
    }

    let mut copies: Vec<usize> = (0..edges.len()).flat_map(|i| std::iter::repeat_n(i, p.docs_per_edge)).collect();
    copies.shuffle(&mut rng);
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut cur: Vec<usize> = Vec::new();
    let mut want = rng.random_range(1..=3);
    for e in copies {
        if cur.contains(&e) || cur.len() == want {
            groups.push(std::mem::take(&mut cur));
            want = rng.random_range(1..=3);
        }
        cur.push(e);
    }
    if !cur.is_empty() {
        groups.push(cur);
    }

    let mut documents = Vec::with_capacity(groups.len());
    let mut query_index: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (k, g) in groups.iter().enumerate() {
        let mut sentences = Vec::new();
        let mut mentioned = BTreeSet::new();
        for &i in g {
            let e = kg.edge(edges[i]).expect("edge");
            let (s, t) = (kg.node(e.source).expect("node"), kg.node(e.target).expect("node"));
            sentences.push(format!("{} {} {}.", s.name, e.relation, t.name));
            mentioned.insert(s.name.to_lowercase());
            mentioned.insert(t.name.to_lowercase());
        }
        for m in mentioned {
            query_index.entry(m).or_default().push(k);
        }
        documents.push(SimDocument {
            url: format!("https://sim.example/doc/{}", k + 1),
            title: format!("Document {}", k + 1),
            text: sentences.join(" "),
        });
    }

    Ok(SyntheticWorld { seed, truth_kg: kg, communities, documents, query_index, planted_intra, planted_inter })
}

impl SyntheticWorld {
    pub fn core_names(&self) -> Vec<String> {
        self.truth_kg.nodes().filter(|n| n.is_core_entity).map(|n| n.name.clone()).collect()
    }

    pub fn is_core(&self, name: &str) -> bool {
        self.truth_kg.find_node(name).is_some_and(|id| self.truth_kg.node(id).is_ok_and(|n| n.is_core_entity))
    }

    pub fn truth_facts(&self) -> BTreeSet<Fact> {
        let kg = &self.truth_kg;
        kg.edges()
            .map(|e| Fact {
                source: kg.node(e.source).map(|n| n.name.clone()).unwrap_or_default(),
                relation: e.relation.clone(),
                target: kg.node(e.target).map(|n| n.name.clone()).unwrap_or_default(),
            })
            .collect()
    }

    pub fn is_truth(&self, f: &Fact) -> bool {
        match (self.truth_kg.find_node(&f.source), self.truth_kg.find_node(&f.target)) {
            (Some(s), Some(t)) => self.truth_kg.find_edge(s, t, &f.relation).is_some(),
            _ => false,
        }
    }

    pub fn root_query(&self) -> String {
        let cores = self.core_names();
        format!("How do {} relate to each other and to the wider field?", cores.join(", "))
    }

    pub fn document(&self, url: &str) -> Option<&SimDocument> {
        let k: usize = url.strip_prefix("https://sim.example/doc/")?.parse().ok()?;
        self.documents.get(k.checked_sub(1)?)
    }

    /// Perfect extraction: a graph of every truth fact stated in `texts`.
    pub fn extract<'a>(&self, texts: impl IntoIterator<Item = &'a str>) -> KnowledgeGraph {
        let mut kg = KnowledgeGraph::new();
        for text in texts {
            for f in facts_in(text).into_iter().filter(|f| self.is_truth(f)) {
                let s = kg.find_node(&f.source).unwrap_or_else(|| kg.add_node(&f.source, self.is_core(&f.source)));
                let t = kg.find_node(&f.target).unwrap_or_else(|| kg.add_node(&f.target, self.is_core(&f.target)));
                kg.add_edge(s, t, &f.relation, []).expect("distinct endpoints");
            }
        }
        kg
    }

    /// Whether every node is reachable from every other, ignoring direction.
    pub fn is_connected(&self) -> bool {
        let ids: Vec<NodeId> = self.truth_kg.nodes().map(|n| n.id).collect();
        let mut uf = petgraph::unionfind::UnionFind::<usize>::new(ids.len());
        let pos: BTreeMap<NodeId, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        for e in self.truth_kg.edges() {
            uf.union(pos[&e.source], pos[&e.target]);
        }
        (1..ids.len()).all(|i| uf.equiv(0, i))
    }
}

fn pair_set(kg: &KnowledgeGraph) -> BTreeSet<(String, String)> {
    kg.edges()
        .filter_map(|e| {
            let s = kg.node(e.source).ok()?.name.clone();
            let t = kg.node(e.target).ok()?.name.clone();
            Some(if s <= t { (s, t) } else { (t, s) })
        })
        .collect()
}

/// Fraction of truth endpoint pairs present in `kg`, relation ignored. An
/// empty truth graph is fully covered.
pub fn coverage(kg: &KnowledgeGraph, truth: &KnowledgeGraph) -> f64 {
    let want = pair_set(truth);
    if want.is_empty() {
        return 1.0;
    }
    let have = pair_set(kg);
    want.intersection(&have).count() as f64 / want.len() as f64
}

fn fnv(parts: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in parts {
        for b in p.bytes().chain(std::iter::once(0xff)) {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// Keyword search: documents mentioning more of the query's node names rank
/// higher, a stated edge between two of them ranks higher still, and ties
/// break by a hash of query and url.
pub struct SimSearch {
    world: std::sync::Arc<SyntheticWorld>,
}

impl SimSearch {
    pub fn new(world: std::sync::Arc<SyntheticWorld>) -> Self {
        Self { world }
    }
}

impl SearchProvider for SimSearch {
    fn search(&self, query: &str, top_n: usize) -> Result<Vec<SearchResult>, ProviderError> {
        let lower = query.to_lowercase();
        let tokens: BTreeSet<&str> = lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).collect();
        let named: Vec<&str> = tokens.iter().copied().filter(|t| self.world.query_index.contains_key(*t)).collect();
        let mut hits: BTreeMap<usize, usize> = BTreeMap::new();
        for t in &named {
            for &d in &self.world.query_index[*t] {
                *hits.entry(d).or_default() += 2;
            }
        }
        let norm = crate::text::normalize_query(query);
        let mut ranked: Vec<(usize, u64, usize)> = hits
            .into_iter()
            .map(|(d, mut score)| {
                let doc = &self.world.documents[d];
                let linked = facts_in(&doc.text).iter().any(|f| {
                    named.contains(&f.source.to_lowercase().as_str()) && named.contains(&f.target.to_lowercase().as_str())
                });
                if linked {
                    score += 1;
                }
                (score, fnv(&[&norm, &doc.url]), d)
            })
            .collect();
        ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        Ok(ranked
            .into_iter()
            .take(top_n)
            .enumerate()
            .map(|(i, (_, _, d))| {
                let doc = &self.world.documents[d];
                let snippet = doc.text.split_inclusive(". ").next().unwrap_or("").trim().to_string();
                SearchResult { url: doc.url.clone(), title: doc.title.clone(), snippet, rank: i as u32 + 1 }
            })
            .collect())
    }
}

pub struct SimFetch {
    world: std::sync::Arc<SyntheticWorld>,
}

impl SimFetch {
    pub fn new(world: std::sync::Arc<SyntheticWorld>) -> Self {
        Self { world }
    }
}

impl FetchProvider for SimFetch {
    fn fetch(&self, url: &str) -> Result<String, ProviderError> {
        self.world.document(url).map(|d| d.text.clone()).ok_or_else(|| ProviderError::NotFound(url.to_string()))
    }
}
