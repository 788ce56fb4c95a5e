//! Shared oracles and fixtures for the integration suites. Everything here is
//! written against the public graph data only, never the library's own
//! scoring helpers.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use gapgraph_core::config::RunConfig;
use gapgraph_core::evidence::EvidenceId;
use gapgraph_core::gap::{ChainConfig, ChainKind, ScoreBasis, SearchChain};
use gapgraph_core::kg::{detect_communities, CommunityPartition, KnowledgeGraph, NodeId};
use gapgraph_core::orchestrator::rundir::RunDir;
use gapgraph_core::orchestrator::{Engine, Providers, RunState};
use gapgraph_core::providers::PromptLibrary;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// Random graphs

const RELS: [&str; 4] = ["supports", "extends", "limits", "informs"];

/// Up to `max_n` nodes, some core; directed multi-relation edges with 0..=3
/// evidence ids; small integer embeddings so similarity ties happen.
pub fn random_graph(r: &mut ChaCha8Rng, max_n: usize) -> KnowledgeGraph {
    let n = r.random_range(1..=max_n);
    let mut kg = KnowledgeGraph::new();
    let mut ids = Vec::new();
    for i in 0..n {
        let id = kg.add_node(&format!("node {i}"), r.random_bool(0.3));
        let emb: Vec<f64> = (0..3).map(|_| r.random_range(-2i32..=2) as f64).collect();
        let emb = if emb.iter().all(|x| *x == 0.0) { vec![1.0, 0.0, 0.0] } else { emb };
        kg.set_embedding(id, emb).unwrap();
        ids.push(id);
    }
    if n >= 2 {
        let density = r.random_range(0.05..0.6);
        let mut next_ev = 1u32;
        for &a in &ids {
            for &b in &ids {
                if a == b || !r.random_bool(density / 2.0) {
                    continue;
                }
                let k = r.random_range(0..=3);
                let ev: Vec<EvidenceId> = (0..k).map(|j| EvidenceId(next_ev + j)).collect();
                next_ev += k;
                kg.add_edge(a, b, RELS.choose(r).unwrap(), ev).unwrap();
            }
        }
    }
    kg
}

/// Leiden on even draws, a uniformly random contiguous labelling otherwise.
pub fn random_partition(r: &mut ChaCha8Rng, kg: &KnowledgeGraph) -> CommunityPartition {
    if r.random_bool(0.5) {
        return detect_communities(kg, r.random());
    }
    let ids: Vec<NodeId> = kg.nodes().map(|n| n.id).collect();
    let k = r.random_range(1..=ids.len().clamp(1, 4));
    // First k nodes seed the labels so every label is used.
    let mut labels: Vec<u32> = (0..ids.len()).map(|i| if i < k { i as u32 } else { r.random_range(0..k as u32) }).collect();
    for i in (1..labels.len()).rev() {
        let j = r.random_range(0..=i);
        labels.swap(i, j);
    }
    CommunityPartition { assignment: ids.into_iter().zip(labels).collect(), seed: 0 }
}

// ---------------------------------------------------------------------------
// Formula oracles over the undirected simple view

pub struct View {
    pub ids: Vec<NodeId>,
    pub adj: BTreeMap<NodeId, BTreeSet<NodeId>>,
    pub comm: BTreeMap<NodeId, u32>,
    pub core: BTreeMap<NodeId, bool>,
    pub emb: BTreeMap<NodeId, Vec<f64>>,
}

impl View {
    pub fn new(kg: &KnowledgeGraph, p: &CommunityPartition) -> Self {
        let ids: Vec<NodeId> = kg.nodes().map(|n| n.id).collect();
        let mut adj: BTreeMap<NodeId, BTreeSet<NodeId>> = ids.iter().map(|i| (*i, BTreeSet::new())).collect();
        for e in kg.edges() {
            adj.get_mut(&e.source).unwrap().insert(e.target);
            adj.get_mut(&e.target).unwrap().insert(e.source);
        }
        Self {
            comm: p.assignment.clone(),
            core: kg.nodes().map(|n| (n.id, n.is_core_entity)).collect(),
            emb: kg.nodes().filter_map(|n| n.embedding.clone().map(|e| (n.id, e))).collect(),
            ids,
            adj,
        }
    }

    pub fn linked(&self, a: NodeId, b: NodeId) -> bool {
        self.adj[&a].contains(&b)
    }

    pub fn cross(&self, v: NodeId) -> usize {
        self.adj[&v].iter().filter(|u| self.comm[u] != self.comm[&v]).count()
    }

    pub fn bridging(&self, v: NodeId) -> f64 {
        self.cross(v) as f64 / self.adj[&v].len().max(1) as f64
    }

    pub fn deg_in(&self, v: NodeId) -> usize {
        self.adj[&v].iter().filter(|u| self.comm[u] == self.comm[&v]).count()
    }

    pub fn importance(&self, a: NodeId, b: NodeId) -> f64 {
        match (self.core[&a], self.core[&b]) {
            (true, true) => 1.0,
            (false, false) => 0.0,
            _ => 0.5,
        }
    }

    pub fn enrichment(&self, a: NodeId, b: NodeId, evidence: usize) -> f64 {
        (1.0 + self.importance(a, b) + 0.5 * (self.bridging(a) + self.bridging(b))) / (1.0 + evidence as f64)
    }

    pub fn sizes(&self) -> BTreeMap<u32, usize> {
        let mut m = BTreeMap::new();
        for c in self.comm.values() {
            *m.entry(*c).or_insert(0) += 1;
        }
        m
    }

    /// Smoothed block probability by direct pair counting.
    pub fn block(&self, ci: u32, cj: u32, alpha: f64) -> f64 {
        let mut actual = 0usize;
        for (i, a) in self.ids.iter().enumerate() {
            for b in &self.ids[i + 1..] {
                let (ca, cb) = (self.comm[a], self.comm[b]);
                if ((ca, cb) == (ci, cj) || (ca, cb) == (cj, ci)) && self.linked(*a, *b) {
                    actual += 1;
                }
            }
        }
        let sizes = self.sizes();
        let (ni, nj) = (sizes[&ci] as f64, sizes[&cj] as f64);
        let possible = if ci == cj { ni * (ni - 1.0) / 2.0 } else { ni * nj };
        (actual as f64 + alpha) / (possible + 2.0 * alpha)
    }
}

pub fn entropy(p: f64) -> f64 {
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

pub fn textbook_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

// ---------------------------------------------------------------------------
// Brute-force chain pipeline, written out step by step from the rules:
// quotas of floor(N/4); enrich pool zero-evidence first; core pairs by similarity;
// structural holes: bridges (top 3), hubs (top 2, not bridges), rep (max deg_in)
// paired across communities; block-model pairs over the remaining cross-community
// non-edges, probability half with the odd slot then entropy half; leftover
// filled enrich, similarity, block-model (probability order), structural
// hole; emitted in that same kind order.

#[derive(Debug, Clone, PartialEq)]
pub struct OracleChain {
    pub kind: ChainKind,
    pub source: NodeId,
    pub target: NodeId,
    pub basis: ScoreBasis,
    pub score: f64,
}

fn key(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    (a.min(b), a.max(b))
}

fn by_score_then<T: Ord>(x: (f64, T), y: (f64, T)) -> std::cmp::Ordering {
    y.0.partial_cmp(&x.0).unwrap().then(x.1.cmp(&y.1))
}

pub fn oracle_chains(kg: &KnowledgeGraph, p: &CommunityPartition, cfg: &ChainConfig) -> Vec<OracleChain> {
    if kg.node_count() == 0 {
        return Vec::new();
    }
    let v = View::new(kg, p);
    let q = cfg.budget / 4;
    let leftover = cfg.budget - 4 * q;

    // Enrich candidates.
    let mut enrich: Vec<(bool, f64, u32, OracleChain)> = Vec::new();
    for e in kg.edges() {
        let ev = e.evidence_ids.len();
        if ev > cfg.enrich_threshold {
            continue;
        }
        let s = v.enrichment(e.source, e.target, ev);
        enrich.push((ev == 0, s, e.id.0, OracleChain { kind: ChainKind::Enrich, source: e.source, target: e.target, basis: ScoreBasis::Enrichment, score: s }));
    }
    enrich.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.partial_cmp(&a.1).unwrap()).then(a.2.cmp(&b.2)));
    let enrich: Vec<OracleChain> = enrich.into_iter().map(|x| x.3).collect();

    // Similarity candidates.
    let mut t1 = Vec::new();
    for &c in &v.ids {
        for &k in &v.ids {
            if v.core[&c] && !v.core[&k] && !v.linked(c, k) {
                let s = textbook_cosine(&v.emb[&c], &v.emb[&k]);
                t1.push((s, (c, k)));
            }
        }
    }
    t1.sort_by(|a, b| by_score_then(*a, *b));
    let t1: Vec<OracleChain> = t1
        .into_iter()
        .map(|(s, (c, k))| OracleChain { kind: ChainKind::ExploreSim, source: c, target: k, basis: ScoreBasis::Similarity, score: s })
        .collect();

    // Structural-hole candidates.
    let labels: BTreeSet<u32> = v.comm.values().copied().collect();
    let mut roles: BTreeMap<u32, (Vec<NodeId>, NodeId)> = BTreeMap::new();
    for &c in &labels {
        let members: Vec<NodeId> = v.ids.iter().copied().filter(|n| v.comm[n] == c).collect();
        let mut b: Vec<(f64, NodeId)> = members.iter().filter(|n| v.cross(**n) > 0).map(|n| (v.bridging(*n), *n)).collect();
        b.sort_by(|x, y| by_score_then(*x, *y));
        let bridges: Vec<NodeId> = b.iter().take(3).map(|x| x.1).collect();
        let mut h: Vec<(usize, NodeId)> = members.iter().filter(|n| !bridges.contains(n)).map(|n| (v.deg_in(*n), *n)).collect();
        h.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)));
        let hubs: Vec<NodeId> = h.iter().take(2).map(|x| x.1).collect();
        let mut all: Vec<(usize, NodeId)> = members.iter().map(|n| (v.deg_in(*n), *n)).collect();
        all.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)));
        let sources = bridges.into_iter().chain(hubs).collect();
        roles.insert(c, (sources, all[0].1));
    }
    let mut t3 = Vec::new();
    for (c1, (sources, _)) in &roles {
        for (c2, (_, rep)) in &roles {
            if c1 == c2 {
                continue;
            }
            for &s in sources {
                if !v.linked(s, *rep) {
                    t3.push((v.bridging(s), (s, *rep)));
                }
            }
        }
    }
    t3.sort_by(|a, b| by_score_then(*a, *b));
    let mut seen = BTreeSet::new();
    let t3: Vec<OracleChain> = t3
        .into_iter()
        .filter(|(_, (a, b))| seen.insert(key(*a, *b)))
        .map(|(s, (a, b))| OracleChain { kind: ChainKind::ExploreHole, source: a, target: b, basis: ScoreBasis::StructuralHole, score: s })
        .collect();

    // Quota selection for enrich, similarity and structural holes.
    let mut emitted: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
    let take = |list: &[OracleChain], pos: &mut usize, n: usize, emitted: &mut BTreeSet<(NodeId, NodeId)>| {
        let mut out = Vec::new();
        while out.len() < n && *pos < list.len() {
            let c = &list[*pos];
            *pos += 1;
            if emitted.insert(key(c.source, c.target)) {
                out.push(c.clone());
            }
        }
        out
    };
    let mut sel_e: Vec<OracleChain> = enrich.iter().take(q).cloned().collect();
    let (mut p1, mut p3) = (0, 0);
    let mut sel_1 = take(&t1, &mut p1, q, &mut emitted);
    let mut sel_3 = take(&t3, &mut p3, q, &mut emitted);

    // Block-model pairs over what is left.
    let mut pool = Vec::new();
    for (i, &a) in v.ids.iter().enumerate() {
        for &b in &v.ids[i + 1..] {
            if v.comm[&a] != v.comm[&b] && !v.linked(a, b) && !emitted.contains(&key(a, b)) {
                let pr = v.block(v.comm[&a], v.comm[&b], cfg.sbm_alpha);
                pool.push((pr, entropy(pr), a, b));
            }
        }
    }
    let mut by_p = pool.clone();
    by_p.sort_by(|x, y| by_score_then((x.0, (x.2, x.3)), (y.0, (y.2, y.3))));
    let mut by_h = pool;
    by_h.sort_by(|x, y| by_score_then((x.1, (x.2, x.3)), (y.1, (y.2, y.3))));
    let half = q / 2;
    let mut sel_2: Vec<OracleChain> = by_p
        .iter()
        .take(q - half)
        .map(|x| OracleChain { kind: ChainKind::ExploreSbm, source: x.2, target: x.3, basis: ScoreBasis::SbmProbability, score: x.0 })
        .collect();
    let picked: BTreeSet<_> = sel_2.iter().map(|c| key(c.source, c.target)).collect();
    sel_2.extend(
        by_h.iter()
            .filter(|x| !picked.contains(&key(x.2, x.3)))
            .take(half)
            .map(|x| OracleChain { kind: ChainKind::ExploreSbm, source: x.2, target: x.3, basis: ScoreBasis::SbmEntropy, score: x.1 }),
    );
    emitted.extend(sel_2.iter().map(|c| key(c.source, c.target)));

    // Leftover: whatever the quotas could not use, plus N mod 4.
    let used = sel_e.len() + sel_1.len() + sel_2.len() + sel_3.len();
    let mut left = cfg.budget - used;
    debug_assert!(left >= leftover);
    let extra: Vec<OracleChain> = enrich.iter().skip(sel_e.len()).take(left).cloned().collect();
    left -= extra.len();
    sel_e.extend(extra);
    let more = take(&t1, &mut p1, left, &mut emitted);
    left -= more.len();
    sel_1.extend(more);
    let prob_list: Vec<OracleChain> = by_p
        .iter()
        .map(|x| OracleChain { kind: ChainKind::ExploreSbm, source: x.2, target: x.3, basis: ScoreBasis::SbmProbability, score: x.0 })
        .collect();
    let mut p2 = 0;
    let more = take(&prob_list, &mut p2, left, &mut emitted);
    left -= more.len();
    sel_2.extend(more);
    let more = take(&t3, &mut p3, left, &mut emitted);
    sel_3.extend(more);

    sel_e.into_iter().chain(sel_1).chain(sel_2).chain(sel_3).collect()
}

/// Same chains in the same order, scores within `tol`, ids chain_1.. in order.
pub fn same_chains(got: &[SearchChain], want: &[OracleChain], tol: f64) -> Result<(), String> {
    if got.len() != want.len() {
        return Err(format!("{} chains, oracle has {}", got.len(), want.len()));
    }
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        if g.chain_id != format!("chain_{}", i + 1) {
            return Err(format!("position {i}: id {}", g.chain_id));
        }
        if (g.kind, g.source, g.target, g.score_basis) != (w.kind, w.source, w.target, w.basis) || !rel_close(g.score, w.score, tol) {
            return Err(format!("position {i}: got {g}, oracle {w:?}"));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Scripted case-study fixture

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join("case_study")
}

pub fn fixture_query() -> String {
    std::fs::read_to_string(fixture_dir().join("query.txt")).unwrap().trim().to_string()
}

pub fn fixture_config() -> RunConfig {
    let mut cfg = RunConfig::from_file(&fixture_dir().join("config.toml")).unwrap();
    cfg.fixture_dir = Some(std::fs::canonicalize(fixture_dir()).unwrap());
    cfg
}

/// The same sequence the CLI's `run` performs, into `root`.
pub fn run_fixture_into(root: &Path, cfg: RunConfig) -> Result<(RunState, String), String> {
    let providers = Providers::from_config(&cfg).map_err(|e| e.to_string())?;
    let dir = RunDir::create(root, true).map_err(|e| e.to_string())?;
    dir.write_config(&cfg).map_err(|e| e.to_string())?;
    let mut engine = Engine::new(cfg, providers, PromptLibrary::builtin());
    let state = engine.init_run(&fixture_query()).map_err(|e| e.to_string())?;
    dir.checkpoint(&state, engine.transcript()).map_err(|e| e.to_string())?;
    let (state, report) = engine
        .run_to_end(state, &mut |s, e| dir.checkpoint(s, e.transcript()))
        .map_err(|e| e.to_string())?;
    dir.write_report(&report).map_err(|e| e.to_string())?;
    Ok((state, report))
}

/// Every file under `root`, keyed by relative path.
pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(base: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                out.insert(p.strip_prefix(base).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}
