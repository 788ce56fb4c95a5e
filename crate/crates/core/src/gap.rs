//! Knowledge-gap discovery: enrichment chains over weakly grounded edges and
//! three families of exploratory chains over missing edges, under fixed quotas.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{CommunityPartition, EdgeId, KgError, KnowledgeGraph, NodeId, Topology};
use crate::providers::cosine;

pub const DEFAULT_ENRICH_THRESHOLD: usize = 1;
pub const DEFAULT_SBM_ALPHA: f64 = 0.1;
pub const HYPOTHESIZED: &str = "hypothesized relation";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GapError {
    #[error("chain budget must be at least 1")]
    ZeroBudget,
    #[error("probability {0} outside (0, 1)")]
    Domain(f64),
    #[error("smoothing constant must be positive, got {0}")]
    BadAlpha(f64),
    #[error(transparent)]
    Kg(#[from] KgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainKind {
    Enrich,
    ExploreSim,
    ExploreSbm,
    ExploreHole,
}

impl ChainKind {
    pub fn prompt_type(self) -> &'static str {
        match self {
            ChainKind::Enrich => "enrich",
            _ => "explore",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreBasis {
    Enrichment,
    Similarity,
    SbmProbability,
    SbmEntropy,
    StructuralHole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchChain {
    pub chain_id: String,
    pub kind: ChainKind,
    pub source: NodeId,
    pub target: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge: Option<EdgeId>,
    pub relation_pattern: String,
    pub score: f64,
    pub score_basis: ScoreBasis,
}

impl SearchChain {
    fn new(kind: ChainKind, source: NodeId, target: NodeId, edge: Option<EdgeId>, relation: &str, score: f64, basis: ScoreBasis) -> Self {
        Self {
            chain_id: String::new(),
            kind,
            source,
            target,
            edge,
            relation_pattern: relation.to_string(),
            score,
            score_basis: basis,
        }
    }

    /// "Source → relation → Target" with node names.
    pub fn pattern(&self, kg: &KnowledgeGraph) -> String {
        let name = |n: NodeId| kg.node(n).map_or_else(|_| n.to_string(), |x| x.name.clone());
        format!("{} → {} → {}", name(self.source), self.relation_pattern, name(self.target))
    }

    /// One candidate line for the chain-selection prompt.
    pub fn prompt_line(&self, kg: &KnowledgeGraph) -> String {
        serde_json::json!({
            "chain_id": self.chain_id,
            "type": self.kind.prompt_type(),
            "pattern": self.pattern(kg),
        })
        .to_string()
    }

    pub fn pair(&self) -> (NodeId, NodeId) {
        unordered(self.source, self.target)
    }
}

impl fmt::Display for SearchChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{:?}\t{}\t{}\t{}\t{:.6}\t{:?}",
            self.chain_id, self.kind, self.source, self.relation_pattern, self.target, self.score, self.score_basis
        )
    }
}

fn unordered(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuotaAllocation {
    pub enrich: usize,
    pub per_explore_type: usize,
    pub leftover: usize,
}

pub fn allocate_quotas(n: usize) -> Result<QuotaAllocation, GapError> {
    if n == 0 {
        return Err(GapError::ZeroBudget);
    }
    let q = n / 4;
    Ok(QuotaAllocation { enrich: q, per_explore_type: q, leftover: n - 4 * q })
}

pub fn enrich_pool(kg: &KnowledgeGraph, threshold: usize) -> BTreeSet<EdgeId> {
    kg.edges().filter(|e| e.evidence_ids.len() <= threshold).map(|e| e.id).collect()
}

pub fn node_importance(kg: &KnowledgeGraph, u: NodeId, v: NodeId) -> Result<f64, GapError> {
    let cores = kg.node(u)?.is_core_entity as u8 + kg.node(v)?.is_core_entity as u8;
    Ok(match cores {
        2 => 1.0,
        1 => 0.5,
        _ => 0.0,
    })
}

fn enrichment_score_with(kg: &KnowledgeGraph, topo: &Topology, p: &CommunityPartition, e: EdgeId) -> Result<f64, GapError> {
    let edge = kg.edge(e)?;
    let importance = node_importance(kg, edge.source, edge.target)?;
    let cross = 0.5 * (topo.bridging_score(p, edge.source)? + topo.bridging_score(p, edge.target)?);
    Ok((1.0 + importance + cross) / (1.0 + edge.evidence_ids.len() as f64))
}

/// (1 + importance + cross-community exposure) / (1 + evidence count).
pub fn enrichment_score(kg: &KnowledgeGraph, p: &CommunityPartition, e: EdgeId) -> Result<f64, GapError> {
    enrichment_score_with(kg, &Topology::new(kg), p, e)
}

fn desc(a: f64, b: f64) -> Ordering {
    b.partial_cmp(&a).unwrap_or(Ordering::Equal)
}

fn enrich_ranked(kg: &KnowledgeGraph, topo: &Topology, p: &CommunityPartition, threshold: usize) -> Result<Vec<SearchChain>, GapError> {
    let mut rows = Vec::new();
    for id in enrich_pool(kg, threshold) {
        let e = kg.edge(id)?;
        let score = enrichment_score_with(kg, topo, p, id)?;
        rows.push((e.evidence_ids.is_empty(), score, id, e.source, e.target, e.relation.clone()));
    }
    rows.sort_by(|a, b| b.0.cmp(&a.0).then(desc(a.1, b.1)).then(a.2.cmp(&b.2)));
    Ok(rows
        .into_iter()
        .map(|(_, score, id, s, t, rel)| SearchChain::new(ChainKind::Enrich, s, t, Some(id), &rel, score, ScoreBasis::Enrichment))
        .collect())
}

/// Zero-evidence edges first, then by descending score, ties by edge id.
pub fn rank_enrich(kg: &KnowledgeGraph, p: &CommunityPartition, threshold: usize, quota: usize) -> Result<Vec<SearchChain>, GapError> {
    let mut v = enrich_ranked(kg, &Topology::new(kg), p, threshold)?;
    v.truncate(quota);
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmBlockMatrix {
    pub probs: Vec<Vec<f64>>,
    pub sizes: Vec<usize>,
    pub actual: Vec<Vec<usize>>,
    pub alpha: f64,
}

impl SbmBlockMatrix {
    pub fn p(&self, a: u32, b: u32) -> f64 {
        self.probs[a as usize][b as usize]
    }
}

fn possible_pairs(ni: usize, nj: usize, same: bool) -> f64 {
    if same {
        (ni * ni.saturating_sub(1)) as f64 / 2.0
    } else {
        (ni * nj) as f64
    }
}

/// Laplace-smoothed inter-block link probabilities on the undirected projection.
pub fn sbm_block_matrix(kg: &KnowledgeGraph, p: &CommunityPartition, alpha: f64) -> Result<SbmBlockMatrix, GapError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(GapError::BadAlpha(alpha));
    }
    sbm_with(&Topology::new(kg), p, alpha)
}

fn sbm_with(topo: &Topology, p: &CommunityPartition, alpha: f64) -> Result<SbmBlockMatrix, GapError> {
    let k = p.num_communities();
    let mut sizes = vec![0usize; k];
    let comm = |n: NodeId| {
        p.community_of(n).ok_or_else(|| GapError::Kg(KgError::PartitionMismatch(format!("{n} has no community"))))
    };
    for n in &topo.ids {
        sizes[comm(*n)? as usize] += 1;
    }
    let mut actual = vec![vec![0usize; k]; k];
    for (a, b) in topo.edge_list() {
        let (ca, cb) = (comm(topo.ids[a])? as usize, comm(topo.ids[b])? as usize);
        actual[ca][cb] += 1;
        if ca != cb {
            actual[cb][ca] += 1;
        }
    }
    let probs = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| (actual[i][j] as f64 + alpha) / (possible_pairs(sizes[i], sizes[j], i == j) + 2.0 * alpha))
                .collect()
        })
        .collect();
    Ok(SbmBlockMatrix { probs, sizes, actual, alpha })
}

pub fn bernoulli_entropy(p: f64) -> Result<f64, GapError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(GapError::Domain(p));
    }
    Ok(-p * p.log2() - (1.0 - p) * (1.0 - p).log2())
}

fn type1_ranked(kg: &KnowledgeGraph, topo: &Topology) -> Result<Vec<SearchChain>, GapError> {
    let cores: Vec<_> = kg.nodes().filter(|n| n.is_core_entity).collect();
    let concepts: Vec<_> = kg.nodes().filter(|n| !n.is_core_entity).collect();
    let mut rows = Vec::new();
    for c in &cores {
        for k in &concepts {
            if topo.linked(c.id, k.id) {
                continue;
            }
            let ec = c.embedding.as_ref().ok_or(KgError::MissingEmbedding(c.id))?;
            let ek = k.embedding.as_ref().ok_or(KgError::MissingEmbedding(k.id))?;
            rows.push((cosine(ec, ek), c.id, k.id));
        }
    }
    rows.sort_by(|a, b| desc(a.0, b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    Ok(rows
        .into_iter()
        .map(|(s, c, k)| SearchChain::new(ChainKind::ExploreSim, c, k, None, HYPOTHESIZED, s, ScoreBasis::Similarity))
        .collect())
}

/// Top-M unlinked (core entity, concept) pairs by embedding similarity.
pub fn explore_similar(kg: &KnowledgeGraph, m: usize) -> Result<Vec<SearchChain>, GapError> {
    let mut v = type1_ranked(kg, &Topology::new(kg))?;
    v.truncate(m);
    Ok(v)
}

/// Unlinked cross-community pairs in probability order and in entropy order.
fn type2_orders(
    topo: &Topology,
    p: &CommunityPartition,
    b: &SbmBlockMatrix,
    exclude: &BTreeSet<(NodeId, NodeId)>,
) -> Result<(Vec<SearchChain>, Vec<SearchChain>), GapError> {
    let mut rows = Vec::new();
    for (i, &u) in topo.ids.iter().enumerate() {
        for &v in &topo.ids[i + 1..] {
            let (cu, cv) = (p.community_of(u), p.community_of(v));
            let (Some(cu), Some(cv)) = (cu, cv) else {
                return Err(KgError::PartitionMismatch("partition misses a node".into()).into());
            };
            if cu == cv || topo.linked(u, v) || exclude.contains(&(u, v)) {
                continue;
            }
            let prob = b.p(cu, cv);
            rows.push((prob, bernoulli_entropy(prob)?, u, v));
        }
    }
    let mut by_p = rows.clone();
    by_p.sort_by(|x, y| desc(x.0, y.0).then((x.2, x.3).cmp(&(y.2, y.3))));
    let mut by_h = rows;
    by_h.sort_by(|x, y| desc(x.1, y.1).then((x.2, x.3).cmp(&(y.2, y.3))));
    let mk = |(prob, h, u, v): (f64, f64, NodeId, NodeId), entropy: bool| {
        if entropy {
            SearchChain::new(ChainKind::ExploreSbm, u, v, None, HYPOTHESIZED, h, ScoreBasis::SbmEntropy)
        } else {
            SearchChain::new(ChainKind::ExploreSbm, u, v, None, HYPOTHESIZED, prob, ScoreBasis::SbmProbability)
        }
    };
    Ok((by_p.into_iter().map(|r| mk(r, false)).collect(), by_h.into_iter().map(|r| mk(r, true)).collect()))
}

/// Probability half (gets the odd slot) then uncertainty half over the remainder.
fn type2_pick(by_p: &[SearchChain], by_h: &[SearchChain], m: usize) -> Vec<SearchChain> {
    let mut out: Vec<SearchChain> = by_p.iter().take(m.div_ceil(2)).cloned().collect();
    let taken: BTreeSet<_> = out.iter().map(SearchChain::pair).collect();
    out.extend(by_h.iter().filter(|c| !taken.contains(&c.pair())).take(m / 2).cloned());
    out
}

pub fn explore_block_model(kg: &KnowledgeGraph, p: &CommunityPartition, b: &SbmBlockMatrix, m: usize) -> Result<Vec<SearchChain>, GapError> {
    let (by_p, by_h) = type2_orders(&Topology::new(kg), p, b, &BTreeSet::new())?;
    Ok(type2_pick(&by_p, &by_h, m))
}

/// Per-community roles used by structural-hole pairing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommunityRoles {
    pub bridges: Vec<NodeId>,
    pub hubs: Vec<NodeId>,
    pub rep: Option<NodeId>,
}

pub fn community_roles(topo: &Topology, p: &CommunityPartition) -> Result<Vec<CommunityRoles>, GapError> {
    let mut out = Vec::new();
    for members in p.communities() {
        let mut stats = Vec::new();
        for &v in &members {
            let cross = topo.cross_neighbors(p, v)?;
            stats.push((v, cross, topo.bridging_score(p, v)?, topo.degree_in_community(p, v)?));
        }
        let mut cand: Vec<_> = stats.iter().filter(|s| s.1 > 0).collect();
        cand.sort_by(|a, b| desc(a.2, b.2).then(a.0.cmp(&b.0)));
        let bridges: Vec<NodeId> = cand.iter().take(3).map(|s| s.0).collect();
        let mut rest: Vec<_> = stats.iter().filter(|s| !bridges.contains(&s.0)).collect();
        rest.sort_by(|a, b| b.3.cmp(&a.3).then(a.0.cmp(&b.0)));
        let hubs = rest.iter().take(2).map(|s| s.0).collect();
        let mut all: Vec<_> = stats.iter().collect();
        all.sort_by(|a, b| b.3.cmp(&a.3).then(a.0.cmp(&b.0)));
        out.push(CommunityRoles { bridges, hubs, rep: all.first().map(|s| s.0) });
    }
    Ok(out)
}

fn type3_ranked(topo: &Topology, p: &CommunityPartition) -> Result<Vec<SearchChain>, GapError> {
    let roles = community_roles(topo, p)?;
    let mut rows = Vec::new();
    for (c1, r1) in roles.iter().enumerate() {
        for (c2, r2) in roles.iter().enumerate() {
            if c1 == c2 {
                continue;
            }
            let Some(rep) = r2.rep else { continue };
            for &s in r1.bridges.iter().chain(&r1.hubs) {
                if !topo.linked(s, rep) {
                    rows.push((topo.bridging_score(p, s)?, s, rep));
                }
            }
        }
    }
    rows.sort_by(|a, b| desc(a.0, b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut seen = BTreeSet::new();
    Ok(rows
        .into_iter()
        .filter(|r| seen.insert(unordered(r.1, r.2)))
        .map(|(s, a, b)| SearchChain::new(ChainKind::ExploreHole, a, b, None, HYPOTHESIZED, s, ScoreBasis::StructuralHole))
        .collect())
}

/// Structural-hole chains: bridges and hubs of one community paired with the
/// representative of another, ranked by the source's bridging score.
pub fn explore_structural_holes(kg: &KnowledgeGraph, p: &CommunityPartition) -> Result<Vec<SearchChain>, GapError> {
    type3_ranked(&Topology::new(kg), p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub budget: usize,
    pub enrich_threshold: usize,
    pub sbm_alpha: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self { budget: 20, enrich_threshold: DEFAULT_ENRICH_THRESHOLD, sbm_alpha: DEFAULT_SBM_ALPHA }
    }
}

/// Take up to `n` chains from `from`, skipping pairs already emitted.
fn take_fresh(from: &[SearchChain], pos: &mut usize, n: usize, emitted: &mut BTreeSet<(NodeId, NodeId)>, out: &mut Vec<SearchChain>) {
    let mut taken = 0;
    while taken < n && *pos < from.len() {
        let c = &from[*pos];
        *pos += 1;
        if emitted.insert(c.pair()) {
            out.push(c.clone());
            taken += 1;
        }
    }
}

/// Enrich, similarity, structural-hole and block-model selections at ⌊N/4⌋
/// each. The leftover is filled enrich, similarity, block-model, structural-hole,
/// which is also the emission order.
pub fn build_search_chains(kg: &KnowledgeGraph, p: &CommunityPartition, cfg: &ChainConfig) -> Result<Vec<SearchChain>, GapError> {
    let alloc = allocate_quotas(cfg.budget)?;
    if !(cfg.sbm_alpha > 0.0 && cfg.sbm_alpha.is_finite()) {
        return Err(GapError::BadAlpha(cfg.sbm_alpha));
    }
    if kg.is_empty() {
        return Ok(Vec::new());
    }
    let topo = Topology::new(kg);
    let q = alloc.per_explore_type;

    let enrich = enrich_ranked(kg, &topo, p, cfg.enrich_threshold)?;
    let t1 = type1_ranked(kg, &topo)?;
    let t3 = type3_ranked(&topo, p)?;

    let mut emitted = BTreeSet::new();
    let (mut pe, mut p1, mut p3) = (0, 0, 0);
    let mut sel_e: Vec<SearchChain> = enrich.iter().take(alloc.enrich).cloned().collect();
    pe = pe.max(sel_e.len());
    let mut sel_1 = Vec::new();
    take_fresh(&t1, &mut p1, q, &mut emitted, &mut sel_1);
    let mut sel_3 = Vec::new();
    take_fresh(&t3, &mut p3, q, &mut emitted, &mut sel_3);

    let b = sbm_with(&topo, p, cfg.sbm_alpha)?;
    let (by_p, by_h) = type2_orders(&topo, p, &b, &emitted)?;
    let mut sel_2 = type2_pick(&by_p, &by_h, q);
    emitted.extend(sel_2.iter().map(SearchChain::pair));

    let mut left = cfg.budget - (sel_e.len() + sel_1.len() + sel_2.len() + sel_3.len());
    let extra = (enrich.len() - pe).min(left);
    sel_e.extend(enrich[pe..pe + extra].iter().cloned());
    left -= extra;
    let before = sel_1.len();
    take_fresh(&t1, &mut p1, left, &mut emitted, &mut sel_1);
    left -= sel_1.len() - before;
    let mut p2 = 0;
    let before = sel_2.len();
    take_fresh(&by_p, &mut p2, left, &mut emitted, &mut sel_2);
    left -= sel_2.len() - before;
    take_fresh(&t3, &mut p3, left, &mut emitted, &mut sel_3);

    let mut out: Vec<SearchChain> = sel_e.into_iter().chain(sel_1).chain(sel_2).chain(sel_3).collect();
    for (i, c) in out.iter_mut().enumerate() {
        c.chain_id = format!("chain_{}", i + 1);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evidence::EvidenceId;
    use crate::kg::detect_communities;
    use crate::providers::HashEmbedder;

    fn part(pairs: &[(u32, u32)]) -> CommunityPartition {
        CommunityPartition { assignment: pairs.iter().map(|(n, c)| (NodeId(*n), *c)).collect(), seed: 0 }
    }

    #[test]
    fn quotas() {
        assert_eq!(allocate_quotas(10).unwrap(), QuotaAllocation { enrich: 2, per_explore_type: 2, leftover: 2 });
        assert_eq!(allocate_quotas(4).unwrap(), QuotaAllocation { enrich: 1, per_explore_type: 1, leftover: 0 });
        assert_eq!(allocate_quotas(7).unwrap(), QuotaAllocation { enrich: 1, per_explore_type: 1, leftover: 3 });
        assert_eq!(allocate_quotas(0), Err(GapError::ZeroBudget));
    }

    #[test]
    fn importance_cases() {
        let mut kg = KnowledgeGraph::new();
        let a = kg.add_node("a", true);
        let b = kg.add_node("b", true);
        let c = kg.add_node("c", false);
        let d = kg.add_node("d", false);
        assert_eq!(node_importance(&kg, a, b).unwrap(), 1.0);
        assert_eq!(node_importance(&kg, a, c).unwrap(), 0.5);
        assert_eq!(node_importance(&kg, c, d).unwrap(), 0.0);
        assert!(node_importance(&kg, a, NodeId(9)).is_err());
    }

    #[test]
    fn entropy_values() {
        assert!((bernoulli_entropy(0.5).unwrap() - 1.0).abs() < 1e-12);
        assert!((bernoulli_entropy(0.25).unwrap() - 0.811_278_124_459_132_8).abs() < 1e-12);
        for p in [0.01, 0.2, 0.37, 0.9] {
            assert!((bernoulli_entropy(p).unwrap() - bernoulli_entropy(1.0 - p).unwrap()).abs() < 1e-12);
        }
        assert_eq!(bernoulli_entropy(0.0), Err(GapError::Domain(0.0)));
        assert_eq!(bernoulli_entropy(1.0), Err(GapError::Domain(1.0)));
    }

    #[test]
    fn sbm_examples() {
        // Sizes 3 and 4, two cross edges, one internal edge in the first block.
        let mut kg = KnowledgeGraph::new();
        let ids: Vec<NodeId> = (0..7).map(|k| kg.add_node(&format!("v{k}"), false)).collect();
        kg.add_edge(ids[0], ids[1], "r", []).unwrap();
        kg.add_edge(ids[0], ids[3], "r", []).unwrap();
        kg.add_edge(ids[4], ids[2], "r", []).unwrap();
        let p = part(&[(1, 0), (2, 0), (3, 0), (4, 1), (5, 1), (6, 1), (7, 1)]);
        let b = sbm_block_matrix(&kg, &p, 0.1).unwrap();
        assert!((b.p(0, 1) - 2.1 / 12.2).abs() < 1e-12);
        assert_eq!(b.p(0, 1), b.p(1, 0));
        assert!((b.p(0, 0) - 0.34375).abs() < 1e-12);
        assert!((b.p(1, 1) - 0.1 / 6.2).abs() < 1e-12);

        let mut kg = KnowledgeGraph::new();
        for k in 0..4 {
            kg.add_node(&format!("v{k}"), false);
        }
        let p = part(&[(1, 0), (2, 0), (3, 1), (4, 1)]);
        let b = sbm_block_matrix(&kg, &p, 0.1).unwrap();
        assert!((b.p(0, 1) - 0.1 / 4.2).abs() < 1e-12);
        assert!(sbm_block_matrix(&kg, &p, 0.0).is_err());
    }

    fn scored_graph() -> (KnowledgeGraph, CommunityPartition) {
        let mut kg = KnowledgeGraph::new();
        let a = kg.add_node("a", true);
        let b = kg.add_node("b", true);
        let c = kg.add_node("c", false);
        let d = kg.add_node("d", false);
        kg.add_edge(a, b, "r", []).unwrap();
        kg.add_edge(a, c, "r", [EvidenceId(1)]).unwrap();
        kg.add_edge(c, d, "r", [EvidenceId(1), EvidenceId(2), EvidenceId(3)]).unwrap();
        (kg, part(&[(1, 0), (2, 0), (3, 0), (4, 0)]))
    }

    #[test]
    fn enrichment_examples() {
        let (kg, p) = scored_graph();
        assert!((enrichment_score(&kg, &p, EdgeId(1)).unwrap() - 2.0).abs() < 1e-12);
        assert!((enrichment_score(&kg, &p, EdgeId(3)).unwrap() - 0.25).abs() < 1e-12);
        assert!(enrichment_score(&kg, &p, EdgeId(9)).is_err());
    }

    #[test]
    fn enrichment_with_cross_community_exposure() {
        // u core, v concept; bridging(u) = 0.4, bridging(v) = 0.4; one evidence id.
        let mut kg = KnowledgeGraph::new();
        let u = kg.add_node("u", true);
        let v = kg.add_node("v", false);
        let e = kg.add_edge(u, v, "r", [EvidenceId(1)]).unwrap();
        let mut labels = vec![(1, 0), (2, 0)];
        for (side, home) in [(u, 0u32), (v, 0u32)] {
            for k in 0..4 {
                let n = kg.add_node(&format!("{side}-{k}"), false);
                kg.add_edge(side, n, "r", []).unwrap();
                labels.push((n.0, if k < 2 { 1 - home } else { home }));
            }
        }
        let p = part(&labels);
        let s = enrichment_score(&kg, &p, e).unwrap();
        assert!((s - 0.95).abs() < 1e-12, "{s}");
    }

    #[test]
    fn zero_evidence_edges_rank_first() {
        let (mut kg, p) = scored_graph();
        // e4 has no evidence and a low score; e2 has one id and a higher score.
        let c = NodeId(3);
        let d = NodeId(4);
        kg.add_edge(d, c, "r2", []).unwrap();
        let pool = enrich_pool(&kg, 1);
        assert_eq!(pool, [EdgeId(1), EdgeId(2), EdgeId(4)].into_iter().collect());
        let ranked: Vec<Option<EdgeId>> = rank_enrich(&kg, &p, 1, 10).unwrap().iter().map(|c| c.edge).collect();
        assert_eq!(ranked, vec![Some(EdgeId(1)), Some(EdgeId(4)), Some(EdgeId(2))]);
        assert!(rank_enrich(&kg, &p, 1, 0).unwrap().is_empty());
        assert_eq!(enrich_pool(&kg, 0), [EdgeId(1), EdgeId(4)].into_iter().collect());
        assert_eq!(enrich_pool(&kg, 10).len(), kg.edge_count());
    }

    #[test]
    fn type1_candidates() {
        let mut kg = KnowledgeGraph::new();
        let duan = kg.add_node("Duan Yongping", true);
        let cost = kg.add_node("opportunity cost", false);
        let other = kg.add_node("circle of competence", false);
        kg.add_edge(duan, other, "practices", []).unwrap();
        kg.ensure_embeddings(&HashEmbedder::default()).unwrap();
        let v = explore_similar(&kg, 5).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!((v[0].source, v[0].target), (duan, cost));

        let mut none = KnowledgeGraph::new();
        none.add_node("x", false);
        none.ensure_embeddings(&HashEmbedder::default()).unwrap();
        assert!(explore_similar(&none, 5).unwrap().is_empty());

        let mut bare = KnowledgeGraph::new();
        bare.add_node("x", true);
        bare.add_node("y", false);
        assert!(matches!(explore_similar(&bare, 5), Err(GapError::Kg(KgError::MissingEmbedding(_)))));
    }

    #[test]
    fn type2_halves() {
        // Three communities, no cross edges: plenty of candidates.
        let mut kg = KnowledgeGraph::new();
        let ids: Vec<NodeId> = (0..9).map(|k| kg.add_node(&format!("v{k}"), false)).collect();
        for c in 0..3 {
            kg.add_edge(ids[3 * c], ids[3 * c + 1], "r", []).unwrap();
            kg.add_edge(ids[3 * c + 1], ids[3 * c + 2], "r", []).unwrap();
        }
        kg.add_edge(ids[0], ids[3], "r", []).unwrap();
        let p = detect_communities(&kg, 0);
        let b = sbm_block_matrix(&kg, &p, 0.1).unwrap();
        let v = explore_block_model(&kg, &p, &b, 5).unwrap();
        let probs = v.iter().filter(|c| c.score_basis == ScoreBasis::SbmProbability).count();
        let ents = v.iter().filter(|c| c.score_basis == ScoreBasis::SbmEntropy).count();
        assert_eq!((probs, ents), (3, 2));
        let pairs: BTreeSet<_> = v.iter().map(SearchChain::pair).collect();
        assert_eq!(pairs.len(), 5);

        let mut one = KnowledgeGraph::new();
        let a = one.add_node("a", false);
        let c = one.add_node("c", false);
        one.add_edge(a, c, "r", []).unwrap();
        let p1 = detect_communities(&one, 0);
        let b1 = sbm_block_matrix(&one, &p1, 0.1).unwrap();
        assert!(explore_block_model(&one, &p1, &b1, 4).unwrap().is_empty());
    }

    #[test]
    fn type3_existing_edge_excluded() {
        // Two communities; the only bridge of c0 already links c1's rep.
        let mut kg = KnowledgeGraph::new();
        let ids: Vec<NodeId> = (0..4).map(|k| kg.add_node(&format!("v{k}"), false)).collect();
        kg.add_edge(ids[0], ids[1], "r", []).unwrap();
        kg.add_edge(ids[2], ids[3], "r", []).unwrap();
        kg.add_edge(ids[0], ids[2], "r", []).unwrap();
        let p = part(&[(1, 0), (2, 0), (3, 1), (4, 1)]);
        let roles = community_roles(&Topology::new(&kg), &p).unwrap();
        assert_eq!(roles[0].bridges, vec![ids[0]]);
        assert_eq!(roles[0].hubs, vec![ids[1]]);
        assert_eq!(roles[1].rep, Some(ids[2]));
        let chains = explore_structural_holes(&kg, &p).unwrap();
        assert!(chains.iter().all(|c| c.pair() != (ids[0], ids[2])));
        assert!(chains.iter().any(|c| c.pair() == (ids[1], ids[2])));
    }

    #[test]
    fn chain_ids_and_empty_graph() {
        let p = CommunityPartition { assignment: Default::default(), seed: 0 };
        assert!(build_search_chains(&KnowledgeGraph::new(), &p, &ChainConfig::default()).unwrap().is_empty());
        let (mut kg, _) = scored_graph();
        kg.ensure_embeddings(&HashEmbedder::default()).unwrap();
        let p = detect_communities(&kg, 0);
        let v = build_search_chains(&kg, &p, &ChainConfig { budget: 8, ..Default::default() }).unwrap();
        assert!(v.len() <= 8);
        for (i, c) in v.iter().enumerate() {
            assert_eq!(c.chain_id, format!("chain_{}", i + 1));
        }
    }
}
