//! Evidence-grounded knowledge graph: extraction, canonicalization, clustering,
//! communities and the topological statistics used for gap discovery.

mod leiden;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evidence::EvidenceId;
use crate::providers::{cosine, Embedder, ProviderError};

pub use leiden::leiden_labels;

macro_rules! prefixed_id {
    ($name:ident, $prefix:literal) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                let digits = s.strip_prefix($prefix).ok_or_else(|| s.to_string())?;
                if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(s.to_string());
                }
                digits.parse::<u32>().map($name).map_err(|_| s.to_string())
            }
        }

        impl Serialize for $name {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse()
                    .map_err(|bad| serde::de::Error::custom(format!(concat!("bad ", $prefix, "-id {:?}"), bad)))
            }
        }
    };
}

prefixed_id!(NodeId, "n");
prefixed_id!(EdgeId, "e");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KgError {
    #[error("node {0} not found")]
    NodeNotFound(NodeId),
    #[error("edge {0} not found")]
    EdgeNotFound(EdgeId),
    #[error("{0} is already used by a different node or edge")]
    DuplicateId(String),
    #[error("non-sequential id {found}: expected {expected}")]
    NonSequentialId { expected: String, found: String },
    #[error("edge {edge} references missing node {node}")]
    DanglingNode { edge: String, node: NodeId },
    #[error("evidence label {label} references missing edge {edge}")]
    DanglingEdge { label: String, edge: EdgeId },
    #[error("edge {0} is a self-loop")]
    SelfLoop(String),
    #[error("{0} has an empty name or relation")]
    EmptyName(String),
    #[error("evidence label {0} has no evidence id")]
    UnknownEvidenceLabel(String),
    #[error("merge cluster {index} has {size} nodes; allowed 2..=5")]
    ClusterSize { index: usize, size: usize },
    #[error("merge cluster {index} has an empty representative name")]
    EmptyRepresentative { index: usize },
    #[error("node {0} is a core entity and cannot be merged")]
    CoreEntityProtected(NodeId),
    #[error("node {0} appears in more than one merge cluster")]
    OverlappingClusters(NodeId),
    #[error("node {0} has no embedding")]
    MissingEmbedding(NodeId),
    #[error("partition does not cover the graph: {0}")]
    PartitionMismatch(String),
    #[error("embedding provider failed: {0}")]
    Embedding(#[from] ProviderError),
    #[error("corrupt graph document: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeNode {
    pub id: NodeId,
    pub name: String,
    pub is_core_entity: bool,
    pub cluster_id: Option<u32>,
    pub community_id: Option<u32>,
    pub embedding: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeEdge {
    pub id: EdgeId,
    pub source: NodeId,
    pub target: NodeId,
    pub relation: String,
    pub evidence_ids: BTreeSet<EvidenceId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewNode {
    pub id: NodeId,
    pub node_name: String,
    pub is_core_entity: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewEdge {
    pub id: EdgeId,
    pub source_id: NodeId,
    pub target_id: NodeId,
    pub relation_name: String,
}

/// One extraction payload, shaped like the extraction prompt's JSON contract.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub new_nodes: Vec<NewNode>,
    pub new_edges: Vec<NewEdge>,
    pub evidences_map: BTreeMap<String, Vec<EdgeId>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExtractionOutcome {
    pub nodes_added: Vec<NodeId>,
    pub edges_added: Vec<EdgeId>,
    /// Result edge id -> existing edge it was folded into.
    pub folded: Vec<(EdgeId, EdgeId)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeCluster {
    pub representative: String,
    pub sources: Vec<NodeId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MergeReport {
    /// Surviving node and the nodes folded into it.
    pub merged: Vec<(NodeId, Vec<NodeId>)>,
    /// Edges that became self-loops and were dropped, with the evidence they carried.
    pub dropped_self_loops: Vec<(EdgeId, BTreeSet<EvidenceId>)>,
    /// Parallel edge folded into the surviving edge.
    pub folded_edges: Vec<(EdgeId, EdgeId)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommunityPartition {
    pub assignment: BTreeMap<NodeId, u32>,
    pub seed: u64,
}

impl CommunityPartition {
    pub fn community_of(&self, v: NodeId) -> Option<u32> {
        self.assignment.get(&v).copied()
    }

    pub fn num_communities(&self) -> usize {
        self.assignment.values().copied().collect::<BTreeSet<_>>().len()
    }

    /// Members of each community in ascending node order.
    pub fn communities(&self) -> Vec<Vec<NodeId>> {
        let k = self.num_communities();
        let mut out = vec![Vec::new(); k];
        for (n, c) in &self.assignment {
            if let Some(slot) = out.get_mut(*c as usize) {
                slot.push(*n);
            }
        }
        out
    }

    /// Exact cover of the graph's nodes with labels 0..k-1, none empty.
    pub fn validate(&self, kg: &KnowledgeGraph) -> Result<(), KgError> {
        if self.assignment.len() != kg.nodes.len() || !kg.nodes.keys().all(|n| self.assignment.contains_key(n)) {
            return Err(KgError::PartitionMismatch("node sets differ".into()));
        }
        let labels: BTreeSet<u32> = self.assignment.values().copied().collect();
        if labels.iter().enumerate().any(|(i, l)| *l != i as u32) {
            return Err(KgError::PartitionMismatch("labels are not contiguous from 0".into()));
        }
        Ok(())
    }

    /// Rebuild from the community labels stored on the nodes.
    pub fn from_annotations(kg: &KnowledgeGraph, seed: u64) -> Option<Self> {
        let mut assignment = BTreeMap::new();
        for n in kg.nodes.values() {
            assignment.insert(n.id, n.community_id?);
        }
        Some(Self { assignment, seed })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnowledgeGraph {
    nodes: BTreeMap<NodeId, KnowledgeNode>,
    edges: BTreeMap<EdgeId, KnowledgeEdge>,
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &KnowledgeNode> {
        self.nodes.values()
    }

    pub fn edges(&self) -> impl Iterator<Item = &KnowledgeEdge> {
        self.edges.values()
    }

    pub fn node(&self, id: NodeId) -> Result<&KnowledgeNode, KgError> {
        self.nodes.get(&id).ok_or(KgError::NodeNotFound(id))
    }

    pub fn edge(&self, id: EdgeId) -> Result<&KnowledgeEdge, KgError> {
        self.edges.get(&id).ok_or(KgError::EdgeNotFound(id))
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn max_node_id(&self) -> u32 {
        self.nodes.keys().next_back().map_or(0, |n| n.0)
    }

    pub fn max_edge_id(&self) -> u32 {
        self.edges.keys().next_back().map_or(0, |e| e.0)
    }

    pub fn find_node(&self, name: &str) -> Option<NodeId> {
        self.nodes.values().find(|n| n.name == name).map(|n| n.id)
    }

    pub fn find_edge(&self, source: NodeId, target: NodeId, relation: &str) -> Option<EdgeId> {
        self.edges
            .values()
            .find(|e| e.source == source && e.target == target && e.relation == relation)
            .map(|e| e.id)
    }

    /// Union of all evidence ids referenced by edges.
    pub fn evidence_ids(&self) -> BTreeSet<EvidenceId> {
        self.edges.values().flat_map(|e| e.evidence_ids.iter().copied()).collect()
    }

    /// Builder used by tests and the simulator: next free id, no validation beyond names.
    pub fn add_node(&mut self, name: &str, is_core_entity: bool) -> NodeId {
        let id = NodeId(self.max_node_id() + 1);
        self.nodes.insert(
            id,
            KnowledgeNode {
                id,
                name: name.to_string(),
                is_core_entity,
                cluster_id: None,
                community_id: None,
                embedding: None,
            },
        );
        id
    }

    /// Adds an edge or unions evidence into the existing identical triple.
    pub fn add_edge(
        &mut self,
        source: NodeId,
        target: NodeId,
        relation: &str,
        evidence: impl IntoIterator<Item = EvidenceId>,
    ) -> Result<EdgeId, KgError> {
        for n in [source, target] {
            if !self.nodes.contains_key(&n) {
                return Err(KgError::NodeNotFound(n));
            }
        }
        if source == target {
            return Err(KgError::SelfLoop(format!("{source}->{target}")));
        }
        let id = match self.find_edge(source, target, relation) {
            Some(id) => id,
            None => {
                let id = EdgeId(self.max_edge_id() + 1);
                self.edges.insert(
                    id,
                    KnowledgeEdge { id, source, target, relation: relation.to_string(), evidence_ids: BTreeSet::new() },
                );
                id
            }
        };
        self.edges.get_mut(&id).unwrap().evidence_ids.extend(evidence);
        Ok(id)
    }

    pub fn set_embedding(&mut self, id: NodeId, v: Vec<f64>) -> Result<(), KgError> {
        self.nodes.get_mut(&id).ok_or(KgError::NodeNotFound(id))?.embedding = Some(v);
        Ok(())
    }

    /// Embed every node lacking a vector, in node order.
    pub fn ensure_embeddings(&mut self, embedder: &dyn Embedder) -> Result<(), KgError> {
        let missing: Vec<(NodeId, String)> = self
            .nodes
            .values()
            .filter(|n| n.embedding.is_none())
            .map(|n| (n.id, n.name.clone()))
            .collect();
        if missing.is_empty() {
            return Ok(());
        }
        let texts: Vec<String> = missing.iter().map(|m| m.1.clone()).collect();
        let vecs = embedder.embed(&texts)?;
        for ((id, _), v) in missing.into_iter().zip(vecs) {
            self.nodes.get_mut(&id).unwrap().embedding = Some(v);
        }
        Ok(())
    }

    /// Validate and apply an extraction atomically: on error the graph is untouched.
    pub fn apply_extraction(
        &mut self,
        result: &ExtractionResult,
        en_to_evidence: &BTreeMap<String, EvidenceId>,
    ) -> Result<ExtractionOutcome, KgError> {
        let mut g = self.clone();
        let mut out = ExtractionOutcome::default();

        let mut next_node = g.max_node_id() + 1;
        for nn in &result.new_nodes {
            if nn.node_name.trim().is_empty() {
                return Err(KgError::EmptyName(nn.id.to_string()));
            }
            if let Some(existing) = g.nodes.get(&nn.id) {
                if existing.name == nn.node_name && existing.is_core_entity == nn.is_core_entity {
                    continue;
                }
                return Err(KgError::DuplicateId(nn.id.to_string()));
            }
            if nn.id.0 != next_node {
                return Err(KgError::NonSequentialId { expected: NodeId(next_node).to_string(), found: nn.id.to_string() });
            }
            next_node += 1;
            g.add_node(&nn.node_name, nn.is_core_entity);
            out.nodes_added.push(nn.id);
        }

        // Result edge id -> edge id in the graph.
        let mut alias: BTreeMap<EdgeId, EdgeId> = BTreeMap::new();
        let mut next_edge = g.max_edge_id() + 1;
        for ne in &result.new_edges {
            let label = ne.id.to_string();
            for n in [ne.source_id, ne.target_id] {
                if !g.nodes.contains_key(&n) {
                    return Err(KgError::DanglingNode { edge: label.clone(), node: n });
                }
            }
            if ne.source_id == ne.target_id {
                return Err(KgError::SelfLoop(label));
            }
            if ne.relation_name.trim().is_empty() {
                return Err(KgError::EmptyName(label));
            }
            if let Some(existing) = g.edges.get(&ne.id) {
                if existing.source == ne.source_id
                    && existing.target == ne.target_id
                    && existing.relation == ne.relation_name
                {
                    alias.insert(ne.id, ne.id);
                    continue;
                }
                return Err(KgError::DuplicateId(label));
            }
            if ne.id.0 != next_edge {
                return Err(KgError::NonSequentialId { expected: EdgeId(next_edge).to_string(), found: label });
            }
            next_edge += 1;
            match g.find_edge(ne.source_id, ne.target_id, &ne.relation_name) {
                Some(prior) => {
                    alias.insert(ne.id, prior);
                    out.folded.push((ne.id, prior));
                }
                None => {
                    g.edges.insert(
                        ne.id,
                        KnowledgeEdge {
                            id: ne.id,
                            source: ne.source_id,
                            target: ne.target_id,
                            relation: ne.relation_name.clone(),
                            evidence_ids: BTreeSet::new(),
                        },
                    );
                    alias.insert(ne.id, ne.id);
                    out.edges_added.push(ne.id);
                }
            }
        }

        for (label, edge_ids) in &result.evidences_map {
            let ev = *en_to_evidence.get(label).ok_or_else(|| KgError::UnknownEvidenceLabel(label.clone()))?;
            for e in edge_ids {
                let target = match alias.get(e) {
                    Some(t) => *t,
                    None if g.edges.contains_key(e) => *e,
                    None => return Err(KgError::DanglingEdge { label: label.clone(), edge: *e }),
                };
                g.edges.get_mut(&target).unwrap().evidence_ids.insert(ev);
            }
        }

        *self = g;
        Ok(out)
    }

    /// Collapse clusters of concept nodes. The smallest id in a cluster survives
    /// under the representative name; parallel edges fold into the smallest edge
    /// id with evidence union; self-loops are dropped and reported.
    pub fn merge_nodes(&mut self, clusters: &[MergeCluster]) -> Result<MergeReport, KgError> {
        let mut seen: BTreeSet<NodeId> = BTreeSet::new();
        for (index, c) in clusters.iter().enumerate() {
            if !(2..=5).contains(&c.sources.len()) {
                return Err(KgError::ClusterSize { index, size: c.sources.len() });
            }
            if c.representative.trim().is_empty() {
                return Err(KgError::EmptyRepresentative { index });
            }
            for n in &c.sources {
                let node = self.node(*n)?;
                if node.is_core_entity {
                    return Err(KgError::CoreEntityProtected(*n));
                }
                if !seen.insert(*n) {
                    return Err(KgError::OverlappingClusters(*n));
                }
            }
        }
        let mut report = MergeReport::default();
        if clusters.is_empty() {
            return Ok(report);
        }

        let mut redirect: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        for c in clusters {
            let canonical = *c.sources.iter().min().unwrap();
            let mut absorbed: Vec<NodeId> = c.sources.iter().copied().filter(|n| *n != canonical).collect();
            absorbed.sort();
            for n in &absorbed {
                redirect.insert(*n, canonical);
                self.nodes.remove(n);
            }
            let node = self.nodes.get_mut(&canonical).unwrap();
            node.name = c.representative.trim().to_string();
            node.embedding = None;
            node.cluster_id = None;
            node.community_id = None;
            report.merged.push((canonical, absorbed));
        }
        report.merged.sort();

        let mut kept: BTreeMap<(NodeId, NodeId, String), EdgeId> = BTreeMap::new();
        let ids: Vec<EdgeId> = self.edges.keys().copied().collect();
        for id in ids {
            let mut e = self.edges.remove(&id).unwrap();
            e.source = *redirect.get(&e.source).unwrap_or(&e.source);
            e.target = *redirect.get(&e.target).unwrap_or(&e.target);
            if e.source == e.target {
                report.dropped_self_loops.push((e.id, e.evidence_ids));
                continue;
            }
            let key = (e.source, e.target, e.relation.clone());
            match kept.get(&key) {
                // Edges are visited in id order, so the survivor has the smaller id.
                Some(survivor) => {
                    let s = self.edges.get_mut(survivor).unwrap();
                    s.evidence_ids.extend(e.evidence_ids);
                    report.folded_edges.push((e.id, *survivor));
                }
                None => {
                    kept.insert(key, e.id);
                    self.edges.insert(e.id, e);
                }
            }
        }
        Ok(report)
    }

    pub fn apply_partition(&mut self, p: &CommunityPartition) -> Result<(), KgError> {
        p.validate(self)?;
        for n in self.nodes.values_mut() {
            n.community_id = Some(p.assignment[&n.id]);
        }
        Ok(())
    }

    pub fn apply_clusters(&mut self, clusters: &BTreeMap<NodeId, u32>) {
        for n in self.nodes.values_mut() {
            n.cluster_id = clusters.get(&n.id).copied();
        }
    }

    /// Node/edge listing in the merge prompt's input shape.
    pub fn to_prompt_json(&self) -> String {
        let nodes: Vec<serde_json::Value> = self
            .nodes
            .values()
            .map(|n| serde_json::json!({"node_id": n.id.to_string(), "knowledge": n.name, "is_core_entity": n.is_core_entity}))
            .collect();
        let edges: Vec<serde_json::Value> = self
            .edges
            .values()
            .map(|e| serde_json::json!({"edge_id": e.id.to_string(), "representation": self.representation(e)}))
            .collect();
        serde_json::to_string_pretty(&serde_json::json!({"knowledge_nodes": nodes, "knowledge_edges": edges}))
            .expect("prompt json")
    }

    /// "Source - relation -> Target"
    pub fn representation(&self, e: &KnowledgeEdge) -> String {
        let name = |n: NodeId| self.nodes.get(&n).map_or_else(|| n.to_string(), |x| x.name.clone());
        format!("{} - {} -> {}", name(e.source), e.relation, name(e.target))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("kg serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, KgError> {
        serde_json::from_str(text).map_err(|e| KgError::Corrupt(e.to_string()))
    }
}

#[derive(Serialize, Deserialize)]
struct NodeDoc {
    node_id: NodeId,
    knowledge: String,
    is_core_entity: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cluster_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    community_id: Option<u32>,
}

#[derive(Serialize, Deserialize)]
struct EdgeDoc {
    edge_id: EdgeId,
    representation: String,
    source_id: NodeId,
    target_id: NodeId,
    relation: String,
    evidence_ids: Vec<EvidenceId>,
}

#[derive(Serialize, Deserialize)]
struct GraphDoc {
    knowledge_nodes: Vec<NodeDoc>,
    knowledge_edges: Vec<EdgeDoc>,
}

impl Serialize for KnowledgeGraph {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        GraphDoc {
            knowledge_nodes: self
                .nodes
                .values()
                .map(|n| NodeDoc {
                    node_id: n.id,
                    knowledge: n.name.clone(),
                    is_core_entity: n.is_core_entity,
                    cluster_id: n.cluster_id,
                    community_id: n.community_id,
                })
                .collect(),
            knowledge_edges: self
                .edges
                .values()
                .map(|e| EdgeDoc {
                    edge_id: e.id,
                    representation: self.representation(e),
                    source_id: e.source,
                    target_id: e.target,
                    relation: e.relation.clone(),
                    evidence_ids: e.evidence_ids.iter().copied().collect(),
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for KnowledgeGraph {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let doc = GraphDoc::deserialize(d)?;
        let mut g = KnowledgeGraph::new();
        for n in doc.knowledge_nodes {
            if n.knowledge.trim().is_empty() {
                return Err(D::Error::custom(format!("node {} has an empty name", n.node_id)));
            }
            let node = KnowledgeNode {
                id: n.node_id,
                name: n.knowledge,
                is_core_entity: n.is_core_entity,
                cluster_id: n.cluster_id,
                community_id: n.community_id,
                embedding: None,
            };
            if g.nodes.insert(n.node_id, node).is_some() {
                return Err(D::Error::custom(format!("duplicate node {}", n.node_id)));
            }
        }
        let mut triples = BTreeSet::new();
        for e in doc.knowledge_edges {
            if !g.nodes.contains_key(&e.source_id) || !g.nodes.contains_key(&e.target_id) {
                return Err(D::Error::custom(format!("edge {} has a missing endpoint", e.edge_id)));
            }
            if e.source_id == e.target_id {
                return Err(D::Error::custom(format!("edge {} is a self-loop", e.edge_id)));
            }
            if !triples.insert((e.source_id, e.target_id, e.relation.clone())) {
                return Err(D::Error::custom(format!("edge {} duplicates a triple", e.edge_id)));
            }
            let edge = KnowledgeEdge {
                id: e.edge_id,
                source: e.source_id,
                target: e.target_id,
                relation: e.relation,
                evidence_ids: e.evidence_ids.into_iter().collect(),
            };
            if g.edges.insert(e.edge_id, edge).is_some() {
                return Err(D::Error::custom(format!("duplicate edge {}", e.edge_id)));
            }
        }
        Ok(g)
    }
}

/// Undirected simple projection of the directed multigraph.
#[derive(Debug, Clone)]
pub struct Topology {
    pub ids: Vec<NodeId>,
    index: BTreeMap<NodeId, usize>,
    pub adj: Vec<BTreeSet<usize>>,
}

impl Topology {
    pub fn new(kg: &KnowledgeGraph) -> Self {
        let ids: Vec<NodeId> = kg.nodes.keys().copied().collect();
        let index: BTreeMap<NodeId, usize> = ids.iter().enumerate().map(|(i, n)| (*n, i)).collect();
        let mut adj = vec![BTreeSet::new(); ids.len()];
        for e in kg.edges.values() {
            let (a, b) = (index[&e.source], index[&e.target]);
            adj[a].insert(b);
            adj[b].insert(a);
        }
        Self { ids, index, adj }
    }

    pub fn index_of(&self, v: NodeId) -> Result<usize, KgError> {
        self.index.get(&v).copied().ok_or(KgError::NodeNotFound(v))
    }

    pub fn degree(&self, v: NodeId) -> Result<usize, KgError> {
        Ok(self.adj[self.index_of(v)?].len())
    }

    pub fn linked(&self, u: NodeId, v: NodeId) -> bool {
        match (self.index.get(&u), self.index.get(&v)) {
            (Some(a), Some(b)) => self.adj[*a].contains(b),
            _ => false,
        }
    }

    pub fn neighbors(&self, v: NodeId) -> Result<impl Iterator<Item = NodeId> + '_, KgError> {
        let i = self.index_of(v)?;
        Ok(self.adj[i].iter().map(|j| self.ids[*j]))
    }

    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (a, ns) in self.adj.iter().enumerate() {
            for &b in ns {
                if a < b {
                    out.push((a, b));
                }
            }
        }
        out
    }

    fn comm(&self, p: &CommunityPartition, v: NodeId) -> Result<u32, KgError> {
        p.community_of(v).ok_or_else(|| KgError::PartitionMismatch(format!("{v} has no community")))
    }

    pub fn cross_neighbors(&self, p: &CommunityPartition, v: NodeId) -> Result<usize, KgError> {
        self.index_of(v)?;
        let cv = self.comm(p, v)?;
        let mut n = 0;
        for u in self.neighbors(v)? {
            if self.comm(p, u)? != cv {
                n += 1;
            }
        }
        Ok(n)
    }

    pub fn bridging_score(&self, p: &CommunityPartition, v: NodeId) -> Result<f64, KgError> {
        let cross = self.cross_neighbors(p, v)?;
        Ok(cross as f64 / self.degree(v)?.max(1) as f64)
    }

    pub fn degree_in_community(&self, p: &CommunityPartition, v: NodeId) -> Result<usize, KgError> {
        Ok(self.degree(v)? - self.cross_neighbors(p, v)?)
    }
}

/// Fraction of a node's undirected neighbors lying in other communities.
pub fn bridging_score(kg: &KnowledgeGraph, p: &CommunityPartition, v: NodeId) -> Result<f64, KgError> {
    Topology::new(kg).bridging_score(p, v)
}

/// Number of undirected neighbors sharing the node's community.
pub fn degree_in_community(kg: &KnowledgeGraph, p: &CommunityPartition, v: NodeId) -> Result<usize, KgError> {
    Topology::new(kg).degree_in_community(p, v)
}

/// Newman modularity with resolution on the undirected simple projection.
pub fn modularity(kg: &KnowledgeGraph, p: &CommunityPartition, resolution: f64) -> f64 {
    let topo = Topology::new(kg);
    let edges = topo.edge_list();
    let labels: Vec<usize> = topo.ids.iter().map(|n| p.assignment.get(n).copied().unwrap_or(0) as usize).collect();
    leiden::modularity(topo.ids.len(), &edges, &labels, resolution)
}

pub const DEFAULT_RESOLUTION: f64 = 1.0;

pub fn detect_communities(kg: &KnowledgeGraph, seed: u64) -> CommunityPartition {
    detect_communities_with(kg, seed, DEFAULT_RESOLUTION)
}

/// Leiden on unit weights; deterministic for a given graph and seed. Labels
/// are numbered by the smallest node id in each community.
pub fn detect_communities_with(kg: &KnowledgeGraph, seed: u64, resolution: f64) -> CommunityPartition {
    let topo = Topology::new(kg);
    let labels = leiden_labels(topo.ids.len(), &topo.edge_list(), resolution, seed);
    CommunityPartition {
        assignment: topo.ids.iter().zip(labels).map(|(n, l)| (*n, l as u32)).collect(),
        seed,
    }
}

pub const DEFAULT_CLUSTER_THRESHOLD: f64 = 0.85;

/// Connected components of the graph linking nodes with cosine ≥ threshold.
pub fn cluster_semantic(kg: &KnowledgeGraph, threshold: f64) -> Result<BTreeMap<NodeId, u32>, KgError> {
    let nodes: Vec<&KnowledgeNode> = kg.nodes.values().collect();
    let mut vecs = Vec::with_capacity(nodes.len());
    for n in &nodes {
        vecs.push(n.embedding.as_ref().ok_or(KgError::MissingEmbedding(n.id))?);
    }
    let mut uf = UnionFind::<usize>::new(nodes.len());
    for i in 0..nodes.len() {
        for j in i + 1..nodes.len() {
            if cosine(vecs[i], vecs[j]) >= threshold {
                uf.union(i, j);
            }
        }
    }
    let mut label_of_root: BTreeMap<usize, u32> = BTreeMap::new();
    let mut out = BTreeMap::new();
    for (i, n) in nodes.iter().enumerate() {
        let root = uf.find(i);
        let next = label_of_root.len() as u32;
        let l = *label_of_root.entry(root).or_insert(next);
        out.insert(n.id, l);
    }
    Ok(out)
}
