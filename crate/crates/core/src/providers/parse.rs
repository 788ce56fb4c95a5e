//! Total parsers for the structured chat outputs. Every input yields a value or
//! a typed error; code fences and surrounding whitespace are tolerated, other
//! prose is not.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::kg::{EdgeId, ExtractionResult, KnowledgeGraph, NewEdge, NewNode, NodeId};
use crate::text::strip_code_fence;

static EN_LABEL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^EN\d+$").unwrap());
static CLUSTER_ID: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^c\d+$").unwrap());
static LIST_PREFIX: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?:[-*•]\s+|\d+[.)]\s+|Q\d+[:.]\s*|SQ\d+[:.]\s*)").unwrap());

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("not a single JSON document: {0}")]
    Json(String),
    #[error("{path}: expected {expected}")]
    WrongType { path: String, expected: &'static str },
    #[error("missing key {path}")]
    MissingKey { path: String },
    #[error("{path}: malformed id {value:?}")]
    BadId { path: String, value: String },
    #[error("{path}: empty string")]
    Empty { path: String },
    #[error("{path}: {id} does not exist")]
    Dangling { path: String, id: String },
    #[error("cluster {cluster} has {size} nodes; allowed 2..=5")]
    ClusterSize { cluster: String, size: usize },
    #[error("{field} has {len} entries, limit is {cap}")]
    OverBudget { field: &'static str, len: usize, cap: usize },
    #[error("{path}: value {value} out of range")]
    OutOfRange { path: String, value: String },
    #[error("{queries} queries cannot align with {chains} selected chains")]
    Misaligned { chains: usize, queries: usize },
    #[error("line {line}: {reason}")]
    Format { line: usize, reason: String },
}

fn json_doc(text: &str) -> Result<Value, ParseError> {
    serde_json::from_str(strip_code_fence(text)).map_err(|e| ParseError::Json(e.to_string()))
}

fn as_obj<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>, ParseError> {
    v.as_object().ok_or_else(|| ParseError::WrongType { path: path.to_string(), expected: "an object" })
}

fn field<'a>(o: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value, ParseError> {
    o.get(key).ok_or_else(|| ParseError::MissingKey { path: format!("{path}.{key}") })
}

fn as_arr<'a>(v: &'a Value, path: &str) -> Result<&'a Vec<Value>, ParseError> {
    v.as_array().ok_or_else(|| ParseError::WrongType { path: path.to_string(), expected: "an array" })
}

fn as_str<'a>(v: &'a Value, path: &str) -> Result<&'a str, ParseError> {
    v.as_str().ok_or_else(|| ParseError::WrongType { path: path.to_string(), expected: "a string" })
}

fn nonempty_str<'a>(v: &'a Value, path: &str) -> Result<&'a str, ParseError> {
    let s = as_str(v, path)?.trim();
    if s.is_empty() {
        return Err(ParseError::Empty { path: path.to_string() });
    }
    Ok(s)
}

fn as_bool(v: &Value, path: &str) -> Result<bool, ParseError> {
    v.as_bool().ok_or_else(|| ParseError::WrongType { path: path.to_string(), expected: "a boolean" })
}

fn node_id(v: &Value, path: &str) -> Result<NodeId, ParseError> {
    let s = as_str(v, path)?;
    s.parse().map_err(|_| ParseError::BadId { path: path.to_string(), value: s.to_string() })
}

fn edge_id(v: &Value, path: &str) -> Result<EdgeId, ParseError> {
    let s = as_str(v, path)?;
    s.parse().map_err(|_| ParseError::BadId { path: path.to_string(), value: s.to_string() })
}

/// Parse and cross-check an extraction payload. Edge endpoints must be new or
/// existing nodes; evidence mappings must name new or existing edges.
pub fn parse_extraction(text: &str, kg: &KnowledgeGraph) -> Result<ExtractionResult, ParseError> {
    let doc = json_doc(text)?;
    let root = as_obj(&doc, "$")?;
    let nodes_v = as_arr(field(root, "new_nodes", "$")?, "$.new_nodes")?;
    let edges_v = as_arr(field(root, "new_edges", "$")?, "$.new_edges")?;
    let map_v = as_obj(field(root, "evidences_map", "$")?, "$.evidences_map")?;

    let mut out = ExtractionResult::default();
    for (i, v) in nodes_v.iter().enumerate() {
        let p = format!("$.new_nodes[{i}]");
        let o = as_obj(v, &p)?;
        out.new_nodes.push(NewNode {
            id: node_id(field(o, "id", &p)?, &format!("{p}.id"))?,
            node_name: nonempty_str(field(o, "node_name", &p)?, &format!("{p}.node_name"))?.to_string(),
            is_core_entity: as_bool(field(o, "is_core_entity", &p)?, &format!("{p}.is_core_entity"))?,
        });
    }
    let known_nodes: BTreeSet<NodeId> =
        out.new_nodes.iter().map(|n| n.id).chain(kg.nodes().map(|n| n.id)).collect();
    for (i, v) in edges_v.iter().enumerate() {
        let p = format!("$.new_edges[{i}]");
        let o = as_obj(v, &p)?;
        let e = NewEdge {
            id: edge_id(field(o, "id", &p)?, &format!("{p}.id"))?,
            source_id: node_id(field(o, "source_id", &p)?, &format!("{p}.source_id"))?,
            target_id: node_id(field(o, "target_id", &p)?, &format!("{p}.target_id"))?,
            relation_name: nonempty_str(field(o, "relation_name", &p)?, &format!("{p}.relation_name"))?.to_string(),
        };
        for (key, n) in [("source_id", e.source_id), ("target_id", e.target_id)] {
            if !known_nodes.contains(&n) {
                return Err(ParseError::Dangling { path: format!("{p}.{key}"), id: n.to_string() });
            }
        }
        out.new_edges.push(e);
    }
    let known_edges: BTreeSet<EdgeId> =
        out.new_edges.iter().map(|e| e.id).chain(kg.edges().map(|e| e.id)).collect();
    for (label, v) in map_v {
        let p = format!("$.evidences_map.{label}");
        if !EN_LABEL.is_match(label) {
            return Err(ParseError::BadId { path: "$.evidences_map".into(), value: label.clone() });
        }
        let mut ids = Vec::new();
        for (j, x) in as_arr(v, &p)?.iter().enumerate() {
            let e = edge_id(x, &format!("{p}[{j}]"))?;
            if !known_edges.contains(&e) {
                return Err(ParseError::Dangling { path: format!("{p}[{j}]"), id: e.to_string() });
            }
            ids.push(e);
        }
        out.evidences_map.insert(label.clone(), ids);
    }
    Ok(out)
}

/// One proposed merge group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeProposal {
    pub cluster_id: String,
    pub representative_concept: String,
    pub source_node_ids: Vec<NodeId>,
    #[serde(default)]
    pub similarity_justification: String,
}

pub fn parse_merge(text: &str) -> Result<Vec<MergeProposal>, ParseError> {
    let doc = json_doc(text)?;
    let root = as_obj(&doc, "$")?;
    let clusters = as_arr(field(root, "clusters", "$")?, "$.clusters")?;
    let mut out = Vec::new();
    for (i, v) in clusters.iter().enumerate() {
        let p = format!("$.clusters[{i}]");
        let o = as_obj(v, &p)?;
        let cid = as_str(field(o, "cluster_id", &p)?, &format!("{p}.cluster_id"))?;
        if !CLUSTER_ID.is_match(cid) {
            return Err(ParseError::BadId { path: format!("{p}.cluster_id"), value: cid.to_string() });
        }
        let rep = nonempty_str(field(o, "representative_concept", &p)?, &format!("{p}.representative_concept"))?;
        let srcs = as_arr(field(o, "source_node_ids", &p)?, &format!("{p}.source_node_ids"))?;
        let ids = srcs
            .iter()
            .enumerate()
            .map(|(j, x)| node_id(x, &format!("{p}.source_node_ids[{j}]")))
            .collect::<Result<Vec<_>, _>>()?;
        if !(2..=5).contains(&ids.len()) {
            return Err(ParseError::ClusterSize { cluster: cid.to_string(), size: ids.len() });
        }
        let just = match o.get("similarity_justification") {
            None | Some(Value::Null) => String::new(),
            Some(v) => as_str(v, &format!("{p}.similarity_justification"))?.to_string(),
        };
        out.push(MergeProposal {
            cluster_id: cid.to_string(),
            representative_concept: rep.to_string(),
            source_node_ids: ids,
            similarity_justification: just,
        });
    }
    Ok(out)
}

/// Selected chain ids plus queries; the first `chains.len()` queries are aligned
/// with the chains, any remaining ones are outline-driven extras.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ChainSelection {
    pub chains: Vec<String>,
    #[serde(rename = "search queries")]
    pub search_queries: Vec<String>,
}

pub fn parse_chain_selection(text: &str, chain_num: usize) -> Result<ChainSelection, ParseError> {
    let doc = json_doc(text)?;
    let root = as_obj(&doc, "$")?;
    let chains_v = as_arr(field(root, "chains", "$")?, "$.chains")?;
    let queries_v = match root.get("search queries").or_else(|| root.get("search_queries")) {
        Some(v) => as_arr(v, "$.search queries")?,
        None => return Err(ParseError::MissingKey { path: "$.search queries".into() }),
    };
    let chains = chains_v
        .iter()
        .enumerate()
        .map(|(i, v)| nonempty_str(v, &format!("$.chains[{i}]")).map(str::to_string))
        .collect::<Result<Vec<_>, _>>()?;
    let search_queries = queries_v
        .iter()
        .enumerate()
        .map(|(i, v)| nonempty_str(v, &format!("$.search queries[{i}]")).map(str::to_string))
        .collect::<Result<Vec<_>, _>>()?;
    if chains.len() > chain_num {
        return Err(ParseError::OverBudget { field: "chains", len: chains.len(), cap: chain_num });
    }
    if search_queries.len() > chain_num {
        return Err(ParseError::OverBudget { field: "search queries", len: search_queries.len(), cap: chain_num });
    }
    if search_queries.len() < chains.len() {
        return Err(ParseError::Misaligned { chains: chains.len(), queries: search_queries.len() });
    }
    Ok(ChainSelection { chains, search_queries })
}

/// One query per line. Bullets and numbering are stripped; JSON or markdown
/// structure is a format violation.
pub fn parse_query_lines(text: &str, budget: usize) -> Result<Vec<String>, ParseError> {
    let mut out = Vec::new();
    for (i, raw) in strip_code_fence(text).lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('{') || line.starts_with('[') || line.starts_with('#') {
            return Err(ParseError::Format { line: i + 1, reason: "structured text instead of a query".into() });
        }
        let line = LIST_PREFIX.replace(line, "");
        let line = line.trim().trim_matches(|c| c == '"' || c == '\'' || c == '“' || c == '”').trim();
        if !line.is_empty() {
            out.push(line.to_string());
        }
    }
    if out.len() > budget {
        return Err(ParseError::OverBudget { field: "queries", len: out.len(), cap: budget });
    }
    Ok(out)
}

/// A bracketed index array such as `[0, 2]`, each index below `n`.
pub fn parse_index_list(text: &str, n: usize) -> Result<Vec<usize>, ParseError> {
    let doc = json_doc(text)?;
    let arr = as_arr(&doc, "$")?;
    let mut out = BTreeSet::new();
    for (i, v) in arr.iter().enumerate() {
        let k = v
            .as_u64()
            .ok_or_else(|| ParseError::WrongType { path: format!("$[{i}]"), expected: "a non-negative integer" })?;
        if k as usize >= n || k > usize::MAX as u64 {
            return Err(ParseError::OutOfRange { path: format!("$[{i}]"), value: k.to_string() });
        }
        out.insert(k as usize);
    }
    Ok(out.into_iter().collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceJudgement {
    pub useful: bool,
    pub summary: String,
    pub content: String,
}

pub fn parse_evidence_judgement(text: &str) -> Result<EvidenceJudgement, ParseError> {
    let doc = json_doc(text)?;
    let root = as_obj(&doc, "$")?;
    let useful = as_bool(field(root, "useful", "$")?, "$.useful")?;
    let summary = as_str(field(root, "summary", "$")?, "$.summary")?.trim().to_string();
    let content = as_str(field(root, "content", "$")?, "$.content")?.trim().to_string();
    if useful && summary.is_empty() {
        return Err(ParseError::Empty { path: "$.summary".into() });
    }
    Ok(EvidenceJudgement { useful, summary, content })
}

/// The six outline-quality dimensions scored before stopping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    InstructionFollowing,
    Depth,
    Breadth,
    Balance,
    Support,
    Insightfulness,
}

impl Dimension {
    pub const ALL: [Dimension; 6] = [
        Dimension::InstructionFollowing,
        Dimension::Depth,
        Dimension::Breadth,
        Dimension::Balance,
        Dimension::Support,
        Dimension::Insightfulness,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::InstructionFollowing => "instruction_following",
            Dimension::Depth => "depth",
            Dimension::Breadth => "breadth",
            Dimension::Balance => "balance",
            Dimension::Support => "support",
            Dimension::Insightfulness => "insightfulness",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn parse_scores(text: &str) -> Result<BTreeMap<Dimension, f64>, ParseError> {
    let doc = json_doc(text)?;
    let root = as_obj(&doc, "$")?;
    let mut out = BTreeMap::new();
    for d in Dimension::ALL {
        let p = format!("$.{}", d.as_str());
        let v = field(root, d.as_str(), "$")?;
        let x = v.as_f64().ok_or_else(|| ParseError::WrongType { path: p.clone(), expected: "a number" })?;
        if !(0.0..=100.0).contains(&x) {
            return Err(ParseError::OutOfRange { path: p, value: v.to_string() });
        }
        out.insert(d, x);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const F5_DOC: &str = r#"{
  "new_nodes": [
    {"id": "n1", "node_name": "Duan Yongping", "is_core_entity": true}
  ],
  "new_edges": [
    {"id": "e1", "source_id": "n1", "target_id": "n1x", "relation_name": "advocates"}
  ],
  "evidences_map": {"EN1": ["e1"]}
}"#;

    #[test]
    fn extraction_schema_document() {
        let doc = r#"```json
{"new_nodes": [{"id": "n1", "node_name": "Duan", "is_core_entity": true},
               {"id": "n2", "node_name": "opportunity cost", "is_core_entity": false}],
 "new_edges": [{"id": "e1", "source_id": "n1", "target_id": "n2", "relation_name": "emphasizes"}],
 "evidences_map": {"EN1": ["e1"]}}
```"#;
        let r = parse_extraction(doc, &KnowledgeGraph::new()).unwrap();
        assert_eq!(r.new_nodes.len(), 2);
        assert_eq!(r.evidences_map["EN1"], vec![EdgeId(1)]);
        let again = parse_extraction(&serde_json::to_string(&r).unwrap(), &KnowledgeGraph::new()).unwrap();
        assert_eq!(again, r);
    }

    #[test]
    fn extraction_errors_are_distinct() {
        let kg = KnowledgeGraph::new();
        assert!(matches!(parse_extraction("{}", &kg), Err(ParseError::MissingKey { .. })));
        assert!(matches!(parse_extraction(F5_DOC, &kg), Err(ParseError::BadId { .. })));
        let dangling_edge = r#"{"new_nodes": [], "new_edges": [], "evidences_map": {"EN1": ["e4"]}}"#;
        assert!(matches!(parse_extraction(dangling_edge, &kg), Err(ParseError::Dangling { .. })));
        let dangling_node = r#"{"new_nodes": [], "new_edges": [{"id": "e1", "source_id": "n1", "target_id": "n2", "relation_name": "r"}], "evidences_map": {}}"#;
        assert!(matches!(parse_extraction(dangling_node, &kg), Err(ParseError::Dangling { .. })));
        let wrong_type = r#"{"new_nodes": [{"id": "n1", "node_name": "x", "is_core_entity": "yes"}], "new_edges": [], "evidences_map": {}}"#;
        assert!(matches!(parse_extraction(wrong_type, &kg), Err(ParseError::WrongType { .. })));
        assert!(matches!(parse_extraction("Here you go: {}", &kg), Err(ParseError::Json(_))));
        assert!(matches!(parse_extraction("{} trailing", &kg), Err(ParseError::Json(_))));
    }

    #[test]
    fn extraction_may_reference_existing_graph() {
        let mut kg = KnowledgeGraph::new();
        let a = kg.add_node("a", true);
        let b = kg.add_node("b", false);
        kg.add_edge(a, b, "r", []).unwrap();
        let doc = r#"{"new_nodes": [], "new_edges": [{"id": "e2", "source_id": "n2", "target_id": "n1", "relation_name": "q"}], "evidences_map": {"EN1": ["e1", "e2"]}}"#;
        assert!(parse_extraction(doc, &kg).is_ok());
    }

    #[test]
    fn merge_payloads() {
        let two = r#"{"clusters": [{"cluster_id": "c1", "representative_concept": "Virtue Ethics", "source_node_ids": ["n4","n5"], "similarity_justification": "same idea"}]}"#;
        let r = parse_merge(two).unwrap();
        assert_eq!(r[0].source_node_ids, vec![NodeId(4), NodeId(5)]);
        assert_eq!(parse_merge(&serde_json::json!({"clusters": r}).to_string()).unwrap(), r);
        assert_eq!(parse_merge(r#"{"clusters": []}"#).unwrap(), vec![]);
        let six = r#"{"clusters": [{"cluster_id": "c1", "representative_concept": "x", "source_node_ids": ["n1","n2","n3","n4","n5","n6"]}]}"#;
        assert_eq!(parse_merge(six), Err(ParseError::ClusterSize { cluster: "c1".into(), size: 6 }));
        let one = r#"{"clusters": [{"cluster_id": "c1", "representative_concept": "x", "source_node_ids": ["n1"]}]}"#;
        assert!(matches!(parse_merge(one), Err(ParseError::ClusterSize { size: 1, .. })));
        let bad = r#"{"clusters": [{"cluster_id": "k1", "representative_concept": "x", "source_node_ids": ["n1","n2"]}]}"#;
        assert!(matches!(parse_merge(bad), Err(ParseError::BadId { .. })));
    }

    #[test]
    fn chain_selection_caps() {
        let mk = |c: usize, q: usize| {
            serde_json::json!({
                "chains": (1..=c).map(|i| format!("chain_{i}")).collect::<Vec<_>>(),
                "search queries": (1..=q).map(|i| format!("query {i}")).collect::<Vec<_>>(),
            })
            .to_string()
        };
        let ok = parse_chain_selection(&mk(10, 10), 10).unwrap();
        assert_eq!(ok.chains.len(), 10);
        assert_eq!(parse_chain_selection(&serde_json::to_string(&ok).unwrap(), 10).unwrap(), ok);
        assert_eq!(
            parse_chain_selection(&mk(3, 11), 10),
            Err(ParseError::OverBudget { field: "search queries", len: 11, cap: 10 })
        );
        assert_eq!(parse_chain_selection(&mk(0, 0), 10).unwrap(), ChainSelection::default());
        assert_eq!(parse_chain_selection(&mk(4, 2), 10), Err(ParseError::Misaligned { chains: 4, queries: 2 }));
        assert!(parse_chain_selection(r#"{"chains": []}"#, 10).is_err());
    }

    #[test]
    fn query_lines() {
        let q = parse_query_lines("first query\n\n- second query\n3. third query\n", 10).unwrap();
        assert_eq!(q, vec!["first query", "second query", "third query"]);
        assert!(matches!(parse_query_lines("a\nb\nc", 2), Err(ParseError::OverBudget { .. })));
        assert!(matches!(parse_query_lines("{\"q\": 1}", 2), Err(ParseError::Format { line: 1, .. })));
        assert_eq!(parse_query_lines("", 3).unwrap(), Vec::<String>::new());
    }

    #[test]
    fn index_lists() {
        assert_eq!(parse_index_list("[2, 0, 2]", 3).unwrap(), vec![0, 2]);
        assert_eq!(parse_index_list("[]", 0).unwrap(), Vec::<usize>::new());
        assert!(matches!(parse_index_list("[3]", 3), Err(ParseError::OutOfRange { .. })));
        assert!(matches!(parse_index_list("[-1]", 3), Err(ParseError::WrongType { .. })));
        assert!(parse_index_list("0, 1", 3).is_err());
    }

    #[test]
    fn judgements_and_scores() {
        let j = parse_evidence_judgement(r#"{"useful": true, "summary": "s", "content": "c"}"#).unwrap();
        assert!(j.useful);
        assert!(parse_evidence_judgement(r#"{"useful": true, "summary": "", "content": ""}"#).is_err());
        let s = parse_scores(r#"{"instruction_following": 80, "depth": 70.5, "breadth": 90, "balance": 75, "support": 0, "insightfulness": 100}"#).unwrap();
        assert_eq!(s[&Dimension::Depth], 70.5);
        assert!(parse_scores(r#"{"instruction_following": 80}"#).is_err());
        assert!(matches!(
            parse_scores(r#"{"instruction_following": 101, "depth": 1, "breadth": 1, "balance": 1, "support": 1, "insightfulness": 1}"#),
            Err(ParseError::OutOfRange { .. })
        ));
    }
}
