//! Rule-based chat over a synthetic world. Each template gets a deterministic
//! answer computed from the prompt text plus the world it was built for.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{fact_title, facts_in, Fact, SyntheticWorld};
use crate::outline::{Marker, OutlineGraph, OutlineNode};
use crate::providers::parse::Dimension;
use crate::providers::{ChatProvider, ChatRequest, ProviderError};
use crate::text::normalize_query;
use crate::evidence::EvidenceId;

/// Outline scores as affine functions of fact coverage; support also scales
/// with the share of fact lines carrying a citation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Rubric {
    pub base: f64,
    pub slope: f64,
    pub support_slope: f64,
}

impl Default for Rubric {
    fn default() -> Self {
        Self { base: 50.0, slope: 50.0, support_slope: 100.0 }
    }
}

impl Rubric {
    pub fn scores(&self, coverage: f64, cited_share: f64) -> BTreeMap<Dimension, f64> {
        let clamp = |x: f64| x.clamp(0.0, 100.0);
        Dimension::ALL
            .iter()
            .map(|d| {
                let v = match d {
                    Dimension::Support => self.support_slope * coverage * cited_share,
                    _ => self.base + self.slope * coverage,
                };
                (*d, clamp(v))
            })
            .collect()
    }
}

pub struct SimChat {
    world: Arc<SyntheticWorld>,
    rubric: Rubric,
    og_budget: usize,
    kg_budget: usize,
    /// How often each chain query has been proposed; the chain prompt carries
    /// no query history, so the stand-in remembers it.
    proposed: Mutex<BTreeMap<String, usize>>,
}

fn err(template: &str, why: &str) -> ProviderError {
    ProviderError::UnmatchedPrompt { template: template.to_string(), head: why.to_string() }
}

/// Text after `start` and before the first of `ends` that follows it.
fn between<'a>(text: &'a str, start: &str, ends: &[&str]) -> Option<&'a str> {
    let from = text.find(start)? + start.len();
    let rest = &text[from..];
    let to = ends.iter().filter_map(|e| rest.find(e)).min().unwrap_or(rest.len());
    Some(&rest[..to])
}

fn bullets(block: &str) -> Vec<String> {
    block.lines().filter_map(|l| l.strip_prefix("- ")).map(normalize_query).collect()
}

/// Drop a trailing ` <n>` variant counter.
fn base_of(q: &str) -> &str {
    match q.rsplit_once(' ') {
        Some((head, tail)) if !tail.is_empty() && tail.bytes().all(|b| b.is_ascii_digit()) => head,
        _ => q,
    }
}

fn variant(base: &str, uses: usize) -> String {
    if uses == 0 {
        base.to_string()
    } else {
        format!("{base} {}", uses + 1)
    }
}

/// Uses an uncited outline line gets before cited lines compete with it.
const CITED_HEAD_START: usize = 3;

impl SimChat {
    pub fn new(world: Arc<SyntheticWorld>, rubric: Rubric, og_budget: usize, kg_budget: usize) -> Self {
        Self { world, rubric, og_budget, kg_budget, proposed: Mutex::new(BTreeMap::new()) }
    }

    fn mentions_node(&self, text: &str) -> bool {
        text.to_lowercase()
            .split(|c: char| !c.is_alphanumeric())
            .any(|t| self.world.query_index.contains_key(t))
    }

    fn create_outline(&self) -> String {
        let cores = self.world.core_names();
        let mut lines = vec![format!("Synthetic survey of {}", cores.join(", "))];
        for (k, c) in cores.iter().enumerate() {
            lines.push(format!("{}. {c}", k + 1));
            lines.push(format!("{}.1 {c} background", k + 1));
            lines.push(format!("{}.2 {c} relations", k + 1));
        }
        lines.push(format!("{}. Cross-cutting concepts", cores.len() + 1));
        lines.join("\n")
    }

    /// Least-queried outline lines first, uncited before cited, each with the
    /// first variant not yet used.
    fn generate_queries(&self, user: &str) -> Result<String, ProviderError> {
        let t = "generate_queries";
        let outline = between(user, "Current Outline:\n", &["\n\nHistorical Search Queries"]).ok_or_else(|| err(t, "outline"))?;
        let executed = between(user, "Historical Search Queries (executed):\n", &["\n\nPending Search Queries"]).unwrap_or("");
        let pending = between(user, "Pending Search Queries (planned, NOT executed yet):\n", &[]).unwrap_or("");
        let og = OutlineGraph::parse(outline).map_err(|e| err(t, &e.to_string()))?;
        let used: BTreeSet<String> = bullets(executed).into_iter().chain(bullets(pending)).collect();
        let mut uses: BTreeMap<String, usize> = BTreeMap::new();
        for q in &used {
            *uses.entry(base_of(q).to_string()).or_default() += 1;
        }
        // Uncited lines lead, but cited ones rejoin the rotation after a head
        // start so no part of the outline starves.
        let mut lines: Vec<(usize, bool, usize, usize, String)> = og
            .nodes()
            .iter()
            .enumerate()
            .filter(|(_, v)| self.mentions_node(&v.node.title))
            .map(|(i, v)| {
                let q = v.node.title.clone();
                let n = uses.get(&normalize_query(&q)).copied().unwrap_or(0);
                let cited = !v.node.citations.is_empty();
                (n + if cited { CITED_HEAD_START } else { 0 }, cited, v.node.citations.len(), i, q)
            })
            .collect();
        lines.sort();
        let mut out = Vec::new();
        let mut taken = used;
        for (_, _, _, _, base) in lines.into_iter().take(self.og_budget) {
            let mut k = 0;
            while taken.contains(&normalize_query(&variant(&base, k))) {
                k += 1;
            }
            let q = variant(&base, k);
            taken.insert(normalize_query(&q));
            out.push(q);
        }
        Ok(out.join("\n"))
    }

    fn chain_selection(&self, user: &str) -> Result<String, ProviderError> {
        let t = "chain_selection";
        let block = between(user, "Candidate Explore Chains:\n", &[]).ok_or_else(|| err(t, "candidates"))?;
        let mut cands = Vec::new();
        for (i, line) in block.lines().filter(|l| !l.trim().is_empty()).enumerate() {
            let v: serde_json::Value = serde_json::from_str(line).map_err(|e| err(t, &e.to_string()))?;
            let id = v["chain_id"].as_str().ok_or_else(|| err(t, "chain_id"))?.to_string();
            let kind = v["type"].as_str().unwrap_or("explore");
            let parts: Vec<&str> = v["pattern"].as_str().unwrap_or("").split(" → ").collect();
            if parts.len() != 3 {
                return Err(err(t, "pattern"));
            }
            let base = if kind == "enrich" {
                format!("{} {} {}", parts[0], parts[1], parts[2])
            } else {
                format!("{} {}", parts[0], parts[2])
            };
            cands.push((kind == "enrich", i, id, base));
        }
        let mut proposed = self.proposed.lock().expect("chat memory");
        let mut order: Vec<(usize, bool, usize, String, String)> = cands
            .into_iter()
            .map(|(enrich, i, id, base)| (proposed.get(&normalize_query(&base)).copied().unwrap_or(0), enrich, i, id, base))
            .collect();
        order.sort();
        let mut chains = Vec::new();
        let mut queries = Vec::new();
        for (_, _, _, id, base) in order.into_iter().take(self.kg_budget) {
            let n = proposed.entry(normalize_query(&base)).or_default();
            queries.push(variant(&base, *n));
            *n += 1;
            chains.push(id);
        }
        Ok(json!({"chains": chains, "search queries": queries}).to_string())
    }

    fn filter_urls(&self, user: &str) -> String {
        let n = between(user, "Candidates:\n", &[]).map_or(0, |b| b.lines().filter(|l| l.starts_with('[')).count());
        serde_json::to_string(&(0..n).collect::<Vec<_>>()).unwrap()
    }

    fn extract_evidence(&self, user: &str) -> String {
        let page = between(user, "Page Content:\n", &[]).unwrap_or("").trim();
        let useful = facts_in(page).iter().any(|f| self.world.is_truth(f));
        json!({"useful": useful, "summary": if useful { page } else { "" }, "content": ""}).to_string()
    }

    /// Every truth fact in the statements, with ids continuing the graph's.
    fn extract_knowledge(&self, user: &str) -> Result<String, ProviderError> {
        let t = "extract_knowledge";
        let statements = between(user, "Evidence Statements:\n", &["\nCurrent Knowledge Graph:\n"]).ok_or_else(|| err(t, "statements"))?;
        let mut names: BTreeMap<String, String> = BTreeMap::new();
        let mut edges: BTreeMap<(String, String, String), String> = BTreeMap::new();
        let (mut max_n, mut max_e) = (0u32, 0u32);
        if let Some(g) = between(user, "\nCurrent Knowledge Graph:\n", &[]) {
            let v: serde_json::Value = serde_json::from_str(g.trim()).map_err(|e| err(t, &e.to_string()))?;
            for n in v["knowledge_nodes"].as_array().into_iter().flatten() {
                let id = n["node_id"].as_str().unwrap_or("").to_string();
                max_n = max_n.max(id.trim_start_matches('n').parse().unwrap_or(0));
                names.insert(n["knowledge"].as_str().unwrap_or("").to_string(), id);
            }
            for e in v["knowledge_edges"].as_array().into_iter().flatten() {
                let id = e["edge_id"].as_str().unwrap_or("").to_string();
                max_e = max_e.max(id.trim_start_matches('e').parse().unwrap_or(0));
                let rep = e["representation"].as_str().unwrap_or("");
                if let Some((s, rest)) = rep.split_once(" - ") {
                    if let Some((r, tg)) = rest.rsplit_once(" -> ") {
                        edges.insert((s.to_string(), r.to_string(), tg.to_string()), id);
                    }
                }
            }
        }
        let mut new_nodes = Vec::new();
        let mut new_edges = Vec::new();
        let mut map = serde_json::Map::new();
        for line in statements.lines() {
            let Some((label, text)) = line.split_once(": ") else { continue };
            let mut ids = Vec::new();
            for f in facts_in(text).into_iter().filter(|f| self.world.is_truth(f)) {
                let mut node = |name: &str| -> String {
                    if let Some(id) = names.get(name) {
                        return id.clone();
                    }
                    max_n += 1;
                    let id = format!("n{max_n}");
                    new_nodes.push(json!({"id": id, "node_name": name, "is_core_entity": self.world.is_core(name)}));
                    names.insert(name.to_string(), id.clone());
                    id
                };
                let (s, tg) = (node(&f.source), node(&f.target));
                let key = (f.source.clone(), f.relation.clone(), f.target.clone());
                let id = match edges.get(&key) {
                    Some(id) => id.clone(),
                    None => {
                        max_e += 1;
                        let id = format!("e{max_e}");
                        new_edges.push(json!({"id": id, "source_id": s, "target_id": tg, "relation_name": f.relation}));
                        edges.insert(key, id.clone());
                        id
                    }
                };
                if !ids.contains(&id) {
                    ids.push(id);
                }
            }
            if !ids.is_empty() {
                map.insert(label.trim().to_string(), json!(ids));
            }
        }
        Ok(json!({"new_nodes": new_nodes, "new_edges": new_edges, "evidences_map": map}).to_string())
    }

    /// Every new fact becomes a cited line under the section of its core
    /// endpoint, or under the cross-cutting section when it has none.
    fn update_outline(&self, user: &str) -> Result<String, ProviderError> {
        let t = "update_outline";
        let outline = between(user, "Current Outline:\n", &["\nNew Evidence:\n"]).ok_or_else(|| err(t, "outline"))?;
        let evidence = between(user, "\nNew Evidence:\n", &["\nKnowledge Graph:\n"]).ok_or_else(|| err(t, "evidence"))?;
        let mut og = OutlineGraph::parse(outline).map_err(|e| err(t, &e.to_string()))?;
        let cross = og.roots.len().checked_sub(1).ok_or_else(|| err(t, "empty outline"))?;
        for line in evidence.lines() {
            let mut parts = line.splitn(3, " | ");
            let (Some(id), Some(_), Some(summary)) = (parts.next(), parts.next(), parts.next()) else { continue };
            let Some(id) = id.trim().strip_prefix("id_").and_then(|d| d.parse().ok()).map(EvidenceId) else { continue };
            for f in facts_in(summary).into_iter().filter(|f| self.world.is_truth(f)) {
                let core = [&f.source, &f.target].into_iter().find(|n| self.world.is_core(n));
                let host = core.and_then(|c| og.roots.iter().position(|r| &r.title == c));
                let parent: &mut OutlineNode = match host {
                    Some(k) => {
                        let root = &mut og.roots[k];
                        let bg = format!("{} background", root.title);
                        if let Some(b) = root.children.iter_mut().find(|c| c.title == bg) {
                            b.citations.insert(id);
                        }
                        let rel = format!("{} relations", root.title);
                        match root.children.iter().position(|c| c.title == rel) {
                            Some(i) => &mut root.children[i],
                            None => root,
                        }
                    }
                    None => &mut og.roots[cross],
                };
                add_fact(parent, &f, id);
            }
        }
        Ok(og.render(true))
    }

    fn early_stop(&self, user: &str) -> Result<String, ProviderError> {
        let t = "early_stop";
        let outline = between(user, "\nOutline:\n", &[]).ok_or_else(|| err(t, "outline"))?;
        let og = OutlineGraph::parse(outline).map_err(|e| err(t, &e.to_string()))?;
        let truth: BTreeSet<(String, String)> = self.world.truth_facts().iter().map(Fact::pair).collect();
        let mut found = BTreeSet::new();
        let (mut lines, mut cited) = (0usize, 0usize);
        for v in og.nodes() {
            if let Some(f) = fact_title(&v.node.title) {
                lines += 1;
                if !v.node.citations.is_empty() {
                    cited += 1;
                }
                if truth.contains(&f.pair()) {
                    found.insert(f.pair());
                }
            }
        }
        let coverage = if truth.is_empty() { 1.0 } else { found.len() as f64 / truth.len() as f64 };
        let share = if lines == 0 { 0.0 } else { cited as f64 / lines as f64 };
        let scores: serde_json::Map<String, serde_json::Value> = self
            .rubric
            .scores(coverage, share)
            .into_iter()
            .map(|(d, v)| (d.as_str().to_string(), json!(v)))
            .collect();
        Ok(serde_json::Value::Object(scores).to_string())
    }

    fn write_section(&self, user: &str) -> String {
        let outline = between(user, "Current Section Outline:\n", &["\nSupporting Evidence:\n"]).unwrap_or("");
        let evidence = between(user, "\nSupporting Evidence:\n", &[]).unwrap_or("");
        let mut out = Vec::new();
        for line in outline.lines() {
            let marker = line.split_whitespace().next().unwrap_or("");
            if marker.starts_with(|c: char| c.is_ascii_digit()) {
                let depth = marker.trim_end_matches('.').split('.').count();
                out.push(format!("{} {line}", "#".repeat(depth + 1)));
            } else if let Some((_, text)) = line.split_once(". ") {
                out.push(text.to_string());
            }
        }
        let ids: Vec<&str> = evidence
            .lines()
            .filter_map(|l| l.strip_prefix('[')?.split_once(']').map(|(n, _)| n))
            .filter(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()))
            .collect();
        if !ids.is_empty() {
            out.push(format!("Drawn from [{}].", ids.join(", ")));
        }
        out.join("\n")
    }
}

fn add_fact(parent: &mut OutlineNode, f: &Fact, id: EvidenceId) {
    let title = f.title();
    if let Some(c) = parent.children.iter_mut().find(|c| c.title == title) {
        c.citations.insert(id);
        return;
    }
    let Marker::Section(path) = &parent.marker else { return };
    let mut p = path.clone();
    p.push(parent.children.len() as u32 + 1);
    parent.children.push(OutlineNode {
        marker: Marker::Section(p),
        title,
        citations: BTreeSet::from([id]),
        children: Vec::new(),
    });
}

impl ChatProvider for SimChat {
    fn complete(&self, req: &ChatRequest) -> Result<String, ProviderError> {
        let u = req.user.as_str();
        match req.template.as_str() {
            "create_outline" => Ok(self.create_outline()),
            "generate_queries" => self.generate_queries(u),
            "chain_selection" => self.chain_selection(u),
            "filter_urls" => Ok(self.filter_urls(u)),
            "extract_evidence" => Ok(self.extract_evidence(u)),
            "extract_knowledge" => self.extract_knowledge(u),
            "merge_nodes" => Ok(r#"{"clusters": []}"#.to_string()),
            "update_outline" => self.update_outline(u),
            "early_stop" => self.early_stop(u),
            "write_section" => Ok(self.write_section(u)),
            other => Err(err(other, "unknown template")),
        }
    }

    fn fast_forward(&self, history: &[ChatRequest]) {
        for r in history.iter().filter(|r| r.template == "chain_selection") {
            let _ = self.complete(r);
        }
    }
}
