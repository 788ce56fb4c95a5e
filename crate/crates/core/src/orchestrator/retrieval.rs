use std::collections::BTreeMap;

use super::{Engine, OrchestratorError, Result, RunState};
use crate::evidence::{normalize_url, AddOutcome, EvidenceId};
use crate::kg::{cluster_semantic, detect_communities_with, KnowledgeGraph, MergeCluster};
use crate::providers::parse::{parse_evidence_judgement, parse_extraction, parse_index_list, parse_merge};
use crate::providers::{SearchResult, TemplateName};

/// Evidence ids added per query, in query order.
pub type QueryGroups = Vec<(String, Vec<EvidenceId>)>;

impl Engine {
    /// Search, first-stage filter, fetch, second-stage extraction. Queries and
    /// results are handled strictly in order so ids are reproducible.
    pub fn search(&mut self, s: &mut RunState, queries: &[String]) -> Result<QueryGroups> {
        let mut groups = Vec::new();
        let iteration = s.iteration as u32;
        for q in queries {
            let results = self
                .providers
                .search
                .search(q, self.config.urls_per_query)
                .map_err(|source| OrchestratorError::Provider { step: "search", source })?;
            let mut cands: Vec<SearchResult> = Vec::new();
            for r in results.into_iter().take(self.config.urls_per_query) {
                let key = normalize_url(&r.url);
                if s.visited_urls.contains(&key) || s.bank.has_seen(&r.url) || cands.iter().any(|c| normalize_url(&c.url) == key) {
                    continue;
                }
                cands.push(r);
            }
            let mut ids = Vec::new();
            if !cands.is_empty() {
                for i in self.filter_urls(&s.root_query, q, &cands)? {
                    let r = &cands[i];
                    s.visited_urls.insert(normalize_url(&r.url));
                    let page = match self.providers.fetch.fetch(&r.url) {
                        Ok(p) => p,
                        Err(e) => {
                            log::warn!("skipping {}: {e}", r.url);
                            continue;
                        }
                    };
                    let system = self.system(TemplateName::ExtractEvidence, &[])?;
                    let user = format!(
                        "Root Query: {}\nSearch Query: {}\nPage Title: {}\nPage URL: {}\nPage Content:\n{}",
                        s.root_query, q, r.title, r.url, page
                    );
                    let reasks = self.config.max_reasks;
                    let j = self.ask(TemplateName::ExtractEvidence, system, user, reasks, |text| {
                        parse_evidence_judgement(text).map_err(|e| e.to_string())
                    })?;
                    if !j.useful {
                        continue;
                    }
                    if let AddOutcome::Added(id) = s.bank.add(&r.url, &r.title, q, &j.summary, &j.content, iteration)? {
                        ids.push(id);
                    }
                }
            }
            s.executed_queries.push(q.clone());
            groups.push((q.clone(), ids));
        }
        Ok(groups)
    }

    fn filter_urls(&mut self, root: &str, q: &str, cands: &[SearchResult]) -> Result<Vec<usize>> {
        let system = self.system(TemplateName::FilterUrls, &[])?;
        let lines: Vec<String> = cands
            .iter()
            .enumerate()
            .map(|(i, c)| format!("[{i}] {} | {} | {}", c.title, c.url, c.snippet))
            .collect();
        let user = format!("Root Query: {root}\nSearch Query: {q}\nCandidates:\n{}", lines.join("\n"));
        let n = cands.len();
        let reasks = self.config.max_reasks;
        let mut picks = self.ask(TemplateName::FilterUrls, system, user, reasks, |text| {
            parse_index_list(text, n).map_err(|e| e.to_string())
        })?;
        picks.sort_unstable();
        Ok(picks)
    }

    /// Extraction per query group, canonicalizing merge, semantic clusters,
    /// communities.
    pub fn update_kg(&mut self, s: &mut RunState, mut kg: KnowledgeGraph, groups: &QueryGroups) -> Result<KnowledgeGraph> {
        let reasks = self.config.max_reasks;
        for (q, ids) in groups.iter().filter(|g| !g.1.is_empty()) {
            let mut labels = BTreeMap::new();
            let mut statements = Vec::new();
            for (k, id) in ids.iter().enumerate() {
                let u = s.bank.get(*id)?;
                let label = format!("EN{}", k + 1);
                statements.push(format!("{label}: {} {}", u.summary, u.content).trim_end().to_string());
                labels.insert(label, *id);
            }
            let mut user = format!(
                "Root Query: {}\nSearch Query: {}\nEvidence Statements:\n{}",
                s.root_query,
                q,
                statements.join("\n")
            );
            if !kg.is_empty() {
                user.push_str(&format!("\nCurrent Knowledge Graph:\n{}", kg.to_prompt_json()));
            }
            let system = self.system(TemplateName::ExtractKnowledge, &[])?;
            s.kg_ops += 1;
            let base = kg.clone();
            kg = self.ask(TemplateName::ExtractKnowledge, system, user, reasks, |text| {
                let r = parse_extraction(text, &base).map_err(|e| e.to_string())?;
                let mut next = base.clone();
                next.apply_extraction(&r, &labels).map_err(|e| e.to_string())?;
                Ok(next)
            })?;
        }

        if kg.nodes().filter(|n| !n.is_core_entity).count() >= 2 {
            s.kg_ops += 1;
            let system = self.system(TemplateName::MergeNodes, &[])?;
            let mut user = format!("Root Query: {}\nCurrent Knowledge Graph:\n{}", s.root_query, kg.to_prompt_json());
            // Embedding clusters of concept nodes are offered as merge candidates.
            kg.ensure_embeddings(self.providers.embed.as_ref())?;
            let mut groups: BTreeMap<u32, Vec<String>> = BTreeMap::new();
            for (n, c) in cluster_semantic(&kg, self.config.cluster_threshold)? {
                if !kg.node(n)?.is_core_entity {
                    groups.entry(c).or_default().push(n.to_string());
                }
            }
            let lines: Vec<String> = groups.into_values().filter(|g| g.len() >= 2).map(|g| g.join(", ")).collect();
            if !lines.is_empty() {
                user.push_str(&format!("\nCandidate Groups:\n{}", lines.join("\n")));
            }
            let base = kg.clone();
            kg = self.ask(TemplateName::MergeNodes, system, user, reasks, |text| {
                let clusters: Vec<MergeCluster> = parse_merge(text)
                    .map_err(|e| e.to_string())?
                    .into_iter()
                    .map(|p| MergeCluster { representative: p.representative_concept, sources: p.source_node_ids })
                    .collect();
                let mut next = base.clone();
                next.merge_nodes(&clusters).map_err(|e| e.to_string())?;
                Ok(next)
            })?;
        }

        s.kg_ops += 1;
        kg.ensure_embeddings(self.providers.embed.as_ref())?;
        let clusters = cluster_semantic(&kg, self.config.cluster_threshold)?;
        kg.apply_clusters(&clusters);
        let p = detect_communities_with(&kg, self.config.seed, self.config.leiden_resolution);
        kg.apply_partition(&p)?;
        Ok(kg)
    }
}
