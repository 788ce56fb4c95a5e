use std::collections::BTreeSet;

use super::{Engine, OrchestratorError, Result, RunState};
use crate::gap::{build_search_chains, SearchChain};
use crate::kg::{detect_communities_with, CommunityPartition};
use crate::outline::OutlineGraph;
use crate::providers::parse::{parse_chain_selection, parse_query_lines, ChainSelection};
use crate::providers::{cosine, Embedder, ProviderError, TemplateName};
use crate::text::normalize_query;

fn bullet_block(items: &[String]) -> String {
    if items.is_empty() {
        "(none)".to_string()
    } else {
        items.iter().map(|q| format!("- {q}")).collect::<Vec<_>>().join("\n")
    }
}

/// Order-preserving filter: exact duplicates after normalization and near
/// duplicates (cosine at or above `near`) of anything executed, pending or
/// already kept are dropped.
pub fn dedup_queries(
    new: &[String],
    executed: &[String],
    pending: &[String],
    embedder: &dyn Embedder,
    near: f64,
) -> std::result::Result<Vec<String>, ProviderError> {
    let mut keys: BTreeSet<String> = executed.iter().chain(pending).map(|q| normalize_query(q)).collect();
    let fresh: Vec<(String, String)> = new
        .iter()
        .map(|q| (q.trim().to_string(), normalize_query(q)))
        .filter(|(_, k)| !k.is_empty())
        .collect();
    if fresh.is_empty() {
        return Ok(Vec::new());
    }
    let prior: Vec<String> = keys.iter().cloned().collect();
    let mut texts = prior.clone();
    texts.extend(fresh.iter().map(|f| f.1.clone()));
    let vecs = embedder.embed(&texts)?;
    let mut kept_vecs: Vec<&Vec<f64>> = vecs[..prior.len()].iter().collect();
    let mut out = Vec::new();
    for (i, (text, key)) in fresh.iter().enumerate() {
        if keys.contains(key) {
            continue;
        }
        let v = &vecs[prior.len() + i];
        if kept_vecs.iter().any(|k| cosine(k, v) >= near) {
            continue;
        }
        keys.insert(key.clone());
        kept_vecs.push(v);
        out.push(text.clone());
    }
    Ok(out)
}

impl Engine {
    /// Queries for uncited outline lines, filtered locally against the logs.
    pub fn gen_queries_from_og(
        &mut self,
        og: &OutlineGraph,
        executed: &[String],
        pending: &[String],
        budget: usize,
    ) -> Result<Vec<String>> {
        if budget == 0 {
            return Err(OrchestratorError::Input("query budget must be at least 1".into()));
        }
        let system = self.system(TemplateName::GenerateQueries, &[("QUERY_NUM", budget.to_string())])?;
        let user = format!(
            "Current Outline:\n{}\n\nHistorical Search Queries (executed):\n{}\n\nPending Search Queries (planned, NOT executed yet):\n{}",
            og.render(true),
            bullet_block(executed),
            bullet_block(pending)
        );
        let lines = self.ask(TemplateName::GenerateQueries, system, user, 1, |text| {
            parse_query_lines(text, budget).map_err(|e| e.to_string())
        })?;
        let mut seen: BTreeSet<String> = executed.iter().chain(pending).map(|q| normalize_query(q)).collect();
        Ok(lines.into_iter().filter(|q| seen.insert(normalize_query(q))).collect())
    }

    /// Candidate chains from the current graph and the model's selection.
    pub fn gen_queries_from_kg(&mut self, s: &mut RunState) -> Result<(Vec<SearchChain>, ChainSelection)> {
        let mut kg = s.kg.clone().unwrap_or_default();
        s.kg_ops += 1;
        kg.ensure_embeddings(self.providers.embed.as_ref())?;
        let partition = CommunityPartition::from_annotations(&kg, self.config.seed)
            .unwrap_or_else(|| detect_communities_with(&kg, self.config.seed, self.config.leiden_resolution));
        let chains = build_search_chains(&kg, &partition, &self.config.chain_config())?;
        if chains.is_empty() {
            return Ok((chains, ChainSelection::default()));
        }
        let chain_num = self.config.kg_query_budget;
        let system = self.system(TemplateName::ChainSelection, &[("CHAIN_NUM", chain_num.to_string())])?;
        let candidates: Vec<String> = chains.iter().map(|c| c.prompt_line(&kg)).collect();
        let user = format!(
            "Root Query: {}\n\nCurrent Outline:\n{}\n\nKnowledge Graph:\n{}\n\nSearch Query Language: {}\n\nCandidate Explore Chains:\n{}",
            s.root_query,
            s.og.render(true),
            kg.to_prompt_json(),
            self.config.language,
            candidates.join("\n")
        );
        let known: BTreeSet<&str> = chains.iter().map(|c| c.chain_id.as_str()).collect();
        let selection = self.ask(TemplateName::ChainSelection, system, user, 1, |text| {
            let sel = parse_chain_selection(text, chain_num).map_err(|e| e.to_string())?;
            if let Some(bad) = sel.chains.iter().find(|c| !known.contains(c.as_str())) {
                return Err(format!("unknown chain id {bad:?}"));
            }
            Ok(sel)
        })?;
        Ok((chains, selection))
    }
}
