use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Engine, OrchestratorError, Result, RunState};
use crate::outline::{apply_revision, OutlineError, OutlineGraph};
use crate::providers::parse::{parse_scores, Dimension};
use crate::providers::TemplateName;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopReport {
    /// Loop index the check ran in.
    pub iteration: usize,
    pub scores: BTreeMap<Dimension, f64>,
    pub stop: bool,
    /// False when the scorer never produced a usable answer.
    pub parsed: bool,
}

impl EarlyStopReport {
    /// Apply the local support rule and the all-thresholds test.
    pub fn decide(
        iteration: usize,
        mut scores: BTreeMap<Dimension, f64>,
        thresholds: &BTreeMap<Dimension, f64>,
        og: &OutlineGraph,
    ) -> Self {
        let cited = og.has_citations();
        if !cited {
            scores.insert(Dimension::Support, 0.0);
        }
        // An uncited outline never stops, even under a zero support threshold.
        let stop = cited
            && Dimension::ALL
                .iter()
                .all(|d| scores.get(d).copied().unwrap_or(0.0) >= thresholds.get(d).copied().unwrap_or(100.0));
        Self { iteration, scores, stop, parsed: true }
    }
}

impl Engine {
    /// Revise the outline with evidence gathered since its last update; lost
    /// citations are re-attached by the revision step.
    pub fn update_og(&mut self, s: &mut RunState) -> Result<()> {
        let fresh = s.bank.since(s.og_synced);
        if fresh.is_empty() {
            return Ok(());
        }
        let evidence: Vec<String> = fresh.iter().map(|u| format!("{} | {} | {}", u.id, u.title, u.summary)).collect();
        let mut user = format!(
            "Root Query: {}\nCurrent Outline:\n{}\nNew Evidence:\n{}",
            s.root_query,
            s.og.render(true),
            evidence.join("\n")
        );
        if let Some(kg) = &s.kg {
            if !kg.is_empty() {
                s.kg_ops += 1;
                let rels: Vec<String> = kg.edges().map(|e| kg.representation(e)).collect();
                user.push_str(&format!("\nKnowledge Graph:\n{}", rels.join("\n")));
            }
        }
        let system = self.system(TemplateName::UpdateOutline, &[])?;
        let reasks = self.config.max_reasks;
        let embed = self.providers.embed.clone();
        let old = s.og.clone();
        let bank = s.bank.clone();
        let mut embed_failure = None;
        let outcome = self.ask(TemplateName::UpdateOutline, system, user, reasks, |text| {
            match apply_revision(&old, text, &bank, embed.as_ref()) {
                Ok(v) => Ok(v),
                Err(OutlineError::Embedding(e)) => {
                    embed_failure = Some(e.clone());
                    Ok((old.clone(), Default::default()))
                }
                Err(e) => Err(e.to_string()),
            }
        })?;
        if let Some(source) = embed_failure {
            return Err(OrchestratorError::Provider { step: "update_outline", source });
        }
        let (og, report) = outcome;
        for (id, from, to) in &report.reattached {
            log::info!("re-attached {id} from {from} to {to}");
        }
        s.og = og;
        s.og_synced = s.bank.len();
        Ok(())
    }

    pub fn evaluate_early_stop(&mut self, root_query: &str, og: &OutlineGraph, iteration: usize) -> Result<EarlyStopReport> {
        let system = self.system(TemplateName::EarlyStop, &[])?;
        let user = format!("Root Query: {root_query}\nOutline:\n{}", og.render(true));
        match self.ask(TemplateName::EarlyStop, system, user, 1, |text| parse_scores(text).map_err(|e| e.to_string())) {
            Ok(scores) => Ok(EarlyStopReport::decide(iteration, scores, &self.config.thresholds(), og)),
            Err(OrchestratorError::Malformed { reason, .. }) => {
                log::warn!("stop check unusable, continuing: {reason}");
                let scores = Dimension::ALL.iter().map(|d| (*d, 0.0)).collect();
                Ok(EarlyStopReport { iteration, scores, stop: false, parsed: false })
            }
            Err(e) => Err(e),
        }
    }
}
