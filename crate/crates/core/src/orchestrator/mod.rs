//! The research loop: outline creation, query generation from both graphs,
//! retrieval, co-update of outline and knowledge graph, stop checks and the
//! section-by-section report.

mod queries;
mod report;
mod retrieval;
pub mod rundir;
mod update;

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ProviderKind, RunConfig, Variant};
use crate::evidence::{EvidenceBank, EvidenceError, EvidenceId};
use crate::gap::{GapError, SearchChain};
use crate::kg::{KgError, KnowledgeGraph};
use crate::outline::{OutlineError, OutlineGraph};
use crate::providers::{
    ChatProvider, ChatRequest, Embedder, FetchProvider, FixtureFetch, FixtureSearch, HashEmbedder, LiveChat,
    LiveEmbedder, LiveFetch, LiveSearch, PromptLibrary, ProviderError, RenderError, ScriptedChat, SearchProvider,
    TemplateName,
};

pub use queries::dedup_queries;
pub use report::{audit_section, heading_line, section_outline};
pub use update::EarlyStopReport;

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("input error: {0}")]
    Input(String),
    #[error("{step}: provider failure: {source}")]
    Provider {
        step: &'static str,
        #[source]
        source: ProviderError,
    },
    #[error("{template}: malformed model output after {attempts} attempt(s): {reason}")]
    Malformed { template: &'static str, attempts: usize, reason: String },
    #[error("validation failure: {0}")]
    Validation(String),
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Gap(#[from] GapError),
    #[error(transparent)]
    Evidence(#[from] EvidenceError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("io error: {0}")]
    Io(String),
}

impl OrchestratorError {
    /// 1 usage/io, 2 provider or malformed output, 3 validation.
    pub fn exit_code(&self) -> i32 {
        match self {
            OrchestratorError::Input(_) | OrchestratorError::Io(_) => 1,
            OrchestratorError::Provider { .. } | OrchestratorError::Malformed { .. } => 2,
            OrchestratorError::Kg(KgError::Embedding(_)) => 2,
            _ => 3,
        }
    }
}

impl From<OutlineError> for OrchestratorError {
    fn from(e: OutlineError) -> Self {
        match e {
            OutlineError::Embedding(source) => OrchestratorError::Provider { step: "outline", source },
            other => OrchestratorError::Validation(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, OrchestratorError>;

/// Named steps of the two loops, recorded in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Step {
    CreateOutline,
    GenFromOG,
    Search,
    BuildKG,
    GenFromKG,
    Dedup,
    UpdateKG,
    UpdateOG,
    EarlyStop,
    WriteReport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub iteration: usize,
    pub step: Step,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Iterating,
    Stopped,
    Exhausted,
    Reported,
}

/// Queries run for one round and what they produced. Round 0 is the bootstrap.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub queries: Vec<String>,
    pub evidence: Vec<EvidenceId>,
    /// Candidates built from the previous round's graph, with the selection.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub chains: Vec<SearchChain>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub selected_chains: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub root_query: String,
    pub variant: Variant,
    /// Completed loop iterations.
    pub iteration: usize,
    pub phase: Phase,
    pub og: OutlineGraph,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kg: Option<KnowledgeGraph>,
    pub bank: EvidenceBank,
    pub executed_queries: Vec<String>,
    pub pending_queries: Vec<String>,
    /// Normalized urls already fetched, useful or not.
    pub visited_urls: BTreeSet<String>,
    /// Bank length at the last outline update.
    pub og_synced: usize,
    pub early_stop_history: Vec<EarlyStopReport>,
    pub rounds: Vec<RoundRecord>,
    pub trace: Vec<TraceEvent>,
    pub kg_ops: u64,
    /// Transcript entries that belong to this checkpoint.
    pub transcript_len: usize,
}

impl RunState {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("state serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| OrchestratorError::Validation(format!("state.json: {e}")))
    }

    pub fn is_finished(&self) -> bool {
        self.phase != Phase::Iterating
    }

    fn trace(&mut self, step: Step) {
        let iteration = self.iteration;
        self.trace.push(TraceEvent { iteration, step });
    }
}

/// One chat exchange, kept for audit and for resuming scripted runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub seq: usize,
    pub iteration: usize,
    pub template: String,
    pub system: String,
    pub user: String,
    pub response: String,
}

impl TranscriptEntry {
    pub fn request(&self) -> ChatRequest {
        ChatRequest { template: self.template.clone(), system: self.system.clone(), user: self.user.clone() }
    }
}

#[derive(Clone)]
pub struct Providers {
    pub chat: Arc<dyn ChatProvider>,
    pub search: Arc<dyn SearchProvider>,
    pub fetch: Arc<dyn FetchProvider>,
    pub embed: Arc<dyn Embedder>,
}

impl Providers {
    /// Scripted chat, fixture search and fetch from `dir`, hash embeddings.
    pub fn mock(dir: &Path, seed: u64) -> Result<Self> {
        let bad = |source: ProviderError| OrchestratorError::Input(format!("mock fixtures: {source}"));
        Ok(Self {
            chat: Arc::new(ScriptedChat::from_file(&dir.join("script.json")).map_err(bad)?),
            search: Arc::new(FixtureSearch::from_file(&dir.join("search.json")).map_err(bad)?),
            fetch: Arc::new(FixtureFetch::from_file(&dir.join("pages.json")).map_err(bad)?),
            embed: Arc::new(HashEmbedder::new(64, seed)),
        })
    }

    pub fn live() -> Self {
        Self {
            chat: Arc::new(LiveChat),
            search: Arc::new(LiveSearch),
            fetch: Arc::new(LiveFetch),
            embed: Arc::new(LiveEmbedder),
        }
    }

    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        match cfg.providers {
            ProviderKind::Live => Ok(Self::live()),
            ProviderKind::Mock => {
                let dir = cfg
                    .fixture_dir
                    .as_ref()
                    .ok_or_else(|| OrchestratorError::Input("mock providers need fixture_dir in the config".into()))?;
                Self::mock(dir, cfg.seed)
            }
        }
    }
}

pub struct Engine {
    pub config: RunConfig,
    providers: Providers,
    prompts: PromptLibrary,
    transcript: Vec<TranscriptEntry>,
    current_iteration: usize,
}

impl Engine {
    pub fn new(config: RunConfig, providers: Providers, prompts: PromptLibrary) -> Self {
        Self { config, providers, prompts, transcript: Vec::new(), current_iteration: 0 }
    }

    /// Continue after a checkpoint: keep the transcript prefix it covers and
    /// let stateful providers skip the exchanges already made.
    pub fn resume(config: RunConfig, providers: Providers, prompts: PromptLibrary, mut transcript: Vec<TranscriptEntry>, state: &RunState) -> Self {
        transcript.truncate(state.transcript_len);
        let history: Vec<ChatRequest> = transcript.iter().map(TranscriptEntry::request).collect();
        providers.chat.fast_forward(&history);
        Self { config, providers, prompts, transcript, current_iteration: state.iteration }
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    pub fn providers(&self) -> &Providers {
        &self.providers
    }

    fn system(&self, t: TemplateName, vars: &[(&str, String)]) -> Result<String> {
        Ok(self.prompts.render(t, vars)?)
    }

    /// Ask, validate, and re-ask with the rejection reason appended until the
    /// budget runs out.
    fn ask<T>(
        &mut self,
        t: TemplateName,
        system: String,
        user: String,
        reasks: usize,
        mut accept: impl FnMut(&str) -> std::result::Result<T, String>,
    ) -> Result<T> {
        let mut prompt = user.clone();
        let mut last = String::new();
        for attempt in 0..=reasks {
            let req = ChatRequest { template: t.as_str().to_string(), system: system.clone(), user: prompt.clone() };
            let response = self
                .providers
                .chat
                .complete(&req)
                .map_err(|source| OrchestratorError::Provider { step: t.as_str(), source })?;
            self.transcript.push(TranscriptEntry {
                seq: self.transcript.len(),
                iteration: self.current_iteration,
                template: req.template,
                system: req.system,
                user: req.user,
                response: response.clone(),
            });
            match accept(&response) {
                Ok(v) => return Ok(v),
                Err(reason) => {
                    log::warn!("{} attempt {} rejected: {}", t.as_str(), attempt + 1, reason);
                    last = reason;
                    prompt = format!(
                        "{user}\n\nYour previous response was rejected: {last}\nAnswer again and follow the output format exactly."
                    );
                }
            }
        }
        Err(OrchestratorError::Malformed { template: t.as_str(), attempts: reasks + 1, reason: last })
    }

    /// Outline, first queries, first retrieval and, for the dual variant, the
    /// initial graph.
    pub fn init_run(&mut self, root_query: &str) -> Result<RunState> {
        let root_query = root_query.trim();
        if root_query.is_empty() {
            return Err(OrchestratorError::Input("root query is empty".into()));
        }
        self.current_iteration = 0;
        let mut s = RunState {
            root_query: root_query.to_string(),
            variant: self.config.variant,
            iteration: 0,
            phase: Phase::Iterating,
            og: OutlineGraph::default(),
            kg: None,
            bank: EvidenceBank::new(),
            executed_queries: Vec::new(),
            pending_queries: Vec::new(),
            visited_urls: BTreeSet::new(),
            og_synced: 0,
            early_stop_history: Vec::new(),
            rounds: Vec::new(),
            trace: Vec::new(),
            kg_ops: 0,
            transcript_len: 0,
        };
        s.trace(Step::CreateOutline);
        s.og = self.create_outline(root_query)?;
        s.trace(Step::GenFromOG);
        let budget = self.config.og_query_budget;
        let og_q = self.gen_queries_from_og(&s.og, &[], &[], budget)?;
        let q0 = dedup_queries(&og_q, &[], &[], self.providers.embed.as_ref(), self.config.near_dup_threshold)
            .map_err(|source| OrchestratorError::Provider { step: "dedup", source })?;
        s.trace(Step::Search);
        let groups = self.search(&mut s, &q0)?;
        let evidence = groups.iter().flat_map(|g| g.1.clone()).collect();
        if self.config.variant == Variant::DualGraph {
            s.trace(Step::BuildKG);
            let kg = self.update_kg(&mut s, KnowledgeGraph::new(), &groups)?;
            s.kg = Some(kg);
        }
        s.rounds.push(RoundRecord { queries: q0, evidence, ..Default::default() });
        s.transcript_len = self.transcript.len();
        Ok(s)
    }

    fn create_outline(&mut self, root_query: &str) -> Result<OutlineGraph> {
        let system = self.system(TemplateName::CreateOutline, &[])?;
        let reasks = self.config.max_reasks;
        let og = self.ask(TemplateName::CreateOutline, system, root_query.to_string(), reasks, |text| {
            OutlineGraph::parse(text).map_err(|e| e.to_string())
        })?;
        Ok(og.without_citations())
    }

    /// One loop iteration on a copy of `prev`; on error `prev` is untouched.
    pub fn run_iteration(&mut self, prev: &RunState) -> Result<RunState> {
        if prev.is_finished() {
            return Err(OrchestratorError::Input(format!("run already finished ({:?})", prev.phase)));
        }
        if prev.iteration >= self.config.max_iter {
            return Err(OrchestratorError::Input("iteration budget exhausted".into()));
        }
        self.current_iteration = prev.iteration;
        let mut s = prev.clone();
        match self.config.variant {
            Variant::DualGraph => self.dual_iteration(&mut s)?,
            Variant::OutlineOnly => self.outline_only_iteration(&mut s)?,
        }
        s.iteration += 1;
        let stopped = s.early_stop_history.last().is_some_and(|r| r.iteration == prev.iteration && r.stop);
        s.phase = if stopped {
            Phase::Stopped
        } else if s.iteration >= self.config.max_iter {
            Phase::Exhausted
        } else {
            Phase::Iterating
        };
        s.transcript_len = self.transcript.len();
        Ok(s)
    }

    fn dual_iteration(&mut self, s: &mut RunState) -> Result<()> {
        let t = s.iteration;
        s.trace(Step::GenFromKG);
        let (chains, selection) = self.gen_queries_from_kg(s)?;
        s.pending_queries = selection.search_queries.clone();
        let mut og_q = Vec::new();
        if t > 0 {
            s.trace(Step::GenFromOG);
            let budget = self.config.og_query_budget;
            og_q = self.gen_queries_from_og(&s.og, &s.executed_queries, &s.pending_queries, budget)?;
        }
        s.trace(Step::Dedup);
        let mut all = selection.search_queries.clone();
        all.extend(og_q);
        let q = dedup_queries(&all, &s.executed_queries, &[], self.providers.embed.as_ref(), self.config.near_dup_threshold)
            .map_err(|source| OrchestratorError::Provider { step: "dedup", source })?;
        s.pending_queries = q.clone();
        s.trace(Step::Search);
        let groups = self.search(s, &q)?;
        s.pending_queries.clear();
        s.trace(Step::UpdateKG);
        let kg = s.kg.take().unwrap_or_default();
        let kg = self.update_kg(s, kg, &groups)?;
        s.kg = Some(kg);
        s.trace(Step::UpdateOG);
        self.update_og(s)?;
        if t >= self.config.early_stop_from_iteration {
            s.trace(Step::EarlyStop);
            let report = self.evaluate_early_stop(&s.root_query, &s.og, t)?;
            s.early_stop_history.push(report);
        }
        s.rounds.push(RoundRecord {
            queries: q,
            evidence: groups.iter().flat_map(|g| g.1.clone()).collect(),
            chains,
            selected_chains: selection.chains,
        });
        Ok(())
    }

    fn outline_only_iteration(&mut self, s: &mut RunState) -> Result<()> {
        let t = s.iteration;
        s.trace(Step::UpdateOG);
        self.update_og(s)?;
        s.trace(Step::GenFromOG);
        let budget = self.config.og_query_budget;
        let og_q = self.gen_queries_from_og(&s.og, &s.executed_queries, &[], budget)?;
        let q = dedup_queries(&og_q, &s.executed_queries, &[], self.providers.embed.as_ref(), self.config.near_dup_threshold)
            .map_err(|source| OrchestratorError::Provider { step: "dedup", source })?;
        s.trace(Step::Search);
        let groups = self.search(s, &q)?;
        if t >= self.config.early_stop_from_iteration {
            s.trace(Step::EarlyStop);
            let report = self.evaluate_early_stop(&s.root_query, &s.og, t)?;
            s.early_stop_history.push(report);
        }
        s.rounds.push(RoundRecord { queries: q, evidence: groups.iter().flat_map(|g| g.1.clone()).collect(), ..Default::default() });
        Ok(())
    }

    /// Iterate until a stop, the budget, or an error; `checkpoint` sees every
    /// completed state. Returns the final state and the report text.
    pub fn run_to_end(
        &mut self,
        mut state: RunState,
        checkpoint: &mut dyn FnMut(&RunState, &Engine) -> Result<()>,
    ) -> Result<(RunState, String)> {
        while state.phase == Phase::Iterating && state.iteration < self.config.max_iter {
            state = self.run_iteration(&state)?;
            checkpoint(&state, self)?;
        }
        if state.phase == Phase::Iterating {
            state.phase = Phase::Exhausted;
        }
        self.current_iteration = state.iteration;
        state.trace(Step::WriteReport);
        let report = self.write_report(&state.root_query, &state.og, &state.bank)?;
        state.phase = Phase::Reported;
        state.transcript_len = self.transcript.len();
        checkpoint(&state, self)?;
        Ok((state, report))
    }
}
