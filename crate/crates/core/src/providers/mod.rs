//! External intelligence behind swappable interfaces: chat, search, fetch, embeddings.

mod embed;
mod live;
mod mock;
pub mod parse;
mod prompts;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use embed::{cosine, HashEmbedder};
pub use live::{LiveChat, LiveEmbedder, LiveFetch, LiveSearch};
pub use mock::{FixtureFetch, FixtureSearch, ScriptEntry, ScriptedChat};
pub use prompts::{render_prompt, PromptLibrary, PromptTemplate, RenderError, TemplateName};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProviderError {
    #[error("provider not configured: {0}")]
    NotConfigured(String),
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("chat script exhausted (template {template})")]
    ScriptExhausted { template: String },
    #[error("no script entry matches prompt for template {template}: {head:?}")]
    UnmatchedPrompt { template: String, head: String },
    #[error("bad fixture: {0}")]
    BadFixture(String),
}

/// One chat completion request. `template` names the prompt that produced `system`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub template: String,
    pub system: String,
    pub user: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    pub url: String,
    pub title: String,
    pub snippet: String,
    pub rank: u32,
}

pub trait ChatProvider: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<String, ProviderError>;

    /// Replay requests already answered in an earlier process so a stateful
    /// provider lines up with a resumed run. Stateless providers ignore it.
    fn fast_forward(&self, _history: &[ChatRequest]) {}
}

pub trait SearchProvider: Send + Sync {
    /// At most `top_n` results with ranks 1..=k.
    fn search(&self, query: &str, top_n: usize) -> Result<Vec<SearchResult>, ProviderError>;
}

pub trait FetchProvider: Send + Sync {
    fn fetch(&self, url: &str) -> Result<String, ProviderError>;
}

pub trait Embedder: Send + Sync {
    /// Unit-norm vectors, one per input text.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError>;
}
