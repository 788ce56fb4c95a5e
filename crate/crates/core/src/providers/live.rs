//! Interface-conformant stand-ins for networked vendors. They read their
//! credentials from the environment and refuse to run without an adapter.

use super::{ChatProvider, ChatRequest, Embedder, FetchProvider, ProviderError, SearchProvider, SearchResult};

fn not_configured(what: &str, env: &str) -> ProviderError {
    let detail = if std::env::var_os(env).is_some() {
        format!("{what}: no network adapter is compiled into this build")
    } else {
        format!("{what}: {env} is not set")
    };
    ProviderError::NotConfigured(detail)
}

#[derive(Debug, Default, Clone)]
pub struct LiveChat;
#[derive(Debug, Default, Clone)]
pub struct LiveSearch;
#[derive(Debug, Default, Clone)]
pub struct LiveFetch;
#[derive(Debug, Default, Clone)]
pub struct LiveEmbedder;

impl ChatProvider for LiveChat {
    fn complete(&self, _req: &ChatRequest) -> Result<String, ProviderError> {
        Err(not_configured("chat", "GAPGRAPH_CHAT_API_KEY"))
    }
}

impl SearchProvider for LiveSearch {
    fn search(&self, _query: &str, _top_n: usize) -> Result<Vec<SearchResult>, ProviderError> {
        Err(not_configured("search", "GAPGRAPH_SEARCH_API_KEY"))
    }
}

impl FetchProvider for LiveFetch {
    fn fetch(&self, _url: &str) -> Result<String, ProviderError> {
        Err(not_configured("fetch", "GAPGRAPH_FETCH_API_KEY"))
    }
}

impl Embedder for LiveEmbedder {
    fn embed(&self, _texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        Err(not_configured("embeddings", "GAPGRAPH_EMBED_API_KEY"))
    }
}
