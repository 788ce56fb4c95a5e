//! Deterministic offline providers driven by checked-in fixture files.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatProvider, ChatRequest, FetchProvider, ProviderError, SearchProvider, SearchResult};
use crate::evidence::normalize_url;
use crate::text::normalize_query;

/// One canned response. All given conditions must hold for a match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contains: Vec<String>,
    pub response: String,
    /// Repeating entries are never consumed.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub repeat: bool,
}

impl ScriptEntry {
    fn matches(&self, req: &ChatRequest) -> bool {
        if let Some(t) = &self.template {
            if t != &req.template {
                return false;
            }
        }
        self.contains
            .iter()
            .all(|needle| req.user.contains(needle.as_str()) || req.system.contains(needle.as_str()))
    }
}

/// Replays canned responses: the first unconsumed entry whose matcher fires wins.
/// Calls are serialized through a mutex so replay order is deterministic.
#[derive(Debug)]
pub struct ScriptedChat {
    entries: Mutex<Vec<(ScriptEntry, bool)>>,
}

impl ScriptedChat {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        Self { entries: Mutex::new(entries.into_iter().map(|e| (e, false)).collect()) }
    }

    pub fn from_json(text: &str) -> Result<Self, ProviderError> {
        let entries: Vec<ScriptEntry> =
            serde_json::from_str(text).map_err(|e| ProviderError::BadFixture(format!("chat script: {e}")))?;
        Ok(Self::new(entries))
    }

    pub fn from_file(path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProviderError::BadFixture(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Non-repeating entries not yet consumed.
    pub fn remaining(&self) -> usize {
        let g = self.entries.lock().unwrap_or_else(|p| p.into_inner());
        g.iter().filter(|(e, used)| !e.repeat && !used).count()
    }
}

impl ChatProvider for ScriptedChat {
    fn fast_forward(&self, history: &[ChatRequest]) {
        for req in history {
            let _ = self.complete(req);
        }
    }

    fn complete(&self, req: &ChatRequest) -> Result<String, ProviderError> {
        let mut g = self.entries.lock().unwrap_or_else(|p| p.into_inner());
        for (entry, used) in g.iter_mut() {
            if (*used && !entry.repeat) || !entry.matches(req) {
                continue;
            }
            if !entry.repeat {
                *used = true;
            }
            return Ok(entry.response.clone());
        }
        let live = g.iter().any(|(e, used)| e.repeat || !used);
        if live {
            let head: String = req.user.chars().take(160).collect();
            Err(ProviderError::UnmatchedPrompt { template: req.template.clone(), head })
        } else {
            Err(ProviderError::ScriptExhausted { template: req.template.clone() })
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FixtureHit {
    url: String,
    #[serde(default)]
    title: String,
    #[serde(default)]
    snippet: String,
}

/// Search results keyed by normalized query text; unknown queries return nothing.
#[derive(Debug, Clone, Default)]
pub struct FixtureSearch {
    results: BTreeMap<String, Vec<FixtureHit>>,
}

impl FixtureSearch {
    pub fn from_json(text: &str) -> Result<Self, ProviderError> {
        let raw: BTreeMap<String, Vec<FixtureHit>> =
            serde_json::from_str(text).map_err(|e| ProviderError::BadFixture(format!("search fixture: {e}")))?;
        Ok(Self { results: raw.into_iter().map(|(k, v)| (normalize_query(&k), v)).collect() })
    }

    pub fn from_file(path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProviderError::BadFixture(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

impl SearchProvider for FixtureSearch {
    fn search(&self, query: &str, top_n: usize) -> Result<Vec<SearchResult>, ProviderError> {
        let hits = self.results.get(&normalize_query(query)).map(Vec::as_slice).unwrap_or(&[]);
        Ok(hits
            .iter()
            .take(top_n)
            .enumerate()
            .map(|(i, h)| SearchResult {
                url: h.url.clone(),
                title: h.title.clone(),
                snippet: h.snippet.clone(),
                rank: i as u32 + 1,
            })
            .collect())
    }
}

/// Page texts keyed by normalized url. A `null` page simulates a fetch failure.
#[derive(Debug, Clone, Default)]
pub struct FixtureFetch {
    pages: BTreeMap<String, Option<String>>,
}

impl FixtureFetch {
    pub fn from_json(text: &str) -> Result<Self, ProviderError> {
        let raw: BTreeMap<String, Option<String>> =
            serde_json::from_str(text).map_err(|e| ProviderError::BadFixture(format!("page fixture: {e}")))?;
        Ok(Self { pages: raw.into_iter().map(|(k, v)| (normalize_url(&k), v)).collect() })
    }

    pub fn from_file(path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProviderError::BadFixture(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

impl FetchProvider for FixtureFetch {
    fn fetch(&self, url: &str) -> Result<String, ProviderError> {
        match self.pages.get(&normalize_url(url)) {
            Some(Some(text)) => Ok(text.clone()),
            Some(None) => Err(ProviderError::Unavailable(format!("fetch failed for {url}"))),
            None => Err(ProviderError::NotFound(url.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(template: &str, user: &str) -> ChatRequest {
        ChatRequest { template: template.into(), system: String::new(), user: user.into() }
    }

    fn entry(template: Option<&str>, contains: &[&str], response: &str) -> ScriptEntry {
        ScriptEntry {
            template: template.map(str::to_string),
            contains: contains.iter().map(|s| s.to_string()).collect(),
            response: response.into(),
            repeat: false,
        }
    }

    #[test]
    fn one_matcher_one_call() {
        let chat = ScriptedChat::new(vec![entry(Some("a"), &[], "hello")]);
        assert_eq!(chat.complete(&req("a", "x")).unwrap(), "hello");
        assert!(matches!(chat.complete(&req("a", "x")), Err(ProviderError::ScriptExhausted { .. })));
    }

    #[test]
    fn unmatched_prompt_carries_head() {
        let chat = ScriptedChat::new(vec![entry(Some("a"), &["needle"], "r")]);
        match chat.complete(&req("a", "haystack only")) {
            Err(ProviderError::UnmatchedPrompt { template, head }) => {
                assert_eq!(template, "a");
                assert_eq!(head, "haystack only");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn first_unused_match_wins_and_repeat_persists() {
        let mut rep = entry(Some("m"), &[], "always");
        rep.repeat = true;
        let chat = ScriptedChat::new(vec![
            entry(Some("m"), &["x"], "first"),
            rep,
            entry(Some("m"), &["x"], "never"),
        ]);
        assert_eq!(chat.complete(&req("m", "x")).unwrap(), "first");
        assert_eq!(chat.complete(&req("m", "x")).unwrap(), "always");
        assert_eq!(chat.complete(&req("m", "x")).unwrap(), "always");
        assert_eq!(chat.remaining(), 1);
    }

    #[test]
    fn fixture_search_normalizes_queries_and_ranks() {
        let s = FixtureSearch::from_json(r#"{"Duan Yongping philosophy?": [{"url":"https://a"},{"url":"https://b"}]}"#).unwrap();
        let r = s.search("duan  yongping philosophy", 5).unwrap();
        assert_eq!(r.iter().map(|x| x.rank).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(s.search("duan", 5).unwrap(), vec![]);
        assert_eq!(s.search("Duan Yongping philosophy", 1).unwrap().len(), 1);
    }

    #[test]
    fn fixture_fetch_failure_modes() {
        let f = FixtureFetch::from_json(r#"{"https://a.com/x/": "page", "https://b.com": null}"#).unwrap();
        assert_eq!(f.fetch("https://A.com/x").unwrap(), "page");
        assert!(matches!(f.fetch("https://b.com"), Err(ProviderError::Unavailable(_))));
        assert!(matches!(f.fetch("https://c.com"), Err(ProviderError::NotFound(_))));
    }
}
