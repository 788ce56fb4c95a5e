//! Append-only evidence store with global URL deduplication.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Global evidence identifier, rendered as `id_N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EvidenceId(pub u32);

impl fmt::Display for EvidenceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "id_{}", self.0)
    }
}

impl FromStr for EvidenceId {
    type Err = EvidenceError;

    /// Accepts `id_N` and the markdown-escaped `id\_N`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let digits = t
            .strip_prefix("id_")
            .or_else(|| t.strip_prefix("id\\_"))
            .ok_or_else(|| EvidenceError::BadId(t.to_string()))?;
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(EvidenceError::BadId(t.to_string()));
        }
        digits
            .parse::<u32>()
            .map(EvidenceId)
            .map_err(|_| EvidenceError::BadId(t.to_string()))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvidenceError {
    #[error("evidence url is empty")]
    EmptyUrl,
    #[error("evidence query is empty")]
    EmptyQuery,
    #[error("evidence {0} not found")]
    NotFound(EvidenceId),
    #[error("malformed evidence id {0:?}")]
    BadId(String),
    #[error("corrupt evidence bank: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceUnit {
    pub id: EvidenceId,
    pub url: String,
    pub title: String,
    pub query: String,
    pub summary: String,
    pub content: String,
    pub iteration: u32,
}

/// Result of an add: either a fresh id or a rejection because the url was seen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AddOutcome {
    Added(EvidenceId),
    Duplicate,
}

impl AddOutcome {
    pub fn id(self) -> Option<EvidenceId> {
        match self {
            AddOutcome::Added(id) => Some(id),
            AddOutcome::Duplicate => None,
        }
    }
}

/// Lowercase scheme and host, drop the fragment and trailing slashes, keep the query.
pub fn normalize_url(raw: &str) -> String {
    let raw = raw.trim();
    match url::Url::parse(raw) {
        Ok(u) => {
            let mut out = format!("{}:", u.scheme());
            if let Some(host) = u.host_str() {
                out.push_str("//");
                out.push_str(host);
                if let Some(port) = u.port() {
                    out.push(':');
                    out.push_str(&port.to_string());
                }
            }
            out.push_str(u.path().trim_end_matches('/'));
            if let Some(q) = u.query() {
                out.push('?');
                out.push_str(q);
            }
            out
        }
        Err(_) => {
            let no_frag = raw.split('#').next().unwrap_or("");
            no_frag.trim_end_matches('/').to_string()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvidenceBank {
    units: Vec<EvidenceUnit>,
    seen_urls: BTreeSet<String>,
}

impl EvidenceBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(
        &mut self,
        url: &str,
        title: &str,
        query: &str,
        summary: &str,
        content: &str,
        iteration: u32,
    ) -> Result<AddOutcome, EvidenceError> {
        if url.trim().is_empty() {
            return Err(EvidenceError::EmptyUrl);
        }
        if query.trim().is_empty() {
            return Err(EvidenceError::EmptyQuery);
        }
        let key = normalize_url(url);
        if self.seen_urls.contains(&key) {
            return Ok(AddOutcome::Duplicate);
        }
        let id = EvidenceId(self.units.len() as u32 + 1);
        self.units.push(EvidenceUnit {
            id,
            url: url.trim().to_string(),
            title: title.to_string(),
            query: query.to_string(),
            summary: summary.to_string(),
            content: content.to_string(),
            iteration,
        });
        self.seen_urls.insert(key);
        Ok(AddOutcome::Added(id))
    }

    pub fn get(&self, id: EvidenceId) -> Result<&EvidenceUnit, EvidenceError> {
        if id.0 == 0 {
            return Err(EvidenceError::NotFound(id));
        }
        self.units
            .get(id.0 as usize - 1)
            .ok_or(EvidenceError::NotFound(id))
    }

    pub fn contains(&self, id: EvidenceId) -> bool {
        id.0 >= 1 && (id.0 as usize) <= self.units.len()
    }

    /// True when the normalized form of `url` is already in the bank.
    pub fn has_seen(&self, url: &str) -> bool {
        self.seen_urls.contains(&normalize_url(url))
    }

    pub fn units(&self) -> &[EvidenceUnit] {
        &self.units
    }

    /// Units with ids strictly greater than `after` (count of units already consumed).
    pub fn since(&self, after: usize) -> &[EvidenceUnit] {
        &self.units[after.min(self.units.len())..]
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn seen_urls(&self) -> &BTreeSet<String> {
        &self.seen_urls
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bank serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, EvidenceError> {
        serde_json::from_str(text).map_err(|e| EvidenceError::Corrupt(e.to_string()))
    }
}

#[derive(Serialize, Deserialize)]
struct BankDoc {
    units: Vec<EvidenceUnit>,
    seen_urls: BTreeSet<String>,
}

impl Serialize for EvidenceBank {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        BankDoc {
            units: self.units.clone(),
            seen_urls: self.seen_urls.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for EvidenceBank {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let doc = BankDoc::deserialize(d)?;
        // Rebuild through `add` so a hand-edited file cannot break the invariants.
        let mut bank = EvidenceBank::new();
        for u in &doc.units {
            let out = bank
                .add(&u.url, &u.title, &u.query, &u.summary, &u.content, u.iteration)
                .map_err(serde::de::Error::custom)?;
            if out != AddOutcome::Added(u.id) {
                return Err(serde::de::Error::custom(format!(
                    "unit {} is out of sequence or duplicates a url",
                    u.id
                )));
            }
        }
        if bank.seen_urls != doc.seen_urls {
            return Err(serde::de::Error::custom("seen_urls does not match units"));
        }
        Ok(bank)
    }
}
