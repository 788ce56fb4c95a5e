//! Run configuration: a flat TOML document whose keys mirror [`RunConfig`].

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gap::ChainConfig;
use crate::providers::parse::Dimension;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read config {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("invalid config: {0}")]
    Syntax(String),
    #[error("invalid config value for {key}: {reason}")]
    Invalid { key: &'static str, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "dualgraph")]
    DualGraph,
    #[serde(rename = "outline-only")]
    OutlineOnly,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::DualGraph => "dualgraph",
            Variant::OutlineOnly => "outline-only",
        })
    }
}

impl FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "dualgraph" => Ok(Variant::DualGraph),
            "outline-only" => Ok(Variant::OutlineOnly),
            other => Err(format!("unknown variant {other:?} (expected dualgraph or outline-only)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Mock,
    Live,
}

impl FromStr for ProviderKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mock" => Ok(ProviderKind::Mock),
            "live" => Ok(ProviderKind::Live),
            other => Err(format!("unknown provider set {other:?} (expected mock or live)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub max_iter: usize,
    pub og_query_budget: usize,
    /// Upper bound on selected chains and on KG-derived queries.
    pub kg_query_budget: usize,
    /// Candidate chains built before selection.
    pub chain_candidates: usize,
    pub urls_per_query: usize,
    pub enrich_threshold: usize,
    pub sbm_alpha: f64,
    pub leiden_resolution: f64,
    pub cluster_threshold: f64,
    pub near_dup_threshold: f64,
    /// First loop index at which the stop check runs.
    pub early_stop_from_iteration: usize,
    pub stop_instruction_following: f64,
    pub stop_depth: f64,
    pub stop_breadth: f64,
    pub stop_balance: f64,
    pub stop_support: f64,
    pub stop_insightfulness: f64,
    pub max_reasks: usize,
    pub seed: u64,
    pub variant: Variant,
    pub language: String,
    pub providers: ProviderKind,
    /// Directory with script.json, search.json and pages.json for mock runs;
    /// relative paths resolve against the config file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixture_dir: Option<PathBuf>,
    /// Optional directory of prompt overrides (`<template>.txt`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompt_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            max_iter: 5,
            og_query_budget: 10,
            kg_query_budget: 10,
            chain_candidates: 20,
            urls_per_query: 5,
            enrich_threshold: crate::gap::DEFAULT_ENRICH_THRESHOLD,
            sbm_alpha: crate::gap::DEFAULT_SBM_ALPHA,
            leiden_resolution: crate::kg::DEFAULT_RESOLUTION,
            cluster_threshold: crate::kg::DEFAULT_CLUSTER_THRESHOLD,
            near_dup_threshold: 0.95,
            early_stop_from_iteration: 1,
            stop_instruction_following: 75.0,
            stop_depth: 75.0,
            stop_breadth: 75.0,
            stop_balance: 75.0,
            stop_support: 75.0,
            stop_insightfulness: 75.0,
            max_reasks: 2,
            seed: 0,
            variant: Variant::DualGraph,
            language: "en".into(),
            providers: ProviderKind::Mock,
            fixture_dir: None,
            prompt_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load and resolve relative directories against the file's location.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), reason: e.to_string() })?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for dir in [&mut cfg.fixture_dir, &mut cfg.prompt_dir].into_iter().flatten() {
            if dir.is_relative() {
                *dir = base.join(&*dir);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let budgets = [
            ("max_iter", self.max_iter),
            ("og_query_budget", self.og_query_budget),
            ("kg_query_budget", self.kg_query_budget),
            ("chain_candidates", self.chain_candidates),
            ("urls_per_query", self.urls_per_query),
        ];
        for (key, v) in budgets {
            if v < 1 {
                return Err(ConfigError::Invalid { key, reason: "must be at least 1".into() });
            }
        }
        for (dim, v) in self.thresholds() {
            if !(0.0..=100.0).contains(&v) {
                return Err(ConfigError::Invalid { key: threshold_key(dim), reason: format!("{v} outside [0, 100]") });
            }
        }
        if !(self.sbm_alpha > 0.0 && self.sbm_alpha.is_finite()) {
            return Err(ConfigError::Invalid { key: "sbm_alpha", reason: "must be positive".into() });
        }
        if !(self.leiden_resolution > 0.0 && self.leiden_resolution.is_finite()) {
            return Err(ConfigError::Invalid { key: "leiden_resolution", reason: "must be positive".into() });
        }
        for (key, v) in [("cluster_threshold", self.cluster_threshold), ("near_dup_threshold", self.near_dup_threshold)] {
            if !(-1.0..=1.0).contains(&v) {
                return Err(ConfigError::Invalid { key, reason: format!("{v} is not a cosine") });
            }
        }
        if self.language.trim().is_empty() {
            return Err(ConfigError::Invalid { key: "language", reason: "empty".into() });
        }
        Ok(())
    }

    pub fn thresholds(&self) -> BTreeMap<Dimension, f64> {
        BTreeMap::from([
            (Dimension::InstructionFollowing, self.stop_instruction_following),
            (Dimension::Depth, self.stop_depth),
            (Dimension::Breadth, self.stop_breadth),
            (Dimension::Balance, self.stop_balance),
            (Dimension::Support, self.stop_support),
            (Dimension::Insightfulness, self.stop_insightfulness),
        ])
    }

    pub fn set_all_thresholds(&mut self, v: f64) {
        self.stop_instruction_following = v;
        self.stop_depth = v;
        self.stop_breadth = v;
        self.stop_balance = v;
        self.stop_support = v;
        self.stop_insightfulness = v;
    }

    pub fn chain_config(&self) -> ChainConfig {
        ChainConfig { budget: self.chain_candidates, enrich_threshold: self.enrich_threshold, sbm_alpha: self.sbm_alpha }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

fn threshold_key(d: Dimension) -> &'static str {
    match d {
        Dimension::InstructionFollowing => "stop_instruction_following",
        Dimension::Depth => "stop_depth",
        Dimension::Breadth => "stop_breadth",
        Dimension::Balance => "stop_balance",
        Dimension::Support => "stop_support",
        Dimension::Insightfulness => "stop_insightfulness",
    }
}
