use std::collections::BTreeMap;
use std::path::Path;

use regex::Regex;
use std::sync::LazyLock;
use thiserror::Error;

static PLACEHOLDER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}").unwrap());

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RenderError {
    #[error("template {template}: no value for placeholder ${{{var}}}")]
    MissingVar { template: String, var: String },
    #[error("unknown template {0}")]
    UnknownTemplate(String),
    #[error("cannot read prompt override {path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TemplateName {
    CreateOutline,
    GenerateQueries,
    ChainSelection,
    WriteSection,
    ExtractKnowledge,
    MergeNodes,
    UpdateOutline,
    FilterUrls,
    ExtractEvidence,
    EarlyStop,
}

impl TemplateName {
    pub const ALL: [TemplateName; 10] = [
        TemplateName::CreateOutline,
        TemplateName::GenerateQueries,
        TemplateName::ChainSelection,
        TemplateName::WriteSection,
        TemplateName::ExtractKnowledge,
        TemplateName::MergeNodes,
        TemplateName::UpdateOutline,
        TemplateName::FilterUrls,
        TemplateName::ExtractEvidence,
        TemplateName::EarlyStop,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateName::CreateOutline => "create_outline",
            TemplateName::GenerateQueries => "generate_queries",
            TemplateName::ChainSelection => "chain_selection",
            TemplateName::WriteSection => "write_section",
            TemplateName::ExtractKnowledge => "extract_knowledge",
            TemplateName::MergeNodes => "merge_nodes",
            TemplateName::UpdateOutline => "update_outline",
            TemplateName::FilterUrls => "filter_urls",
            TemplateName::ExtractEvidence => "extract_evidence",
            TemplateName::EarlyStop => "early_stop",
        }
    }

    fn builtin(self) -> &'static str {
        match self {
            TemplateName::CreateOutline => include_str!("../../prompts/create_outline.txt"),
            TemplateName::GenerateQueries => include_str!("../../prompts/generate_queries.txt"),
            TemplateName::ChainSelection => include_str!("../../prompts/chain_selection.txt"),
            TemplateName::WriteSection => include_str!("../../prompts/write_section.txt"),
            TemplateName::ExtractKnowledge => include_str!("../../prompts/extract_knowledge.txt"),
            TemplateName::MergeNodes => include_str!("../../prompts/merge_nodes.txt"),
            TemplateName::UpdateOutline => include_str!("../../prompts/update_outline.txt"),
            TemplateName::FilterUrls => include_str!("../../prompts/filter_urls.txt"),
            TemplateName::ExtractEvidence => include_str!("../../prompts/extract_evidence.txt"),
            TemplateName::EarlyStop => include_str!("../../prompts/early_stop.txt"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: String,
    pub body: String,
}

impl PromptTemplate {
    pub fn new(name: impl Into<String>, body: impl Into<String>) -> Self {
        Self { name: name.into(), body: body.into() }
    }

    pub fn placeholders(&self) -> Vec<String> {
        let mut out: Vec<String> = PLACEHOLDER
            .captures_iter(&self.body)
            .map(|c| c[1].to_string())
            .collect();
        out.sort();
        out.dedup();
        out
    }
}

/// Single-pass literal substitution; substituted values are never re-scanned.
pub fn render_prompt(t: &PromptTemplate, vars: &BTreeMap<String, String>) -> Result<String, RenderError> {
    for name in t.placeholders() {
        if !vars.contains_key(&name) {
            return Err(RenderError::MissingVar { template: t.name.clone(), var: name });
        }
    }
    Ok(PLACEHOLDER
        .replace_all(&t.body, |c: &regex::Captures<'_>| vars[&c[1]].clone())
        .into_owned())
}

#[derive(Debug, Clone)]
pub struct PromptLibrary {
    templates: BTreeMap<TemplateName, PromptTemplate>,
}

impl Default for PromptLibrary {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PromptLibrary {
    pub fn builtin() -> Self {
        let templates = TemplateName::ALL
            .iter()
            .map(|n| (*n, PromptTemplate::new(n.as_str(), n.builtin())))
            .collect();
        Self { templates }
    }

    /// Replace any template that has a `<name>.txt` file in `dir`.
    pub fn with_overrides(mut self, dir: &Path) -> Result<Self, RenderError> {
        for n in TemplateName::ALL {
            let path = dir.join(format!("{}.txt", n.as_str()));
            if path.exists() {
                let body = std::fs::read_to_string(&path).map_err(|e| RenderError::Io {
                    path: path.display().to_string(),
                    reason: e.to_string(),
                })?;
                self.templates.insert(n, PromptTemplate::new(n.as_str(), body));
            }
        }
        Ok(self)
    }

    pub fn get(&self, name: TemplateName) -> &PromptTemplate {
        &self.templates[&name]
    }

    pub fn render(&self, name: TemplateName, vars: &[(&str, String)]) -> Result<String, RenderError> {
        let map = vars.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        render_prompt(self.get(name), &map)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn substitutes_literally() {
        let t = PromptTemplate::new("t", "N=${QUERY_NUM}");
        assert_eq!(render_prompt(&t, &vars(&[("QUERY_NUM", "10")])).unwrap(), "N=10");
    }

    #[test]
    fn no_placeholders_unchanged() {
        let t = PromptTemplate::new("t", "plain $text {here}");
        assert_eq!(render_prompt(&t, &vars(&[])).unwrap(), "plain $text {here}");
    }

    #[test]
    fn missing_var_is_named() {
        let t = PromptTemplate::new("t", "a ${X} b");
        assert_eq!(
            render_prompt(&t, &vars(&[])),
            Err(RenderError::MissingVar { template: "t".into(), var: "X".into() })
        );
    }

    #[test]
    fn no_recursive_expansion() {
        let t = PromptTemplate::new("t", "${A}");
        assert_eq!(render_prompt(&t, &vars(&[("A", "${B}")])).unwrap(), "${B}");
    }

    #[test]
    fn builtins_have_expected_placeholders() {
        let lib = PromptLibrary::builtin();
        assert_eq!(lib.get(TemplateName::GenerateQueries).placeholders(), vec!["QUERY_NUM"]);
        assert_eq!(lib.get(TemplateName::ChainSelection).placeholders(), vec!["CHAIN_NUM"]);
        for n in [TemplateName::CreateOutline, TemplateName::ExtractKnowledge, TemplateName::MergeNodes] {
            assert!(lib.get(n).placeholders().is_empty(), "{n:?}");
        }
        let body = lib.render(TemplateName::ChainSelection, &[("CHAIN_NUM", "10".into())]).unwrap();
        assert!(body.contains("select up to 10 chains"));
    }

    #[test]
    fn overrides_replace_only_present_files() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("early_stop.txt"), "custom").unwrap();
        let lib = PromptLibrary::builtin().with_overrides(dir.path()).unwrap();
        assert_eq!(lib.get(TemplateName::EarlyStop).body, "custom");
        assert_eq!(lib.get(TemplateName::CreateOutline).body, PromptLibrary::builtin().get(TemplateName::CreateOutline).body);
    }
}
