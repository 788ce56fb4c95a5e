use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;

use super::{Engine, OrchestratorError, Result};
use crate::evidence::{EvidenceBank, EvidenceId};
use crate::outline::{Marker, OutlineGraph, OutlineNode};
use crate::providers::TemplateName;

static BRACKETS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[(\d+(?:\s*,\s*\d+)*)\]").unwrap());

/// Markdown heading for a numbered outline node: `1.` → `## 1. T`,
/// `1.1` → `### 1.1 T`, `1.1.1` → `#### 1.1.1 T`.
pub fn heading_line(node: &OutlineNode) -> Option<String> {
    match &node.marker {
        Marker::Section(path) => Some(format!("{} {} {}", "#".repeat(path.len() + 1), node.marker, node.title)),
        Marker::Point(_) => None,
    }
}

/// The outline lines of one top-level section, without citation markers.
pub fn section_outline(og: &OutlineGraph, root: &OutlineNode) -> String {
    let one = OutlineGraph { title: og.title.clone(), roots: vec![root.clone()] };
    one.render(false).lines().skip(1).collect::<Vec<_>>().join("\n")
}

fn headings(node: &OutlineNode, out: &mut Vec<String>) {
    if let Some(h) = heading_line(node) {
        out.push(h);
    }
    for c in &node.children {
        headings(c, out);
    }
}

/// Every numbered heading present verbatim, every bracketed id drawn from
/// `allowed`.
pub fn audit_section(text: &str, root: &OutlineNode, allowed: &BTreeSet<EvidenceId>) -> std::result::Result<(), String> {
    let mut want = Vec::new();
    headings(root, &mut want);
    let lines: BTreeSet<&str> = text.lines().map(str::trim_end).collect();
    if let Some(missing) = want.iter().find(|h| !lines.contains(h.as_str())) {
        return Err(format!("missing heading line {missing:?}"));
    }
    for cap in BRACKETS.captures_iter(text) {
        for n in cap[1].split(',') {
            let id = EvidenceId(n.trim().parse().map_err(|_| format!("bad citation {n:?}"))?);
            if !allowed.contains(&id) {
                return Err(format!("cites [{}] which this section does not provide", id.0));
            }
        }
    }
    Ok(())
}

impl Engine {
    /// One call per top-level section, previous sections passed for
    /// continuity, then a reference list of every cited unit.
    pub fn write_report(&mut self, root_query: &str, og: &OutlineGraph, bank: &EvidenceBank) -> Result<String> {
        let cited = og.all_citations();
        if let Some(bad) = cited.iter().find(|id| !bank.contains(**id)) {
            return Err(OrchestratorError::Validation(format!("outline cites {bad}, which is not in the evidence bank")));
        }
        let system = self.system(TemplateName::WriteSection, &[])?;
        let reasks = self.config.max_reasks;
        let mut sections: Vec<String> = Vec::new();
        for root in &og.roots {
            let ids = root.subtree_citations();
            let mut evidence = Vec::new();
            for id in &ids {
                let u = bank.get(*id)?;
                evidence.push(format!("[{}] {} ({})\n{}\n{}", id.0, u.title, u.url, u.summary, u.content));
            }
            let previous = if sections.is_empty() { "(none)".to_string() } else { sections.join("\n\n") };
            let user = format!(
                "Root Query: {root_query}\nReport Title: {}\nPrevious Sections:\n{previous}\nCurrent Section Outline:\n{}\nSupporting Evidence:\n{}",
                og.title,
                section_outline(og, root),
                if evidence.is_empty() { "(none)".to_string() } else { evidence.join("\n\n") }
            );
            let text = self.ask(TemplateName::WriteSection, system.clone(), user, reasks, |text| {
                audit_section(text, root, &ids)?;
                Ok(text.trim().to_string())
            })?;
            sections.push(text);
        }
        let mut out = format!("# {}\n\n", og.title);
        for s in &sections {
            out.push_str(s);
            out.push_str("\n\n");
        }
        out.push_str("## References\n\n");
        for id in &cited {
            let u = bank.get(*id)?;
            out.push_str(&format!("[{}] {}. {}\n", id.0, u.title, u.url));
        }
        Ok(out)
    }
}
