//! The report plan: numbered plain-text outline, revisions, citation persistence.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evidence::{EvidenceBank, EvidenceId};
use crate::providers::{cosine, Embedder, ProviderError};

pub const MAX_DEPTH: usize = 3;

static CITATION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(.*?)\s*<citation>(.*?)</citation>\s*$").unwrap());
static SECTION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(\d+(?:\.\d+)*)\.?(?:\s+|$)(.*)$").unwrap());
static SECTION_TIGHT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(\d+(?:\.\d+)*)\.(\S.*)$").unwrap());
static POINT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^([a-z])\.\s*(.+)$").unwrap());

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OutlineError {
    #[error("outline is empty or has no title line")]
    MissingTitle,
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("revision cites {0}, which is not in the evidence bank")]
    UnknownEvidence(EvidenceId),
    #[error("revision has no nodes but the previous outline carries citations")]
    NoAttachmentTarget,
    #[error("embedding provider failed: {0}")]
    Embedding(#[from] ProviderError),
}

/// Decimal path (`2.1.3`) for headings, a letter for content points.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Marker {
    Section(Vec<u32>),
    Point(char),
}

impl fmt::Display for Marker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Marker::Section(p) if p.len() == 1 => write!(f, "{}.", p[0]),
            Marker::Section(p) => {
                let parts: Vec<String> = p.iter().map(u32::to_string).collect();
                write!(f, "{}", parts.join("."))
            }
            Marker::Point(c) => write!(f, "{c}."),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutlineNode {
    pub marker: Marker,
    pub title: String,
    pub citations: BTreeSet<EvidenceId>,
    pub children: Vec<OutlineNode>,
}

impl OutlineNode {
    pub fn is_heading(&self) -> bool {
        matches!(self.marker, Marker::Section(_))
    }

    /// Decimal path as text ("2.1"), or the letter for content points.
    pub fn number(&self) -> String {
        match &self.marker {
            Marker::Section(p) => p.iter().map(u32::to_string).collect::<Vec<_>>().join("."),
            Marker::Point(c) => c.to_string(),
        }
    }

    fn render_into(&self, out: &mut Vec<String>, with_citations: bool) {
        let mut line = format!("{} {}", self.marker, self.title);
        if with_citations && !self.citations.is_empty() {
            line.push_str(&format!(" <citation>{}</citation>", join_ids(&self.citations)));
        }
        out.push(line);
        for c in &self.children {
            c.render_into(out, with_citations);
        }
    }

    fn collect_citations(&self, acc: &mut BTreeSet<EvidenceId>) {
        acc.extend(self.citations.iter().copied());
        for c in &self.children {
            c.collect_citations(acc);
        }
    }

    pub fn subtree_citations(&self) -> BTreeSet<EvidenceId> {
        let mut acc = BTreeSet::new();
        self.collect_citations(&mut acc);
        acc
    }
}

pub fn join_ids(ids: &BTreeSet<EvidenceId>) -> String {
    ids.iter().map(EvidenceId::to_string).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OutlineGraph {
    pub title: String,
    pub roots: Vec<OutlineNode>,
}

/// A node in document order with its nesting depth (roots are depth 1).
#[derive(Debug, Clone, Copy)]
pub struct Visit<'a> {
    pub node: &'a OutlineNode,
    pub depth: usize,
    pub address: usize,
}

impl OutlineGraph {
    pub fn parse(text: &str) -> Result<Self, OutlineError> {
        parse_outline(text)
    }

    pub fn render(&self, with_citations: bool) -> String {
        render_outline(self, with_citations)
    }

    pub fn all_citations(&self) -> BTreeSet<EvidenceId> {
        let mut acc = BTreeSet::new();
        for r in &self.roots {
            r.collect_citations(&mut acc);
        }
        acc
    }

    pub fn has_citations(&self) -> bool {
        !self.all_citations().is_empty()
    }

    /// Pre-order traversal.
    pub fn nodes(&self) -> Vec<Visit<'_>> {
        fn walk<'a>(n: &'a OutlineNode, depth: usize, out: &mut Vec<Visit<'a>>) {
            let address = out.len();
            out.push(Visit { node: n, depth, address });
            for c in &n.children {
                walk(c, depth + 1, out);
            }
        }
        let mut out = Vec::new();
        for r in &self.roots {
            walk(r, 1, &mut out);
        }
        out
    }

    pub fn node_count(&self) -> usize {
        self.nodes().len()
    }

    /// Mutable access to the `k`-th node in pre-order.
    pub fn node_mut(&mut self, k: usize) -> Option<&mut OutlineNode> {
        fn walk<'a>(n: &'a mut OutlineNode, k: &mut usize) -> Option<&'a mut OutlineNode> {
            if *k == 0 {
                return Some(n);
            }
            *k -= 1;
            for c in n.children.iter_mut() {
                if let Some(hit) = walk(c, k) {
                    return Some(hit);
                }
            }
            None
        }
        let mut k = k;
        for r in self.roots.iter_mut() {
            if let Some(hit) = walk(r, &mut k) {
                return Some(hit);
            }
        }
        None
    }

    /// Strip every citation marker.
    pub fn without_citations(&self) -> OutlineGraph {
        fn strip(n: &OutlineNode) -> OutlineNode {
            OutlineNode {
                marker: n.marker.clone(),
                title: n.title.clone(),
                citations: BTreeSet::new(),
                children: n.children.iter().map(strip).collect(),
            }
        }
        OutlineGraph { title: self.title.clone(), roots: self.roots.iter().map(strip).collect() }
    }
}

impl fmt::Display for OutlineGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(true))
    }
}

impl Serialize for OutlineGraph {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.title.is_empty() && self.roots.is_empty() {
            s.serialize_str("")
        } else {
            s.serialize_str(&self.render(true))
        }
    }
}

impl<'de> Deserialize<'de> for OutlineGraph {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        if text.trim().is_empty() {
            return Ok(OutlineGraph::default());
        }
        parse_outline(&text).map_err(serde::de::Error::custom)
    }
}

fn parse_citations(body: &str, line: usize) -> Result<BTreeSet<EvidenceId>, OutlineError> {
    let mut out = BTreeSet::new();
    for part in body.split(',') {
        let p = part.trim();
        if p.is_empty() {
            continue;
        }
        let id = p.parse::<EvidenceId>().map_err(|_| OutlineError::Parse {
            line,
            reason: format!("malformed citation id {p:?}"),
        })?;
        out.insert(id);
    }
    Ok(out)
}

fn strip_emphasis(s: &str) -> &str {
    let t = s.trim();
    t.strip_prefix("**").and_then(|x| x.strip_suffix("**")).unwrap_or(t).trim()
}

/// Lenient reader for the numbered outline format. Tolerates indentation, blank
/// lines, `1.Title` without a space and markdown-escaped ids; rejects gaps,
/// depth over three levels and letters without a heading.
pub fn parse_outline(text: &str) -> Result<OutlineGraph, OutlineError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, title_line) = lines.next().ok_or(OutlineError::MissingTitle)?;
    let title = strip_emphasis(title_line).to_string();
    if title.is_empty() {
        return Err(OutlineError::MissingTitle);
    }
    let mut og = OutlineGraph { title, roots: Vec::new() };
    // Child indexes of the currently open heading chain, one per depth.
    let mut open: Vec<usize> = Vec::new();

    for (idx, raw) in lines {
        let lineno = idx + 1;
        let err = |reason: String| OutlineError::Parse { line: lineno, reason };
        let trimmed = raw.trim();
        let (head, citations) = match CITATION.captures(trimmed) {
            Some(c) => (c.get(1).unwrap().as_str().trim().to_string(), parse_citations(&c[2], lineno)?),
            None => {
                if trimmed.contains("<citation>") || trimmed.contains("</citation>") {
                    return Err(err("unterminated or misplaced citation marker".into()));
                }
                (trimmed.to_string(), BTreeSet::new())
            }
        };

        if let Some(c) = POINT.captures(&head) {
            let letter = c[1].chars().next().unwrap();
            let title = c[2].trim().to_string();
            if open.is_empty() {
                return Err(err(format!("content point {letter}. has no preceding heading")));
            }
            let parent = open_node(&mut og, &open);
            let expected = (b'a' + parent.children.iter().filter(|n| !n.is_heading()).count() as u8) as char;
            if letter != expected {
                return Err(err(format!("content point {letter}. out of order, expected {expected}.")));
            }
            parent.children.push(OutlineNode {
                marker: Marker::Point(letter),
                title,
                citations,
                children: Vec::new(),
            });
            continue;
        }

        let caps = SECTION.captures(&head).or_else(|| SECTION_TIGHT.captures(&head));
        let Some(c) = caps else {
            return Err(err(format!("unrecognized line {head:?}")));
        };
        let path: Vec<u32> = c[1]
            .split('.')
            .map(|p| p.parse::<u32>())
            .collect::<Result<_, _>>()
            .map_err(|_| err("numbering component out of range".into()))?;
        let title = c[2].trim().to_string();
        if path.len() > MAX_DEPTH {
            return Err(err(format!("heading {} is deeper than {MAX_DEPTH} levels", c[1].to_string())));
        }
        let depth = path.len();
        let siblings: &mut Vec<OutlineNode> = if depth == 1 {
            &mut og.roots
        } else {
            if open.len() < depth - 1 {
                return Err(err(format!("heading {} has no parent heading", &c[1])));
            }
            let parent = open_node(&mut og, &open[..depth - 1]);
            let Marker::Section(pp) = &parent.marker else { unreachable!() };
            if pp[..] != path[..depth - 1] {
                return Err(err(format!(
                    "heading {} does not extend the open heading {}",
                    &c[1],
                    parent.number()
                )));
            }
            &mut parent.children
        };
        let expected = siblings.iter().filter(|n| n.is_heading()).count() as u32 + 1;
        if *path.last().unwrap() != expected {
            return Err(err(format!("numbering gap at {}, expected component {expected}", &c[1])));
        }
        siblings.push(OutlineNode { marker: Marker::Section(path), title, citations, children: Vec::new() });
        let pos = siblings.len() - 1;
        open.truncate(depth - 1);
        open.push(pos);
    }
    Ok(og)
}

fn open_node<'a>(og: &'a mut OutlineGraph, chain: &[usize]) -> &'a mut OutlineNode {
    let mut node = &mut og.roots[chain[0]];
    for &i in &chain[1..] {
        node = &mut node.children[i];
    }
    node
}

pub fn render_outline(og: &OutlineGraph, with_citations: bool) -> String {
    let mut lines = vec![og.title.clone()];
    for r in &og.roots {
        r.render_into(&mut lines, with_citations);
    }
    lines.join("\n")
}

pub fn all_citations(og: &OutlineGraph) -> BTreeSet<EvidenceId> {
    og.all_citations()
}

/// What apply_revision had to repair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RevisionReport {
    /// Evidence id, the number of its former host, the number of its new host.
    pub reattached: Vec<(EvidenceId, String, String)>,
}

/// Parse a revised outline and re-attach every citation the revision dropped to
/// the revised node whose title is closest to the id's former host.
pub fn apply_revision(
    old: &OutlineGraph,
    revised_text: &str,
    bank: &EvidenceBank,
    embedder: &dyn Embedder,
) -> Result<(OutlineGraph, RevisionReport), OutlineError> {
    let mut new = parse_outline(revised_text)?;
    if let Some(bad) = new.all_citations().into_iter().find(|id| !bank.contains(*id)) {
        return Err(OutlineError::UnknownEvidence(bad));
    }
    let old_ids = old.all_citations();
    let new_ids = new.all_citations();
    let lost: Vec<EvidenceId> = old_ids.difference(&new_ids).copied().collect();
    let mut report = RevisionReport::default();
    if lost.is_empty() {
        return Ok((new, report));
    }
    let candidates: Vec<(usize, String, String)> = new
        .nodes()
        .iter()
        .map(|v| (v.depth, v.node.title.clone(), v.node.number()))
        .collect();
    if candidates.is_empty() {
        return Err(OutlineError::NoAttachmentTarget);
    }
    // Former host of each lost id: the first node in document order citing it.
    let old_nodes = old.nodes();
    let mut hosts: BTreeMap<EvidenceId, &OutlineNode> = BTreeMap::new();
    for id in &lost {
        let host = old_nodes.iter().find(|v| v.node.citations.contains(id)).unwrap();
        hosts.insert(*id, host.node);
    }
    let mut texts: Vec<String> = candidates.iter().map(|c| c.1.clone()).collect();
    texts.extend(hosts.values().map(|n| n.title.clone()));
    texts.sort();
    texts.dedup();
    let vecs = embedder.embed(&texts)?;
    let emb: BTreeMap<&str, &Vec<f64>> = texts.iter().map(String::as_str).zip(vecs.iter()).collect();

    for id in lost {
        let host = hosts[&id];
        let hv = emb[host.title.as_str()];
        let mut best: Option<(usize, f64, usize)> = None;
        for (k, (depth, title, _)) in candidates.iter().enumerate() {
            let sim = cosine(hv, emb[title.as_str()]);
            let better = match best {
                None => true,
                Some((_, bs, bd)) => sim > bs || (sim == bs && *depth < bd),
            };
            if better {
                best = Some((k, sim, *depth));
            }
        }
        let (k, _, _) = best.unwrap();
        new.node_mut(k).unwrap().citations.insert(id);
        report.reattached.push((id, host.number(), candidates[k].2.clone()));
    }
    Ok((new, report))
}
