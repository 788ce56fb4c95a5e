//! Small text helpers shared across modules.

/// Casefold, collapse whitespace, strip trailing punctuation.
pub fn normalize_query(q: &str) -> String {
    let folded = q.to_lowercase();
    let collapsed = folded.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_end_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace() || "？。！，".contains(c))
        .to_string()
}

/// Strip one surrounding markdown code fence, if present.
pub fn strip_code_fence(text: &str) -> &str {
    let t = text.trim();
    if let Some(rest) = t.strip_prefix("```") {
        // Drop the info string (e.g. "json") on the opening line.
        let body = match rest.find('\n') {
            Some(i) => &rest[i + 1..],
            None => rest,
        };
        let body = body.trim_end();
        let body = body.strip_suffix("```").unwrap_or(body);
        body.trim()
    } else {
        t
    }
}
