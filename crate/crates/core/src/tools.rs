//! The two agent tools over a pluggable web backend, producing observation
//! text in the exact format the trajectory layer stores verbatim.
//!
//! No tool failure ever escapes as an error to the agent loop: backend
//! failures are rendered as explanatory observation text so the trajectory
//! stays well-formed.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simweb::{sim_search, World};
use crate::trajectory::{
    THINK_CLOSE, THINK_OPEN, TOOL_CALL_CLOSE, TOOL_CALL_OPEN, TOOL_RESPONSE_CLOSE,
    TOOL_RESPONSE_OPEN, TRUNCATION_NOTICE,
};

pub use crate::simweb::SearchHit;

#[cfg(feature = "live")]
mod live;
#[cfg(feature = "live")]
pub use live::{LiveWebBackend, LiveWebConfig};

/// Default cap on fetched page content before the reader step, in budget
/// units.
pub const DEFAULT_CONTENT_BUDGET_UNITS: u64 = 32_768;

/// Budget unit: four characters, a tokenizer-free approximation.
pub const CHARS_PER_UNIT: usize = 4;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ToolError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("page not found: {0}")]
    NotFound(String),
}

/// Pluggable web access: search, raw fetch, and the reader step that
/// answers a browse query from fetched content. Implementations must be
/// safe for concurrent calls and return at most 10 results per query.
pub trait WebBackend: Send + Sync {
    fn search(&self, query: &str) -> Result<Vec<SearchHit>, ToolError>;
    fn fetch(&self, url: &str) -> Result<String, ToolError>;
    fn answer_from_content(&self, content: &str, query: &str) -> Result<String, ToolError>;
}

impl<T: WebBackend + ?Sized> WebBackend for Arc<T> {
    fn search(&self, query: &str) -> Result<Vec<SearchHit>, ToolError> {
        (**self).search(query)
    }
    fn fetch(&self, url: &str) -> Result<String, ToolError> {
        (**self).fetch(url)
    }
    fn answer_from_content(&self, content: &str, query: &str) -> Result<String, ToolError> {
        (**self).answer_from_content(content, query)
    }
}

/// Observation text plus bookkeeping for one tool execution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolResult {
    pub observation_text: String,
    pub per_query_counts: Vec<usize>,
    pub truncated: bool,
}

/// Number of budget units in a text (character count / 4, rounded up).
pub fn units_of(text: &str) -> u64 {
    (text.chars().count() as u64 + CHARS_PER_UNIT as u64 - 1) / CHARS_PER_UNIT as u64
}

/// Enforces an observation budget: text within budget passes through
/// unchanged; otherwise exactly `budget_units` worth of prefix is kept and
/// the fixed truncation notice appended. Idempotent.
pub fn truncate_observation(text: &str, budget_units: u64) -> (String, bool) {
    assert!(budget_units > 0, "observation budget must be positive");
    if units_of(text) <= budget_units {
        return (text.to_string(), false);
    }
    let keep_chars = budget_units as usize * CHARS_PER_UNIT;
    let cut: usize = text
        .char_indices()
        .nth(keep_chars)
        .map(|(b, _)| b)
        .unwrap_or(text.len());
    let mut out = text[..cut].to_string();
    out.push_str(TRUNCATION_NOTICE);
    (out, true)
}

/// Replaces reserved trajectory tags in backend-sourced text so stored
/// observations can never break the tag grammar.
pub fn neutralize_tags(text: &str) -> String {
    let mut out = text.to_string();
    for tag in [
        THINK_OPEN,
        THINK_CLOSE,
        TOOL_CALL_OPEN,
        TOOL_CALL_CLOSE,
        TOOL_RESPONSE_OPEN,
        TOOL_RESPONSE_CLOSE,
    ] {
        if out.contains(tag) {
            let escaped = format!("&lt;{}&gt;", &tag[1..tag.len() - 1]);
            out = out.replace(tag, &escaped);
        }
    }
    out
}

pub fn search_header(query: &str) -> String {
    format!("--- search result for [{query}] ---")
}

/// Runs every query against the backend independently and concatenates the
/// per-query sections in input order. Backend failures become explanatory
/// text in the affected section.
pub fn exec_search(backend: &dyn WebBackend, queries: &[String]) -> ToolResult {
    debug_assert!(!queries.is_empty(), "exec_search requires at least one query");
    let mut sections = Vec::with_capacity(queries.len());
    let mut per_query_counts = Vec::with_capacity(queries.len());
    for query in queries {
        let mut section = search_header(query);
        section.push('\n');
        match backend.search(query) {
            Ok(mut hits) => {
                hits.truncate(crate::simweb::MAX_RESULTS);
                per_query_counts.push(hits.len());
                if hits.is_empty() {
                    section.push_str("no results");
                } else {
                    let blocks: Vec<String> = hits
                        .iter()
                        .map(|h| {
                            format!(
                                "<title>{}</title>\n<url>{}</url>\n<snippet>{}</snippet>",
                                neutralize_tags(&h.title),
                                neutralize_tags(&h.url),
                                neutralize_tags(&h.snippet)
                            )
                        })
                        .collect();
                    section.push_str(&blocks.join("\n\n"));
                }
            }
            Err(err) => {
                per_query_counts.push(0);
                section.push_str(&format!("ERROR: search failed: {err}"));
            }
        }
        sections.push(section);
    }
    let observation_text = if sections.is_empty() {
        "ERROR: search requires at least one query".to_string()
    } else {
        sections.join("\n\n")
    };
    ToolResult { observation_text, per_query_counts, truncated: false }
}

/// Fetches a URL, caps the content at `content_budget_units`, and runs the
/// reader step to answer the browse query from it. Fetch and reader
/// failures become explanatory observations.
pub fn exec_browse(
    backend: &dyn WebBackend,
    url: &str,
    query: &str,
    content_budget_units: u64,
) -> ToolResult {
    let content = match backend.fetch(url) {
        Ok(c) => c,
        Err(ToolError::NotFound(_)) => {
            return ToolResult {
                observation_text: format!("ERROR: page not found: {url}"),
                per_query_counts: vec![0],
                truncated: false,
            }
        }
        Err(err) => {
            return ToolResult {
                observation_text: format!("ERROR: browse failed: {err}"),
                per_query_counts: vec![0],
                truncated: false,
            }
        }
    };
    let (content, truncated) = truncate_observation(&content, content_budget_units);
    match backend.answer_from_content(&content, query) {
        Ok(answer) => ToolResult {
            observation_text: neutralize_tags(answer.trim()),
            per_query_counts: vec![1],
            truncated,
        },
        Err(err) => ToolResult {
            observation_text: format!("ERROR: reader failed: {err}"),
            per_query_counts: vec![0],
            truncated,
        },
    }
}

/// Synthetic-web adapter: search and fetch read the world directly; the
/// reader step is an extractive mock that returns the best-matching fact
/// sentence. Deterministic end to end.
pub struct SimWebBackend {
    world: Arc<World>,
}

impl SimWebBackend {
    pub fn new(world: Arc<World>) -> Self {
        SimWebBackend { world }
    }

    pub fn world(&self) -> &Arc<World> {
        &self.world
    }
}

impl WebBackend for SimWebBackend {
    fn search(&self, query: &str) -> Result<Vec<SearchHit>, ToolError> {
        Ok(sim_search(&self.world, query))
    }

    fn fetch(&self, url: &str) -> Result<String, ToolError> {
        let page = self.world.fetch(url).map_err(|_| ToolError::NotFound(url.to_string()))?;
        let mut content = format!("{}\n\n{}", page.title, page.body);
        if !page.out_links.is_empty() {
            content.push_str("\n\nLinked pages:\n");
            content.push_str(&page.out_links.join("\n"));
        }
        Ok(content)
    }

    fn answer_from_content(&self, content: &str, query: &str) -> Result<String, ToolError> {
        Ok(extractive_answer(content, query))
    }
}

/// Extractive reader mock: the content sentence with the highest token
/// overlap against the query, ties broken by sentence order.
pub fn extractive_answer(content: &str, query: &str) -> String {
    let query_tokens: std::collections::BTreeSet<String> =
        crate::simweb::tokenize(query).into_iter().collect();
    let mut best: Option<(usize, String)> = None;
    for raw in content.split(['.', '\n']) {
        let sentence = raw.trim();
        if sentence.is_empty() {
            continue;
        }
        let overlap = crate::simweb::tokenize(sentence)
            .iter()
            .filter(|t| query_tokens.contains(*t))
            .count();
        if overlap > 0 && best.as_ref().map_or(true, |(b, _)| overlap > *b) {
            best = Some((overlap, format!("{sentence}.")));
        }
    }
    best.map(|(_, s)| s)
        .unwrap_or_else(|| "No relevant information found on this page.".to_string())
}
