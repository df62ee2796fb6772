//! Token-overlap search over the synthetic web.
//!
//! Scoring rule: for every distinct query token, a page earns 3 points per
//! occurrence in its title and 1 point per occurrence in its body. Pages
//! with score zero are excluded; ties break by ascending URL; at most
//! [`MAX_RESULTS`] results are returned.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Page, World};

/// Per-query result cap, matching the top-10 contract of the search tool.
pub const MAX_RESULTS: usize = 10;

const TITLE_WEIGHT: u64 = 3;
const SNIPPET_CHARS: usize = 160;

/// Lowercased alphanumeric tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Posting {
    url: String,
    title_count: u32,
    body_count: u32,
}

/// Inverted index: token -> postings ordered by URL.
#[derive(Debug, Clone, Default)]
pub struct SearchIndex {
    postings: BTreeMap<String, Vec<Posting>>,
}

impl SearchIndex {
    pub fn build(pages: &BTreeMap<String, Page>) -> SearchIndex {
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        // `pages` is ordered by URL, so posting lists come out URL-ordered.
        for page in pages.values() {
            let mut counts: BTreeMap<String, (u32, u32)> = BTreeMap::new();
            for token in tokenize(&page.title) {
                counts.entry(token).or_default().0 += 1;
            }
            for token in tokenize(&page.body) {
                counts.entry(token).or_default().1 += 1;
            }
            for (token, (title_count, body_count)) in counts {
                postings.entry(token).or_default().push(Posting {
                    url: page.url.clone(),
                    title_count,
                    body_count,
                });
            }
        }
        SearchIndex { postings }
    }

    fn get(&self, token: &str) -> &[Posting] {
        self.postings.get(token).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    pub title: String,
    pub url: String,
    pub snippet: String,
}

/// Largest byte index `<= at` that is a char boundary.
fn floor_boundary(s: &str, mut at: usize) -> usize {
    at = at.min(s.len());
    while at > 0 && !s.is_char_boundary(at) {
        at -= 1;
    }
    at
}

/// First window of the body containing the chosen token.
fn snippet_for(body: &str, token: Option<&str>) -> String {
    let start = match token.and_then(|t| body.to_lowercase().find(t)) {
        Some(pos) => {
            // Snap back to a word start, at most 40 bytes of left context.
            let window_start = pos.saturating_sub(40);
            let left = &body[floor_boundary(body, window_start)..floor_boundary(body, pos)];
            match left.rfind(' ') {
                Some(space) => floor_boundary(body, window_start) + space + 1,
                None => floor_boundary(body, window_start),
            }
        }
        None => 0,
    };
    let end = floor_boundary(body, start + SNIPPET_CHARS);
    body[floor_boundary(body, start)..end].trim().to_string()
}

/// Ranked token-overlap search. Pure: identical `(world, query)` inputs
/// always produce identical rankings.
pub fn sim_search(world: &World, query: &str) -> Vec<SearchHit> {
    let mut tokens: Vec<String> = tokenize(query);
    tokens.sort();
    tokens.dedup();

    // url -> (score, per-token body contribution for snippet choice)
    let mut scores: BTreeMap<&str, u64> = BTreeMap::new();
    let mut best_token: BTreeMap<&str, (u64, &str)> = BTreeMap::new();
    for token in &tokens {
        for posting in world.index.get(token) {
            let contribution =
                TITLE_WEIGHT * u64::from(posting.title_count) + u64::from(posting.body_count);
            if contribution == 0 {
                continue;
            }
            *scores.entry(posting.url.as_str()).or_default() += contribution;
            if posting.body_count > 0 {
                let entry = best_token.entry(posting.url.as_str()).or_insert((0, ""));
                // Highest contribution wins; lexicographic token order is
                // already guaranteed by the sorted token list, so the first
                // maximum seen is the tie-break winner.
                if contribution > entry.0 {
                    *entry = (contribution, token.as_str());
                }
            }
        }
    }

    let mut ranked: Vec<(&str, u64)> = scores.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(MAX_RESULTS);

    ranked
        .into_iter()
        .map(|(url, _)| {
            let page = &world.pages[url];
            let token = best_token.get(url).map(|(_, t)| *t);
            SearchHit {
                title: page.title.clone(),
                url: page.url.clone(),
                snippet: snippet_for(&page.body, token),
            }
        })
        .collect()
}
