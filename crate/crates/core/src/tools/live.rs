//! Live web adapter: pluggable HTTP search and content-extraction
//! endpoints plus an LLM reader, with a concurrent-request limit and a
//! per-host minimum interval.

use std::collections::HashMap;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::Deserialize;

use super::{SearchHit, ToolError, WebBackend};
use crate::llm::{ChatRequest, DecodeParams, LlmBackend, Message, Role};

#[derive(Debug, Clone)]
pub struct LiveWebConfig {
    pub search_base_url: String,
    pub search_api_key_env: String,
    pub reader_base_url: String,
    pub reader_api_key_env: String,
    pub timeout_s: u64,
    pub retries: u32,
    pub max_concurrent_requests: usize,
    pub min_request_interval_ms: u64,
}

impl LiveWebConfig {
    pub fn new(search_base_url: impl Into<String>, reader_base_url: impl Into<String>) -> Self {
        LiveWebConfig {
            search_base_url: search_base_url.into(),
            search_api_key_env: "WEB_SEARCH_API_KEY".into(),
            reader_base_url: reader_base_url.into(),
            reader_api_key_env: "READER_API_KEY".into(),
            timeout_s: 30,
            retries: 2,
            max_concurrent_requests: 8,
            min_request_interval_ms: 0,
        }
    }
}

/// Bounds in-flight requests and enforces a minimum interval per host.
pub(crate) struct Limiter {
    max_concurrent: usize,
    min_interval: Duration,
    state: Mutex<LimiterState>,
    available: Condvar,
}

#[derive(Default)]
struct LimiterState {
    active: usize,
    last_request: HashMap<String, Instant>,
}

pub(crate) struct LimiterGuard<'a> {
    limiter: &'a Limiter,
}

impl Limiter {
    pub fn new(max_concurrent: usize, min_interval_ms: u64) -> Limiter {
        Limiter {
            max_concurrent: max_concurrent.max(1),
            min_interval: Duration::from_millis(min_interval_ms),
            state: Mutex::new(LimiterState::default()),
            available: Condvar::new(),
        }
    }

    pub fn acquire(&self, host: &str) -> LimiterGuard<'_> {
        let mut state = self.state.lock().expect("limiter lock");
        while state.active >= self.max_concurrent {
            state = self.available.wait(state).expect("limiter wait");
        }
        state.active += 1;
        drop(state);
        if !self.min_interval.is_zero() {
            loop {
                let wait = {
                    let mut state = self.state.lock().expect("limiter lock");
                    match state.last_request.get(host) {
                        Some(last) if last.elapsed() < self.min_interval => {
                            self.min_interval - last.elapsed()
                        }
                        _ => {
                            state.last_request.insert(host.to_string(), Instant::now());
                            break;
                        }
                    }
                };
                std::thread::sleep(wait);
            }
        }
        LimiterGuard { limiter: self }
    }

    #[cfg(test)]
    fn active(&self) -> usize {
        self.state.lock().expect("limiter lock").active
    }
}

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        let mut state = self.limiter.state.lock().expect("limiter lock");
        state.active -= 1;
        drop(state);
        self.limiter.available.notify_one();
    }
}

pub struct LiveWebBackend {
    config: LiveWebConfig,
    client: reqwest::blocking::Client,
    reader_llm: Arc<dyn LlmBackend>,
    limiter: Limiter,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SearchResponse {
    Wrapped { results: Vec<SearchHit> },
    Bare(Vec<SearchHit>),
}

#[derive(Deserialize)]
struct FetchResponse {
    content: String,
}

fn host_of(url: &str) -> String {
    url::Url::parse(url)
        .ok()
        .and_then(|u| u.host_str().map(str::to_string))
        .unwrap_or_default()
}

impl LiveWebBackend {
    pub fn new(config: LiveWebConfig, reader_llm: Arc<dyn LlmBackend>) -> Result<Self, ToolError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_s))
            .build()
            .map_err(|e| ToolError::BackendUnavailable(e.to_string()))?;
        let limiter = Limiter::new(config.max_concurrent_requests, config.min_request_interval_ms);
        Ok(LiveWebBackend { config, client, reader_llm, limiter })
    }

    fn get_with_retries(
        &self,
        url: &str,
        params: &[(&str, &str)],
        api_key_env: &str,
    ) -> Result<(u16, String), ToolError> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            let _guard = self.limiter.acquire(&host_of(url));
            let mut request = self.client.get(url).query(params);
            if let Ok(key) = std::env::var(api_key_env) {
                request = request.bearer_auth(key);
            }
            let outcome = request.send().and_then(|r| {
                let status = r.status().as_u16();
                r.text().map(|t| (status, t))
            });
            match outcome {
                Ok((status, _)) if status == 429 || status >= 500 => {
                    if attempt > self.config.retries {
                        return Err(ToolError::BackendUnavailable(format!(
                            "HTTP {status} from {url} after {attempt} attempts"
                        )));
                    }
                    std::thread::sleep(Duration::from_millis(50 << attempt.min(6)));
                }
                Ok(ok) => return Ok(ok),
                Err(e) => {
                    if attempt > self.config.retries {
                        return Err(ToolError::BackendUnavailable(format!(
                            "{url}: {e} after {attempt} attempts"
                        )));
                    }
                    std::thread::sleep(Duration::from_millis(50 << attempt.min(6)));
                }
            }
        }
    }
}

impl WebBackend for LiveWebBackend {
    fn search(&self, query: &str) -> Result<Vec<SearchHit>, ToolError> {
        let url = format!("{}/search", self.config.search_base_url.trim_end_matches('/'));
        let (status, text) =
            self.get_with_retries(&url, &[("q", query), ("limit", "10")], &self.config.search_api_key_env)?;
        if status >= 400 {
            return Err(ToolError::BackendUnavailable(format!("search HTTP {status}: {text}")));
        }
        let parsed: SearchResponse = serde_json::from_str(&text)
            .map_err(|e| ToolError::BackendUnavailable(format!("unparseable search response: {e}")))?;
        let mut hits = match parsed {
            SearchResponse::Wrapped { results } => results,
            SearchResponse::Bare(results) => results,
        };
        hits.truncate(crate::simweb::MAX_RESULTS);
        Ok(hits)
    }

    fn fetch(&self, url: &str) -> Result<String, ToolError> {
        let endpoint = format!("{}/fetch", self.config.reader_base_url.trim_end_matches('/'));
        let (status, text) =
            self.get_with_retries(&endpoint, &[("url", url)], &self.config.reader_api_key_env)?;
        if status == 404 {
            return Err(ToolError::NotFound(url.to_string()));
        }
        if status >= 400 {
            return Err(ToolError::BackendUnavailable(format!("fetch HTTP {status}: {text}")));
        }
        match serde_json::from_str::<FetchResponse>(&text) {
            Ok(f) => Ok(f.content),
            Err(_) => Ok(text),
        }
    }

    fn answer_from_content(&self, content: &str, query: &str) -> Result<String, ToolError> {
        let prompt = format!(
            "Answer the question using only the page content below. Be concise and factual.\n\n\
             Page content:\n{content}\n\nQuestion: {query}"
        );
        let request = ChatRequest::new(
            vec![Message::new(Role::User, prompt)],
            DecodeParams { temperature: 0.0, max_output_units: 1024, stop_markers: vec![] },
        );
        self.reader_llm
            .complete(&request)
            .map_err(|e| ToolError::BackendUnavailable(format!("reader model: {e}")))
    }
}
