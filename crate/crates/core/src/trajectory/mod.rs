//! Trajectory data model and the tag-based text format used for SFT
//! rendering, parsing, and format-reward validation.
//!
//! A trajectory is an ordered sequence of steps. Every non-final step is a
//! complete (thought, action, observation) triple; the final step carries
//! only a thought, optionally followed by the answer text. The rendered
//! form uses three reserved tag pairs — `<think>`, `<tool_call>`,
//! `<tool_response>` — with exactly one blank line between blocks:
//!
//! ```text
//! {question}
//!
//! <think>
//! {thought}
//! </think>
//!
//! <tool_call>
//! {"name":"search","arguments":{"queries":["..."]}}
//! </tool_call>
//!
//! <tool_response>
//! {observation}
//! </tool_response>
//!
//! <think>
//! {final thought}
//! </think>
//!
//! {final answer}
//! ```
//!
//! Rendering is deterministic; parsing accepts arbitrary whitespace between
//! blocks and round-trips every valid trajectory field-for-field.

mod format;
mod toolcall;

pub use format::{parse_trajectory, render_trajectory, validate_format};
pub use toolcall::{check_payload, parse_tool_call, payload_json, ToolCallError, TOOL_BROWSE, TOOL_SEARCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const THINK_OPEN: &str = "<think>";
pub const THINK_CLOSE: &str = "</think>";
pub const TOOL_CALL_OPEN: &str = "<tool_call>";
pub const TOOL_CALL_CLOSE: &str = "</tool_call>";
pub const TOOL_RESPONSE_OPEN: &str = "<tool_response>";
pub const TOOL_RESPONSE_CLOSE: &str = "</tool_response>";

/// Fixed suffix appended to observations cut down to the observation
/// budget. The `Observation::truncated` flag is derivable from (and kept in
/// sync with) this suffix, which keeps the flag stable across a
/// render/parse round trip.
pub const TRUNCATION_NOTICE: &str = "\n[...observation truncated to fit the response budget]";

/// Violation codes reported by [`validate_format`] and carried by
/// [`ParseError`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ViolationCode {
    /// An opening tag without its closing tag, or a stray closing tag.
    UnbalancedTags,
    /// Tags are balanced but their sequence breaks the
    /// thought/action/observation grammar (nesting, wrong order, missing
    /// final think block).
    InterleavedTags,
    /// A `<tool_call>` block whose payload is not a single well-formed
    /// tool-call object.
    MalformedToolCallPayload,
    /// A `<think>` block with no content.
    EmptyThink,
    /// Non-whitespace text between blocks (other than the question
    /// preamble and the final answer).
    StrayText,
    /// No tag blocks at all.
    EmptyTrajectory,
    /// Tool-call payload names a tool outside the closed {search, browse}
    /// set.
    UnknownTool,
    /// Tool-call arguments lack a field the tool schema requires.
    MissingRequiredField,
    /// Tool-call arguments have the right fields but violate the schema
    /// (wrong type, empty list, blank string, non-absolute URL).
    SchemaViolation,
}

/// A single format violation: byte position, code, human-readable message.
pub type Violation = (usize, ViolationCode, String);

/// Outcome of format validation over a rendered trajectory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatReport {
    pub well_formed: bool,
    pub violations: Vec<Violation>,
}

impl FormatReport {
    pub fn from_violations(mut violations: Vec<Violation>) -> Self {
        violations.sort_by_key(|v| v.0);
        FormatReport { well_formed: violations.is_empty(), violations }
    }
}

/// Parse failure: the first (lowest-position) violation in the text.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{code:?} at byte {position}: {message}")]
pub struct ParseError {
    pub position: usize,
    pub code: ViolationCode,
    pub message: String,
}

/// Reasoning content of one step. Must be non-blank and must not contain
/// think markers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thought {
    pub text: String,
}

impl Thought {
    pub fn new(text: impl Into<String>) -> Result<Self, String> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err("thought text must be non-empty".into());
        }
        if text.contains(THINK_OPEN) || text.contains(THINK_CLOSE) {
            return Err("thought text must not contain think markers".into());
        }
        Ok(Thought { text })
    }
}

/// A typed tool invocation: the action kind plus its parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    Search { queries: Vec<String> },
    Browse { url: String, query: String },
}

impl Action {
    pub fn search<I, S>(queries: I) -> Result<Self, String>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let queries: Vec<String> = queries.into_iter().map(Into::into).collect();
        if queries.is_empty() {
            return Err("search requires at least one query".into());
        }
        if queries.iter().any(|q| q.trim().is_empty()) {
            return Err("search queries must be non-empty after trimming".into());
        }
        Ok(Action::Search { queries })
    }

    pub fn browse(url: impl Into<String>, query: impl Into<String>) -> Result<Self, String> {
        let url = url.into();
        let query = query.into();
        if url.trim().is_empty() {
            return Err("browse url must be non-empty".into());
        }
        url::Url::parse(&url).map_err(|e| format!("browse url must be an absolute URL: {e}"))?;
        if query.trim().is_empty() {
            return Err("browse query must be non-empty".into());
        }
        Ok(Action::Browse { url, query })
    }

    /// Tool name per the function-call schema.
    pub fn name(&self) -> &'static str {
        match self {
            Action::Search { .. } => TOOL_SEARCH,
            Action::Browse { .. } => TOOL_BROWSE,
        }
    }
}

/// Tool response payload attached to a step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub text: String,
    /// True iff `text` ends with [`TRUNCATION_NOTICE`].
    pub truncated: bool,
    /// Index of the step (and thus action) this observation answers.
    pub source_action_index: usize,
}

impl Observation {
    pub fn new(text: impl Into<String>, source_action_index: usize) -> Self {
        let text = text.into();
        let truncated = text.ends_with(TRUNCATION_NOTICE);
        Observation { text, truncated, source_action_index }
    }
}

/// One round of the agent loop.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub thought: Thought,
    pub action: Option<Action>,
    pub observation: Option<Observation>,
}

impl Step {
    pub fn full(thought: Thought, action: Action, observation: Observation) -> Self {
        Step { thought, action: Some(action), observation: Some(observation) }
    }

    pub fn thought_only(thought: Thought) -> Self {
        Step { thought, action: None, observation: None }
    }
}

/// Why an episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Answered,
    TurnLimit,
    ContextLimit,
    BackendError,
}

/// Episode limits stamped onto a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    pub max_context_units: u64,
    pub max_turns: u32,
}

impl Limits {
    pub fn new(max_context_units: u64, max_turns: u32) -> Self {
        Limits { max_context_units, max_turns }
    }

    /// Default stamped by the parser, which cannot recover limits from
    /// rendered text.
    pub fn unbounded() -> Self {
        Limits { max_context_units: u64::MAX, max_turns: u32::MAX }
    }
}

impl Default for Limits {
    fn default() -> Self {
        Limits::unbounded()
    }
}

/// Ordered record of one agent episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub question: String,
    pub steps: Vec<Step>,
    pub final_answer: Option<String>,
    pub limits: Limits,
    pub termination: Termination,
}

impl Trajectory {
    /// Builds a trajectory, normalizing the question and answer to their
    /// trimmed forms (both round-trip through rendered text as trimmed).
    pub fn new(
        question: impl Into<String>,
        steps: Vec<Step>,
        final_answer: Option<String>,
        limits: Limits,
        termination: Termination,
    ) -> Self {
        let question = question.into().trim().to_string();
        let final_answer = final_answer
            .map(|a| a.trim().to_string())
            .filter(|a| !a.is_empty());
        Trajectory { question, steps, final_answer, limits, termination }
    }

    /// Number of tool-calling turns (actions) in the episode.
    pub fn turns(&self) -> usize {
        self.steps.iter().filter(|s| s.action.is_some()).count()
    }

    /// Checks the strict episode invariants: every non-final step is a
    /// complete triple, the final step is thought-only, and the action
    /// count respects `limits.max_turns`.
    pub fn validate(&self) -> Result<(), String> {
        if self.steps.is_empty() {
            return Err("trajectory has no steps".into());
        }
        let last = self.steps.len() - 1;
        for (i, step) in self.steps.iter().enumerate() {
            if i < last {
                if step.action.is_none() || step.observation.is_none() {
                    return Err(format!("non-final step {i} must have an action and an observation"));
                }
            } else if step.action.is_some() || step.observation.is_some() {
                return Err("final step must contain only a thought".into());
            }
            if let Some(obs) = &step.observation {
                if obs.source_action_index != i {
                    return Err(format!(
                        "observation at step {i} claims source action {}",
                        obs.source_action_index
                    ));
                }
            }
        }
        let turns = self.turns();
        if turns as u64 > u64::from(self.limits.max_turns) {
            return Err(format!("{turns} actions exceed max_turns {}", self.limits.max_turns));
        }
        Ok(())
    }

    /// Structural equality on the fields the text format carries
    /// (question, steps, final answer), ignoring limits and termination
    /// metadata.
    pub fn structurally_eq(&self, other: &Trajectory) -> bool {
        self.question == other.question
            && self.steps == other.steps
            && self.final_answer == other.final_answer
    }
}

/// One trajectory as serialized to JSONL corpora. `rendered_text` is the
/// bit-exact [`render_trajectory`] output for the record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub question: String,
    pub rendered_text: String,
    pub steps: Vec<Step>,
    pub final_answer: Option<String>,
    pub termination: Termination,
    pub limits: Limits,
}

impl From<&Trajectory> for TrajectoryRecord {
    fn from(t: &Trajectory) -> Self {
        TrajectoryRecord {
            question: t.question.clone(),
            rendered_text: render_trajectory(t),
            steps: t.steps.clone(),
            final_answer: t.final_answer.clone(),
            termination: t.termination,
            limits: t.limits,
        }
    }
}

impl TrajectoryRecord {
    pub fn to_trajectory(&self) -> Trajectory {
        Trajectory {
            question: self.question.clone(),
            steps: self.steps.clone(),
            final_answer: self.final_answer.clone(),
            limits: self.limits,
            termination: self.termination,
        }
    }
}
