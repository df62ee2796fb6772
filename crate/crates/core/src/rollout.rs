//! The agent loop and everything built on it: judged verdicts, rollout
//! groups, rejection-sampled SFT collection, and Avg@k evaluation.
//!
//! The loop alternates policy completions with tool executions. It
//! terminates when the policy answers without a tool call, when the turn
//! limit forces a final answer, or when the running context estimate
//! exceeds the budget. Backend failures close the episode with a recorded
//! termination cause; no combination of failures loses a trajectory.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{ChatRequest, DecodeParams, LlmBackend, Message, Role};
use crate::normalize::normalized_match;
use crate::tools::{exec_browse, exec_search, truncate_observation, units_of, WebBackend};
use crate::trajectory::{
    parse_tool_call, payload_json, Action, Limits, Observation, Step, Termination, Thought,
    Trajectory, TrajectoryRecord, THINK_CLOSE, THINK_OPEN, TOOL_CALL_CLOSE, TOOL_CALL_OPEN,
};
use crate::util::parallel_map;

/// Default system prompt for live policies; scripted policies ignore it.
pub const AGENT_SYSTEM_PROMPT: &str = include_str!("../prompts/agent_system.txt");

/// Judge prompt with `{question}`, `{prediction}`, `{truth}` placeholders.
pub const JUDGE_PROMPT: &str = include_str!("../prompts/judge.txt");

/// Prompt sent when the turn limit is reached and an answer must still be
/// elicited.
pub const FORCED_ANSWER_PROMPT: &str = "You have reached the tool-call limit. You must now answer \
with your best guess. Respond with your reasoning between <think> and </think> tags, then the \
final answer, with no further tool calls.";

#[derive(Debug, Error)]
pub enum RolloutError {
    #[error("invalid rollout limits: {0}")]
    InvalidLimits(String),
}

/// Context budget, turn limit, and a label naming the schedule stage they
/// came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolloutLimits {
    pub max_context_units: u64,
    pub max_turns: u32,
    pub stage_label: String,
}

impl RolloutLimits {
    pub fn new(
        max_context_units: u64,
        max_turns: u32,
        stage_label: impl Into<String>,
    ) -> Result<Self, RolloutError> {
        if max_turns < 1 {
            return Err(RolloutError::InvalidLimits("max_turns must be >= 1".into()));
        }
        if max_context_units < 1024 {
            return Err(RolloutError::InvalidLimits(format!(
                "max_context_units must be >= 1024, got {max_context_units}"
            )));
        }
        Ok(RolloutLimits { max_context_units, max_turns, stage_label: stage_label.into() })
    }

    /// Parses the `<units>:<turns>` flag grammar; units accept a `k`
    /// suffix meaning multiples of 1024 ("64k" is 65536).
    pub fn parse_flag(flag: &str) -> Result<Self, RolloutError> {
        let (units_str, turns_str) = flag
            .split_once(':')
            .ok_or_else(|| RolloutError::InvalidLimits(format!("expected <units>:<turns>, got {flag:?}")))?;
        let units_str = units_str.trim().to_lowercase();
        let units: u64 = if let Some(kilo) = units_str.strip_suffix('k') {
            kilo.trim()
                .parse::<u64>()
                .map_err(|e| RolloutError::InvalidLimits(format!("bad unit count {units_str:?}: {e}")))?
                * 1024
        } else {
            units_str
                .parse()
                .map_err(|e| RolloutError::InvalidLimits(format!("bad unit count {units_str:?}: {e}")))?
        };
        let turns: u32 = turns_str
            .trim()
            .parse()
            .map_err(|e| RolloutError::InvalidLimits(format!("bad turn count {turns_str:?}: {e}")))?;
        RolloutLimits::new(units, turns, flag)
    }

    pub fn from_stage(stage: crate::reward::ScheduleStage) -> Self {
        RolloutLimits {
            max_context_units: stage.max_context_units,
            max_turns: stage.max_turns,
            stage_label: format!("stage{}", stage.stage),
        }
    }

    pub fn trajectory_limits(&self) -> Limits {
        Limits::new(self.max_context_units, self.max_turns)
    }
}

/// Everything the agent loop needs besides the backends.
#[derive(Debug, Clone)]
pub struct AgentConfig {
    pub limits: RolloutLimits,
    pub observation_budget_units: u64,
    pub content_budget_units: u64,
    pub system_prompt: String,
    pub decode: DecodeParams,
}

impl AgentConfig {
    pub fn new(limits: RolloutLimits) -> Self {
        AgentConfig {
            limits,
            observation_budget_units: 2_048,
            content_budget_units: crate::tools::DEFAULT_CONTENT_BUDGET_UNITS,
            system_prompt: AGENT_SYSTEM_PROMPT.to_string(),
            decode: DecodeParams::rollout(),
        }
    }
}

/// What one policy completion contained.
struct PolicyTurn {
    thought: Thought,
    tool_call_payload: Option<String>,
    trailing_answer: Option<String>,
}

fn make_thought(text: &str) -> Thought {
    Thought::new(text).unwrap_or_else(|_| Thought { text: "(no reasoning provided)".into() })
}

/// Splits one raw policy completion into thought, optional tool-call
/// payload, and trailing answer text. Tolerant by design: missing think
/// tags degrade to treating the whole completion as both thought and
/// answer, and an unterminated tool call gets its closing tag back (stop
/// markers cut it off).
fn parse_policy_turn(raw: &str) -> PolicyTurn {
    let mut text = raw.to_string();
    if text.contains(TOOL_CALL_OPEN) && !text.contains(TOOL_CALL_CLOSE) {
        text.push_str(TOOL_CALL_CLOSE);
    }
    let think_span = text.find(THINK_OPEN).and_then(|open| {
        text[open + THINK_OPEN.len()..]
            .find(THINK_CLOSE)
            .map(|close| (open, open + THINK_OPEN.len() + close))
    });
    let (thought, after_think) = match think_span {
        Some((open, close)) => {
            let inner = text[open + THINK_OPEN.len()..close].trim();
            (make_thought(inner), text[close + THINK_CLOSE.len()..].to_string())
        }
        None => (make_thought(text.trim()), text.clone()),
    };
    let (payload, rest) = match (after_think.find(TOOL_CALL_OPEN), after_think.find(TOOL_CALL_CLOSE)) {
        (Some(open), Some(close)) if close > open => {
            let payload = after_think[open + TOOL_CALL_OPEN.len()..close].trim().to_string();
            let mut rest = after_think[..open].to_string();
            rest.push_str(&after_think[close + TOOL_CALL_CLOSE.len()..]);
            (Some(payload), rest)
        }
        _ => (None, after_think),
    };
    let trailing = rest.trim();
    PolicyTurn {
        thought,
        tool_call_payload: payload,
        trailing_answer: if trailing.is_empty() { None } else { Some(trailing.to_string()) },
    }
}

struct LoopOutcome {
    steps: Vec<Step>,
    final_answer: Option<String>,
    termination: Termination,
}

/// Core ReAct loop over an arbitrary message prefix. Returns the new steps
/// only; callers own the prefix (the question for episodes, the
/// accumulated information space for synthesis rounds).
pub(crate) fn agent_loop(
    prefix: &[Message],
    policy: &dyn LlmBackend,
    web: &dyn WebBackend,
    cfg: &AgentConfig,
) -> (Vec<Step>, Option<String>, Termination) {
    let outcome = run_loop(prefix, policy, web, cfg);
    (outcome.steps, outcome.final_answer, outcome.termination)
}

fn run_loop(
    prefix: &[Message],
    policy: &dyn LlmBackend,
    web: &dyn WebBackend,
    cfg: &AgentConfig,
) -> LoopOutcome {
    let mut messages: Vec<Message> = prefix.to_vec();
    let mut steps: Vec<Step> = Vec::new();
    let mut actions_taken = 0u32;

    loop {
        let context_units: u64 = messages.iter().map(|m| units_of(&m.content)).sum();
        if context_units > cfg.limits.max_context_units {
            steps.push(Step::thought_only(make_thought(
                "The context budget is exhausted; stopping here.",
            )));
            return LoopOutcome { steps, final_answer: None, termination: Termination::ContextLimit };
        }

        let request = ChatRequest::new(messages.clone(), cfg.decode.clone());
        let raw = match policy.complete(&request) {
            Ok(text) => text,
            Err(err) => {
                steps.push(Step::thought_only(make_thought(&format!(
                    "The policy backend failed: {err}"
                ))));
                return LoopOutcome {
                    steps,
                    final_answer: None,
                    termination: Termination::BackendError,
                };
            }
        };
        let turn = parse_policy_turn(&raw);

        let Some(payload) = turn.tool_call_payload else {
            steps.push(Step::thought_only(turn.thought));
            return LoopOutcome {
                steps,
                final_answer: turn.trailing_answer,
                termination: Termination::Answered,
            };
        };

        let action = match parse_tool_call(&payload) {
            Ok(action) => action,
            Err(err) => {
                // Protocol violation: the episode ends rather than feeding
                // an unexecutable call back into the loop.
                log::warn!("unparseable tool call ends episode: {err}");
                steps.push(Step::thought_only(turn.thought));
                return LoopOutcome {
                    steps,
                    final_answer: None,
                    termination: Termination::Answered,
                };
            }
        };

        let result = match &action {
            Action::Search { queries } => exec_search(web, queries),
            Action::Browse { url, query } => {
                exec_browse(web, url, query, cfg.content_budget_units)
            }
        };
        let (obs_text, _) = truncate_observation(&result.observation_text, cfg.observation_budget_units);
        let observation = Observation::new(obs_text, steps.len());

        messages.push(Message::new(
            Role::Assistant,
            format!(
                "{THINK_OPEN}\n{}\n{THINK_CLOSE}\n\n{TOOL_CALL_OPEN}\n{}\n{TOOL_CALL_CLOSE}",
                turn.thought.text,
                payload_json(&action)
            ),
        ));
        messages.push(Message::new(
            Role::Tool,
            format!(
                "{}\n{}\n{}",
                crate::trajectory::TOOL_RESPONSE_OPEN,
                observation.text,
                crate::trajectory::TOOL_RESPONSE_CLOSE
            ),
        ));
        steps.push(Step::full(turn.thought, action, observation));
        actions_taken += 1;

        if actions_taken >= cfg.limits.max_turns {
            messages.push(Message::new(Role::User, FORCED_ANSWER_PROMPT));
            let request = ChatRequest::new(messages.clone(), cfg.decode.clone());
            return match policy.complete(&request) {
                Ok(text) => {
                    // Any tool call in the forced turn is dropped.
                    let forced = parse_policy_turn(&text);
                    steps.push(Step::thought_only(forced.thought));
                    LoopOutcome {
                        steps,
                        final_answer: forced.trailing_answer,
                        termination: Termination::TurnLimit,
                    }
                }
                Err(err) => {
                    steps.push(Step::thought_only(make_thought(&format!(
                        "The policy backend failed: {err}"
                    ))));
                    LoopOutcome { steps, final_answer: None, termination: Termination::BackendError }
                }
            };
        }
    }
}

/// Runs one judged episode. Always returns a structurally valid
/// trajectory; backend failures terminate it with a recorded cause.
pub fn run_agent(
    question: &str,
    policy: &dyn LlmBackend,
    web: &dyn WebBackend,
    cfg: &AgentConfig,
) -> Trajectory {
    let prefix = vec![
        Message::new(Role::System, cfg.system_prompt.clone()),
        Message::new(Role::User, question.to_string()),
    ];
    let (steps, final_answer, termination) = agent_loop(&prefix, policy, web, cfg);
    let trajectory = Trajectory::new(
        question,
        steps,
        final_answer,
        cfg.limits.trajectory_limits(),
        termination,
    );
    debug_assert!(trajectory.validate().is_ok(), "{:?}", trajectory.validate());
    trajectory
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeKind {
    Llm,
    NormalizedMatch,
}

/// Correctness verdict for one prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub correct: bool,
    pub judge_kind: JudgeKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_judge_text: Option<String>,
}

impl Verdict {
    fn normalized(correct: bool) -> Verdict {
        Verdict { correct, judge_kind: JudgeKind::NormalizedMatch, raw_judge_text: None }
    }
}

/// Last CORRECT/INCORRECT token in the judge's reply.
fn parse_judge_reply(text: &str) -> Option<bool> {
    let mut verdict = None;
    for token in text.split_whitespace() {
        let token = token.trim_matches(|c: char| !c.is_alphabetic());
        if token.eq_ignore_ascii_case("INCORRECT") {
            verdict = Some(false);
        } else if token.eq_ignore_ascii_case("CORRECT") {
            verdict = Some(true);
        }
    }
    verdict
}

/// Judges a prediction against the truth. With a judge backend, a fixed
/// prompt is sent and the final CORRECT/INCORRECT token parsed; an
/// unparseable reply falls back to the normalized string match (recorded
/// as such). Without a backend, the normalized match decides.
pub fn judge(
    question: &str,
    prediction: &str,
    truth: &str,
    judge_backend: Option<&dyn LlmBackend>,
) -> Verdict {
    let Some(backend) = judge_backend else {
        return Verdict::normalized(normalized_match(prediction, truth));
    };
    let prompt = JUDGE_PROMPT
        .replace("{question}", question)
        .replace("{prediction}", prediction)
        .replace("{truth}", truth);
    let request = ChatRequest::new(
        vec![Message::new(Role::User, prompt)],
        DecodeParams { temperature: 0.0, max_output_units: 512, stop_markers: vec![] },
    );
    match backend.complete(&request) {
        Ok(reply) => match parse_judge_reply(&reply) {
            Some(correct) => {
                Verdict { correct, judge_kind: JudgeKind::Llm, raw_judge_text: Some(reply) }
            }
            None => {
                log::warn!("judge reply had no CORRECT/INCORRECT token; falling back to normalized match");
                Verdict::normalized(normalized_match(prediction, truth))
            }
        },
        Err(err) => {
            log::warn!("judge backend failed ({err}); falling back to normalized match");
            Verdict::normalized(normalized_match(prediction, truth))
        }
    }
}

/// Supplies one policy backend per (question, rollout) pair, so rollouts
/// stay independent even with stateful scripted policies.
pub trait PolicyProvider: Sync {
    fn policy(&self, question_index: usize, rollout_index: usize) -> Box<dyn LlmBackend>;
}

/// One QA item as fed to rollouts and evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaItem {
    pub id: String,
    pub question: String,
    pub truth: String,
}

/// A group of independent rollouts of one question, judged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutGroup {
    pub question_id: String,
    pub question: String,
    pub truth: String,
    pub trajectories: Vec<TrajectoryRecord>,
    pub verdicts: Vec<Verdict>,
}

/// Runs `group_size` independent episodes of one question and judges each.
pub fn rollout_group(
    item: &QaItem,
    question_index: usize,
    group_size: usize,
    policies: &dyn PolicyProvider,
    web: &dyn WebBackend,
    judge_backend: Option<&dyn LlmBackend>,
    cfg: &AgentConfig,
    workers: usize,
) -> RolloutGroup {
    assert!(group_size >= 1, "group size must be >= 1");
    let results = parallel_map((0..group_size).collect::<Vec<_>>(), workers, |_, rollout_index| {
        let policy = policies.policy(question_index, rollout_index);
        let trajectory = run_agent(&item.question, policy.as_ref(), web, cfg);
        let prediction = trajectory.final_answer.clone().unwrap_or_default();
        let verdict = judge(&item.question, &prediction, &item.truth, judge_backend);
        (TrajectoryRecord::from(&trajectory), verdict)
    });
    let (trajectories, verdicts) = results.into_iter().unzip();
    RolloutGroup {
        question_id: item.id.clone(),
        question: item.question.clone(),
        truth: item.truth.clone(),
        trajectories,
        verdicts,
    }
}

/// One retained trajectory in an SFT corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftRecord {
    #[serde(flatten)]
    pub record: TrajectoryRecord,
    pub truth: String,
    pub correct: bool,
    pub turns: usize,
}

/// Per-question outcome in the collection manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectManifestEntry {
    pub question_id: String,
    pub attempts: u32,
    pub successes: u32,
    pub retained: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectOutcome {
    pub records: Vec<SftRecord>,
    pub manifest: Vec<CollectManifestEntry>,
}

/// Rejection sampling: up to `attempts` episodes per question, retaining
/// the first judged-correct trajectory. Questions with zero successes
/// contribute nothing and are listed in the manifest.
pub fn collect_sft(
    dataset: &[QaItem],
    attempts: u32,
    policies: &dyn PolicyProvider,
    web: &dyn WebBackend,
    judge_backend: Option<&dyn LlmBackend>,
    cfg: &AgentConfig,
    workers: usize,
) -> CollectOutcome {
    assert!(attempts >= 1, "attempts must be >= 1");
    let per_question = parallel_map(dataset.to_vec(), workers, |question_index, item| {
        let mut attempts_made = 0;
        let mut retained: Option<SftRecord> = None;
        for attempt in 0..attempts {
            attempts_made += 1;
            let policy = policies.policy(question_index, attempt as usize);
            let trajectory = run_agent(&item.question, policy.as_ref(), web, cfg);
            let prediction = trajectory.final_answer.clone().unwrap_or_default();
            let verdict = judge(&item.question, &prediction, &item.truth, judge_backend);
            if verdict.correct {
                retained = Some(SftRecord {
                    turns: trajectory.turns(),
                    record: TrajectoryRecord::from(&trajectory),
                    truth: item.truth.clone(),
                    correct: true,
                });
                break;
            }
        }
        let entry = CollectManifestEntry {
            question_id: item.id.clone(),
            attempts: attempts_made,
            successes: retained.is_some() as u32,
            retained: retained.is_some(),
        };
        (retained, entry)
    });
    let mut records = Vec::new();
    let mut manifest = Vec::new();
    for (record, entry) in per_question {
        if let Some(r) = record {
            records.push(r);
        }
        manifest.push(entry);
    }
    CollectOutcome { records, manifest }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalQuestionReport {
    pub question_id: String,
    pub question: String,
    pub truth: String,
    pub verdicts: Vec<bool>,
    pub turns: Vec<usize>,
    pub correct_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub score: f64,
    pub per_question: Vec<EvalQuestionReport>,
}

/// Avg@k: each question is solved `k` times; the score is the mean over
/// questions of (correct runs / k).
pub fn evaluate_avg_at_k(
    dataset: &[QaItem],
    k: usize,
    policies: &dyn PolicyProvider,
    web: &dyn WebBackend,
    judge_backend: Option<&dyn LlmBackend>,
    cfg: &AgentConfig,
    workers: usize,
) -> EvalReport {
    assert!(k >= 1, "k must be >= 1");
    let per_question = parallel_map(dataset.to_vec(), workers, |question_index, item| {
        let mut verdicts = Vec::with_capacity(k);
        let mut turns = Vec::with_capacity(k);
        for run in 0..k {
            let policy = policies.policy(question_index, run);
            let trajectory = run_agent(&item.question, policy.as_ref(), web, cfg);
            let prediction = trajectory.final_answer.clone().unwrap_or_default();
            let verdict = judge(&item.question, &prediction, &item.truth, judge_backend);
            verdicts.push(verdict.correct);
            turns.push(trajectory.turns());
        }
        let correct_runs = verdicts.iter().filter(|v| **v).count();
        EvalQuestionReport {
            question_id: item.id.clone(),
            question: item.question.clone(),
            truth: item.truth.clone(),
            verdicts,
            turns,
            correct_runs,
        }
    });
    let score = if per_question.is_empty() {
        0.0
    } else {
        per_question.iter().map(|q| q.correct_runs as f64 / k as f64).sum::<f64>()
            / per_question.len() as f64
    };
    EvalReport { k, score, per_question }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{LlmError, ScriptedBackend};
    use crate::tools::tests::ScriptedWebBackend;
    use crate::trajectory::{render_trajectory, validate_format};

    fn cfg(max_units: u64, max_turns: u32) -> AgentConfig {
        AgentConfig::new(RolloutLimits::new(max_units, max_turns, "test").unwrap())
    }

    fn search_turn(thought: &str, queries: &[&str]) -> String {
        let action = Action::search(queries.iter().copied()).unwrap();
        format!(
            "<think>\n{thought}\n</think>\n\n<tool_call>\n{}\n</tool_call>",
            payload_json(&action)
        )
    }

    fn browse_turn(thought: &str, url: &str, query: &str) -> String {
        let action = Action::browse(url, query).unwrap();
        format!(
            "<think>\n{thought}\n</think>\n\n<tool_call>\n{}\n</tool_call>",
            payload_json(&action)
        )
    }

    fn answer_turn(thought: &str, answer: &str) -> String {
        format!("<think>\n{thought}\n</think>\n\n{answer}")
    }

    #[test]
    fn immediate_answer_has_zero_tool_calls() {
        let policy = ScriptedBackend::in_order([answer_turn("I already know this.", "42")]);
        let web = ScriptedWebBackend::default();
        let t = run_agent("What is the answer?", &policy, &web, &cfg(8192, 10));
        assert_eq!(t.turns(), 0);
        assert_eq!(t.termination, Termination::Answered);
        assert_eq!(t.final_answer.as_deref(), Some("42"));
        t.validate().unwrap();
    }

    #[test]
    fn turn_limit_forces_answer_after_exactly_five_actions() {
        let turns: Vec<String> = (0..6)
            .map(|i| search_turn(&format!("Searching round {i}."), &[&format!("query {i}")]))
            .collect();
        let policy = ScriptedBackend::in_order(turns);
        let web = ScriptedWebBackend::default();
        let t = run_agent("Unanswerable?", &policy, &web, &cfg(65_536, 5));
        assert_eq!(t.turns(), 5);
        assert_eq!(t.termination, Termination::TurnLimit);
        // The forced turn still carried a tool call; it was dropped.
        assert!(t.steps.last().unwrap().action.is_none());
        t.validate().unwrap();
    }

    #[test]
    fn context_limit_closes_episode() {
        let policy = ScriptedBackend::in_order([answer_turn("never reached", "x")]);
        let web = ScriptedWebBackend::default();
        let question = "q ".repeat(3000); // ~1500 units > 1024
        let t = run_agent(&question, &policy, &web, &cfg(1024, 10));
        assert_eq!(t.termination, Termination::ContextLimit);
        assert_eq!(t.turns(), 0);
        assert!(t.final_answer.is_none());
        t.validate().unwrap();
    }

    #[test]
    fn backend_failure_preserves_partial_trajectory() {
        let policy = ScriptedBackend::in_order([search_turn("First search.", &["a"])]);
        let web = ScriptedWebBackend::default();
        let t = run_agent("q", &policy, &web, &cfg(8192, 10));
        assert_eq!(t.termination, Termination::BackendError);
        assert_eq!(t.turns(), 1);
        assert!(t.steps.last().unwrap().thought.text.contains("policy backend failed"));
        t.validate().unwrap();
    }

    #[test]
    fn unparseable_tool_call_ends_episode_cleanly() {
        let policy = ScriptedBackend::in_order([
            "<think>\nbad call\n</think>\n\n<tool_call>\nnot json at all\n</tool_call>".to_string(),
        ]);
        let web = ScriptedWebBackend::default();
        let t = run_agent("q", &policy, &web, &cfg(8192, 10));
        assert_eq!(t.termination, Termination::Answered);
        assert!(t.final_answer.is_none());
        t.validate().unwrap();
    }

    #[test]
    fn multi_step_episode_round_trips_and_validates() {
        let mut web = ScriptedWebBackend::default();
        web.hits.insert(
            "campaign".into(),
            vec![crate::tools::SearchHit {
                title: "Campaign Page".into(),
                url: "https://funding.test/campaign".into(),
                snippet: "the campaign raised a record total".into(),
            }],
        );
        web.pages.insert("https://funding.test/campaign".into(), "The total was 433365.".into());
        web.reader.push(("total".into(), "The final total was 433365.".into()));
        let policy = ScriptedBackend::in_order([
            search_turn("Find the campaign.", &["campaign"]),
            browse_turn("Open the page.", "https://funding.test/campaign", "what was the total?"),
            answer_turn("The total is confirmed.", "433365"),
        ]);
        let t = run_agent("What was the final total?", &policy, &web, &cfg(65_536, 10));
        assert_eq!(t.turns(), 2);
        assert_eq!(t.final_answer.as_deref(), Some("433365"));
        let rendered = render_trajectory(&t);
        assert!(validate_format(&rendered).well_formed);
        let reparsed = crate::trajectory::parse_trajectory(&rendered).unwrap();
        assert!(reparsed.structurally_eq(&t));
        assert!(t.steps[0].observation.as_ref().unwrap().text.contains("--- search result for [campaign] ---"));
        assert!(t.steps[1].observation.as_ref().unwrap().text.contains("433365"));
    }

    #[test]
    fn observation_truncated_to_budget_with_flag() {
        let mut web = ScriptedWebBackend::default();
        web.hits.insert(
            "big".into(),
            vec![crate::tools::SearchHit {
                title: "T".repeat(2000),
                url: "https://x.test/big".into(),
                snippet: "s".repeat(4000),
            }],
        );
        let policy = ScriptedBackend::in_order([
            search_turn("Search something huge.", &["big"]),
            answer_turn("done", "n/a"),
        ]);
        let mut config = cfg(65_536, 10);
        config.observation_budget_units = 64;
        let t = run_agent("q", &policy, &web, &config);
        let obs = t.steps[0].observation.as_ref().unwrap();
        assert!(obs.truncated);
        assert!(obs.text.ends_with(crate::trajectory::TRUNCATION_NOTICE));
        let payload = obs.text.strip_suffix(crate::trajectory::TRUNCATION_NOTICE).unwrap();
        assert_eq!(payload.chars().count(), 64 * 4);
    }

    #[test]
    fn judge_exact_number() {
        assert!(judge("q", "433365", "433365", None).correct);
        assert_eq!(judge("q", "433365", "433365", None).judge_kind, JudgeKind::NormalizedMatch);
    }

    #[test]
    fn judge_normalization_handles_phrasing() {
        let v = judge("q", "The answer is 83rd minute.", "83rd minute", None);
        assert!(v.correct);
        assert!(v.raw_judge_text.is_none());
        assert!(!judge("q", "84th minute", "83rd minute", None).correct);
    }

    #[test]
    fn llm_judge_parses_final_token() {
        let backend = ScriptedBackend::in_order([
            "The prediction matches the truth.\nCORRECT".to_string(),
        ]);
        let v = judge("q", "x", "x", Some(&backend));
        assert!(v.correct);
        assert_eq!(v.judge_kind, JudgeKind::Llm);
        assert!(v.raw_judge_text.is_some());

        let backend = ScriptedBackend::in_order(["Close, but no.\nINCORRECT".to_string()]);
        assert!(!judge("q", "x", "y", Some(&backend)).correct);
    }

    #[test]
    fn unparseable_judge_falls_back_to_normalized() {
        let backend = ScriptedBackend::in_order(["no verdict token here".to_string()]);
        let v = judge("q", "83rd minute", "83rd minute", Some(&backend));
        assert!(v.correct);
        assert_eq!(v.judge_kind, JudgeKind::NormalizedMatch);
        assert!(v.raw_judge_text.is_none());
    }

    struct FixedScripts {
        by_rollout: Vec<Vec<String>>,
    }

    impl PolicyProvider for FixedScripts {
        fn policy(&self, _question: usize, rollout: usize) -> Box<dyn LlmBackend> {
            let script = self.by_rollout[rollout % self.by_rollout.len()].clone();
            Box::new(ScriptedBackend::in_order(script))
        }
    }

    fn item(q: &str, a: &str) -> QaItem {
        QaItem { id: format!("q-{}", crate::llm::hash_text(q)), question: q.into(), truth: a.into() }
    }

    #[test]
    fn group_of_eight_has_eight_members() {
        let provider =
            FixedScripts { by_rollout: vec![vec![answer_turn("quick", "yes")]] };
        let web = ScriptedWebBackend::default();
        let group = rollout_group(&item("q?", "yes"), 0, 8, &provider, &web, None, &cfg(8192, 5), 4);
        assert_eq!(group.trajectories.len(), 8);
        assert_eq!(group.verdicts.len(), 8);
        assert!(group.verdicts.iter().all(|v| v.correct));
    }

    #[test]
    fn single_member_group_is_valid() {
        let provider = FixedScripts { by_rollout: vec![vec![answer_turn("quick", "no")]] };
        let web = ScriptedWebBackend::default();
        let group = rollout_group(&item("q?", "yes"), 0, 1, &provider, &web, None, &cfg(8192, 5), 1);
        assert_eq!(group.trajectories.len(), 1);
        assert!(!group.verdicts[0].correct);
    }

    #[test]
    fn identical_scripts_produce_identical_rollouts() {
        let provider = FixedScripts {
            by_rollout: vec![vec![
                search_turn("look", &["alpha"]),
                answer_turn("done", "alpha"),
            ]],
        };
        let web = ScriptedWebBackend::default();
        let group =
            rollout_group(&item("find alpha", "alpha"), 0, 4, &provider, &web, None, &cfg(8192, 5), 4);
        let first = serde_json::to_string(&group.trajectories[0]).unwrap();
        for t in &group.trajectories[1..] {
            assert_eq!(serde_json::to_string(t).unwrap(), first);
        }
    }

    #[test]
    fn collect_retains_first_success_only() {
        // Attempt 0 answers wrong, attempt 1 answers right, attempt 2
        // would answer right again but is never reached.
        let provider = FixedScripts {
            by_rollout: vec![
                vec![answer_turn("guess", "wrong")],
                vec![answer_turn("better", "right")],
                vec![answer_turn("also right", "right")],
            ],
        };
        let web = ScriptedWebBackend::default();
        let outcome =
            collect_sft(&[item("q?", "right")], 3, &provider, &web, None, &cfg(8192, 5), 1);
        assert_eq!(outcome.records.len(), 1);
        assert_eq!(outcome.manifest[0].attempts, 2);
        assert_eq!(outcome.manifest[0].successes, 1);
        assert!(outcome.manifest[0].retained);
        assert!(outcome.records[0].correct);
    }

    #[test]
    fn collect_with_all_failures_retains_nothing() {
        let provider = FixedScripts { by_rollout: vec![vec![answer_turn("guess", "wrong")]] };
        let web = ScriptedWebBackend::default();
        let outcome =
            collect_sft(&[item("q?", "right")], 3, &provider, &web, None, &cfg(8192, 5), 1);
        assert!(outcome.records.is_empty());
        assert_eq!(outcome.manifest.len(), 1);
        assert_eq!(outcome.manifest[0].attempts, 3);
        assert_eq!(outcome.manifest[0].successes, 0);
    }

    #[test]
    fn retained_records_rejudge_correct() {
        let provider = FixedScripts {
            by_rollout: vec![
                vec![answer_turn("a", "wrong")],
                vec![answer_turn("b", "the right answer")],
            ],
        };
        let web = ScriptedWebBackend::default();
        let dataset = vec![item("q1?", "right answer"), item("q2?", "right answer")];
        let outcome = collect_sft(&dataset, 2, &provider, &web, None, &cfg(8192, 5), 2);
        for record in &outcome.records {
            let prediction = record.record.final_answer.clone().unwrap_or_default();
            assert!(judge(&record.record.question, &prediction, &record.truth, None).correct);
        }
        assert_eq!(outcome.records.len(), 2);
    }

    #[test]
    fn avg_at_k_scores_three_of_four() {
        let provider = FixedScripts {
            by_rollout: vec![
                vec![answer_turn("r0", "yes")],
                vec![answer_turn("r1", "no")],
                vec![answer_turn("r2", "yes")],
                vec![answer_turn("r3", "yes")],
            ],
        };
        let web = ScriptedWebBackend::default();
        let report = evaluate_avg_at_k(&[item("q?", "yes")], 4, &provider, &web, None, &cfg(8192, 5), 1);
        assert_eq!(report.score, 0.75);
        assert_eq!(report.per_question[0].verdicts, vec![true, false, true, true]);
    }

    #[test]
    fn avg_at_k_all_correct_is_one() {
        let provider = FixedScripts { by_rollout: vec![vec![answer_turn("r", "yes")]] };
        let web = ScriptedWebBackend::default();
        let report = evaluate_avg_at_k(
            &[item("a?", "yes"), item("b?", "yes")],
            4,
            &provider,
            &web,
            None,
            &cfg(8192, 5),
            2,
        );
        assert_eq!(report.score, 1.0);
    }

    #[test]
    fn limits_flag_grammar() {
        let l = RolloutLimits::parse_flag("64k:50").unwrap();
        assert_eq!(l.max_context_units, 65_536);
        assert_eq!(l.max_turns, 50);
        let l = RolloutLimits::parse_flag("4096:5").unwrap();
        assert_eq!(l.max_context_units, 4096);
        assert!(RolloutLimits::parse_flag("64k").is_err());
        assert!(RolloutLimits::parse_flag("512:5").is_err()); // below 1024 floor
        assert!(RolloutLimits::parse_flag("64k:0").is_err());
    }

    #[test]
    fn script_exhausted_is_a_backend_error_termination() {
        let policy = ScriptedBackend::in_order(Vec::<String>::new());
        let err = policy.complete(&ChatRequest::new(
            vec![Message::new(Role::User, "x")],
            DecodeParams::rollout(),
        ));
        assert!(matches!(err, Err(LlmError::ScriptExhausted(_))));
        let web = ScriptedWebBackend::default();
        let t = run_agent("q", &policy, &web, &cfg(8192, 5));
        assert_eq!(t.termination, Termination::BackendError);
    }
}
