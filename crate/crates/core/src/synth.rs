//! Two-stage QA synthesis: model-based exploration from a seed entity
//! produces an initial question/truth pair grounded in an explored
//! information space, then iterative long-to-short evolution hardens the
//! question — removing salient clues, vaguing details, substituting
//! oblique descriptions — while the truth stays fixed.
//!
//! Every evolution round appends its tool calls and thoughts to the same
//! growing information space, so the history after round k+1 always has
//! the round-k history as a strict prefix. Rounds that mutate the truth,
//! leak the answer into the question, or break answer uniqueness are
//! rejected and skipped rather than aborting the pair.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{LlmBackend, LlmError, Message, Role};
use crate::normalize::{leaks_answer, normalize};
use crate::rollout::{agent_loop, AgentConfig};
use crate::simweb::{oracle_solve, ConstraintSet, World, DEFAULT_DEPTH_LIMIT};
use crate::tools::WebBackend;
use crate::trajectory::{payload_json, Termination, Trajectory};

pub const EXPLORATION_PROMPT: &str = include_str!("../prompts/exploration.txt");
pub const EVOLUTION_PROMPT: &str = include_str!("../prompts/evolution.txt");

/// Tag pair used by scripted/sim synthesis to pass the structured
/// constraint set alongside the answer block. Live models never emit it.
pub const CONSTRAINTS_OPEN: &str = "<constraints>";
pub const CONSTRAINTS_CLOSE: &str = "</constraints>";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("final response lacks usable answer tags: {0}")]
    MissingAnswerTags(String),
    #[error("final response contains more than one answer block")]
    MultipleAnswerBlocks,
    #[error("truth changed during evolution: expected {expected:?}, got {got:?}")]
    TruthMutated { expected: String, got: String },
    #[error("normalized truth appears verbatim in the question")]
    AnswerLeak,
    #[error("answer is not unique: {answers} entities satisfy the constraints")]
    NotUnique { answers: usize },
    #[error("invalid synthesis input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Backend(#[from] LlmError),
}

/// Evolution strategies the model can apply in a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyTag {
    RemoveSalient,
    VagueDetail,
    AlternativeDescription,
}

/// One accepted evolution round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionStep {
    /// 1-based, consecutive over accepted rounds.
    pub iteration: u32,
    pub strategy_tags: Vec<StrategyTag>,
    pub question_before: String,
    pub question_after: String,
    /// Truth as restated by this round; always normalization-equal to the
    /// pair's truth.
    pub truth_after: String,
    /// Tool calls made during this round.
    pub augmentation_actions: u32,
}

/// A synthesized question with its fixed truth and full lineage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAPair {
    pub question: String,
    pub truth: String,
    pub seed_entity: String,
    pub lineage: Vec<EvolutionStep>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constraints: Option<ConstraintSet>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub world_seed: Option<u64>,
}

impl QAPair {
    /// Checks the pair invariants: non-empty fields, truth constant across
    /// the lineage, consecutive iteration numbers, and no answer leak in
    /// any question version.
    pub fn validate(&self) -> Result<(), String> {
        if self.question.trim().is_empty() {
            return Err("question is empty".into());
        }
        if self.truth.trim().is_empty() {
            return Err("truth is empty".into());
        }
        if leaks_answer(&self.question, &self.truth) {
            return Err("normalized truth appears verbatim in the question".into());
        }
        let truth_norm = normalize(&self.truth);
        for (i, step) in self.lineage.iter().enumerate() {
            if step.iteration != i as u32 + 1 {
                return Err(format!(
                    "lineage iteration {} at position {i} (expected {})",
                    step.iteration,
                    i + 1
                ));
            }
            if normalize(&step.truth_after) != truth_norm {
                return Err(format!(
                    "lineage step {} carries a different truth: {:?}",
                    step.iteration, step.truth_after
                ));
            }
            if leaks_answer(&step.question_after, &self.truth) {
                return Err(format!("lineage step {} leaks the truth", step.iteration));
            }
        }
        Ok(())
    }
}

/// The growing exploration history H. The trajectory's question is the
/// exploration instruction, not a QA question; steps accumulate across
/// evolution rounds, each round's final thought staying in place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoSpace {
    pub trajectory: Trajectory,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extracted_facts: Option<Vec<String>>,
}

/// A QA exemplar interpolated into the exploration prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub question: String,
    pub answer: String,
}

/// Editable prompt templates with `{seed}`, `{examples}`, `{question}`,
/// `{answer}` placeholders.
#[derive(Debug, Clone)]
pub struct PromptTemplates {
    pub exploration: String,
    pub evolution: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            exploration: EXPLORATION_PROMPT.to_string(),
            evolution: EVOLUTION_PROMPT.to_string(),
        }
    }
}

/// Single-pass placeholder interpolation: `{name}` occurrences are
/// replaced without rescanning substituted text, so values containing
/// braces stay inert.
pub fn interpolate(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    'outer: while let Some(open) = rest.find('{') {
        let (before, from_brace) = rest.split_at(open);
        out.push_str(before);
        for (name, value) in values {
            let pattern = format!("{{{name}}}");
            if from_brace.starts_with(pattern.as_str()) {
                out.push_str(value);
                rest = &from_brace[pattern.len()..];
                continue 'outer;
            }
        }
        out.push('{');
        rest = &from_brace[1..];
    }
    out.push_str(rest);
    out
}

fn render_exemplars(exemplars: &[Exemplar]) -> String {
    exemplars
        .iter()
        .map(|e| format!("Question: {}\nAnswer: {}", e.question, e.answer))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Innermost contents of the first `<{tag}>...</{tag}>` pair inside
/// `text`, searching from `from`. Returns (content, end offset).
fn inner_tag<'t>(text: &'t str, tag: &str, from: usize) -> Option<(&'t str, usize)> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let close_at = from + text[from..].find(close.as_str())?;
    let open_at = text[from..close_at].rfind(open.as_str())? + from;
    Some((&text[open_at + open.len()..close_at], close_at + close.len()))
}

/// Pulls `{question, truth}` from the final `<answer>` block. Strict: one
/// answer block, question tags before truth tags, both non-empty.
pub fn extract_qa(model_text: &str) -> Result<(String, String), SynthError> {
    let opens = model_text.matches("<answer>").count();
    if opens > 1 {
        return Err(SynthError::MultipleAnswerBlocks);
    }
    if opens == 0 {
        return Err(SynthError::MissingAnswerTags("no <answer> block".into()));
    }
    let start = model_text.find("<answer>").expect("counted above") + "<answer>".len();
    let end = start
        + model_text[start..]
            .find("</answer>")
            .ok_or_else(|| SynthError::MissingAnswerTags("unclosed <answer> block".into()))?;
    let block = &model_text[start..end];

    let (question, q_end) = inner_tag(block, "question", 0)
        .ok_or_else(|| SynthError::MissingAnswerTags("no <question> pair inside the answer block".into()))?;
    if question.contains("<truth>") || question.contains("</truth>") {
        return Err(SynthError::MissingAnswerTags("question and truth tags interleaved".into()));
    }
    let (truth, _) = inner_tag(block, "truth", q_end).ok_or_else(|| {
        SynthError::MissingAnswerTags("no <truth> pair after the question".into())
    })?;
    let question = question.trim().to_string();
    let truth = truth.trim().to_string();
    if question.is_empty() {
        return Err(SynthError::MissingAnswerTags("empty question".into()));
    }
    if truth.is_empty() {
        return Err(SynthError::MissingAnswerTags("empty truth".into()));
    }
    Ok((question, truth))
}

/// Parses the optional constraints tag emitted by scripted/sim synthesis.
pub fn extract_constraints(model_text: &str) -> Option<ConstraintSet> {
    let open = model_text.rfind(CONSTRAINTS_OPEN)?;
    let start = open + CONSTRAINTS_OPEN.len();
    let end = start + model_text[start..].find(CONSTRAINTS_CLOSE)?;
    match serde_json::from_str(model_text[start..end].trim()) {
        Ok(cs) => Some(cs),
        Err(err) => {
            log::warn!("ignoring unparseable constraints tag: {err}");
            None
        }
    }
}

/// Outcome of a uniqueness verification.
#[derive(Debug, Clone, PartialEq)]
pub enum Uniqueness {
    Unique,
    NotUnique { answers: usize },
    TruthMismatch { oracle_answer: String },
    /// No verification available (live mode without a vote check).
    Unverified,
}

/// Verifies that a candidate pair's answer is unique.
pub trait UniquenessCheck: Sync {
    fn check(&self, qa: &QAPair) -> Uniqueness;
}

/// Accepts everything; used when no verification is configured.
pub struct NoCheck;

impl UniquenessCheck for NoCheck {
    fn check(&self, _qa: &QAPair) -> Uniqueness {
        Uniqueness::Unverified
    }
}

/// Sim-mode verification: exhaustive oracle solve over the world. The
/// answer must resolve to exactly one entity whose asked value equals the
/// pair's truth.
pub struct OracleCheck {
    world: Arc<World>,
    depth_limit: u32,
}

impl OracleCheck {
    pub fn new(world: Arc<World>) -> Self {
        OracleCheck { world, depth_limit: DEFAULT_DEPTH_LIMIT }
    }
}

impl UniquenessCheck for OracleCheck {
    fn check(&self, qa: &QAPair) -> Uniqueness {
        let Some(constraints) = &qa.constraints else {
            log::warn!("sim-mode QA pair has no constraints; uniqueness unverified");
            return Uniqueness::Unverified;
        };
        match oracle_solve(&self.world, constraints, self.depth_limit) {
            Ok(solution) => match solution.unique_answer() {
                Some(value) if normalize(value) == normalize(&qa.truth) => Uniqueness::Unique,
                Some(value) => Uniqueness::TruthMismatch { oracle_answer: value.to_string() },
                None => Uniqueness::NotUnique { answers: solution.answers.len() },
            },
            Err(err) => {
                log::warn!("oracle solve failed: {err}");
                Uniqueness::NotUnique { answers: 0 }
            }
        }
    }
}

/// Live-mode approximation: N independent solver rollouts; the pair is
/// rejected when two or more distinct confident answers appear.
pub struct VoteCheck<'a> {
    pub policies: &'a (dyn Fn() -> Box<dyn LlmBackend> + Sync),
    pub web: &'a dyn WebBackend,
    pub agent_cfg: &'a AgentConfig,
    pub n: usize,
}

impl UniquenessCheck for VoteCheck<'_> {
    fn check(&self, qa: &QAPair) -> Uniqueness {
        let hedges = ["unknown", "not sure", "cannot", "unclear", "no idea"];
        let mut distinct = std::collections::BTreeSet::new();
        for _ in 0..self.n {
            let policy = (self.policies)();
            let t = crate::rollout::run_agent(&qa.question, policy.as_ref(), self.web, self.agent_cfg);
            if let Some(answer) = &t.final_answer {
                let norm = normalize(answer);
                if !norm.is_empty() && !hedges.iter().any(|h| norm.contains(h)) {
                    distinct.insert(norm);
                }
            }
        }
        if distinct.len() >= 2 {
            Uniqueness::NotUnique { answers: distinct.len() }
        } else {
            Uniqueness::Unique
        }
    }
}

/// Shared wiring for one synthesis job.
pub struct SynthSession<'a> {
    pub web: &'a dyn WebBackend,
    pub uniqueness: &'a dyn UniquenessCheck,
    pub agent_cfg: &'a AgentConfig,
    pub templates: &'a PromptTemplates,
    pub world_seed: Option<u64>,
}

fn check_candidate(session: &SynthSession<'_>, qa: &QAPair) -> Result<(), SynthError> {
    if leaks_answer(&qa.question, &qa.truth) {
        return Err(SynthError::AnswerLeak);
    }
    match session.uniqueness.check(qa) {
        Uniqueness::Unique | Uniqueness::Unverified => Ok(()),
        Uniqueness::NotUnique { answers } => Err(SynthError::NotUnique { answers }),
        Uniqueness::TruthMismatch { oracle_answer } => Err(SynthError::TruthMutated {
            expected: qa.truth.clone(),
            got: oracle_answer,
        }),
    }
}

/// Rebuilds the chat transcript of an information space: the exploration
/// instruction, then each step as assistant/tool messages. The current
/// final answer (carrying the latest answer block) rides on the last
/// assistant message.
fn info_space_messages(info: &Trajectory, system_prompt: &str) -> Vec<Message> {
    let mut messages = vec![
        Message::new(Role::System, system_prompt.to_string()),
        Message::new(Role::User, info.question.clone()),
    ];
    let last = info.steps.len().saturating_sub(1);
    for (i, step) in info.steps.iter().enumerate() {
        let mut content = format!("<think>\n{}\n</think>", step.thought.text);
        if let Some(action) = &step.action {
            content.push_str(&format!("\n\n<tool_call>\n{}\n</tool_call>", payload_json(action)));
        }
        if i == last {
            if let Some(answer) = &info.final_answer {
                content.push_str("\n\n");
                content.push_str(answer);
            }
        }
        messages.push(Message::new(Role::Assistant, content));
        if let Some(obs) = &step.observation {
            messages.push(Message::new(
                Role::Tool,
                format!("<tool_response>\n{}\n</tool_response>", obs.text),
            ));
        }
    }
    messages
}

fn final_text(steps: &[crate::trajectory::Step], final_answer: &Option<String>) -> String {
    let mut text = steps.last().map(|s| s.thought.text.clone()).unwrap_or_default();
    if let Some(answer) = final_answer {
        text.push('\n');
        text.push_str(answer);
    }
    text
}

/// Stage 1: drives the ReAct loop with the exploration prompt, letting the
/// policy decide when to stop, then parses the answer block into an
/// initial QA pair with an empty lineage. The exploration trajectory is
/// returned as the initial information space.
pub fn explore(
    session: &SynthSession<'_>,
    seed_entity: &str,
    exemplars: &[Exemplar],
    policy: &dyn LlmBackend,
) -> Result<(InfoSpace, QAPair), SynthError> {
    if exemplars.len() != 3 {
        return Err(SynthError::InvalidInput(format!(
            "exploration requires exactly 3 exemplars, got {}",
            exemplars.len()
        )));
    }
    let prompt = interpolate(
        &session.templates.exploration,
        &[("seed", seed_entity), ("examples", &render_exemplars(exemplars))],
    );
    let prefix = vec![
        Message::new(Role::System, session.agent_cfg.system_prompt.clone()),
        Message::new(Role::User, prompt.clone()),
    ];
    let (steps, final_answer, termination) =
        agent_loop(&prefix, policy, session.web, session.agent_cfg);
    if termination == Termination::BackendError {
        return Err(SynthError::Backend(LlmError::Backend {
            attempts: 0,
            message: final_text(&steps, &None),
        }));
    }
    let text = final_text(&steps, &final_answer);
    let (question, truth) = extract_qa(&text)?;
    let constraints = extract_constraints(&text);
    let qa = QAPair {
        question,
        truth,
        seed_entity: seed_entity.to_string(),
        lineage: Vec::new(),
        constraints,
        world_seed: session.world_seed,
    };
    check_candidate(session, &qa)?;
    let trajectory = Trajectory::new(
        prompt,
        steps,
        final_answer,
        session.agent_cfg.limits.trajectory_limits(),
        termination,
    );
    Ok((InfoSpace { trajectory, extracted_facts: None }, qa))
}

/// Best-effort classification of the strategies a round claimed to apply,
/// from its stated plan. Untagged rounds are allowed.
fn classify_strategies(texts: &[&str]) -> Vec<StrategyTag> {
    let mut tags = std::collections::BTreeSet::new();
    for text in texts {
        let lower = text.to_lowercase();
        if ["remov", "drop the", "strip the", "delete the"].iter().any(|k| lower.contains(k)) {
            tags.insert(StrategyTag::RemoveSalient);
        }
        if ["vague", "obscur", "blur", "broaden", "decade instead"].iter().any(|k| lower.contains(k)) {
            tags.insert(StrategyTag::VagueDetail);
        }
        if ["alternative", "replac", "instead of naming", "indirect description"]
            .iter()
            .any(|k| lower.contains(k))
        {
            tags.insert(StrategyTag::AlternativeDescription);
        }
    }
    tags.into_iter().collect()
}

/// Stage 2, one round: appends this round's tool calls and thoughts to the
/// information space and returns the hardened pair. Rejects (leaving the
/// caller's pair untouched) when the truth changed, the answer leaked into
/// the question, or uniqueness broke.
pub fn evolve_once(
    session: &SynthSession<'_>,
    history: &InfoSpace,
    qa: &QAPair,
    policy: &dyn LlmBackend,
) -> Result<(InfoSpace, QAPair), SynthError> {
    let evolution_prompt = interpolate(
        &session.templates.evolution,
        &[("question", &qa.question), ("answer", &qa.truth)],
    );
    let mut prefix = info_space_messages(&history.trajectory, &session.agent_cfg.system_prompt);
    prefix.push(Message::new(Role::User, evolution_prompt));
    let (steps, final_answer, termination) =
        agent_loop(&prefix, policy, session.web, session.agent_cfg);
    if termination == Termination::BackendError {
        return Err(SynthError::Backend(LlmError::Backend {
            attempts: 0,
            message: final_text(&steps, &None),
        }));
    }
    let text = final_text(&steps, &final_answer);
    let (question_after, truth_after) = extract_qa(&text)?;
    if normalize(&truth_after) != normalize(&qa.truth) {
        return Err(SynthError::TruthMutated { expected: qa.truth.clone(), got: truth_after });
    }
    let constraints = extract_constraints(&text);

    let mut candidate = QAPair {
        question: question_after.clone(),
        truth: qa.truth.clone(),
        seed_entity: qa.seed_entity.clone(),
        lineage: qa.lineage.clone(),
        constraints,
        world_seed: qa.world_seed,
    };
    check_candidate(session, &candidate)?;

    let thought_texts: Vec<&str> = steps.iter().map(|s| s.thought.text.as_str()).collect();
    candidate.lineage.push(EvolutionStep {
        iteration: qa.lineage.len() as u32 + 1,
        strategy_tags: classify_strategies(&thought_texts),
        question_before: qa.question.clone(),
        question_after,
        truth_after,
        augmentation_actions: steps.iter().filter(|s| s.action.is_some()).count() as u32,
    });

    let mut trajectory = history.trajectory.clone();
    trajectory.steps.extend(steps);
    trajectory.final_answer = final_answer.map(|a| a.trim().to_string()).filter(|a| !a.is_empty());
    Ok((
        InfoSpace { trajectory, extracted_facts: history.extracted_facts.clone() },
        candidate,
    ))
}

/// A skipped evolution round and why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedRound {
    pub round: u32,
    pub reason: String,
}

#[derive(Debug)]
pub struct EvolveOutcome {
    pub info: InfoSpace,
    pub qa: QAPair,
    pub skipped: Vec<SkippedRound>,
}

/// Stage 2: up to `k` evolution rounds threading the growing information
/// space. A failed round is logged and skipped; the pair keeps evolving
/// from its last accepted state.
pub fn evolve(
    session: &SynthSession<'_>,
    history: InfoSpace,
    qa: QAPair,
    k: u32,
    policy_for_round: &dyn Fn(u32, &QAPair) -> Box<dyn LlmBackend>,
) -> EvolveOutcome {
    assert!(k >= 1, "evolution iteration count must be >= 1 (enforced at config parse)");
    let mut info = history;
    let mut current = qa;
    let mut skipped = Vec::new();
    for round in 1..=k {
        let policy = policy_for_round(round, &current);
        match evolve_once(session, &info, &current, policy.as_ref()) {
            Ok((new_info, new_qa)) => {
                info = new_info;
                current = new_qa;
            }
            Err(err) => {
                log::warn!("evolution round {round} skipped: {err}");
                skipped.push(SkippedRound { round, reason: err.to_string() });
            }
        }
    }
    EvolveOutcome { info, qa: current, skipped }
}
