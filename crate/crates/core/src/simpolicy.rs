//! Deterministic scripted "models" over a synthetic world.
//!
//! Sim mode replaces the explorer, evolver, and solver LLMs with planners
//! that read the world directly, then act through the same ReAct loop as
//! live models: every search and browse goes through the tool layer and
//! every emitted text round-trips the same parsers. The result is a fully
//! offline pipeline whose outputs are byte-stable across runs.

use std::sync::Arc;

use crate::llm::{LlmBackend, ScriptedBackend};
use crate::normalize::normalize;
use crate::rollout::PolicyProvider;
use crate::simweb::{
    oracle_solve, Constraint, ConstraintSet, Entity, EntityPattern, FactObject, LitPattern,
    Literal, ObjectPattern, World, DEFAULT_DEPTH_LIMIT,
};
use crate::synth::{QAPair, CONSTRAINTS_CLOSE, CONSTRAINTS_OPEN};
use crate::trajectory::{payload_json, Action};

fn think_call(thought: &str, action: &Action) -> String {
    format!("<think>\n{thought}\n</think>\n\n<tool_call>\n{}\n</tool_call>", payload_json(action))
}

fn final_answer_turn(thought: &str, question: &str, truth: &str, cs: Option<&ConstraintSet>) -> String {
    let mut out = format!(
        "<think>\n{thought}\n</think>\n\n<answer>\n<question>\n{question}\n</question>\n<truth>\n{truth}\n</truth>\n</answer>"
    );
    if let Some(cs) = cs {
        out.push_str(&format!(
            "\n\n{CONSTRAINTS_OPEN}{}{CONSTRAINTS_CLOSE}",
            serde_json::to_string(cs).expect("constraint serialization")
        ));
    }
    out
}

fn stable_hash(text: &str) -> u64 {
    u64::from_str_radix(&crate::llm::hash_text(text)[..16], 16).expect("hex prefix")
}

/// Seed resolution: exact name, then best token overlap, then a
/// hash-picked fallback so any entity list drives the pipeline.
pub fn resolve_entity<'w>(world: &'w World, seed_entity: &str) -> &'w Entity {
    if let Some(e) = world.entity_by_name(seed_entity) {
        return e;
    }
    let seed_tokens: std::collections::BTreeSet<String> =
        crate::simweb::tokenize(seed_entity).into_iter().collect();
    let best = world
        .entities
        .iter()
        .map(|e| {
            let overlap = crate::simweb::tokenize(&e.name)
                .iter()
                .filter(|t| seed_tokens.contains(*t))
                .count();
            (overlap, e)
        })
        .max_by_key(|(overlap, e)| (*overlap, std::cmp::Reverse(e.id)));
    match best {
        Some((overlap, e)) if overlap > 0 => e,
        _ => {
            let idx = (stable_hash(seed_entity) % world.entities.len() as u64) as usize;
            &world.entities[idx]
        }
    }
}

/// How the question asks for a relation's object.
fn ask_phrase(relation: &str) -> String {
    match relation {
        "was founded in" => "In which year was it founded?".into(),
        "debuted in" => "In which year did it debut?".into(),
        "was dissolved in" => "In which year was it dissolved?".into(),
        "relocated in" => "In which year did it relocate?".into(),
        "employs" => "How many people does it employ?".into(),
        "comprises" => "How many parts does it comprise?".into(),
        "holds a record of" => "What record count does it hold?".into(),
        "spans" => "How many units does it span?".into(),
        "is based in" => "Where is it based?".into(),
        "originated in" => "Where did it originate?".into(),
        "operates from" => "Where does it operate from?".into(),
        "maintains an archive in" => "Where does it maintain an archive?".into(),
        other => format!("What is the object of \"{other}\" for it?"),
    }
}

fn describe_pattern(pattern: &EntityPattern) -> String {
    let clauses: Vec<String> = pattern.constraints.iter().map(describe_constraint).collect();
    match (&pattern.name, clauses.is_empty()) {
        (Some(name), true) => name.clone(),
        (Some(name), false) => format!("{name}, which {}", clauses.join(" and which ")),
        (None, true) => "some entity".into(),
        (None, false) => format!("the entity that {}", clauses.join(" and that ")),
    }
}

fn describe_constraint(constraint: &Constraint) -> String {
    match constraint {
        Constraint::Has { relation, object: ObjectPattern::Literal(lp) } => {
            format!("{relation} {}", lp.render())
        }
        Constraint::Has { relation, object: ObjectPattern::Entity(sub) } => {
            format!("{relation} {}", describe_pattern(sub))
        }
        Constraint::ReferencedBy { relation, subject } => {
            format!("{} {relation}", describe_pattern(subject))
        }
    }
}

/// Templated English rendering of a constraint set.
pub fn render_question(cs: &ConstraintSet) -> String {
    format!("Consider {}. {}", describe_pattern(&cs.target), ask_phrase(&cs.ask_relation))
}

/// First literal fact whose relation does not occur earlier in the fact
/// list, so the oracle's first-match resolution lands on it.
fn askable_facts(entity: &Entity) -> Vec<(usize, &crate::simweb::Fact)> {
    let mut out = Vec::new();
    for (i, fact) in entity.facts.iter().enumerate() {
        if !matches!(fact.object, FactObject::Literal(_)) {
            continue;
        }
        if entity.facts[..i].iter().any(|f| f.relation == fact.relation) {
            continue;
        }
        out.push((i, fact));
    }
    out
}

struct PlannedQa {
    constraints: ConstraintSet,
    question: String,
    truth: String,
    /// (entity visited, in walk order) for scripting searches/browses.
    path: Vec<u32>,
}

/// Plans an initial QA pair: walk entity links from the seed, describe the
/// final entity through the incoming-edge chain anchored at the seed's
/// name, and ask for one of its literal facts. The plan is only returned
/// once the oracle confirms a unique answer equal to the truth.
fn plan_initial(world: &World, seed: &Entity) -> Option<PlannedQa> {
    // Walk up to two entity-valued hops, avoiding revisits.
    let mut path = vec![seed.id];
    let mut chain: Vec<(u32, String)> = Vec::new(); // (subject, relation) per hop
    let mut current = seed;
    for _ in 0..2 {
        let next = current.facts.iter().find_map(|f| match f.object {
            FactObject::Entity(oid) if !path.contains(&oid) => {
                Some((f.relation.clone(), oid))
            }
            _ => None,
        });
        let Some((relation, oid)) = next else { break };
        chain.push((current.id, relation));
        path.push(oid);
        current = world.entity(oid).expect("walk stays in the world");
    }

    // Prefer the deepest entity on the path that has an askable fact.
    let target_pos = (0..path.len()).rev().find(|&i| {
        let entity = world.entity(path[i]).expect("path entity");
        !askable_facts(entity).is_empty()
    })?;
    let path = &path[..=target_pos];
    let chain = &chain[..target_pos];
    let target = world.entity(path[target_pos]).expect("target entity");

    // Incoming-edge chain anchored at the seed's name (the salient clue
    // evolution later obscures).
    let mut pattern = EntityPattern { name: Some(seed.name.clone()), constraints: vec![] };
    for (subject_id, relation) in chain {
        let _ = subject_id;
        pattern = EntityPattern {
            name: None,
            constraints: vec![Constraint::ReferencedBy {
                relation: relation.clone(),
                subject: Box::new(pattern),
            }],
        };
    }
    if chain.is_empty() {
        // Degenerate walk: the question anchors the target by name.
        pattern = EntityPattern { name: Some(target.name.clone()), constraints: vec![] };
    }

    for (ask_idx, ask) in askable_facts(target) {
        let mut target_pattern = pattern.clone();
        // One extra salient clue when available: another literal fact.
        if let Some((_, extra)) = askable_facts(target).into_iter().find(|(i, _)| *i != ask_idx) {
            if let FactObject::Literal(lit) = &extra.object {
                target_pattern.constraints.push(Constraint::Has {
                    relation: extra.relation.clone(),
                    object: ObjectPattern::Literal(LitPattern::Exact(lit.clone())),
                });
            }
        }
        let mut cs = ConstraintSet { target: target_pattern, ask_relation: ask.relation.clone() };
        let truth = world.render_object(&ask.object);

        let unique = |cs: &ConstraintSet| {
            oracle_solve(world, cs, DEFAULT_DEPTH_LIMIT)
                .ok()
                .and_then(|s| s.unique_answer().map(|v| normalize(v) == normalize(&truth)))
                .unwrap_or(false)
        };
        if !unique(&cs) {
            // Pin the target by name; names are unique in a valid world.
            cs.target.name = Some(target.name.clone());
            if !unique(&cs) {
                continue;
            }
        }
        let question = render_question(&cs);
        if crate::normalize::leaks_answer(&question, &truth) {
            continue;
        }
        return Some(PlannedQa { constraints: cs, question, truth, path: path.to_vec() });
    }
    None
}

/// Scripted exploration: searches and browses along the planned walk, one
/// extra search on the asked relation, then the answer block with the
/// structured constraints attached.
pub fn explorer_backend(world: &World, seed_entity: &str) -> Box<dyn LlmBackend> {
    let seed = resolve_entity(world, seed_entity);
    let Some(plan) = plan_initial(world, seed) else {
        // No askable plan from this seed: the explorer gives up without
        // answer tags and the sample is discarded upstream.
        return Box::new(ScriptedBackend::in_order([format!(
            "<think>\nThe information space around {seed_entity} is too thin to build a verifiable question.\n</think>\n\nI cannot construct a suitable question from this seed."
        )]));
    };
    let mut turns = Vec::new();
    for (i, id) in plan.path.iter().enumerate() {
        let entity = world.entity(*id).expect("plan path entity");
        let thought = if i == 0 {
            format!("Starting from the seed entity \"{seed_entity}\", I will search for it and open its page.")
        } else {
            format!("The previous page links to {}. Following that connection.", entity.name)
        };
        turns.push(think_call(&thought, &Action::search([entity.name.as_str()]).expect("query")));
        let url = World::canonical_url(entity);
        turns.push(think_call(
            &format!("Opening the page for {} to collect its facts.", entity.name),
            &Action::browse(url, format!("what facts are known about {}?", entity.name)).expect("browse"),
        ));
    }
    let target = world.entity(*plan.path.last().expect("non-empty path")).expect("target");
    turns.push(think_call(
        &format!("Checking the record \"{}\" of {} for a verifiable truth.", plan.constraints.ask_relation, target.name),
        &Action::search([format!("{} {}", target.name, plan.constraints.ask_relation)]).expect("query"),
    ));
    turns.push(final_answer_turn(
        &format!(
            "I explored {} linked page(s) starting from \"{seed_entity}\". Composing a challenging question whose answer is unique and verifiable.",
            plan.path.len()
        ),
        &plan.question,
        &plan.truth,
        Some(&plan.constraints),
    ));
    Box::new(ScriptedBackend::in_order(turns))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Strategy {
    AlternativeDescription,
    VagueDetail,
    RemoveSalient,
}

/// Deepest name anchor in the pattern tree, if any.
fn replace_name_anchor(pattern: &mut EntityPattern, world: &World) -> bool {
    for constraint in pattern.constraints.iter_mut() {
        match constraint {
            Constraint::Has { object: ObjectPattern::Entity(sub), .. } => {
                if replace_name_anchor(sub, world) {
                    return true;
                }
            }
            Constraint::ReferencedBy { subject, .. } => {
                if replace_name_anchor(subject, world) {
                    return true;
                }
            }
            _ => {}
        }
    }
    if let Some(name) = pattern.name.clone() {
        if let Some(entity) = world.entity_by_name(&name) {
            if let Some((_, fact)) = askable_facts(entity).into_iter().next() {
                if let FactObject::Literal(lit) = &fact.object {
                    pattern.name = None;
                    pattern.constraints.push(Constraint::Has {
                        relation: fact.relation.clone(),
                        object: ObjectPattern::Literal(LitPattern::Exact(lit.clone())),
                    });
                    return true;
                }
            }
        }
    }
    false
}

/// First exact literal in the tree becomes a range.
fn vague_literal(pattern: &mut EntityPattern) -> bool {
    for constraint in pattern.constraints.iter_mut() {
        match constraint {
            Constraint::Has { object: ObjectPattern::Literal(lp), .. } => match lp {
                LitPattern::Exact(Literal::Year(y)) => {
                    *lp = LitPattern::YearInDecade(*y / 10 * 10);
                    return true;
                }
                LitPattern::Exact(Literal::Number(n)) => {
                    let lo = *n / 100 * 100;
                    *lp = LitPattern::NumberBetween(lo, lo + 99);
                    return true;
                }
                _ => {}
            },
            Constraint::Has { object: ObjectPattern::Entity(sub), .. } => {
                if vague_literal(sub) {
                    return true;
                }
            }
            Constraint::ReferencedBy { subject, .. } => {
                if vague_literal(subject) {
                    return true;
                }
            }
        }
    }
    false
}

fn apply_strategy(cs: &ConstraintSet, strategy: Strategy, world: &World) -> Option<ConstraintSet> {
    let mut out = cs.clone();
    let applied = match strategy {
        Strategy::AlternativeDescription => replace_name_anchor(&mut out.target, world),
        Strategy::VagueDetail => vague_literal(&mut out.target),
        Strategy::RemoveSalient => {
            if out.target.constraints.len() >= 2 {
                out.target.constraints.pop();
                true
            } else {
                false
            }
        }
    };
    applied.then_some(out)
}

fn strategy_thought(strategy: Strategy) -> (&'static str, &'static str) {
    match strategy {
        Strategy::AlternativeDescription => (
            "I will replace the explicit entity name with an alternative description built from its own facts.",
            "alternative descriptions for the named entity",
        ),
        Strategy::VagueDetail => (
            "I will make one detail more vague, widening the exact figure into its decade-scale range.",
            "events in that decade",
        ),
        Strategy::RemoveSalient => (
            "I will remove a redundant salient description that offers a second path to the answer.",
            "which clues are redundant",
        ),
    }
}

/// Scripted evolution round: picks the first strategy (rotating with the
/// round number) that keeps the oracle answer unique; when none does, it
/// still emits its best candidate and lets the caller's checks reject the
/// round.
pub fn evolver_backend(world: &World, qa: &QAPair, round: u32) -> Box<dyn LlmBackend> {
    let Some(cs) = &qa.constraints else {
        let turn = final_answer_turn(
            "No structured constraints are attached; restating the question unchanged.",
            &qa.question,
            &qa.truth,
            None,
        );
        return Box::new(ScriptedBackend::in_order([turn]));
    };
    let rotation = [
        Strategy::AlternativeDescription,
        Strategy::VagueDetail,
        Strategy::RemoveSalient,
    ];
    let start = (round as usize + stable_hash(&qa.question) as usize) % rotation.len();
    let ordered: Vec<Strategy> = (0..rotation.len()).map(|i| rotation[(start + i) % 3]).collect();

    let unique = |cs: &ConstraintSet| {
        oracle_solve(world, cs, DEFAULT_DEPTH_LIMIT)
            .ok()
            .and_then(|s| s.unique_answer().map(|v| normalize(v) == normalize(&qa.truth)))
            .unwrap_or(false)
    };

    let mut fallback: Option<(Strategy, ConstraintSet)> = None;
    let mut chosen: Option<(Strategy, ConstraintSet)> = None;
    for strategy in ordered {
        if let Some(candidate) = apply_strategy(cs, strategy, world) {
            let question = render_question(&candidate);
            let leak = crate::normalize::leaks_answer(&question, &qa.truth);
            if unique(&candidate) && !leak {
                chosen = Some((strategy, candidate));
                break;
            }
            if fallback.is_none() {
                fallback = Some((strategy, candidate));
            }
        }
    }
    let (strategy, candidate, viable) = match (chosen, fallback) {
        (Some((s, c)), _) => (s, c, true),
        (None, Some((s, c))) => (s, c, false),
        (None, None) => {
            // Nothing left to transform: restate the question as-is.
            let turn = final_answer_turn(
                "Every remaining clue is already minimal; keeping the question unchanged this round.",
                &qa.question,
                &qa.truth,
                Some(cs),
            );
            return Box::new(ScriptedBackend::in_order([turn]));
        }
    };

    let (thought, query) = strategy_thought(strategy);
    let question = render_question(&candidate);
    let verification_note = if viable {
        "The transformed question still has exactly one consistent answer."
    } else {
        "This transformation may widen the answer set; submitting it for verification."
    };
    let turns = vec![
        think_call(thought, &Action::search([query]).expect("query")),
        final_answer_turn(
            &format!("{thought} {verification_note}"),
            &question,
            &qa.truth,
            Some(&candidate),
        ),
    ];
    Box::new(ScriptedBackend::in_order(turns))
}

/// Deterministic success pattern for the scripted solver. Questions whose
/// hash lands on the hard tier never succeed; the rest fail exactly one
/// attempt index in three.
pub fn solver_succeeds(question: &str, attempt: usize) -> bool {
    let h = stable_hash(question);
    if h % 7 == 0 {
        return false;
    }
    (h as usize + attempt) % 3 != 0
}

/// Scripted solver: searches the question, browses the target's page when
/// constraints identify it, and answers the truth — or, on failing
/// attempts, an explicitly inconclusive wrong answer.
pub fn solver_backend(
    world: &World,
    question: &str,
    truth: &str,
    constraints: Option<&ConstraintSet>,
    attempt: usize,
) -> Box<dyn LlmBackend> {
    let query: String = {
        let tokens = crate::simweb::tokenize(question);
        let take = tokens.len().min(5);
        tokens[..take].join(" ")
    };
    let mut turns = vec![think_call(
        &format!("Breaking the question down and probing the web (attempt layout {attempt})."),
        &Action::search([if query.is_empty() { "background".to_string() } else { query }])
            .expect("query"),
    )];
    if !solver_succeeds(question, attempt) {
        turns.push(
            "<think>\nThe retrieved evidence is contradictory; I cannot pin down a single value.\n</think>\n\nI could not determine a confident answer.".to_string(),
        );
        return Box::new(ScriptedBackend::in_order(turns));
    }
    let target = constraints.and_then(|cs| {
        oracle_solve(world, cs, DEFAULT_DEPTH_LIMIT)
            .ok()
            .and_then(|s| s.answers.first().map(|a| a.entity_id))
            .and_then(|id| world.entity(id))
    });
    if let Some(entity) = target {
        let relation = constraints.map(|cs| cs.ask_relation.clone()).unwrap_or_default();
        turns.push(think_call(
            &format!("The results point at {}. Browsing its page for the asked record.", entity.name),
            &Action::browse(
                World::canonical_url(entity),
                format!("what is the object of \"{relation}\" for {}?", entity.name),
            )
            .expect("browse"),
        ));
    }
    turns.push(format!(
        "<think>\nThe gathered evidence supports a single consistent value.\n</think>\n\n{truth}"
    ));
    Box::new(ScriptedBackend::in_order(turns))
}

/// Policy provider over a QA dataset for sim rollouts. `vary_by_rollout`
/// controls whether the attempt pattern varies within a group (collection)
/// or stays fixed (evaluation, where runs must be reproducible).
pub struct SimSolverProvider {
    world: Arc<World>,
    items: Vec<(String, String, Option<ConstraintSet>)>,
    vary_by_rollout: bool,
}

impl SimSolverProvider {
    pub fn new(world: Arc<World>, qa: &[QAPair], vary_by_rollout: bool) -> Self {
        SimSolverProvider {
            world,
            items: qa
                .iter()
                .map(|q| (q.question.clone(), q.truth.clone(), q.constraints.clone()))
                .collect(),
            vary_by_rollout,
        }
    }

    /// For datasets that carry no constraints (plain question/truth
    /// items): the solver answers from the truth directly.
    pub fn from_items(world: Arc<World>, items: &[crate::rollout::QaItem], vary_by_rollout: bool) -> Self {
        SimSolverProvider {
            world,
            items: items.iter().map(|i| (i.question.clone(), i.truth.clone(), None)).collect(),
            vary_by_rollout,
        }
    }
}

impl PolicyProvider for SimSolverProvider {
    fn policy(&self, question_index: usize, rollout_index: usize) -> Box<dyn LlmBackend> {
        let (question, truth, constraints) = &self.items[question_index];
        let attempt = if self.vary_by_rollout { rollout_index } else { 0 };
        solver_backend(&self.world, question, truth, constraints.as_ref(), attempt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rollout::{collect_sft, AgentConfig, QaItem, RolloutLimits};
    use crate::synth::{evolve, explore, Exemplar, InfoSpace, OracleCheck, PromptTemplates, SynthSession};
    use crate::tools::SimWebBackend;

    fn agent_cfg() -> AgentConfig {
        AgentConfig::new(RolloutLimits::new(65_536, 20, "test").unwrap())
    }

    fn exemplars() -> Vec<Exemplar> {
        (0..3)
            .map(|i| Exemplar { question: format!("example {i}?"), answer: format!("answer {i}") })
            .collect()
    }

    fn micro() -> Arc<World> {
        Arc::new(crate::simweb::tests::micro_world())
    }

    #[test]
    fn explorer_walks_chain_with_four_searches_three_browses() {
        let world = micro();
        let web = SimWebBackend::new(world.clone());
        let check = OracleCheck::new(world.clone());
        let templates = PromptTemplates::default();
        let cfg = agent_cfg();
        let session = SynthSession {
            web: &web,
            uniqueness: &check,
            agent_cfg: &cfg,
            templates: &templates,
            world_seed: Some(world.seed),
        };
        let policy = explorer_backend(&world, "Alpha Corp");
        let (info, qa) = explore(&session, "Alpha Corp", &exemplars(), policy.as_ref()).unwrap();
        let searches = info
            .trajectory
            .steps
            .iter()
            .filter(|s| matches!(s.action, Some(Action::Search { .. })))
            .count();
        let browses = info
            .trajectory
            .steps
            .iter()
            .filter(|s| matches!(s.action, Some(Action::Browse { .. })))
            .count();
        assert_eq!(searches, 4, "{:#?}", info.trajectory.steps.iter().map(|s| &s.action).collect::<Vec<_>>());
        assert_eq!(browses, 3);
        // The walk ends on Gamma House; its first askable fact is the
        // founding year.
        assert_eq!(qa.truth, "1971");
        assert!(qa.question.contains("Alpha Corp"));
        assert!(qa.constraints.is_some());
        qa.validate().unwrap();
        // The walked pages produced real observations.
        for step in info.trajectory.steps.iter().filter(|s| s.observation.is_some()) {
            assert!(!step.observation.as_ref().unwrap().text.is_empty());
        }
    }

    #[test]
    fn resolve_entity_falls_back_deterministically() {
        let world = micro();
        assert_eq!(resolve_entity(&world, "Alpha Corp").id, 0);
        assert_eq!(resolve_entity(&world, "alpha corp facts").id, 0); // token overlap
        let a = resolve_entity(&world, "Zebra Unknown Thing").id;
        let b = resolve_entity(&world, "Zebra Unknown Thing").id;
        assert_eq!(a, b);
    }

    #[test]
    fn evolution_on_sim_world_keeps_truth_and_uniqueness() {
        let world = micro();
        let web = SimWebBackend::new(world.clone());
        let check = OracleCheck::new(world.clone());
        let templates = PromptTemplates::default();
        let cfg = agent_cfg();
        let session = SynthSession {
            web: &web,
            uniqueness: &check,
            agent_cfg: &cfg,
            templates: &templates,
            world_seed: Some(world.seed),
        };
        let policy = explorer_backend(&world, "Alpha Corp");
        let (info, qa) = explore(&session, "Alpha Corp", &exemplars(), policy.as_ref()).unwrap();
        let world_for_factory = world.clone();
        let factory = move |round: u32, current: &QAPair| -> Box<dyn LlmBackend> {
            evolver_backend(&world_for_factory, current, round)
        };
        let outcome = evolve(&session, info, qa, 5, &factory);
        assert!(outcome.qa.lineage.len() <= 5);
        outcome.qa.validate().unwrap();
        // Final pair is still oracle-unique with the original truth.
        let cs = outcome.qa.constraints.as_ref().expect("constraints carried");
        let solution = oracle_solve(&world, cs, DEFAULT_DEPTH_LIMIT).unwrap();
        assert_eq!(
            solution.unique_answer().map(normalize),
            Some(normalize(&outcome.qa.truth))
        );
        // Monotone history across all accepted rounds.
        assert!(outcome.info.trajectory.steps.len() >= 2);
    }

    #[test]
    fn evolution_obscures_the_seed_name_eventually() {
        let world = micro();
        let web = SimWebBackend::new(world.clone());
        let check = OracleCheck::new(world.clone());
        let templates = PromptTemplates::default();
        let cfg = agent_cfg();
        let session = SynthSession {
            web: &web,
            uniqueness: &check,
            agent_cfg: &cfg,
            templates: &templates,
            world_seed: Some(world.seed),
        };
        let policy = explorer_backend(&world, "Alpha Corp");
        let (info, qa) = explore(&session, "Alpha Corp", &exemplars(), policy.as_ref()).unwrap();
        assert!(qa.question.contains("Alpha Corp"), "initial question anchors the seed: {}", qa.question);
        let world_for_factory = world.clone();
        let factory = move |round: u32, current: &QAPair| -> Box<dyn LlmBackend> {
            evolver_backend(&world_for_factory, current, round)
        };
        let outcome = evolve(&session, info, qa, 5, &factory);
        let renamed = outcome
            .qa
            .lineage
            .iter()
            .any(|s| s.strategy_tags.contains(&crate::synth::StrategyTag::AlternativeDescription));
        if renamed {
            assert!(
                !outcome.qa.question.contains("Alpha Corp"),
                "alternative-description round left the name in: {}",
                outcome.qa.question
            );
        }
    }

    #[test]
    fn solver_success_pattern_is_deterministic_and_varied() {
        let attempts: Vec<bool> = (0..3).map(|a| solver_succeeds("some question?", a)).collect();
        assert_eq!(attempts, (0..3).map(|a| solver_succeeds("some question?", a)).collect::<Vec<_>>());
        // Over many questions, all three outcomes appear: instant success,
        // later success, and hard questions that never succeed.
        let mut instant = 0;
        let mut eventual = 0;
        let mut never = 0;
        for i in 0..60 {
            let q = format!("generated question number {i}?");
            let outcomes: Vec<bool> = (0..3).map(|a| solver_succeeds(&q, a)).collect();
            if outcomes[0] {
                instant += 1;
            } else if outcomes.iter().any(|b| *b) {
                eventual += 1;
            } else {
                never += 1;
            }
        }
        assert!(instant > 0 && eventual > 0 && never > 0, "{instant}/{eventual}/{never}");
    }

    #[test]
    fn scripted_solver_collects_rejudgeable_records() {
        let world = micro();
        let web = SimWebBackend::new(world.clone());
        let items: Vec<QaItem> = (0..6)
            .map(|i| QaItem {
                id: format!("q{i}"),
                question: format!("Which value belongs to record {i}?"),
                truth: format!("value-{i}"),
            })
            .collect();
        let provider = SimSolverProvider::from_items(world, &items, true);
        let outcome = collect_sft(&items, 3, &provider, &web, None, &agent_cfg(), 2);
        assert_eq!(outcome.manifest.len(), 6);
        for record in &outcome.records {
            let prediction = record.record.final_answer.clone().unwrap_or_default();
            assert!(crate::rollout::judge(&record.record.question, &prediction, &record.truth, None).correct);
        }
        // Deterministic: a second run is identical.
        let world2 = micro();
        let web2 = SimWebBackend::new(world2.clone());
        let provider2 = SimSolverProvider::from_items(world2, &items, true);
        let outcome2 = collect_sft(&items, 3, &provider2, &web2, None, &agent_cfg(), 2);
        assert_eq!(
            serde_json::to_string(&outcome.records).unwrap(),
            serde_json::to_string(&outcome2.records).unwrap()
        );
    }

    #[test]
    fn full_explore_evolve_is_byte_deterministic() {
        let run = || {
            let world = micro();
            let web = SimWebBackend::new(world.clone());
            let check = OracleCheck::new(world.clone());
            let templates = PromptTemplates::default();
            let cfg = agent_cfg();
            let session = SynthSession {
                web: &web,
                uniqueness: &check,
                agent_cfg: &cfg,
                templates: &templates,
                world_seed: Some(world.seed),
            };
            let policy = explorer_backend(&world, "Alpha Corp");
            let (info, qa) = explore(&session, "Alpha Corp", &exemplars(), policy.as_ref()).unwrap();
            let world_for_factory = world.clone();
            let factory = move |round: u32, current: &QAPair| -> Box<dyn LlmBackend> {
                evolver_backend(&world_for_factory, current, round)
            };
            let outcome = evolve(&session, InfoSpace { ..info }, qa, 5, &factory);
            serde_json::to_string(&outcome.qa).unwrap()
        };
        assert_eq!(run(), run());
    }
}
