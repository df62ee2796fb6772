//! Brute-force ground-truth oracle.
//!
//! Synthesized questions carry a structured constraint set describing the
//! target entity; the oracle exhaustively enumerates every entity
//! satisfying the constraints and resolves the asked relation for each.
//! A QA pair is sound only when exactly one entity satisfies the set and
//! the asked relation resolves on it. Text understanding stays with the
//! model; the oracle never reads question text.

use serde::{Deserialize, Serialize};

use super::{FactObject, Literal, World, WorldError};

/// Default bound on constraint nesting depth.
pub const DEFAULT_DEPTH_LIMIT: u32 = 8;

/// Pattern over literal fact objects. The vaguer variants are what query
/// evolution produces from exact literals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LitPattern {
    Exact(Literal),
    /// Years within `[decade, decade + 9]`.
    YearInDecade(u32),
    NumberBetween(i64, i64),
}

impl LitPattern {
    pub fn matches(&self, lit: &Literal) -> bool {
        match (self, lit) {
            (LitPattern::Exact(expected), got) => expected == got,
            (LitPattern::YearInDecade(decade), Literal::Year(y)) => {
                *y >= *decade && *y < *decade + 10
            }
            (LitPattern::NumberBetween(lo, hi), Literal::Number(n)) => *n >= *lo && *n <= *hi,
            _ => false,
        }
    }

    /// English rendering used when templating question text.
    pub fn render(&self) -> String {
        match self {
            LitPattern::Exact(lit) => lit.to_string(),
            LitPattern::YearInDecade(decade) => format!("the {decade}s"),
            LitPattern::NumberBetween(lo, hi) => format!("between {lo} and {hi}"),
        }
    }
}

/// Object side of a `Has` constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectPattern {
    Literal(LitPattern),
    Entity(Box<EntityPattern>),
}

/// One requirement on an entity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    /// The entity has an outgoing fact `(relation, object)`.
    Has { relation: String, object: ObjectPattern },
    /// Some entity matching `subject` has a fact `(relation, this entity)`.
    ReferencedBy { relation: String, subject: Box<EntityPattern> },
}

/// Conjunction of constraints, optionally anchored to an exact entity name
/// (the salient anchor that evolution later obscures).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EntityPattern {
    pub name: Option<String>,
    pub constraints: Vec<Constraint>,
}

/// A question in structured form: the target description plus the relation
/// whose object is the answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub target: EntityPattern,
    pub ask_relation: String,
}

/// One satisfying entity with its resolved answer and evidence chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleAnswer {
    pub entity_id: u32,
    pub entity_name: String,
    /// Rendered object of the asked relation, when the entity has one.
    pub value: Option<String>,
    /// Number of fact edges in this entity's cheapest evidence chain.
    pub hops: u32,
    pub evidence: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub answers: Vec<OracleAnswer>,
    /// Shortest evidence chain over all satisfying entities.
    pub min_hops: Option<u32>,
}

impl OracleSolution {
    /// The unique answer value, when exactly one entity satisfies the
    /// constraints and the asked relation resolves on it.
    pub fn unique_answer(&self) -> Option<&str> {
        match self.answers.as_slice() {
            [only] => only.value.as_deref(),
            _ => None,
        }
    }

    pub fn is_unique(&self) -> bool {
        self.unique_answer().is_some()
    }
}

fn pattern_depth(pattern: &EntityPattern) -> u32 {
    let mut deepest = 0;
    for c in &pattern.constraints {
        let d = match c {
            Constraint::Has { object: ObjectPattern::Entity(sub), .. } => pattern_depth(sub),
            Constraint::Has { object: ObjectPattern::Literal(_), .. } => 0,
            Constraint::ReferencedBy { subject, .. } => pattern_depth(subject),
        };
        deepest = deepest.max(d);
    }
    deepest + 1
}

/// Cheapest satisfaction of `pattern` by entity `id`: (fact edges used,
/// rendered evidence), or None.
fn satisfy(world: &World, id: u32, pattern: &EntityPattern) -> Option<(u32, Vec<String>)> {
    let entity = world.entity(id)?;
    if let Some(name) = &pattern.name {
        if &entity.name != name {
            return None;
        }
    }
    let mut total_hops = 0u32;
    let mut evidence = Vec::new();
    for constraint in &pattern.constraints {
        let mut best: Option<(u32, Vec<String>)> = None;
        match constraint {
            Constraint::Has { relation, object } => {
                for fact in entity.facts.iter().filter(|f| &f.relation == relation) {
                    let candidate = match (object, &fact.object) {
                        (ObjectPattern::Literal(lp), FactObject::Literal(lit)) => {
                            lp.matches(lit).then(|| (1, vec![world.fact_sentence(entity, fact)]))
                        }
                        (ObjectPattern::Entity(sub), FactObject::Entity(oid)) => {
                            satisfy(world, *oid, sub).map(|(hops, mut ev)| {
                                ev.insert(0, world.fact_sentence(entity, fact));
                                (hops + 1, ev)
                            })
                        }
                        _ => None,
                    };
                    if let Some(c) = candidate {
                        if best.as_ref().map_or(true, |b| c.0 < b.0) {
                            best = Some(c);
                        }
                    }
                }
            }
            Constraint::ReferencedBy { relation, subject } => {
                for (subject_id, fact) in world.incoming_facts(id) {
                    if &fact.relation != relation {
                        continue;
                    }
                    let subject_entity = world.entity(subject_id).expect("incoming fact subject");
                    if let Some((hops, mut ev)) = satisfy(world, subject_id, subject) {
                        ev.insert(0, world.fact_sentence(subject_entity, fact));
                        let c = (hops + 1, ev);
                        if best.as_ref().map_or(true, |b| c.0 < b.0) {
                            best = Some(c);
                        }
                    }
                }
            }
        }
        let (hops, ev) = best?;
        total_hops += hops;
        evidence.extend(ev);
    }
    Some((total_hops, evidence))
}

/// Exhaustive search for every entity satisfying the constraint set.
pub fn oracle_solve(
    world: &World,
    constraints: &ConstraintSet,
    depth_limit: u32,
) -> Result<OracleSolution, WorldError> {
    if pattern_depth(&constraints.target) > depth_limit {
        return Err(WorldError::DepthExceeded(depth_limit));
    }
    let mut answers = Vec::new();
    for entity in &world.entities {
        if let Some((hops, evidence)) = satisfy(world, entity.id, &constraints.target) {
            let value = entity
                .facts
                .iter()
                .find(|f| f.relation == constraints.ask_relation)
                .map(|f| world.render_object(&f.object));
            answers.push(OracleAnswer {
                entity_id: entity.id,
                entity_name: entity.name.clone(),
                value,
                hops,
                evidence,
            });
        }
    }
    let min_hops = answers.iter().map(|a| a.hops).min();
    Ok(OracleSolution { answers, min_hops })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simweb::tests::micro_world;

    fn founded_in(year: u32) -> Constraint {
        Constraint::Has {
            relation: "was founded in".into(),
            object: ObjectPattern::Literal(LitPattern::Exact(Literal::Year(year))),
        }
    }

    #[test]
    fn unique_pin_resolves_single_answer() {
        let world = micro_world();
        let cs = ConstraintSet {
            target: EntityPattern { name: None, constraints: vec![founded_in(1971)] },
            ask_relation: "employs".into(),
        };
        let solution = oracle_solve(&world, &cs, DEFAULT_DEPTH_LIMIT).unwrap();
        assert_eq!(solution.answers.len(), 1);
        assert_eq!(solution.unique_answer(), Some("44"));
        assert_eq!(solution.min_hops, Some(1));
    }

    #[test]
    fn vagued_decade_matching_two_entities_is_ambiguous() {
        let world = micro_world();
        // Alpha (1962) and Beta (1967) both fall in the 1960s.
        let cs = ConstraintSet {
            target: EntityPattern {
                name: None,
                constraints: vec![Constraint::Has {
                    relation: "was founded in".into(),
                    object: ObjectPattern::Literal(LitPattern::YearInDecade(1960)),
                }],
            },
            ask_relation: "was founded in".into(),
        };
        let solution = oracle_solve(&world, &cs, DEFAULT_DEPTH_LIMIT).unwrap();
        assert_eq!(solution.answers.len(), 2);
        assert!(!solution.is_unique());
    }

    #[test]
    fn three_constraint_chain_has_three_hops() {
        let world = micro_world();
        // Gamma is referenced by Beta, which is referenced by the entity
        // founded in 1962 (Alpha): a 3-edge evidence chain.
        let cs = ConstraintSet {
            target: EntityPattern {
                name: None,
                constraints: vec![Constraint::ReferencedBy {
                    relation: "collaborated with".into(),
                    subject: Box::new(EntityPattern {
                        name: None,
                        constraints: vec![Constraint::ReferencedBy {
                            relation: "collaborated with".into(),
                            subject: Box::new(EntityPattern {
                                name: None,
                                constraints: vec![founded_in(1962)],
                            }),
                        }],
                    }),
                }],
            },
            ask_relation: "employs".into(),
        };
        let solution = oracle_solve(&world, &cs, DEFAULT_DEPTH_LIMIT).unwrap();
        assert_eq!(solution.answers.len(), 1);
        assert_eq!(solution.answers[0].entity_name, "Gamma House");
        assert_eq!(solution.min_hops, Some(3));
        assert_eq!(solution.unique_answer(), Some("44"));
        assert_eq!(solution.answers[0].evidence.len(), 3);
    }

    #[test]
    fn evidence_replays_against_world_facts() {
        let world = micro_world();
        let cs = ConstraintSet {
            target: EntityPattern {
                name: Some("Gamma House".into()),
                constraints: vec![founded_in(1971)],
            },
            ask_relation: "employs".into(),
        };
        let solution = oracle_solve(&world, &cs, DEFAULT_DEPTH_LIMIT).unwrap();
        for line in &solution.answers[0].evidence {
            // Every evidence sentence must exist verbatim on some page.
            assert!(
                world.pages.values().any(|p| p.body.contains(line)),
                "evidence {line:?} not on any page"
            );
        }
    }

    #[test]
    fn depth_limit_enforced() {
        let world = micro_world();
        let mut pattern = EntityPattern { name: None, constraints: vec![founded_in(1962)] };
        for _ in 0..9 {
            pattern = EntityPattern {
                name: None,
                constraints: vec![Constraint::ReferencedBy {
                    relation: "collaborated with".into(),
                    subject: Box::new(pattern),
                }],
            };
        }
        let cs = ConstraintSet { target: pattern, ask_relation: "employs".into() };
        assert!(matches!(
            oracle_solve(&world, &cs, DEFAULT_DEPTH_LIMIT),
            Err(WorldError::DepthExceeded(_))
        ));
    }

    #[test]
    fn named_anchor_restricts_match() {
        let world = micro_world();
        let cs = ConstraintSet {
            target: EntityPattern { name: Some("Alpha Corp".into()), constraints: vec![] },
            ask_relation: "was founded in".into(),
        };
        let solution = oracle_solve(&world, &cs, DEFAULT_DEPTH_LIMIT).unwrap();
        assert_eq!(solution.unique_answer(), Some("1962"));
    }
}
