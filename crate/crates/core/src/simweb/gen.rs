//! Seeded world generation: pseudo-word vocabulary, entity graph, and
//! page templating. Uses only the supplied seeds; no ambient randomness.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::{Entity, Fact, FactObject, Literal, World, WorldError, WorldParams};

pub(crate) const ENTITY_RELATIONS: &[&str] =
    &["collaborated with", "was mentored by", "succeeded", "acquired", "partnered with", "rivaled"];
pub(crate) const YEAR_RELATIONS: &[&str] =
    &["was founded in", "debuted in", "was dissolved in", "relocated in"];
pub(crate) const NUMBER_RELATIONS: &[&str] =
    &["employs", "comprises", "holds a record of", "spans"];
pub(crate) const PLACE_RELATIONS: &[&str] =
    &["is based in", "originated in", "operates from", "maintains an archive in"];

const ONSETS: &[&str] = &[
    "b", "br", "c", "cr", "d", "dr", "f", "fl", "g", "gl", "h", "j", "k", "l", "m", "n", "p",
    "pr", "r", "s", "st", "t", "tr", "v", "w", "z",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ea", "io"];
const CODAS: &[&str] = &["", "n", "r", "l", "s", "th", "nd", "rk", "m"];
const PLACE_SUFFIXES: &[&str] = &["ford", "burg", "haven", "port", "dale", "mere"];

/// Distinct pseudo-word pools derived from the vocabulary seed alone.
pub(crate) struct Vocabulary {
    pub words: Vec<String>,
    pub places: Vec<String>,
}

fn make_word(rng: &mut ChaCha8Rng, syllables: usize) -> String {
    let mut word = String::new();
    for _ in 0..syllables {
        word.push_str(ONSETS[rng.gen_range(0..ONSETS.len())]);
        word.push_str(VOWELS[rng.gen_range(0..VOWELS.len())]);
        word.push_str(CODAS[rng.gen_range(0..CODAS.len())]);
    }
    let mut chars = word.chars();
    let first = chars.next().expect("word is non-empty").to_ascii_uppercase();
    format!("{first}{}", chars.as_str())
}

impl Vocabulary {
    pub fn new(vocabulary_seed: u64, word_count: usize, place_count: usize) -> Vocabulary {
        let mut rng = ChaCha8Rng::seed_from_u64(vocabulary_seed ^ 0x56_4f_43_41_42);
        let mut words = Vec::with_capacity(word_count);
        let mut seen = std::collections::BTreeSet::new();
        while words.len() < word_count {
            let w = make_word(&mut rng, 2);
            if seen.insert(w.clone()) {
                words.push(w);
            }
        }
        let mut places = Vec::with_capacity(place_count);
        while places.len() < place_count {
            let p = format!(
                "{}{}",
                make_word(&mut rng, 1),
                PLACE_SUFFIXES[rng.gen_range(0..PLACE_SUFFIXES.len())]
            );
            if seen.insert(p.clone()) {
                places.push(p);
            }
        }
        Vocabulary { words, places }
    }
}

pub(crate) fn slug(name: &str) -> String {
    name.to_lowercase()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
        .collect()
}

/// Renders an entity's canonical page: title, one sentence per fact, and
/// out-links for every entity-valued fact.
pub(crate) fn build_page(entity: &Entity, entities: &[Entity]) -> super::Page {
    let mut sentences = Vec::with_capacity(entity.facts.len());
    let mut out_links = std::collections::BTreeSet::new();
    for fact in &entity.facts {
        let object = match &fact.object {
            FactObject::Entity(id) => {
                let target = &entities[*id as usize];
                out_links.insert(World::canonical_url(target));
                target.name.clone()
            }
            FactObject::Literal(lit) => lit.to_string(),
        };
        sentences.push(format!("{} {} {}.", entity.name, fact.relation, object));
    }
    super::Page {
        url: World::canonical_url(entity),
        title: entity.name.clone(),
        body: sentences.join(" "),
        out_links: out_links.into_iter().collect(),
    }
}

/// Generates a world from `(seed, params)`. Deterministic: repeated calls
/// with identical inputs produce byte-identical serialized worlds.
pub fn generate_world(seed: u64, params: WorldParams) -> Result<World, WorldError> {
    params.validate()?;
    let n = params.entity_count as usize;
    let vocab = Vocabulary::new(params.vocabulary_seed, (n * 2).max(128), (n / 2).max(32));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut names = Vec::with_capacity(n);
    let mut seen = std::collections::BTreeSet::new();
    while names.len() < n {
        let a = &vocab.words[rng.gen_range(0..vocab.words.len())];
        let b = &vocab.words[rng.gen_range(0..vocab.words.len())];
        let name = format!("{a} {b}");
        if a != b && seen.insert(name.clone()) {
            names.push(name);
        }
    }

    let mut entities: Vec<Entity> = Vec::with_capacity(n);
    for (id, name) in names.into_iter().enumerate() {
        let id = id as u32;
        let mut facts = Vec::with_capacity(params.facts_per_entity as usize);
        for _ in 0..params.facts_per_entity {
            let fact = if rng.gen::<f64>() < params.link_density {
                let mut other = rng.gen_range(0..params.entity_count);
                if other == id {
                    other = (other + 1) % params.entity_count;
                }
                Fact {
                    relation: ENTITY_RELATIONS[rng.gen_range(0..ENTITY_RELATIONS.len())].to_string(),
                    object: FactObject::Entity(other),
                }
            } else {
                match rng.gen_range(0..3) {
                    0 => Fact {
                        relation: YEAR_RELATIONS[rng.gen_range(0..YEAR_RELATIONS.len())].to_string(),
                        object: FactObject::Literal(Literal::Year(rng.gen_range(1880..=2024))),
                    },
                    1 => Fact {
                        relation: NUMBER_RELATIONS[rng.gen_range(0..NUMBER_RELATIONS.len())]
                            .to_string(),
                        object: FactObject::Literal(Literal::Number(rng.gen_range(2..=99_999))),
                    },
                    _ => Fact {
                        relation: PLACE_RELATIONS[rng.gen_range(0..PLACE_RELATIONS.len())]
                            .to_string(),
                        object: FactObject::Literal(Literal::Place(
                            vocab.places[rng.gen_range(0..vocab.places.len())].clone(),
                        )),
                    },
                }
            };
            facts.push(fact);
        }
        entities.push(Entity { id, name, facts });
    }

    Ok(World::from_entities(seed, params, entities))
}
