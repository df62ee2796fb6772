//! Deterministic synthetic web: a seeded entity graph rendered into pages
//! with an inverted search index, plus a brute-force oracle that verifies
//! answer uniqueness for synthesized QA pairs.
//!
//! Identical `(seed, params)` always produce a byte-identical serialized
//! world. The search index is derived data and is rebuilt on load rather
//! than serialized.

mod gen;
mod oracle;
mod search;

pub use gen::generate_world;
pub use oracle::{
    oracle_solve, Constraint, ConstraintSet, EntityPattern, LitPattern, ObjectPattern,
    OracleAnswer, OracleSolution, DEFAULT_DEPTH_LIMIT,
};
pub use search::{sim_search, tokenize, SearchHit, SearchIndex, MAX_RESULTS};

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Versioned header line of the world file format.
pub const WORLD_FORMAT_HEADER: &str = "questweave-simweb/1";

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("invalid world parameters: {0}")]
    InvalidParams(String),
    #[error("page not found: {0}")]
    NotFound(String),
    #[error("constraint chain exceeds the depth limit of {0}")]
    DepthExceeded(u32),
    #[error("world file format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Generation parameters. `link_density` is the probability that a fact
/// points at another entity instead of a literal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldParams {
    pub entity_count: u32,
    pub facts_per_entity: u32,
    pub link_density: f64,
    pub vocabulary_seed: u64,
}

impl Default for WorldParams {
    fn default() -> Self {
        WorldParams { entity_count: 64, facts_per_entity: 5, link_density: 0.35, vocabulary_seed: 1 }
    }
}

impl WorldParams {
    pub fn validate(&self) -> Result<(), WorldError> {
        if self.entity_count < 2 {
            return Err(WorldError::InvalidParams(format!(
                "entity_count must be >= 2, got {}",
                self.entity_count
            )));
        }
        if self.facts_per_entity < 1 {
            return Err(WorldError::InvalidParams("facts_per_entity must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.link_density) {
            return Err(WorldError::InvalidParams(format!(
                "link_density must be in [0, 1], got {}",
                self.link_density
            )));
        }
        Ok(())
    }
}

/// Literal fact object: a date (year), a place name, or a number.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Literal {
    Year(u32),
    Number(i64),
    Place(String),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Year(y) => write!(f, "{y}"),
            Literal::Number(n) => write!(f, "{n}"),
            Literal::Place(p) => write!(f, "{p}"),
        }
    }
}

/// Object of a fact: another entity or a literal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactObject {
    Entity(u32),
    Literal(Literal),
}

/// One (relation, object) attached to its subject entity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fact {
    pub relation: String,
    pub object: FactObject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: u32,
    pub name: String,
    pub facts: Vec<Fact>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Page {
    pub url: String,
    pub title: String,
    pub body: String,
    pub out_links: Vec<String>,
}

/// The synthetic web. Immutable after generation; all read operations are
/// pure, so it is safe to share across any number of rollout workers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct World {
    pub seed: u64,
    pub params: WorldParams,
    pub entities: Vec<Entity>,
    pub pages: BTreeMap<String, Page>,
    #[serde(skip)]
    pub index: SearchIndex,
}

impl World {
    /// Assembles a world from explicit entities, deriving pages and the
    /// index. Used by the generator and by tests that need hand-built
    /// micro-worlds with the same page/index invariants.
    pub fn from_entities(seed: u64, params: WorldParams, entities: Vec<Entity>) -> World {
        let mut pages = BTreeMap::new();
        for entity in &entities {
            let page = gen::build_page(entity, &entities);
            pages.insert(page.url.clone(), page);
        }
        let index = SearchIndex::build(&pages);
        World { seed, params, entities, pages, index }
    }

    pub fn entity(&self, id: u32) -> Option<&Entity> {
        self.entities.get(id as usize)
    }

    pub fn entity_by_name(&self, name: &str) -> Option<&Entity> {
        self.entities.iter().find(|e| e.name == name)
    }

    /// Canonical page URL of an entity. The zero-padded id prefix makes
    /// lexicographic URL order coincide with entity order.
    pub fn canonical_url(entity: &Entity) -> String {
        format!("https://simweb.test/wiki/{:04}-{}", entity.id, gen::slug(&entity.name))
    }

    pub fn render_object(&self, object: &FactObject) -> String {
        match object {
            FactObject::Entity(id) => self
                .entity(*id)
                .map(|e| e.name.clone())
                .unwrap_or_else(|| format!("entity#{id}")),
            FactObject::Literal(lit) => lit.to_string(),
        }
    }

    pub fn fact_sentence(&self, subject: &Entity, fact: &Fact) -> String {
        format!("{} {} {}.", subject.name, fact.relation, self.render_object(&fact.object))
    }

    /// Fetches a page by URL.
    pub fn fetch(&self, url: &str) -> Result<&Page, WorldError> {
        self.pages.get(url).ok_or_else(|| WorldError::NotFound(url.to_string()))
    }

    /// All (subject id, fact) pairs whose object is the given entity.
    pub fn incoming_facts(&self, object_id: u32) -> Vec<(u32, &Fact)> {
        let mut out = Vec::new();
        for entity in &self.entities {
            for fact in &entity.facts {
                if fact.object == FactObject::Entity(object_id) {
                    out.push((entity.id, fact));
                }
            }
        }
        out
    }

    /// Exhaustive structural check over the generated world.
    pub fn validate_full(&self) -> Result<(), String> {
        self.params.validate().map_err(|e| e.to_string())?;
        if self.entities.len() != self.params.entity_count as usize {
            return Err(format!(
                "entity count {} does not match params {}",
                self.entities.len(),
                self.params.entity_count
            ));
        }
        let mut names = std::collections::BTreeSet::new();
        for (i, entity) in self.entities.iter().enumerate() {
            if entity.id as usize != i {
                return Err(format!("entity id {} at position {i}", entity.id));
            }
            if !names.insert(&entity.name) {
                return Err(format!("duplicate entity name {:?}", entity.name));
            }
            let url = World::canonical_url(entity);
            let page = self.pages.get(&url).ok_or(format!("entity {i} has no canonical page"))?;
            for fact in &entity.facts {
                if let FactObject::Entity(oid) = fact.object {
                    if self.entity(oid).is_none() {
                        return Err(format!("fact on entity {i} names unknown entity {oid}"));
                    }
                }
                let sentence = self.fact_sentence(entity, fact);
                if !page.body.contains(&sentence) {
                    return Err(format!("fact sentence missing from page body: {sentence:?}"));
                }
            }
        }
        if self.pages.len() != self.entities.len() {
            return Err(format!(
                "page count {} does not match entity count {}",
                self.pages.len(),
                self.entities.len()
            ));
        }
        for page in self.pages.values() {
            for link in &page.out_links {
                if !self.pages.contains_key(link) {
                    return Err(format!("dangling out_link {link:?} on {}", page.url));
                }
            }
        }
        Ok(())
    }

    /// Serializes the world as the versioned self-describing file format.
    /// Deterministic: identical worlds produce identical bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(WORLD_FORMAT_HEADER.as_bytes());
        out.push(b'\n');
        serde_json::to_writer(&mut out, self).expect("world serialization cannot fail");
        out.push(b'\n');
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<World, WorldError> {
        let text = std::str::from_utf8(bytes)
            .map_err(|e| WorldError::Format(format!("not UTF-8: {e}")))?;
        let (header, body) = text
            .split_once('\n')
            .ok_or_else(|| WorldError::Format("missing header line".into()))?;
        if header != WORLD_FORMAT_HEADER {
            return Err(WorldError::Format(format!(
                "unsupported format header {header:?} (expected {WORLD_FORMAT_HEADER:?})"
            )));
        }
        let mut world: World =
            serde_json::from_str(body).map_err(|e| WorldError::Format(e.to_string()))?;
        world.index = SearchIndex::build(&world.pages);
        Ok(world)
    }

    pub fn save(&self, path: &Path) -> Result<(), WorldError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<World, WorldError> {
        let bytes = std::fs::read(path)?;
        World::from_bytes(&bytes)
    }
}

/// Search over the world's index; see [`search::sim_search`].
pub fn sim_fetch<'w>(world: &'w World, url: &str) -> Result<&'w Page, WorldError> {
    world.fetch(url)
}
