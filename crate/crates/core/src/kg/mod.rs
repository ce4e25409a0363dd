//! Triple store over interned entity and relation labels.

mod build;
mod io;
pub mod schema;

use std::collections::{HashMap, HashSet};
use std::fmt;

use crate::error::{Error, Result};

pub use build::{build_kg, ConfigurationRecord, ProblemRecord};
pub use io::{deserialize_kg, read_kg, serialize_kg, write_kg, write_vocab};
pub use schema::PerformanceLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Triple {
            head,
            relation,
            tail,
        }
    }
}

pub fn validate_label(label: &str) -> Result<()> {
    if label.is_empty() || label.contains(['\t', '\n', '\r']) {
        return Err(Error::InvalidLabel(label.to_string()));
    }
    Ok(())
}

/// Bijective label ↔ dense-index mapping.
#[derive(Debug, Clone, Default)]
pub struct Vocab {
    labels: Vec<String>,
    index: HashMap<String, u32>,
}

impl PartialEq for Vocab {
    fn eq(&self, other: &Self) -> bool {
        self.labels == other.labels
    }
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, label: &str) -> Result<u32> {
        if let Some(&id) = self.index.get(label) {
            return Ok(id);
        }
        validate_label(label)?;
        let id = self.labels.len() as u32;
        self.labels.push(label.to_string());
        self.index.insert(label.to_string(), id);
        Ok(id)
    }

    pub fn get(&self, label: &str) -> Option<u32> {
        self.index.get(label).copied()
    }

    pub fn label(&self, id: u32) -> Option<&str> {
        self.labels.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// A directed labeled graph with set semantics.
///
/// Triples keep insertion order. For every (algorithm, problem) pair at most
/// one of `solved` / `not_solved` may be present; inserting the other is an
/// error.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    entities: Vocab,
    relations: Vocab,
    triples: Vec<Triple>,
    members: HashSet<Triple>,
    by_relation: HashMap<RelationId, Vec<usize>>,
    by_head_relation: HashMap<(EntityId, RelationId), Vec<usize>>,
}

impl Default for KnowledgeGraph {
    fn default() -> Self {
        Self::new()
    }
}

impl KnowledgeGraph {
    /// An empty graph. The schema relations are always registered first, so
    /// `solved` and `not_solved` have the same handles in every graph.
    pub fn new() -> Self {
        let mut relations = Vocab::new();
        for label in schema::RELATIONS {
            relations.intern(label).expect("schema labels are valid");
        }
        KnowledgeGraph {
            entities: Vocab::new(),
            relations,
            triples: Vec::new(),
            members: HashSet::new(),
            by_relation: HashMap::new(),
            by_head_relation: HashMap::new(),
        }
    }

    pub fn entities(&self) -> &Vocab {
        &self.entities
    }

    pub fn relations(&self) -> &Vocab {
        &self.relations
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.members.contains(triple)
    }

    pub fn entity(&self, label: &str) -> Option<EntityId> {
        self.entities.get(label).map(EntityId)
    }

    pub fn relation(&self, label: &str) -> Option<RelationId> {
        self.relations.get(label).map(RelationId)
    }

    pub fn entity_label(&self, id: EntityId) -> &str {
        self.entities.label(id.0).expect("entity handle from this graph")
    }

    pub fn relation_label(&self, id: RelationId) -> &str {
        self.relations
            .label(id.0)
            .expect("relation handle from this graph")
    }

    pub fn intern_entity(&mut self, label: &str) -> Result<EntityId> {
        self.entities.intern(label).map(EntityId)
    }

    pub fn intern_relation(&mut self, label: &str) -> Result<RelationId> {
        self.relations.intern(label).map(RelationId)
    }

    /// Adds a triple by label. Returns `false` if it was already present.
    pub fn insert(&mut self, head: &str, relation: &str, tail: &str) -> Result<bool> {
        let h = self.intern_entity(head)?;
        let r = self.intern_relation(relation)?;
        let t = self.intern_entity(tail)?;
        self.insert_triple(Triple::new(h, r, t))
    }

    /// Adds a triple over handles already registered in this graph.
    pub fn insert_triple(&mut self, triple: Triple) -> Result<bool> {
        if triple.head.index() >= self.entities.len()
            || triple.tail.index() >= self.entities.len()
            || triple.relation.index() >= self.relations.len()
        {
            return Err(Error::Referential(format!(
                "triple {triple:?} references an unregistered handle"
            )));
        }
        if self.members.contains(&triple) {
            return Ok(false);
        }
        if let Some(label) = PerformanceLabel::from_relation(self.relation_label(triple.relation)) {
            let opposite = label.opposite().relation_label();
            if let Some(other) = self.relation(opposite) {
                if self
                    .members
                    .contains(&Triple::new(triple.head, other, triple.tail))
                {
                    return Err(Error::ConflictingPerformance {
                        algorithm: self.entity_label(triple.head).to_string(),
                        problem: self.entity_label(triple.tail).to_string(),
                    });
                }
            }
        }
        let pos = self.triples.len();
        self.triples.push(triple);
        self.members.insert(triple);
        self.by_relation.entry(triple.relation).or_default().push(pos);
        self.by_head_relation
            .entry((triple.head, triple.relation))
            .or_default()
            .push(pos);
        Ok(true)
    }

    pub fn with_relation(&self, relation: RelationId) -> impl Iterator<Item = &Triple> + '_ {
        self.by_relation
            .get(&relation)
            .into_iter()
            .flatten()
            .map(move |&i| &self.triples[i])
    }

    pub fn with_head_relation(
        &self,
        head: EntityId,
        relation: RelationId,
    ) -> impl Iterator<Item = &Triple> + '_ {
        self.by_head_relation
            .get(&(head, relation))
            .into_iter()
            .flatten()
            .map(move |&i| &self.triples[i])
    }

    /// Triples whose relation is `solved` or `not_solved`, in insertion order.
    pub fn performance_triples(&self) -> Vec<Triple> {
        let solved = self.relation(schema::SOLVED);
        let not_solved = self.relation(schema::NOT_SOLVED);
        self.triples
            .iter()
            .filter(|t| Some(t.relation) == solved || Some(t.relation) == not_solved)
            .copied()
            .collect()
    }

    /// Performance label carried by a triple, if its relation is a performance relation.
    pub fn performance_label(&self, triple: &Triple) -> Option<PerformanceLabel> {
        PerformanceLabel::from_relation(self.relation_label(triple.relation))
    }

    /// A graph with the same vocabulary (same handles) and only the triples
    /// accepted by `keep`.
    pub fn filtered(&self, mut keep: impl FnMut(&Triple) -> bool) -> KnowledgeGraph {
        let mut out = KnowledgeGraph {
            entities: self.entities.clone(),
            relations: self.relations.clone(),
            ..KnowledgeGraph::new()
        };
        for t in self.triples.iter().filter(|t| keep(t)) {
            out.insert_triple(*t).expect("subset of a valid graph");
        }
        out
    }

    /// Same vocabulary, descriptive triples of `self` plus the given extra triples.
    pub fn descriptive_plus(&self, extra: impl IntoIterator<Item = Triple>) -> Result<KnowledgeGraph> {
        let mut out = self.filtered(|t| self.performance_label(t).is_none());
        for t in extra {
            out.insert_triple(t)?;
        }
        Ok(out)
    }

    fn label_triples(&self) -> HashSet<(&str, &str, &str)> {
        self.triples
            .iter()
            .map(|t| {
                (
                    self.entity_label(t.head),
                    self.relation_label(t.relation),
                    self.entity_label(t.tail),
                )
            })
            .collect()
    }
}

/// Equality by label content: same entity set, relation set and triple set,
/// regardless of handle assignment or insertion order.
impl PartialEq for KnowledgeGraph {
    fn eq(&self, other: &Self) -> bool {
        let ents = |g: &KnowledgeGraph| g.entities.labels().iter().cloned().collect::<HashSet<_>>();
        let rels = |g: &KnowledgeGraph| g.relations.labels().iter().cloned().collect::<HashSet<_>>();
        self.len() == other.len()
            && ents(self) == ents(other)
            && rels(self) == rels(other)
            && self.label_triples() == other.label_triples()
    }
}

impl fmt::Display for KnowledgeGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "KnowledgeGraph({} entities, {} relations, {} triples)",
            self.entities.len(),
            self.relations.len(),
            self.triples.len()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn interning_is_idempotent() {
        let mut v = Vocab::new();
        let a = v.intern("problem:f1_i1_d5").unwrap();
        let b = v.intern("alg:modDE_0001").unwrap();
        assert_eq!(v.intern("problem:f1_i1_d5").unwrap(), a);
        assert_ne!(a, b);
        assert_eq!(v.label(b), Some("alg:modDE_0001"));
    }

    #[test]
    fn rejects_bad_labels() {
        let mut v = Vocab::new();
        assert!(matches!(v.intern(""), Err(Error::InvalidLabel(_))));
        assert!(matches!(v.intern("a\tb"), Err(Error::InvalidLabel(_))));
        assert!(matches!(v.intern("a\nb"), Err(Error::InvalidLabel(_))));
    }

    #[test]
    fn duplicates_are_ignored() {
        let mut kg = KnowledgeGraph::new();
        assert!(kg.insert("a", "r", "b").unwrap());
        assert!(!kg.insert("a", "r", "b").unwrap());
        assert_eq!(kg.len(), 1);
    }

    #[test]
    fn performance_edges_are_exclusive() {
        let mut kg = KnowledgeGraph::new();
        kg.insert("alg:x", schema::SOLVED, "problem:p").unwrap();
        let err = kg.insert("alg:x", schema::NOT_SOLVED, "problem:p").unwrap_err();
        assert!(matches!(err, Error::ConflictingPerformance { .. }));
    }

    #[test]
    fn descriptive_only_has_no_performance_triples() {
        let mut kg = KnowledgeGraph::new();
        kg.insert("alg:x", schema::HAS_MODULE_SETTING, "module:crossover=bin")
            .unwrap();
        assert!(kg.performance_triples().is_empty());
    }

    #[test]
    fn unregistered_handle_is_rejected() {
        let mut kg = KnowledgeGraph::new();
        kg.insert("a", "r", "b").unwrap();
        let bad = Triple::new(EntityId(0), RelationId(0), EntityId(7));
        assert!(matches!(kg.insert_triple(bad), Err(Error::Referential(_))));
    }

    proptest! {
        #[test]
        fn index_lookups_match_linear_scan(edges in prop::collection::vec((0u8..6, 0u8..3, 0u8..6), 0..60)) {
            let mut kg = KnowledgeGraph::new();
            for (h, r, t) in &edges {
                kg.insert(&format!("e{h}"), &format!("r{r}"), &format!("e{t}")).unwrap();
            }
            for r in 0..kg.relations().len() as u32 {
                let rel = RelationId(r);
                let mut indexed: Vec<_> = kg.with_relation(rel).copied().collect();
                let mut scanned: Vec<_> = kg.triples().iter().filter(|t| t.relation == rel).copied().collect();
                indexed.sort();
                scanned.sort();
                prop_assert_eq!(&indexed, &scanned);
                for h in 0..kg.entities().len() as u32 {
                    let head = EntityId(h);
                    let mut indexed: Vec<_> = kg.with_head_relation(head, rel).copied().collect();
                    let mut scanned: Vec<_> = kg.triples().iter()
                        .filter(|t| t.relation == rel && t.head == head).copied().collect();
                    indexed.sort();
                    scanned.sort();
                    prop_assert_eq!(indexed, scanned);
                }
            }
            let unique: HashSet<_> = kg.triples().iter().collect();
            prop_assert_eq!(unique.len(), kg.len());
        }
    }
}
