//! Temporal knowledge graph primitives: quadruples, vocabularies, parsing
//! and the temporal index that backs rule learning and inference.

mod index;
mod parse;

pub use index::{LeakProbe, TemporalIndex};
pub use parse::{parse_dataset, parse_quads, Dataset, ParseMode};

pub type EntityId = u32;
pub type RelationId = u32;
pub type Timestamp = u32;

/// One temporal fact `(subject, relation, object, timestamp)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Quadruple {
    pub subject: EntityId,
    pub relation: RelationId,
    pub object: EntityId,
    pub timestamp: Timestamp,
}

impl Quadruple {
    pub fn new(
        subject: EntityId,
        relation: RelationId,
        object: EntityId,
        timestamp: Timestamp,
    ) -> Self {
        Self {
            subject,
            relation,
            object,
            timestamp,
        }
    }
}

/// Entity and relation name/id bijections. Relation ids `0..R` are the
/// original relations; `R..2R` are their inverses.
#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    entity_names: Vec<String>,
    relation_names: Vec<String>,
    entity_ids: std::collections::HashMap<String, EntityId>,
    relation_ids: std::collections::HashMap<String, RelationId>,
    original_relations: u32,
}

impl Vocabulary {
    pub fn num_entities(&self) -> usize {
        self.entity_names.len()
    }

    /// Number of original (non-inverse) relations, R.
    pub fn num_original_relations(&self) -> u32 {
        self.original_relations
    }

    /// Total relation count including inverses, 2R.
    pub fn num_relations(&self) -> u32 {
        2 * self.original_relations
    }

    pub fn is_inverse(&self, relation: RelationId) -> bool {
        relation >= self.original_relations
    }

    /// Maps p to p+R and p+R back to p.
    pub fn inverse_relation(&self, relation: RelationId) -> RelationId {
        if relation < self.original_relations {
            relation + self.original_relations
        } else {
            relation - self.original_relations
        }
    }

    pub fn entity_name(&self, id: EntityId) -> &str {
        &self.entity_names[id as usize]
    }

    /// Renders inverse relations as `<name>^-1`.
    pub fn relation_name(&self, id: RelationId) -> String {
        if self.is_inverse(id) {
            format!(
                "{}^-1",
                self.relation_names[(id - self.original_relations) as usize]
            )
        } else {
            self.relation_names[id as usize].clone()
        }
    }

    pub fn entity_id(&self, name: &str) -> Option<EntityId> {
        self.entity_ids.get(name).copied()
    }

    pub fn relation_id(&self, name: &str) -> Option<RelationId> {
        if let Some(base) = name.strip_suffix("^-1") {
            return self
                .relation_ids
                .get(base)
                .map(|&p| p + self.original_relations);
        }
        self.relation_ids.get(name).copied()
    }

    pub fn entity_names(&self) -> &[String] {
        &self.entity_names
    }

    pub fn relation_names(&self) -> &[String] {
        &self.relation_names
    }

    pub(crate) fn intern_entity(&mut self, name: &str) -> EntityId {
        if let Some(&id) = self.entity_ids.get(name) {
            return id;
        }
        let id = self.entity_names.len() as EntityId;
        self.entity_names.push(name.to_string());
        self.entity_ids.insert(name.to_string(), id);
        id
    }

    pub(crate) fn intern_relation(&mut self, name: &str) -> RelationId {
        if let Some(&id) = self.relation_ids.get(name) {
            return id;
        }
        let id = self.relation_names.len() as RelationId;
        self.relation_names.push(name.to_string());
        self.relation_ids.insert(name.to_string(), id);
        id
    }

    pub(crate) fn set_original_relations(&mut self, r: u32) {
        self.original_relations = r;
    }
}

/// Set of time distances `t* - t'` from body groundings to prediction time.
/// Distances beyond the collection window are dropped except that the exact
/// minimum is always retained, since the confidence function reads only
/// `min(Δ)` and the within-window count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeltaSet {
    min: Timestamp,
    /// Sorted ascending, all elements <= collection window.
    within: Vec<Timestamp>,
    window: Timestamp,
}

impl DeltaSet {
    /// Builds from raw distances; returns None when empty. All distances
    /// must be >= 1 (strict `t' < t*` is the caller's contract).
    pub fn from_distances(mut distances: Vec<Timestamp>, window: Timestamp) -> Option<Self> {
        if distances.is_empty() {
            return None;
        }
        distances.sort_unstable();
        distances.dedup();
        debug_assert!(distances[0] >= 1);
        let min = distances[0];
        distances.retain(|&d| d <= window);
        Some(Self {
            min,
            within: distances,
            window,
        })
    }

    pub fn min(&self) -> Timestamp {
        self.min
    }

    /// |Δ_W| for the collection window.
    pub fn count_in_window(&self) -> u32 {
        self.within.len() as u32
    }

    /// Count of distances <= w for any w not exceeding the collection window.
    pub fn count_within(&self, w: Timestamp) -> u32 {
        debug_assert!(w <= self.window);
        self.within.partition_point(|&d| d <= w) as u32
    }

    pub fn window(&self) -> Timestamp {
        self.window
    }

    pub fn distances_in_window(&self) -> &[Timestamp] {
        &self.within
    }
}

/// Adds the mirror quadruple `(o, p+R, s, t)` for every input fact.
/// Rejects inputs that already contain inverse relation ids.
pub fn augment_with_inverses(
    quads: &[Quadruple],
    original_relations: u32,
) -> Result<Vec<Quadruple>, crate::Error> {
    let mut out = Vec::with_capacity(quads.len() * 2);
    for q in quads {
        if q.relation >= original_relations {
            return Err(crate::Error::AlreadyAugmented {
                relation: q.relation,
            });
        }
        out.push(*q);
        out.push(Quadruple::new(
            q.object,
            q.relation + original_relations,
            q.subject,
            q.timestamp,
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn augment_single_fact() {
        let quads = vec![Quadruple::new(0, 0, 1, 5)];
        let out = augment_with_inverses(&quads, 1).unwrap();
        assert_eq!(
            out,
            vec![Quadruple::new(0, 0, 1, 5), Quadruple::new(1, 1, 0, 5)]
        );
    }

    #[test]
    fn augment_self_loop() {
        let out = augment_with_inverses(&[Quadruple::new(0, 0, 0, 5)], 1).unwrap();
        assert!(out.contains(&Quadruple::new(0, 1, 0, 5)));
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn augment_three_facts_two_relations() {
        let quads = vec![
            Quadruple::new(0, 0, 1, 1),
            Quadruple::new(1, 1, 2, 2),
            Quadruple::new(2, 0, 0, 3),
        ];
        let out = augment_with_inverses(&quads, 2).unwrap();
        assert_eq!(out.len(), 6);
        let rels: std::collections::BTreeSet<u32> = out.iter().map(|q| q.relation).collect();
        assert_eq!(rels, [0u32, 1, 2, 3].into_iter().collect());
    }

    #[test]
    fn augment_rejects_inverse_ids() {
        let err = augment_with_inverses(&[Quadruple::new(0, 3, 1, 0)], 2).unwrap_err();
        assert!(matches!(
            err,
            crate::Error::AlreadyAugmented { relation: 3 }
        ));
    }

    #[test]
    fn augment_involution() {
        // Applying the inverse map twice returns the original quadruple.
        let r = 4u32;
        let q = Quadruple::new(7, 2, 9, 11);
        let inv = |q: Quadruple| {
            Quadruple::new(
                q.object,
                if q.relation < r {
                    q.relation + r
                } else {
                    q.relation - r
                },
                q.subject,
                q.timestamp,
            )
        };
        assert_eq!(inv(inv(q)), q);
    }

    #[test]
    fn delta_set_window_truncation() {
        let d = DeltaSet::from_distances(vec![60, 3, 7, 55], 50).unwrap();
        assert_eq!(d.min(), 3);
        assert_eq!(d.count_in_window(), 2);
        assert_eq!(d.count_within(5), 1);
    }

    #[test]
    fn delta_set_min_beyond_window() {
        let d = DeltaSet::from_distances(vec![80, 90], 50).unwrap();
        assert_eq!(d.min(), 80);
        assert_eq!(d.count_in_window(), 0);
    }

    #[test]
    fn delta_set_empty_is_none() {
        assert!(DeltaSet::from_distances(vec![], 50).is_none());
    }

    #[test]
    fn inverse_relation_roundtrip() {
        let mut v = Vocabulary::default();
        v.intern_relation("consult");
        v.intern_relation("visit");
        v.set_original_relations(2);
        assert_eq!(v.inverse_relation(0), 2);
        assert_eq!(v.inverse_relation(2), 0);
        assert_eq!(v.relation_name(3), "visit^-1");
        assert_eq!(v.relation_id("visit^-1"), Some(3));
    }
}
