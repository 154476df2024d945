use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::{DeltaSet, EntityId, Quadruple, RelationId, Timestamp};
use crate::Error;

/// Counts every timestamp handed out by index queries, for temporal-leakage
/// auditing. A read is a violation when the timestamp is not strictly below
/// the cutoff of the query that produced it.
#[derive(Debug, Default)]
pub struct LeakProbe {
    pub reads: AtomicU64,
    pub violations: AtomicU64,
}

impl LeakProbe {
    fn record(&self, ts: Timestamp, cutoff: Timestamp) {
        self.reads.fetch_add(1, Ordering::Relaxed);
        if ts >= cutoff {
            self.violations.fetch_add(1, Ordering::Relaxed);
        }
    }
}

#[derive(Debug, Clone, Default)]
struct SubjectSlot {
    /// (timestamp, object) sorted by timestamp, then object; deduplicated.
    events: Vec<(Timestamp, EntityId)>,
    /// Distinct timestamps, sorted ascending.
    timestamps: Vec<Timestamp>,
}

/// Read-optimized grounding index over an augmented quadruple set.
///
/// Built single-writer; immutable between `extend` calls and safe to share
/// across parallel readers. All cutoff queries return timestamps strictly
/// below the cutoff.
#[derive(Debug, Default)]
pub struct TemporalIndex {
    spo: HashMap<(RelationId, EntityId, EntityId), Vec<Timestamp>>,
    sp: HashMap<(RelationId, EntityId), SubjectSlot>,
    rel_subjects: HashMap<RelationId, BTreeSet<EntityId>>,
    timestamps: BTreeSet<Timestamp>,
    len: usize,
    probe: Option<Arc<LeakProbe>>,
}

impl TemporalIndex {
    pub fn build(quads: &[Quadruple]) -> Self {
        let mut index = Self::default();
        let mut sorted: Vec<Quadruple> = quads.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        for q in &sorted {
            index.insert(q);
        }
        index
    }

    fn insert(&mut self, q: &Quadruple) {
        let ts_list = self
            .spo
            .entry((q.relation, q.subject, q.object))
            .or_default();
        match ts_list.binary_search(&q.timestamp) {
            Ok(_) => return, // duplicate (key, timestamp) pair
            Err(pos) => ts_list.insert(pos, q.timestamp),
        }
        let slot = self.sp.entry((q.relation, q.subject)).or_default();
        let ev = (q.timestamp, q.object);
        if let Err(pos) = slot.events.binary_search(&ev) {
            slot.events.insert(pos, ev);
        }
        if let Err(pos) = slot.timestamps.binary_search(&q.timestamp) {
            slot.timestamps.insert(pos, q.timestamp);
        }
        self.rel_subjects
            .entry(q.relation)
            .or_default()
            .insert(q.subject);
        self.timestamps.insert(q.timestamp);
        self.len += 1;
    }

    /// Appends all facts of one new timestamp. The timestamp must exceed
    /// everything already indexed; out-of-order insertion would leak future
    /// facts into past queries.
    pub fn extend(&mut self, quads: &[Quadruple]) -> Result<(), Error> {
        if quads.is_empty() {
            return Ok(());
        }
        let t = quads[0].timestamp;
        if quads.iter().any(|q| q.timestamp != t) {
            return Err(Error::ExtendMixedTimestamps);
        }
        if let Some(&max) = self.timestamps.iter().next_back() {
            if t <= max {
                return Err(Error::ExtendOutOfOrder { timestamp: t, max });
            }
        }
        let mut sorted: Vec<Quadruple> = quads.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        for q in &sorted {
            self.insert(q);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn set_probe(&mut self, probe: Arc<LeakProbe>) {
        self.probe = Some(probe);
    }

    /// Distinct timestamps present in the index, ascending.
    pub fn distinct_timestamps(&self) -> impl Iterator<Item = Timestamp> + '_ {
        self.timestamps.iter().copied()
    }

    pub fn max_timestamp(&self) -> Option<Timestamp> {
        self.timestamps.iter().next_back().copied()
    }

    /// Subjects that appear with the given relation, ascending.
    pub fn subjects_of(&self, relation: RelationId) -> impl Iterator<Item = EntityId> + '_ {
        self.rel_subjects
            .get(&relation)
            .into_iter()
            .flatten()
            .copied()
    }

    /// All timestamps of `(relation, subject, object)`, ascending (no cutoff;
    /// training-time use only).
    pub fn timestamps_for(
        &self,
        relation: RelationId,
        subject: EntityId,
        object: EntityId,
    ) -> &[Timestamp] {
        self.spo
            .get(&(relation, subject, object))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Distinct timestamps at which `subject` has any `relation` fact.
    pub fn subject_timestamps(&self, relation: RelationId, subject: EntityId) -> &[Timestamp] {
        self.sp
            .get(&(relation, subject))
            .map(|s| s.timestamps.as_slice())
            .unwrap_or(&[])
    }

    /// (timestamp, object) events of `(relation, subject)`, sorted by time.
    pub fn subject_events(
        &self,
        relation: RelationId,
        subject: EntityId,
    ) -> &[(Timestamp, EntityId)] {
        self.sp
            .get(&(relation, subject))
            .map(|s| s.events.as_slice())
            .unwrap_or(&[])
    }

    /// True iff `(relation, subject, object, t)` is an indexed fact.
    pub fn contains_at(
        &self,
        relation: RelationId,
        subject: EntityId,
        object: EntityId,
        t: Timestamp,
    ) -> bool {
        self.timestamps_for(relation, subject, object)
            .binary_search(&t)
            .is_ok()
    }

    fn deltas_from(
        &self,
        ts_list: &[Timestamp],
        t_star: Timestamp,
        window: Timestamp,
    ) -> Option<DeltaSet> {
        let end = ts_list.partition_point(|&t| t < t_star);
        if end == 0 {
            return None;
        }
        if let Some(probe) = &self.probe {
            for &t in &ts_list[..end] {
                probe.record(t, t_star);
            }
        }
        let distances = ts_list[..end].iter().map(|&t| t_star - t).collect();
        DeltaSet::from_distances(distances, window)
    }

    /// Δ for an xy-rule grounding: distances from all `b(c,d,t')` with
    /// `t' < t*`.
    pub fn deltas_xy(
        &self,
        body_relation: RelationId,
        subject: EntityId,
        object: EntityId,
        t_star: Timestamp,
        window: Timestamp,
    ) -> Option<DeltaSet> {
        self.deltas_from(
            self.timestamps_for(body_relation, subject, object),
            t_star,
            window,
        )
    }

    /// Δ for a c-rule grounding: the body constant plays the object role, so
    /// this aggregates exactly like `deltas_xy` with `d := d'`.
    pub fn deltas_c(
        &self,
        body_relation: RelationId,
        subject: EntityId,
        body_constant: EntityId,
        t_star: Timestamp,
        window: Timestamp,
    ) -> Option<DeltaSet> {
        self.deltas_xy(body_relation, subject, body_constant, t_star, window)
    }

    /// All objects `d` with a `(relation, subject, d, t' < t*)` grounding,
    /// each with its DeltaSet. Ascending object order.
    pub fn candidate_objects(
        &self,
        relation: RelationId,
        subject: EntityId,
        t_star: Timestamp,
        window: Timestamp,
    ) -> Vec<(EntityId, DeltaSet)> {
        let events = self.subject_events(relation, subject);
        let end = events.partition_point(|&(t, _)| t < t_star);
        let mut per_object: HashMap<EntityId, Vec<Timestamp>> = HashMap::new();
        for &(t, o) in &events[..end] {
            if let Some(probe) = &self.probe {
                probe.record(t, t_star);
            }
            per_object.entry(o).or_default().push(t_star - t);
        }
        let mut out: Vec<(EntityId, DeltaSet)> = per_object
            .into_iter()
            .filter_map(|(o, dists)| DeltaSet::from_distances(dists, window).map(|d| (o, d)))
            .collect();
        out.sort_unstable_by_key(|(o, _)| *o);
        out
    }

    /// Iterates every `(relation, subject, object)` key with its timestamp
    /// list, in unspecified order. Callers needing determinism must sort.
    pub fn iter_spo(
        &self,
    ) -> impl Iterator<Item = (RelationId, EntityId, EntityId, &[Timestamp])> + '_ {
        self.spo
            .iter()
            .map(|(&(p, s, o), ts)| (p, s, o, ts.as_slice()))
    }

    /// Iterates every `(relation, subject)` slot with its distinct timestamps.
    pub fn iter_sp(&self) -> impl Iterator<Item = (RelationId, EntityId, &[Timestamp])> + '_ {
        self.sp
            .iter()
            .map(|(&(p, s), slot)| (p, s, slot.timestamps.as_slice()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn q(s: u32, p: u32, o: u32, t: u32) -> Quadruple {
        Quadruple::new(s, p, o, t)
    }

    #[test]
    fn duplicates_deduplicated() {
        let idx = TemporalIndex::build(&[q(0, 0, 1, 3), q(0, 0, 1, 3)]);
        assert_eq!(idx.timestamps_for(0, 0, 1), &[3]);
    }

    #[test]
    fn sort_and_dedup_per_key() {
        let idx =
            TemporalIndex::build(&[q(0, 0, 1, 7), q(0, 0, 1, 3), q(0, 0, 1, 7), q(0, 0, 1, 9)]);
        assert_eq!(idx.timestamps_for(0, 0, 1), &[3, 7, 9]);
    }

    #[test]
    fn deltas_table_one_case() {
        // groundings at {349, 350}, t* = 351 -> Δ = {1, 2}
        let idx = TemporalIndex::build(&[q(0, 0, 1, 349), q(0, 0, 1, 350)]);
        let d = idx.deltas_xy(0, 0, 1, 351, 50).unwrap();
        assert_eq!(d.min(), 1);
        assert_eq!(d.count_in_window(), 2);
    }

    #[test]
    fn deltas_no_grounding_is_none() {
        let idx = TemporalIndex::build(&[q(0, 0, 1, 5)]);
        assert!(idx.deltas_xy(1, 0, 1, 10, 50).is_none());
        assert!(idx.deltas_xy(0, 0, 1, 5, 50).is_none()); // strict <
    }

    #[test]
    fn deltas_hundred_groundings() {
        let quads: Vec<_> = (1..=100).map(|t| q(0, 0, 1, t)).collect();
        let idx = TemporalIndex::build(&quads);
        let d = idx.deltas_xy(0, 0, 1, 101, 50).unwrap();
        assert_eq!(d.min(), 1);
        assert_eq!(d.count_in_window(), 50);
    }

    #[test]
    fn extend_visibility() {
        let mut idx = TemporalIndex::build(&[q(0, 0, 1, 5)]);
        idx.extend(&[q(0, 0, 2, 10)]).unwrap();
        assert!(idx.deltas_xy(0, 0, 2, 11, 50).is_some());
        assert!(idx.deltas_xy(0, 0, 2, 10, 50).is_none());
    }

    #[test]
    fn extend_out_of_order_rejected() {
        let mut idx = TemporalIndex::build(&[q(0, 0, 1, 5)]);
        let err = idx.extend(&[q(0, 0, 2, 5)]).unwrap_err();
        assert!(matches!(
            err,
            Error::ExtendOutOfOrder {
                timestamp: 5,
                max: 5
            }
        ));
    }

    fn random_graph(rng: &mut impl Rng, n: usize) -> Vec<Quadruple> {
        (0..n)
            .map(|_| {
                q(
                    rng.gen_range(0..8),
                    rng.gen_range(0..4),
                    rng.gen_range(0..8),
                    rng.gen_range(0..30),
                )
            })
            .collect()
    }

    #[test]
    fn lookup_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let quads = random_graph(&mut rng, 1000);
        let idx = TemporalIndex::build(&quads);
        for _ in 0..100 {
            let (p, s, o) = (
                rng.gen_range(0..4),
                rng.gen_range(0..8),
                rng.gen_range(0..8),
            );
            let t_star = rng.gen_range(1..32);
            let mut expected: Vec<u32> = quads
                .iter()
                .filter(|q| {
                    q.relation == p && q.subject == s && q.object == o && q.timestamp < t_star
                })
                .map(|q| t_star - q.timestamp)
                .collect();
            expected.sort_unstable();
            expected.dedup();
            let got = idx.deltas_xy(p, s, o, t_star, 1000);
            match got {
                None => assert!(expected.is_empty()),
                Some(d) => {
                    assert_eq!(d.min(), expected[0]);
                    assert_eq!(d.distances_in_window(), expected.as_slice());
                }
            }
        }
    }

    #[test]
    fn extend_equals_rebuild() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let base = random_graph(&mut rng, 200);
        let mut later: Vec<Quadruple> = random_graph(&mut rng, 100)
            .into_iter()
            .map(|mut q| {
                q.timestamp += 30;
                q
            })
            .collect();
        later.sort_unstable_by_key(|q| q.timestamp);

        let mut extended = TemporalIndex::build(&base);
        let mut i = 0;
        while i < later.len() {
            let t = later[i].timestamp;
            let j = later[i..].partition_point(|q| q.timestamp == t) + i;
            extended.extend(&later[i..j]).unwrap();
            i = j;
        }

        let mut all = base.clone();
        all.extend_from_slice(&later);
        let rebuilt = TemporalIndex::build(&all);

        for p in 0..4 {
            for s in 0..8 {
                for o in 0..8 {
                    assert_eq!(
                        rebuilt.timestamps_for(p, s, o),
                        extended.timestamps_for(p, s, o)
                    );
                }
                assert_eq!(rebuilt.subject_events(p, s), extended.subject_events(p, s));
            }
        }
    }

    #[test]
    fn probe_counts_reads_and_violations() {
        let mut idx = TemporalIndex::build(&[q(0, 0, 1, 3), q(0, 0, 1, 8)]);
        let probe = Arc::new(LeakProbe::default());
        idx.set_probe(probe.clone());
        idx.deltas_xy(0, 0, 1, 5, 50);
        assert_eq!(probe.reads.load(Ordering::Relaxed), 1);
        assert_eq!(probe.violations.load(Ordering::Relaxed), 0);
    }
}
