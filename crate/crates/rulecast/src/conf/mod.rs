//! Per-rule confidence machinery: the six-parameter recency/frequency
//! confidence function, training-example collection, and the smoothed
//! bucket transformation feeding the two-step fit.

mod fit;

pub use fit::{fit_frequency, fit_recency, FitOutcome};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::tkg::{DeltaSet, EntityId, RelationId, TemporalIndex, Timestamp};

/// Learned parameters of `conf(Δ) = f(Δ) + g(Δ)` with
/// `f = α · 1/(1+φ) · (2^{-λ(min(Δ)-1)} + φ)` and
/// `g = clip(ρ·|Δ_W|/W + κ/min(Δ), -γ, γ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceModel {
    pub alpha: f64,
    pub lambda: f64,
    pub phi: f64,
    pub rho: f64,
    pub kappa: f64,
    pub gamma: f64,
    /// Window W the parameters were fitted with; kept for reproducibility.
    pub window: Timestamp,
}

impl ConfidenceModel {
    pub fn static_fallback(confidence: f64, window: Timestamp) -> Self {
        Self {
            alpha: confidence,
            lambda: 0.0,
            phi: 0.0,
            rho: 0.0,
            kappa: 0.0,
            gamma: 0.0,
            window,
        }
    }

    /// Recency component f. Equals α at min(Δ)=1 and approaches
    /// α·φ/(1+φ) as min(Δ) → ∞.
    pub fn recency(&self, min_delta: Timestamp) -> f64 {
        let decay = (-self.lambda * (min_delta as f64 - 1.0)).exp2();
        // α·(decay+φ)/(1+φ) arranged so f(1) = α at machine precision.
        self.alpha + self.alpha * (decay - 1.0) / (1.0 + self.phi)
    }

    /// Frequency component g, clipped to [-γ, γ].
    pub fn frequency(&self, min_delta: Timestamp, freq_in_window: u32) -> f64 {
        let raw =
            self.rho * freq_in_window as f64 / self.window as f64 + self.kappa / min_delta as f64;
        raw.clamp(-self.gamma, self.gamma)
    }

    /// Full confidence for the features of a non-empty DeltaSet, in [0, 1].
    pub fn confidence(&self, min_delta: Timestamp, freq_in_window: u32) -> f64 {
        (self.recency(min_delta) + self.frequency(min_delta, freq_in_window)).clamp(0.0, 1.0)
    }

    pub fn confidence_for(&self, delta: &DeltaSet) -> f64 {
        self.confidence(delta.min(), delta.count_in_window())
    }

    /// Largest confidence the model can emit; used for rule pruning.
    pub fn peak_confidence(&self) -> f64 {
        (self.recency(1) + self.gamma).clamp(0.0, 1.0)
    }
}

/// One training example of a rule: Δ-features against `G^t` plus whether the
/// head held at `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Example {
    pub min_delta: Timestamp,
    pub freq_in_window: u32,
    pub label: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ExampleSet {
    pub examples: Vec<Example>,
    pub window: Timestamp,
}

impl ExampleSet {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.examples.iter().filter(|e| e.label).count()
    }
}

/// (count, positives) buckets; positives <= count everywhere.
pub type Buckets<K> = BTreeMap<K, (u64, u64)>;

/// A smoothed bucket target for curve fitting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BucketTarget {
    pub min_delta: Timestamp,
    pub freq_in_window: u32,
    pub target: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TransformedTargets {
    /// Keyed by min(Δ); drives step 1.
    pub recency: Vec<BucketTarget>,
    /// Keyed by (min(Δ), |Δ_W|); drives step 2.
    pub frequency: Vec<BucketTarget>,
}

/// Smoothed observed confidences: per bucket, positives / (count + 𝒫),
/// weighted by the bucket count. Empty buckets produce no entry.
pub fn transform_observed(examples: &ExampleSet, psmooth: f64) -> TransformedTargets {
    let mut by_min: Buckets<Timestamp> = BTreeMap::new();
    let mut by_min_freq: Buckets<(Timestamp, u32)> = BTreeMap::new();
    for e in &examples.examples {
        let pos = e.label as u64;
        let slot = by_min.entry(e.min_delta).or_default();
        slot.0 += 1;
        slot.1 += pos;
        let slot = by_min_freq
            .entry((e.min_delta, e.freq_in_window))
            .or_default();
        slot.0 += 1;
        slot.1 += pos;
    }
    TransformedTargets {
        recency: by_min
            .into_iter()
            .map(|(m, (count, pos))| BucketTarget {
                min_delta: m,
                freq_in_window: 0,
                target: pos as f64 / (count as f64 + psmooth),
                weight: count as f64,
            })
            .collect(),
        frequency: by_min_freq
            .into_iter()
            .map(|((m, n), (count, pos))| BucketTarget {
                min_delta: m,
                freq_in_window: n,
                target: pos as f64 / (count as f64 + psmooth),
                weight: count as f64,
            })
            .collect(),
    }
}

/// Collects examples for an xy-rule `h(x,y,t*) <- b(x,y,t)`.
///
/// For every training timestamp t with an `h`-fact for subject c (the
/// head-existence gate) and every object d whose body grounding has at least
/// one timestamp strictly before t, emits the Δ-features against `G^t` with
/// label `h(c,d,t) in G`. Pairs whose body never fired contribute nothing.
pub fn collect_examples_xy(
    index: &TemporalIndex,
    head: RelationId,
    body: RelationId,
    window: Timestamp,
) -> ExampleSet {
    let mut set = ExampleSet {
        examples: Vec::new(),
        window,
    };
    for c in index.subjects_of(body) {
        let head_times = index.subject_timestamps(head, c);
        if head_times.is_empty() {
            continue;
        }
        let mut per_object: BTreeMap<EntityId, Vec<Timestamp>> = BTreeMap::new();
        for &(t, o) in index.subject_events(body, c) {
            per_object.entry(o).or_default().push(t);
        }
        for (d, body_times) in per_object {
            emit_examples(index, head, c, d, &body_times, head_times, window, &mut set);
        }
    }
    set
}

/// Collects examples for a c-rule `h(x,d,t*) <- b(x,d',t)`; same walk as the
/// xy case with the object fixed to the body constant and the label checked
/// against the head constant.
pub fn collect_examples_c(
    index: &TemporalIndex,
    head: RelationId,
    head_constant: EntityId,
    body: RelationId,
    body_constant: EntityId,
    window: Timestamp,
) -> ExampleSet {
    let mut set = ExampleSet {
        examples: Vec::new(),
        window,
    };
    for c in index.subjects_of(body) {
        let body_times = index.timestamps_for(body, c, body_constant);
        if body_times.is_empty() {
            continue;
        }
        let head_times = index.subject_timestamps(head, c);
        if head_times.is_empty() {
            continue;
        }
        emit_examples(
            index,
            head,
            c,
            head_constant,
            body_times,
            head_times,
            window,
            &mut set,
        );
    }
    set
}

#[allow(clippy::too_many_arguments)]
fn emit_examples(
    index: &TemporalIndex,
    head: RelationId,
    subject: EntityId,
    candidate: EntityId,
    body_times: &[Timestamp],
    head_times: &[Timestamp],
    window: Timestamp,
    out: &mut ExampleSet,
) {
    for &t in head_times {
        let end = body_times.partition_point(|&tb| tb < t);
        if end == 0 {
            continue;
        }
        let min_delta = t - body_times[end - 1];
        let start = body_times[..end].partition_point(|&tb| tb + window < t);
        out.examples.push(Example {
            min_delta,
            freq_in_window: (end - start) as u32,
            label: index.contains_at(head, subject, candidate, t),
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tkg::Quadruple;

    fn q(s: u32, p: u32, o: u32, t: u32) -> Quadruple {
        Quadruple::new(s, p, o, t)
    }

    #[test]
    fn recency_at_one_equals_alpha() {
        let m = ConfidenceModel {
            alpha: 0.44,
            lambda: 0.7,
            phi: 0.3,
            rho: 0.0,
            kappa: 0.0,
            gamma: 0.0,
            window: 50,
        };
        assert_eq!(m.recency(1), 0.44);
    }

    #[test]
    fn recency_direct_substitution() {
        // α=0.8, λ=1, φ=0.25, min(Δ)=3 → 0.8 · 0.8 · (0.25 + 0.25) = 0.32
        let m = ConfidenceModel {
            alpha: 0.8,
            lambda: 1.0,
            phi: 0.25,
            rho: 0.0,
            kappa: 0.0,
            gamma: 0.0,
            window: 50,
        };
        assert!((m.recency(3) - 0.32).abs() < 1e-15);
    }

    #[test]
    fn confidence_sum_of_components() {
        // f = 0.44, g = -0.03 → 0.41
        let m = ConfidenceModel {
            alpha: 0.44,
            lambda: 0.5,
            phi: 0.0,
            rho: 0.0,
            kappa: -0.03,
            gamma: 0.1,
            window: 50,
        };
        assert!((m.confidence(1, 2) - 0.41).abs() < 1e-15);
    }

    #[test]
    fn transform_smoothed_bucket_mean() {
        let set = ExampleSet {
            examples: (0..10)
                .map(|i| Example {
                    min_delta: 4,
                    freq_in_window: 1,
                    label: i < 3,
                })
                .collect(),
            window: 50,
        };
        let t = transform_observed(&set, 10.0);
        assert_eq!(t.recency.len(), 1);
        assert!((t.recency[0].target - 0.15).abs() < 1e-15);
        assert_eq!(t.recency[0].weight, 10.0);
    }

    #[test]
    fn transform_no_smoothing_all_positive() {
        let set = ExampleSet {
            examples: vec![Example {
                min_delta: 1,
                freq_in_window: 2,
                label: true,
            }],
            window: 50,
        };
        let t = transform_observed(&set, 0.0);
        assert_eq!(t.recency[0].target, 1.0);
        assert_eq!(t.frequency[0].target, 1.0);
    }

    #[test]
    fn transform_empty_has_no_buckets() {
        let t = transform_observed(&ExampleSet::default(), 10.0);
        assert!(t.recency.is_empty() && t.frequency.is_empty());
    }

    #[test]
    fn collect_hand_trace() {
        // h = b = r; facts r(a,b,1), r(a,b,3), r(a,c,3).
        // At t=3 head-existence holds for subject a; pair (a,b) has Δ={2}
        // label 1; pair (a,c) has no grounding before 3 → no example.
        // At t=1 nothing precedes.
        let idx = TemporalIndex::build(&[q(0, 0, 1, 1), q(0, 0, 1, 3), q(0, 0, 2, 3)]);
        let set = collect_examples_xy(&idx, 0, 0, 50);
        assert_eq!(
            set.examples,
            vec![Example {
                min_delta: 2,
                freq_in_window: 1,
                label: true
            }]
        );
    }

    #[test]
    fn collect_body_never_fires() {
        let idx = TemporalIndex::build(&[q(0, 0, 1, 1)]);
        let set = collect_examples_xy(&idx, 0, 1, 50);
        assert!(set.is_empty());
    }

    #[test]
    fn collect_negative_example() {
        // body fires for (a,b) before t=5 but head at t=5 is r(a,c).
        let idx = TemporalIndex::build(&[q(0, 0, 1, 2), q(0, 0, 2, 5)]);
        let set = collect_examples_xy(&idx, 0, 0, 50);
        assert!(set.examples.contains(&Example {
            min_delta: 3,
            freq_in_window: 1,
            label: false
        }));
    }
}
