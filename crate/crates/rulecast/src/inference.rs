//! Query answering: fire all matching rules, score candidates per rule,
//! aggregate with decayed top-H noisy-or, and render explanation traces.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::rules::{Rule, RuleKind, RuleSet};
use crate::tkg::{EntityId, RelationId, TemporalIndex, Timestamp, Vocabulary};

/// An object query `(subject, relation, ?, t*)`. Subject queries arrive
/// pre-converted through the inverse relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub subject: EntityId,
    pub relation: RelationId,
    pub timestamp: Timestamp,
}

/// One rule's contribution to one candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuleHit {
    pub rule_index: usize,
    pub confidence: f64,
    /// Δ-features; None for static (z/f) hits.
    pub min_delta: Option<Timestamp>,
    pub freq_in_window: Option<u32>,
}

/// Per-candidate rule hits, each list sorted by confidence descending and
/// truncated to the top-H entries the aggregation will read.
#[derive(Debug, Clone, Default)]
pub struct CandidateScores {
    pub hits: HashMap<EntityId, Vec<RuleHit>>,
    top_h: usize,
}

impl CandidateScores {
    fn push(&mut self, candidate: EntityId, hit: RuleHit) {
        let list = self.hits.entry(candidate).or_default();
        let pos = list.partition_point(|h| h.confidence >= hit.confidence);
        if pos < self.top_h {
            list.insert(pos, hit);
            list.truncate(self.top_h);
        }
    }
}

/// Fires every rule whose head matches the query relation against the index
/// state strictly before `t*`.
pub fn fire_rules(
    index: &TemporalIndex,
    ruleset: &RuleSet,
    query: Query,
    top_h: usize,
) -> CandidateScores {
    let mut scores = CandidateScores {
        hits: HashMap::new(),
        top_h,
    };
    let window = ruleset.window;
    for (rule_index, rule) in ruleset.rules.iter().enumerate() {
        match rule.kind {
            RuleKind::Xy {
                head_relation,
                body_relation,
            } => {
                if head_relation != query.relation {
                    continue;
                }
                let model = rule.params.as_ref().expect("xy rule has params");
                for (d, delta) in
                    index.candidate_objects(body_relation, query.subject, query.timestamp, window)
                {
                    scores.push(
                        d,
                        RuleHit {
                            rule_index,
                            confidence: model.confidence_for(&delta),
                            min_delta: Some(delta.min()),
                            freq_in_window: Some(delta.count_in_window()),
                        },
                    );
                }
            }
            RuleKind::C {
                head_relation,
                head_constant,
                body_relation,
                body_constant,
            } => {
                if head_relation != query.relation {
                    continue;
                }
                let model = rule.params.as_ref().expect("c rule has params");
                if let Some(delta) = index.deltas_c(
                    body_relation,
                    query.subject,
                    body_constant,
                    query.timestamp,
                    window,
                ) {
                    scores.push(
                        head_constant,
                        RuleHit {
                            rule_index,
                            confidence: model.confidence_for(&delta),
                            min_delta: Some(delta.min()),
                            freq_in_window: Some(delta.count_in_window()),
                        },
                    );
                }
            }
            RuleKind::Z {
                relation,
                object_constant,
            } => {
                if relation != query.relation {
                    continue;
                }
                scores.push(
                    object_constant,
                    RuleHit {
                        rule_index,
                        confidence: rule.static_conf.expect("z rule has static_conf"),
                        min_delta: None,
                        freq_in_window: None,
                    },
                );
            }
            RuleKind::F {
                relation,
                subject_constant,
                object_constant,
            } => {
                if relation != query.relation || subject_constant != query.subject {
                    continue;
                }
                scores.push(
                    object_constant,
                    RuleHit {
                        rule_index,
                        confidence: rule.static_conf.expect("f rule has static_conf"),
                        min_delta: None,
                        freq_in_window: None,
                    },
                );
            }
        }
    }
    scores
}

/// Decayed top-H noisy-or over confidences sorted descending:
/// `1 - Π_{i<min(n,H)} (1 - s_i · D^i)` with zero-based i, so the top score
/// is undamped and D = 0 degrades to max-aggregation.
pub fn aggregate(sorted_confidences: &[f64], top_h: usize, decay: f64) -> f64 {
    let mut product = 1.0;
    let mut damp = 1.0;
    for &s in sorted_confidences.iter().take(top_h) {
        product *= 1.0 - s * damp;
        damp *= decay;
    }
    1.0 - product
}

/// Candidates ordered by aggregated score descending, ties by ascending
/// entity id.
pub fn rank(scores: &CandidateScores, top_h: usize, decay: f64) -> Vec<(EntityId, f64)> {
    let mut out: Vec<(EntityId, f64)> = scores
        .hits
        .iter()
        .map(|(&cand, hits)| {
            let confs: Vec<f64> = hits.iter().map(|h| h.confidence).collect();
            (cand, aggregate(&confs, top_h, decay))
        })
        .collect();
    out.sort_unstable_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    out
}

/// One explanation row: a rule hit with its rendered rule text and score
/// decomposition. Mirrors the per-rule trace columns of the prediction
/// explanation output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplanationRow {
    pub confidence: f64,
    pub rule_text: String,
    /// Recency component f; absent for static hits.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f_component: Option<f64>,
    /// Frequency component g; absent for static hits.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_component: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_delta: Option<Timestamp>,
    /// Rendered as `<count>/<window>`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub freq: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Explanation {
    pub version: u32,
    pub subject: String,
    pub relation: String,
    pub timestamp: Timestamp,
    pub candidate: String,
    pub score: f64,
    pub rows: Vec<ExplanationRow>,
}

/// Renders a rule over entity/relation names, e.g.
/// `consult(x,y,t*) <- express_intent^-1(x,y,t)`.
pub fn render_rule(rule: &Rule, vocab: &Vocabulary) -> String {
    match rule.kind {
        RuleKind::Xy {
            head_relation,
            body_relation,
        } => format!(
            "{}(x,y,t*) <- {}(x,y,t)",
            vocab.relation_name(head_relation),
            vocab.relation_name(body_relation)
        ),
        RuleKind::C {
            head_relation,
            head_constant,
            body_relation,
            body_constant,
        } => format!(
            "{}(x,{},t*) <- {}(x,{},t)",
            vocab.relation_name(head_relation),
            vocab.entity_name(head_constant),
            vocab.relation_name(body_relation),
            vocab.entity_name(body_constant)
        ),
        RuleKind::Z {
            relation,
            object_constant,
        } => format!(
            "{}(x,{},t) <- exists z {}(x,z,t)",
            vocab.relation_name(relation),
            vocab.entity_name(object_constant),
            vocab.relation_name(relation)
        ),
        RuleKind::F {
            relation,
            subject_constant,
            object_constant,
        } => format!(
            "{}({},{},t) <- exists z {}({},z,t)",
            vocab.relation_name(relation),
            vocab.entity_name(subject_constant),
            vocab.entity_name(object_constant),
            vocab.relation_name(relation),
            vocab.entity_name(subject_constant)
        ),
    }
}

/// Builds the explanation record for one candidate: the contributing rules
/// with their f/g decomposition plus the aggregated score. Errors when the
/// candidate was not predicted.
pub fn explain(
    query: Query,
    candidate: EntityId,
    scores: &CandidateScores,
    ruleset: &RuleSet,
    vocab: &Vocabulary,
    top_h: usize,
    decay: f64,
) -> Result<Explanation, crate::Error> {
    let hits = scores
        .hits
        .get(&candidate)
        .ok_or_else(|| crate::Error::UnknownName(format!("candidate {candidate} not predicted")))?;
    let confs: Vec<f64> = hits.iter().map(|h| h.confidence).collect();
    let rows = hits
        .iter()
        .map(|hit| {
            let rule = &ruleset.rules[hit.rule_index];
            let (f, g) = match (&rule.params, hit.min_delta, hit.freq_in_window) {
                (Some(m), Some(md), Some(fq)) => (Some(m.recency(md)), Some(m.frequency(md, fq))),
                _ => (None, None),
            };
            ExplanationRow {
                confidence: hit.confidence,
                rule_text: render_rule(rule, vocab),
                f_component: f,
                g_component: g,
                min_delta: hit.min_delta,
                freq: hit
                    .freq_in_window
                    .map(|n| format!("{n}/{}", ruleset.window)),
            }
        })
        .collect();
    Ok(Explanation {
        version: 1,
        subject: vocab.entity_name(query.subject).to_string(),
        relation: vocab.relation_name(query.relation),
        timestamp: query.timestamp,
        candidate: vocab.entity_name(candidate).to_string(),
        score: aggregate(&confs, top_h, decay),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conf::ConfidenceModel;
    use crate::rules::Rule;
    use crate::tkg::Quadruple;

    fn q(s: u32, p: u32, o: u32, t: u32) -> Quadruple {
        Quadruple::new(s, p, o, t)
    }

    fn xy_rule(head: u32, body: u32, alpha: f64) -> Rule {
        Rule {
            kind: RuleKind::Xy {
                head_relation: head,
                body_relation: body,
            },
            params: Some(ConfidenceModel {
                alpha,
                lambda: 0.5,
                phi: 0.0,
                rho: 0.0,
                kappa: 0.0,
                gamma: 0.0,
                window: 50,
            }),
            static_conf: None,
            support: 10,
            positives: 5,
        }
    }

    #[test]
    fn aggregate_single_score() {
        assert_eq!(aggregate(&[0.7], 5, 0.9), 0.7);
    }

    #[test]
    fn aggregate_no_decay() {
        // {0.5, 0.4}, D=1 -> 1 - 0.5·0.6 = 0.70
        assert!((aggregate(&[0.5, 0.4], 5, 1.0) - 0.70).abs() < 1e-15);
    }

    #[test]
    fn aggregate_with_decay() {
        // {0.5, 0.4}, D=0.5 -> 1 - (1-0.5)(1-0.2) = 0.60
        assert!((aggregate(&[0.5, 0.4], 5, 0.5) - 0.60).abs() < 1e-15);
    }

    #[test]
    fn aggregate_h_one_and_d_zero_are_max() {
        let scores = [0.6, 0.5, 0.2];
        assert_eq!(aggregate(&scores, 1, 0.9), 0.6);
        assert_eq!(aggregate(&scores, 5, 0.0), 0.6);
    }

    #[test]
    fn empty_ruleset_gives_empty_candidates() {
        let idx = TemporalIndex::build(&[q(0, 0, 1, 1)]);
        let ruleset = RuleSet {
            window: 50,
            rules: vec![],
        };
        let scores = fire_rules(
            &idx,
            &ruleset,
            Query {
                subject: 0,
                relation: 0,
                timestamp: 5,
            },
            5,
        );
        assert!(scores.hits.is_empty());
    }

    #[test]
    fn xy_rule_fires_on_prior_groundings() {
        let idx = TemporalIndex::build(&[q(0, 1, 2, 3), q(0, 1, 3, 4)]);
        let ruleset = RuleSet {
            window: 50,
            rules: vec![xy_rule(0, 1, 0.8)],
        };
        let scores = fire_rules(
            &idx,
            &ruleset,
            Query {
                subject: 0,
                relation: 0,
                timestamp: 5,
            },
            5,
        );
        assert_eq!(scores.hits.len(), 2);
        // candidate 3 is more recent (min Δ = 1) than candidate 2 (min Δ = 2)
        let ranked = rank(&scores, 5, 0.9);
        assert_eq!(ranked[0].0, 3);
    }

    #[test]
    fn rank_ties_break_by_id() {
        let idx = TemporalIndex::build(&[q(0, 1, 7, 3), q(0, 1, 4, 3)]);
        let ruleset = RuleSet {
            window: 50,
            rules: vec![xy_rule(0, 1, 0.8)],
        };
        let scores = fire_rules(
            &idx,
            &ruleset,
            Query {
                subject: 0,
                relation: 0,
                timestamp: 5,
            },
            5,
        );
        let ranked = rank(&scores, 5, 0.9);
        assert_eq!(ranked.iter().map(|r| r.0).collect::<Vec<_>>(), vec![4, 7]);
        assert_eq!(ranked[0].1, ranked[1].1);
    }

    #[test]
    fn explanation_reaggregates_to_score() {
        let mut vocab = Vocabulary::default();
        for name in ["a", "b", "c", "d"] {
            vocab.intern_entity(name);
        }
        vocab.intern_relation("r0");
        vocab.intern_relation("r1");
        vocab.set_original_relations(2);
        let idx = TemporalIndex::build(&[q(0, 1, 2, 3), q(0, 0, 2, 4)]);
        let ruleset = RuleSet {
            window: 50,
            rules: vec![xy_rule(0, 0, 0.9), xy_rule(0, 1, 0.7)],
        };
        let query = Query {
            subject: 0,
            relation: 0,
            timestamp: 6,
        };
        let scores = fire_rules(&idx, &ruleset, query, 5);
        let ranked = rank(&scores, 5, 0.9);
        let exp = explain(query, 2, &scores, &ruleset, &vocab, 5, 0.9).unwrap();
        assert_eq!(exp.rows.len(), 2);
        let confs: Vec<f64> = exp.rows.iter().map(|r| r.confidence).collect();
        assert_eq!(aggregate(&confs, 5, 0.9), ranked[0].1);
        // rows sorted by confidence descending
        assert!(confs[0] >= confs[1]);
    }

    #[test]
    fn explain_static_rule_has_no_decomposition() {
        let mut vocab = Vocabulary::default();
        vocab.intern_entity("a");
        vocab.intern_entity("b");
        vocab.intern_relation("r");
        vocab.set_original_relations(1);
        let idx = TemporalIndex::build(&[q(0, 0, 1, 1)]);
        let ruleset = RuleSet {
            window: 50,
            rules: vec![Rule {
                kind: RuleKind::Z {
                    relation: 0,
                    object_constant: 1,
                },
                params: None,
                static_conf: Some(0.17),
                support: 10,
                positives: 2,
            }],
        };
        let query = Query {
            subject: 0,
            relation: 0,
            timestamp: 3,
        };
        let scores = fire_rules(&idx, &ruleset, query, 5);
        let exp = explain(query, 1, &scores, &ruleset, &vocab, 5, 0.9).unwrap();
        assert_eq!(exp.rows.len(), 1);
        assert!(exp.rows[0].f_component.is_none());
        assert!((exp.score - 0.17).abs() < 1e-15);
    }

    #[test]
    fn explain_unknown_candidate_errors() {
        let idx = TemporalIndex::build(&[q(0, 0, 1, 1)]);
        let ruleset = RuleSet {
            window: 50,
            rules: vec![],
        };
        let vocab = Vocabulary::default();
        let query = Query {
            subject: 0,
            relation: 0,
            timestamp: 3,
        };
        let scores = fire_rules(&idx, &ruleset, query, 5);
        assert!(explain(query, 1, &scores, &ruleset, &vocab, 5, 0.9).is_err());
    }

    #[test]
    fn hit_lists_truncated_to_top_h() {
        let idx = TemporalIndex::build(&[q(0, 1, 2, 3)]);
        let rules: Vec<Rule> = (0..8).map(|_| xy_rule(0, 1, 0.5)).collect();
        let ruleset = RuleSet { window: 50, rules };
        let scores = fire_rules(
            &idx,
            &ruleset,
            Query {
                subject: 0,
                relation: 0,
                timestamp: 5,
            },
            3,
        );
        assert_eq!(scores.hits[&2].len(), 3);
    }
}
