//! The four rule forms, candidate enumeration over a training index, static
//! z/f confidences, and the line-delimited rule-set format. The rule file is
//! the model: every record is self-describing and human-readable.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::conf::ConfidenceModel;
use crate::tkg::{EntityId, RelationId, TemporalIndex, Timestamp};
use crate::Error;

pub const RULE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RuleKind {
    /// `h(x,y,t*) <- b(x,y,t), t* > t`
    Xy {
        head_relation: RelationId,
        body_relation: RelationId,
    },
    /// `h(x,d,t*) <- b(x,d',t), t* > t`
    C {
        head_relation: RelationId,
        head_constant: EntityId,
        body_relation: RelationId,
        body_constant: EntityId,
    },
    /// `p(x,d,t) <- ∃z p(x,z,t)`
    Z {
        relation: RelationId,
        object_constant: EntityId,
    },
    /// `p(c,d,t) <- ∃z p(c,z,t)`
    F {
        relation: RelationId,
        subject_constant: EntityId,
        object_constant: EntityId,
    },
}

impl RuleKind {
    pub fn head_relation(&self) -> RelationId {
        match *self {
            RuleKind::Xy { head_relation, .. } | RuleKind::C { head_relation, .. } => head_relation,
            RuleKind::Z { relation, .. } | RuleKind::F { relation, .. } => relation,
        }
    }

    pub fn is_recurrent(&self) -> bool {
        matches!(self, RuleKind::Xy { head_relation, body_relation } if head_relation == body_relation)
    }

    /// Coarse type tag for reporting and ablation subsets.
    pub fn type_tag(&self) -> RuleType {
        match self {
            RuleKind::Xy { .. } if self.is_recurrent() => RuleType::Recurrent,
            RuleKind::Xy { .. } => RuleType::Xy,
            RuleKind::C { .. } => RuleType::C,
            RuleKind::Z { .. } => RuleType::Z,
            RuleKind::F { .. } => RuleType::F,
        }
    }
}

/// Rule categories as used in ablation reports. `Recurrent` is the subset of
/// xy-rules with head = body.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleType {
    Recurrent,
    Xy,
    C,
    Z,
    F,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    #[serde(flatten)]
    pub kind: RuleKind,
    /// Learned confidence function; present for xy- and c-rules.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<ConfidenceModel>,
    /// Static confidence; present for z- and f-rules.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub static_conf: Option<f64>,
    pub support: u64,
    pub positives: u64,
}

impl Rule {
    fn validate(&self) -> Result<(), String> {
        match self.kind {
            RuleKind::Xy { .. } | RuleKind::C { .. } => {
                if self.params.is_none() {
                    return Err("xy/c rule is missing `params`".into());
                }
            }
            RuleKind::Z { .. } | RuleKind::F { .. } => match self.static_conf {
                None => return Err("z/f rule is missing `static_conf`".into()),
                Some(c) if !(0.0..=1.0).contains(&c) => {
                    return Err(format!("static confidence {c} outside [0,1]"));
                }
                _ => {}
            },
        }
        Ok(())
    }

    /// Largest confidence this rule can emit.
    pub fn peak_confidence(&self) -> f64 {
        match (&self.params, self.static_conf) {
            (Some(m), _) => m.peak_confidence(),
            (None, Some(c)) => c,
            (None, None) => 0.0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RuleSet {
    pub window: Timestamp,
    pub rules: Vec<Rule>,
}

impl RuleSet {
    pub fn count_by_type(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for r in &self.rules {
            let key = match r.kind.type_tag() {
                RuleType::Recurrent => "xy (recurrent)",
                RuleType::Xy => "xy",
                RuleType::C => "c",
                RuleType::Z => "z",
                RuleType::F => "f",
            };
            *out.entry(key.to_string()).or_insert(0) += 1;
        }
        out
    }

    /// New rule set keeping only the given rule types.
    pub fn filtered(&self, keep: &HashSet<RuleType>) -> RuleSet {
        RuleSet {
            window: self.window,
            rules: self
                .rules
                .iter()
                .filter(|r| keep.contains(&r.kind.type_tag()))
                .cloned()
                .collect(),
        }
    }
}

/// An enumerated rule candidate awaiting confidence fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Candidate {
    pub kind: RuleKind,
    pub support: u64,
}

/// Enumerates xy-rule candidates (h, b): pairs where at least `min_support`
/// head occurrences on some (x, y) are preceded by a body grounding on the
/// same pair. Output sorted by (head, body).
pub fn enumerate_xy_rules(index: &TemporalIndex, min_support: u64) -> Vec<Candidate> {
    // Group the spo keys by entity pair so temporal precedence can be
    // checked per (x, y).
    type PairGroups<'a> = HashMap<(EntityId, EntityId), Vec<(RelationId, &'a [Timestamp])>>;
    let mut pair_groups: PairGroups = HashMap::new();
    for (p, s, o, ts) in index.iter_spo() {
        pair_groups.entry((s, o)).or_default().push((p, ts));
    }
    let mut counts: HashMap<(RelationId, RelationId), u64> = HashMap::new();
    for rels in pair_groups.values() {
        for &(h, h_ts) in rels {
            for &(b, b_ts) in rels {
                let first_body = b_ts[0];
                // Head occurrences strictly after the earliest body grounding.
                let n = h_ts.len() - h_ts.partition_point(|&t| t <= first_body);
                if n > 0 {
                    *counts.entry((h, b)).or_insert(0) += n as u64;
                }
            }
        }
    }
    let mut out: Vec<Candidate> = counts
        .into_iter()
        .filter(|&(_, n)| n >= min_support)
        .map(|((h, b), n)| Candidate {
            kind: RuleKind::Xy {
                head_relation: h,
                body_relation: b,
            },
            support: n,
        })
        .collect();
    out.sort_unstable_by_key(|c| c.kind);
    out
}

/// Top-K entities by occurrence count. Over the augmented graph a subject
/// occurrence corresponds to a subject-or-object occurrence of the original
/// facts. Ties break by ascending entity id.
pub fn frequent_constants(index: &TemporalIndex, k: usize) -> Vec<EntityId> {
    let mut counts: HashMap<EntityId, u64> = HashMap::new();
    for (_, s, _, ts) in index.iter_spo() {
        *counts.entry(s).or_insert(0) += ts.len() as u64;
    }
    let mut entries: Vec<(EntityId, u64)> = counts.into_iter().collect();
    entries.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    entries.into_iter().take(k).map(|(e, _)| e).collect()
}

/// Enumerates c-rule candidates (h, d, b, d') with both constants frequent
/// and at least `min_support` head occurrences h(x,d,t*) preceded by a body
/// grounding b(x,d',t) with 0 < t* - t <= window on the same x.
pub fn enumerate_c_rules(
    index: &TemporalIndex,
    frequent: &[EntityId],
    min_support: u64,
    window: Timestamp,
) -> Vec<Candidate> {
    if frequent.is_empty() {
        return Vec::new();
    }
    let freq: HashSet<EntityId> = frequent.iter().copied().collect();
    // Facts grouped by subject: (relation, object, timestamps).
    type SubjectFacts<'a> = HashMap<EntityId, Vec<(RelationId, EntityId, &'a [Timestamp])>>;
    let mut by_subject: SubjectFacts = HashMap::new();
    for (p, s, o, ts) in index.iter_spo() {
        by_subject.entry(s).or_default().push((p, o, ts));
    }
    let mut counts: HashMap<(RelationId, EntityId, RelationId, EntityId), u64> = HashMap::new();
    for facts in by_subject.values() {
        for &(h, d, h_ts) in facts {
            if !freq.contains(&d) {
                continue;
            }
            for &(b, d_body, b_ts) in facts {
                if !freq.contains(&d_body) {
                    continue;
                }
                let n = h_ts
                    .iter()
                    .filter(|&&t_star| {
                        let end = b_ts.partition_point(|&t| t < t_star);
                        end > 0 && t_star - b_ts[end - 1] <= window
                    })
                    .count() as u64;
                if n > 0 {
                    *counts.entry((h, d, b, d_body)).or_insert(0) += n;
                }
            }
        }
    }
    let mut out: Vec<Candidate> = counts
        .into_iter()
        .filter(|&(_, n)| n >= min_support)
        .map(|((h, d, b, db), n)| Candidate {
            kind: RuleKind::C {
                head_relation: h,
                head_constant: d,
                body_relation: b,
                body_constant: db,
            },
            support: n,
        })
        .collect();
    out.sort_unstable_by_key(|c| c.kind);
    out
}

/// Static z-rule confidences:
/// |{(x,t): p(x,d,t)}| / (|{(x,t): ∃z p(x,z,t)}| + 𝒫) for every observed
/// (p, d). Sorted by (relation, object).
pub fn compute_z_confidences(index: &TemporalIndex, psmooth: f64) -> Vec<Rule> {
    let mut numer: HashMap<(RelationId, EntityId), u64> = HashMap::new();
    for (p, _, o, ts) in index.iter_spo() {
        *numer.entry((p, o)).or_insert(0) += ts.len() as u64;
    }
    let mut denom: HashMap<RelationId, u64> = HashMap::new();
    for (p, _, ts) in index.iter_sp() {
        *denom.entry(p).or_insert(0) += ts.len() as u64;
    }
    let mut out: Vec<Rule> = numer
        .into_iter()
        .map(|((p, d), num)| {
            let den = denom[&p];
            Rule {
                kind: RuleKind::Z {
                    relation: p,
                    object_constant: d,
                },
                params: None,
                static_conf: Some(num as f64 / (den as f64 + psmooth)),
                support: den,
                positives: num,
            }
        })
        .collect();
    out.sort_unstable_by_key(|r| r.kind);
    out
}

/// Static f-rule confidences:
/// |{t: p(c,d,t)}| / (|{t: ∃z p(c,z,t)}| + 𝒫) for every observed (p, c, d).
pub fn compute_f_confidences(index: &TemporalIndex, psmooth: f64) -> Vec<Rule> {
    let mut out: Vec<Rule> = index
        .iter_spo()
        .map(|(p, c, d, ts)| {
            let den = index.subject_timestamps(p, c).len() as u64;
            Rule {
                kind: RuleKind::F {
                    relation: p,
                    subject_constant: c,
                    object_constant: d,
                },
                params: None,
                static_conf: Some(ts.len() as f64 / (den as f64 + psmooth)),
                support: den,
                positives: ts.len() as u64,
            }
        })
        .collect();
    out.sort_unstable_by_key(|r| r.kind);
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct RuleFileHeader {
    format: String,
    version: u32,
    window: Timestamp,
    rule_count: usize,
}

/// Writes the rule set as a header line followed by one JSON record per rule.
pub fn serialize_rules(ruleset: &RuleSet, mut out: impl Write) -> Result<(), Error> {
    let header = RuleFileHeader {
        format: "rulecast-rules".into(),
        version: RULE_FORMAT_VERSION,
        window: ruleset.window,
        rule_count: ruleset.rules.len(),
    };
    writeln!(
        out,
        "{}",
        serde_json::to_string(&header).expect("header serializes")
    )?;
    for rule in &ruleset.rules {
        writeln!(
            out,
            "{}",
            serde_json::to_string(rule).expect("rule serializes")
        )?;
    }
    Ok(())
}

/// Parses a rule file; the inverse of `serialize_rules`. Errors carry the
/// offending line number.
pub fn parse_rules(reader: impl BufRead) -> Result<RuleSet, Error> {
    let mut lines = reader.lines().enumerate();
    let header_line = match lines.next() {
        Some((_, line)) => line?,
        None => {
            return Err(Error::MalformedRule {
                line: 1,
                reason: "empty rule file".into(),
            })
        }
    };
    let header: RuleFileHeader =
        serde_json::from_str(&header_line).map_err(|e| Error::MalformedRule {
            line: 1,
            reason: e.to_string(),
        })?;
    if header.version != RULE_FORMAT_VERSION {
        return Err(Error::RuleVersionMismatch {
            found: header.version,
            expected: RULE_FORMAT_VERSION,
        });
    }
    // The header count is untrusted input; don't let it size the allocation.
    let mut rules = Vec::with_capacity(header.rule_count.min(1 << 16));
    let mut seen: HashSet<RuleKind> = HashSet::new();
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rule: Rule = serde_json::from_str(&line).map_err(|e| Error::MalformedRule {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        rule.validate().map_err(|reason| Error::MalformedRule {
            line: idx + 1,
            reason,
        })?;
        if !seen.insert(rule.kind) {
            return Err(Error::MalformedRule {
                line: idx + 1,
                reason: "duplicate rule".into(),
            });
        }
        rules.push(rule);
    }
    if rules.len() != header.rule_count {
        return Err(Error::MalformedRule {
            line: rules.len() + 1,
            reason: format!(
                "file truncated: header promises {} rules, found {}",
                header.rule_count,
                rules.len()
            ),
        });
    }
    Ok(RuleSet {
        window: header.window,
        rules,
    })
}
