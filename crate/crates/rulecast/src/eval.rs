//! Single-step evaluation over a chronologically ordered split with
//! time-aware filtered MRR and Hits@k.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::inference::{fire_rules, rank, Query};
use crate::rules::RuleSet;
use crate::tkg::{
    augment_with_inverses, EntityId, Quadruple, RelationId, TemporalIndex, Timestamp,
};
use crate::Error;

/// How rank ties against the gold score are resolved. Protocols differ
/// across evaluation frameworks, so all three are available.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    Best,
    #[default]
    Average,
    Worst,
}

impl FromStr for TiePolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "best" => Ok(Self::Best),
            "average" => Ok(Self::Average),
            "worst" => Ok(Self::Worst),
            other => Err(Error::Config(format!("unknown tie policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EvalParams {
    pub top_h: usize,
    pub decay: f64,
    pub tie_policy: TiePolicy,
    pub num_entities: usize,
}

/// Rank of `gold` among all entities after removing the other true objects
/// of the same (s, p, t*). Unscored entities count as score 0. A gold
/// outside the vocabulary ranks over |C|+1 entities with score 0.
pub fn time_aware_filtered_rank(
    scores: &HashMap<EntityId, f64>,
    gold: EntityId,
    filtered: &HashSet<EntityId>,
    num_entities: usize,
    policy: TiePolicy,
) -> f64 {
    let (total, gold_score) = if (gold as usize) < num_entities {
        (num_entities, scores.get(&gold).copied().unwrap_or(0.0))
    } else {
        (num_entities + 1, 0.0)
    };
    let is_other = |e: EntityId| e != gold && !filtered.contains(&e);
    let mut higher = 0usize;
    let mut equal = 0usize;
    let mut scored_others = 0usize;
    for (&e, &s) in scores {
        if !is_other(e) || (e as usize) >= num_entities {
            continue;
        }
        scored_others += 1;
        if s > gold_score {
            higher += 1;
        } else if s == gold_score {
            equal += 1;
        }
    }
    let filtered_others = filtered
        .iter()
        .filter(|&&e| e != gold && (e as usize) < num_entities)
        .count();
    let others_total = total - 1 - filtered_others;
    if gold_score == 0.0 {
        equal += others_total - scored_others;
    }
    match policy {
        TiePolicy::Best => (1 + higher) as f64,
        TiePolicy::Average => 1.0 + higher as f64 + equal as f64 / 2.0,
        TiePolicy::Worst => (1 + higher + equal) as f64,
    }
}

/// Per-query outcome, sufficient to recompute every aggregate metric.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub subject: EntityId,
    pub relation: RelationId,
    pub timestamp: Timestamp,
    pub gold: EntityId,
    pub rank: f64,
    pub gold_score: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MetricBlock {
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub count: usize,
}

impl MetricBlock {
    fn from_ranks(ranks: impl Iterator<Item = f64>) -> Self {
        let mut block = MetricBlock::default();
        for r in ranks {
            block.mrr += 1.0 / r;
            block.hits1 += (r <= 1.0) as u8 as f64;
            block.hits3 += (r <= 3.0) as u8 as f64;
            block.hits10 += (r <= 10.0) as u8 as f64;
            block.count += 1;
        }
        if block.count > 0 {
            let n = block.count as f64;
            block.mrr /= n;
            block.hits1 /= n;
            block.hits3 /= n;
            block.hits10 /= n;
        }
        block
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub version: u32,
    pub overall: MetricBlock,
    pub per_relation: BTreeMap<RelationId, MetricBlock>,
    pub per_timestamp: BTreeMap<Timestamp, MetricBlock>,
    /// Effective configuration the run was produced with.
    pub config: serde_json::Value,
}

impl EvalReport {
    pub fn render_table(&self) -> String {
        let o = &self.overall;
        format!(
            "queries {:>8}\nMRR     {:>8.4}\nHits@1  {:>8.4}\nHits@3  {:>8.4}\nHits@10 {:>8.4}\n",
            o.count, o.mrr, o.hits1, o.hits3, o.hits10
        )
    }
}

fn build_report(outcomes: &[QueryOutcome], config: serde_json::Value) -> EvalReport {
    let overall = MetricBlock::from_ranks(outcomes.iter().map(|o| o.rank));
    let mut per_relation: BTreeMap<RelationId, Vec<f64>> = BTreeMap::new();
    let mut per_timestamp: BTreeMap<Timestamp, Vec<f64>> = BTreeMap::new();
    for o in outcomes {
        per_relation.entry(o.relation).or_default().push(o.rank);
        per_timestamp.entry(o.timestamp).or_default().push(o.rank);
    }
    EvalReport {
        version: 1,
        overall,
        per_relation: per_relation
            .into_iter()
            .map(|(k, v)| (k, MetricBlock::from_ranks(v.into_iter())))
            .collect(),
        per_timestamp: per_timestamp
            .into_iter()
            .map(|(k, v)| (k, MetricBlock::from_ranks(v.into_iter())))
            .collect(),
        config,
    }
}

/// Runs the single-step protocol: for each eval timestamp in order, answers
/// all object queries of that timestamp (each quadruple and its inverse),
/// then reveals the true facts to the index before moving on.
///
/// The index must cover everything before the split (train, plus valid when
/// evaluating test) and nothing of the split itself. `r_original` is the
/// original relation count; the split must be unaugmented.
pub fn run_single_step(
    index: &mut TemporalIndex,
    ruleset: &RuleSet,
    eval_split: &[Quadruple],
    r_original: u32,
    params: &EvalParams,
    config_echo: serde_json::Value,
) -> Result<(EvalReport, Vec<QueryOutcome>), Error> {
    if eval_split
        .windows(2)
        .any(|w| w[0].timestamp > w[1].timestamp)
    {
        return Err(Error::UnsortedEvalSplit);
    }
    let mut outcomes: Vec<QueryOutcome> = Vec::with_capacity(eval_split.len() * 2);
    let mut i = 0;
    while i < eval_split.len() {
        let t = eval_split[i].timestamp;
        let j = i + eval_split[i..].partition_point(|q| q.timestamp == t);
        let augmented = augment_with_inverses(&eval_split[i..j], r_original)?;

        // True objects per (s, p) at this timestamp, for filtering.
        let mut truths: HashMap<(EntityId, RelationId), HashSet<EntityId>> = HashMap::new();
        for q in &augmented {
            truths
                .entry((q.subject, q.relation))
                .or_default()
                .insert(q.object);
        }

        let queries: Vec<(Query, EntityId)> = augmented
            .iter()
            .map(|q| {
                (
                    Query {
                        subject: q.subject,
                        relation: q.relation,
                        timestamp: t,
                    },
                    q.object,
                )
            })
            .collect();
        let shared: &TemporalIndex = index;
        let mut batch: Vec<QueryOutcome> = queries
            .par_iter()
            .map(|&(query, gold)| {
                let scores = fire_rules(shared, ruleset, query, params.top_h);
                let ranked = rank(&scores, params.top_h, params.decay);
                let score_map: HashMap<EntityId, f64> = ranked.into_iter().collect();
                let filtered = &truths[&(query.subject, query.relation)];
                let r = time_aware_filtered_rank(
                    &score_map,
                    gold,
                    filtered,
                    params.num_entities,
                    params.tie_policy,
                );
                QueryOutcome {
                    subject: query.subject,
                    relation: query.relation,
                    timestamp: t,
                    gold,
                    rank: r,
                    gold_score: score_map.get(&gold).copied().unwrap_or(0.0),
                }
            })
            .collect();
        outcomes.append(&mut batch);

        index.extend(&augmented)?;
        i = j;
    }
    Ok((build_report(&outcomes, config_echo), outcomes))
}
