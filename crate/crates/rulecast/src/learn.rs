//! Learning driver: enumerate candidates, collect examples, fit confidence
//! functions, and assemble the rule set. Per-rule work is independent and
//! runs on the rayon pool; outputs are merged in candidate order so thread
//! count never changes the result.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conf::{
    collect_examples_c, collect_examples_xy, fit_frequency, fit_recency, transform_observed,
    ConfidenceModel, TransformedTargets,
};
use crate::rules::{
    compute_f_confidences, compute_z_confidences, enumerate_c_rules, enumerate_xy_rules,
    frequent_constants, Candidate, Rule, RuleKind, RuleSet,
};
use crate::tkg::{TemporalIndex, Timestamp};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LearnParams {
    pub window: Timestamp,
    pub psmooth: f64,
    pub min_support: u64,
    pub top_constants: usize,
    /// Rules whose peak confidence falls below this floor are dropped.
    pub floor: f64,
}

/// Bucketed fit inputs kept for external plotting, one entry per fitted rule.
#[derive(Debug, Clone)]
pub struct CurveDump {
    pub entries: Vec<(RuleKind, TransformedTargets)>,
}

fn fit_candidate(
    index: &TemporalIndex,
    candidate: &Candidate,
    params: &LearnParams,
) -> Option<(Rule, TransformedTargets)> {
    let examples = match candidate.kind {
        RuleKind::Xy {
            head_relation,
            body_relation,
        } => collect_examples_xy(index, head_relation, body_relation, params.window),
        RuleKind::C {
            head_relation,
            head_constant,
            body_relation,
            body_constant,
        } => collect_examples_c(
            index,
            head_relation,
            head_constant,
            body_relation,
            body_constant,
            params.window,
        ),
        _ => unreachable!("only xy/c candidates are fitted"),
    };
    if (examples.len() as u64) < params.min_support {
        return None;
    }
    let targets = transform_observed(&examples, params.psmooth);
    let recency = fit_recency(&targets.recency);
    let (rho, kappa, gamma) = if recency.fallback {
        (0.0, 0.0, 0.0)
    } else {
        fit_frequency(&targets.frequency, &recency, params.window)
    };
    let model = ConfidenceModel {
        alpha: recency.alpha,
        lambda: recency.lambda,
        phi: recency.phi,
        rho,
        kappa,
        gamma,
        window: params.window,
    };
    let rule = Rule {
        kind: candidate.kind,
        params: Some(model),
        static_conf: None,
        support: examples.len() as u64,
        positives: examples.positives() as u64,
    };
    if rule.peak_confidence() < params.floor {
        return None;
    }
    Some((rule, targets))
}

/// Learns the full rule set from a training index (augmented, training split
/// only). Deterministic for a fixed index and parameters.
pub fn learn_ruleset(
    index: &TemporalIndex,
    params: &LearnParams,
    dump: bool,
) -> (RuleSet, Option<CurveDump>) {
    let mut candidates = enumerate_xy_rules(index, params.min_support);
    let frequent = frequent_constants(index, params.top_constants);
    candidates.extend(enumerate_c_rules(
        index,
        &frequent,
        params.min_support,
        params.window,
    ));

    let fitted: Vec<Option<(Rule, TransformedTargets)>> = candidates
        .par_iter()
        .map(|c| fit_candidate(index, c, params))
        .collect();

    let mut rules = Vec::new();
    let mut curves = Vec::new();
    for entry in fitted.into_iter().flatten() {
        if dump {
            curves.push((entry.0.kind, entry.1));
        }
        rules.push(entry.0);
    }
    for rule in compute_z_confidences(index, params.psmooth) {
        if rule.static_conf.unwrap_or(0.0) >= params.floor {
            rules.push(rule);
        }
    }
    for rule in compute_f_confidences(index, params.psmooth) {
        if rule.static_conf.unwrap_or(0.0) >= params.floor {
            rules.push(rule);
        }
    }
    (
        RuleSet {
            window: params.window,
            rules,
        },
        dump.then_some(CurveDump { entries: curves }),
    )
}

/// Confidence-function ablation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfVariant {
    /// Smoothed static confidence per rule; no temporal shape.
    Static,
    /// Recency term only (g forced to zero).
    RecencyOnly,
    /// Frequency term only (f forced to zero).
    FrequencyOnly,
    /// The full f + g function.
    Full,
}

impl std::str::FromStr for ConfVariant {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self, crate::Error> {
        match s {
            "static" => Ok(Self::Static),
            "f" | "recency" => Ok(Self::RecencyOnly),
            "g" | "frequency" => Ok(Self::FrequencyOnly),
            "fg" | "full" => Ok(Self::Full),
            other => Err(crate::Error::Config(format!(
                "unknown confidence variant `{other}`"
            ))),
        }
    }
}

/// Rewrites the learned models of xy/c rules for an ablation variant;
/// z/f-rules keep their static confidences in every variant.
pub fn apply_conf_variant(ruleset: &RuleSet, variant: ConfVariant, psmooth: f64) -> RuleSet {
    if variant == ConfVariant::Full {
        return ruleset.clone();
    }
    let rules = ruleset
        .rules
        .iter()
        .map(|rule| {
            let Some(model) = rule.params else {
                return rule.clone();
            };
            let params = match variant {
                ConfVariant::Static => {
                    let conf = rule.positives as f64 / (rule.support as f64 + psmooth);
                    ConfidenceModel::static_fallback(conf, model.window)
                }
                ConfVariant::RecencyOnly => ConfidenceModel {
                    rho: 0.0,
                    kappa: 0.0,
                    gamma: 0.0,
                    ..model
                },
                ConfVariant::FrequencyOnly => ConfidenceModel {
                    alpha: 0.0,
                    ..model
                },
                ConfVariant::Full => unreachable!(),
            };
            Rule {
                params: Some(params),
                ..rule.clone()
            }
        })
        .collect();
    RuleSet {
        window: ruleset.window,
        rules,
    }
}
