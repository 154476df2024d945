//! Rule-based temporal knowledge graph forecasting.
//!
//! The pipeline: parse and inverse-augment a quadruple dataset, mine four
//! kinds of single-body-atom temporal rules, fit per-rule recency/frequency
//! confidence functions, answer object queries by decayed top-H noisy-or
//! aggregation, and evaluate with time-aware filtered MRR / Hits@k.

pub mod conf;
pub mod config;
pub mod eval;
pub mod inference;
pub mod learn;
pub mod rules;
pub mod tkg;

use thiserror::Error as ThisError;

#[derive(Debug, ThisError)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{split} line {line}: {reason}")]
    MalformedLine {
        split: &'static str,
        line: usize,
        reason: String,
    },
    #[error("train split is empty")]
    EmptyTrainSplit,
    #[error("{earlier} and {later} splits overlap in time")]
    SplitOverlap {
        earlier: &'static str,
        later: &'static str,
    },
    #[error("relation id {relation} is an inverse id; graph is already augmented")]
    AlreadyAugmented { relation: u32 },
    #[error("extend batch mixes timestamps")]
    ExtendMixedTimestamps,
    #[error("extend at timestamp {timestamp} but index already contains {max}")]
    ExtendOutOfOrder { timestamp: u32, max: u32 },
    #[error("rule file record {line}: {reason}")]
    MalformedRule { line: usize, reason: String },
    #[error("rule file version {found} unsupported (expected {expected})")]
    RuleVersionMismatch { found: u32, expected: u32 },
    #[error("eval split is not sorted by timestamp")]
    UnsortedEvalSplit,
    #[error("unknown name: {0}")]
    UnknownName(String),
    #[error("config: {0}")]
    Config(String),
}
