use std::collections::BTreeSet;
use std::io::BufRead;

use super::{Quadruple, Vocabulary};
use crate::Error;

/// How subject/relation/object tokens are interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseMode {
    /// Tokens are already dense non-negative integer ids.
    Ids,
    /// Tokens are string labels; ids are assigned in first-seen order.
    Names,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub train: Vec<Quadruple>,
    pub valid: Vec<Quadruple>,
    pub test: Vec<Quadruple>,
}

/// Ceiling on explicit ids in ids mode. The vocabulary is materialized
/// densely up to the largest id seen, so an absurd id in a malformed file
/// must not translate into an absurd allocation.
const MAX_DENSE_ID: u32 = 10_000_000;

struct RawQuad {
    subject: u32,
    relation: u32,
    object: u32,
    timestamp: u64,
    line: usize,
}

fn parse_split(
    reader: impl BufRead,
    split: &'static str,
    mode: ParseMode,
    vocab: &mut Vocabulary,
    max_entity: &mut u32,
    max_relation: &mut u32,
) -> Result<Vec<RawQuad>, Error> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(Error::Io)?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let (s, p, o, t) = match (cols.next(), cols.next(), cols.next(), cols.next()) {
            (Some(s), Some(p), Some(o), Some(t)) => (s, p, o, t),
            _ => {
                return Err(Error::MalformedLine {
                    split,
                    line: lineno + 1,
                    reason: "expected at least 4 tab-separated columns".into(),
                })
            }
        };
        // A fifth column (e.g. a secondary object) is ignored.
        let timestamp: u64 = t.trim().parse().map_err(|_| Error::MalformedLine {
            split,
            line: lineno + 1,
            reason: format!("timestamp `{t}` is not a non-negative integer"),
        })?;
        let (subject, relation, object) = match mode {
            ParseMode::Ids => {
                let parse_id = |tok: &str, what: &str| {
                    tok.trim()
                        .parse::<u32>()
                        .ok()
                        .filter(|&id| id <= MAX_DENSE_ID)
                        .ok_or_else(|| Error::MalformedLine {
                            split,
                            line: lineno + 1,
                            reason: format!(
                                "{what} `{tok}` is not an integer id in 0..={MAX_DENSE_ID}"
                            ),
                        })
                };
                (
                    parse_id(s, "subject")?,
                    parse_id(p, "relation")?,
                    parse_id(o, "object")?,
                )
            }
            ParseMode::Names => (
                vocab.intern_entity(s),
                vocab.intern_relation(p),
                vocab.intern_entity(o),
            ),
        };
        *max_entity = (*max_entity).max(subject).max(object);
        *max_relation = (*max_relation).max(relation);
        out.push(RawQuad {
            subject,
            relation,
            object,
            timestamp,
            line: lineno + 1,
        });
    }
    Ok(out)
}

/// Parses a single stream of tab-separated quadruples against an existing
/// vocabulary (ids mode). Used for ad-hoc fact files.
pub fn parse_quads(reader: impl BufRead) -> Result<Vec<Quadruple>, Error> {
    let mut vocab = Vocabulary::default();
    let (mut me, mut mr) = (0, 0);
    let raw = parse_split(
        reader,
        "input",
        ParseMode::Ids,
        &mut vocab,
        &mut me,
        &mut mr,
    )?;
    raw.into_iter()
        .map(|q| {
            let timestamp = u32::try_from(q.timestamp).map_err(|_| Error::MalformedLine {
                split: "input",
                line: q.line,
                reason: format!("timestamp `{}` does not fit in 32 bits", q.timestamp),
            })?;
            Ok(Quadruple::new(q.subject, q.relation, q.object, timestamp))
        })
        .collect()
}

/// Parses the three splits, builds the vocabulary, normalizes timestamps to
/// dense consecutive ticks (0,1,2,... over the sorted distinct raw stamps of
/// all splits), and checks temporal split disjointness:
/// max(train) < min(valid) <= max(valid) < min(test).
pub fn parse_dataset(
    train: impl BufRead,
    valid: impl BufRead,
    test: impl BufRead,
    mode: ParseMode,
) -> Result<(Vocabulary, Dataset), Error> {
    let mut vocab = Vocabulary::default();
    let (mut max_entity, mut max_relation) = (0u32, 0u32);
    let train_raw = parse_split(
        train,
        "train",
        mode,
        &mut vocab,
        &mut max_entity,
        &mut max_relation,
    )?;
    let valid_raw = parse_split(
        valid,
        "valid",
        mode,
        &mut vocab,
        &mut max_entity,
        &mut max_relation,
    )?;
    let test_raw = parse_split(
        test,
        "test",
        mode,
        &mut vocab,
        &mut max_entity,
        &mut max_relation,
    )?;
    if train_raw.is_empty() {
        return Err(Error::EmptyTrainSplit);
    }

    if mode == ParseMode::Ids {
        for e in 0..=max_entity {
            vocab.intern_entity(&e.to_string());
        }
        for r in 0..=max_relation {
            vocab.intern_relation(&r.to_string());
        }
    }
    vocab.set_original_relations(vocab.relation_names().len() as u32);

    // Dense tick normalization over all splits jointly.
    let stamps: BTreeSet<u64> = train_raw
        .iter()
        .chain(&valid_raw)
        .chain(&test_raw)
        .map(|q| q.timestamp)
        .collect();
    let tick: std::collections::HashMap<u64, u32> = stamps
        .iter()
        .enumerate()
        .map(|(i, &t)| (t, i as u32))
        .collect();

    let convert = |raw: Vec<RawQuad>| -> Vec<Quadruple> {
        raw.into_iter()
            .map(|q| Quadruple::new(q.subject, q.relation, q.object, tick[&q.timestamp]))
            .collect()
    };
    let dataset = Dataset {
        train: convert(train_raw),
        valid: convert(valid_raw),
        test: convert(test_raw),
    };

    let range = |quads: &[Quadruple]| -> Option<(u32, u32)> {
        let min = quads.iter().map(|q| q.timestamp).min()?;
        let max = quads.iter().map(|q| q.timestamp).max()?;
        Some((min, max))
    };
    let train_range = range(&dataset.train);
    let valid_range = range(&dataset.valid);
    let test_range = range(&dataset.test);
    if let (Some((_, tmax)), Some((vmin, _))) = (train_range, valid_range) {
        if tmax >= vmin {
            return Err(Error::SplitOverlap {
                earlier: "train",
                later: "valid",
            });
        }
    }
    if let (Some((_, vmax)), Some((smin, _))) = (valid_range, test_range) {
        if vmax >= smin {
            return Err(Error::SplitOverlap {
                earlier: "valid",
                later: "test",
            });
        }
    }
    if valid_range.is_none() {
        if let (Some((_, tmax)), Some((smin, _))) = (train_range, test_range) {
            if tmax >= smin {
                return Err(Error::SplitOverlap {
                    earlier: "train",
                    later: "test",
                });
            }
        }
    }

    Ok((vocab, dataset))
}
