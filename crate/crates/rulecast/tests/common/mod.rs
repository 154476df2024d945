#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rulecast::tkg::Quadruple;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random quadruples over a small vocabulary; duplicates allowed.
pub fn random_quads(
    rng: &mut ChaCha8Rng,
    entities: u32,
    relations: u32,
    timestamps: u32,
    facts: usize,
) -> Vec<Quadruple> {
    (0..facts)
        .map(|_| {
            Quadruple::new(
                rng.gen_range(0..entities),
                rng.gen_range(0..relations),
                rng.gen_range(0..entities),
                rng.gen_range(0..timestamps),
            )
        })
        .collect()
}

/// A dataset with enough temporal regularity for rules to be learnable:
/// each (subject, relation) keeps revisiting a home object, with noise.
pub fn structured_quads(rng: &mut ChaCha8Rng, entities: u32, relations: u32) -> Vec<Quadruple> {
    let mut quads = Vec::new();
    for t in 0..40u32 {
        for s in 0..entities {
            for p in 0..relations {
                let home = (s * 7 + p * 3) % entities;
                if rng.gen_bool(0.35) {
                    quads.push(Quadruple::new(s, p, home, t));
                }
                if rng.gen_bool(0.08) {
                    quads.push(Quadruple::new(s, p, rng.gen_range(0..entities), t));
                }
            }
        }
    }
    quads
}

fn render_split(quads: &[Quadruple]) -> String {
    let mut out = String::new();
    for q in quads {
        writeln!(
            out,
            "e{}\tr{}\te{}\t{}",
            q.subject, q.relation, q.object, q.timestamp
        )
        .unwrap();
    }
    out
}

/// Writes a structured dataset as name-mode TSV splits under `dir`.
/// Train covers ticks 0..28, valid 28..34, test 34..40.
pub fn write_dataset(dir: &Path, seed: u64) -> (PathBuf, PathBuf, PathBuf) {
    let mut rng = rng(seed);
    let quads = structured_quads(&mut rng, 12, 3);
    let split = |lo: u32, hi: u32| -> Vec<Quadruple> {
        quads
            .iter()
            .filter(|q| q.timestamp >= lo && q.timestamp < hi)
            .copied()
            .collect()
    };
    let train = dir.join("train.txt");
    let valid = dir.join("valid.txt");
    let test = dir.join("test.txt");
    std::fs::write(&train, render_split(&split(0, 28))).unwrap();
    std::fs::write(&valid, render_split(&split(28, 34))).unwrap();
    std::fs::write(&test, render_split(&split(34, 40))).unwrap();
    (train, valid, test)
}
