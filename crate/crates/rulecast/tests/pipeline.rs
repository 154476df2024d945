mod common;

use rulecast::eval::{run_single_step, EvalParams, EvalReport, TiePolicy};
use rulecast::learn::{learn_ruleset, LearnParams};
use rulecast::rules::{parse_rules, serialize_rules, RuleSet};
use rulecast::tkg::{
    augment_with_inverses, parse_dataset, Dataset, ParseMode, TemporalIndex, Vocabulary,
};

fn load(seed: u64) -> (Vocabulary, Dataset) {
    let dir = tempfile::tempdir().unwrap();
    let (train, valid, test) = common::write_dataset(dir.path(), seed);
    let open = |p: &std::path::Path| std::io::BufReader::new(std::fs::File::open(p).unwrap());
    parse_dataset(open(&train), open(&valid), open(&test), ParseMode::Names).unwrap()
}

fn full_run(vocab: &Vocabulary, dataset: &Dataset) -> (RuleSet, EvalReport) {
    let r = vocab.num_original_relations();
    let train = augment_with_inverses(&dataset.train, r).unwrap();
    let index = TemporalIndex::build(&train);
    let params = LearnParams {
        window: 20,
        psmooth: 10.0,
        min_support: 3,
        top_constants: 50,
        floor: 0.001,
    };
    let (ruleset, _) = learn_ruleset(&index, &params, false);

    let mut pre = train.clone();
    pre.extend(augment_with_inverses(&dataset.valid, r).unwrap());
    let mut eval_index = TemporalIndex::build(&pre);
    let mut quads = dataset.test.clone();
    quads.sort_by_key(|q| q.timestamp);
    let eval_params = EvalParams {
        top_h: 5,
        decay: 0.9,
        tie_policy: TiePolicy::Average,
        num_entities: vocab.num_entities(),
    };
    let (report, _) = run_single_step(
        &mut eval_index,
        &ruleset,
        &quads,
        r,
        &eval_params,
        serde_json::json!({}),
    )
    .unwrap();
    (ruleset, report)
}

/// Identical inputs must give byte-identical rules and reports regardless of
/// how many worker threads rayon uses.
#[test]
fn deterministic_across_thread_counts() {
    let (vocab, dataset) = load(42);
    let mut outputs = Vec::new();
    for threads in [1, 2, 8] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        let (ruleset, report) = pool.install(|| full_run(&vocab, &dataset));
        let mut rules_bytes = Vec::new();
        serialize_rules(&ruleset, &mut rules_bytes).unwrap();
        let report_bytes = serde_json::to_vec(&report).unwrap();
        outputs.push((rules_bytes, report_bytes));
    }
    assert_eq!(outputs[0].0, outputs[1].0, "rules differ (1 vs 2 threads)");
    assert_eq!(outputs[0].0, outputs[2].0, "rules differ (1 vs 8 threads)");
    assert_eq!(
        outputs[0].1, outputs[1].1,
        "reports differ (1 vs 2 threads)"
    );
    assert_eq!(
        outputs[0].1, outputs[2].1,
        "reports differ (1 vs 8 threads)"
    );
}

/// Serialization must preserve every parameter bit-exactly: the round-tripped
/// rule set scores the test split identically to the in-memory one.
#[test]
fn rules_round_trip_preserves_scores() {
    let (vocab, dataset) = load(99);
    let (ruleset, report) = full_run(&vocab, &dataset);
    let mut bytes = Vec::new();
    serialize_rules(&ruleset, &mut bytes).unwrap();
    let parsed = parse_rules(std::io::BufReader::new(bytes.as_slice())).unwrap();
    assert_eq!(ruleset.rules.len(), parsed.rules.len());

    let r = vocab.num_original_relations();
    let train = augment_with_inverses(&dataset.train, r).unwrap();
    let mut pre = train.clone();
    pre.extend(augment_with_inverses(&dataset.valid, r).unwrap());
    let mut eval_index = TemporalIndex::build(&pre);
    let mut quads = dataset.test.clone();
    quads.sort_by_key(|q| q.timestamp);
    let eval_params = EvalParams {
        top_h: 5,
        decay: 0.9,
        tie_policy: TiePolicy::Average,
        num_entities: vocab.num_entities(),
    };
    let (report2, _) = run_single_step(
        &mut eval_index,
        &parsed,
        &quads,
        r,
        &eval_params,
        serde_json::json!({}),
    )
    .unwrap();
    assert_eq!(
        serde_json::to_string(&report.overall).unwrap(),
        serde_json::to_string(&report2.overall).unwrap()
    );
}
