use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rulecast::config::Config;
use rulecast::eval::{run_single_step, EvalParams, EvalReport};
use rulecast::inference::{explain, fire_rules, rank, Query};
use rulecast::learn::{apply_conf_variant, learn_ruleset, ConfVariant, LearnParams};
use rulecast::rules::{parse_rules, serialize_rules, RuleSet, RuleType};
use rulecast::tkg::{
    augment_with_inverses, parse_dataset, Dataset, ParseMode, Quadruple, TemporalIndex, Vocabulary,
};
use rulecast::Error;

#[derive(Parser)]
#[command(
    name = "rulecast",
    version,
    about = "Rule-based temporal knowledge graph forecasting"
)]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// key = value config file; flags override file values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    train: Option<PathBuf>,
    #[arg(long, global = true)]
    valid: Option<PathBuf>,
    #[arg(long, global = true)]
    test: Option<PathBuf>,
    /// Dataset tokens are dense integer ids rather than string labels
    #[arg(long, global = true)]
    id_mode: bool,
    /// Time window W
    #[arg(long, global = true)]
    window: Option<u32>,
    /// Smoothing constant added to confidence denominators
    #[arg(long, global = true)]
    psmooth: Option<f64>,
    /// Top confidences entering noisy-or aggregation
    #[arg(long, global = true)]
    top_h: Option<usize>,
    /// Per-position decay of aggregated confidences
    #[arg(long, global = true)]
    decay: Option<f64>,
    /// Frequent-constant pool size for c-rules
    #[arg(long, global = true)]
    top_constants: Option<usize>,
    /// Minimum example count for xy/c rule admission
    #[arg(long, global = true)]
    min_support: Option<u64>,
    /// Peak-confidence floor for retaining rules
    #[arg(long, global = true)]
    floor: Option<f64>,
    /// Rank tie policy: best | average | worst
    #[arg(long, global = true)]
    tie_policy: Option<String>,
    /// Worker threads (0 = all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a rule set from the training split
    Learn {
        /// Output rule-set file
        #[arg(long)]
        rules: PathBuf,
        /// Directory for bucketed fit-input tables (plot diagnostics)
        #[arg(long)]
        dump_curves: Option<PathBuf>,
    },
    /// Evaluate a rule set with time-aware filtered MRR / Hits@k
    Eval {
        #[arg(long)]
        rules: PathBuf,
        /// Split to evaluate: valid | test
        #[arg(long, default_value = "test")]
        split: String,
        /// Report output file (JSON); a table is printed either way
        #[arg(long)]
        out: Option<PathBuf>,
        /// Restrict to rule types, comma separated: rec,xy,c,z,f
        #[arg(long)]
        rule_types: Option<String>,
        /// Confidence variant: static | f | g | fg
        #[arg(long, default_value = "fg")]
        conf_variant: String,
        /// Exclude the validation split from the inference index
        #[arg(long)]
        train_only: bool,
        /// Also write per-query ranks (JSON lines) to this file
        #[arg(long)]
        dump_ranks: Option<PathBuf>,
    },
    /// Write top-k predictions for every query of a split
    Predict {
        #[arg(long)]
        rules: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        top_k: usize,
        #[arg(long)]
        train_only: bool,
    },
    /// Explain the top candidates for one query
    Explain {
        #[arg(long)]
        rules: PathBuf,
        /// Subject entity (name, or id in id mode)
        #[arg(long)]
        subject: String,
        /// Relation (name, optionally suffixed ^-1, or id)
        #[arg(long)]
        relation: String,
        /// Query timestamp (dense tick)
        #[arg(long)]
        timestamp: u32,
        #[arg(long, default_value_t = 3)]
        top_k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate rule-type subsets and confidence variants
    Ablate {
        #[arg(long)]
        rules: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        train_only: bool,
    },
}

fn build_config(common: &CommonArgs) -> Result<Config, Error> {
    let mut config = Config::default();
    if let Some(path) = &common.config {
        let contents = std::fs::read_to_string(path)?;
        config.apply_file(&contents)?;
    }
    macro_rules! flag {
        ($field:ident, $key:literal) => {
            if let Some(v) = &common.$field {
                config.set($key, &v.to_string())?;
            }
        };
    }
    if let Some(p) = &common.train {
        config.train = p.clone();
    }
    if let Some(p) = &common.valid {
        config.valid = p.clone();
    }
    if let Some(p) = &common.test {
        config.test = p.clone();
    }
    if common.id_mode {
        config.id_mode = true;
    }
    flag!(window, "window");
    flag!(psmooth, "psmooth");
    flag!(top_h, "top_h");
    flag!(decay, "decay");
    flag!(top_constants, "top_constants");
    flag!(min_support, "min_support");
    flag!(floor, "floor");
    flag!(tie_policy, "tie_policy");
    flag!(threads, "threads");
    flag!(seed, "seed");
    config.validate()?;
    Ok(config)
}

fn open_reader(path: &Path) -> Result<BufReader<File>, Error> {
    Ok(BufReader::new(File::open(path)?))
}

fn maybe_reader(path: &Path) -> Result<Box<dyn std::io::BufRead>, Error> {
    if path.as_os_str().is_empty() {
        Ok(Box::new(std::io::empty()))
    } else {
        Ok(Box::new(open_reader(path)?))
    }
}

fn load_dataset(config: &Config) -> Result<(Vocabulary, Dataset), Error> {
    let mode = if config.id_mode {
        ParseMode::Ids
    } else {
        ParseMode::Names
    };
    parse_dataset(
        open_reader(&config.train)?,
        maybe_reader(&config.valid)?,
        maybe_reader(&config.test)?,
        mode,
    )
}

fn init_threads(config: &Config) {
    if config.threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build_global();
    }
}

fn parse_rule_types(spec: &str) -> Result<HashSet<RuleType>, Error> {
    let mut keep = HashSet::new();
    for token in spec.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        match token {
            "rec" => {
                keep.insert(RuleType::Recurrent);
            }
            "xy" => {
                keep.insert(RuleType::Recurrent);
                keep.insert(RuleType::Xy);
            }
            "c" => {
                keep.insert(RuleType::C);
            }
            "z" => {
                keep.insert(RuleType::Z);
            }
            "f" => {
                keep.insert(RuleType::F);
            }
            other => return Err(Error::Config(format!("unknown rule type `{other}`"))),
        }
    }
    Ok(keep)
}

fn eval_split<'a>(dataset: &'a Dataset, split: &str) -> Result<&'a [Quadruple], Error> {
    match split {
        "valid" => Ok(&dataset.valid),
        "test" => Ok(&dataset.test),
        other => Err(Error::Config(format!(
            "unknown split `{other}` (use valid|test)"
        ))),
    }
}

/// Index over everything that precedes the chosen eval split.
fn inference_index(
    dataset: &Dataset,
    vocab: &Vocabulary,
    split: &str,
    train_only: bool,
) -> Result<TemporalIndex, Error> {
    let r = vocab.num_original_relations();
    let mut quads = augment_with_inverses(&dataset.train, r)?;
    if split == "test" && !train_only {
        quads.extend(augment_with_inverses(&dataset.valid, r)?);
    }
    Ok(TemporalIndex::build(&quads))
}

fn sorted_by_time(quads: &[Quadruple]) -> Vec<Quadruple> {
    let mut sorted = quads.to_vec();
    sorted.sort_by_key(|q| q.timestamp);
    sorted
}

fn write_mapping(path: &Path, names: &[String]) -> Result<(), Error> {
    let mut out = BufWriter::new(File::create(path)?);
    for (id, name) in names.iter().enumerate() {
        writeln!(out, "{name}\t{id}")?;
    }
    Ok(())
}

fn cmd_learn(config: &Config, rules_path: &Path, dump_dir: Option<&Path>) -> Result<(), Error> {
    let (vocab, dataset) = load_dataset(config)?;
    init_threads(config);
    let r = vocab.num_original_relations();
    let index = TemporalIndex::build(&augment_with_inverses(&dataset.train, r)?);
    let params = LearnParams {
        window: config.window,
        psmooth: config.psmooth,
        min_support: config.min_support,
        top_constants: config.top_constants,
        floor: config.floor,
    };
    let (ruleset, curves) = learn_ruleset(&index, &params, dump_dir.is_some());
    let mut out = BufWriter::new(File::create(rules_path)?);
    serialize_rules(&ruleset, &mut out)?;
    out.flush()?;
    if !config.id_mode {
        write_mapping(
            &rules_path.with_extension("entity2id"),
            vocab.entity_names(),
        )?;
        write_mapping(
            &rules_path.with_extension("relation2id"),
            vocab.relation_names(),
        )?;
    }
    if let (Some(dir), Some(dump)) = (dump_dir, curves) {
        std::fs::create_dir_all(dir)?;
        let mut rec = BufWriter::new(File::create(dir.join("recency.tsv"))?);
        let mut freq = BufWriter::new(File::create(dir.join("frequency.tsv"))?);
        writeln!(rec, "rule\tmin_delta\ttarget\tcount")?;
        writeln!(freq, "rule\tmin_delta\tfreq_ratio\tresidual_target\tcount")?;
        for (i, (_, targets)) in dump.entries.iter().enumerate() {
            for b in &targets.recency {
                writeln!(rec, "{i}\t{}\t{}\t{}", b.min_delta, b.target, b.weight)?;
            }
            for b in &targets.frequency {
                let ratio = b.freq_in_window as f64 / config.window as f64;
                writeln!(
                    freq,
                    "{i}\t{}\t{ratio}\t{}\t{}",
                    b.min_delta, b.target, b.weight
                )?;
            }
        }
    }
    println!(
        "wrote {} rules to {}",
        ruleset.rules.len(),
        rules_path.display()
    );
    for (kind, count) in ruleset.count_by_type() {
        println!("  {kind:<16} {count}");
    }
    Ok(())
}

struct EvalSetup {
    vocab: Vocabulary,
    dataset: Dataset,
    ruleset: RuleSet,
}

fn load_eval_setup(config: &Config, rules_path: &Path) -> Result<EvalSetup, Error> {
    let (vocab, dataset) = load_dataset(config)?;
    let ruleset = parse_rules(open_reader(rules_path)?)?;
    // Guard against evaluating a rule file from a different dataset.
    let max_rel = vocab.num_relations();
    let max_ent = vocab.num_entities() as u32;
    for rule in &ruleset.rules {
        let ok = match rule.kind {
            rulecast::rules::RuleKind::Xy {
                head_relation,
                body_relation,
            } => head_relation < max_rel && body_relation < max_rel,
            rulecast::rules::RuleKind::C {
                head_relation,
                head_constant,
                body_relation,
                body_constant,
            } => {
                head_relation < max_rel
                    && body_relation < max_rel
                    && head_constant < max_ent
                    && body_constant < max_ent
            }
            rulecast::rules::RuleKind::Z {
                relation,
                object_constant,
            } => relation < max_rel && object_constant < max_ent,
            rulecast::rules::RuleKind::F {
                relation,
                subject_constant,
                object_constant,
            } => relation < max_rel && subject_constant < max_ent && object_constant < max_ent,
        };
        if !ok {
            return Err(Error::Config(
                "rule file references ids outside the dataset vocabulary".into(),
            ));
        }
    }
    Ok(EvalSetup {
        vocab,
        dataset,
        ruleset,
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    config: &Config,
    rules_path: &Path,
    split: &str,
    out: Option<&Path>,
    rule_types: Option<&str>,
    conf_variant: &str,
    train_only: bool,
    dump_ranks: Option<&Path>,
) -> Result<(), Error> {
    let setup = load_eval_setup(config, rules_path)?;
    init_threads(config);
    let mut ruleset = setup.ruleset;
    if let Some(spec) = rule_types {
        ruleset = ruleset.filtered(&parse_rule_types(spec)?);
    }
    let variant: ConfVariant = conf_variant.parse()?;
    ruleset = apply_conf_variant(&ruleset, variant, config.psmooth);

    let mut index = inference_index(&setup.dataset, &setup.vocab, split, train_only)?;
    let quads = sorted_by_time(eval_split(&setup.dataset, split)?);
    let params = EvalParams {
        top_h: config.top_h,
        decay: config.decay,
        tie_policy: config.tie_policy,
        num_entities: setup.vocab.num_entities(),
    };
    let mut echo = config.echo();
    echo["split"] = split.into();
    echo["conf_variant"] = conf_variant.into();
    echo["rule_types"] = rule_types.unwrap_or("all").into();
    let (report, outcomes) = run_single_step(
        &mut index,
        &ruleset,
        &quads,
        setup.vocab.num_original_relations(),
        &params,
        echo,
    )?;
    print!("{}", report.render_table());
    if let Some(path) = out {
        let mut f = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut f, &report).map_err(std::io::Error::from)?;
        f.write_all(b"\n")?;
    }
    if let Some(path) = dump_ranks {
        let mut f = BufWriter::new(File::create(path)?);
        for o in &outcomes {
            serde_json::to_writer(&mut f, o).map_err(std::io::Error::from)?;
            f.write_all(b"\n")?;
        }
    }
    Ok(())
}

fn cmd_predict(
    config: &Config,
    rules_path: &Path,
    split: &str,
    out: &Path,
    top_k: usize,
    train_only: bool,
) -> Result<(), Error> {
    let setup = load_eval_setup(config, rules_path)?;
    init_threads(config);
    let mut index = inference_index(&setup.dataset, &setup.vocab, split, train_only)?;
    let quads = sorted_by_time(eval_split(&setup.dataset, split)?);
    let r = setup.vocab.num_original_relations();
    let mut f = BufWriter::new(File::create(out)?);

    let mut i = 0;
    while i < quads.len() {
        let t = quads[i].timestamp;
        let j = i + quads[i..].partition_point(|q| q.timestamp == t);
        let augmented = augment_with_inverses(&quads[i..j], r)?;
        for q in &augmented {
            let query = Query {
                subject: q.subject,
                relation: q.relation,
                timestamp: t,
            };
            let scores = fire_rules(&index, &setup.ruleset, query, config.top_h);
            let ranked = rank(&scores, config.top_h, config.decay);
            let candidates: Vec<serde_json::Value> = ranked
                .iter()
                .take(top_k)
                .map(|&(e, s)| {
                    serde_json::json!({
                        "entity": setup.vocab.entity_name(e),
                        "score": s,
                    })
                })
                .collect();
            let record = serde_json::json!({
                "version": 1,
                "subject": setup.vocab.entity_name(q.subject),
                "relation": setup.vocab.relation_name(q.relation),
                "timestamp": t,
                "candidates": candidates,
            });
            serde_json::to_writer(&mut f, &record).map_err(std::io::Error::from)?;
            f.write_all(b"\n")?;
        }
        index.extend(&augmented)?;
        i = j;
    }
    Ok(())
}

fn cmd_explain(
    config: &Config,
    rules_path: &Path,
    subject: &str,
    relation: &str,
    timestamp: u32,
    top_k: usize,
    out: Option<&Path>,
) -> Result<(), Error> {
    let setup = load_eval_setup(config, rules_path)?;
    let vocab = &setup.vocab;
    let subject_id = vocab
        .entity_id(subject)
        .ok_or_else(|| Error::UnknownName(subject.to_string()))?;
    let relation_id = vocab
        .relation_id(relation)
        .ok_or_else(|| Error::UnknownName(relation.to_string()))?;

    // Everything strictly before the query timestamp is fair game.
    let r = vocab.num_original_relations();
    let mut all = setup.dataset.train.clone();
    all.extend_from_slice(&setup.dataset.valid);
    all.extend_from_slice(&setup.dataset.test);
    all.retain(|q| q.timestamp < timestamp);
    let index = TemporalIndex::build(&augment_with_inverses(&all, r)?);

    let query = Query {
        subject: subject_id,
        relation: relation_id,
        timestamp,
    };
    let scores = fire_rules(&index, &setup.ruleset, query, config.top_h);
    let ranked = rank(&scores, config.top_h, config.decay);
    let mut sink: Box<dyn Write> = match out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(std::io::stdout()),
    };
    for &(candidate, _) in ranked.iter().take(top_k) {
        let exp = explain(
            query,
            candidate,
            &scores,
            &setup.ruleset,
            vocab,
            config.top_h,
            config.decay,
        )?;
        serde_json::to_writer_pretty(&mut sink, &exp).map_err(std::io::Error::from)?;
        sink.write_all(b"\n")?;
    }
    Ok(())
}

fn cmd_ablate(
    config: &Config,
    rules_path: &Path,
    split: &str,
    out: Option<&Path>,
    train_only: bool,
) -> Result<(), Error> {
    let setup = load_eval_setup(config, rules_path)?;
    init_threads(config);
    let quads = sorted_by_time(eval_split(&setup.dataset, split)?);
    let params = EvalParams {
        top_h: config.top_h,
        decay: config.decay,
        tie_policy: config.tie_policy,
        num_entities: setup.vocab.num_entities(),
    };

    let all: HashSet<RuleType> = [
        RuleType::Recurrent,
        RuleType::Xy,
        RuleType::C,
        RuleType::Z,
        RuleType::F,
    ]
    .into_iter()
    .collect();
    let minus = |t: RuleType| {
        let mut s = all.clone();
        s.remove(&t);
        s
    };
    let mut xy_minus = minus(RuleType::Xy);
    xy_minus.remove(&RuleType::Recurrent);
    let type_rows: Vec<(&str, HashSet<RuleType>)> = vec![
        ("rec-rules", [RuleType::Recurrent].into_iter().collect()),
        (
            "xy-rules",
            [RuleType::Recurrent, RuleType::Xy].into_iter().collect(),
        ),
        ("c-rules", [RuleType::C].into_iter().collect()),
        ("z-rules", [RuleType::Z].into_iter().collect()),
        ("f-rules", [RuleType::F].into_iter().collect()),
        ("all - z-rules", minus(RuleType::Z)),
        ("all - f-rules", minus(RuleType::F)),
        ("all - c-rules", minus(RuleType::C)),
        ("all - xy-rules", xy_minus),
        ("all", all),
    ];

    let mut rows: Vec<(String, EvalReport)> = Vec::new();
    let run = |ruleset: &RuleSet, label: &str| -> Result<EvalReport, Error> {
        let mut index = inference_index(&setup.dataset, &setup.vocab, split, train_only)?;
        let mut echo = config.echo();
        echo["ablation"] = label.into();
        let (report, _) = run_single_step(
            &mut index,
            ruleset,
            &quads,
            setup.vocab.num_original_relations(),
            &params,
            echo,
        )?;
        Ok(report)
    };
    for (label, keep) in &type_rows {
        let ruleset = setup.ruleset.filtered(keep);
        rows.push((format!("types/{label}"), run(&ruleset, label)?));
    }
    for (label, variant) in [
        ("static", ConfVariant::Static),
        ("g", ConfVariant::FrequencyOnly),
        ("f", ConfVariant::RecencyOnly),
        ("f+g", ConfVariant::Full),
    ] {
        let ruleset = apply_conf_variant(&setup.ruleset, variant, config.psmooth);
        rows.push((format!("conf/{label}"), run(&ruleset, label)?));
    }

    println!(
        "{:<20} {:>8} {:>8} {:>8} {:>8}",
        "ablation", "MRR", "H@1", "H@3", "H@10"
    );
    for (label, report) in &rows {
        let o = &report.overall;
        println!(
            "{label:<20} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            o.mrr, o.hits1, o.hits3, o.hits10
        );
    }
    if let Some(path) = out {
        let matrix: serde_json::Value = serde_json::json!({
            "version": 1,
            "rows": rows
                .iter()
                .map(|(label, r)| serde_json::json!({ "label": label, "report": r }))
                .collect::<Vec<_>>(),
        });
        let mut f = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut f, &matrix).map_err(std::io::Error::from)?;
        f.write_all(b"\n")?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    let config = build_config(&cli.common)?;
    match &cli.command {
        Command::Learn { rules, dump_curves } => cmd_learn(&config, rules, dump_curves.as_deref()),
        Command::Eval {
            rules,
            split,
            out,
            rule_types,
            conf_variant,
            train_only,
            dump_ranks,
        } => cmd_eval(
            &config,
            rules,
            split,
            out.as_deref(),
            rule_types.as_deref(),
            conf_variant,
            *train_only,
            dump_ranks.as_deref(),
        ),
        Command::Predict {
            rules,
            split,
            out,
            top_k,
            train_only,
        } => cmd_predict(&config, rules, split, out, *top_k, *train_only),
        Command::Explain {
            rules,
            subject,
            relation,
            timestamp,
            top_k,
            out,
        } => cmd_explain(
            &config,
            rules,
            subject,
            relation,
            *timestamp,
            *top_k,
            out.as_deref(),
        ),
        Command::Ablate {
            rules,
            split,
            out,
            train_only,
        } => cmd_ablate(&config, rules, split, out.as_deref(), *train_only),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version through the error path with success status
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
