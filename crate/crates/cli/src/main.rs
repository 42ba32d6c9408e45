mod backend;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};

use schemaloc::catalog::{extract_catalog, locate_database};
use schemaloc::corpus::{read_corpus, read_jsonl, write_atomic, write_jsonl, BenchmarkItem};
use schemaloc::localize::localize_database;
use schemaloc::mapping::{IdentifierMapping, TermMemory};
use schemaloc::metrics::{
    evaluate_predictions, render_metrics_table, EvalOptions, MetricsReport, Prediction, WallClockTimer,
};
use schemaloc::nl::{localize_text_pair, standardize_evidence, FrozenConfig};
use schemaloc::pipeline::{
    exit_code, mapping_path, prepare_database, prepare_mapping, read_mapping_file, run_pipeline, verify_item,
    DbContext, PipelineConfig, SAMPLING_FILE,
};
use schemaloc::review::ReviewSession;
use schemaloc::sampling::{IntervalKind, ReviewOutcome, SamplingPlan};
use schemaloc::stats::{compute_corpus_stats, Side, SimpleTokenizer, StatsOptions, StatsReport};
use schemaloc::verify::VerificationVerdict;

use backend::{JudgeArgs, TranslatorArgs};

/// Localize a text-to-SQL benchmark's schema and questions, then verify
/// every item by execution.
#[derive(Debug, Parser)]
#[command(name = "schemaloc", version)]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the schema catalog of a SQLite database as JSON.
    ExtractSchema { db: PathBuf },
    /// Build the collision-free identifier mapping of each database.
    MapSchema {
        #[command(flatten)]
        dirs: Dirs,
        /// Databases to map; all databases under --db-dir by default.
        #[arg(long = "db-id")]
        db_ids: Vec<String>,
        #[command(flatten)]
        translator: TranslatorArgs,
    },
    /// Write a copy of a database with its tables and columns renamed.
    LocalizeDb {
        db: PathBuf,
        #[arg(long)]
        mapping: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rewrite the identifiers of a query (read from stdin when omitted).
    RewriteSql {
        #[arg(long)]
        mapping: PathBuf,
        /// Map target names back to source names.
        #[arg(long)]
        invert: bool,
        sql: Option<String>,
    },
    /// Translate the questions and evidence of a corpus.
    Translate {
        #[command(flatten)]
        dirs: Dirs,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 3)]
        retries: usize,
        #[command(flatten)]
        translator: TranslatorArgs,
    },
    /// Verify localized items (with `_tr` fields) against both databases.
    Verify {
        #[command(flatten)]
        dirs: Dirs,
        #[arg(long)]
        corpus: PathBuf,
        /// Verdicts as JSONL; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = 30)]
        timeout: u64,
    },
    /// Run every phase over a corpus; resumable.
    Run(RunArgs),
    /// Size and draw a review sample, or score one from review results.
    Sample(SampleArgs),
    /// Corpus statistics of the source and localized sides.
    Stats {
        corpus: PathBuf,
        /// Lowercase with Turkish dotted/dotless i rules on the target side.
        #[arg(long)]
        turkish: bool,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, default_value = "EN")]
        source_label: String,
        #[arg(long, default_value = "TR")]
        target_label: String,
    },
    /// Score prediction files with EX, VES and EM.
    Evaluate(EvaluateArgs),
    /// Review open flags interactively.
    Review {
        #[command(flatten)]
        dirs: Dirs,
        #[arg(long, default_value_t = 30)]
        timeout: u64,
    },
}

#[derive(Debug, Clone, Args)]
struct Dirs {
    /// Directory of source databases (`<db>/<db>.sqlite` or `<db>.sqlite`).
    #[arg(long)]
    db_dir: PathBuf,
    /// Output directory holding mappings, localized databases and results.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    dirs: Dirs,
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    translator: TranslatorArgs,
    #[command(flatten)]
    judge: JudgeArgs,
    #[arg(long)]
    concurrency: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Query timeout, in seconds.
    #[arg(long, default_value_t = 30)]
    timeout: u64,
    /// Translation attempts per item.
    #[arg(long, default_value_t = 3)]
    retries: usize,
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
    #[arg(long, default_value_t = 0.03)]
    margin: f64,
}

#[derive(Debug, Args)]
struct SampleArgs {
    /// Draw from the item ids of this corpus.
    #[arg(long, conflicts_with_all = ["population", "plan"])]
    corpus: Option<PathBuf>,
    /// Only size a sample for a population of this size.
    #[arg(long, conflicts_with = "plan")]
    population: Option<u64>,
    /// Existing plan to score with --reviews.
    #[arg(long, requires = "reviews")]
    plan: Option<PathBuf>,
    /// JSONL of `{"item_id", "correct"}` review outcomes.
    #[arg(long, requires = "plan")]
    reviews: Option<PathBuf>,
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
    #[arg(long, default_value_t = 0.03)]
    margin: f64,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use the Wilson score interval instead of the normal approximation.
    #[arg(long)]
    wilson: bool,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Gold corpus.
    #[arg(long)]
    corpus: PathBuf,
    /// Directory of the databases queries run against.
    #[arg(long)]
    db_dir: PathBuf,
    /// Prediction file, as `NAME=PATH` or `PATH`; repeatable.
    #[arg(long = "predictions", required = true)]
    predictions: Vec<String>,
    /// Score against the `_tr` fields and localized database ids.
    #[arg(long)]
    target: bool,
    #[arg(long, default_value_t = 1)]
    runs: usize,
    /// Clamp each item's efficiency ratio to [0, 2].
    #[arg(long)]
    clamp: bool,
    #[arg(long, default_value_t = 30)]
    timeout: u64,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<u8> {
    match command {
        Command::ExtractSchema { db } => {
            let catalog = extract_catalog(&db)?;
            println!("{}", serde_json::to_string_pretty(&catalog)?);
            Ok(0)
        }
        Command::MapSchema {
            dirs,
            db_ids,
            translator,
        } => map_schema(&dirs, db_ids, &*translator.build()?),
        Command::LocalizeDb { db, mapping, out } => {
            let mapping = load_mapping(&mapping)?;
            let artifact = localize_database(&db, &mapping, &out)?;
            println!("{}", serde_json::to_string_pretty(&artifact)?);
            Ok(0)
        }
        Command::RewriteSql { mapping, invert, sql } => {
            let mut mapping = load_mapping(&mapping)?;
            if invert {
                mapping = mapping.invert()?;
            }
            let sql = match sql {
                Some(s) => s,
                None => {
                    let mut s = String::new();
                    std::io::stdin().read_to_string(&mut s)?;
                    s
                }
            };
            println!("{}", mapping.rewrite_sql(sql.trim())?);
            Ok(0)
        }
        Command::Translate {
            dirs,
            corpus,
            output,
            retries,
            translator,
        } => translate(&dirs, &corpus, &output, retries, &*translator.build()?),
        Command::Verify {
            dirs,
            corpus,
            output,
            timeout,
        } => verify(&dirs, &corpus, output.as_deref(), Duration::from_secs(timeout)),
        Command::Run(args) => run(args),
        Command::Sample(args) => sample(args),
        Command::Stats {
            corpus,
            turkish,
            output,
            source_label,
            target_label,
        } => {
            let items = read_corpus(&corpus)?;
            let tok = SimpleTokenizer;
            let source = compute_corpus_stats(&items, Side::Source, &tok, StatsOptions::default())?;
            let target = compute_corpus_stats(&items, Side::Target, &tok, StatsOptions { turkish_case: turkish })?;
            let report = StatsReport::new(source, target)?;
            if let Some(path) = output {
                write_atomic(&path, (serde_json::to_string_pretty(&report)? + "\n").as_bytes())?;
            }
            print!("{}", report.render(&source_label, &target_label));
            Ok(0)
        }
        Command::Evaluate(args) => evaluate(args),
        Command::Review { dirs, timeout } => {
            let mut session = ReviewSession::open(&dirs.out_dir, &dirs.db_dir, Duration::from_secs(timeout))?;
            let stdin = std::io::stdin();
            let summary = session.run(stdin.lock(), std::io::stdout())?;
            println!(
                "corrected {}, waived {}, skipped {}, mapping edits {}, open {}",
                summary.corrected, summary.waived, summary.skipped, summary.mapping_edits, summary.open_remaining
            );
            Ok(if summary.open_remaining > 0 { 2 } else { 0 })
        }
    }
}

fn load_mapping(path: &Path) -> anyhow::Result<IdentifierMapping> {
    let file = read_mapping_file(path).map_err(|e| anyhow!(e))?;
    let mapping = file.to_mapping()?;
    mapping.check_injective()?;
    Ok(mapping)
}

fn require_dir(path: &Path, what: &str) -> anyhow::Result<()> {
    if !path.is_dir() {
        bail!("{what} {} is not a directory", path.display());
    }
    Ok(())
}

fn map_schema(
    dirs: &Dirs,
    mut db_ids: Vec<String>,
    translator: &dyn schemaloc::ports::TranslatorPort,
) -> anyhow::Result<u8> {
    require_dir(&dirs.db_dir, "database directory")?;
    if db_ids.is_empty() {
        db_ids = schemaloc::catalog::discover_databases(&dirs.db_dir)?
            .into_iter()
            .map(|(id, _)| id)
            .collect();
    }
    db_ids.sort();
    db_ids.dedup();
    let mut memory = TermMemory::default();
    for db in &db_ids {
        let mapping = prepare_mapping(db, &dirs.db_dir, &dirs.out_dir, translator, &mut memory)
            .map_err(|e| anyhow!("{db}: {e}"))?;
        println!(
            "{db} -> {} ({})",
            mapping.db_id_tgt,
            mapping_path(&dirs.out_dir, db).display()
        );
    }
    Ok(0)
}

/// Mappings of every database used by `items`, built when missing.
fn mappings_for(
    dirs: &Dirs,
    items: &[BenchmarkItem],
    translator: &dyn schemaloc::ports::TranslatorPort,
) -> anyhow::Result<HashMap<String, IdentifierMapping>> {
    let db_ids: BTreeSet<&str> = items.iter().map(|i| i.db_id.as_str()).collect();
    let mut memory = TermMemory::default();
    let mut out = HashMap::new();
    for db in db_ids {
        let m = prepare_mapping(db, &dirs.db_dir, &dirs.out_dir, translator, &mut memory)
            .map_err(|e| anyhow!("{db}: {e}"))?;
        out.insert(db.to_string(), m);
    }
    Ok(out)
}

fn translate(
    dirs: &Dirs,
    corpus: &Path,
    output: &Path,
    retries: usize,
    translator: &dyn schemaloc::ports::TranslatorPort,
) -> anyhow::Result<u8> {
    require_dir(&dirs.db_dir, "database directory")?;
    let items = read_corpus(corpus)?;
    let mappings = mappings_for(dirs, &items, translator)?;
    let frozen = FrozenConfig::default();
    let mut failed = 0;
    let mut rows = Vec::with_capacity(items.len());
    for mut item in items {
        let mapping = &mappings[&item.db_id];
        item.db_id_tr = Some(mapping.db_id_tgt.clone());
        let result = standardize_evidence(&item.evidence, mapping).and_then(|std| {
            localize_text_pair(&item.question, &std.text, Some(&item.sql), translator, &frozen, retries)
        });
        match result {
            Ok((q, e, _)) => {
                item.question_tr = Some(q);
                item.evidence_tr = Some(e);
            }
            Err(e) => {
                log::warn!("item {}: {e}", item.item_id);
                failed += 1;
            }
        }
        if let Ok(sql) = mapping.rewrite_sql(&item.sql) {
            item.sql_tr = Some(sql);
        }
        rows.push(item);
    }
    write_jsonl(output, &rows)?;
    eprintln!("translated {} of {} items", rows.len() - failed, rows.len());
    Ok(if failed > 0 { 2 } else { 0 })
}

fn verify(dirs: &Dirs, corpus: &Path, output: Option<&Path>, timeout: Duration) -> anyhow::Result<u8> {
    let items = read_corpus(corpus)?;
    let mut contexts: HashMap<String, DbContext> = HashMap::new();
    for db in items.iter().map(|i| i.db_id.as_str()).collect::<BTreeSet<_>>() {
        let mapping = load_mapping(&mapping_path(&dirs.out_dir, db))?;
        let ctx = prepare_database(&dirs.db_dir, &dirs.out_dir, &mapping).map_err(|e| anyhow!("{db}: {e}"))?;
        contexts.insert(db.to_string(), ctx);
    }
    let verdicts: Vec<VerificationVerdict> = items
        .iter()
        .map(|i| verify_item(&contexts[&i.db_id], i, timeout))
        .collect();
    let failing = verdicts.iter().filter(|v| !v.passed()).count();
    match output {
        Some(path) => write_jsonl(path, &verdicts)?,
        None => {
            for v in &verdicts {
                println!("{}", serde_json::to_string(v)?);
            }
        }
    }
    eprintln!("{} passed, {failing} failed", verdicts.len() - failing);
    Ok(if failing > 0 { 2 } else { 0 })
}

fn run(args: RunArgs) -> anyhow::Result<u8> {
    let translator = args.translator.build()?;
    let judge = args.judge.build(args.translator.request_timeout)?;
    let mut config = PipelineConfig::new(&args.corpus, &args.dirs.db_dir, &args.dirs.out_dir);
    if let Some(c) = args.concurrency {
        config.concurrency = c;
    }
    config.seed = args.seed;
    config.timeout = Duration::from_secs(args.timeout);
    config.retry_limit = args.retries;
    config.sample_confidence = args.confidence;
    config.sample_margin = args.margin;
    let report = run_pipeline(&config, &*translator, judge.as_deref())?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(exit_code(&report) as u8)
}

fn sample(args: SampleArgs) -> anyhow::Result<u8> {
    let kind = if args.wilson {
        IntervalKind::Wilson
    } else {
        IntervalKind::Wald
    };
    let plan = if let (Some(plan_path), Some(reviews)) = (&args.plan, &args.reviews) {
        let text = std::fs::read_to_string(plan_path).with_context(|| plan_path.display().to_string())?;
        let mut plan: SamplingPlan = serde_json::from_str(&text).with_context(|| plan_path.display().to_string())?;
        let outcomes: Vec<ReviewOutcome> = read_jsonl(reviews)?;
        let est = plan.record_review(&outcomes, kind)?;
        eprintln!(
            "accuracy {:.2}% ({} / {}), {:.0}% interval [{:.2}%, {:.2}%]",
            est.point * 100.0,
            est.correct,
            est.n,
            plan.confidence * 100.0,
            est.lower * 100.0,
            est.upper * 100.0
        );
        plan
    } else if let Some(corpus) = &args.corpus {
        let mut ids: Vec<i64> = read_corpus(corpus)?.iter().map(|i| i.item_id).collect();
        ids.sort_unstable();
        SamplingPlan::build(args.confidence, args.margin, args.p, &ids, args.seed)?
    } else if let Some(population) = args.population {
        let n0 = schemaloc::sampling::required_sample_size(args.confidence, args.margin, args.p)?;
        let n = schemaloc::sampling::apply_fpc(n0, population);
        println!("n0 = {n0}");
        println!("n = {n} (population {population})");
        return Ok(0);
    } else {
        bail!("pass --corpus, --population, or --plan with --reviews");
    };
    let text = serde_json::to_string_pretty(&plan)? + "\n";
    let path = args.output.unwrap_or_else(|| PathBuf::from(SAMPLING_FILE));
    write_atomic(&path, text.as_bytes())?;
    println!(
        "n0 = {}, n = {} of {}; wrote {}",
        plan.n0,
        plan.n,
        plan.population,
        path.display()
    );
    Ok(0)
}

fn evaluate(args: EvaluateArgs) -> anyhow::Result<u8> {
    let corpus = read_corpus(&args.corpus)?;
    require_dir(&args.db_dir, "database directory")?;
    let timeout = Duration::from_secs(args.timeout);
    let timer = WallClockTimer {
        timeout,
        ..WallClockTimer::default()
    };
    let opts = EvalOptions {
        runs: args.runs,
        clamp: args.clamp,
        timeout,
        timer: &timer,
        target_side: args.target,
    };
    let db_dir = args.db_dir.clone();
    let locate = move |db: &str| locate_database(&db_dir, db);
    let mut reports: Vec<(String, MetricsReport)> = Vec::new();
    for spec in &args.predictions {
        let (name, path) = match spec.split_once('=') {
            Some((n, p)) => (n.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(spec);
                let name = p.file_stem().and_then(|s| s.to_str()).unwrap_or(spec).to_string();
                (name, p)
            }
        };
        let preds: Vec<Prediction> = read_jsonl(&path)?;
        let report = evaluate_predictions(&preds, &corpus, &locate, &opts).with_context(|| name.clone())?;
        reports.push((name, report));
    }
    if let Some(path) = &args.output {
        let map: BTreeMap<&str, &MetricsReport> = reports.iter().map(|(n, r)| (n.as_str(), r)).collect();
        write_atomic(path, (serde_json::to_string_pretty(&map)? + "\n").as_bytes())?;
    }
    let rows: Vec<(&str, &MetricsReport)> = reports.iter().map(|(n, r)| (n.as_str(), r)).collect();
    print!("{}", render_metrics_table(&rows));
    Ok(0)
}
