//! End-to-end localization run: schema mapping and database localization
//! per database, then text translation, SQL rewriting and verification per
//! item. Failing items are flagged rather than aborting the run, and a rerun
//! skips items already verified or waived.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{extract_catalog, load_descriptions, locate_database, SchemaCatalog};
use crate::corpus::{read_corpus, read_jsonl, write_atomic, write_jsonl, BenchmarkItem, CorpusError};
use crate::localize::localize_database;
use crate::mapping::{build_mapping_with, resolve_collisions, IdentifierMapping, MappingFile, TermMemory};
use crate::nl::{localize_text_pair_with_candidate, standardize_evidence, FrozenConfig, NlError};
use crate::ports::{JudgePort, JudgeRequest, TranslatorPort};
use crate::sampling::{SamplingError, SamplingPlan};
use crate::verify::{
    validate_judge_report_with, verify_execution_files, verify_structural_integrity, EvidenceCheck, FailureClass,
    FlagRecord, Resolution, StructuralCheck, VerificationVerdict, DEFAULT_TIMEOUT,
};

pub const MAPPINGS_DIR: &str = "mappings";
pub const DATABASES_DIR: &str = "databases";
pub const ITEMS_FILE: &str = "items.jsonl";
pub const CORPUS_FILE: &str = "corpus_tr.jsonl";
pub const FLAGS_FILE: &str = "flags.jsonl";
pub const REPORT_FILE: &str = "run_report.json";
pub const AUDIT_FILE: &str = "audit.jsonl";
pub const SAMPLING_FILE: &str = "sampling_plan.json";

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub corpus: PathBuf,
    pub db_dir: PathBuf,
    pub out_dir: PathBuf,
    pub concurrency: usize,
    pub seed: u64,
    pub timeout: Duration,
    /// Translation attempts per item, the first included.
    pub retry_limit: usize,
    pub frozen: FrozenConfig,
    /// Confidence and margin of the review sample drawn after the run.
    pub sample_confidence: f64,
    pub sample_margin: f64,
}

impl PipelineConfig {
    pub fn new(corpus: impl Into<PathBuf>, db_dir: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            corpus: corpus.into(),
            db_dir: db_dir.into(),
            out_dir: out_dir.into(),
            concurrency: std::thread::available_parallelism().map_or(4, |n| n.get()),
            seed: 0,
            timeout: DEFAULT_TIMEOUT,
            retry_limit: 3,
            frozen: FrozenConfig::default(),
            sample_confidence: 0.95,
            sample_margin: 0.03,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::ConfigInvalid(m));
        if !self.corpus.is_file() {
            return bad(format!("corpus {} does not exist", self.corpus.display()));
        }
        if !self.db_dir.is_dir() {
            return bad(format!("database directory {} does not exist", self.db_dir.display()));
        }
        if self.out_dir.exists() && !self.out_dir.is_dir() {
            return bad(format!("output {} is not a directory", self.out_dir.display()));
        }
        if self.concurrency == 0 || self.retry_limit == 0 {
            return bad("concurrency and retry limit must be positive".into());
        }
        if self.timeout.is_zero() {
            return bad("timeout must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemStatus {
    Verified,
    Flagged,
    Waived,
}

/// Persisted state of one item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub item: BenchmarkItem,
    pub status: ItemStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub evidence_std: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub verdict: Option<VerificationVerdict>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub flag: Option<FlagRecord>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
}

impl ItemRecord {
    fn flagged(item: BenchmarkItem, reason: String) -> Self {
        let id = item.item_id;
        Self {
            item,
            status: ItemStatus::Flagged,
            evidence_std: None,
            verdict: None,
            flag: Some(FlagRecord::open(id, reason)),
            notes: Vec::new(),
        }
    }

    pub fn has_open_flag(&self) -> bool {
        self.flag.as_ref().is_some_and(|f| f.resolution == Resolution::Open)
    }
}

/// Everything needed to localize and verify the items of one database.
#[derive(Debug, Clone)]
pub struct DbContext {
    pub mapping: IdentifierMapping,
    pub source_db: PathBuf,
    pub target_db: PathBuf,
    pub target_catalog: SchemaCatalog,
}

pub fn mapping_path(out_dir: &Path, db_id: &str) -> PathBuf {
    out_dir.join(MAPPINGS_DIR).join(format!("{db_id}.json"))
}

pub fn target_db_path(out_dir: &Path, db_id_tr: &str) -> PathBuf {
    out_dir
        .join(DATABASES_DIR)
        .join(db_id_tr)
        .join(format!("{db_id_tr}.sqlite"))
}

pub fn read_mapping_file(path: &Path) -> Result<MappingFile, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn write_mapping_file(path: &Path, file: &MappingFile) -> Result<(), String> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    }
    let text = serde_json::to_string_pretty(file).expect("serializable mapping") + "\n";
    write_atomic(path, text.as_bytes()).map_err(|e| e.to_string())
}

/// Builds (or reloads) the collision-free mapping of one database.
/// A mapping file left by an earlier run or by review is authoritative.
pub fn prepare_mapping(
    db_id: &str,
    db_dir: &Path,
    out_dir: &Path,
    translator: &dyn TranslatorPort,
    memory: &mut TermMemory,
) -> Result<IdentifierMapping, String> {
    let path = mapping_path(out_dir, db_id);
    let source = locate_database(db_dir, db_id).ok_or_else(|| format!("database {db_id} not found"))?;
    let catalog = extract_catalog(&source).map_err(|e| e.to_string())?;
    if path.is_file() {
        let file = read_mapping_file(&path)?;
        for (k, v) in &file.term_memory.0 {
            memory.0.entry(k.clone()).or_insert_with(|| v.clone());
        }
        let mapping = file.to_mapping().map_err(|e| e.to_string())?;
        mapping.check_injective().map_err(|e| e.to_string())?;
        mapping.check_covers(&catalog).map_err(|e| e.to_string())?;
        return Ok(mapping);
    }
    let raw =
        build_mapping_with(&catalog, translator, load_descriptions(&source), memory).map_err(|e| e.to_string())?;
    let (mapping, report) = resolve_collisions(&raw).map_err(|e| e.to_string())?;
    write_mapping_file(&path, &MappingFile::new(&mapping, report, memory.clone()))?;
    Ok(mapping)
}

/// Produces the localized database for `mapping` unless it already exists,
/// and returns the context for item processing.
pub fn prepare_database(db_dir: &Path, out_dir: &Path, mapping: &IdentifierMapping) -> Result<DbContext, String> {
    let source_db = locate_database(db_dir, &mapping.db_id_src)
        .ok_or_else(|| format!("database {} not found", mapping.db_id_src))?;
    let target_db = target_db_path(out_dir, &mapping.db_id_tgt);
    if !target_db.is_file() {
        std::fs::create_dir_all(target_db.parent().expect("nested path")).map_err(|e| e.to_string())?;
        localize_database(&source_db, mapping, &target_db).map_err(|e| e.to_string())?;
    }
    let target_catalog = extract_catalog(&target_db).map_err(|e| e.to_string())?;
    Ok(DbContext {
        mapping: mapping.clone(),
        source_db,
        target_db,
        target_catalog,
    })
}

fn nl_reason(e: &NlError) -> String {
    let kind = match e {
        NlError::UnbalancedBackticks(_) => "UnbalancedBackticks",
        NlError::TranslatorUnavailable(_) => "TranslatorUnavailable",
        NlError::MalformedTranslatorReply(_) => "MalformedTranslatorReply",
        NlError::FrozenContentViolated(_) => "FrozenContentViolated",
    };
    format!("{kind}: {e}")
}

/// Runs the execution and structural checks on an item whose `_tr` fields
/// are set.
pub fn verify_item(ctx: &DbContext, item: &BenchmarkItem, timeout: Duration) -> VerificationVerdict {
    let sql_tr = item.sql_tr.as_deref().unwrap_or_default();
    let evidence_tr = item.evidence_tr.as_deref().unwrap_or_default();
    let exec = verify_execution_files(&item.sql, &ctx.source_db, sql_tr, &ctx.target_db, timeout);
    let (structural, evidence) =
        verify_structural_integrity(sql_tr, evidence_tr, &ctx.target_catalog).unwrap_or_else(|e| {
            (
                StructuralCheck {
                    pass: false,
                    missing: vec![format!("unparseable: {e}")],
                },
                EvidenceCheck {
                    pass: true,
                    unknown: vec![],
                },
            )
        });
    VerificationVerdict::new(item.item_id, exec, structural, evidence)
}

/// Flag reason for a failing verdict.
pub fn verdict_reason(v: &VerificationVerdict) -> String {
    match (&v.failure_class, &v.detail) {
        (FailureClass::SchemaDrift, _) => format!("schema-drift: missing {}", v.structural.missing.join(", ")),
        (FailureClass::EvidenceDrift, _) => format!("evidence-drift: unknown {}", v.evidence_links.unknown.join(", ")),
        (c, Some(d)) => format!("{c}: {d}"),
        (c, None) => c.to_string(),
    }
}

/// Localizes and verifies one item; never fails, flags instead.
pub fn process_item(
    ctx: &DbContext,
    source: &BenchmarkItem,
    translator: &dyn TranslatorPort,
    judge: Option<&dyn JudgePort>,
    config: &PipelineConfig,
) -> ItemRecord {
    let mut item = source.clone();
    item.db_id_tr = Some(ctx.mapping.db_id_tgt.clone());
    let std = match standardize_evidence(&item.evidence, &ctx.mapping) {
        Ok(s) => s,
        Err(e) => return ItemRecord::flagged(item, nl_reason(&e)),
    };
    let mut notes: Vec<String> = std
        .unknown
        .iter()
        .map(|u| format!("evidence span not in schema: {u}"))
        .collect();
    let outcome = localize_text_pair_with_candidate(
        &item.question,
        &std.text,
        Some(&item.sql),
        translator,
        &config.frozen,
        config.retry_limit,
    );
    let rewritten = ctx.mapping.rewrite_sql(&item.sql);
    let (q, e, frozen) = match outcome.result {
        Ok(r) => r,
        Err(err) => {
            // Keep what was produced so a reviewer can correct it in place.
            if let Some((q, e)) = outcome.rejected {
                item.question_tr = Some(q);
                item.evidence_tr = Some(e);
            }
            item.sql_tr = rewritten.ok();
            let mut r = ItemRecord::flagged(item, nl_reason(&err));
            r.evidence_std = Some(std.text);
            r.notes = notes;
            return r;
        }
    };
    notes.extend(frozen.warnings);
    item.question_tr = Some(q);
    item.evidence_tr = Some(e);
    match rewritten {
        Ok(sql) => item.sql_tr = Some(sql),
        Err(err) => {
            let mut r = ItemRecord::flagged(item, format!("SqlRewrite: {err}"));
            r.evidence_std = Some(std.text);
            r.notes = notes;
            return r;
        }
    }
    let verdict = verify_item(ctx, &item, config.timeout);
    let mut flag = None;
    if !verdict.passed() {
        let reason = match &verdict.detail {
            Some(d) if d.contains("timed out") => format!("Timeout: {d}"),
            _ => verdict_reason(&verdict),
        };
        flag = Some(FlagRecord::open(item.item_id, reason));
    } else if let Some(judge) = judge {
        let evidence_tr = item.evidence_tr.clone().unwrap_or_default();
        let request = JudgeRequest {
            question_tr: item.question_tr.clone().unwrap_or_default(),
            evidence_tr: evidence_tr.clone(),
            sql_tr: item.sql_tr.clone().unwrap_or_default(),
            sql_en: Some(item.sql.clone()),
        };
        flag = match judge.judge(&request) {
            Err(e) => Some(FlagRecord::open(item.item_id, format!("JudgeUnavailable: {e}"))),
            Ok(raw) => match validate_judge_report_with(&raw, evidence_tr.trim().is_empty()) {
                Err(e) => Some(FlagRecord::open(item.item_id, format!("JudgeReportInvalid: {e}"))),
                Ok(report) if report.overall_pass => None,
                Ok(report) => {
                    let mut f = FlagRecord::open(item.item_id, format!("judge: {}", report.suggested_fix));
                    f.judge_report = Some(report);
                    Some(f)
                }
            },
        };
    }
    ItemRecord {
        status: if flag.is_some() {
            ItemStatus::Flagged
        } else {
            ItemStatus::Verified
        },
        item,
        evidence_std: Some(std.text),
        verdict: Some(verdict),
        flag,
        notes,
    }
}

/// Summary written to `run_report.json`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub total: usize,
    pub verified: usize,
    pub flagged: usize,
    pub waived: usize,
    pub processed: usize,
    pub skipped: usize,
    pub by_failure_class: BTreeMap<String, usize>,
    pub by_reason: BTreeMap<String, usize>,
    pub databases: BTreeMap<String, String>,
}

impl RunReport {
    pub fn open_flags(&self) -> bool {
        self.flagged > 0
    }
}

fn reason_kind(reason: &str) -> String {
    reason.split(':').next().unwrap_or(reason).trim().to_string()
}

/// Loads the persisted item records of an output directory.
pub fn load_records(out_dir: &Path) -> Result<Vec<ItemRecord>, CorpusError> {
    let path = out_dir.join(ITEMS_FILE);
    if path.is_file() {
        read_jsonl(&path)
    } else {
        Ok(Vec::new())
    }
}

/// Writes the item state, the verified corpus, the flags and the report.
pub fn write_outputs(out_dir: &Path, records: &[ItemRecord], report: &RunReport) -> Result<(), CorpusError> {
    write_jsonl(&out_dir.join(ITEMS_FILE), records)?;
    let verified: Vec<&BenchmarkItem> = records
        .iter()
        .filter(|r| r.status == ItemStatus::Verified)
        .map(|r| &r.item)
        .collect();
    write_jsonl(&out_dir.join(CORPUS_FILE), &verified)?;
    let flags: Vec<&FlagRecord> = records.iter().filter_map(|r| r.flag.as_ref()).collect();
    write_jsonl(&out_dir.join(FLAGS_FILE), &flags)?;
    let text = serde_json::to_string_pretty(report).expect("serializable report") + "\n";
    write_atomic(&out_dir.join(REPORT_FILE), text.as_bytes())
}

pub fn summarize(records: &[ItemRecord], processed: usize, databases: BTreeMap<String, String>) -> RunReport {
    let mut r = RunReport {
        total: records.len(),
        processed,
        skipped: records.len() - processed,
        databases,
        ..Default::default()
    };
    for rec in records {
        match rec.status {
            ItemStatus::Verified => r.verified += 1,
            ItemStatus::Flagged => r.flagged += 1,
            ItemStatus::Waived => r.waived += 1,
        }
        let class = rec
            .verdict
            .as_ref()
            .map_or("not-verified".to_string(), |v| v.failure_class.to_string());
        *r.by_failure_class.entry(class).or_default() += 1;
        if let Some(f) = rec.flag.as_ref().filter(|f| f.resolution == Resolution::Open) {
            *r.by_reason.entry(reason_kind(&f.reason)).or_default() += 1;
        }
    }
    r
}

/// Runs all phases over the corpus.
pub fn run_pipeline(
    config: &PipelineConfig,
    translator: &dyn TranslatorPort,
    judge: Option<&dyn JudgePort>,
) -> Result<RunReport, PipelineError> {
    config.validate()?;
    std::fs::create_dir_all(&config.out_dir)?;
    let corpus = read_corpus(&config.corpus)?;
    let previous: HashMap<i64, ItemRecord> = load_records(&config.out_dir)?
        .into_iter()
        .map(|r| (r.item.item_id, r))
        .collect();
    let done = |item: &BenchmarkItem| {
        previous
            .get(&item.item_id)
            .filter(|r| r.status != ItemStatus::Flagged && r.item.sql == item.sql && r.item.question == item.question)
            .cloned()
    };

    let mut db_ids: Vec<&str> = corpus
        .iter()
        .filter(|i| done(i).is_none())
        .map(|i| i.db_id.as_str())
        .collect();
    db_ids.sort_unstable();
    db_ids.dedup();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.concurrency)
        .build()
        .map_err(|e| PipelineError::ConfigInvalid(e.to_string()))?;

    // Mappings are built in db order so term memory carries across databases.
    let mut memory = TermMemory::default();
    let mappings: Vec<(&str, Result<IdentifierMapping, String>)> = db_ids
        .iter()
        .map(|&db| {
            let m = prepare_mapping(db, &config.db_dir, &config.out_dir, translator, &mut memory);
            if let Err(e) = &m {
                log::warn!("schema mapping of {db} failed: {e}");
            }
            (db, m)
        })
        .collect();
    let contexts: HashMap<&str, Result<DbContext, String>> = pool.install(|| {
        mappings
            .into_par_iter()
            .map(|(db, m)| {
                (
                    db,
                    m.and_then(|m| prepare_database(&config.db_dir, &config.out_dir, &m)),
                )
            })
            .collect()
    });
    let databases = contexts
        .iter()
        .map(|(db, c)| {
            let status = match c {
                Ok(c) => c.mapping.db_id_tgt.clone(),
                Err(e) => format!("failed: {e}"),
            };
            (db.to_string(), status)
        })
        .collect();

    let records: Vec<(bool, ItemRecord)> = pool.install(|| {
        corpus
            .par_iter()
            .map(|item| {
                if let Some(r) = done(item) {
                    return (false, r);
                }
                let record = match &contexts[item.db_id.as_str()] {
                    Ok(ctx) => process_item(ctx, item, translator, judge, config),
                    Err(e) => ItemRecord::flagged(item.clone(), format!("SchemaPhase: {e}")),
                };
                (true, record)
            })
            .collect()
    });
    let processed = records.iter().filter(|(p, _)| *p).count();
    let records: Vec<ItemRecord> = records.into_iter().map(|(_, r)| r).collect();
    let report = summarize(&records, processed, databases);
    write_outputs(&config.out_dir, &records, &report)?;

    let verified_ids: Vec<i64> = records
        .iter()
        .filter(|r| r.status == ItemStatus::Verified)
        .map(|r| r.item.item_id)
        .collect();
    if !verified_ids.is_empty() {
        let mut ids = verified_ids;
        ids.sort_unstable();
        let plan = SamplingPlan::build(config.sample_confidence, config.sample_margin, 0.5, &ids, config.seed)?;
        let text = serde_json::to_string_pretty(&plan).expect("serializable plan") + "\n";
        write_atomic(&config.out_dir.join(SAMPLING_FILE), text.as_bytes())?;
    }
    Ok(report)
}

/// Exit status of a run: 0 when everything verified, 2 when open flags
/// remain.
pub fn exit_code(report: &RunReport) -> i32 {
    if report.open_flags() {
        2
    } else {
        0
    }
}
