//! Terminal review of flagged items: edit a localized field, edit a mapping
//! entry, or waive. Every action is appended to the audit log.

use std::collections::HashMap;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::corpus::append_jsonl;
use crate::mapping::{is_valid_target, IdentifierMapping};
use crate::nl::{standardize_evidence, verify_frozen_content, FrozenConfig};
use crate::pipeline::{
    load_records, mapping_path, prepare_database, read_mapping_file, summarize, verdict_reason, verify_item,
    write_mapping_file, write_outputs, DbContext, ItemRecord, ItemStatus, AUDIT_FILE,
};
use crate::verify::{FlagRecord, Resolution, VerificationVerdict};

pub const EDITABLE_FIELDS: [&str; 3] = ["question_tr", "evidence_tr", "sql_tr"];

#[derive(Debug, thiserror::Error)]
pub enum ReviewError {
    #[error("{0}")]
    State(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Serialize)]
struct AuditEntry<'a> {
    time: u64,
    action: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    item_id: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    db_id: Option<&'a str>,
    detail: String,
}

/// Outcome counts of one review session.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReviewSummary {
    pub corrected: usize,
    pub waived: usize,
    pub skipped: usize,
    pub mapping_edits: usize,
    pub open_remaining: usize,
}

pub struct ReviewSession {
    out_dir: PathBuf,
    db_dir: PathBuf,
    timeout: Duration,
    frozen: FrozenConfig,
    pub records: Vec<ItemRecord>,
    contexts: HashMap<String, DbContext>,
}

impl ReviewSession {
    pub fn open(out_dir: &Path, db_dir: &Path, timeout: Duration) -> Result<Self, ReviewError> {
        let records = load_records(out_dir).map_err(|e| ReviewError::State(e.to_string()))?;
        if records.is_empty() {
            return Err(ReviewError::State(format!("no run state in {}", out_dir.display())));
        }
        Ok(Self {
            out_dir: out_dir.to_path_buf(),
            db_dir: db_dir.to_path_buf(),
            timeout,
            frozen: FrozenConfig::default(),
            records,
            contexts: HashMap::new(),
        })
    }

    fn context(&mut self, db_id: &str) -> Result<&DbContext, String> {
        if !self.contexts.contains_key(db_id) {
            let mapping = read_mapping_file(&mapping_path(&self.out_dir, db_id))?
                .to_mapping()
                .map_err(|e| e.to_string())?;
            let ctx = prepare_database(&self.db_dir, &self.out_dir, &mapping)?;
            self.contexts.insert(db_id.to_string(), ctx);
        }
        Ok(&self.contexts[db_id])
    }

    fn audit(
        &self,
        action: &str,
        item_id: Option<i64>,
        db_id: Option<&str>,
        detail: String,
    ) -> Result<(), ReviewError> {
        let entry = AuditEntry {
            time: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            action,
            item_id,
            db_id,
            detail,
        };
        append_jsonl(&self.out_dir.join(AUDIT_FILE), &entry).map_err(|e| ReviewError::State(e.to_string()))
    }

    fn save(&self) -> Result<(), ReviewError> {
        let mut databases = std::collections::BTreeMap::new();
        for r in &self.records {
            if let Some(t) = &r.item.db_id_tr {
                databases.insert(r.item.db_id.clone(), t.clone());
            }
        }
        let report = summarize(&self.records, 0, databases);
        write_outputs(&self.out_dir, &self.records, &report).map_err(|e| ReviewError::State(e.to_string()))
    }

    fn open_flags(&self) -> Vec<usize> {
        (0..self.records.len())
            .filter(|&i| self.records[i].has_open_flag())
            .collect()
    }

    /// Re-runs the checks on record `idx`: execution and structure, plus
    /// the frozen-content check of the translated texts.
    fn reverify(&mut self, idx: usize) -> Result<(VerificationVerdict, Option<String>), String> {
        let db_id = self.records[idx].item.db_id.clone();
        let timeout = self.timeout;
        let ctx = self.context(&db_id)?.clone();
        let rec = &self.records[idx];
        let verdict = verify_item(&ctx, &rec.item, timeout);
        let evidence_std = rec.evidence_std.clone().unwrap_or_else(|| rec.item.evidence.clone());
        let frozen = verify_frozen_content(
            &rec.item.question,
            &evidence_std,
            rec.item.question_tr.as_deref().unwrap_or_default(),
            rec.item.evidence_tr.as_deref().unwrap_or_default(),
            &self.frozen,
        );
        let problem = if !verdict.passed() {
            Some(verdict_reason(&verdict))
        } else if !frozen.passed() {
            Some(format!("FrozenContentViolated: {}", frozen.describe()))
        } else {
            None
        };
        Ok((verdict, problem))
    }

    /// Sets a localized field of an item and re-verifies it. Returns whether
    /// the flag was closed.
    pub fn edit_field(&mut self, item_id: i64, field: &str, value: &str) -> Result<bool, ReviewError> {
        let idx = self.index_of(item_id)?;
        let old = {
            let item = &mut self.records[idx].item;
            let slot = match field {
                "question_tr" => &mut item.question_tr,
                "evidence_tr" => &mut item.evidence_tr,
                "sql_tr" => &mut item.sql_tr,
                other => return Err(ReviewError::State(format!("field {other} is not editable"))),
            };
            slot.replace(value.to_string())
        };
        let (verdict, problem) = self.reverify(idx).map_err(ReviewError::State)?;
        let rec = &mut self.records[idx];
        let flag = rec.flag.get_or_insert_with(|| FlagRecord::open(item_id, "edited"));
        let mut fields = flag.corrected_fields.clone();
        if !fields.iter().any(|f| f == field) {
            fields.push(field.to_string());
        }
        let closed = problem.is_none()
            && flag.resolution == Resolution::Open
            && flag.mark_corrected(fields.clone(), &verdict).is_ok();
        if closed {
            rec.status = ItemStatus::Verified;
        } else {
            flag.corrected_fields = fields;
        }
        rec.verdict = Some(verdict);
        let detail = format!(
            "{field}: {:?} -> {value:?}; {}",
            old.unwrap_or_default(),
            problem.as_deref().unwrap_or("verified")
        );
        self.audit("edit", Some(item_id), None, detail)?;
        self.save()?;
        Ok(closed)
    }

    pub fn waive(&mut self, item_id: i64) -> Result<(), ReviewError> {
        let idx = self.index_of(item_id)?;
        let rec = &mut self.records[idx];
        if let Some(flag) = rec.flag.as_mut() {
            flag.waive().map_err(|e| ReviewError::State(e.to_string()))?;
        }
        rec.status = ItemStatus::Waived;
        self.audit("waive", Some(item_id), None, String::new())?;
        self.save()
    }

    /// Changes the target of one mapping entry (`table` or `table.column`)
    /// of `db_id`, rebuilds the localized database and re-verifies every
    /// item of that database. A column edit applies to every table sharing
    /// the column name. Returns the ids whose status changed.
    pub fn edit_mapping(&mut self, db_id: &str, key: &str, target: &str) -> Result<Vec<i64>, ReviewError> {
        let reject = |s: &Self, m: String| -> Result<Vec<i64>, ReviewError> {
            s.audit("mapping-rejected", None, Some(db_id), format!("{key} -> {target}: {m}"))?;
            Err(ReviewError::State(m))
        };
        if !is_valid_target(target) {
            return reject(self, format!("{target:?} is not a valid identifier"));
        }
        let path = mapping_path(&self.out_dir, db_id);
        let mut file = read_mapping_file(&path).map_err(ReviewError::State)?;
        let old_mapping = file.to_mapping().map_err(|e| ReviewError::State(e.to_string()))?;
        let keys: Vec<String> = match key.split_once('.') {
            None => file
                .translations
                .keys()
                .filter(|k| k.eq_ignore_ascii_case(key))
                .cloned()
                .collect(),
            Some((_, col)) => file
                .translations
                .keys()
                .filter(|k| k.split_once('.').is_some_and(|(_, c)| c.eq_ignore_ascii_case(col)))
                .cloned()
                .collect(),
        };
        if keys.is_empty() {
            return reject(self, format!("no mapping entry {key}"));
        }
        for k in &keys {
            file.translations.insert(k.clone(), target.to_string());
        }
        let new_mapping = match file.to_mapping().and_then(|m| m.check_injective().map(|_| m)) {
            Ok(m) => m,
            Err(e) => return reject(self, e.to_string()),
        };
        write_mapping_file(&path, &file).map_err(ReviewError::State)?;
        self.audit(
            "mapping-edit",
            None,
            Some(db_id),
            format!("{} -> {target}", keys.join(", ")),
        )?;

        let target_db = crate::pipeline::target_db_path(&self.out_dir, &new_mapping.db_id_tgt);
        if target_db.exists() {
            std::fs::remove_file(&target_db)?;
        }
        self.contexts.remove(db_id);
        self.context(db_id).map_err(ReviewError::State)?;

        let mut changed = Vec::new();
        for idx in 0..self.records.len() {
            if self.records[idx].item.db_id != db_id || self.records[idx].status == ItemStatus::Waived {
                continue;
            }
            let before = self.records[idx].status;
            self.remap_item(idx, &old_mapping, &new_mapping);
            let (verdict, problem) = self.reverify(idx).map_err(ReviewError::State)?;
            let rec = &mut self.records[idx];
            let id = rec.item.item_id;
            match problem {
                None => {
                    if let Some(flag) = rec.flag.as_mut().filter(|f| f.resolution == Resolution::Open) {
                        let _ = flag.mark_corrected(vec!["mapping".into()], &verdict);
                    }
                    rec.status = ItemStatus::Verified;
                }
                Some(reason) => {
                    if !rec.has_open_flag() {
                        rec.flag = Some(FlagRecord::open(id, format!("after mapping edit: {reason}")));
                    }
                    rec.status = ItemStatus::Flagged;
                }
            }
            rec.verdict = Some(verdict);
            if rec.status != before {
                changed.push(id);
            }
            let status = format!("{:?}", rec.status).to_lowercase();
            self.audit("reverify", Some(id), Some(db_id), status)?;
        }
        self.save()?;
        Ok(changed)
    }

    /// Moves the localized SQL and evidence of record `idx` from the old
    /// mapping's names to the new ones.
    fn remap_item(&mut self, idx: usize, old: &IdentifierMapping, new: &IdentifierMapping) {
        let rec = &mut self.records[idx];
        let hand_edited = rec
            .flag
            .as_ref()
            .is_some_and(|f| f.corrected_fields.iter().any(|c| c == "sql_tr"));
        if !hand_edited {
            if let Ok(sql) = new.rewrite_sql(&rec.item.sql) {
                rec.item.sql_tr = Some(sql);
            }
        }
        if let (Some(ev), Ok(inverse)) = (rec.item.evidence_tr.as_deref(), old.invert()) {
            if let Ok(back) = standardize_evidence(ev, &inverse) {
                if let Ok(fwd) = standardize_evidence(&back.text, new) {
                    rec.item.evidence_tr = Some(fwd.text);
                }
            }
        }
        if let Some(std) = rec
            .evidence_std
            .as_deref()
            .and_then(|_| standardize_evidence(&rec.item.evidence, new).ok())
        {
            rec.evidence_std = Some(std.text);
        }
    }

    fn index_of(&self, item_id: i64) -> Result<usize, ReviewError> {
        self.records
            .iter()
            .position(|r| r.item.item_id == item_id)
            .ok_or_else(|| ReviewError::State(format!("unknown item {item_id}")))
    }

    fn show<W: Write>(&self, out: &mut W, idx: usize) -> io::Result<()> {
        let rec = &self.records[idx];
        let it = &rec.item;
        writeln!(out, "\n== item {} ({}) ==", it.item_id, it.db_id)?;
        if let Some(f) = &rec.flag {
            writeln!(out, "reason: {}", f.reason)?;
            if let Some(j) = &f.judge_report {
                writeln!(out, "judge: severity {:?}, fix: {}", j.severity, j.suggested_fix)?;
            }
        }
        if let Some(v) = &rec.verdict {
            writeln!(
                out,
                "verdict: exec {:?}, structural {}, evidence {}, class {}",
                v.exec_equal, v.structural.pass, v.evidence_links.pass, v.failure_class
            )?;
        }
        writeln!(out, "question:    {}", it.question)?;
        writeln!(out, "evidence:    {}", it.evidence)?;
        writeln!(out, "SQL:         {}", it.sql)?;
        writeln!(out, "question_tr: {}", it.question_tr.as_deref().unwrap_or("-"))?;
        writeln!(out, "evidence_tr: {}", it.evidence_tr.as_deref().unwrap_or("-"))?;
        writeln!(out, "sql_tr:      {}", it.sql_tr.as_deref().unwrap_or("-"))
    }

    /// Interactive loop over open flags. End of input acts as quit.
    pub fn run<R: BufRead, W: Write>(&mut self, mut input: R, mut out: W) -> Result<ReviewSummary, ReviewError> {
        let mut summary = ReviewSummary::default();
        let mut line = String::new();
        let mut ask = |out: &mut W, prompt: &str, line: &mut String| -> io::Result<Option<String>> {
            write!(out, "{prompt}")?;
            out.flush()?;
            line.clear();
            if input.read_line(line)? == 0 {
                return Ok(None);
            }
            Ok(Some(line.trim_end_matches(['\r', '\n']).to_string()))
        };
        let queue = self.open_flags();
        'items: for idx in queue {
            let id = self.records[idx].item.item_id;
            while self.records[idx].has_open_flag() {
                self.show(&mut out, idx)?;
                let Some(action) = ask(
                    &mut out,
                    "[e]dit field, [m]apping edit, [w]aive, [s]kip, [q]uit > ",
                    &mut line,
                )?
                else {
                    break 'items;
                };
                match action.trim() {
                    "e" => {
                        let Some(field) = ask(&mut out, "field (question_tr, evidence_tr, sql_tr) > ", &mut line)?
                        else {
                            break 'items;
                        };
                        let Some(value) = ask(&mut out, "new value > ", &mut line)? else {
                            break 'items;
                        };
                        match self.edit_field(id, field.trim(), &value) {
                            Ok(true) => {
                                summary.corrected += 1;
                                writeln!(out, "verified; flag closed")?;
                            }
                            Ok(false) => writeln!(out, "still failing")?,
                            Err(e) => writeln!(out, "error: {e}")?,
                        }
                    }
                    "m" => {
                        let Some(key) = ask(&mut out, "entry (table or table.column) > ", &mut line)? else {
                            break 'items;
                        };
                        let Some(target) = ask(&mut out, "new target > ", &mut line)? else {
                            break 'items;
                        };
                        let db_id = self.records[idx].item.db_id.clone();
                        match self.edit_mapping(&db_id, key.trim(), target.trim()) {
                            Ok(changed) => {
                                summary.mapping_edits += 1;
                                writeln!(
                                    out,
                                    "database {db_id} re-verified; {} items changed status",
                                    changed.len()
                                )?;
                            }
                            Err(e) => writeln!(out, "error: {e}")?,
                        }
                    }
                    "w" => {
                        self.waive(id)?;
                        summary.waived += 1;
                    }
                    "s" => {
                        self.audit("skip", Some(id), None, String::new())?;
                        summary.skipped += 1;
                        continue 'items;
                    }
                    "q" => break 'items,
                    other => writeln!(out, "unknown action {other:?}")?,
                }
            }
        }
        self.audit("quit", None, None, String::new())?;
        self.save()?;
        summary.open_remaining = self.open_flags().len();
        Ok(summary)
    }
}
