//! Execution-equivalence and structural checks, judge report validation and
//! the flag queue.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::catalog::SchemaCatalog;
use crate::nl::backtick_spans;
use crate::sql::{collect_identifiers, parse_sql, IdentKind, SqlError};

/// Relative tolerance for comparing floating-point cells.
pub const FLOAT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum Cell {
    Null,
    Integer(i64),
    Real(f64),
    Text(String),
    Blob(Vec<u8>),
}

impl Cell {
    fn rank(&self) -> u8 {
        match self {
            Cell::Null => 0,
            Cell::Integer(_) | Cell::Real(_) => 1,
            Cell::Text(_) => 2,
            Cell::Blob(_) => 3,
        }
    }

    fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Integer(i) => Some(*i as f64),
            Cell::Real(r) => Some(*r),
            _ => None,
        }
    }
}

fn floats_close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= FLOAT_TOLERANCE * a.abs().max(b.abs())
}

/// NULL equals NULL; integers compare exactly; a real compares to a number
/// with relative tolerance; text and blobs compare byte for byte.
pub fn cells_equal(a: &Cell, b: &Cell) -> bool {
    match (a, b) {
        (Cell::Null, Cell::Null) => true,
        (Cell::Integer(x), Cell::Integer(y)) => x == y,
        (Cell::Text(x), Cell::Text(y)) => x == y,
        (Cell::Blob(x), Cell::Blob(y)) => x == y,
        _ => match (a.as_f64(), b.as_f64()) {
            (Some(x), Some(y)) => floats_close(x, y),
            _ => false,
        },
    }
}

/// Total order used to put unordered results in a canonical order.
fn cell_order(a: &Cell, b: &Cell) -> Ordering {
    a.rank().cmp(&b.rank()).then_with(|| match (a, b) {
        (Cell::Integer(x), Cell::Integer(y)) => x.cmp(y),
        (Cell::Text(x), Cell::Text(y)) => x.cmp(y),
        (Cell::Blob(x), Cell::Blob(y)) => x.cmp(y),
        _ => match (a.as_f64(), b.as_f64()) {
            (Some(x), Some(y)) => x.total_cmp(&y),
            _ => Ordering::Equal,
        },
    })
}

fn row_order(a: &[Cell], b: &[Cell]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| cell_order(x, y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultSet {
    pub columns: usize,
    pub rows: Vec<Vec<Cell>>,
}

/// Compares two results: as sequences when `ordered`, else as multisets.
/// Column names are not compared.
pub fn results_equal(a: &ResultSet, b: &ResultSet, ordered: bool) -> bool {
    if a.columns != b.columns || a.rows.len() != b.rows.len() {
        return false;
    }
    let rows_equal =
        |x: &Vec<Cell>, y: &Vec<Cell>| x.len() == y.len() && x.iter().zip(y).all(|(p, q)| cells_equal(p, q));
    if ordered {
        return a.rows.iter().zip(&b.rows).all(|(x, y)| rows_equal(x, y));
    }
    let mut ra: Vec<&Vec<Cell>> = a.rows.iter().collect();
    let mut rb: Vec<&Vec<Cell>> = b.rows.iter().collect();
    ra.sort_by(|x, y| row_order(x, y));
    rb.sort_by(|x, y| row_order(x, y));
    ra.iter().zip(&rb).all(|(x, y)| rows_equal(x, y))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Source,
    Target,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
pub enum ExecError {
    #[error("{side:?} query failed: {message}")]
    Execution { side: Side, message: String },
    #[error("{0:?} query timed out")]
    Timeout(Side),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureClass {
    None,
    ExecMismatch,
    ExecError,
    SchemaDrift,
    EvidenceDrift,
}

impl std::fmt::Display for FailureClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FailureClass::None => "none",
            FailureClass::ExecMismatch => "exec-mismatch",
            FailureClass::ExecError => "exec-error",
            FailureClass::SchemaDrift => "schema-drift",
            FailureClass::EvidenceDrift => "evidence-drift",
        })
    }
}

/// Outcome of running both queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionCheck {
    pub status: CheckStatus,
    pub ordered_compare: bool,
    pub src_ms: f64,
    pub tgt_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ExecError>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuralCheck {
    pub pass: bool,
    /// Tables and columns of the query that the schema lacks.
    pub missing: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceCheck {
    pub pass: bool,
    /// Backtick spans that name nothing in the schema.
    pub unknown: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationVerdict {
    pub item_id: i64,
    pub exec_equal: CheckStatus,
    pub ordered_compare: bool,
    pub structural: StructuralCheck,
    pub evidence_links: EvidenceCheck,
    pub failure_class: FailureClass,
    pub timings_ms: (f64, f64),
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl VerificationVerdict {
    pub fn new(item_id: i64, exec: ExecutionCheck, structural: StructuralCheck, evidence_links: EvidenceCheck) -> Self {
        let failure_class = match exec.status {
            CheckStatus::Error => FailureClass::ExecError,
            CheckStatus::Fail => FailureClass::ExecMismatch,
            CheckStatus::Pass if !structural.pass => FailureClass::SchemaDrift,
            CheckStatus::Pass if !evidence_links.pass => FailureClass::EvidenceDrift,
            CheckStatus::Pass => FailureClass::None,
        };
        Self {
            item_id,
            exec_equal: exec.status,
            ordered_compare: exec.ordered_compare,
            structural,
            evidence_links,
            failure_class,
            timings_ms: (exec.src_ms, exec.tgt_ms),
            detail: exec.error.map(|e| e.to_string()),
        }
    }

    pub fn passed(&self) -> bool {
        self.failure_class == FailureClass::None
    }
}

/// Checks that every table and column `sql_tgt` references exists in
/// `catalog`, and that every backtick span of `evidence_tgt` names a table,
/// a column or a `table.column` of it.
pub fn verify_structural_integrity(
    sql_tgt: &str,
    evidence_tgt: &str,
    catalog: &SchemaCatalog,
) -> Result<(StructuralCheck, EvidenceCheck), SqlError> {
    let query = parse_sql(sql_tgt)?;
    let mut missing = Vec::new();
    for occ in collect_identifiers(&query) {
        let ok = match occ.kind {
            IdentKind::Table => catalog.table(&occ.name).is_some(),
            IdentKind::Column => match occ.table.as_deref().and_then(|t| catalog.table(t)) {
                Some(t) => t.column(&occ.name).is_some(),
                None => catalog.has_any_column(&occ.name) || occ.double_quoted,
            },
        };
        if !ok && !missing.contains(&occ.name) {
            missing.push(occ.name);
        }
    }
    let mut unknown = Vec::new();
    match backtick_spans(evidence_tgt) {
        Ok(spans) => {
            for span in spans {
                let known = catalog.table(span).is_some()
                    || catalog.has_any_column(span)
                    || span.split_once('.').is_some_and(|(t, c)| catalog.has_column(t, c));
                if !known && !unknown.iter().any(|u| u == span) {
                    unknown.push(span.to_string());
                }
            }
        }
        Err(_) => unknown.push(evidence_tgt.to_string()),
    }
    Ok((
        StructuralCheck {
            pass: missing.is_empty(),
            missing,
        },
        EvidenceCheck {
            pass: unknown.is_empty(),
            unknown,
        },
    ))
}

#[cfg(feature = "sqlite")]
pub use self::exec::*;

#[cfg(feature = "sqlite")]
mod exec {
    use super::*;
    use std::path::Path;
    use std::sync::mpsc;
    use std::time::{Duration, Instant};

    use rusqlite::types::ValueRef;
    use rusqlite::Connection;

    use crate::catalog::open_read_only;
    use crate::sql::has_top_level_order_by;

    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

    /// Opens a database read-only for query execution.
    pub fn open_database(path: &Path) -> Result<Connection, String> {
        open_read_only(path).map_err(|e| e.to_string())
    }

    /// Runs `sql` and collects every row; interrupts the query after
    /// `timeout`. Returns the rows and the elapsed wall time.
    pub fn run_query(
        conn: &Connection,
        sql: &str,
        timeout: Duration,
        side: Side,
    ) -> Result<(ResultSet, Duration), ExecError> {
        let handle = conn.get_interrupt_handle();
        let (done_tx, done_rx) = mpsc::channel::<()>();
        let watchdog = std::thread::spawn(move || {
            if let Err(mpsc::RecvTimeoutError::Timeout) = done_rx.recv_timeout(timeout) {
                handle.interrupt();
                true
            } else {
                false
            }
        });
        let start = Instant::now();
        let result = collect_rows(conn, sql);
        let elapsed = start.elapsed();
        let _ = done_tx.send(());
        let timed_out = watchdog.join().unwrap_or(false);
        match result {
            Ok(rs) => Ok((rs, elapsed)),
            Err(_) if timed_out => Err(ExecError::Timeout(side)),
            Err(e) => Err(ExecError::Execution {
                side,
                message: e.to_string(),
            }),
        }
    }

    fn collect_rows(conn: &Connection, sql: &str) -> rusqlite::Result<ResultSet> {
        let mut stmt = conn.prepare(sql)?;
        let columns = stmt.column_count();
        let mut rows = stmt.query([])?;
        let mut out = Vec::new();
        while let Some(row) = rows.next()? {
            let mut cells = Vec::with_capacity(columns);
            for i in 0..columns {
                cells.push(match row.get_ref(i)? {
                    ValueRef::Null => Cell::Null,
                    ValueRef::Integer(v) => Cell::Integer(v),
                    ValueRef::Real(v) => Cell::Real(v),
                    ValueRef::Text(t) => Cell::Text(String::from_utf8_lossy(t).into_owned()),
                    ValueRef::Blob(b) => Cell::Blob(b.to_vec()),
                });
            }
            out.push(cells);
        }
        Ok(ResultSet { columns, rows: out })
    }

    /// Executes `sql_src` on `src` and `sql_tgt` on `tgt` and compares the
    /// results, in order when the source query's outermost statement has an
    /// ORDER BY.
    pub fn verify_execution_equivalence(
        sql_src: &str,
        src: &Connection,
        sql_tgt: &str,
        tgt: &Connection,
        timeout: Duration,
    ) -> ExecutionCheck {
        let ordered_compare = has_top_level_order_by(sql_src);
        let ms = |d: Duration| d.as_secs_f64() * 1000.0;
        let fail = |e: ExecError, src_ms: f64| ExecutionCheck {
            status: CheckStatus::Error,
            ordered_compare,
            src_ms,
            tgt_ms: 0.0,
            error: Some(e),
        };
        let (a, ta) = match run_query(src, sql_src, timeout, Side::Source) {
            Ok(r) => r,
            Err(e) => return fail(e, 0.0),
        };
        let (b, tb) = match run_query(tgt, sql_tgt, timeout, Side::Target) {
            Ok(r) => r,
            Err(e) => return fail(e, ms(ta)),
        };
        ExecutionCheck {
            status: if results_equal(&a, &b, ordered_compare) {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            },
            ordered_compare,
            src_ms: ms(ta),
            tgt_ms: ms(tb),
            error: None,
        }
    }

    /// Path-based convenience over [`verify_execution_equivalence`].
    pub fn verify_execution_files(
        sql_src: &str,
        db_src: &Path,
        sql_tgt: &str,
        db_tgt: &Path,
        timeout: Duration,
    ) -> ExecutionCheck {
        let open = |p: &Path, side| open_database(p).map_err(|message| ExecError::Execution { side, message });
        match (open(db_src, Side::Source), open(db_tgt, Side::Target)) {
            (Ok(s), Ok(t)) => verify_execution_equivalence(sql_src, &s, sql_tgt, &t, timeout),
            (Err(e), _) | (_, Err(e)) => ExecutionCheck {
                status: CheckStatus::Error,
                ordered_compare: has_top_level_order_by(sql_src),
                src_ms: 0.0,
                tgt_ms: 0.0,
                error: Some(e),
            },
        }
    }
}

/// One rubric dimension of a judge report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dimension {
    pub pass: bool,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RubricReport {
    pub intent_match: Dimension,
    pub constraints_preserved: Dimension,
    pub aggregation_match: Dimension,
    pub ordering_limit_match: Dimension,
    pub evidence_consistency: Dimension,
    pub literal_handling: Dimension,
    pub overall_pass: bool,
    pub severity: Severity,
    pub suggested_fix: String,
}

pub const DIMENSIONS: [&str; 6] = [
    "intent_match",
    "constraints_preserved",
    "aggregation_match",
    "ordering_limit_match",
    "evidence_consistency",
    "literal_handling",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum JudgeError {
    #[error("judge report field {0} violates the schema")]
    SchemaViolation(String),
    #[error("overall_pass is true but {0} fails")]
    ConsistencyViolation(String),
}

/// Validates a judge report, treating the evidence as non-empty.
pub fn validate_judge_report(raw: &str) -> Result<RubricReport, JudgeError> {
    validate_judge_report_with(raw, false)
}

/// Validates a judge report. An overall pass requires every dimension to
/// pass, except `evidence_consistency` when the evidence is empty.
pub fn validate_judge_report_with(raw: &str, evidence_empty: bool) -> Result<RubricReport, JudgeError> {
    let schema = |f: &str| JudgeError::SchemaViolation(f.to_string());
    let v: Value = serde_json::from_str(raw.trim()).map_err(|_| schema("<root>"))?;
    let obj = v.as_object().ok_or_else(|| schema("<root>"))?;
    let expected: Vec<&str> = DIMENSIONS
        .iter()
        .copied()
        .chain(["overall_pass", "severity", "suggested_fix"])
        .collect();
    if let Some(extra) = obj.keys().find(|k| !expected.contains(&k.as_str())) {
        return Err(schema(extra));
    }
    let mut dims = Vec::with_capacity(6);
    for name in DIMENSIONS {
        let d = obj.get(name).and_then(Value::as_object).ok_or_else(|| schema(name))?;
        if d.len() != 2 {
            return Err(schema(name));
        }
        let pass = d
            .get("pass")
            .and_then(Value::as_bool)
            .ok_or_else(|| schema(&format!("{name}.pass")))?;
        let reason = d
            .get("reason")
            .and_then(Value::as_str)
            .ok_or_else(|| schema(&format!("{name}.reason")))?;
        dims.push(Dimension {
            pass,
            reason: reason.to_string(),
        });
    }
    let overall_pass = obj
        .get("overall_pass")
        .and_then(Value::as_bool)
        .ok_or_else(|| schema("overall_pass"))?;
    let severity = match obj.get("severity").and_then(Value::as_str) {
        Some("low") => Severity::Low,
        Some("medium") => Severity::Medium,
        Some("high") => Severity::High,
        _ => return Err(schema("severity")),
    };
    let suggested_fix = obj
        .get("suggested_fix")
        .and_then(Value::as_str)
        .ok_or_else(|| schema("suggested_fix"))?
        .to_string();
    if overall_pass != suggested_fix.is_empty() {
        return Err(schema("suggested_fix"));
    }
    if overall_pass {
        for (name, d) in DIMENSIONS.iter().zip(&dims) {
            let exempt = *name == "evidence_consistency" && evidence_empty;
            if !d.pass && !exempt {
                return Err(JudgeError::ConsistencyViolation(name.to_string()));
            }
        }
    }
    let mut dims = dims.into_iter();
    let mut next = || dims.next().expect("six dimensions");
    Ok(RubricReport {
        intent_match: next(),
        constraints_preserved: next(),
        aggregation_match: next(),
        ordering_limit_match: next(),
        evidence_consistency: next(),
        literal_handling: next(),
        overall_pass,
        severity,
        suggested_fix,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    Open,
    Corrected,
    Waived,
}

/// An item awaiting human attention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagRecord {
    pub item_id: i64,
    pub reason: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub judge_report: Option<RubricReport>,
    pub resolution: Resolution,
    #[serde(default)]
    pub corrected_fields: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FlagError {
    #[error("flag for item {0} is already resolved")]
    AlreadyResolved(i64),
    #[error("item {0} did not pass re-verification")]
    NotReverified(i64),
}

impl FlagRecord {
    pub fn open(item_id: i64, reason: impl Into<String>) -> Self {
        Self {
            item_id,
            reason: reason.into(),
            judge_report: None,
            resolution: Resolution::Open,
            corrected_fields: Vec::new(),
        }
    }

    /// Closes the flag as corrected; only allowed once the corrected item
    /// has passed verification again.
    pub fn mark_corrected(&mut self, fields: Vec<String>, reverified: &VerificationVerdict) -> Result<(), FlagError> {
        if self.resolution != Resolution::Open {
            return Err(FlagError::AlreadyResolved(self.item_id));
        }
        if !reverified.passed() || reverified.item_id != self.item_id {
            return Err(FlagError::NotReverified(self.item_id));
        }
        self.resolution = Resolution::Corrected;
        self.corrected_fields = fields;
        Ok(())
    }

    pub fn waive(&mut self) -> Result<(), FlagError> {
        if self.resolution != Resolution::Open {
            return Err(FlagError::AlreadyResolved(self.item_id));
        }
        self.resolution = Resolution::Waived;
        Ok(())
    }
}
