//! Exact match, execution accuracy and valid efficiency score.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::sql::{canonicalize, parse_sql, SqlError};

/// One line of a prediction file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    #[serde(alias = "question_id")]
    pub item_id: i64,
    pub sql: String,
}

/// Whether `pred` and `gold` are the same query after canonicalization. A
/// prediction that does not parse scores false with the parse error; a gold
/// query that does not parse is an error.
pub fn exact_match(pred: &str, gold: &str) -> Result<(bool, Option<String>), SqlError> {
    let gold = canonicalize(&parse_sql(gold)?);
    match parse_sql(pred) {
        Ok(p) => Ok((canonicalize(&p) == gold, None)),
        Err(e) => Ok((false, Some(format!("prediction does not parse: {e}")))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScore {
    pub item_id: i64,
    pub em_bit: bool,
    pub ex_bit: bool,
    /// `sqrt(E(gold) / E(pred))` averaged over runs; zero when `ex_bit` is
    /// false.
    pub r_factor: f64,
    pub gold_ms: f64,
    pub pred_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub em: f64,
    pub ex: f64,
    pub ves: f64,
    pub runs: usize,
    pub per_item: Vec<ItemScore>,
}

impl MetricsReport {
    /// Aggregates per-item scores, which must be non-empty.
    pub fn from_items(per_item: Vec<ItemScore>, runs: usize) -> Self {
        let n = per_item.len();
        let pct = |k: f64| if n == 0 { 0.0 } else { 100.0 * k / n as f64 };
        Self {
            n,
            em: pct(per_item.iter().filter(|s| s.em_bit).count() as f64),
            ex: pct(per_item.iter().filter(|s| s.ex_bit).count() as f64),
            ves: pct(per_item.iter().filter(|s| s.ex_bit).map(|s| s.r_factor).sum()),
            runs,
            per_item,
        }
    }
}

/// Valid efficiency score over `(ex_bit, gold_time, pred_time)` triples.
pub fn valid_efficiency_score(items: &[(bool, f64, f64)], clamp: bool) -> f64 {
    if items.is_empty() {
        return 0.0;
    }
    let total: f64 = items
        .iter()
        .map(|&(ok, g, p)| if ok { r_factor(g, p, clamp) } else { 0.0 })
        .sum();
    100.0 * total / items.len() as f64
}

/// `sqrt(gold / pred)`, optionally clamped to [0, 2]. Non-positive or
/// non-finite times give zero.
pub fn r_factor(gold: f64, pred: f64, clamp: bool) -> f64 {
    if !(gold > 0.0 && pred > 0.0 && gold.is_finite() && pred.is_finite()) {
        return 0.0;
    }
    let r = (gold / pred).sqrt();
    if clamp {
        r.clamp(0.0, 2.0)
    } else {
        r
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("no prediction for item {0}")]
    MissingPrediction(i64),
    #[error("prediction for unknown item {0}")]
    UnknownItem(i64),
    #[error("duplicate prediction for item {0}")]
    DuplicatePrediction(i64),
    #[error("gold query of item {item_id} fails: {message}")]
    GoldFailure { item_id: i64, message: String },
    #[error("no database for {0}")]
    MissingDatabase(String),
}

/// Tables 3-4 style summary: one row per method.
pub fn render_metrics_table(rows: &[(&str, &MetricsReport)]) -> String {
    let width = rows.iter().map(|(m, _)| m.len()).max().unwrap_or(0).max(6);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$} {:>7} {:>7} {:>7}", "Method", "EX", "VES", "EM");
    for (method, r) in rows {
        let _ = writeln!(out, "{method:<width$} {:>7.2} {:>7.2} {:>7.2}", r.ex, r.ves, r.em);
    }
    out
}

#[cfg(feature = "sqlite")]
pub use self::exec::*;

#[cfg(feature = "sqlite")]
mod exec {
    use super::*;
    use std::collections::{BTreeMap, HashMap};
    use std::path::PathBuf;
    use std::time::{Duration, Instant};

    use rayon::prelude::*;
    use rusqlite::Connection;

    use crate::corpus::BenchmarkItem;
    use crate::sql::has_top_level_order_by;
    use crate::verify::{open_database, results_equal, run_query, ExecError, Side, DEFAULT_TIMEOUT};

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum Role {
        Gold,
        Pred,
    }

    /// Measures the execution time of a query, in milliseconds.
    pub trait TimerPort: Send + Sync {
        fn measure(&self, conn: &Connection, item_id: i64, sql: &str, role: Role) -> Option<f64>;
    }

    /// One discarded warm-up run, then the median of `repeats` timed runs.
    #[derive(Debug, Clone, Copy)]
    pub struct WallClockTimer {
        pub warmups: usize,
        pub repeats: usize,
        pub timeout: Duration,
    }

    impl Default for WallClockTimer {
        fn default() -> Self {
            Self {
                warmups: 1,
                repeats: 5,
                timeout: DEFAULT_TIMEOUT,
            }
        }
    }

    impl TimerPort for WallClockTimer {
        fn measure(&self, conn: &Connection, _item_id: i64, sql: &str, _role: Role) -> Option<f64> {
            for _ in 0..self.warmups {
                run_query(conn, sql, self.timeout, Side::Target).ok()?;
            }
            let mut times = Vec::with_capacity(self.repeats);
            for _ in 0..self.repeats.max(1) {
                let start = Instant::now();
                run_query(conn, sql, self.timeout, Side::Target).ok()?;
                times.push(start.elapsed().as_secs_f64() * 1000.0);
            }
            times.sort_by(f64::total_cmp);
            let m = times.len() / 2;
            Some(if times.len() % 2 == 1 {
                times[m]
            } else {
                (times[m - 1] + times[m]) / 2.0
            })
        }
    }

    /// Returns fixed times per role, for tests.
    #[derive(Debug, Clone, Copy)]
    pub struct FixedTimer {
        pub gold_ms: f64,
        pub pred_ms: f64,
    }

    impl TimerPort for FixedTimer {
        fn measure(&self, _: &Connection, _: i64, _: &str, role: Role) -> Option<f64> {
            Some(match role {
                Role::Gold => self.gold_ms,
                Role::Pred => self.pred_ms,
            })
        }
    }

    /// Whether `pred` returns the same result as `gold` on `conn`, in order
    /// when `gold` has an outermost ORDER BY. Prediction errors and timeouts
    /// score false; a failing gold query is an error.
    pub fn execution_accuracy(
        pred: &str,
        gold: &str,
        conn: &Connection,
        timeout: Duration,
    ) -> Result<(bool, Option<String>), ExecError> {
        let (g, _) = run_query(conn, gold, timeout, Side::Source)?;
        match run_query(conn, pred, timeout, Side::Target) {
            Ok((p, _)) => Ok((results_equal(&g, &p, has_top_level_order_by(gold)), None)),
            Err(e) => Ok((false, Some(e.to_string()))),
        }
    }

    pub struct EvalOptions<'a> {
        /// Number of VES timing repetitions averaged.
        pub runs: usize,
        pub clamp: bool,
        pub timeout: Duration,
        pub timer: &'a dyn TimerPort,
        /// Score against the `_tr` fields and databases.
        pub target_side: bool,
    }

    /// Scores predictions against a corpus. `database` maps a db id to its
    /// file.
    pub fn evaluate_predictions(
        predictions: &[Prediction],
        corpus: &[BenchmarkItem],
        database: &(dyn Fn(&str) -> Option<PathBuf> + Sync),
        opts: &EvalOptions<'_>,
    ) -> Result<MetricsReport, MetricsError> {
        let items: Vec<BenchmarkItem> = corpus
            .iter()
            .map(|i| if opts.target_side { i.target_side() } else { i.clone() })
            .collect();
        let mut preds: HashMap<i64, &str> = HashMap::new();
        for p in predictions {
            if !items.iter().any(|i| i.item_id == p.item_id) {
                return Err(MetricsError::UnknownItem(p.item_id));
            }
            if preds.insert(p.item_id, &p.sql).is_some() {
                return Err(MetricsError::DuplicatePrediction(p.item_id));
            }
        }
        if let Some(missing) = items.iter().find(|i| !preds.contains_key(&i.item_id)) {
            return Err(MetricsError::MissingPrediction(missing.item_id));
        }
        let mut paths = BTreeMap::new();
        for item in &items {
            if !paths.contains_key(&item.db_id) {
                let p = database(&item.db_id).ok_or_else(|| MetricsError::MissingDatabase(item.db_id.clone()))?;
                paths.insert(item.db_id.clone(), p);
            }
        }
        let open =
            |db_id: &str| open_database(&paths[db_id]).map_err(|_| MetricsError::MissingDatabase(db_id.to_string()));

        let mut scores: Vec<ItemScore> = items
            .par_iter()
            .map(|item| {
                let pred = preds[&item.item_id];
                let gold_failure = |message: String| MetricsError::GoldFailure {
                    item_id: item.item_id,
                    message,
                };
                let (em_bit, em_note) = exact_match(pred, &item.sql).map_err(|e| gold_failure(e.to_string()))?;
                let conn = open(&item.db_id)?;
                let (ex_bit, ex_note) = execution_accuracy(pred, &item.sql, &conn, opts.timeout)
                    .map_err(|e| gold_failure(e.to_string()))?;
                Ok(ItemScore {
                    item_id: item.item_id,
                    em_bit,
                    ex_bit,
                    r_factor: 0.0,
                    gold_ms: 0.0,
                    pred_ms: 0.0,
                    note: ex_note.or(em_note),
                })
            })
            .collect::<Result<_, MetricsError>>()?;

        let runs = opts.runs.max(1);
        let by_id: HashMap<i64, &BenchmarkItem> = items.iter().map(|i| (i.item_id, i)).collect();
        let db_ids: Vec<&String> = paths.keys().collect();
        let timed: Vec<Vec<(usize, f64, f64, f64)>> = db_ids
            .par_iter()
            .map(|db_id| {
                let conn = open(db_id)?;
                let mut out = Vec::new();
                for (idx, s) in scores.iter().enumerate() {
                    let item = by_id[&s.item_id];
                    if &&item.db_id != db_id || !s.ex_bit {
                        continue;
                    }
                    let (mut r, mut g_sum, mut p_sum) = (0.0, 0.0, 0.0);
                    for _ in 0..runs {
                        let g = opts
                            .timer
                            .measure(&conn, item.item_id, &item.sql, Role::Gold)
                            .unwrap_or(f64::NAN);
                        let p = opts
                            .timer
                            .measure(&conn, item.item_id, preds[&item.item_id], Role::Pred)
                            .unwrap_or(f64::NAN);
                        r += r_factor(g, p, opts.clamp);
                        g_sum += g;
                        p_sum += p;
                    }
                    let k = runs as f64;
                    out.push((idx, r / k, g_sum / k, p_sum / k));
                }
                Ok(out)
            })
            .collect::<Result<_, MetricsError>>()?;
        for (idx, r, g, p) in timed.into_iter().flatten() {
            scores[idx].r_factor = r;
            scores[idx].gold_ms = g;
            scores[idx].pred_ms = p;
        }
        Ok(MetricsReport::from_items(scores, runs))
    }
}
