//! Linguistic and structural corpus statistics, and their side-by-side
//! comparison.

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::BenchmarkItem;
use crate::sql::tokenize;

/// Splits text into tokens for the "tokens" rows of the statistics.
pub trait TokenizerPort: Send + Sync {
    fn tokenize(&self, text: &str) -> Vec<String>;

    fn count(&self, text: &str) -> usize {
        self.tokenize(text).len()
    }
}

/// Deterministic default: lowercased runs of alphanumerics, with every
/// other non-space character a token of its own.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimpleTokenizer;

impl TokenizerPort for SimpleTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut cur = String::new();
        for c in text.chars() {
            if c.is_alphanumeric() || c == '_' {
                cur.extend(c.to_lowercase());
                continue;
            }
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            if !c.is_whitespace() {
                out.push(c.to_string());
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Source,
    Target,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StatsOptions {
    /// Lowercase with Turkish dotted/dotless i rules (`I` to `ı`, `İ` to `i`).
    pub turkish_case: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("tables describe corpora of different sizes ({0} and {1})")]
    CardinalityMismatch(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsTable {
    pub total_questions: usize,
    pub avg_words: f64,
    pub avg_chars: f64,
    pub avg_tokens: f64,
    pub vocabulary_size: usize,
    /// Vocabulary size over total word count, as a fraction.
    pub ttr: f64,
    pub avg_sql_tokens: f64,
    pub avg_evidence_tokens: f64,
}

pub fn lowercase(text: &str, turkish: bool) -> String {
    if !turkish {
        return text.to_lowercase();
    }
    text.chars()
        .flat_map(|c| match c {
            'I' => "ı".chars().collect::<Vec<_>>(),
            'İ' => vec!['i'],
            c => c.to_lowercase().collect(),
        })
        .collect()
}

/// Number of tokens the SQL lexer produces; text the lexer rejects is
/// counted by whitespace.
pub fn sql_token_count(sql: &str) -> usize {
    match tokenize(sql) {
        Ok(tokens) => tokens.len(),
        Err(_) => sql.split_whitespace().count(),
    }
}

pub fn compute_corpus_stats(
    items: &[BenchmarkItem],
    side: Side,
    tokenizer: &dyn TokenizerPort,
    opts: StatsOptions,
) -> Result<StatsTable, StatsError> {
    if items.is_empty() {
        return Err(StatsError::EmptyCorpus);
    }
    let mut words = 0usize;
    let mut chars = 0usize;
    let mut tokens = 0usize;
    let mut sql_tokens = 0usize;
    let mut evidence_tokens = 0usize;
    let mut vocab = HashSet::new();
    for item in items {
        let (question, evidence, sql) = match side {
            Side::Source => (item.question.as_str(), item.evidence.as_str(), item.sql.as_str()),
            Side::Target => (
                item.question_tr.as_deref().unwrap_or(&item.question),
                item.evidence_tr.as_deref().unwrap_or(&item.evidence),
                item.sql_tr.as_deref().unwrap_or(&item.sql),
            ),
        };
        for w in question.split_whitespace() {
            words += 1;
            vocab.insert(lowercase(w, opts.turkish_case));
        }
        chars += question.trim_end().chars().count();
        tokens += tokenizer.count(question);
        sql_tokens += sql_token_count(sql);
        evidence_tokens += tokenizer.count(evidence);
    }
    let n = items.len() as f64;
    Ok(StatsTable {
        total_questions: items.len(),
        avg_words: words as f64 / n,
        avg_chars: chars as f64 / n,
        avg_tokens: tokens as f64 / n,
        vocabulary_size: vocab.len(),
        ttr: if words == 0 {
            0.0
        } else {
            vocab.len() as f64 / words as f64
        },
        avg_sql_tokens: sql_tokens as f64 / n,
        avg_evidence_tokens: evidence_tokens as f64 / n,
    })
}

/// Percent change `(b - a) / a * 100` rounded to one decimal; `None` when
/// `a` is zero.
pub fn percent_change(a: f64, b: f64) -> Option<f64> {
    if a == 0.0 {
        return None;
    }
    Some(((b - a) / a * 1000.0).round() / 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsDiff {
    pub avg_words: Option<f64>,
    pub avg_chars: Option<f64>,
    pub avg_tokens: Option<f64>,
    pub vocabulary_size: Option<f64>,
    pub ttr: Option<f64>,
    pub avg_sql_tokens: Option<f64>,
    pub avg_evidence_tokens: Option<f64>,
}

pub fn diff_stats(a: &StatsTable, b: &StatsTable) -> Result<StatsDiff, StatsError> {
    if a.total_questions != b.total_questions {
        return Err(StatsError::CardinalityMismatch(a.total_questions, b.total_questions));
    }
    Ok(StatsDiff {
        avg_words: percent_change(a.avg_words, b.avg_words),
        avg_chars: percent_change(a.avg_chars, b.avg_chars),
        avg_tokens: percent_change(a.avg_tokens, b.avg_tokens),
        vocabulary_size: percent_change(a.vocabulary_size as f64, b.vocabulary_size as f64),
        ttr: percent_change(a.ttr, b.ttr),
        avg_sql_tokens: percent_change(a.avg_sql_tokens, b.avg_sql_tokens),
        avg_evidence_tokens: percent_change(a.avg_evidence_tokens, b.avg_evidence_tokens),
    })
}

/// Statistics of both sides of a corpus, as written to `stats.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub source: StatsTable,
    pub target: StatsTable,
    pub change_percent: StatsDiff,
}

impl StatsReport {
    pub fn new(source: StatsTable, target: StatsTable) -> Result<Self, StatsError> {
        let change_percent = diff_stats(&source, &target)?;
        Ok(Self {
            source,
            target,
            change_percent,
        })
    }

    /// Side-by-side text table.
    pub fn render(&self, source_label: &str, target_label: &str) -> String {
        let (a, b, d) = (&self.source, &self.target, &self.change_percent);
        let pct = |v: Option<f64>| v.map_or("--".to_string(), |v| format!("{v:+.1}%"));
        let rows: Vec<(&str, String, String, String)> = vec![
            (
                "Total Questions",
                a.total_questions.to_string(),
                b.total_questions.to_string(),
                "--".into(),
            ),
            (
                "Avg. Words per Question",
                format!("{:.2}", a.avg_words),
                format!("{:.2}", b.avg_words),
                pct(d.avg_words),
            ),
            (
                "Avg. Characters per Question",
                format!("{:.2}", a.avg_chars),
                format!("{:.2}", b.avg_chars),
                pct(d.avg_chars),
            ),
            (
                "Avg. Tokens per Question",
                format!("{:.2}", a.avg_tokens),
                format!("{:.2}", b.avg_tokens),
                pct(d.avg_tokens),
            ),
            (
                "Vocabulary Size (Unique)",
                a.vocabulary_size.to_string(),
                b.vocabulary_size.to_string(),
                pct(d.vocabulary_size),
            ),
            (
                "Type-Token Ratio (TTR)",
                format!("{:.2}%", a.ttr * 100.0),
                format!("{:.2}%", b.ttr * 100.0),
                pct(d.ttr),
            ),
            (
                "Avg. SQL Tokens",
                format!("{:.2}", a.avg_sql_tokens),
                format!("{:.2}", b.avg_sql_tokens),
                pct(d.avg_sql_tokens),
            ),
            (
                "Avg. Evidence Tokens",
                format!("{:.2}", a.avg_evidence_tokens),
                format!("{:.2}", b.avg_evidence_tokens),
                pct(d.avg_evidence_tokens),
            ),
        ];
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<30} {:>12} {:>12} {:>10}",
            "Statistic", source_label, target_label, "Change"
        );
        for (name, x, y, c) in rows {
            let _ = writeln!(out, "{name:<30} {x:>12} {y:>12} {c:>10}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn items(qs: &[&str]) -> Vec<BenchmarkItem> {
        qs.iter()
            .enumerate()
            .map(|(i, q)| BenchmarkItem::new(i as i64, "d", q, "", "SELECT * FROM t"))
            .collect()
    }

    fn stats(qs: &[&str]) -> StatsTable {
        compute_corpus_stats(&items(qs), Side::Source, &SimpleTokenizer, StatsOptions::default()).unwrap()
    }

    #[test]
    fn small_fixture() {
        let s = stats(&["a b c", "a b"]);
        assert_eq!(s.total_questions, 2);
        assert_eq!(s.avg_words, 2.5);
        assert_eq!(s.vocabulary_size, 3);
        assert!((s.ttr - 0.6).abs() < 1e-12);
        assert_eq!(s.avg_sql_tokens, 4.0);
        assert_eq!(stats(&["x y", "z"]).ttr, 1.0);
        assert_eq!(stats(&["ab  \n"]).avg_chars, 2.0);
        assert_eq!(
            compute_corpus_stats(&[], Side::Source, &SimpleTokenizer, StatsOptions::default()),
            Err(StatsError::EmptyCorpus)
        );
    }

    #[test]
    fn tokenizer_and_case() {
        assert_eq!(
            SimpleTokenizer.tokenize("How many, Schools?"),
            ["how", "many", ",", "schools", "?"]
        );
        assert_eq!(lowercase("IŞIK İzmir", true), "ışık izmir");
        assert_eq!(lowercase("IŞIK", false), "işik");
    }

    #[test]
    fn target_side_uses_translations() {
        let mut it = items(&["how many schools"]);
        it[0].question_tr = Some("kaç okul".into());
        let t = compute_corpus_stats(&it, Side::Target, &SimpleTokenizer, StatsOptions::default()).unwrap();
        assert_eq!(t.avg_words, 2.0);
    }

    #[test]
    fn percent_changes() {
        assert_eq!(percent_change(14.05, 10.21), Some(-27.3));
        assert_eq!(percent_change(9002.0, 15142.0), Some(68.2));
        assert_eq!(percent_change(0.0607, 0.1349), Some(122.2));
        assert_eq!(percent_change(0.0, 1.0), None);
        let s = stats(&["a b"]);
        let d = diff_stats(&s, &s).unwrap();
        assert_eq!(d.avg_words, Some(0.0));
        assert_eq!(d.ttr, Some(0.0));
        let r = StatsReport::new(s.clone(), s).unwrap().render("EN", "TR");
        assert!(r.contains("Type-Token Ratio (TTR)") && r.contains("+0.0%"));
    }

    proptest! {
        #[test]
        fn permutation_invariant(qs in prop::collection::vec("[a-e]{1,3}( [a-e]{1,3}){0,4}", 1..12), seed: u64) {
            let mut shuffled = qs.clone();
            let k = seed as usize % shuffled.len();
            shuffled.rotate_left(k);
            shuffled.reverse();
            let a: Vec<&str> = qs.iter().map(String::as_str).collect();
            let b: Vec<&str> = shuffled.iter().map(String::as_str).collect();
            prop_assert_eq!(stats(&a), stats(&b));
        }

        #[test]
        fn duplicate_keeps_vocab(qs in prop::collection::vec("[a-e]{1,3}( [a-e]{1,3}){0,4}", 1..12), pick: prop::sample::Index) {
            let mut a: Vec<&str> = qs.iter().map(String::as_str).collect();
            let before = stats(&a);
            a.push(a[pick.index(a.len())]);
            let after = stats(&a);
            prop_assert_eq!(before.vocabulary_size, after.vocabulary_size);
            prop_assert!(after.ttr <= before.ttr);
            prop_assert!(before.ttr > 0.0 && before.ttr <= 1.0);
        }
    }
}
