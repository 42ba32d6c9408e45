//! Evidence standardization, question/evidence translation and the checks
//! that frozen content survived translation.

use std::collections::BTreeMap;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::mapping::IdentifierMapping;
use crate::ports::{TextRequest, TranslatorPort};

/// SQL words that should pass through translation verbatim when they occur
/// outside backticks.
pub const KEEP_AS_IS: &[&str] = &[
    "ABS",
    "AND",
    "AS",
    "ASC",
    "AVG",
    "BETWEEN",
    "CASE",
    "CAST",
    "COALESCE",
    "COUNT",
    "CROSS",
    "DATE",
    "DATETIME",
    "DESC",
    "DISTINCT",
    "ELSE",
    "END",
    "EXCEPT",
    "EXISTS",
    "FROM",
    "FULL",
    "GLOB",
    "GROUP",
    "HAVING",
    "IN",
    "INNER",
    "INSTR",
    "INTERSECT",
    "IS",
    "JOIN",
    "LEFT",
    "LENGTH",
    "LIKE",
    "LIMIT",
    "LOWER",
    "MAX",
    "MIN",
    "NOT",
    "NULL",
    "NULLIF",
    "OFFSET",
    "ON",
    "OR",
    "ORDER",
    "RIGHT",
    "ROUND",
    "SELECT",
    "STRFTIME",
    "SUBSTR",
    "SUM",
    "THEN",
    "TRIM",
    "UNION",
    "UPPER",
    "USING",
    "WHEN",
    "WHERE",
    "WITH",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NlError {
    #[error("unbalanced backticks in {0:?}")]
    UnbalancedBackticks(String),
    #[error("translator unavailable: {0}")]
    TranslatorUnavailable(String),
    #[error("malformed translator reply: {0}")]
    MalformedTranslatorReply(String),
    #[error("frozen content violated: {0}")]
    FrozenContentViolated(String),
}

/// Backtick-delimited spans of `text`, in order.
pub fn backtick_spans(text: &str) -> Result<Vec<&str>, NlError> {
    let parts: Vec<&str> = text.split('`').collect();
    if parts.len().is_multiple_of(2) {
        return Err(NlError::UnbalancedBackticks(text.to_string()));
    }
    Ok(parts.iter().skip(1).step_by(2).copied().collect())
}

/// `text` with every backtick span removed.
fn outside_backticks(text: &str) -> String {
    text.split('`').step_by(2).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StandardizedEvidence {
    pub text: String,
    /// Spans that name no schema identifier.
    pub unknown: Vec<String>,
}

/// Replaces each backtick span naming a source identifier by its target.
/// Spans may name a table, a column, or `table.column`; exact matches win
/// over case-insensitive ones, and columns over tables. Spans that already
/// name a target are kept silently; other spans are kept and reported.
pub fn standardize_evidence(evidence: &str, mapping: &IdentifierMapping) -> Result<StandardizedEvidence, NlError> {
    let parts: Vec<&str> = evidence.split('`').collect();
    if parts.len().is_multiple_of(2) {
        return Err(NlError::UnbalancedBackticks(evidence.to_string()));
    }
    let mut text = String::with_capacity(evidence.len());
    let mut unknown = Vec::new();
    for (i, part) in parts.iter().enumerate() {
        if i % 2 == 0 {
            text.push_str(part);
            continue;
        }
        text.push('`');
        match lookup_span(part, mapping) {
            Some(t) => text.push_str(&t),
            None => {
                if !is_target(part, mapping) {
                    unknown.push(part.to_string());
                }
                text.push_str(part);
            }
        }
        text.push('`');
    }
    Ok(StandardizedEvidence { text, unknown })
}

fn lookup_span(span: &str, m: &IdentifierMapping) -> Option<String> {
    let eq_exact = |a: &str, b: &str| a == b;
    let eq_fold = |a: &str, b: &str| a.eq_ignore_ascii_case(b);
    for eq in [&eq_exact as &dyn Fn(&str, &str) -> bool, &eq_fold] {
        if let Some(c) = m.tables.iter().flat_map(|t| &t.columns).find(|c| eq(&c.source, span)) {
            return Some(c.target.clone());
        }
        if let Some(t) = m.tables.iter().find(|t| eq(&t.source, span)) {
            return Some(t.target.clone());
        }
        for t in &m.tables {
            if let Some(rest) = span.strip_prefix(t.source.as_str()).or_else(|| {
                span.get(..t.source.len())
                    .filter(|p| eq(p, &t.source))
                    .map(|_| &span[t.source.len()..])
            }) {
                if let Some(col) = rest.strip_prefix('.') {
                    if let Some(c) = t.columns.iter().find(|c| eq(&c.source, col)) {
                        return Some(format!("{}.{}", t.target, c.target));
                    }
                }
            }
        }
    }
    None
}

fn is_target(span: &str, m: &IdentifierMapping) -> bool {
    m.tables.iter().any(|t| {
        t.target == span
            || t.columns
                .iter()
                .any(|c| c.target == span || format!("{}.{}", t.target, c.target) == span)
    })
}

/// Patterns and options of the frozen-content check.
#[derive(Debug, Clone)]
pub struct FrozenConfig {
    pub number: Regex,
    pub dates: Vec<Regex>,
    pub literal: Regex,
}

impl Default for FrozenConfig {
    fn default() -> Self {
        Self {
            number: Regex::new(r"\d+(?:\.\d+)?").expect("valid regex"),
            dates: vec![
                Regex::new(r"\b\d{4}-\d{2}-\d{2}\b").expect("valid regex"),
                Regex::new(r"\b\d{4}\b").expect("valid regex"),
            ],
            // An opening quote must not follow a letter or digit, so Turkish
            // suffix apostrophes (2019'da, Ali'nin) are not read as quotes.
            literal: Regex::new(r"(?:^|[^\p{L}\p{N}])'([^']*)'").expect("valid regex"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrozenKind {
    BacktickSpans,
    Number,
    Date,
    Literal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrozenViolation {
    pub kind: FrozenKind,
    /// The token whose count differs, or the span sequence that changed.
    pub token: String,
    pub expected: usize,
    pub found: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrozenVerdict {
    pub violations: Vec<FrozenViolation>,
    /// SQL words from the keep-as-is list that the source evidence has and
    /// the target evidence lost. Not a failure.
    pub warnings: Vec<String>,
}

impl FrozenVerdict {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn describe(&self) -> String {
        self.violations
            .iter()
            .map(|v| format!("{:?} {:?}: expected {}, found {}", v.kind, v.token, v.expected, v.found))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

fn multiset<'a>(items: impl Iterator<Item = &'a str>) -> BTreeMap<&'a str, usize> {
    let mut m = BTreeMap::new();
    for i in items {
        *m.entry(i).or_insert(0) += 1;
    }
    m
}

fn compare(kind: FrozenKind, src: BTreeMap<&str, usize>, tgt: BTreeMap<&str, usize>, out: &mut Vec<FrozenViolation>) {
    for key in src.keys().chain(tgt.keys()).collect::<std::collections::BTreeSet<_>>() {
        let (e, f) = (src.get(key).copied().unwrap_or(0), tgt.get(key).copied().unwrap_or(0));
        if e != f {
            out.push(FrozenViolation {
                kind,
                token: key.to_string(),
                expected: e,
                found: f,
            });
        }
    }
}

/// Checks that translation kept the backtick spans of the evidence (same
/// sequence), and the numbers, dates and single-quoted literals of question
/// and evidence together (same multisets).
pub fn verify_frozen_content(
    src_question: &str,
    src_evidence: &str,
    tgt_question: &str,
    tgt_evidence: &str,
    config: &FrozenConfig,
) -> FrozenVerdict {
    let mut violations = Vec::new();
    let spans = |t: &str| -> Vec<String> {
        let parts: Vec<&str> = t.split('`').collect();
        parts.iter().skip(1).step_by(2).map(|s| s.to_string()).collect()
    };
    let (ss, ts) = (spans(src_evidence), spans(tgt_evidence));
    let balanced = |t: &str| t.matches('`').count().is_multiple_of(2);
    if ss != ts || balanced(src_evidence) != balanced(tgt_evidence) {
        violations.push(FrozenViolation {
            kind: FrozenKind::BacktickSpans,
            token: ss
                .iter()
                .zip(&ts)
                .find(|(a, b)| a != b)
                .map(|(a, _)| a.clone())
                .or_else(|| ss.get(ts.len()).cloned())
                .or_else(|| ts.get(ss.len()).cloned())
                .unwrap_or_default(),
            expected: ss.len(),
            found: ts.len(),
        });
    }

    let src = format!(
        "{}\n{}",
        outside_backticks(src_question),
        outside_backticks(src_evidence)
    );
    let tgt = format!(
        "{}\n{}",
        outside_backticks(tgt_question),
        outside_backticks(tgt_evidence)
    );
    compare(
        FrozenKind::Number,
        multiset(config.number.find_iter(&src).map(|m| m.as_str())),
        multiset(config.number.find_iter(&tgt).map(|m| m.as_str())),
        &mut violations,
    );
    for re in &config.dates {
        compare(
            FrozenKind::Date,
            multiset(re.find_iter(&src).map(|m| m.as_str())),
            multiset(re.find_iter(&tgt).map(|m| m.as_str())),
            &mut violations,
        );
    }
    let literals = |t: &str| -> Vec<String> { config.literal.captures_iter(t).map(|c| c[1].to_string()).collect() };
    let (sl, tl) = (literals(&src), literals(&tgt));
    compare(
        FrozenKind::Literal,
        multiset(sl.iter().map(String::as_str)),
        multiset(tl.iter().map(String::as_str)),
        &mut violations,
    );

    let words = |t: &str| -> Vec<String> {
        outside_backticks(t)
            .split(|c: char| !c.is_ascii_alphanumeric() && c != '_')
            .filter(|w| !w.is_empty())
            .map(str::to_string)
            .collect()
    };
    let tw = words(tgt_evidence);
    let mut warnings: Vec<String> = words(src_evidence)
        .into_iter()
        .filter(|w| KEEP_AS_IS.contains(&w.as_str()) && !tw.contains(w))
        .collect();
    warnings.dedup();

    FrozenVerdict { violations, warnings }
}

/// Parses a translation reply: a JSON object with exactly the string keys
/// `question_tr` and `evidence_tr`.
pub fn parse_text_reply(raw: &str) -> Result<(String, String), NlError> {
    let bad = |m: String| NlError::MalformedTranslatorReply(m);
    let v: Value = serde_json::from_str(raw.trim()).map_err(|e| bad(format!("not JSON: {e}")))?;
    let obj = v.as_object().ok_or_else(|| bad("reply is not an object".into()))?;
    if let Some(extra) = obj.keys().find(|k| *k != "question_tr" && *k != "evidence_tr") {
        return Err(bad(format!("unexpected key {extra:?}")));
    }
    let field = |k: &str| -> Result<String, NlError> {
        obj.get(k)
            .ok_or_else(|| bad(format!("missing key {k:?}")))?
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| bad(format!("{k:?} is not a string")))
    };
    Ok((field("question_tr")?, field("evidence_tr")?))
}

/// Translates a question and its standardized evidence, accepting a reply
/// only when it is well-formed and keeps all frozen content. Up to
/// `attempts` requests are made; the last rejection is returned.
pub fn localize_text_pair(
    question: &str,
    evidence_std: &str,
    sql_en: Option<&str>,
    translator: &dyn TranslatorPort,
    config: &FrozenConfig,
    attempts: usize,
) -> Result<(String, String, FrozenVerdict), NlError> {
    localize_text_pair_with_candidate(question, evidence_std, sql_en, translator, config, attempts).result
}

/// Result of [`localize_text_pair_with_candidate`].
#[derive(Debug, Clone)]
pub struct TextOutcome {
    pub result: Result<(String, String, FrozenVerdict), NlError>,
    /// On failure, the last well-formed reply that was rejected for its
    /// frozen content, for human correction.
    pub rejected: Option<(String, String)>,
}

/// As [`localize_text_pair`], also keeping the last rejected candidate.
pub fn localize_text_pair_with_candidate(
    question: &str,
    evidence_std: &str,
    sql_en: Option<&str>,
    translator: &dyn TranslatorPort,
    config: &FrozenConfig,
    attempts: usize,
) -> TextOutcome {
    let request = TextRequest {
        question_en: question.to_string(),
        evidence_std: evidence_std.to_string(),
        sql_en: sql_en.map(str::to_string),
    };
    let mut last = NlError::MalformedTranslatorReply("no attempt made".into());
    let mut rejected = None;
    for attempt in 1..=attempts.max(1) {
        let raw = match translator.translate(&request) {
            Ok(raw) => raw,
            Err(e) => {
                return TextOutcome {
                    result: Err(NlError::TranslatorUnavailable(e.to_string())),
                    rejected,
                }
            }
        };
        match parse_text_reply(&raw) {
            Ok((q, e)) => {
                let verdict = verify_frozen_content(question, evidence_std, &q, &e, config);
                if verdict.passed() {
                    return TextOutcome {
                        result: Ok((q, e, verdict)),
                        rejected: None,
                    };
                }
                log::debug!("attempt {attempt}: {}", verdict.describe());
                last = NlError::FrozenContentViolated(verdict.describe());
                rejected = Some((q, e));
            }
            Err(e) => {
                log::debug!("attempt {attempt}: {e}");
                last = e;
            }
        }
    }
    TextOutcome {
        result: Err(last),
        rejected,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::{ColumnMapping, TableMapping};
    use crate::ports::{IdentityTranslator, PortError};
    use proptest::prelude::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn schools() -> IdentifierMapping {
        IdentifierMapping {
            db_id_src: "california_schools".into(),
            db_id_tgt: "kaliforniya_okullari".into(),
            tables: vec![TableMapping {
                source: "frpm".into(),
                target: "frpm".into(),
                columns: vec![
                    ColumnMapping {
                        source: "Free Meal Count".into(),
                        target: "ucretsiz_yemek_sayisi".into(),
                    },
                    ColumnMapping {
                        source: "Enrollment".into(),
                        target: "kayit".into(),
                    },
                ],
            }],
        }
    }

    #[test]
    fn standardizes_spans() {
        let s = standardize_evidence("rate = `Free Meal Count` / `Enrollment`", &schools()).unwrap();
        assert_eq!(s.text, "rate = `ucretsiz_yemek_sayisi` / `kayit`");
        assert!(s.unknown.is_empty());

        let s = standardize_evidence("no spans here", &schools()).unwrap();
        assert_eq!(s.text, "no spans here");

        let s = standardize_evidence("`unknown_col` = 1", &schools()).unwrap();
        assert_eq!(s.text, "`unknown_col` = 1");
        assert_eq!(s.unknown, ["unknown_col"]);

        let s = standardize_evidence("`FRPM.enrollment` > 0", &schools()).unwrap();
        assert_eq!(s.text, "`frpm.kayit` > 0");

        assert!(matches!(
            standardize_evidence("`open", &schools()),
            Err(NlError::UnbalancedBackticks(_))
        ));
    }

    #[test]
    fn standardize_is_idempotent_once_localized() {
        let once = standardize_evidence("`Enrollment` and `frpm`", &schools()).unwrap();
        let twice = standardize_evidence(&once.text, &schools()).unwrap();
        assert_eq!(once.text, twice.text);
        assert!(twice.unknown.is_empty());
    }

    #[test]
    fn frozen_checks() {
        let cfg = FrozenConfig::default();
        assert!(verify_frozen_content("top 3 schools", "`kayit`", "ilk 3 okul", "`kayit`", &cfg).passed());

        let v = verify_frozen_content(
            "funding type 'Directly funded'",
            "",
            "finansman türü 'Doğrudan finanse'",
            "",
            &cfg,
        );
        assert_eq!(v.violations[0].kind, FrozenKind::Literal);

        let v = verify_frozen_content("older than 20", "", "daha yaşlı", "", &cfg);
        assert_eq!(v.violations[0].kind, FrozenKind::Number);
        assert_eq!(v.violations[0].token, "20");

        let v = verify_frozen_content("q", "`kayit` > 1", "q", "`kayıt` > 1", &cfg);
        assert_eq!(v.violations[0].kind, FrozenKind::BacktickSpans);
        assert_eq!(v.violations[0].token, "kayit");
    }

    #[test]
    fn turkish_suffixes() {
        let cfg = FrozenConfig::default();
        let v = verify_frozen_content("older than 20 in 2019", "", "2019'da 20'den büyük", "", &cfg);
        assert!(v.passed(), "{v:?}");
        let v = verify_frozen_content("Ali's 'X'", "", "Ali'nin 'X'", "", &cfg);
        assert!(v.passed(), "{v:?}");
    }

    #[test]
    fn keyword_warnings_are_soft() {
        let v = verify_frozen_content("q", "use COUNT of `a`", "q", "`a` sayısı", &FrozenConfig::default());
        assert!(v.passed());
        assert_eq!(v.warnings, ["COUNT"]);
    }

    #[test]
    fn reply_validation() {
        assert!(parse_text_reply(r#"{"question_tr": "a", "evidence_tr": "b"}"#).is_ok());
        for raw in [
            r#"{"question_tr": "a"}"#,
            r#"{"question_tr": "a", "evidence_tr": "b", "x": 1}"#,
            "nope",
        ] {
            assert!(matches!(
                parse_text_reply(raw),
                Err(NlError::MalformedTranslatorReply(_))
            ));
        }
    }

    struct Scripted(Vec<&'static str>, AtomicUsize);

    impl TranslatorPort for Scripted {
        fn map_schema(&self, _: &crate::ports::SchemaPackage) -> Result<String, PortError> {
            unreachable!()
        }
        fn translate(&self, _: &TextRequest) -> Result<String, PortError> {
            let i = self.1.fetch_add(1, Ordering::SeqCst);
            Ok(self.0[i.min(self.0.len() - 1)].to_string())
        }
    }

    #[test]
    fn retries_then_accepts_or_gives_up() {
        let cfg = FrozenConfig::default();
        let t = Scripted(
            vec![
                r#"{"question_tr": "x"}"#,
                r#"{"question_tr": "Kaç 3", "evidence_tr": "`a`"}"#,
            ],
            AtomicUsize::new(0),
        );
        let (q, _, _) = localize_text_pair("How many 3", "`a`", None, &t, &cfg, 3).unwrap();
        assert_eq!(q, "Kaç 3");

        let t = Scripted(
            vec![r#"{"question_tr": "Kaç", "evidence_tr": "`b`"}"#],
            AtomicUsize::new(0),
        );
        let err = localize_text_pair("How many", "`a`", None, &t, &cfg, 3).unwrap_err();
        assert!(matches!(err, NlError::FrozenContentViolated(_)));
        assert_eq!(t.1.load(Ordering::SeqCst), 3);
    }

    proptest! {
        #[test]
        fn identity_translation_always_passes(
            pieces in proptest::collection::vec(("[^`]{0,12}", proptest::option::of("[^`]{0,8}")), 0..6),
            question in ".{0,40}",
        ) {
            let mut evidence = String::new();
            for (text, span) in &pieces {
                evidence.push_str(text);
                if let Some(s) = span {
                    evidence.push('`');
                    evidence.push_str(s);
                    evidence.push('`');
                }
            }
            let std = standardize_evidence(&evidence, &schools()).unwrap();
            let (q, e, _) = localize_text_pair(&question, &std.text, None, &IdentityTranslator, &FrozenConfig::default(), 1).unwrap();
            prop_assert_eq!(q, question);
            prop_assert_eq!(e, std.text);
        }
    }
}
