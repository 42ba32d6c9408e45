mod common;

use common::fuzz;
use proptest::prelude::*;
use schemaloc::mapping::{ColumnMapping, IdentifierMapping, TableMapping};
use schemaloc::sql::lexer::KEYWORDS;
use schemaloc::sql::{canonicalize, parse_sql, render_sql, tokenize, TokenKind};

fn mapping(pairs: &[(&str, &str)]) -> IdentifierMapping {
    IdentifierMapping {
        db_id_src: "a".into(),
        db_id_tgt: "b".into(),
        tables: vec![TableMapping {
            source: "t".into(),
            target: "tablo".into(),
            columns: pairs
                .iter()
                .map(|(s, t)| ColumnMapping {
                    source: s.to_string(),
                    target: t.to_string(),
                })
                .collect(),
        }],
    }
}

fn keyword_count(sql: &str) -> Vec<String> {
    let mut out: Vec<String> = tokenize(sql)
        .unwrap()
        .into_iter()
        .filter_map(|t| match t.kind {
            TokenKind::Word(w) if schemaloc::sql::lexer::is_keyword(&w) => Some(w.to_ascii_uppercase()),
            _ => None,
        })
        .collect();
    out.sort();
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn rewrite_then_invert_restores_query(seed: u64) {
        let c = fuzz::case(seed);
        prop_assert!(fuzz::round_trip(&c.sql, &c.mapping).is_ok(), "{:?}", fuzz::round_trip(&c.sql, &c.mapping));
    }

    #[test]
    fn canonicalize_is_idempotent(seed: u64) {
        let q = parse_sql(&fuzz::case(seed).sql).unwrap();
        let once = canonicalize(&q);
        prop_assert_eq!(canonicalize(&once), once.clone());
        prop_assert_eq!(canonicalize(&parse_sql(&render_sql(&q)).unwrap()), once);
    }

    #[test]
    fn literals_equal_to_identifiers_survive(pick in 0usize..4, other in "[a-z]{1,8}") {
        let names = ["age", "name", "City", "Free Meal Count"];
        let name = names[pick];
        let m = mapping(&[("age", "yas"), ("name", "ad"), ("City", "sehir"), ("Free Meal Count", "ucretsiz_yemek")]);
        let sql = format!(
            "SELECT age, '{name}' FROM t WHERE name = '{name}' OR City LIKE '%{name}%' OR \"Free Meal Count\" = '{other}' OR '{name}' = 'yas'"
        );
        let out = m.rewrite_sql(&sql).unwrap();
        prop_assert_eq!(fuzz::string_literals(&sql), fuzz::string_literals(&out));
        prop_assert!(out.contains("yas") && out.contains("sehir") && out.contains("ucretsiz_yemek"));
    }

    #[test]
    fn keywords_named_columns_keep_keywords(k in 0usize..KEYWORDS.len()) {
        let kw = KEYWORDS[k];
        let m = mapping(&[(kw, "hedef"), ("x", "y")]);
        let sql = format!("SELECT \"{kw}\", x FROM t WHERE x > 1 AND \"{kw}\" IS NOT NULL GROUP BY x ORDER BY \"{kw}\" DESC LIMIT 3");
        let out = m.rewrite_sql(&sql).unwrap();
        prop_assert!(!out.to_ascii_uppercase().contains(&format!("\"{}\"", kw.to_ascii_uppercase())), "{}", out);
        prop_assert_eq!(keyword_count(&sql), keyword_count(&out));
        prop_assert!(fuzz::round_trip(&sql, &m).is_ok());
    }
}

#[test]
fn round_trip_detects_a_wrong_inverse() {
    let m = mapping(&[("age", "yas"), ("name", "ad")]);
    let sql = "SELECT age, name FROM t";
    assert!(fuzz::round_trip(sql, &m).is_ok());
    let forward = m.rewrite_sql(sql).unwrap();
    let wrong = mapping(&[("age", "ad"), ("name", "yas")]);
    let back = wrong.invert().unwrap().rewrite_sql(&forward).unwrap();
    assert_ne!(parse_sql(&back).unwrap(), parse_sql(sql).unwrap());
}
