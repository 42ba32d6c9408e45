//! Brute-force reference scorers, written without the library's parser.

use rusqlite::types::ValueRef;
use rusqlite::Connection;

fn rows(conn: &Connection, sql: &str) -> Option<Vec<Vec<String>>> {
    let mut stmt = conn.prepare(sql).ok()?;
    let n = stmt.column_count();
    let mut out = Vec::new();
    let mut rs = stmt.query([]).ok()?;
    while let Some(row) = rs.next().ok()? {
        let cells = (0..n)
            .map(|i| match row.get_ref(i).unwrap() {
                ValueRef::Null => "NULL".to_string(),
                ValueRef::Integer(v) => format!("{:?}", v as f64),
                ValueRef::Real(v) => format!("{v:?}"),
                ValueRef::Text(t) => String::from_utf8_lossy(t).into_owned(),
                ValueRef::Blob(b) => format!("{b:?}"),
            })
            .collect();
        out.push(cells);
    }
    Some(out)
}

/// Same rows, in order when the gold text has an ORDER BY.
pub fn ex(conn: &Connection, pred: &str, gold: &str) -> bool {
    let g = rows(conn, gold).expect("gold runs");
    let Some(p) = rows(conn, pred) else { return false };
    if gold.to_ascii_uppercase().contains("ORDER BY") {
        g == p
    } else {
        let (mut g, mut p) = (g, p);
        g.sort();
        p.sort();
        g == p
    }
}

/// Lower-cased text with all whitespace removed.
pub fn em(pred: &str, gold: &str) -> bool {
    let norm = |s: &str| {
        s.chars()
            .filter(|c| !c.is_whitespace())
            .flat_map(char::to_lowercase)
            .collect::<String>()
    };
    norm(pred) == norm(gold)
}
