//! Seeded grammar fuzzer for the SELECT dialect, with random schemas and
//! random injective mappings.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use schemaloc::mapping::{ColumnMapping, IdentifierMapping, TableMapping};
use schemaloc::sql::lexer::is_keyword;

const TABLES: &[&str] = &[
    "schools",
    "frpm",
    "Order Items",
    "patients",
    "visits",
    "Customer",
    "satscores",
    "products",
    "group",
    "Sales 2019",
];
const COLUMNS: &[&str] = &[
    "id",
    "name",
    "City",
    "Free Meal Count",
    "Academic Year",
    "age",
    "order",
    "date",
    "Enrollment (K-12)",
    "County",
    "price",
    "qty",
    "diagnosis",
    "School",
    "CDSCode",
    "status",
    "value",
    "first_name",
    "Count",
    "select",
];
const WORDS: &[&str] = &[
    "ad", "yas", "sehir", "ilce", "tarih", "fiyat", "miktar", "durum", "deger", "okul", "kayit", "tani", "kod", "sira",
    "grup", "satis", "urun", "hasta", "ziyaret", "musteri",
];

#[derive(Debug, Clone)]
pub struct Schema {
    pub tables: Vec<(String, Vec<String>)>,
}

pub struct Case {
    pub sql: String,
    pub mapping: IdentifierMapping,
}

pub fn case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schema = random_schema(&mut rng);
    let mapping = random_mapping(&schema, &mut rng);
    let sql = Gen {
        rng: &mut rng,
        schema: &schema,
        next_alias: 0,
    }
    .query(0);
    Case { sql, mapping }
}

pub fn random_schema(rng: &mut ChaCha8Rng) -> Schema {
    let n = rng.gen_range(1..=4);
    let tables = TABLES
        .choose_multiple(rng, n)
        .map(|t| {
            let k = rng.gen_range(2..=5);
            let cols = COLUMNS.choose_multiple(rng, k).map(|c| c.to_string()).collect();
            (t.to_string(), cols)
        })
        .collect();
    Schema { tables }
}

/// Targets are a function of the source name. Sometimes the column targets
/// are a permutation of the source names themselves, which a sequential
/// text substitution would get wrong.
pub fn random_mapping(schema: &Schema, rng: &mut ChaCha8Rng) -> IdentifierMapping {
    let mut names: Vec<String> = schema.tables.iter().flat_map(|(_, c)| c.clone()).collect();
    names.sort();
    names.dedup();
    let permute = rng.gen_bool(0.3);
    let mut targets: BTreeMap<String, String> = BTreeMap::new();
    if permute {
        let mut shuffled = names.clone();
        shuffled.shuffle(rng);
        targets = names.iter().cloned().zip(shuffled).collect();
    } else {
        for (i, n) in names.iter().enumerate() {
            targets.insert(n.clone(), format!("{}_{i}", WORDS.choose(rng).unwrap()));
        }
    }
    IdentifierMapping {
        db_id_src: "src".into(),
        db_id_tgt: "hedef".into(),
        tables: schema
            .tables
            .iter()
            .enumerate()
            .map(|(i, (t, cols))| TableMapping {
                source: t.clone(),
                target: format!("tablo_{}_{i}", WORDS.choose(rng).unwrap()),
                columns: cols
                    .iter()
                    .map(|c| ColumnMapping {
                        source: c.clone(),
                        target: targets[c].clone(),
                    })
                    .collect(),
            })
            .collect(),
    }
}

struct Gen<'a> {
    rng: &'a mut ChaCha8Rng,
    schema: &'a Schema,
    next_alias: usize,
}

/// A table in scope: its alias and columns.
struct Scope {
    alias: String,
    columns: Vec<String>,
}

impl Gen<'_> {
    fn ident(&mut self, name: &str) -> String {
        let bare_ok = name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
            && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
            && !is_keyword(name);
        let styles: &[u8] = if bare_ok { &[0, 0, 1, 2, 3] } else { &[1, 2, 3] };
        match styles.choose(self.rng).unwrap() {
            0 => name.to_string(),
            1 => format!("\"{name}\""),
            2 => format!("`{name}`"),
            _ => format!("[{name}]"),
        }
    }

    fn literal(&mut self) -> String {
        match self.rng.gen_range(0..5) {
            0 => self.rng.gen_range(0..1000).to_string(),
            1 => format!("{}.{}", self.rng.gen_range(0..100), self.rng.gen_range(0..100)),
            2 => {
                // A string equal to some identifier or target-like word.
                let pool = [COLUMNS, TABLES, WORDS].concat();
                format!("'{}'", pool.choose(self.rng).unwrap().replace('\'', "''"))
            }
            3 => "'it''s'".to_string(),
            _ => "NULL".to_string(),
        }
    }

    fn column(&mut self, scopes: &[Scope]) -> String {
        let s = scopes.choose(self.rng).unwrap();
        let c = s.columns.choose(self.rng).unwrap().clone();
        let c = self.ident(&c);
        if scopes.len() == 1 && self.rng.gen_bool(0.4) {
            c
        } else {
            format!("{}.{c}", s.alias)
        }
    }

    fn expr(&mut self, scopes: &[Scope], depth: usize) -> String {
        let k = if depth > 2 {
            self.rng.gen_range(0..2)
        } else {
            self.rng.gen_range(0..8)
        };
        match k {
            0 => self.column(scopes),
            1 => self.literal(),
            2 => {
                let f = ["ABS", "LOWER", "UPPER", "LENGTH", "TRIM"].choose(self.rng).unwrap();
                format!("{f}({})", self.expr(scopes, depth + 1))
            }
            3 => format!("CAST({} AS REAL)", self.column(scopes)),
            4 => {
                let op = ["+", "-", "*", "/", "||"].choose(self.rng).unwrap();
                format!(
                    "({} {op} {})",
                    self.expr(scopes, depth + 1),
                    self.expr(scopes, depth + 1)
                )
            }
            5 => format!(
                "CASE WHEN {} THEN {} ELSE {} END",
                self.cond(scopes, depth + 1),
                self.expr(scopes, depth + 1),
                self.literal()
            ),
            6 => {
                let f = ["COALESCE", "NULLIF"].choose(self.rng).unwrap();
                format!("{f}({}, {})", self.column(scopes), self.literal())
            }
            _ => format!("SUBSTR({}, 1, 3)", self.column(scopes)),
        }
    }

    fn cond(&mut self, scopes: &[Scope], depth: usize) -> String {
        let k = if depth > 2 {
            self.rng.gen_range(0..3)
        } else {
            self.rng.gen_range(0..9)
        };
        match k {
            0 => {
                let op = ["=", "<>", "<", ">=", "!="].choose(self.rng).unwrap();
                format!("{} {op} {}", self.column(scopes), self.literal())
            }
            1 => format!("{} LIKE '%{}%'", self.column(scopes), WORDS.choose(self.rng).unwrap()),
            2 => format!("{} IS NOT NULL", self.column(scopes)),
            3 => format!("{} BETWEEN 1 AND 10", self.expr(scopes, depth + 1)),
            4 => format!(
                "({} AND {})",
                self.cond(scopes, depth + 1),
                self.cond(scopes, depth + 1)
            ),
            5 => format!(
                "NOT ({} OR {})",
                self.cond(scopes, depth + 1),
                self.cond(scopes, depth + 1)
            ),
            6 => {
                let sub = self.simple_select(depth + 1, 1);
                format!("{} IN ({sub})", self.column(scopes))
            }
            7 => format!("EXISTS ({})", self.simple_select(depth + 1, 1)),
            _ => format!("{} IN (1, 2, 'x')", self.column(scopes)),
        }
    }

    fn alias(&mut self) -> String {
        self.next_alias += 1;
        format!("T{}", self.next_alias)
    }

    fn from(&mut self, depth: usize) -> (String, Vec<Scope>) {
        let n = self.rng.gen_range(1..=self.schema.tables.len().min(3));
        let picked: Vec<(String, Vec<String>)> = self.schema.tables.choose_multiple(self.rng, n).cloned().collect();
        let mut text = String::new();
        let mut scopes: Vec<Scope> = Vec::new();
        for (i, (table, cols)) in picked.into_iter().enumerate() {
            let alias = self.alias();
            let t = self.ident(&table);
            let factor = if depth < 2 && self.rng.gen_bool(0.1) {
                // A derived table exposing the columns by their own names.
                let inner_alias = self.alias();
                let list: Vec<String> = cols
                    .iter()
                    .map(|c| format!("{inner_alias}.{}", self.ident(c)))
                    .collect();
                format!("(SELECT {} FROM {t} AS {inner_alias}) AS {alias}", list.join(", "))
            } else if self.rng.gen_bool(0.8) {
                format!("{t} AS {alias}")
            } else {
                format!("{t} {alias}")
            };
            if i == 0 {
                text.push_str(&factor);
            } else {
                let join = ["JOIN", "INNER JOIN", "LEFT JOIN", "LEFT OUTER JOIN", "CROSS JOIN"]
                    .choose(self.rng)
                    .unwrap();
                text.push_str(&format!(" {join} {factor}"));
                if *join != "CROSS JOIN" {
                    let prev = scopes.choose(self.rng).unwrap();
                    let (pa, pc) = (prev.alias.clone(), prev.columns.choose(self.rng).unwrap().clone());
                    let c = cols.choose(self.rng).unwrap().clone();
                    text.push_str(&format!(" ON {pa}.{} = {alias}.{}", self.ident(&pc), self.ident(&c)));
                }
            }
            scopes.push(Scope { alias, columns: cols });
        }
        (text, scopes)
    }

    fn simple_select(&mut self, depth: usize, width: usize) -> String {
        let (from, scopes) = self.from(depth);
        let cols: Vec<String> = (0..width).map(|_| self.column(&scopes)).collect();
        let mut s = format!("SELECT {} FROM {from}", cols.join(", "));
        if self.rng.gen_bool(0.5) {
            s.push_str(&format!(" WHERE {}", self.cond(&scopes, depth + 1)));
        }
        s
    }

    /// Returns the select text and the output aliases it defines.
    fn select(&mut self, depth: usize, width: usize) -> (String, Vec<String>) {
        let (from, scopes) = self.from(depth);
        let mut items = Vec::new();
        let mut aliases = Vec::new();
        let grouped = self.rng.gen_bool(0.3);
        for i in 0..width {
            let e = if grouped && i == 0 {
                let f = ["COUNT", "SUM", "AVG", "MAX", "MIN"].choose(self.rng).unwrap();
                if *f == "COUNT" && self.rng.gen_bool(0.3) {
                    "COUNT(*)".to_string()
                } else if *f == "COUNT" && self.rng.gen_bool(0.3) {
                    format!("COUNT(DISTINCT {})", self.column(&scopes))
                } else {
                    format!("{f}({})", self.column(&scopes))
                }
            } else {
                self.expr(&scopes, depth + 1)
            };
            if self.rng.gen_bool(0.3) {
                let a = format!("out_{depth}_{i}");
                items.push(format!("{e} AS {a}"));
                aliases.push(a);
            } else {
                items.push(e);
            }
        }
        let distinct = if self.rng.gen_bool(0.15) { "DISTINCT " } else { "" };
        let mut s = format!("SELECT {distinct}{} FROM {from}", items.join(", "));
        if self.rng.gen_bool(0.6) {
            s.push_str(&format!(" WHERE {}", self.cond(&scopes, depth + 1)));
        }
        if grouped {
            s.push_str(&format!(" GROUP BY {}", self.column(&scopes)));
            if self.rng.gen_bool(0.5) {
                s.push_str(&format!(
                    " HAVING COUNT({}) > {}",
                    self.column(&scopes),
                    self.rng.gen_range(0..5)
                ));
            }
        }
        (s, aliases)
    }

    fn query(&mut self, depth: usize) -> String {
        let mut text = String::new();
        let width = self.rng.gen_range(1..=3);
        let use_cte = depth == 0 && self.rng.gen_bool(0.15);
        if use_cte {
            // The CTE re-exports one table's columns under their own names.
            let (table, cols) = self.schema.tables.choose(self.rng).unwrap().clone();
            let a = self.alias();
            let list: Vec<String> = cols.iter().map(|c| format!("{a}.{}", self.ident(c))).collect();
            let t = self.ident(&table);
            text.push_str(&format!("WITH w AS (SELECT {} FROM {t} AS {a}) ", list.join(", ")));
            let scopes = [Scope {
                alias: "w".into(),
                columns: cols,
            }];
            let c = self.column(&scopes);
            let cond = self.cond(&scopes, 2);
            text.push_str(&format!("SELECT {c} FROM w WHERE {cond}"));
            return text;
        }
        let (first, aliases) = self.select(depth, width);
        text.push_str(&first);
        if self.rng.gen_bool(0.2) {
            let op = ["UNION", "UNION ALL", "INTERSECT", "EXCEPT"].choose(self.rng).unwrap();
            let (second, _) = self.select(depth, width);
            text.push_str(&format!(" {op} {second}"));
            return text;
        }
        if self.rng.gen_bool(0.4) {
            let key = match aliases.first() {
                Some(a) if self.rng.gen_bool(0.5) => a.clone(),
                _ => "1".to_string(),
            };
            let dir = ["", " ASC", " DESC"].choose(self.rng).unwrap();
            text.push_str(&format!(" ORDER BY {key}{dir}"));
        }
        if self.rng.gen_bool(0.3) {
            text.push_str(&format!(" LIMIT {}", self.rng.gen_range(1..20)));
            if self.rng.gen_bool(0.3) {
                text.push_str(&format!(" OFFSET {}", self.rng.gen_range(0..5)));
            }
        }
        text
    }
}

/// String literal tokens of `sql`, in order.
pub fn string_literals(sql: &str) -> Vec<String> {
    schemaloc::sql::tokenize(sql)
        .expect("lexable")
        .into_iter()
        .filter_map(|t| match t.kind {
            schemaloc::sql::TokenKind::String(s) => Some(s),
            _ => None,
        })
        .collect()
}

/// Rewrites with the mapping, renders, re-parses, rewrites back with the
/// inverse, and checks that the original tree and all string literals come
/// back.
pub fn round_trip(sql: &str, mapping: &IdentifierMapping) -> Result<(), String> {
    use schemaloc::sql::{parse_sql, render_sql, rewrite_identifiers};
    let q0 = parse_sql(sql).map_err(|e| format!("generated query does not parse: {e}\n{sql}"))?;
    let inverse = mapping.invert().map_err(|e| e.to_string())?;
    let q1 = rewrite_identifiers(&q0, &mapping.index()).map_err(|e| format!("forward: {e}\n{sql}"))?;
    let t1 = render_sql(&q1);
    let q1b = parse_sql(&t1).map_err(|e| format!("rendered target does not parse: {e}\n{t1}"))?;
    if q1b != q1 {
        return Err(format!("render/parse changed the target tree\n{sql}\n{t1}"));
    }
    if string_literals(sql) != string_literals(&t1) {
        return Err(format!("literals changed\n{sql}\n{t1}"));
    }
    let q2 = rewrite_identifiers(&q1b, &inverse.index()).map_err(|e| format!("inverse: {e}\n{t1}"))?;
    if q2 != q0 {
        return Err(format!(
            "inverse did not restore the query\n{sql}\n{t1}\n{}",
            render_sql(&q2)
        ));
    }
    Ok(())
}
