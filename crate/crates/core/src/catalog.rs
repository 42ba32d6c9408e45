//! Schema introspection of SQLite database files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnInfo {
    pub name: String,
    /// Declared type, verbatim; empty when none was declared.
    #[serde(rename = "type")]
    pub decl_type: String,
    pub pk: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableInfo {
    pub name: String,
    pub columns: Vec<ColumnInfo>,
}

impl TableInfo {
    pub fn column(&self, name: &str) -> Option<&ColumnInfo> {
        self.columns.iter().find(|c| c.name.eq_ignore_ascii_case(name))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ForeignKey {
    pub child_table: String,
    pub child_column: String,
    pub parent_table: String,
    pub parent_column: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewInfo {
    pub name: String,
    pub sql: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaCatalog {
    pub db_id: String,
    pub tables: Vec<TableInfo>,
    pub foreign_keys: Vec<ForeignKey>,
    #[serde(default)]
    pub views: Vec<ViewInfo>,
}

/// One schema name, in the order [`SchemaCatalog::identifier_sequence`]
/// emits them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SchemaIdent {
    Db(String),
    Table(String),
    Column { table: String, name: String },
}

impl SchemaIdent {
    pub fn name(&self) -> &str {
        match self {
            SchemaIdent::Db(n) | SchemaIdent::Table(n) | SchemaIdent::Column { name: n, .. } => n,
        }
    }
}

impl SchemaCatalog {
    /// Table lookup with SQLite's ASCII case folding.
    pub fn table(&self, name: &str) -> Option<&TableInfo> {
        self.tables.iter().find(|t| t.name.eq_ignore_ascii_case(name))
    }

    pub fn has_column(&self, table: &str, column: &str) -> bool {
        self.table(table).is_some_and(|t| t.column(column).is_some())
    }

    /// Whether any table has a column of this name.
    pub fn has_any_column(&self, column: &str) -> bool {
        self.tables.iter().any(|t| t.column(column).is_some())
    }

    /// The db id, then each table followed by its columns, in catalog order.
    pub fn identifier_sequence(&self) -> Vec<SchemaIdent> {
        let mut out = vec![SchemaIdent::Db(self.db_id.clone())];
        for t in &self.tables {
            out.push(SchemaIdent::Table(t.name.clone()));
            for c in &t.columns {
                out.push(SchemaIdent::Column {
                    table: t.name.clone(),
                    name: c.name.clone(),
                });
            }
        }
        out
    }

    /// Checks the structural invariants: unique names and resolvable
    /// foreign-key endpoints.
    pub fn validate(&self) -> Result<(), String> {
        for (i, t) in self.tables.iter().enumerate() {
            if t.name.is_empty() {
                return Err("empty table name".into());
            }
            if self.tables[..i].iter().any(|u| u.name.eq_ignore_ascii_case(&t.name)) {
                return Err(format!("duplicate table {}", t.name));
            }
            for (j, c) in t.columns.iter().enumerate() {
                if t.columns[..j].iter().any(|d| d.name.eq_ignore_ascii_case(&c.name)) {
                    return Err(format!("duplicate column {}.{}", t.name, c.name));
                }
            }
        }
        for fk in &self.foreign_keys {
            if !self.has_column(&fk.child_table, &fk.child_column)
                || !self.has_column(&fk.parent_table, &fk.parent_column)
            {
                return Err(format!("dangling foreign key {fk:?}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("cannot read database file {0}")]
    FileNotReadable(PathBuf),
    #[error("corrupt database {path}: {reason}")]
    CorruptDatabase { path: PathBuf, reason: String },
    #[error("database {0} has no user tables")]
    EmptySchema(PathBuf),
}

/// Finds `<db_id>.sqlite` under `db_dir`, either in a `<db_id>/` sub-directory
/// or directly.
pub fn locate_database(db_dir: &Path, db_id: &str) -> Option<PathBuf> {
    [
        db_dir.join(db_id).join(format!("{db_id}.sqlite")),
        db_dir.join(format!("{db_id}.sqlite")),
    ]
    .into_iter()
    .find(|p| p.is_file())
}

/// All databases under `db_dir`, as `(db_id, path)` sorted by id.
pub fn discover_databases(db_dir: &Path) -> std::io::Result<Vec<(String, PathBuf)>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(db_dir)? {
        let path = entry?.path();
        if path.is_dir() {
            if let Some(id) = path.file_name().and_then(|n| n.to_str()) {
                let file = path.join(format!("{id}.sqlite"));
                if file.is_file() {
                    out.insert(id.to_string(), file);
                }
            }
        } else if path.extension().is_some_and(|e| e == "sqlite") {
            if let Some(id) = path.file_stem().and_then(|n| n.to_str()) {
                out.entry(id.to_string()).or_insert(path.clone());
            }
        }
    }
    Ok(out.into_iter().collect())
}

/// Reads the optional `database_description/*.csv` files next to a database,
/// keyed by file name. Their content is passed on as opaque text.
pub fn load_descriptions(db_file: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let Some(dir) = db_file.parent().map(|d| d.join("database_description")) else {
        return out;
    };
    let Ok(entries) = std::fs::read_dir(&dir) else {
        return out;
    };
    for entry in entries.flatten() {
        let path = entry.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            if let (Some(name), Ok(bytes)) = (path.file_name().and_then(|n| n.to_str()), std::fs::read(&path)) {
                out.insert(name.to_string(), String::from_utf8_lossy(&bytes).into_owned());
            }
        }
    }
    out
}

#[cfg(feature = "sqlite")]
pub use self::sqlite::extract_catalog;

#[cfg(feature = "sqlite")]
mod sqlite {
    use super::*;
    use rusqlite::{Connection, OpenFlags};

    pub(crate) fn open_read_only(path: &Path) -> Result<Connection, CatalogError> {
        if std::fs::File::open(path).is_err() || !path.is_file() {
            return Err(CatalogError::FileNotReadable(path.to_path_buf()));
        }
        Connection::open_with_flags(path, OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX).map_err(
            |e| CatalogError::CorruptDatabase {
                path: path.to_path_buf(),
                reason: e.to_string(),
            },
        )
    }

    /// Reads the schema of the SQLite file at `db_file`. The db id is the file
    /// stem.
    pub fn extract_catalog(db_file: &Path) -> Result<SchemaCatalog, CatalogError> {
        let conn = open_read_only(db_file)?;
        let corrupt = |e: rusqlite::Error| CatalogError::CorruptDatabase {
            path: db_file.to_path_buf(),
            reason: e.to_string(),
        };
        let db_id = db_file
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();

        let mut stmt = conn
            .prepare(
                "SELECT type, name, sql FROM sqlite_master \
                 WHERE type IN ('table', 'view') AND name NOT LIKE 'sqlite\\_%' ESCAPE '\\' \
                 ORDER BY rowid",
            )
            .map_err(corrupt)?;
        let entries: Vec<(String, String, Option<String>)> = stmt
            .query_map([], |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?)))
            .map_err(corrupt)?
            .collect::<Result<_, _>>()
            .map_err(corrupt)?;

        let mut tables = Vec::new();
        let mut views = Vec::new();
        // pk ordinal per (table, column), used to resolve implicit FK targets.
        let mut pk_order: Vec<Vec<(i64, String)>> = Vec::new();
        let mut col_stmt = conn
            .prepare("SELECT name, type, pk FROM pragma_table_info(?1) ORDER BY cid")
            .map_err(corrupt)?;
        for (kind, name, sql) in entries {
            if kind == "view" {
                views.push(ViewInfo {
                    name,
                    sql: sql.unwrap_or_default(),
                });
                continue;
            }
            let cols: Vec<(String, String, i64)> = col_stmt
                .query_map([&name], |r| {
                    Ok((r.get(0)?, r.get::<_, Option<String>>(1)?.unwrap_or_default(), r.get(2)?))
                })
                .map_err(corrupt)?
                .collect::<Result<_, _>>()
                .map_err(corrupt)?;
            let mut pks: Vec<(i64, String)> = cols.iter().filter(|c| c.2 > 0).map(|c| (c.2, c.0.clone())).collect();
            pks.sort();
            pk_order.push(pks);
            tables.push(TableInfo {
                name,
                columns: cols
                    .into_iter()
                    .map(|(name, decl_type, pk)| ColumnInfo {
                        name,
                        decl_type,
                        pk: pk > 0,
                    })
                    .collect(),
            });
        }
        if tables.is_empty() {
            return Err(CatalogError::EmptySchema(db_file.to_path_buf()));
        }

        let mut fk_stmt = conn
            .prepare("SELECT \"table\", \"from\", \"to\", seq FROM pragma_foreign_key_list(?1) ORDER BY id, seq")
            .map_err(corrupt)?;
        let mut foreign_keys = Vec::new();
        for table in &tables {
            let rows: Vec<(String, String, Option<String>, usize)> = fk_stmt
                .query_map([&table.name], |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?)))
                .map_err(corrupt)?
                .collect::<Result<_, _>>()
                .map_err(corrupt)?;
            for (parent, from, to, seq) in rows {
                let Some(pi) = tables.iter().position(|t| t.name.eq_ignore_ascii_case(&parent)) else {
                    log::warn!(
                        "{db_id}: foreign key {}.{from} references missing table {parent}",
                        table.name
                    );
                    continue;
                };
                let parent_info = &tables[pi];
                let to = match to {
                    Some(t) => Some(t),
                    None => pk_order[pi].get(seq).map(|(_, n)| n.clone()),
                };
                let child_col = table.column(&from);
                let parent_col = to.as_deref().and_then(|t| parent_info.column(t));
                match (child_col, parent_col) {
                    (Some(c), Some(p)) => foreign_keys.push(ForeignKey {
                        child_table: table.name.clone(),
                        child_column: c.name.clone(),
                        parent_table: parent_info.name.clone(),
                        parent_column: p.name.clone(),
                    }),
                    _ => log::warn!(
                        "{db_id}: dropping foreign key {}.{from} -> {parent}.{}",
                        table.name,
                        to.as_deref().unwrap_or("?")
                    ),
                }
            }
        }

        Ok(SchemaCatalog {
            db_id,
            tables,
            foreign_keys,
            views,
        })
    }
}

#[cfg(feature = "sqlite")]
pub(crate) use self::sqlite::open_read_only;

#[cfg(test)]
mod tests {
    use super::*;

    fn users() -> SchemaCatalog {
        SchemaCatalog {
            db_id: "app".into(),
            tables: vec![TableInfo {
                name: "Users".into(),
                columns: vec![
                    ColumnInfo {
                        name: "id".into(),
                        decl_type: "INTEGER".into(),
                        pk: true,
                    },
                    ColumnInfo {
                        name: "age".into(),
                        decl_type: String::new(),
                        pk: false,
                    },
                ],
            }],
            foreign_keys: vec![],
            views: vec![],
        }
    }

    #[test]
    fn sequence_order() {
        let names: Vec<_> = users()
            .identifier_sequence()
            .iter()
            .map(|s| s.name().to_string())
            .collect();
        assert_eq!(names, ["app", "Users", "id", "age"]);
    }

    #[test]
    fn json_shape() {
        let v = serde_json::to_value(users()).unwrap();
        assert_eq!(v["tables"][0]["columns"][0]["type"], "INTEGER");
        assert_eq!(v["tables"][0]["columns"][0]["pk"], true);
        assert!(v["views"].as_array().unwrap().is_empty());
    }

    #[cfg(feature = "sqlite")]
    #[test]
    fn extracts_tables_and_foreign_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("shop.sqlite");
        let conn = rusqlite::Connection::open(&path).unwrap();
        conn.execute_batch(
            "CREATE TABLE parent(id INTEGER PRIMARY KEY, name TEXT);
             CREATE TABLE child(cid INTEGER, uid INTEGER REFERENCES parent, \"Free Meal\" REAL,
                                FOREIGN KEY (uid) REFERENCES parent(id));
             CREATE VIEW v AS SELECT name FROM parent;",
        )
        .unwrap();
        drop(conn);
        let cat = extract_catalog(&path).unwrap();
        assert_eq!(cat.db_id, "shop");
        assert_eq!(cat.tables.len(), 2);
        assert_eq!(cat.tables[1].columns[2].name, "Free Meal");
        assert_eq!(cat.views[0].name, "v");
        assert!(cat
            .foreign_keys
            .iter()
            .all(|fk| fk.parent_column == "id" && fk.child_column == "uid"));
        cat.validate().unwrap();
    }

    #[cfg(feature = "sqlite")]
    #[test]
    fn errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            extract_catalog(&dir.path().join("missing.sqlite")),
            Err(CatalogError::FileNotReadable(_))
        ));
        let junk = dir.path().join("junk.sqlite");
        std::fs::write(&junk, b"this is not a database file at all, not even close......").unwrap();
        assert!(matches!(
            extract_catalog(&junk),
            Err(CatalogError::CorruptDatabase { .. })
        ));
        let empty = dir.path().join("empty.sqlite");
        rusqlite::Connection::open(&empty)
            .unwrap()
            .execute_batch("CREATE TABLE t(x); DROP TABLE t;")
            .unwrap();
        assert!(matches!(extract_catalog(&empty), Err(CatalogError::EmptySchema(_))));
    }
}
