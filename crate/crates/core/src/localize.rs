//! Renaming the schema of a database copy so localized SQL runs against it.

use std::path::{Path, PathBuf};

use rusqlite::Connection;
use serde::{Deserialize, Serialize};

use crate::catalog::{extract_catalog, open_read_only, CatalogError, SchemaCatalog};
use crate::mapping::{ColumnMapping, IdentifierMapping, MappingError, Scope, TableMapping};
use crate::sql::{parse_create_view, quote_ddl, render_create_view, rewrite_identifiers, Dialect};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rename {
    pub scope: Scope,
    /// Source table of a renamed column.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub table: Option<String>,
    pub source: String,
    pub target: String,
}

/// What [`localize_database`] did; serialized as the rename manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalizedDbArtifact {
    pub source: PathBuf,
    pub target: PathBuf,
    pub renames: Vec<Rename>,
    pub views: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum LocalizeError {
    #[error("output {0} already exists")]
    OutputExists(PathBuf),
    #[error("mapping incomplete: {0}")]
    MappingIncomplete(String),
    #[error("rename failed: {0}")]
    RenameFailure(String),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<rusqlite::Error> for LocalizeError {
    fn from(e: rusqlite::Error) -> Self {
        LocalizeError::RenameFailure(e.to_string())
    }
}

/// Copies `db_file` to `out_file` with every table and column renamed per
/// `mapping`. Cell values, indexes and constraints are kept; views are
/// re-created over the new names. On error no output file is left behind.
pub fn localize_database(
    db_file: &Path,
    mapping: &IdentifierMapping,
    out_file: &Path,
) -> Result<LocalizedDbArtifact, LocalizeError> {
    if out_file.exists() {
        return Err(LocalizeError::OutputExists(out_file.to_path_buf()));
    }
    let catalog = extract_catalog(db_file)?;
    mapping.check_covers(&catalog).map_err(|e| match e {
        MappingError::Incomplete(m) => LocalizeError::MappingIncomplete(m),
        other => LocalizeError::MappingIncomplete(other.to_string()),
    })?;
    let source_fk_violations = {
        let conn = open_read_only(db_file)?;
        foreign_key_violations(&conn)?
    };

    let dir = out_file
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = tempfile::Builder::new()
        .prefix(".localize-")
        .suffix(".sqlite")
        .tempfile_in(dir)?;
    std::fs::copy(db_file, tmp.path())?;

    let mut renames = Vec::new();
    let mut views = Vec::new();
    {
        let mut conn = Connection::open(tmp.path())?;
        conn.pragma_update(None, "foreign_keys", false)?;
        let tx = conn.transaction()?;
        for view in &catalog.views {
            tx.execute_batch(&format!("DROP VIEW {}", quote_ddl(&view.name)))?;
        }

        let mut counter = 0usize;
        let mut fresh = |taken: &dyn Fn(&str) -> bool| loop {
            counter += 1;
            let name = format!("__schemaloc_tmp_{counter}");
            if !taken(&name) {
                break name;
            }
        };

        for (table, tm) in catalog.tables.iter().zip(ordered(&catalog, mapping)) {
            let changed: Vec<_> = tm.columns.iter().filter(|c| c.source != c.target).collect();
            let mut staged = Vec::new();
            for c in &changed {
                let tmp_name = fresh(&|n| table.column(n).is_some());
                tx.execute_batch(&format!(
                    "ALTER TABLE {} RENAME COLUMN {} TO {}",
                    quote_ddl(&table.name),
                    quote_ddl(&c.source),
                    quote_ddl(&tmp_name)
                ))?;
                staged.push((tmp_name, *c));
            }
            for (tmp_name, c) in staged {
                tx.execute_batch(&format!(
                    "ALTER TABLE {} RENAME COLUMN {} TO {}",
                    quote_ddl(&table.name),
                    quote_ddl(&tmp_name),
                    quote_ddl(&c.target)
                ))?;
                renames.push(Rename {
                    scope: Scope::Column,
                    table: Some(table.name.clone()),
                    source: c.source.clone(),
                    target: c.target.clone(),
                });
            }
        }

        let mut staged = Vec::new();
        for tm in ordered(&catalog, mapping).into_iter().filter(|t| t.source != t.target) {
            let tmp_name = fresh(&|n| catalog.table(n).is_some());
            tx.execute_batch(&format!(
                "ALTER TABLE {} RENAME TO {}",
                quote_ddl(&tm.source),
                quote_ddl(&tmp_name)
            ))?;
            staged.push((tmp_name, tm));
        }
        for (tmp_name, tm) in staged {
            tx.execute_batch(&format!(
                "ALTER TABLE {} RENAME TO {}",
                quote_ddl(&tmp_name),
                quote_ddl(&tm.target)
            ))?;
            renames.push(Rename {
                scope: Scope::Table,
                table: None,
                source: tm.source.clone(),
                target: tm.target.clone(),
            });
        }

        let index = mapping.index();
        let dialect = Dialect::default();
        for view in &catalog.views {
            let mut parsed = parse_create_view(&view.sql, &dialect)
                .map_err(|e| LocalizeError::RenameFailure(format!("view {}: {e}", view.name)))?;
            parsed.query = rewrite_identifiers(&parsed.query, &index)
                .map_err(|e| LocalizeError::RenameFailure(format!("view {}: {e}", view.name)))?;
            tx.execute_batch(&render_create_view(&parsed))?;
            views.push(view.name.clone());
        }
        tx.commit()?;

        let integrity: String = conn.query_row("PRAGMA integrity_check", [], |r| r.get(0))?;
        if integrity != "ok" {
            return Err(LocalizeError::RenameFailure(format!("integrity check: {integrity}")));
        }
        let after = foreign_key_violations(&conn)?;
        if after != source_fk_violations {
            return Err(LocalizeError::RenameFailure(format!(
                "foreign key violations changed from {source_fk_violations} to {after}"
            )));
        }
        conn.pragma_update(None, "foreign_keys", true)?;
        conn.close().map_err(|(_, e)| LocalizeError::from(e))?;
    }

    tmp.persist_noclobber(out_file).map_err(|e| match e.error.kind() {
        std::io::ErrorKind::AlreadyExists => LocalizeError::OutputExists(out_file.to_path_buf()),
        _ => LocalizeError::Io(e.error),
    })?;
    Ok(LocalizedDbArtifact {
        source: db_file.to_path_buf(),
        target: out_file.to_path_buf(),
        renames,
        views,
    })
}

/// Mapping entries in catalog order. Coverage has been checked.
fn ordered(catalog: &SchemaCatalog, mapping: &IdentifierMapping) -> Vec<TableMapping> {
    catalog
        .tables
        .iter()
        .map(|t| {
            let tm = mapping
                .tables
                .iter()
                .find(|m| m.source.eq_ignore_ascii_case(&t.name))
                .expect("coverage checked");
            let columns = t
                .columns
                .iter()
                .map(|c| {
                    let mc = tm
                        .columns
                        .iter()
                        .find(|m| m.source.eq_ignore_ascii_case(&c.name))
                        .expect("coverage checked");
                    ColumnMapping {
                        source: c.name.clone(),
                        target: mc.target.clone(),
                    }
                })
                .collect();
            TableMapping {
                source: t.name.clone(),
                target: tm.target.clone(),
                columns,
            }
        })
        .collect()
}

fn foreign_key_violations(conn: &Connection) -> Result<usize, rusqlite::Error> {
    let mut stmt = conn.prepare("PRAGMA foreign_key_check")?;
    let mut rows = stmt.query([])?;
    let mut n = 0;
    while rows.next()?.is_some() {
        n += 1;
    }
    Ok(n)
}
