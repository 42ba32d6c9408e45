//! Identifier substitution over a parsed query.

use std::collections::BTreeMap;

use super::ast::Query;
use super::lexer::{QuoteStyle, Span};
use super::resolve::{alias_definitions, visit_identifiers, IdentRole};

/// Source-to-target lookup for schema names. Lookups are ASCII
/// case-insensitive, matching SQLite's identifier resolution.
pub trait NameMap {
    fn table(&self, name: &str) -> Option<&str>;
    fn column(&self, name: &str) -> Option<&str>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentKind {
    Table,
    Column,
}

impl std::fmt::Display for IdentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            IdentKind::Table => "table",
            IdentKind::Column => "column",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unmapped {kind} identifier `{name}`")]
pub struct UnmappedIdentifier {
    pub kind: IdentKind,
    pub name: String,
}

/// Replaces every table and column name in `query` by its image under `map`.
/// Aliases, CTE names, function names and literals are left untouched. A
/// schema name without an image is an error.
pub fn rewrite_identifiers(query: &Query, map: &dyn NameMap) -> Result<Query, UnmappedIdentifier> {
    let aliases = alias_definitions(query);
    let is_alias = |name: &str| aliases.iter().any(|a| a.eq_ignore_ascii_case(name));
    let mut out = query.clone();
    visit_identifiers(&mut out, &|n| map.column(n).is_some(), &mut |id, cx| {
        let (kind, target) = match cx.role {
            IdentRole::TableName => (IdentKind::Table, map.table(&id.value)),
            IdentRole::ColumnName => (IdentKind::Column, map.column(&id.value)),
            _ => return Ok(()),
        };
        match target {
            Some(t) => {
                id.value = t.to_string();
                Ok(())
            }
            None if kind == IdentKind::Column && !cx.qualified && is_alias(&id.value) => Ok(()),
            // SQLite reads an unresolvable double-quoted name as a string.
            None if kind == IdentKind::Column && !cx.qualified && id.quote == QuoteStyle::Double => Ok(()),
            None => Err(UnmappedIdentifier {
                kind,
                name: id.value.clone(),
            }),
        }
    })?;
    Ok(out)
}

/// A schema reference found in a query.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, serde::Serialize)]
pub struct IdentifierOccurrence {
    pub kind: IdentKind,
    pub name: String,
    /// For columns: the table the reference is qualified with, resolved
    /// through aliases.
    pub table: Option<String>,
    /// Position of the first occurrence, when the query came from text.
    pub span: Option<Span>,
    /// Every occurrence is an unqualified double-quoted name, which SQLite
    /// reads as a string when no column has that name.
    pub double_quoted: bool,
}

/// The set of table and column references of `query`, deduplicated and
/// sorted. Aliases, CTE names and function names are excluded.
pub fn collect_identifiers(query: &Query) -> Vec<IdentifierOccurrence> {
    let aliases = alias_definitions(query);
    let is_alias = |name: &str| aliases.iter().any(|a| a.eq_ignore_ascii_case(name));
    // (kind, name, qualifier) -> (first span, double-quoted everywhere)
    type Key = (IdentKind, String, Option<String>);
    let mut seen: BTreeMap<Key, (Option<Span>, bool)> = BTreeMap::new();
    let mut q = query.clone();
    let _ = visit_identifiers::<()>(&mut q, &|_| false, &mut |id, cx| {
        let kind = match cx.role {
            IdentRole::TableName => IdentKind::Table,
            IdentRole::ColumnName if !cx.qualified && is_alias(&id.value) => return Ok(()),
            IdentRole::ColumnName => IdentKind::Column,
            _ => return Ok(()),
        };
        let dq = kind == IdentKind::Column && !cx.qualified && id.quote == QuoteStyle::Double;
        seen.entry((kind, id.value.clone(), cx.table.clone()))
            .and_modify(|e| e.1 &= dq)
            .or_insert((id.span, dq));
        Ok(())
    });
    seen.into_iter()
        .map(|((kind, name, table), (span, double_quoted))| IdentifierOccurrence {
            kind,
            name,
            table,
            span,
            double_quoted,
        })
        .collect()
}
