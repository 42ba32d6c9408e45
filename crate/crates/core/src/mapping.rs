//! Construction, collision resolution, persistence and inversion of the
//! per-database identifier mapping.
//!
//! A column's target depends only on the column name: a name shared by
//! several tables gets the same target everywhere. Uniqueness is therefore
//! enforced between distinct table names and between distinct column names
//! of one database.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use unicode_normalization::char::decompose_canonical;

use crate::catalog::SchemaCatalog;
use crate::ports::{PortError, SchemaPackage, TranslatorPort};
use crate::sql::{parse_sql, render_sql, rewrite_identifiers, NameMap, SqlError, UnmappedIdentifier};

/// Abbreviations kept as they are when they form a whole identifier.
pub const ABBREVIATIONS: &[&str] = &["api", "http", "https", "id", "ip", "json", "sql", "url", "uuid", "xml"];

const MAX_SUFFIX_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MappingError {
    #[error("identifier {0:?} is empty after normalization")]
    EmptyIdentifier(String),
    #[error("translator unavailable: {0}")]
    TranslatorUnavailable(String),
    #[error("malformed translator reply: {0}")]
    MalformedTranslatorReply(String),
    #[error("cannot find a free suffix for {scope} target {target}")]
    UnresolvableCollision { scope: Scope, target: String },
    #[error("{scope} target {target} is shared by {sources:?}")]
    NotInjective {
        scope: Scope,
        target: String,
        sources: Vec<String>,
    },
    #[error("column {0} has different targets in different tables")]
    InconsistentColumn(String),
    #[error("mapping does not match the schema: {0}")]
    Incomplete(String),
    #[error("invalid mapping file: {0}")]
    InvalidFile(String),
}

impl From<PortError> for MappingError {
    fn from(e: PortError) -> Self {
        MappingError::TranslatorUnavailable(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Table,
    Column,
}

impl std::fmt::Display for Scope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scope::Table => "table",
            Scope::Column => "column",
        })
    }
}

/// Folds `raw` to ASCII lower-case snake_case.
///
/// Turkish letters are transliterated explicitly; other accented letters
/// lose their diacritics; any other character acts as a separator.
pub fn normalize_identifier(raw: &str) -> Result<String, MappingError> {
    let mut folded = String::with_capacity(raw.len());
    for ch in raw.trim().chars() {
        match ch {
            'ç' | 'Ç' => folded.push('c'),
            'ğ' | 'Ğ' => folded.push('g'),
            'ı' | 'İ' => folded.push('i'),
            'ö' | 'Ö' => folded.push('o'),
            'ş' | 'Ş' => folded.push('s'),
            'ü' | 'Ü' => folded.push('u'),
            c if c.is_ascii() => folded.push(c.to_ascii_lowercase()),
            c => {
                let mut any = false;
                decompose_canonical(c, |d| {
                    if d.is_ascii_alphanumeric() {
                        folded.push(d.to_ascii_lowercase());
                        any = true;
                    }
                });
                if !any {
                    folded.push(' ');
                }
            }
        }
    }
    let mut out = String::with_capacity(folded.len());
    let mut gap = false;
    for c in folded.chars() {
        if c.is_ascii_lowercase() || c.is_ascii_digit() {
            if gap && !out.is_empty() {
                out.push('_');
            }
            gap = false;
            out.push(c);
        } else {
            gap = true;
        }
    }
    if out.is_empty() {
        return Err(MappingError::EmptyIdentifier(raw.to_string()));
    }
    if out.starts_with(|c: char| c.is_ascii_digit()) {
        out.insert_str(0, "c_");
    }
    Ok(out)
}

/// Whether `s` is a valid target: `[a-z][a-z0-9_]*`.
pub fn is_valid_target(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub source: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableMapping {
    pub source: String,
    pub target: String,
    pub columns: Vec<ColumnMapping>,
}

/// The mapping of one database: db id, then every table and column in
/// catalog order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentifierMapping {
    pub db_id_src: String,
    pub db_id_tgt: String,
    pub tables: Vec<TableMapping>,
}

/// Sub-term translations that recur across identifiers of a run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TermMemory(pub BTreeMap<String, String>);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Collision {
    pub scope: Scope,
    pub target: String,
    /// Colliding sources, in the order suffixes were assigned.
    pub sources: Vec<String>,
    pub assigned: Vec<String>,
}

impl IdentifierMapping {
    /// Case-insensitive lookup tables for rewriting.
    pub fn index(&self) -> MappingIndex {
        let mut idx = MappingIndex::default();
        for t in &self.tables {
            idx.tables
                .entry(t.source.to_ascii_lowercase())
                .or_insert_with(|| t.target.clone());
            for c in &t.columns {
                idx.columns
                    .entry(c.source.to_ascii_lowercase())
                    .or_insert_with(|| c.target.clone());
            }
        }
        idx
    }

    pub fn table_target(&self, source: &str) -> Option<&str> {
        self.tables
            .iter()
            .find(|t| t.source.eq_ignore_ascii_case(source))
            .map(|t| t.target.as_str())
    }

    /// Distinct column names (first spelling) with their targets.
    fn column_classes(&self) -> Result<Vec<(String, String)>, MappingError> {
        let mut seen: IndexMap<String, (String, String)> = IndexMap::new();
        for t in &self.tables {
            for c in &t.columns {
                let key = c.source.to_ascii_lowercase();
                match seen.get(&key) {
                    Some((_, target)) if *target != c.target => {
                        return Err(MappingError::InconsistentColumn(c.source.clone()))
                    }
                    Some(_) => {}
                    None => {
                        seen.insert(key, (c.source.clone(), c.target.clone()));
                    }
                }
            }
        }
        Ok(seen.into_values().collect())
    }

    /// Checks injectivity within each scope class.
    pub fn check_injective(&self) -> Result<(), MappingError> {
        let tables: Vec<(String, String)> = self
            .tables
            .iter()
            .map(|t| (t.source.clone(), t.target.clone()))
            .collect();
        for (scope, pairs) in [(Scope::Table, tables), (Scope::Column, self.column_classes()?)] {
            let mut by_target: BTreeMap<String, Vec<String>> = BTreeMap::new();
            for (s, t) in pairs {
                by_target.entry(t.to_ascii_lowercase()).or_default().push(s);
            }
            if let Some((target, sources)) = by_target.into_iter().find(|(_, s)| s.len() > 1) {
                return Err(MappingError::NotInjective { scope, target, sources });
            }
        }
        Ok(())
    }

    /// The inverse mapping, from targets back to sources.
    pub fn invert(&self) -> Result<IdentifierMapping, MappingError> {
        self.check_injective()?;
        Ok(IdentifierMapping {
            db_id_src: self.db_id_tgt.clone(),
            db_id_tgt: self.db_id_src.clone(),
            tables: self
                .tables
                .iter()
                .map(|t| TableMapping {
                    source: t.target.clone(),
                    target: t.source.clone(),
                    columns: t
                        .columns
                        .iter()
                        .map(|c| ColumnMapping {
                            source: c.target.clone(),
                            target: c.source.clone(),
                        })
                        .collect(),
                })
                .collect(),
        })
    }

    /// Checks that the mapping has exactly one entry per table and column of
    /// `catalog`.
    pub fn check_covers(&self, catalog: &SchemaCatalog) -> Result<(), MappingError> {
        let err = |m: String| Err(MappingError::Incomplete(m));
        if self.tables.len() != catalog.tables.len() {
            return err(format!(
                "{} tables in mapping, {} in schema",
                self.tables.len(),
                catalog.tables.len()
            ));
        }
        for t in &catalog.tables {
            let Some(m) = self.tables.iter().find(|m| m.source.eq_ignore_ascii_case(&t.name)) else {
                return err(format!("table {} is not mapped", t.name));
            };
            if m.columns.len() != t.columns.len() {
                return err(format!(
                    "table {} has {} mapped columns, expected {}",
                    t.name,
                    m.columns.len(),
                    t.columns.len()
                ));
            }
            for c in &t.columns {
                if !m.columns.iter().any(|mc| mc.source.eq_ignore_ascii_case(&c.name)) {
                    return err(format!("column {}.{} is not mapped", t.name, c.name));
                }
            }
        }
        Ok(())
    }

    /// Parses `sql`, renames its tables and columns and renders the result.
    pub fn rewrite_sql(&self, sql: &str) -> Result<String, SqlRewriteError> {
        let query = parse_sql(sql)?;
        Ok(render_sql(&rewrite_identifiers(&query, &self.index())?))
    }

    /// Identity mapping of a catalog, mostly useful in tests.
    pub fn identity(catalog: &SchemaCatalog) -> IdentifierMapping {
        IdentifierMapping {
            db_id_src: catalog.db_id.clone(),
            db_id_tgt: catalog.db_id.clone(),
            tables: catalog
                .tables
                .iter()
                .map(|t| TableMapping {
                    source: t.name.clone(),
                    target: t.name.clone(),
                    columns: t
                        .columns
                        .iter()
                        .map(|c| ColumnMapping {
                            source: c.name.clone(),
                            target: c.name.clone(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SqlRewriteError {
    #[error(transparent)]
    Parse(#[from] SqlError),
    #[error(transparent)]
    Unmapped(#[from] UnmappedIdentifier),
}

/// Case-insensitive name lookup built from an [`IdentifierMapping`].
#[derive(Debug, Clone, Default)]
pub struct MappingIndex {
    tables: HashMap<String, String>,
    columns: HashMap<String, String>,
}

impl NameMap for MappingIndex {
    fn table(&self, name: &str) -> Option<&str> {
        self.tables.get(&name.to_ascii_lowercase()).map(String::as_str)
    }

    fn column(&self, name: &str) -> Option<&str> {
        self.columns.get(&name.to_ascii_lowercase()).map(String::as_str)
    }
}

/// A validated schema-mapping reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaReply {
    pub db_id_tr: String,
    pub translations: IndexMap<String, String>,
}

/// Parses a schema-mapping reply: a JSON object with exactly the keys
/// `db_id_tr` (string) and `translations` (object of strings).
pub fn parse_schema_reply(raw: &str) -> Result<SchemaReply, MappingError> {
    let bad = |m: &str| MappingError::MalformedTranslatorReply(m.to_string());
    let value: Value = serde_json::from_str(raw.trim()).map_err(|e| bad(&format!("not JSON: {e}")))?;
    let obj = value.as_object().ok_or_else(|| bad("reply is not an object"))?;
    if let Some(extra) = obj.keys().find(|k| *k != "db_id_tr" && *k != "translations") {
        return Err(bad(&format!("unexpected key {extra:?}")));
    }
    let db_id_tr = obj
        .get("db_id_tr")
        .ok_or_else(|| bad("missing key \"db_id_tr\""))?
        .as_str()
        .ok_or_else(|| bad("\"db_id_tr\" is not a string"))?
        .to_string();
    let translations = obj
        .get("translations")
        .ok_or_else(|| bad("missing key \"translations\""))?
        .as_object()
        .ok_or_else(|| bad("\"translations\" is not an object"))?
        .iter()
        .map(|(k, v)| match v.as_str() {
            Some(s) => Ok((k.clone(), s.to_string())),
            None => Err(bad(&format!("translation of {k:?} is not a string"))),
        })
        .collect::<Result<_, _>>()?;
    Ok(SchemaReply { db_id_tr, translations })
}

fn reply_lookup<'a>(reply: &'a SchemaReply, key: &str) -> Option<&'a str> {
    reply
        .translations
        .get(key)
        .or_else(|| {
            reply
                .translations
                .iter()
                .find(|(k, _)| k.eq_ignore_ascii_case(key))
                .map(|(_, v)| v)
        })
        .map(String::as_str)
}

/// Builds the mapping of `catalog` with a fresh term memory. Collisions are
/// not resolved yet; see [`resolve_collisions`].
pub fn build_mapping(
    catalog: &SchemaCatalog,
    translator: &dyn TranslatorPort,
) -> Result<IdentifierMapping, MappingError> {
    build_mapping_with(catalog, translator, BTreeMap::new(), &mut TermMemory::default())
}

/// Builds the mapping of `catalog`, sharing `memory` with earlier databases
/// of the same run.
pub fn build_mapping_with(
    catalog: &SchemaCatalog,
    translator: &dyn TranslatorPort,
    descriptions: BTreeMap<String, String>,
    memory: &mut TermMemory,
) -> Result<IdentifierMapping, MappingError> {
    let package = SchemaPackage::new(catalog, descriptions);
    let reply = parse_schema_reply(&translator.map_schema(&package)?)?;

    // Per identifier: normalized source, and the translator's candidate.
    struct Slot {
        source_norm: String,
        candidate: Option<String>,
    }
    let slot = |source: &str, keys: &[&str]| -> Result<Slot, MappingError> {
        let source_norm = normalize_identifier(source)?;
        let candidate = if ABBREVIATIONS.contains(&source_norm.as_str()) {
            Some(source_norm.clone())
        } else {
            keys.iter()
                .find_map(|k| reply_lookup(&reply, k))
                .and_then(|t| normalize_identifier(t).ok())
        };
        Ok(Slot { source_norm, candidate })
    };

    let mut slots: Vec<(Slot, Vec<Slot>)> = Vec::new();
    for t in &catalog.tables {
        let table_slot = slot(&t.name, &[&t.name])?;
        let cols = t
            .columns
            .iter()
            .map(|c| slot(&c.name, &[&format!("{}.{}", t.name, c.name), &c.name]))
            .collect::<Result<Vec<_>, _>>()?;
        slots.push((table_slot, cols));
    }

    for s in slots.iter().flat_map(|(t, cs)| std::iter::once(t).chain(cs)) {
        if let (false, Some(c)) = (s.source_norm.contains('_'), &s.candidate) {
            memory.0.entry(s.source_norm.clone()).or_insert_with(|| c.clone());
        }
    }

    let assign = |s: &Slot| -> Result<String, MappingError> {
        if !s.source_norm.contains('_') {
            if let Some(m) = memory.0.get(&s.source_norm) {
                return Ok(m.clone());
            }
        }
        if let Some(c) = &s.candidate {
            return Ok(c.clone());
        }
        let composed: Vec<&str> = s
            .source_norm
            .split('_')
            .map(|part| memory.0.get(part).map(String::as_str).unwrap_or(part))
            .collect();
        normalize_identifier(&composed.join("_"))
    };

    let mut column_targets: HashMap<String, String> = HashMap::new();
    let mut tables = Vec::with_capacity(catalog.tables.len());
    for (t, (table_slot, col_slots)) in catalog.tables.iter().zip(&slots) {
        let mut columns = Vec::with_capacity(t.columns.len());
        for (c, s) in t.columns.iter().zip(col_slots) {
            let key = c.name.to_ascii_lowercase();
            let target = match column_targets.get(&key) {
                Some(existing) => existing.clone(),
                None => {
                    let target = assign(s)?;
                    column_targets.insert(key, target.clone());
                    target
                }
            };
            columns.push(ColumnMapping {
                source: c.name.clone(),
                target,
            });
        }
        tables.push(TableMapping {
            source: t.name.clone(),
            target: assign(table_slot)?,
            columns,
        });
    }

    let db_id_tgt = match normalize_identifier(&reply.db_id_tr) {
        Ok(id) => id,
        Err(_) => normalize_identifier(&catalog.db_id)?,
    };
    Ok(IdentifierMapping {
        db_id_src: catalog.db_id.clone(),
        db_id_tgt,
        tables,
    })
}

/// Makes targets unique within each scope class. Among sources sharing a
/// target, the lexicographically smallest keeps it and the others receive
/// `_2`, `_3`, ... in source order, skipping targets already in use.
pub fn resolve_collisions(mapping: &IdentifierMapping) -> Result<(IdentifierMapping, Vec<Collision>), MappingError> {
    let mut out = mapping.clone();
    let mut report = Vec::new();

    let tables: Vec<(String, String)> = mapping
        .tables
        .iter()
        .map(|t| (t.source.clone(), t.target.clone()))
        .collect();
    let table_renames = resolve_class(Scope::Table, &tables, &mut report)?;
    let column_renames = resolve_class(Scope::Column, &mapping.column_classes()?, &mut report)?;

    for t in &mut out.tables {
        if let Some(new) = table_renames.get(&t.source) {
            t.target = new.clone();
        }
        for c in &mut t.columns {
            if let Some(new) = column_renames.get(&c.source.to_ascii_lowercase()) {
                c.target = new.clone();
            }
        }
    }
    Ok((out, report))
}

/// Returns new targets keyed by source (tables) or lower-cased source
/// (columns).
fn resolve_class(
    scope: Scope,
    pairs: &[(String, String)],
    report: &mut Vec<Collision>,
) -> Result<HashMap<String, String>, MappingError> {
    let mut taken: BTreeSet<String> = pairs.iter().map(|(_, t)| t.clone()).collect();
    let mut groups: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (s, t) in pairs {
        groups.entry(t).or_default().push(s);
    }
    let mut renames = HashMap::new();
    for (target, mut sources) in groups {
        if sources.len() < 2 {
            continue;
        }
        sources.sort_unstable();
        let mut assigned = vec![target.to_string()];
        let mut k = 2;
        for source in &sources[1..] {
            let mut attempts = 0;
            let fresh = loop {
                let candidate = format!("{target}_{k}");
                k += 1;
                attempts += 1;
                if !taken.contains(&candidate) {
                    break candidate;
                }
                if attempts >= MAX_SUFFIX_ATTEMPTS {
                    return Err(MappingError::UnresolvableCollision {
                        scope,
                        target: target.to_string(),
                    });
                }
            };
            taken.insert(fresh.clone());
            let key = match scope {
                Scope::Table => source.to_string(),
                Scope::Column => source.to_ascii_lowercase(),
            };
            renames.insert(key, fresh.clone());
            assigned.push(fresh);
        }
        report.push(Collision {
            scope,
            target: target.to_string(),
            sources: sources.iter().map(|s| s.to_string()).collect(),
            assigned,
        });
    }
    Ok(renames)
}

/// On-disk form of a mapping: the translator's reply format (tables keyed by
/// name, columns by `table.column`) plus the collision report and the term
/// memory in force when it was built.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingFile {
    pub db_id: String,
    pub db_id_tr: String,
    pub translations: IndexMap<String, String>,
    #[serde(default)]
    pub collision_report: Vec<Collision>,
    #[serde(default)]
    pub term_memory: TermMemory,
}

impl MappingFile {
    pub fn new(mapping: &IdentifierMapping, collision_report: Vec<Collision>, term_memory: TermMemory) -> Self {
        let mut translations = IndexMap::new();
        for t in &mapping.tables {
            translations.insert(t.source.clone(), t.target.clone());
            for c in &t.columns {
                translations.insert(format!("{}.{}", t.source, c.source), c.target.clone());
            }
        }
        Self {
            db_id: mapping.db_id_src.clone(),
            db_id_tr: mapping.db_id_tgt.clone(),
            translations,
            collision_report,
            term_memory,
        }
    }

    /// Rebuilds the mapping. A key is a table when the key after it starts
    /// with `key.`, since every table has at least one column and columns
    /// directly follow their table.
    pub fn to_mapping(&self) -> Result<IdentifierMapping, MappingError> {
        let entries: Vec<(&String, &String)> = self.translations.iter().collect();
        let mut tables: Vec<TableMapping> = Vec::new();
        for (i, (key, target)) in entries.iter().enumerate() {
            let is_table = entries.get(i + 1).is_some_and(|(next, _)| {
                next.len() > key.len() && next.starts_with(key.as_str()) && next.as_bytes()[key.len()] == b'.'
            });
            if is_table {
                tables.push(TableMapping {
                    source: key.to_string(),
                    target: target.to_string(),
                    columns: Vec::new(),
                });
                continue;
            }
            let Some(table) = tables.last_mut() else {
                return Err(MappingError::InvalidFile(format!(
                    "entry {key:?} does not follow a table"
                )));
            };
            let column = key
                .strip_prefix(table.source.as_str())
                .and_then(|rest| rest.strip_prefix('.'))
                .ok_or_else(|| {
                    MappingError::InvalidFile(format!("entry {key:?} is not a column of {}", table.source))
                })?;
            table.columns.push(ColumnMapping {
                source: column.to_string(),
                target: target.to_string(),
            });
        }
        Ok(IdentifierMapping {
            db_id_src: self.db_id.clone(),
            db_id_tgt: self.db_id_tr.clone(),
            tables,
        })
    }
}
