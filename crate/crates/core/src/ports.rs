//! Request/reply contracts of the external translation and judging services,
//! plus local implementations that need no network.
//!
//! Ports return the raw reply text. Validation of the reply against its JSON
//! contract is done by the caller, so a misbehaving service is detected the
//! same way whatever transport it uses.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::catalog::{ForeignKey, SchemaCatalog, TableInfo};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PortError {
    #[error("service unavailable: {0}")]
    Unavailable(String),
}

/// Everything the schema translator sees about one database.
#[derive(Debug, Clone, Serialize)]
pub struct SchemaPackage {
    pub db_id: String,
    pub tables: Vec<TableInfo>,
    pub foreign_keys: Vec<ForeignKey>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub descriptions: BTreeMap<String, String>,
}

impl SchemaPackage {
    pub fn new(catalog: &SchemaCatalog, descriptions: BTreeMap<String, String>) -> Self {
        Self {
            db_id: catalog.db_id.clone(),
            tables: catalog.tables.clone(),
            foreign_keys: catalog.foreign_keys.clone(),
            descriptions,
        }
    }
}

/// Input of the joint question/evidence translation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextRequest {
    pub question_en: String,
    pub evidence_std: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sql_en: Option<String>,
}

/// Input of the alignment judge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeRequest {
    pub question_tr: String,
    pub evidence_tr: String,
    pub sql_tr: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sql_en: Option<String>,
}

pub trait TranslatorPort: Send + Sync {
    /// Returns the raw reply to a schema-mapping request.
    fn map_schema(&self, package: &SchemaPackage) -> Result<String, PortError>;
    /// Returns the raw reply to a question/evidence translation request.
    fn translate(&self, request: &TextRequest) -> Result<String, PortError>;
}

pub trait JudgePort: Send + Sync {
    fn judge(&self, request: &JudgeRequest) -> Result<String, PortError>;
}

/// Translates every identifier to itself and copies text unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityTranslator;

impl TranslatorPort for IdentityTranslator {
    fn map_schema(&self, package: &SchemaPackage) -> Result<String, PortError> {
        let mut translations = Map::new();
        for t in &package.tables {
            translations.insert(t.name.clone(), Value::String(t.name.clone()));
            for c in &t.columns {
                translations.insert(format!("{}.{}", t.name, c.name), Value::String(c.name.clone()));
            }
        }
        Ok(json!({ "db_id_tr": package.db_id, "translations": translations }).to_string())
    }

    fn translate(&self, request: &TextRequest) -> Result<String, PortError> {
        Ok(json!({ "question_tr": request.question_en, "evidence_tr": request.evidence_std }).to_string())
    }
}

/// Text translation entry of a [`DictionaryTranslator`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextEntry {
    pub question_tr: String,
    pub evidence_tr: String,
}

/// Answers from a fixed dictionary, typically loaded from a JSON file of the
/// form `{"db_ids": {..}, "identifiers": {..}, "texts": {question: {..}}}`.
///
/// Identifiers missing from the dictionary are left out of the reply, so
/// the mapping builder falls back to term memory and pass-through. Questions
/// missing from the dictionary are copied unchanged.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DictionaryTranslator {
    #[serde(default)]
    pub db_ids: BTreeMap<String, String>,
    #[serde(default)]
    pub identifiers: BTreeMap<String, String>,
    #[serde(default)]
    pub texts: BTreeMap<String, TextEntry>,
}

impl DictionaryTranslator {
    pub fn from_file(path: &Path) -> Result<Self, PortError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| PortError::Unavailable(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| PortError::Unavailable(format!("{}: {e}", path.display())))
    }

    fn lookup(&self, key: &str) -> Option<&String> {
        self.identifiers.get(key).or_else(|| {
            self.identifiers
                .iter()
                .find(|(k, _)| k.eq_ignore_ascii_case(key))
                .map(|(_, v)| v)
        })
    }
}

impl TranslatorPort for DictionaryTranslator {
    fn map_schema(&self, package: &SchemaPackage) -> Result<String, PortError> {
        let mut translations = Map::new();
        for t in &package.tables {
            if let Some(v) = self.lookup(&t.name) {
                translations.insert(t.name.clone(), Value::String(v.clone()));
            }
            for c in &t.columns {
                let qualified = format!("{}.{}", t.name, c.name);
                if let Some(v) = self.lookup(&qualified).or_else(|| self.lookup(&c.name)) {
                    translations.insert(qualified, Value::String(v.clone()));
                }
            }
        }
        let db_id_tr = self
            .db_ids
            .get(&package.db_id)
            .cloned()
            .unwrap_or_else(|| package.db_id.clone());
        Ok(json!({ "db_id_tr": db_id_tr, "translations": translations }).to_string())
    }

    fn translate(&self, request: &TextRequest) -> Result<String, PortError> {
        Ok(match self.texts.get(&request.question_en) {
            Some(e) => json!({ "question_tr": e.question_tr, "evidence_tr": e.evidence_tr }),
            None => json!({ "question_tr": request.question_en, "evidence_tr": request.evidence_std }),
        }
        .to_string())
    }
}

/// A judge backed by a closure, for tests and offline runs.
pub struct FnJudge<F>(pub F);

impl<F> JudgePort for FnJudge<F>
where
    F: Fn(&JudgeRequest) -> Result<String, PortError> + Send + Sync,
{
    fn judge(&self, request: &JudgeRequest) -> Result<String, PortError> {
        (self.0)(request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::ColumnInfo;

    fn package() -> SchemaPackage {
        SchemaPackage {
            db_id: "app".into(),
            tables: vec![TableInfo {
                name: "Users".into(),
                columns: vec![ColumnInfo {
                    name: "first_name".into(),
                    decl_type: "TEXT".into(),
                    pk: false,
                }],
            }],
            foreign_keys: vec![],
            descriptions: BTreeMap::new(),
        }
    }

    #[test]
    fn identity_reply_shape() {
        let v: Value = serde_json::from_str(&IdentityTranslator.map_schema(&package()).unwrap()).unwrap();
        assert_eq!(v["db_id_tr"], "app");
        assert_eq!(v["translations"]["Users.first_name"], "first_name");
    }

    #[test]
    fn dictionary_falls_back_to_bare_column_keys() {
        let d = DictionaryTranslator {
            identifiers: [
                ("users".to_string(), "kullanicilar".to_string()),
                ("first_name".into(), "ilk_isim".into()),
            ]
            .into(),
            ..Default::default()
        };
        let v: Value = serde_json::from_str(&d.map_schema(&package()).unwrap()).unwrap();
        assert_eq!(v["translations"]["Users"], "kullanicilar");
        assert_eq!(v["translations"]["Users.first_name"], "ilk_isim");
    }
}
