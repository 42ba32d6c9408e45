use serde_json::json;
use wasm_bindgen::prelude::*;

use schemaloc::mapping::MappingFile;
use schemaloc::nl::{verify_frozen_content, FrozenConfig};
use schemaloc::sampling::{accuracy_estimate, SamplingPlan};

pub fn rewrite(mapping_json: &str, sql: &str, invert: bool) -> Result<String, String> {
    let file: MappingFile = serde_json::from_str(mapping_json).map_err(|e| format!("mapping: {e}"))?;
    let mut mapping = file.to_mapping().map_err(|e| e.to_string())?;
    mapping.check_injective().map_err(|e| e.to_string())?;
    if invert {
        mapping = mapping.invert().map_err(|e| e.to_string())?;
    }
    mapping.rewrite_sql(sql.trim()).map_err(|e| e.to_string())
}

/// Plan over ids `1..=population`; the estimate is filled when `correct` is
/// given.
pub fn plan(population: u32, confidence: f64, margin: f64, seed: u64, correct: Option<u32>) -> Result<String, String> {
    let ids: Vec<i64> = (1..=i64::from(population)).collect();
    let mut plan = SamplingPlan::build(confidence, margin, 0.5, &ids, seed).map_err(|e| e.to_string())?;
    if let Some(c) = correct {
        plan.estimate = Some(accuracy_estimate(u64::from(c), plan.n, confidence).map_err(|e| e.to_string())?);
    }
    Ok(serde_json::to_string(&plan).expect("serializable plan"))
}

pub fn frozen(question: &str, evidence: &str, question_tr: &str, evidence_tr: &str) -> String {
    let v = verify_frozen_content(question, evidence, question_tr, evidence_tr, &FrozenConfig::default());
    json!({ "passed": v.passed(), "violations": v.violations, "warnings": v.warnings }).to_string()
}

#[wasm_bindgen]
pub fn rewrite_sql(mapping_json: &str, sql: &str, invert: bool) -> Result<String, JsError> {
    rewrite(mapping_json, sql, invert).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn sample_plan(
    population: u32,
    confidence: f64,
    margin: f64,
    seed: u32,
    correct: Option<u32>,
) -> Result<String, JsError> {
    plan(population, confidence, margin, u64::from(seed), correct).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn check_frozen(question: &str, evidence: &str, question_tr: &str, evidence_tr: &str) -> String {
    frozen(question, evidence, question_tr, evidence_tr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    const MAPPING: &str = include_str!("../www/mapping.json");

    #[test]
    fn rewrites_and_inverts() {
        let sql = r#"SELECT T1.School FROM schools AS T1 WHERE T1."Charter School" = 1"#;
        let tr = rewrite(MAPPING, sql, false).unwrap();
        assert!(
            tr.contains("okul_adi") && tr.contains("okullar") && tr.contains("charter_okulu"),
            "{tr}"
        );
        let back = rewrite(MAPPING, &tr, true).unwrap();
        assert!(back.contains(r#""Charter School""#), "{back}");
        assert!(rewrite(MAPPING, "SELECT nope FROM schools", false).is_err());
    }

    #[test]
    fn plan_sizes() {
        let v: Value = serde_json::from_str(&plan(10962, 0.95, 0.03, 1, Some(956)).unwrap()).unwrap();
        assert_eq!(v["n0"], 1068);
        assert_eq!(v["n"], 974);
        assert_eq!(v["sample_ids"].as_array().unwrap().len(), 974);
        assert!((v["estimate"]["point"].as_f64().unwrap() - 956.0 / 974.0).abs() < 1e-12);
        assert!(plan(0, 0.95, 0.03, 1, None).is_err());
    }

    #[test]
    fn frozen_reports_lost_number() {
        let v: Value =
            serde_json::from_str(&frozen("Schools opened in 1990?", "", "1991'de açılan okullar?", "")).unwrap();
        assert_eq!(v["passed"], false);
        let ok: Value =
            serde_json::from_str(&frozen("Schools opened in 1990?", "", "1990'da açılan okullar?", "")).unwrap();
        assert_eq!(ok["passed"], true);
    }
}
