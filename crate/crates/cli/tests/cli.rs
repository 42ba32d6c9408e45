use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;

const DATABASES: [&str; 3] = ["schools", "retail", "hospital"];

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

fn build_db_dir(dir: &Path) -> PathBuf {
    for db in DATABASES {
        let sub = dir.join(db);
        std::fs::create_dir_all(&sub).unwrap();
        let script = std::fs::read_to_string(fixture(&format!("{db}.sql"))).unwrap();
        rusqlite::Connection::open(sub.join(format!("{db}.sqlite")))
            .unwrap()
            .execute_batch(&script)
            .unwrap();
    }
    dir.to_path_buf()
}

fn cli(args: &[&str]) -> Output {
    cli_with_input(args, "")
}

fn cli_with_input(args: &[&str], input: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_schemaloc"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

struct Workspace {
    _tmp: tempfile::TempDir,
    db: String,
    out: String,
}

fn workspace() -> Workspace {
    let tmp = tempfile::tempdir().unwrap();
    let db = build_db_dir(&tmp.path().join("db")).display().to_string();
    let out = tmp.path().join("out").display().to_string();
    Workspace { _tmp: tmp, db, out }
}

fn run_fixture(ws: &Workspace) -> Output {
    let corpus = fixture("corpus.jsonl").display().to_string();
    let dict = fixture("dictionary.json").display().to_string();
    cli(&[
        "run",
        "--corpus",
        &corpus,
        "--db-dir",
        &ws.db,
        "--out-dir",
        &ws.out,
        "--dictionary",
        &dict,
        "--seed",
        "3",
    ])
}

#[test]
fn run_verifies_fixture_and_resumes() {
    let ws = workspace();
    let first = run_fixture(&ws);
    assert_eq!(
        first.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&first.stderr)
    );
    let report: Value = serde_json::from_str(&stdout(&first)).unwrap();
    assert_eq!(report["verified"], 35);
    assert!(Path::new(&ws.out).join("sampling_plan.json").is_file());

    let again: Value = serde_json::from_str(&stdout(&run_fixture(&ws))).unwrap();
    assert_eq!(again["processed"], 0);

    let corpus_tr = format!("{}/corpus_tr.jsonl", ws.out);
    let verified = cli(&[
        "verify",
        "--corpus",
        &corpus_tr,
        "--db-dir",
        &ws.db,
        "--out-dir",
        &ws.out,
    ]);
    assert_eq!(verified.status.code(), Some(0));
    assert_eq!(stdout(&verified).lines().count(), 35);

    let review = cli_with_input(&["review", "--db-dir", &ws.db, "--out-dir", &ws.out], "q\n");
    assert_eq!(review.status.code(), Some(0));
}

#[test]
fn sample_sizes_a_large_population() {
    let o = cli(&["sample", "--population", "10962"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("n0 = 1068"), "{s}");
    assert!(s.contains("n = 974"), "{s}");
}

#[test]
fn sample_scores_review_results() {
    let tmp = tempfile::tempdir().unwrap();
    let plan = tmp.path().join("plan.json");
    let corpus = fixture("corpus.jsonl").display().to_string();
    let p = plan.display().to_string();
    assert!(cli(&["sample", "--corpus", &corpus, "--margin", "0.1", "--output", &p])
        .status
        .success());
    let drawn: Value = serde_json::from_str(&std::fs::read_to_string(&plan).unwrap()).unwrap();
    let ids: Vec<i64> = drawn["sample_ids"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_i64().unwrap())
        .collect();
    let reviews = tmp.path().join("review_results.jsonl");
    let lines: Vec<String> = ids
        .iter()
        .enumerate()
        .map(|(k, id)| format!("{{\"item_id\":{id},\"correct\":{}}}", k != 0))
        .collect();
    std::fs::write(&reviews, lines.join("\n")).unwrap();
    let o = cli(&[
        "sample",
        "--plan",
        &p,
        "--reviews",
        &reviews.display().to_string(),
        "--output",
        &p,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let scored: Value = serde_json::from_str(&std::fs::read_to_string(&plan).unwrap()).unwrap();
    let n = ids.len() as f64;
    assert!((scored["estimate"]["point"].as_f64().unwrap() - (n - 1.0) / n).abs() < 1e-12);
}

#[test]
fn single_step_commands() {
    let ws = workspace();
    let dict = fixture("dictionary.json").display().to_string();
    let schools_db = format!("{}/schools/schools.sqlite", ws.db);

    let schema: Value = serde_json::from_str(&stdout(&cli(&["extract-schema", &schools_db]))).unwrap();
    assert_eq!(schema["db_id"], "schools");

    let mapped = cli(&[
        "map-schema",
        "--db-dir",
        &ws.db,
        "--out-dir",
        &ws.out,
        "--dictionary",
        &dict,
        "--db-id",
        "schools",
    ]);
    assert!(stdout(&mapped).contains("schools -> okullar"));
    let mapping = format!("{}/mappings/schools.json", ws.out);

    let sql = r#"SELECT "Free Meal Count" FROM frpm WHERE "Academic Year" = '2014-2015'"#;
    let rewritten = stdout(&cli(&["rewrite-sql", "--mapping", &mapping, sql]));
    assert!(rewritten.contains("ucretsiz_yemek_sayisi"), "{rewritten}");
    assert!(rewritten.contains("'2014-2015'"));
    let back = cli_with_input(&["rewrite-sql", "--mapping", &mapping, "--invert"], &rewritten);
    assert!(stdout(&back).contains("\"Free Meal Count\""));

    let target = format!("{}/okullar.sqlite", ws.out);
    let localized = cli(&["localize-db", &schools_db, "--mapping", &mapping, "--out", &target]);
    assert!(
        localized.status.success(),
        "{}",
        String::from_utf8_lossy(&localized.stderr)
    );
    assert!(Path::new(&target).is_file());
}

#[test]
fn translate_then_verify() {
    let ws = workspace();
    let dict = fixture("dictionary.json").display().to_string();
    let corpus = fixture("corpus.jsonl").display().to_string();
    let translated = format!("{}/translated.jsonl", ws.out);
    let t = cli(&[
        "translate",
        "--corpus",
        &corpus,
        "--db-dir",
        &ws.db,
        "--out-dir",
        &ws.out,
        "--dictionary",
        &dict,
        "--output",
        &translated,
    ]);
    assert_eq!(t.status.code(), Some(0), "{}", String::from_utf8_lossy(&t.stderr));
    let v = cli(&[
        "verify",
        "--corpus",
        &translated,
        "--db-dir",
        &ws.db,
        "--out-dir",
        &ws.out,
    ]);
    assert_eq!(v.status.code(), Some(0), "{}", String::from_utf8_lossy(&v.stderr));

    let stats = cli(&["stats", &translated, "--turkish"]);
    assert!(stdout(&stats).contains("TR"));
}

#[test]
fn evaluate_gold_predictions_scores_full_marks() {
    let ws = workspace();
    let corpus = fixture("corpus.jsonl");
    let preds = Path::new(&ws.db).join("gold.jsonl");
    let lines: Vec<String> = std::fs::read_to_string(&corpus)
        .unwrap()
        .lines()
        .map(|l| {
            let v: Value = serde_json::from_str(l).unwrap();
            serde_json::json!({"item_id": v["item_id"], "sql": v["SQL"]}).to_string()
        })
        .collect();
    std::fs::write(&preds, lines.join("\n")).unwrap();
    let metrics = Path::new(&ws.db).join("metrics.json");
    let o = cli(&[
        "evaluate",
        "--corpus",
        &corpus.display().to_string(),
        "--db-dir",
        &ws.db,
        "--predictions",
        &format!("gold={}", preds.display()),
        "--output",
        &metrics.display().to_string(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: Value = serde_json::from_str(&std::fs::read_to_string(&metrics).unwrap()).unwrap();
    assert_eq!(m["gold"]["ex"], 100.0);
    assert_eq!(m["gold"]["em"], 100.0);
    assert!(stdout(&o).contains("gold"));
}

#[test]
fn configuration_errors_exit_with_one() {
    let ws = workspace();
    let o = cli(&[
        "run",
        "--corpus",
        "/nonexistent.jsonl",
        "--db-dir",
        &ws.db,
        "--out-dir",
        &ws.out,
        "--identity",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = cli(&[
        "run",
        "--corpus",
        "/nonexistent.jsonl",
        "--db-dir",
        &ws.db,
        "--out-dir",
        &ws.out,
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no translator"));
}
