#![allow(dead_code)]

use std::path::{Path, PathBuf};

use schemaloc::ports::DictionaryTranslator;

pub mod fuzz;
pub mod oracle;

pub const DATABASES: [&str; 3] = ["schools", "retail", "hospital"];

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Builds `<dir>/<db>/<db>.sqlite` for every fixture database.
pub fn build_db_dir(dir: &Path) -> PathBuf {
    for db in DATABASES {
        let sub = dir.join(db);
        std::fs::create_dir_all(&sub).unwrap();
        let script = std::fs::read_to_string(fixture(&format!("{db}.sql"))).unwrap();
        let conn = rusqlite::Connection::open(sub.join(format!("{db}.sqlite"))).unwrap();
        conn.execute_batch(&script).unwrap();
    }
    dir.to_path_buf()
}

pub fn dictionary() -> DictionaryTranslator {
    DictionaryTranslator::from_file(&fixture("dictionary.json")).unwrap()
}
