//! Feature-schema stability against a committed case9 embedding.
//!
//! Regenerate with `GRIDSAFE_BLESS=1 cargo test --test golden` after an
//! intentional schema change.

use std::path::PathBuf;

use gridsafe::embed::{columns, embed_grid, NodeType};
use gridsafe::grid::cases;

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/case9_graph.json")
}

fn current() -> serde_json::Value {
    let schema: serde_json::Map<String, serde_json::Value> = NodeType::ALL
        .iter()
        .map(|&t| {
            let name = serde_json::to_value(t).unwrap().as_str().unwrap().to_string();
            (name, serde_json::json!(columns(t)))
        })
        .collect();
    serde_json::json!({ "schema": schema, "graph": embed_grid(&cases::case9()) })
}

#[test]
fn case9_embedding_matches_golden_file() {
    let now = current();
    let path = golden_path();
    if std::env::var_os("GRIDSAFE_BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, serde_json::to_string_pretty(&now).unwrap() + "\n").unwrap();
    }
    let text = std::fs::read_to_string(&path).expect("golden file missing; run with GRIDSAFE_BLESS=1");
    let golden: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(golden["schema"], now["schema"], "column schema changed");
    assert_eq!(golden["graph"], now["graph"], "case9 embedding changed");
}
