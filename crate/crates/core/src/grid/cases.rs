//! Bundled MATPOWER test cases.

use super::{parse_matpower_case, Grid};
use crate::error::{Error, Result};

pub const CASE9: &str = include_str!("../../cases/case9.m");
pub const CASE30: &str = include_str!("../../cases/case30.m");
pub const CASE118: &str = include_str!("../../cases/case118.m");

pub const BUNDLED: [&str; 3] = ["case9", "case30", "case118"];

pub fn bundled_text(name: &str) -> Option<&'static str> {
    match name {
        "case9" => Some(CASE9),
        "case30" => Some(CASE30),
        "case118" => Some(CASE118),
        _ => None,
    }
}

/// Loads a bundled case by name.
pub fn bundled(name: &str) -> Result<Grid> {
    let text = bundled_text(name)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown bundled case `{name}`")))?;
    parse_matpower_case(text)
}

/// Resolves a bundled case name or reads a case file (MATPOWER `.m` or grid
/// JSON) from disk.
pub fn load_case(name_or_path: &str) -> Result<Grid> {
    if let Some(text) = bundled_text(name_or_path) {
        return parse_matpower_case(text);
    }
    let text = std::fs::read_to_string(name_or_path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{name_or_path}: {e}")))?;
    if name_or_path.ends_with(".json") {
        Grid::from_json(&text)
    } else {
        parse_matpower_case(&text)
    }
}

pub fn case9() -> Grid {
    bundled("case9").expect("bundled case9 parses")
}

pub fn case30() -> Grid {
    bundled("case30").expect("bundled case30 parses")
}

pub fn case118() -> Grid {
    bundled("case118").expect("bundled case118 parses")
}
