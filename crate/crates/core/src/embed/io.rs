//! Dataset directory layout: `manifest.json`, `train.jsonl`, `test.jsonl`.
//!
//! Each jsonl line is one [`EntryRecord`]. The digest is SHA-256 over the
//! compact manifest header (digest field empty), a newline, then the exact
//! bytes of `train.jsonl` and `test.jsonl`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{attach_labels, columns, embed_grid, HeteroGraph, NodeType};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::perturb::{Dataset, DatasetEntry, GenerationStats, MutationRecord, MutationSpec, Scenario, Task};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRAIN_FILE: &str = "train.jsonl";
pub const TEST_FILE: &str = "test.jsonl";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub case: String,
    pub task: Task,
    pub train_spec: MutationSpec,
    pub test_spec: MutationSpec,
    pub n_train: usize,
    pub n_test: usize,
    pub stats: GenerationStats,
    /// Unit of every angle in the files, including the slack `va_degree`
    /// column.
    pub angle_unit: String,
    pub schema: BTreeMap<NodeType, Vec<String>>,
    pub base: Grid,
    pub digest: String,
}

/// One dataset entry on disk. The native grid travels with the graph so
/// import restores the entry exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntryRecord {
    pub draw_index: u64,
    pub scenario: Scenario,
    pub mutation: MutationRecord,
    pub grid: Grid,
    pub graph: HeteroGraph,
}

impl EntryRecord {
    pub fn from_entry(e: &DatasetEntry) -> Result<Self> {
        Ok(EntryRecord {
            draw_index: e.draw_index,
            scenario: e.scenario,
            mutation: e.mutation.clone(),
            grid: e.grid.clone(),
            graph: attach_labels(&embed_grid(&e.grid), &e.solution)?,
        })
    }

    pub fn into_entry(self) -> Result<DatasetEntry> {
        self.graph.check()?;
        let solution = self
            .graph
            .labels
            .ok_or_else(|| Error::Format(format!("entry {} has no labels", self.draw_index)))?;
        solution.check_shape(&self.grid)?;
        Ok(DatasetEntry {
            draw_index: self.draw_index,
            scenario: self.scenario,
            grid: self.grid,
            solution,
            mutation: self.mutation,
        })
    }
}

fn schema() -> BTreeMap<NodeType, Vec<String>> {
    NodeType::ALL
        .iter()
        .map(|&t| (t, columns(t).iter().map(|c| c.to_string()).collect()))
        .collect()
}

fn manifest_header(d: &Dataset) -> Manifest {
    Manifest {
        format_version: FORMAT_VERSION,
        case: d.case.clone(),
        task: d.task,
        train_spec: d.train_spec.clone(),
        test_spec: d.test_spec.clone(),
        n_train: d.train.len(),
        n_test: d.test.len(),
        stats: d.stats.clone(),
        angle_unit: "rad".to_string(),
        schema: schema(),
        base: d.base.clone(),
        digest: String::new(),
    }
}

fn render_lines(entries: &[DatasetEntry]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for e in entries {
        serde_json::to_writer(&mut out, &EntryRecord::from_entry(e)?)?;
        out.push(b'\n');
    }
    Ok(out)
}

fn digest_parts(header: &Manifest, train: &[u8], test: &[u8]) -> Result<String> {
    let mut header = header.clone();
    header.digest.clear();
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&header)?);
    h.update(b"\n");
    h.update(train);
    h.update(test);
    Ok(hex::encode(h.finalize()))
}

/// Content digest of a dataset, identical to the one [`export_dataset`]
/// writes.
pub fn dataset_digest(d: &Dataset) -> Result<String> {
    digest_parts(&manifest_header(d), &render_lines(&d.train)?, &render_lines(&d.test)?)
}

/// Writes the dataset into `dir` (created if missing) and returns the
/// manifest.
pub fn export_dataset(d: &Dataset, dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let train = render_lines(&d.train)?;
    let test = render_lines(&d.test)?;
    let mut manifest = manifest_header(d);
    manifest.digest = digest_parts(&manifest, &train, &test)?;
    fs::write(dir.join(TRAIN_FILE), &train)?;
    fs::write(dir.join(TEST_FILE), &test)?;
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

fn check_lines(bytes: &[u8], expected: usize, file: &str) -> Result<()> {
    let lines = bytes.iter().filter(|&&b| b == b'\n').count();
    if lines < expected || bytes.last().is_some_and(|&b| b != b'\n') {
        return Err(Error::Format(format!(
            "{file} is truncated: {lines} complete lines, manifest lists {expected}"
        )));
    }
    if lines > expected {
        return Err(Error::Format(format!("{file} has {lines} lines, manifest lists {expected}")));
    }
    Ok(())
}

fn parse_lines(bytes: &[u8], file: &str) -> Result<Vec<DatasetEntry>> {
    bytes
        .split(|&b| b == b'\n')
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, line)| {
            let rec: EntryRecord = serde_json::from_slice(line)
                .map_err(|e| Error::Format(format!("{file} line {}: {e}", i + 1)))?;
            rec.into_entry()
        })
        .collect()
}

pub fn import_dataset(dir: &Path) -> Result<Dataset> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)
        .map_err(|e| Error::Format(format!("{MANIFEST_FILE}: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "format version {} is not supported (expected {FORMAT_VERSION})",
            manifest.format_version
        )));
    }
    if manifest.schema != schema() {
        return Err(Error::Format("feature schema differs from this build".to_string()));
    }
    let train = fs::read(dir.join(TRAIN_FILE))?;
    let test = fs::read(dir.join(TEST_FILE))?;
    check_lines(&train, manifest.n_train, TRAIN_FILE)?;
    check_lines(&test, manifest.n_test, TEST_FILE)?;
    let actual = digest_parts(&manifest, &train, &test)?;
    if actual != manifest.digest {
        return Err(Error::DigestMismatch {
            expected: manifest.digest,
            actual,
        });
    }
    Ok(Dataset {
        case: manifest.case,
        task: manifest.task,
        base: manifest.base,
        train_spec: manifest.train_spec,
        test_spec: manifest.test_spec,
        train: parse_lines(&train, TRAIN_FILE)?,
        test: parse_lines(&test, TEST_FILE)?,
        stats: manifest.stats,
    })
}
