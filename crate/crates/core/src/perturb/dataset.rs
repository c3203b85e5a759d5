use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mutate, MutationRecord, MutationSpec, Scenario};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::opf::{feasibility_check, solve_opf, OPFOptions};
use crate::powerflow::{solve_powerflow, GridSolution, PFOptions};

/// Test draws start here so no train draw index can ever coincide with one.
pub const TEST_DRAW_OFFSET: u64 = 1 << 32;

/// Draw budget per requested entry.
const OVERSAMPLING: usize = 10;

/// Tolerance for the validity filter applied to every oracle solution.
const VALIDITY_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Pf,
    Opf,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pf" => Ok(Task::Pf),
            "opf" => Ok(Task::Opf),
            other => Err(Error::InvalidArgument(format!("unknown task `{other}` (expected pf or opf)"))),
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Pf => "pf",
            Task::Opf => "opf",
        })
    }
}

impl Task {
    /// Runs the task oracle and applies the validity filter. `Ok(None)` means
    /// the oracle ran but its answer violates a bound.
    pub fn solve(self, grid: &Grid) -> Result<Option<GridSolution>> {
        match self {
            Task::Pf => {
                let res = solve_powerflow(grid, &PFOptions::default())?;
                let ok = feasibility_check(grid, &res.solution, VALIDITY_TOL, VALIDITY_TOL)?.is_empty();
                Ok(ok.then_some(res.solution))
            }
            Task::Opf => {
                let res = solve_opf(grid, &OPFOptions::default())?;
                Ok(res.feasible.then_some(res.solution))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub draw_index: u64,
    pub scenario: Scenario,
    pub grid: Grid,
    pub solution: GridSolution,
    pub mutation: MutationRecord,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamStats {
    pub accepted: usize,
    /// Draws whose oracle failed or whose answer violated a bound.
    pub rejected: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub train: StreamStats,
    pub test: StreamStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub case: String,
    pub task: Task,
    pub base: Grid,
    pub train_spec: MutationSpec,
    pub test_spec: MutationSpec,
    pub train: Vec<DatasetEntry>,
    pub test: Vec<DatasetEntry>,
    pub stats: GenerationStats,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetConfig {
    pub task: Task,
    pub train_spec: MutationSpec,
    pub test_spec: MutationSpec,
    pub n_train: usize,
    pub n_test: usize,
    /// Worker threads for oracle solves; 0 uses the global rayon pool.
    /// Never affects the output.
    pub workers: usize,
}

impl DatasetConfig {
    /// 800 load-variation train draws and 200 in-distribution test draws.
    pub fn new(task: Task, seed: u64) -> Self {
        DatasetConfig {
            task,
            train_spec: MutationSpec::new(Scenario::LoadVariation, seed),
            test_spec: MutationSpec::new(Scenario::InDistributionLoad, seed),
            n_train: 800,
            n_test: 200,
            workers: 0,
        }
    }
}

pub fn generate_dataset(grid: &Grid, config: &DatasetConfig) -> Result<Dataset> {
    config.train_spec.validate()?;
    config.test_spec.validate()?;
    let run = || -> Result<_> {
        let train = stream(grid, config.task, &config.train_spec, 0, config.n_train)?;
        let test = stream(grid, config.task, &config.test_spec, TEST_DRAW_OFFSET, config.n_test)?;
        Ok((train, test))
    };
    let ((train, train_stats), (test, test_stats)) = if config.workers == 0 {
        run()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot build worker pool: {e}")))?
            .install(run)?
    };
    Ok(Dataset {
        case: grid.name.clone(),
        task: config.task,
        base: grid.clone(),
        train_spec: config.train_spec.clone(),
        test_spec: config.test_spec.clone(),
        train,
        test,
        stats: GenerationStats {
            train: train_stats,
            test: test_stats,
        },
    })
}

/// Accepts the first `n` valid draws in index order. Draws are evaluated in
/// parallel chunks, but acceptance walks each chunk sequentially, so the
/// result is independent of the worker count.
fn stream(grid: &Grid, task: Task, spec: &MutationSpec, offset: u64, n: usize) -> Result<(Vec<DatasetEntry>, StreamStats)> {
    let budget = n * OVERSAMPLING;
    let chunk = (rayon::current_num_threads() * 4).max(16);
    let mut entries = Vec::with_capacity(n);
    let mut stats = StreamStats::default();
    let mut next = 0usize;
    while entries.len() < n {
        if next >= budget {
            return Err(Error::GenerationFailure {
                requested: n,
                accepted: entries.len(),
                drawn: next,
            });
        }
        // Never evaluate more draws than could still be needed.
        let width = chunk.min(budget - next).min((n - entries.len()) * OVERSAMPLING);
        let results: Vec<Result<Option<DatasetEntry>>> = (next..next + width)
            .into_par_iter()
            .map(|i| draw(grid, task, spec, offset + i as u64))
            .collect();
        for r in results {
            if entries.len() == n {
                break;
            }
            next += 1;
            match r {
                Ok(Some(e)) => entries.push(e),
                Ok(None) => stats.rejected += 1,
                Err(e) if is_rejection(&e) => stats.rejected += 1,
                Err(e) => return Err(e),
            }
        }
    }
    stats.accepted = entries.len();
    Ok((entries, stats))
}

fn draw(grid: &Grid, task: Task, spec: &MutationSpec, draw_index: u64) -> Result<Option<DatasetEntry>> {
    let (mutant, mutation) = mutate(grid, spec, draw_index)?;
    Ok(task.solve(&mutant)?.map(|solution| DatasetEntry {
        draw_index,
        scenario: spec.scenario,
        grid: mutant,
        solution,
        mutation,
    }))
}

/// Oracle failures caused by the mutant itself (islanding, divergence,
/// infeasibility) reject the draw; anything else aborts generation.
fn is_rejection(e: &Error) -> bool {
    e.is_numerical() || matches!(e, Error::Topology(_) | Error::Validation(_) | Error::SingularBranch { .. })
}
