//! Grid perturbations (load, price, single-line outage) and the
//! convergence-filtered dataset generator.
//!
//! Every draw is a pure function of `(seed, draw_index)`: the generator is
//! ChaCha8 seeded with `seed` and switched to stream `draw_index`, so draws
//! can be evaluated in any order or in parallel.

mod dataset;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

pub use dataset::{
    generate_dataset, Dataset, DatasetConfig, DatasetEntry, GenerationStats, StreamStats, Task, TEST_DRAW_OFFSET,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Load multipliers from the training distribution (ID test stream).
    InDistributionLoad,
    LoadVariation,
    PriceVariation,
    LineOutage,
}

impl Scenario {
    pub fn is_load(self) -> bool {
        matches!(self, Scenario::InDistributionLoad | Scenario::LoadVariation)
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "id" | "in-distribution-load" => Ok(Scenario::InDistributionLoad),
            "load" | "load-variation" => Ok(Scenario::LoadVariation),
            "price" | "price-variation" => Ok(Scenario::PriceVariation),
            "outage" | "line-outage" => Ok(Scenario::LineOutage),
            other => Err(Error::InvalidArgument(format!("unknown scenario `{other}`"))),
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scenario::InDistributionLoad => "in-distribution-load",
            Scenario::LoadVariation => "load-variation",
            Scenario::PriceVariation => "price-variation",
            Scenario::LineOutage => "line-outage",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MutationSpec {
    pub scenario: Scenario,
    pub load_mult_min: f64,
    pub load_mult_max: f64,
    /// Fraction of loads scaled per draw, in (0, 1].
    pub load_fraction: f64,
    pub seed: u64,
}

impl MutationSpec {
    pub fn new(scenario: Scenario, seed: u64) -> Self {
        MutationSpec {
            scenario,
            load_mult_min: 0.9,
            load_mult_max: 1.1,
            load_fraction: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.load_mult_min > 0.0 && self.load_mult_min <= self.load_mult_max && self.load_mult_max.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "load multiplier bounds must satisfy 0 < min <= max, got [{}, {}]",
                self.load_mult_min, self.load_mult_max
            )));
        }
        if !(self.load_fraction > 0.0 && self.load_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "load_fraction must lie in (0, 1], got {}",
                self.load_fraction
            )));
        }
        Ok(())
    }
}

/// What a draw changed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MutationRecord {
    Load {
        /// `(load id, multiplier)` for every scaled load, by load order.
        multipliers: Vec<(usize, f64)>,
    },
    Price {
        /// New linear coefficients: generators in grid order, then the slack.
        linear_costs: Vec<f64>,
        /// All original linear coefficients were equal; nothing was drawn.
        degenerate: bool,
    },
    Outage {
        branch_id: usize,
    },
}

/// Counter-based stream for one draw.
pub fn draw_rng(seed: u64, draw_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw_index);
    rng
}

/// Scales `round(load_fraction · n_loads)` loads, chosen without
/// replacement, by independent uniform multipliers.
pub fn mutate_loads(grid: &Grid, spec: &MutationSpec, draw_index: u64) -> Result<(Grid, MutationRecord)> {
    spec.validate()?;
    let n = grid.loads.len();
    if n == 0 {
        return Err(Error::Mutation(format!("grid `{}` has no loads to vary", grid.name)));
    }
    let mut rng = draw_rng(spec.seed, draw_index);
    let k = ((spec.load_fraction * n as f64).round() as usize).clamp(1, n);
    let mut chosen = index::sample(&mut rng, n, k).into_vec();
    chosen.sort_unstable();
    let mut out = grid.clone();
    let mut multipliers = Vec::with_capacity(k);
    for i in chosen {
        let m = rng.random_range(spec.load_mult_min..=spec.load_mult_max);
        let load = &mut out.loads[i];
        load.p_mw *= m;
        load.q_mvar *= m;
        multipliers.push((load.id, m));
    }
    Ok((out, MutationRecord::Load { multipliers }))
}

/// Redraws the linear cost of every generator and the slack uniformly
/// within the cross-unit range of the original linear costs.
pub fn mutate_prices(grid: &Grid, spec: &MutationSpec, draw_index: u64) -> Result<(Grid, MutationRecord)> {
    let original: Vec<f64> = grid
        .generators
        .iter()
        .map(|g| g.cost.b)
        .chain(std::iter::once(grid.slack.cost.b))
        .collect();
    let lo = original.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = original.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo < hi) {
        return Ok((
            grid.clone(),
            MutationRecord::Price {
                linear_costs: original,
                degenerate: true,
            },
        ));
    }
    let mut rng = draw_rng(spec.seed, draw_index);
    let mut out = grid.clone();
    let mut drawn = Vec::with_capacity(original.len());
    for g in out.generators.iter_mut() {
        g.cost.b = rng.random_range(lo..=hi);
        drawn.push(g.cost.b);
    }
    out.slack.cost.b = rng.random_range(lo..=hi);
    drawn.push(out.slack.cost.b);
    Ok((
        out,
        MutationRecord::Price {
            linear_costs: drawn,
            degenerate: false,
        },
    ))
}

/// Takes one uniformly chosen in-service branch out of service. Islanding
/// is not checked here.
pub fn line_outage(grid: &Grid, spec: &MutationSpec, draw_index: u64) -> Result<(Grid, usize)> {
    let live: Vec<usize> = (0..grid.branches.len()).filter(|&i| grid.branches[i].in_service).collect();
    if live.len() < 2 {
        return Err(Error::Mutation(format!(
            "grid `{}` needs at least 2 in-service branches for an outage, has {}",
            grid.name,
            live.len()
        )));
    }
    let mut rng = draw_rng(spec.seed, draw_index);
    let pick = live[rng.random_range(0..live.len())];
    let mut out = grid.clone();
    out.branches[pick].in_service = false;
    let id = out.branches[pick].id;
    Ok((out, id))
}

/// Applies the mutation named by `spec.scenario`.
pub fn mutate(grid: &Grid, spec: &MutationSpec, draw_index: u64) -> Result<(Grid, MutationRecord)> {
    match spec.scenario {
        Scenario::InDistributionLoad | Scenario::LoadVariation => mutate_loads(grid, spec, draw_index),
        Scenario::PriceVariation => mutate_prices(grid, spec, draw_index),
        Scenario::LineOutage => {
            let (g, branch_id) = line_outage(grid, spec, draw_index)?;
            Ok((g, MutationRecord::Outage { branch_id }))
        }
    }
}

/// Paths of every leaf field that differs between two grids, e.g.
/// `loads[2].p_mw` or `branches[4].in_service`.
pub fn grid_diff(a: &Grid, b: &Grid) -> Vec<String> {
    let va = serde_json::to_value(a).expect("grid serializes");
    let vb = serde_json::to_value(b).expect("grid serializes");
    let mut out = Vec::new();
    diff_values(&va, &vb, String::new(), &mut out);
    out
}

fn diff_values(a: &serde_json::Value, b: &serde_json::Value, path: String, out: &mut Vec<String>) {
    use serde_json::Value;
    match (a, b) {
        (Value::Object(x), Value::Object(y)) => {
            for (k, va) in x {
                let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match y.get(k) {
                    Some(vb) => diff_values(va, vb, p, out),
                    None => out.push(p),
                }
            }
            for k in y.keys().filter(|k| !x.contains_key(*k)) {
                out.push(format!("{path}.{k}"));
            }
        }
        (Value::Array(x), Value::Array(y)) if x.len() == y.len() => {
            for (i, (va, vb)) in x.iter().zip(y).enumerate() {
                diff_values(va, vb, format!("{path}[{i}]"), out);
            }
        }
        _ if a != b => out.push(path),
        _ => {}
    }
}
