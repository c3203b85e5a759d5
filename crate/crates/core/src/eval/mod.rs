//! Safety metrics for predicted grid states: normalized supervised error,
//! power-flow residual (self-supervised) error, boundary violations, cost,
//! the combined training loss and its weighting strategies.
//!
//! Every comparison is made in per-unit space: powers are divided by
//! `base_mva`, angle differences are wrapped into (−π, π].

mod report;

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::embed::Prediction;
use crate::error::{Error, Result};
use crate::grid::{build_admittance, Grid};
use crate::opf::generation_cost;
use crate::powerflow::{bus_balance_residuals, GridSolution};

pub use report::{
    constraint_report, evaluate, robustness_summary, ConstraintReport, EvalReport, GroupStat, RobustnessSummary,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Slack allowed beyond each box bound, in p.u.
    pub boundary_tol: f64,
    /// Largest accepted per-bus power-flow residual, in p.u.
    pub pf_tol: f64,
    /// Robustness threshold on the prediction-to-oracle distance.
    pub mu: f64,
    /// Order p of the distance; `f64::INFINITY` gives the max norm.
    pub norm_order: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            boundary_tol: 1e-4,
            pf_tol: 1e-2,
            mu: 1e-2,
            norm_order: 2.0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.boundary_tol > 0.0 && self.pf_tol > 0.0 && self.mu >= 0.0 && self.norm_order >= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "tolerances must be positive, mu non-negative and norm order >= 1: {self:?}"
            )));
        }
        Ok(())
    }
}

/// The six supervised output groups.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    PGen,
    QGen,
    PSlack,
    QSlack,
    V,
    Theta,
}

impl Group {
    pub const ALL: [Group; 6] = [Group::PGen, Group::QGen, Group::PSlack, Group::QSlack, Group::V, Group::Theta];

    pub fn name(self) -> &'static str {
        match self {
            Group::PGen => "p_gen",
            Group::QGen => "q_gen",
            Group::PSlack => "p_slack",
            Group::QSlack => "q_slack",
            Group::V => "v",
            Group::Theta => "theta",
        }
    }

    fn values(self, s: &GridSolution) -> Vec<f64> {
        match self {
            Group::PGen => s.gen_p_mw.clone(),
            Group::QGen => s.gen_q_mvar.clone(),
            Group::PSlack => vec![s.slack_p_mw],
            Group::QSlack => vec![s.slack_q_mvar],
            Group::V => s.state.vm.clone(),
            Group::Theta => s.state.va.clone(),
        }
    }
}

/// Per-group values indexed in [`Group::ALL`] order.
pub type PerGroup = [f64; 6];

/// Difference wrapped into (−π, π].
pub fn wrap_angle(d: f64) -> f64 {
    let w = d.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

fn check_pair(pred: &Prediction, truth: &GridSolution) -> Result<()> {
    if pred.state.vm.len() != truth.state.vm.len()
        || pred.state.va.len() != truth.state.va.len()
        || pred.gen_p_mw.len() != truth.gen_p_mw.len()
        || pred.gen_q_mvar.len() != truth.gen_q_mvar.len()
    {
        return Err(Error::Dimension(format!(
            "prediction has {} buses / {} generators, truth has {} / {}",
            pred.state.vm.len(),
            pred.gen_p_mw.len(),
            truth.state.vm.len(),
            truth.gen_p_mw.len()
        )));
    }
    Ok(())
}

/// Normalization constant per group: the largest absolute truth value,
/// floored at 1e-3.
pub fn normalization<'a>(truths: impl IntoIterator<Item = &'a GridSolution>) -> PerGroup {
    let mut norms: PerGroup = [1e-3; 6];
    for t in truths {
        for (k, g) in Group::ALL.iter().enumerate() {
            for v in g.values(t) {
                norms[k] = norms[k].max(v.abs());
            }
        }
    }
    norms
}

/// Mean over the nodes of each group of ((pred − truth) / norm)².
/// Groups without nodes score 0.
pub fn supervised_error(pred: &Prediction, truth: &GridSolution, norms: &PerGroup) -> Result<PerGroup> {
    check_pair(pred, truth)?;
    if let Some(k) = norms.iter().position(|&n| !(n > 0.0 && n.is_finite())) {
        return Err(Error::InvalidArgument(format!(
            "normalization constant for {} must be positive, got {}",
            Group::ALL[k].name(),
            norms[k]
        )));
    }
    let mut out = [0.0; 6];
    for (k, g) in Group::ALL.iter().enumerate() {
        let (p, t) = (g.values(pred), g.values(truth));
        if p.is_empty() {
            continue;
        }
        let sum: f64 = p
            .iter()
            .zip(&t)
            .map(|(a, b)| {
                let d = if *g == Group::Theta { wrap_angle(a - b) } else { a - b };
                (d / norms[k]).powi(2)
            })
            .sum();
        out[k] = sum / p.len() as f64;
    }
    Ok(out)
}

/// Mean of the squared active and reactive balance residuals over all
/// buses (2·n_bus terms), in p.u.².
pub fn ssl_error(grid: &Grid, pred: &Prediction) -> Result<f64> {
    let y = build_admittance(grid)?;
    let (dp, dq) = bus_balance_residuals(grid, &y, pred)?;
    let n = dp.len() + dq.len();
    if n == 0 {
        return Ok(0.0);
    }
    Ok(dp.iter().chain(&dq).map(|v| v * v).sum::<f64>() / n as f64)
}

/// Largest excursion of `v` outside `[lo, hi]`, 0 inside.
fn excess(v: f64, lo: f64, hi: f64) -> f64 {
    (v - hi).max(lo - v).max(0.0)
}

/// Box excursions in p.u. for one bus-box, generator-box or slack-box
/// constraint.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct BoxExcess {
    pub key: String,
    pub parts: Vec<f64>,
}

/// Every named constraint in enumeration order: `bus{id}_pf` for each bus,
/// then `bus{id}_bd`, `gen{id}_bd`, `slack_bd`.
pub fn constraint_keys(grid: &Grid) -> Vec<String> {
    let mut keys: Vec<String> = grid.buses.iter().map(|b| format!("bus{}_pf", b.id)).collect();
    keys.extend(grid.buses.iter().map(|b| format!("bus{}_bd", b.id)));
    keys.extend(grid.generators.iter().map(|g| format!("gen{}_bd", g.id)));
    keys.push("slack_bd".to_string());
    keys
}

/// Box excursions of every bus, generator and slack constraint (p.u.).
/// Out-of-service generators carry no box.
pub(crate) fn box_excess(grid: &Grid, pred: &Prediction) -> Vec<BoxExcess> {
    let base = grid.base_mva;
    let mut out = Vec::with_capacity(grid.n_buses() + grid.generators.len() + 1);
    for (i, b) in grid.buses.iter().enumerate() {
        out.push(BoxExcess {
            key: format!("bus{}_bd", b.id),
            parts: vec![
                excess(pred.state.vm[i], b.min_vm_pu, b.max_vm_pu),
                excess(pred.state.va[i], -PI, PI),
            ],
        });
    }
    for (k, g) in grid.generators.iter().enumerate() {
        let parts = if g.in_service {
            vec![
                excess(pred.gen_p_mw[k] / base, g.min_p_mw / base, g.max_p_mw / base),
                excess(pred.gen_q_mvar[k] / base, g.min_q_mvar / base, g.max_q_mvar / base),
            ]
        } else {
            vec![0.0, 0.0]
        };
        out.push(BoxExcess {
            key: format!("gen{}_bd", g.id),
            parts,
        });
    }
    let s = &grid.slack;
    out.push(BoxExcess {
        key: "slack_bd".to_string(),
        parts: vec![
            excess(pred.slack_p_mw / base, s.min_p_mw / base, s.max_p_mw / base),
            excess(pred.slack_q_mvar / base, s.min_q_mvar / base, s.max_q_mvar / base),
        ],
    });
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    /// `(constraint key, violated)` in [`constraint_keys`] order.
    pub flags: Vec<(String, bool)>,
    pub valid: bool,
}

impl BoundaryReport {
    pub fn violation_count(&self) -> usize {
        self.flags.iter().filter(|f| f.1).count()
    }
}

pub fn boundary_violations(grid: &Grid, pred: &Prediction, config: &EvalConfig) -> Result<BoundaryReport> {
    pred.check_shape(grid)?;
    let y = build_admittance(grid)?;
    let (dp, dq) = bus_balance_residuals(grid, &y, pred)?;
    let mut flags: Vec<(String, bool)> = grid
        .buses
        .iter()
        .enumerate()
        .map(|(i, b)| (format!("bus{}_pf", b.id), dp[i].abs().max(dq[i].abs()) > config.pf_tol))
        .collect();
    flags.extend(
        box_excess(grid, pred)
            .into_iter()
            .map(|b| (b.key, b.parts.iter().any(|&e| e > config.boundary_tol))),
    );
    let valid = flags.iter().all(|f| !f.1);
    Ok(BoundaryReport { flags, valid })
}

/// Absolute total generation cost at the predicted unit outputs.
pub fn cost_loss(grid: &Grid, pred: &Prediction) -> Result<f64> {
    Ok(generation_cost(grid, &pred.gen_p_mw, pred.slack_p_mw)?.abs())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub bus: f64,
    pub slack: f64,
    pub gen: f64,
    pub constraint: f64,
    pub ssl: f64,
    pub cost: f64,
}

impl LossWeights {
    pub fn from_array(w: [f64; 6]) -> Result<Self> {
        if w.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument(format!("loss weights must be finite and >= 0: {w:?}")));
        }
        Ok(LossWeights {
            bus: w[0],
            slack: w[1],
            gen: w[2],
            constraint: w[3],
            ssl: w[4],
            cost: w[5],
        })
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.bus, self.slack, self.gen, self.constraint, self.ssl, self.cost]
    }
}

/// Weighted terms of the combined loss. `total` is their sum in field
/// order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub bus: f64,
    pub slack: f64,
    pub gen: f64,
    pub constraint: f64,
    pub ssl: f64,
    pub cost: f64,
    pub total: f64,
}

fn sq_dist(a: &[f64], b: &[f64], scale: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| ((x - y) / scale).powi(2)).sum()
}

/// Weighted sum of the supervised squared distances (bus vm/va, slack and
/// generator p/q in p.u.), the squared-hinge box penalty, the
/// self-supervised residual and the absolute cost. `config` is accepted for
/// interface symmetry; the hinge has no tolerance.
pub fn combined_loss(
    grid: &Grid,
    pred: &Prediction,
    truth: &GridSolution,
    weights: &LossWeights,
    _config: &EvalConfig,
) -> Result<LossBreakdown> {
    pred.check_shape(grid)?;
    check_pair(pred, truth)?;
    let base = grid.base_mva;
    let dva: f64 = pred
        .state
        .va
        .iter()
        .zip(&truth.state.va)
        .map(|(a, b)| wrap_angle(a - b).powi(2))
        .sum();
    let bus = sq_dist(&pred.state.vm, &truth.state.vm, 1.0) + dva;
    let slack = sq_dist(
        &[pred.slack_p_mw, pred.slack_q_mvar],
        &[truth.slack_p_mw, truth.slack_q_mvar],
        base,
    );
    let gen = sq_dist(&pred.gen_p_mw, &truth.gen_p_mw, base) + sq_dist(&pred.gen_q_mvar, &truth.gen_q_mvar, base);
    let ctr: f64 = box_excess(grid, pred).iter().flat_map(|b| b.parts.iter()).map(|e| e * e).sum();
    let ssl = ssl_error(grid, pred)?;
    let cost = cost_loss(grid, pred)?;
    let mut out = LossBreakdown {
        bus: weights.bus * bus,
        slack: weights.slack * slack,
        gen: weights.gen * gen,
        constraint: weights.constraint * ctr,
        ssl: weights.ssl * ssl,
        cost: weights.cost * cost,
        total: 0.0,
    };
    out.total = out.bus + out.slack + out.gen + out.constraint + out.ssl + out.cost;
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightStrategy {
    Uniform,
    Random,
    Relative,
}

impl std::str::FromStr for WeightStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(WeightStrategy::Uniform),
            "random" => Ok(WeightStrategy::Random),
            "relative" => Ok(WeightStrategy::Relative),
            other => Err(Error::InvalidArgument(format!("unknown weight strategy `{other}`"))),
        }
    }
}

/// Number of scalar terms behind each loss component, in
/// [`LossWeights::to_array`] order.
pub fn term_cardinalities(grid: &Grid) -> [usize; 6] {
    let (nb, ng) = (grid.n_buses(), grid.generators.len());
    [2 * nb, 2, 2 * ng, 2 * (nb + ng + 1), 2 * nb, 1]
}

/// Weights summing to 1: equal, softmax of standard normal draws, or
/// inversely proportional to each term's cardinality.
pub fn make_weights(strategy: WeightStrategy, cardinalities: &[usize; 6], rng: &mut impl Rng) -> Result<LossWeights> {
    let raw: [f64; 6] = match strategy {
        WeightStrategy::Uniform => [1.0; 6],
        WeightStrategy::Random => {
            let z: [f64; 6] = std::array::from_fn(|_| rng.sample(StandardNormal));
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            z.map(|v| (v - m).exp())
        }
        WeightStrategy::Relative => {
            if let Some(k) = cardinalities.iter().position(|&c| c == 0) {
                return Err(Error::InvalidArgument(format!("loss term {k} has zero cardinality")));
            }
            cardinalities.map(|c| 1.0 / c as f64)
        }
    };
    let s: f64 = raw.iter().sum();
    LossWeights::from_array(raw.map(|v| v / s))
}
