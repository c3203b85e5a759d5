use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    boundary_violations, constraint_keys, normalization, ssl_error, supervised_error, wrap_angle, EvalConfig, Group,
};
use crate::embed::Prediction;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::perturb::DatasetEntry;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupStat {
    pub mean: f64,
    /// Population standard deviation across graphs.
    pub std: f64,
}

impl GroupStat {
    fn of(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count();
        if n == 0 {
            return GroupStat::default();
        }
        let mean = values.clone().sum::<f64>() / n as f64;
        let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        GroupStat { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub total: usize,
    /// Fraction of graphs violating each constraint, in enumeration order.
    pub frequencies: Vec<(String, f64)>,
}

impl ConstraintReport {
    pub fn violated(&self) -> impl Iterator<Item = &(String, f64)> {
        self.frequencies.iter().filter(|f| f.1 > 0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: EvalConfig,
    pub n_graphs: usize,
    /// Normalization constant per output group.
    pub norms: BTreeMap<Group, f64>,
    pub supervised: BTreeMap<Group, GroupStat>,
    pub ssl_mse: GroupStat,
    pub valid: Vec<bool>,
    pub percent_invalid: f64,
    pub constraints: ConstraintReport,
    /// Per-graph p-norm distance between prediction and oracle (p.u.).
    pub distances: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessSummary {
    pub mu: f64,
    pub norm_order: f64,
    pub max_distance: f64,
    pub n_exceeding: usize,
    pub robust: bool,
}

fn check_counts(entries: &[DatasetEntry], predictions: &[Prediction]) -> Result<()> {
    if entries.len() != predictions.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} dataset entries",
            predictions.len(),
            entries.len()
        )));
    }
    Ok(())
}

/// Distance in p.u. over every label value, angles wrapped.
fn distance(grid: &Grid, pred: &Prediction, truth: &Prediction, p: f64) -> f64 {
    let base = grid.base_mva;
    let d = pred
        .state
        .vm
        .iter()
        .zip(&truth.state.vm)
        .map(|(a, b)| a - b)
        .chain(pred.state.va.iter().zip(&truth.state.va).map(|(a, b)| wrap_angle(a - b)))
        .chain(
            pred.gen_p_mw
                .iter()
                .zip(&truth.gen_p_mw)
                .chain(pred.gen_q_mvar.iter().zip(&truth.gen_q_mvar))
                .map(|(a, b)| (a - b) / base),
        )
        .chain([
            (pred.slack_p_mw - truth.slack_p_mw) / base,
            (pred.slack_q_mvar - truth.slack_q_mvar) / base,
        ])
        .map(f64::abs);
    if p.is_infinite() {
        d.fold(0.0, f64::max)
    } else {
        d.map(|v| v.powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

fn frequencies(grid: &Grid, flags: &[Vec<(String, bool)>]) -> ConstraintReport {
    let keys = constraint_keys(grid);
    let mut counts = vec![0usize; keys.len()];
    let pos: BTreeMap<&str, usize> = keys.iter().enumerate().map(|(i, k)| (k.as_str(), i)).collect();
    for f in flags {
        for (k, v) in f {
            if *v {
                counts[pos[k.as_str()]] += 1;
            }
        }
    }
    let n = flags.len().max(1) as f64;
    ConstraintReport {
        total: keys.len(),
        frequencies: keys.into_iter().zip(counts).map(|(k, c)| (k, c as f64 / n)).collect(),
    }
}

/// Fraction of graphs violating each named constraint. Constraint names
/// come from the first entry's grid; every entry must share its layout.
pub fn constraint_report(
    entries: &[DatasetEntry],
    predictions: &[Prediction],
    config: &EvalConfig,
) -> Result<ConstraintReport> {
    check_counts(entries, predictions)?;
    let flags = entries
        .par_iter()
        .zip(predictions)
        .map(|(e, p)| boundary_violations(&e.grid, p, config).map(|b| b.flags))
        .collect::<Result<Vec<_>>>()?;
    Ok(match entries.first() {
        Some(e) => frequencies(&e.grid, &flags),
        None => ConstraintReport {
            total: 0,
            frequencies: Vec::new(),
        },
    })
}

pub fn evaluate(entries: &[DatasetEntry], predictions: &[Prediction], config: &EvalConfig) -> Result<EvalReport> {
    config.validate()?;
    check_counts(entries, predictions)?;
    let norms = normalization(entries.iter().map(|e| &e.solution));
    struct Row {
        se: [f64; 6],
        ssl: f64,
        flags: Vec<(String, bool)>,
        valid: bool,
        dist: f64,
    }
    let rows = entries
        .par_iter()
        .zip(predictions)
        .map(|(e, p)| {
            let b = boundary_violations(&e.grid, p, config)?;
            Ok(Row {
                se: supervised_error(p, &e.solution, &norms)?,
                ssl: ssl_error(&e.grid, p)?,
                valid: b.valid,
                flags: b.flags,
                dist: distance(&e.grid, p, &e.solution, config.norm_order),
            })
        })
        .collect::<Result<Vec<Row>>>()?;
    let supervised = Group::ALL
        .iter()
        .enumerate()
        .map(|(k, &g)| (g, GroupStat::of(rows.iter().map(move |r| r.se[k]))))
        .collect();
    let valid: Vec<bool> = rows.iter().map(|r| r.valid).collect();
    let percent_invalid = if valid.is_empty() {
        0.0
    } else {
        100.0 * valid.iter().filter(|v| !**v).count() as f64 / valid.len() as f64
    };
    let flags: Vec<_> = rows.iter().map(|r| r.flags.clone()).collect();
    let constraints = match entries.first() {
        Some(e) => frequencies(&e.grid, &flags),
        None => ConstraintReport {
            total: 0,
            frequencies: Vec::new(),
        },
    };
    Ok(EvalReport {
        config: config.clone(),
        n_graphs: entries.len(),
        norms: Group::ALL.iter().copied().zip(norms).collect(),
        supervised,
        ssl_mse: GroupStat::of(rows.iter().map(|r| r.ssl)),
        valid,
        percent_invalid,
        constraints,
        distances: rows.iter().map(|r| r.dist).collect(),
    })
}

/// A model is robust on the evaluated set iff every per-graph distance is
/// at most μ.
pub fn robustness_summary(report: &EvalReport, config: &EvalConfig) -> RobustnessSummary {
    let n_exceeding = report.distances.iter().filter(|&&d| !(d <= config.mu)).count();
    RobustnessSummary {
        mu: config.mu,
        norm_order: config.norm_order,
        max_distance: report.distances.iter().copied().fold(0.0, f64::max),
        n_exceeding,
        robust: n_exceeding == 0,
    }
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// `metric,value` rows: supervised means and stds, ssl, validity,
    /// constraint count, then one row per constraint frequency.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        for (g, s) in &self.supervised {
            let _ = writeln!(out, "se_{}_mean,{}", g.name(), s.mean);
            let _ = writeln!(out, "se_{}_std,{}", g.name(), s.std);
        }
        for (g, n) in &self.norms {
            let _ = writeln!(out, "norm_{},{}", g.name(), n);
        }
        let _ = writeln!(out, "ssl_mse_mean,{}", self.ssl_mse.mean);
        let _ = writeln!(out, "ssl_mse_std,{}", self.ssl_mse.std);
        let _ = writeln!(out, "n_graphs,{}", self.n_graphs);
        let _ = writeln!(out, "percent_invalid,{}", self.percent_invalid);
        let _ = writeln!(out, "n_constraints,{}", self.constraints.total);
        let _ = writeln!(out, "max_distance,{}", self.distances.iter().copied().fold(0.0, f64::max));
        for (k, f) in &self.constraints.frequencies {
            let _ = writeln!(out, "freq_{k},{f}");
        }
        out
    }

    /// Console lines; every number also appears in the JSON and CSV.
    pub fn summary_lines(&self) -> Vec<String> {
        let mut lines = vec![format!("graphs: {}", self.n_graphs)];
        for (g, s) in &self.supervised {
            lines.push(format!("se {:<8} mean {:.6e} std {:.6e}", g.name(), s.mean, s.std));
        }
        lines.push(format!("ssl mse mean {:.6e} std {:.6e}", self.ssl_mse.mean, self.ssl_mse.std));
        lines.push(format!("invalid graphs: {}%", self.percent_invalid));
        lines.push(format!("constraints: {}", self.constraints.total));
        for (k, f) in self.constraints.violated() {
            lines.push(format!("  {k}: {f}"));
        }
        lines
    }

    /// Horizontal bar chart of the violated constraints' frequencies.
    pub fn to_svg(&self) -> String {
        let bars: Vec<_> = self.constraints.violated().collect();
        let (row, left, width) = (18.0, 110.0, 400.0);
        let height = 40.0 + row * bars.len().max(1) as f64;
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"11\">\n",
            left + width + 60.0
        );
        let _ = writeln!(
            s,
            "<text x=\"4\" y=\"14\">violated constraints ({} of {})</text>",
            bars.len(),
            self.constraints.total
        );
        if bars.is_empty() {
            let _ = writeln!(s, "<text x=\"4\" y=\"34\">none</text>");
        }
        for (i, (k, f)) in bars.iter().enumerate() {
            let y = 24.0 + row * i as f64;
            let _ = writeln!(s, "<text x=\"4\" y=\"{}\">{k}</text>", y + 12.0);
            let _ = writeln!(
                s,
                "<rect x=\"{left}\" y=\"{y}\" width=\"{:.2}\" height=\"{}\" fill=\"#c0392b\"/>",
                f * width,
                row - 4.0
            );
            let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{}\">{:.1}%</text>", left + f * width + 4.0, y + 12.0, f * 100.0);
        }
        s.push_str("</svg>\n");
        s
    }
}
