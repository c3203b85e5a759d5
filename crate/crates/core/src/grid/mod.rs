//! Grid data model.
//!
//! Electrical quantities follow MATPOWER conventions: branch impedances and
//! shunts are per-unit on `base_mva`, powers are in MW / MVAr, angles in
//! radians. Buses are referenced by their external id; solvers work on dense
//! 0-based indices in `buses` order (see [`Grid::bus_index`]).

mod admittance;
pub mod cases;
mod matpower;
mod validate;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use admittance::{branch_stamp, build_admittance, AdmittanceMatrix, BranchStamp};
pub use matpower::parse_matpower_case;
pub(crate) use validate::reachable_from_slack;
pub use validate::{structural_violations, validate_grid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BusType {
    /// Reference bus (Vθ): voltage magnitude and angle fixed.
    Slack,
    PV,
    PQ,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub bus_type: BusType,
    pub vn_kv: f64,
    pub min_vm_pu: f64,
    pub max_vm_pu: f64,
    pub in_service: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: usize,
    pub from_bus: usize,
    pub to_bus: usize,
    pub r_pu: f64,
    pub x_pu: f64,
    /// Total line charging susceptance.
    pub b_charging_pu: f64,
    /// Off-nominal turns ratio at the from side; 1.0 for plain lines.
    pub tap_ratio: f64,
    pub shift_rad: f64,
    /// Thermal limit, 0 means unlimited.
    pub rate_mva: f64,
    pub in_service: bool,
}

impl Branch {
    pub fn is_transformer(&self) -> bool {
        self.tap_ratio != 1.0 || self.shift_rad != 0.0
    }
}

/// Polynomial cost `c·P² + b·P + a` with `P` in MW.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostCurve {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl CostCurve {
    pub fn eval(&self, p_mw: f64) -> f64 {
        self.c * p_mw * p_mw + self.b * p_mw + self.a
    }

    /// d cost / d P, per MW.
    pub fn marginal(&self, p_mw: f64) -> f64 {
        2.0 * self.c * p_mw + self.b
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub id: usize,
    pub bus: usize,
    pub p_mw: f64,
    pub vm_pu: f64,
    pub min_p_mw: f64,
    pub max_p_mw: f64,
    pub min_q_mvar: f64,
    pub max_q_mvar: f64,
    pub cost: CostCurve,
    pub in_service: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slack {
    pub bus: usize,
    pub vm_pu: f64,
    pub va_rad: f64,
    pub min_p_mw: f64,
    pub max_p_mw: f64,
    pub min_q_mvar: f64,
    pub max_q_mvar: f64,
    pub cost: CostCurve,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub id: usize,
    pub bus: usize,
    pub p_mw: f64,
    pub q_mvar: f64,
    pub in_service: bool,
}

/// Constant shunt admittance at a bus (capacitor / reactor).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shunt {
    pub bus: usize,
    pub g_pu: f64,
    pub b_pu: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    pub slack: Slack,
    pub loads: Vec<Load>,
    pub shunts: Vec<Shunt>,
}

impl Grid {
    /// Map from external bus id to dense index.
    pub fn bus_index(&self) -> HashMap<usize, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn slack_index(&self) -> Result<usize> {
        self.buses
            .iter()
            .position(|b| b.id == self.slack.bus)
            .ok_or_else(|| Error::Validation(vec![format!("slack bus {} does not exist", self.slack.bus)]))
    }

    /// Net scheduled injection per bus from in-service generators (at their
    /// setpoints) minus in-service loads, in MW / MVAr. The slack unit is
    /// not included.
    pub fn scheduled_injections(&self, gen_p_mw: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let idx = self.bus_index();
        let n = self.n_buses();
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        for (g, &pg) in self.generators.iter().zip(gen_p_mw) {
            if g.in_service {
                p[idx[&g.bus]] += pg;
            }
        }
        for l in self.loads.iter().filter(|l| l.in_service) {
            let i = idx[&l.bus];
            p[i] -= l.p_mw;
            q[i] -= l.q_mvar;
        }
        (p, q)
    }

    pub fn load_at_buses(&self) -> (Vec<f64>, Vec<f64>) {
        let idx = self.bus_index();
        let mut p = vec![0.0; self.n_buses()];
        let mut q = vec![0.0; self.n_buses()];
        for l in self.loads.iter().filter(|l| l.in_service) {
            p[idx[&l.bus]] += l.p_mw;
            q[idx[&l.bus]] += l.q_mvar;
        }
        (p, q)
    }

    pub fn total_load_mw(&self) -> f64 {
        self.loads.iter().filter(|l| l.in_service).map(|l| l.p_mw).sum()
    }

    pub fn n_in_service_branches(&self) -> usize {
        self.branches.iter().filter(|b| b.in_service).count()
    }

    /// Bus type used by the solvers: a PV bus whose generators are all out
    /// of service behaves as PQ.
    pub fn effective_bus_types(&self) -> Vec<BusType> {
        let idx = self.bus_index();
        let mut has_unit = vec![false; self.n_buses()];
        for g in self.generators.iter().filter(|g| g.in_service) {
            has_unit[idx[&g.bus]] = true;
        }
        self.buses
            .iter()
            .enumerate()
            .map(|(i, b)| {
                if b.id == self.slack.bus {
                    BusType::Slack
                } else if b.bus_type == BusType::PV && has_unit[i] {
                    BusType::PV
                } else {
                    BusType::PQ
                }
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses and validates a grid document. Islanding is not checked here;
    /// outage mutants are legitimately islanded until filtered.
    pub fn from_json(text: &str) -> Result<Grid> {
        let grid: Grid = serde_json::from_str(text)?;
        let violations = structural_violations(&grid);
        if violations.is_empty() {
            Ok(grid)
        } else {
            Err(Error::Validation(violations))
        }
    }
}

pub fn grid_to_json(grid: &Grid) -> Result<String> {
    grid.to_json()
}

pub fn grid_from_json(text: &str) -> Result<Grid> {
    Grid::from_json(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cost_curve_eval() {
        let c = CostCurve { a: 1.0, b: 2.0, c: 3.0 };
        assert_eq!(c.eval(2.0), 17.0);
        assert_eq!(c.marginal(2.0), 14.0);
    }

    #[test]
    fn json_round_trip_case9() {
        let g = cases::case9();
        let back = grid_from_json(&grid_to_json(&g).unwrap()).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn json_rejects_inverted_voltage_bounds() {
        let mut g = cases::case9();
        g.buses[3].min_vm_pu = 1.2;
        let err = grid_from_json(&g.to_json().unwrap()).unwrap_err();
        assert!(err.to_string().contains("min_vm_pu"), "{err}");
    }

    #[test]
    fn json_rejects_duplicate_bus() {
        let mut g = cases::case9();
        g.buses[4].id = g.buses[3].id;
        let err = grid_from_json(&g.to_json().unwrap()).unwrap_err();
        assert!(err.to_string().contains("duplicate bus id"), "{err}");
    }

    #[test]
    fn json_rejects_schema_violation() {
        let err = grid_from_json(r#"{"name": "x", "base_mva": "big"}"#).unwrap_err();
        assert!(matches!(err, Error::Json(_)));
    }

    #[test]
    fn dead_pv_bus_is_pq() {
        let mut g = cases::case9();
        g.generators[0].in_service = false;
        let types = g.effective_bus_types();
        assert_eq!(types[1], BusType::PQ);
        assert_eq!(types[2], BusType::PV);
        assert_eq!(types[0], BusType::Slack);
    }
}
