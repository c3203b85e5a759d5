use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{GridSolution, VoltageState};
use crate::error::{Error, Result};
use crate::grid::{branch_stamp, AdmittanceMatrix, Grid};

/// Directed branch flows in MW / MVAr; `from` and `to` are both measured
/// into the branch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFlow {
    pub branch_id: usize,
    pub p_from: f64,
    pub q_from: f64,
    pub p_to: f64,
    pub q_to: f64,
    /// `max(|S_from|, |S_to|) / rate · 100` for rated branches.
    pub loading_percent: Option<f64>,
}

impl LineFlow {
    pub fn loss_mw(&self) -> f64 {
        self.p_from + self.p_to
    }
}

/// Per-branch flows from the π-model. Out-of-service branches (or branches
/// touching an out-of-service bus) carry zero flow.
pub fn line_flows(grid: &Grid, y: &AdmittanceMatrix, state: &VoltageState) -> Result<Vec<LineFlow>> {
    if state.vm.len() != y.n() || state.va.len() != y.n() {
        return Err(Error::Dimension("state does not match admittance matrix".into()));
    }
    let idx = grid.bus_index();
    let base = grid.base_mva;
    let v = super::injection::complex_voltages(&state.vm, &state.va);
    let mut out = Vec::with_capacity(grid.branches.len());
    for br in &grid.branches {
        let (f, t) = (idx[&br.from_bus], idx[&br.to_bus]);
        let live = br.in_service && grid.buses[f].in_service && grid.buses[t].in_service;
        let (sf, st) = if live {
            let s = branch_stamp(br, f, t)?;
            let i_f = s.yff * v[f] + s.yft * v[t];
            let i_t = s.ytf * v[f] + s.ytt * v[t];
            (v[f] * i_f.conj() * base, v[t] * i_t.conj() * base)
        } else {
            (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0))
        };
        let loading_percent = (br.rate_mva > 0.0).then(|| sf.norm().max(st.norm()) / br.rate_mva * 100.0);
        out.push(LineFlow {
            branch_id: br.id,
            p_from: sf.re,
            q_from: sf.im,
            p_to: st.re,
            q_to: st.im,
            loading_percent,
        });
    }
    Ok(out)
}

/// Active power balance `generation − load − losses − shunt consumption`
/// in p.u.; zero at an exact PF solution.
pub fn power_balance_residual(grid: &Grid, y: &AdmittanceMatrix, solution: &GridSolution) -> Result<f64> {
    solution.check_shape(grid)?;
    let flows = line_flows(grid, y, &solution.state)?;
    let idx = grid.bus_index();
    let generation: f64 = solution.slack_p_mw
        + grid
            .generators
            .iter()
            .zip(&solution.gen_p_mw)
            .filter(|(g, _)| g.in_service)
            .map(|(_, p)| p)
            .sum::<f64>();
    let losses: f64 = flows.iter().map(LineFlow::loss_mw).sum();
    let shunt: f64 = grid
        .shunts
        .iter()
        .filter(|s| grid.buses[idx[&s.bus]].in_service)
        .map(|s| s.g_pu * solution.state.vm[idx[&s.bus]].powi(2) * grid.base_mva)
        .sum();
    Ok((generation - grid.total_load_mw() - losses - shunt) / grid.base_mva)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusBand {
    /// [0.95, 1.05] p.u.
    Ideal,
    /// (1.05, 1.10] or [0.90, 0.95)
    Acceptable,
    Unsafe,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineBand {
    /// below 80 %
    Ideal,
    /// [80, 100] %
    Elevated,
    Dangerous,
}

pub fn bus_band(vm_pu: f64) -> BusBand {
    if (0.95..=1.05).contains(&vm_pu) {
        BusBand::Ideal
    } else if (0.90..=1.10).contains(&vm_pu) {
        BusBand::Acceptable
    } else {
        BusBand::Unsafe
    }
}

pub fn line_band(loading_percent: f64) -> LineBand {
    if loading_percent < 80.0 {
        LineBand::Ideal
    } else if loading_percent <= 100.0 {
        LineBand::Elevated
    } else {
        LineBand::Dangerous
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BusLoading {
    pub bus_id: usize,
    pub vm_pu: f64,
    pub band: BusBand,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineLoading {
    pub branch_id: usize,
    pub loading_percent: f64,
    pub band: LineBand,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadingReport {
    pub buses: Vec<BusLoading>,
    /// Rated in-service branches only.
    pub lines: Vec<LineLoading>,
}

impl LoadingReport {
    pub fn bus_count(&self, band: BusBand) -> usize {
        self.buses.iter().filter(|b| b.band == band).count()
    }

    pub fn line_count(&self, band: LineBand) -> usize {
        self.lines.iter().filter(|l| l.band == band).count()
    }
}

/// Band classification of in-service buses and rated in-service lines.
pub fn loading_report(grid: &Grid, solution: &GridSolution) -> Result<LoadingReport> {
    solution.check_shape(grid)?;
    let y = crate::grid::build_admittance(grid)?;
    let flows = line_flows(grid, &y, &solution.state)?;
    let buses = grid
        .buses
        .iter()
        .zip(&solution.state.vm)
        .filter(|(b, _)| b.in_service)
        .map(|(b, &vm)| BusLoading {
            bus_id: b.id,
            vm_pu: vm,
            band: bus_band(vm),
        })
        .collect();
    let lines = grid
        .branches
        .iter()
        .zip(&flows)
        .filter(|(br, _)| br.in_service)
        .filter_map(|(br, f)| {
            f.loading_percent.map(|lp| LineLoading {
                branch_id: br.id,
                loading_percent: lp,
                band: line_band(lp),
            })
        })
        .collect();
    Ok(LoadingReport { buses, lines })
}
