//! AC power flow by Newton–Raphson on the polar bus-injection equations.
//!
//! Unknowns are ordered `[va at PV+PQ buses; vm at PQ buses]` and the
//! mismatch vector `[ΔP at PV+PQ buses; ΔQ at PQ buses]`, both following
//! the dense bus order of the grid.

mod flows;
pub(crate) mod injection;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{build_admittance, structural_violations, AdmittanceMatrix, BusType, Grid};
use crate::sparse::CsrMatrix;

pub use flows::{
    bus_band, line_band, line_flows, loading_report, power_balance_residual, BusBand, BusLoading, LineBand,
    LineFlow, LineLoading, LoadingReport,
};
pub use injection::injections;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoltageState {
    /// Per-bus magnitude [p.u.]
    pub vm: Vec<f64>,
    /// Per-bus angle [rad]
    pub va: Vec<f64>,
}

impl VoltageState {
    pub fn len(&self) -> usize {
        self.vm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vm.is_empty()
    }
}

/// Voltages plus unit outputs; generator entries follow `Grid::generators`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSolution {
    pub state: VoltageState,
    pub gen_p_mw: Vec<f64>,
    pub gen_q_mvar: Vec<f64>,
    pub slack_p_mw: f64,
    pub slack_q_mvar: f64,
}

impl GridSolution {
    pub fn check_shape(&self, grid: &Grid) -> Result<()> {
        let (nb, ng) = (grid.n_buses(), grid.generators.len());
        if self.state.vm.len() != nb
            || self.state.va.len() != nb
            || self.gen_p_mw.len() != ng
            || self.gen_q_mvar.len() != ng
        {
            return Err(Error::Dimension(format!(
                "solution has {} buses / {} generators, grid `{}` has {nb} / {ng}",
                self.state.vm.len(),
                self.gen_p_mw.len(),
                grid.name
            )));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.state.vm.iter().chain(&self.state.va).all(|v| v.is_finite())
            && self.gen_p_mw.iter().chain(&self.gen_q_mvar).all(|v| v.is_finite())
            && self.slack_p_mw.is_finite()
            && self.slack_q_mvar.is_finite()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PFOptions {
    /// Convergence threshold on the infinity norm of the mismatch [p.u.]
    pub tol: f64,
    pub max_iter: usize,
    /// Ignore any provided initial state.
    pub flat_start: bool,
}

impl Default for PFOptions {
    fn default() -> Self {
        PFOptions {
            tol: 1e-8,
            max_iter: 30,
            flat_start: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PFResult {
    pub solution: GridSolution,
    pub iterations: usize,
    /// Infinity norm of the final mismatch [p.u.]
    pub residual: f64,
}

/// Index sets of the PF unknowns.
#[derive(Clone, Debug)]
pub(crate) struct PfLayout {
    pub slack: usize,
    /// In-service non-slack buses (angle unknowns, P equations).
    pub pvpq: Vec<usize>,
    /// In-service PQ buses (magnitude unknowns, Q equations).
    pub pq: Vec<usize>,
}

impl PfLayout {
    pub fn new(grid: &Grid) -> Result<Self> {
        let slack = grid.slack_index()?;
        let types = grid.effective_bus_types();
        let mut pvpq = Vec::new();
        let mut pq = Vec::new();
        for (i, t) in types.iter().enumerate() {
            if i == slack || !grid.buses[i].in_service {
                continue;
            }
            pvpq.push(i);
            if *t == BusType::PQ {
                pq.push(i);
            }
        }
        Ok(PfLayout { slack, pvpq, pq })
    }

    pub fn n_unknowns(&self) -> usize {
        self.pvpq.len() + self.pq.len()
    }
}

fn check_state(grid: &Grid, state: &VoltageState) -> Result<()> {
    let n = grid.n_buses();
    if state.vm.len() != n || state.va.len() != n {
        return Err(Error::Dimension(format!(
            "state has {}/{} entries, grid `{}` has {n} buses",
            state.vm.len(),
            state.va.len(),
            grid.name
        )));
    }
    Ok(())
}

/// Specified net injection per bus in p.u. (generator setpoints minus loads);
/// the slack unit is excluded.
pub(crate) fn specified_injection(grid: &Grid) -> (Vec<f64>, Vec<f64>) {
    let gen_p: Vec<f64> = grid.generators.iter().map(|g| g.p_mw).collect();
    let (p, q) = grid.scheduled_injections(&gen_p);
    let base = grid.base_mva;
    (
        p.into_iter().map(|v| v / base).collect(),
        q.into_iter().map(|v| v / base).collect(),
    )
}

fn mismatch_with(
    layout: &PfLayout,
    spec: &(Vec<f64>, Vec<f64>),
    y: &AdmittanceMatrix,
    vm: &[f64],
    va: &[f64],
) -> Vec<f64> {
    let (p, q) = injections(y, vm, va);
    layout
        .pvpq
        .iter()
        .map(|&i| spec.0[i] - p[i])
        .chain(layout.pq.iter().map(|&i| spec.1[i] - q[i]))
        .collect()
}

/// Mismatch `[ΔP at PV+PQ; ΔQ at PQ]` in p.u. where `ΔP_i = P_i^spec − P_i(V, θ)`.
pub fn pf_mismatch(grid: &Grid, y: &AdmittanceMatrix, state: &VoltageState) -> Result<Vec<f64>> {
    check_state(grid, state)?;
    if y.n() != grid.n_buses() {
        return Err(Error::Dimension("admittance matrix does not match grid".into()));
    }
    let layout = PfLayout::new(grid)?;
    let spec = specified_injection(grid);
    Ok(mismatch_with(&layout, &spec, y, &state.vm, &state.va))
}

fn jacobian_with(layout: &PfLayout, y: &AdmittanceMatrix, vm: &[f64], va: &[f64]) -> CsrMatrix {
    let n = y.n();
    let npvpq = layout.pvpq.len();
    let m = layout.n_unknowns();
    // column of each bus in the angle / magnitude blocks
    let mut col_va = vec![usize::MAX; n];
    let mut col_vm = vec![usize::MAX; n];
    for (c, &i) in layout.pvpq.iter().enumerate() {
        col_va[i] = c;
    }
    for (c, &i) in layout.pq.iter().enumerate() {
        col_vm[i] = npvpq + c;
    }
    let d = injection::injection_derivatives(y, vm, va);
    let mut triplets = Vec::new();
    let rows_p = layout.pvpq.iter().enumerate().map(|(r, &i)| (r, i, false));
    let rows_q = layout.pq.iter().enumerate().map(|(r, &i)| (npvpq + r, i, true));
    for (r, i, is_q) in rows_p.chain(rows_q) {
        for &(k, d_va, d_vm) in &d.rows[i] {
            let (a, b) = if is_q { (d_va.im, d_vm.im) } else { (d_va.re, d_vm.re) };
            // mismatch = spec − calc
            if col_va[k] != usize::MAX {
                triplets.push((r, col_va[k], -a));
            }
            if col_vm[k] != usize::MAX {
                triplets.push((r, col_vm[k], -b));
            }
        }
    }
    CsrMatrix::from_triplets(m, m, triplets)
}

/// Analytic Jacobian of [`pf_mismatch`] with respect to
/// `[va at PV+PQ; vm at PQ]`.
pub fn pf_jacobian(grid: &Grid, y: &AdmittanceMatrix, state: &VoltageState) -> Result<CsrMatrix> {
    check_state(grid, state)?;
    let layout = PfLayout::new(grid)?;
    Ok(jacobian_with(&layout, y, &state.vm, &state.va))
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Flat initial state: setpoint magnitudes at PV/slack buses, 1.0 elsewhere,
/// every angle at the slack reference.
pub fn flat_start(grid: &Grid) -> VoltageState {
    let n = grid.n_buses();
    let mut vm = vec![1.0; n];
    let va = vec![grid.slack.va_rad; n];
    apply_setpoints(grid, &mut vm);
    VoltageState { vm, va }
}

fn apply_setpoints(grid: &Grid, vm: &mut [f64]) {
    let idx = grid.bus_index();
    let types = grid.effective_bus_types();
    let mut set = vec![false; vm.len()];
    for g in grid.generators.iter().filter(|g| g.in_service) {
        let i = idx[&g.bus];
        if types[i] == BusType::PV && !set[i] {
            vm[i] = g.vm_pu;
            set[i] = true;
        }
    }
    vm[idx[&grid.slack.bus]] = grid.slack.vm_pu;
}

pub(crate) fn check_topology(grid: &Grid) -> Result<()> {
    let reach = crate::grid::reachable_from_slack(grid);
    let islanded: Vec<usize> = grid
        .buses
        .iter()
        .zip(&reach)
        .filter(|(b, r)| b.in_service && !**r)
        .map(|(b, _)| b.id)
        .collect();
    if islanded.is_empty() {
        Ok(())
    } else {
        Err(Error::Topology(format!(
            "buses {islanded:?} are not connected to slack bus {}",
            grid.slack.bus
        )))
    }
}

/// Splits a bus-level reactive output among the units at that bus in
/// proportion to their reactive ranges (equal split when all ranges are 0).
pub(crate) fn split_reactive(total: f64, bounds: &[(f64, f64)]) -> Vec<f64> {
    if bounds.len() == 1 {
        return vec![total];
    }
    let range: f64 = bounds.iter().map(|(lo, hi)| hi - lo).sum();
    if range > 0.0 {
        let lo_sum: f64 = bounds.iter().map(|(lo, _)| lo).sum();
        bounds
            .iter()
            .map(|(lo, hi)| lo + (total - lo_sum) * (hi - lo) / range)
            .collect()
    } else {
        vec![total / bounds.len() as f64; bounds.len()]
    }
}

/// Recovers unit outputs from a voltage state: slack P from the slack bus
/// injection, reactive output of every unit from its bus injection.
/// `gen_p_mw` gives the active dispatch of the non-slack generators.
pub(crate) fn recover_units(
    grid: &Grid,
    y: &AdmittanceMatrix,
    state: &VoltageState,
    gen_p_mw: &[f64],
) -> GridSolution {
    let base = grid.base_mva;
    let idx = grid.bus_index();
    let (p, q) = injections(y, &state.vm, &state.va);
    let (pd, qd) = grid.load_at_buses();
    let s = idx[&grid.slack.bus];
    let types = grid.effective_bus_types();

    let mut gen_p = vec![0.0; grid.generators.len()];
    let mut slack_p = p[s] * base + pd[s];
    for (k, g) in grid.generators.iter().enumerate() {
        if g.in_service {
            gen_p[k] = gen_p_mw[k];
            if idx[&g.bus] == s {
                slack_p -= gen_p_mw[k];
            }
        }
    }

    // Reactive output per bus with voltage-controlling units.
    let mut gen_q = vec![0.0; grid.generators.len()];
    let mut slack_q = 0.0;
    let mut units_at: Vec<Vec<Option<usize>>> = vec![Vec::new(); grid.n_buses()];
    units_at[s].push(None);
    for (k, g) in grid.generators.iter().enumerate() {
        let i = idx[&g.bus];
        if g.in_service && types[i] != BusType::PQ {
            units_at[i].push(Some(k));
        }
    }
    for (i, units) in units_at.iter().enumerate() {
        if units.is_empty() {
            continue;
        }
        let total = q[i] * base + qd[i];
        let bounds: Vec<(f64, f64)> = units
            .iter()
            .map(|u| match u {
                None => (grid.slack.min_q_mvar, grid.slack.max_q_mvar),
                Some(k) => (grid.generators[*k].min_q_mvar, grid.generators[*k].max_q_mvar),
            })
            .collect();
        for (u, qv) in units.iter().zip(split_reactive(total, &bounds)) {
            match u {
                None => slack_q = qv,
                Some(k) => gen_q[*k] = qv,
            }
        }
    }
    GridSolution {
        state: state.clone(),
        gen_p_mw: gen_p,
        gen_q_mvar: gen_q,
        slack_p_mw: slack_p,
        slack_q_mvar: slack_q,
    }
}

/// Per-bus active and reactive balance residuals in p.u.: calculated
/// injection minus (unit output − load), using the unit outputs stored in
/// `solution`. Out-of-service buses report zero.
pub fn bus_balance_residuals(
    grid: &Grid,
    y: &AdmittanceMatrix,
    solution: &GridSolution,
) -> Result<(Vec<f64>, Vec<f64>)> {
    solution.check_shape(grid)?;
    let base = grid.base_mva;
    let idx = grid.bus_index();
    let (p, q) = injections(y, &solution.state.vm, &solution.state.va);
    let (mut pn, mut qn) = grid.load_at_buses();
    for v in pn.iter_mut().chain(qn.iter_mut()) {
        *v = -*v;
    }
    for (k, g) in grid.generators.iter().enumerate() {
        if g.in_service {
            pn[idx[&g.bus]] += solution.gen_p_mw[k];
            qn[idx[&g.bus]] += solution.gen_q_mvar[k];
        }
    }
    let s = idx[&grid.slack.bus];
    pn[s] += solution.slack_p_mw;
    qn[s] += solution.slack_q_mvar;
    let live = |i: usize| grid.buses[i].in_service;
    let dp = (0..grid.n_buses())
        .map(|i| if live(i) { p[i] - pn[i] / base } else { 0.0 })
        .collect();
    let dq = (0..grid.n_buses())
        .map(|i| if live(i) { q[i] - qn[i] / base } else { 0.0 })
        .collect();
    Ok((dp, dq))
}

/// Solves the power flow from a flat start.
pub fn solve_powerflow(grid: &Grid, options: &PFOptions) -> Result<PFResult> {
    solve_powerflow_from(grid, options, None)
}

/// Solves the power flow, warm-starting from `initial` unless
/// `options.flat_start` is set. PV and slack magnitudes and the slack angle
/// are always reset to their setpoints.
pub fn solve_powerflow_from(grid: &Grid, options: &PFOptions, initial: Option<&VoltageState>) -> Result<PFResult> {
    if !(options.tol > 0.0) || options.max_iter == 0 {
        return Err(Error::InvalidArgument("PF options need tol > 0 and max_iter >= 1".into()));
    }
    let violations = structural_violations(grid);
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    check_topology(grid)?;
    let y = build_admittance(grid)?;
    let layout = PfLayout::new(grid)?;
    let spec = specified_injection(grid);

    let mut state = match initial {
        Some(s) if !options.flat_start => {
            check_state(grid, s)?;
            let mut s = s.clone();
            apply_setpoints(grid, &mut s.vm);
            s.va[layout.slack] = grid.slack.va_rad;
            s
        }
        _ => flat_start(grid),
    };

    let npvpq = layout.pvpq.len();
    let mut f = mismatch_with(&layout, &spec, &y, &state.vm, &state.va);
    let mut norm = inf_norm(&f);
    let mut iterations = 0;
    while norm > options.tol {
        if iterations == options.max_iter {
            return Err(Error::Divergence { iterations, mismatch: norm });
        }
        iterations += 1;
        let jac = jacobian_with(&layout, &y, &state.vm, &state.va).to_dense();
        let step = solve_dense(jac, &f).ok_or(Error::SingularJacobian { iteration: iterations })?;

        // Full Newton step, halved up to four times if the mismatch grows.
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..5 {
            let mut trial = state.clone();
            for (c, &i) in layout.pvpq.iter().enumerate() {
                trial.va[i] -= alpha * step[c];
            }
            for (c, &i) in layout.pq.iter().enumerate() {
                trial.vm[i] -= alpha * step[npvpq + c];
            }
            if trial.vm.iter().all(|&v| v > 0.0) {
                let tf = mismatch_with(&layout, &spec, &y, &trial.vm, &trial.va);
                let tn = inf_norm(&tf);
                if tn.is_finite() && tn <= norm {
                    accepted = Some((trial, tf, tn));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((s, tf, tn)) = accepted else {
            return Err(Error::Divergence { iterations, mismatch: norm });
        };
        state = s;
        f = tf;
        norm = tn;
    }

    let gen_p: Vec<f64> = grid.generators.iter().map(|g| g.p_mw).collect();
    let solution = recover_units(grid, &y, &state, &gen_p);
    Ok(PFResult {
        solution,
        iterations,
        residual: norm,
    })
}

/// Solves `J x = f` by dense LU; `None` when singular or non-finite.
pub(crate) fn solve_dense(jac: DMatrix<f64>, f: &[f64]) -> Option<Vec<f64>> {
    if f.is_empty() {
        return Some(Vec::new());
    }
    let lu = jac.lu();
    let x = lu.solve(&DVector::from_column_slice(f))?;
    x.iter().all(|v| v.is_finite()).then(|| x.iter().copied().collect())
}

#[cfg(test)]
mod tests;
