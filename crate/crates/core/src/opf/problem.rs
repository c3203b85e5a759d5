//! Reduced AC-OPF: variables, derived quantities and the augmented
//! Lagrangian with its analytic gradient.
//!
//! Variable vector (all p.u.): `[vm at in-service buses; va at in-service
//! non-slack buses; P at in-service non-slack generators]`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::newton::fd_hessian;
use super::OPFOptions;
use crate::error::{Error, Result};
use crate::grid::{branch_stamp, build_admittance, AdmittanceMatrix, BranchStamp, BusType, Grid};
use crate::powerflow::injection::{complex_voltages, injection_vjp};
use crate::powerflow::{injections, GridSolution, VoltageState};

/// Multiplier and penalty state of the augmented Lagrangian.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Penalty {
    pub rho: f64,
    /// One per equality, in [`OpfProblem::equalities`] order.
    pub lambda: Vec<f64>,
    /// One per inequality (`g ≤ 0`), in [`OpfProblem::inequalities`] order.
    pub mu: Vec<f64>,
}

/// A point at which the penalized objective is evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpfPoint {
    pub x: Vec<f64>,
    pub penalty: Penalty,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Ineq {
    VmMax(usize),
    VmMin(usize),
    PgMax(usize),
    PgMin(usize),
    SlackPMax,
    SlackPMin,
    QMax(usize),
    QMin(usize),
    /// `(line slot, from side)`
    Rating(usize, bool),
}

/// A bus whose reactive output is free (PV buses and the slack bus), with
/// aggregated unit bounds in p.u.
#[derive(Clone, Debug)]
struct ReactiveBus {
    bus: usize,
    q_min: f64,
    q_max: f64,
}

#[derive(Clone, Debug)]
struct RatedLine {
    stamp: BranchStamp,
    /// Squared rating in p.u.
    limit_sq: f64,
}

pub struct OpfProblem<'a> {
    grid: &'a Grid,
    y: AdmittanceMatrix,
    base: f64,
    slack: usize,
    vm_buses: Vec<usize>,
    va_buses: Vec<usize>,
    gens: Vec<usize>,
    /// Column of each bus in the vm / va blocks, `usize::MAX` when absent.
    vm_col: Vec<usize>,
    va_col: Vec<usize>,
    /// Variable columns of the generators at each bus.
    gens_at: Vec<Vec<usize>>,
    q_eq_buses: Vec<usize>,
    reactive: Vec<ReactiveBus>,
    lines: Vec<RatedLine>,
    pd: Vec<f64>,
    qd: Vec<f64>,
    ineqs: Vec<Ineq>,
    cost_scale: f64,
}

impl<'a> OpfProblem<'a> {
    pub fn new(grid: &'a Grid, options: &OPFOptions) -> Result<Self> {
        let y = build_admittance(grid)?;
        let base = grid.base_mva;
        let slack = grid.slack_index()?;
        let types = grid.effective_bus_types();
        let idx = grid.bus_index();
        let n = grid.n_buses();

        let vm_buses: Vec<usize> = (0..n).filter(|&i| grid.buses[i].in_service).collect();
        let va_buses: Vec<usize> = vm_buses.iter().copied().filter(|&i| i != slack).collect();
        let gens: Vec<usize> = (0..grid.generators.len())
            .filter(|&k| grid.generators[k].in_service && grid.buses[idx[&grid.generators[k].bus]].in_service)
            .collect();
        let mut vm_col = vec![usize::MAX; n];
        let mut va_col = vec![usize::MAX; n];
        for (c, &i) in vm_buses.iter().enumerate() {
            vm_col[i] = c;
        }
        for (c, &i) in va_buses.iter().enumerate() {
            va_col[i] = vm_buses.len() + c;
        }
        let pg0 = vm_buses.len() + va_buses.len();
        let mut gens_at = vec![Vec::new(); n];
        for (c, &k) in gens.iter().enumerate() {
            gens_at[idx[&grid.generators[k].bus]].push(pg0 + c);
        }

        let q_eq_buses: Vec<usize> = va_buses.iter().copied().filter(|&i| types[i] == BusType::PQ).collect();
        let mut reactive = Vec::new();
        for &i in &vm_buses {
            if types[i] == BusType::PQ {
                continue;
            }
            let (mut lo, mut hi) = (0.0, 0.0);
            if i == slack {
                lo += grid.slack.min_q_mvar;
                hi += grid.slack.max_q_mvar;
            }
            for g in grid.generators.iter().filter(|g| g.in_service && idx[&g.bus] == i) {
                lo += g.min_q_mvar;
                hi += g.max_q_mvar;
            }
            reactive.push(ReactiveBus {
                bus: i,
                q_min: lo / base,
                q_max: hi / base,
            });
        }

        let mut lines = Vec::new();
        if options.enforce_line_limits {
            for br in grid.branches.iter().filter(|b| b.in_service && b.rate_mva > 0.0) {
                let (f, t) = (idx[&br.from_bus], idx[&br.to_bus]);
                if grid.buses[f].in_service && grid.buses[t].in_service {
                    lines.push(RatedLine {
                        stamp: branch_stamp(br, f, t)?,
                        limit_sq: (br.rate_mva / base).powi(2),
                    });
                }
            }
        }

        let (pd, qd) = grid.load_at_buses();
        let pd = pd.into_iter().map(|v| v / base).collect();
        let qd = qd.into_iter().map(|v| v / base).collect();

        let mut ineqs = Vec::new();
        for c in 0..vm_buses.len() {
            ineqs.push(Ineq::VmMax(c));
            ineqs.push(Ineq::VmMin(c));
        }
        for c in 0..gens.len() {
            ineqs.push(Ineq::PgMax(c));
            ineqs.push(Ineq::PgMin(c));
        }
        ineqs.push(Ineq::SlackPMax);
        ineqs.push(Ineq::SlackPMin);
        for r in 0..reactive.len() {
            ineqs.push(Ineq::QMax(r));
            ineqs.push(Ineq::QMin(r));
        }
        for l in 0..lines.len() {
            ineqs.push(Ineq::Rating(l, true));
            ineqs.push(Ineq::Rating(l, false));
        }

        // Cost at the setpoint dispatch with the slack covering the rest
        // of the load; keeps the scaled objective O(1).
        let setpoint_cost = grid
            .generators
            .iter()
            .filter(|g| g.in_service)
            .map(|g| g.cost.eval(g.p_mw))
            .sum::<f64>()
            + grid.slack.cost.eval(
                grid.total_load_mw() - grid.generators.iter().filter(|g| g.in_service).map(|g| g.p_mw).sum::<f64>(),
            );
        let cost_scale = setpoint_cost.abs().max(1.0);

        Ok(OpfProblem {
            grid,
            y,
            base,
            slack,
            vm_buses,
            va_buses,
            gens,
            vm_col,
            va_col,
            gens_at,
            q_eq_buses,
            reactive,
            lines,
            pd,
            qd,
            ineqs,
            cost_scale,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.vm_buses.len() + self.va_buses.len() + self.gens.len()
    }

    pub fn n_equalities(&self) -> usize {
        self.va_buses.len() + self.q_eq_buses.len()
    }

    pub fn n_inequalities(&self) -> usize {
        self.ineqs.len()
    }

    pub fn cost_scale(&self) -> f64 {
        self.cost_scale
    }

    pub fn admittance(&self) -> &AdmittanceMatrix {
        &self.y
    }

    /// Generators carried as variables, as indices into `Grid::generators`.
    pub fn generator_indices(&self) -> &[usize] {
        &self.gens
    }

    fn pg_offset(&self) -> usize {
        self.vm_buses.len() + self.va_buses.len()
    }

    /// Packs a voltage state and a per-generator dispatch [MW].
    pub fn pack(&self, state: &VoltageState, gen_p_mw: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.n_vars());
        x.extend(self.vm_buses.iter().map(|&i| state.vm[i]));
        x.extend(self.va_buses.iter().map(|&i| state.va[i]));
        x.extend(self.gens.iter().map(|&k| gen_p_mw[k] / self.base));
        x
    }

    /// Full per-bus state; buses outside the variable set keep vm = 1 and
    /// the reference angle.
    pub fn state(&self, x: &[f64]) -> VoltageState {
        let n = self.grid.n_buses();
        let mut vm = vec![1.0; n];
        let mut va = vec![self.grid.slack.va_rad; n];
        for (c, &i) in self.vm_buses.iter().enumerate() {
            vm[i] = x[c];
        }
        for (c, &i) in self.va_buses.iter().enumerate() {
            va[i] = x[self.vm_buses.len() + c];
        }
        VoltageState { vm, va }
    }

    /// Per-generator dispatch [MW]; generators outside the variable set
    /// report zero.
    pub fn gen_p_mw(&self, x: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.grid.generators.len()];
        let off = self.pg_offset();
        for (c, &k) in self.gens.iter().enumerate() {
            p[k] = x[off + c] * self.base;
        }
        p
    }

    /// Starting point: a given state and the generator setpoints.
    pub fn initial_point(&self, state: &VoltageState) -> Vec<f64> {
        let p: Vec<f64> = self.grid.generators.iter().map(|g| g.p_mw).collect();
        self.pack(state, &p)
    }

    fn pg_sum_at(&self, x: &[f64], bus: usize) -> f64 {
        self.gens_at[bus].iter().map(|&c| x[c]).sum()
    }

    /// Derived quantities shared by every evaluation.
    fn derive(&self, x: &[f64]) -> Derived {
        let st = self.state(x);
        let (p, q) = injections(&self.y, &st.vm, &st.va);
        let s = self.slack;
        let slack_p = p[s] + self.pd[s] - self.pg_sum_at(x, s);
        let flows = if self.lines.is_empty() {
            Vec::new()
        } else {
            let v = complex_voltages(&st.vm, &st.va);
            self.lines
                .iter()
                .map(|l| {
                    let (f, t) = (l.stamp.from, l.stamp.to);
                    let sf = v[f] * (l.stamp.yff * v[f] + l.stamp.yft * v[t]).conj();
                    let st = v[t] * (l.stamp.ytf * v[f] + l.stamp.ytt * v[t]).conj();
                    (sf, st)
                })
                .collect()
        };
        Derived {
            state: st,
            p,
            q,
            slack_p,
            flows,
        }
    }

    fn cost_of(&self, d: &Derived, x: &[f64]) -> f64 {
        let off = self.pg_offset();
        let units: f64 = self
            .gens
            .iter()
            .enumerate()
            .map(|(c, &k)| self.grid.generators[k].cost.eval(x[off + c] * self.base))
            .sum();
        units + self.grid.slack.cost.eval(d.slack_p * self.base)
    }

    /// Total generation cost [currency] at `x`.
    pub fn objective(&self, x: &[f64]) -> f64 {
        self.cost_of(&self.derive(x), x)
    }

    fn equalities_of(&self, d: &Derived, x: &[f64]) -> Vec<f64> {
        let mut h = Vec::with_capacity(self.n_equalities());
        for &i in &self.va_buses {
            h.push(d.p[i] - (self.pg_sum_at(x, i) - self.pd[i]));
        }
        for &i in &self.q_eq_buses {
            h.push(d.q[i] + self.qd[i]);
        }
        h
    }

    fn inequalities_of(&self, d: &Derived, x: &[f64]) -> Vec<f64> {
        let off = self.pg_offset();
        let sl = &self.grid.slack;
        self.ineqs
            .iter()
            .map(|c| match *c {
                Ineq::VmMax(c) => x[c] - self.grid.buses[self.vm_buses[c]].max_vm_pu,
                Ineq::VmMin(c) => self.grid.buses[self.vm_buses[c]].min_vm_pu - x[c],
                Ineq::PgMax(c) => x[off + c] - self.grid.generators[self.gens[c]].max_p_mw / self.base,
                Ineq::PgMin(c) => self.grid.generators[self.gens[c]].min_p_mw / self.base - x[off + c],
                Ineq::SlackPMax => d.slack_p - sl.max_p_mw / self.base,
                Ineq::SlackPMin => sl.min_p_mw / self.base - d.slack_p,
                Ineq::QMax(r) => {
                    let rb = &self.reactive[r];
                    d.q[rb.bus] + self.qd[rb.bus] - rb.q_max
                }
                Ineq::QMin(r) => {
                    let rb = &self.reactive[r];
                    rb.q_min - d.q[rb.bus] - self.qd[rb.bus]
                }
                Ineq::Rating(l, from) => {
                    let s = if from { d.flows[l].0 } else { d.flows[l].1 };
                    s.norm_sqr() - self.lines[l].limit_sq
                }
            })
            .collect()
    }

    /// Equality residuals `[P balance at non-slack buses; Q balance at PQ
    /// buses]` in p.u.
    pub fn equalities(&self, x: &[f64]) -> Vec<f64> {
        self.equalities_of(&self.derive(x), x)
    }

    /// Inequality values `g(x) ≤ 0`.
    pub fn inequalities(&self, x: &[f64]) -> Vec<f64> {
        self.inequalities_of(&self.derive(x), x)
    }

    pub(crate) fn check(&self, point: &OpfPoint) -> Result<()> {
        if point.x.len() != self.n_vars()
            || point.penalty.lambda.len() != self.n_equalities()
            || point.penalty.mu.len() != self.n_inequalities()
        {
            return Err(Error::Dimension(format!(
                "OPF point has {}/{}/{} entries, problem expects {}/{}/{}",
                point.x.len(),
                point.penalty.lambda.len(),
                point.penalty.mu.len(),
                self.n_vars(),
                self.n_equalities(),
                self.n_inequalities()
            )));
        }
        Ok(())
    }

    pub fn zero_penalty(&self, rho: f64) -> Penalty {
        Penalty {
            rho,
            lambda: vec![0.0; self.n_equalities()],
            mu: vec![0.0; self.n_inequalities()],
        }
    }

    /// Augmented Lagrangian
    /// `f/s + Σ λh + ρ/2 Σ h² + 1/(2ρ) Σ (max(0, μ + ρg)² − μ²)`.
    pub fn penalized(&self, x: &[f64], pen: &Penalty) -> f64 {
        if x[..self.vm_buses.len()].iter().any(|&v| !(v > 0.0)) {
            return f64::INFINITY;
        }
        let d = self.derive(x);
        let rho = pen.rho;
        let mut total = self.cost_of(&d, x) / self.cost_scale;
        for (h, l) in self.equalities_of(&d, x).iter().zip(&pen.lambda) {
            total += l * h + 0.5 * rho * h * h;
        }
        for (g, m) in self.inequalities_of(&d, x).iter().zip(&pen.mu) {
            let a = (m + rho * g).max(0.0);
            total += (a * a - m * m) / (2.0 * rho);
        }
        total
    }

    /// Analytic gradient of [`OpfProblem::penalized`] with respect to `x`.
    pub fn gradient(&self, x: &[f64], pen: &Penalty) -> Vec<f64> {
        self.gradient_split(x, pen, None).0
    }

    /// Generalized Hessian: central differences of the gradient with the
    /// set of active inequalities frozen at `x`, so that differencing never
    /// straddles a hinge.
    pub fn hessian(&self, x: &[f64], pen: &Penalty) -> DMatrix<f64> {
        let g = self.inequalities(x);
        let active: Vec<bool> = g.iter().zip(&pen.mu).map(|(gv, m)| m + pen.rho * gv > 0.0).collect();
        fd_hessian(x, |z| self.gradient_split(z, pen, Some(&active)).0)
    }

    /// Gradient plus the cost-only part, both in scaled units. With
    /// `active` given, hinge terms are linearly continued on that set.
    fn gradient_split(&self, x: &[f64], pen: &Penalty, active: Option<&[bool]>) -> (Vec<f64>, Vec<f64>) {
        let d = self.derive(x);
        let n = self.grid.n_buses();
        let off = self.pg_offset();
        let s = self.slack;
        let rho = pen.rho;
        let mut gx = vec![0.0; self.n_vars()];
        let mut wp = vec![0.0; n];
        let mut wq = vec![0.0; n];

        // cost
        let mut cost_grad = vec![0.0; self.n_vars()];
        let slack_marginal = self.base * self.grid.slack.cost.marginal(d.slack_p * self.base) / self.cost_scale;
        for (c, &k) in self.gens.iter().enumerate() {
            cost_grad[off + c] = self.base * self.grid.generators[k].cost.marginal(x[off + c] * self.base) / self.cost_scale;
        }
        for &c in &self.gens_at[s] {
            cost_grad[c] -= slack_marginal;
        }
        let mut wp_cost = vec![0.0; n];
        wp_cost[s] = slack_marginal;
        let (cvm, cva) = injection_vjp(&self.y, &d.state.vm, &d.state.va, &wp_cost, &vec![0.0; n]);
        self.scatter_voltage(&mut cost_grad, &cvm, &cva);
        for (a, b) in gx.iter_mut().zip(&cost_grad) {
            *a += b;
        }

        // equalities
        let h = self.equalities_of(&d, x);
        let np = self.va_buses.len();
        for (e, hv) in h.iter().enumerate() {
            let m = pen.lambda[e] + rho * hv;
            if e < np {
                let i = self.va_buses[e];
                wp[i] += m;
                for &c in &self.gens_at[i] {
                    gx[c] -= m;
                }
            } else {
                wq[self.q_eq_buses[e - np]] += m;
            }
        }

        // inequalities
        let g = self.inequalities_of(&d, x);
        let mut line_w = vec![(0.0, 0.0); self.lines.len()];
        for (j, ((c, gv), mu)) in self.ineqs.iter().zip(&g).zip(&pen.mu).enumerate() {
            let m = match active {
                Some(a) if a[j] => mu + rho * gv,
                Some(_) => 0.0,
                None => (mu + rho * gv).max(0.0),
            };
            if m == 0.0 {
                continue;
            }
            match *c {
                Ineq::VmMax(c) => gx[c] += m,
                Ineq::VmMin(c) => gx[c] -= m,
                Ineq::PgMax(c) => gx[off + c] += m,
                Ineq::PgMin(c) => gx[off + c] -= m,
                Ineq::SlackPMax | Ineq::SlackPMin => {
                    let sign = if matches!(c, Ineq::SlackPMax) { 1.0 } else { -1.0 };
                    wp[s] += sign * m;
                    for &col in &self.gens_at[s] {
                        gx[col] -= sign * m;
                    }
                }
                Ineq::QMax(r) => wq[self.reactive[r].bus] += m,
                Ineq::QMin(r) => wq[self.reactive[r].bus] -= m,
                Ineq::Rating(l, true) => line_w[l].0 += m,
                Ineq::Rating(l, false) => line_w[l].1 += m,
            }
        }

        let (dvm, dva) = injection_vjp(&self.y, &d.state.vm, &d.state.va, &wp, &wq);
        self.scatter_voltage(&mut gx, &dvm, &dva);
        if !self.lines.is_empty() {
            self.add_line_gradient(&mut gx, &d, &line_w);
        }
        (gx, cost_grad)
    }

    fn scatter_voltage(&self, gx: &mut [f64], dvm: &[f64], dva: &[f64]) {
        for i in 0..dvm.len() {
            if self.vm_col[i] != usize::MAX {
                gx[self.vm_col[i]] += dvm[i];
            }
            if self.va_col[i] != usize::MAX {
                gx[self.va_col[i]] += dva[i];
            }
        }
    }

    /// Adds `Σ w ∇|S|²` for branch-end apparent powers.
    fn add_line_gradient(&self, gx: &mut [f64], d: &Derived, weights: &[(f64, f64)]) {
        let v = complex_voltages(&d.state.vm, &d.state.va);
        let j = Complex64::new(0.0, 1.0);
        for (l, &(wf, wt)) in weights.iter().enumerate() {
            if wf == 0.0 && wt == 0.0 {
                continue;
            }
            let st = &self.lines[l].stamp;
            let (f, t) = (st.from, st.to);
            for (w, s, near, far, y_near, y_far) in [
                (wf, d.flows[l].0, f, t, st.yff, st.yft),
                (wt, d.flows[l].1, t, f, st.ytt, st.ytf),
            ] {
                if w == 0.0 {
                    continue;
                }
                let i_near = y_near * v[near] + y_far * v[far];
                // dS = dV_near conj(I) + V_near conj(dI)
                let d_va_near = j * v[near] * i_near.conj() + v[near] * (y_near * j * v[near]).conj();
                let d_va_far = v[near] * (y_far * j * v[far]).conj();
                let u_near = v[near] / d.state.vm[near];
                let u_far = v[far] / d.state.vm[far];
                let d_vm_near = u_near * i_near.conj() + v[near] * (y_near * u_near).conj();
                let d_vm_far = v[near] * (y_far * u_far).conj();
                let dsq = |ds: Complex64| 2.0 * (s.re * ds.re + s.im * ds.im);
                for (bus, dva, dvm) in [(near, d_va_near, d_vm_near), (far, d_va_far, d_vm_far)] {
                    if self.va_col[bus] != usize::MAX {
                        gx[self.va_col[bus]] += w * dsq(dva);
                    }
                    if self.vm_col[bus] != usize::MAX {
                        gx[self.vm_col[bus]] += w * dsq(dvm);
                    }
                }
            }
        }
    }

    /// Gradient of the scaled cost alone.
    pub fn cost_gradient(&self, x: &[f64]) -> Vec<f64> {
        self.gradient_split(x, &self.zero_penalty(1.0), None).1
    }

    /// Unit outputs implied by `x` (slack P and unit Q from the injection
    /// equations).
    pub fn solution(&self, x: &[f64]) -> GridSolution {
        crate::powerflow::recover_units(self.grid, &self.y, &self.state(x), &self.gen_p_mw(x))
    }
}

struct Derived {
    state: VoltageState,
    p: Vec<f64>,
    q: Vec<f64>,
    slack_p: f64,
    flows: Vec<(Complex64, Complex64)>,
}
