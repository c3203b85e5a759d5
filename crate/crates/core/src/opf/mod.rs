//! AC optimal power flow: minimum quadratic generation cost subject to the
//! bus-injection equations and unit / voltage boxes.
//!
//! Solved with an augmented Lagrangian over the reduced variable set of
//! [`OpfProblem`]; each subproblem is minimized by damped Newton, and the
//! final controls are re-solved with the power flow so the returned state
//! satisfies the network equations to solver precision.

mod newton;
mod problem;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{build_admittance, structural_violations, Grid};
use crate::powerflow::{
    bus_balance_residuals, check_topology, line_flows, recover_units, solve_powerflow, solve_powerflow_from,
    GridSolution, PFOptions,
};

pub use problem::{OpfPoint, OpfProblem, Penalty};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OPFOptions {
    /// Bus balance tolerance [p.u.]
    pub eq_tol: f64,
    /// Box tolerance [p.u.]
    pub ineq_tol: f64,
    pub max_outer: usize,
    pub penalty_growth: f64,
    pub enforce_line_limits: bool,
}

impl Default for OPFOptions {
    fn default() -> Self {
        OPFOptions {
            eq_tol: 1e-6,
            ineq_tol: 1e-6,
            max_outer: 50,
            penalty_growth: 10.0,
            enforce_line_limits: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OPFSolution {
    pub solution: GridSolution,
    /// Total generation cost [currency]
    pub objective: f64,
    /// Infinity norm of the Lagrangian gradient at the last iterate, in
    /// cost-scaled units.
    pub kkt_residual: f64,
    pub feasible: bool,
    pub outer_iterations: usize,
}

/// `Σ c·P² + b·P + a` over in-service generators and the slack.
pub fn generation_cost(grid: &Grid, gen_p_mw: &[f64], slack_p_mw: f64) -> Result<f64> {
    if gen_p_mw.len() != grid.generators.len() {
        return Err(Error::Dimension(format!(
            "dispatch has {} generator entries, grid `{}` has {}",
            gen_p_mw.len(),
            grid.name,
            grid.generators.len()
        )));
    }
    let units: f64 = grid
        .generators
        .iter()
        .zip(gen_p_mw)
        .filter(|(g, _)| g.in_service)
        .map(|(g, &p)| g.cost.eval(p))
        .sum();
    Ok(units + grid.slack.cost.eval(slack_p_mw))
}

/// Gradient of the augmented Lagrangian at `point`.
pub fn opf_gradient(grid: &Grid, options: &OPFOptions, point: &OpfPoint) -> Result<Vec<f64>> {
    let problem = OpfProblem::new(grid, options)?;
    problem.check(point)?;
    Ok(problem.gradient(&point.x, &point.penalty))
}

/// Value of the augmented Lagrangian at `point`.
pub fn opf_penalized(grid: &Grid, options: &OPFOptions, point: &OpfPoint) -> Result<f64> {
    let problem = OpfProblem::new(grid, options)?;
    problem.check(point)?;
    Ok(problem.penalized(&point.x, &point.penalty))
}

fn check_options(o: &OPFOptions) -> Result<()> {
    if !(o.eq_tol > 0.0) || !(o.ineq_tol > 0.0) || !(o.penalty_growth > 1.0) || o.max_outer == 0 {
        return Err(Error::InvalidArgument(
            "OPF options need positive tolerances, penalty_growth > 1 and max_outer >= 1".into(),
        ));
    }
    Ok(())
}

fn check_capacity(grid: &Grid) -> Result<()> {
    let capacity: f64 = grid.slack.max_p_mw
        + grid
            .generators
            .iter()
            .filter(|g| g.in_service)
            .map(|g| g.max_p_mw)
            .sum::<f64>();
    let load = grid.total_load_mw();
    if capacity < load {
        return Err(Error::Infeasible(format!(
            "total unit capacity {capacity:.3} MW is below total load {load:.3} MW"
        )));
    }
    Ok(())
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn max_violation(g: &[f64]) -> f64 {
    g.iter().fold(0.0f64, |m, &x| m.max(x))
}

pub fn solve_opf(grid: &Grid, options: &OPFOptions) -> Result<OPFSolution> {
    check_options(options)?;
    let violations = structural_violations(grid);
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    check_topology(grid)?;
    check_capacity(grid)?;

    let problem = OpfProblem::new(grid, options)?;
    let start = match solve_powerflow(grid, &PFOptions::default()) {
        Ok(r) => r.solution.state,
        Err(_) => crate::powerflow::flat_start(grid),
    };
    let mut x = problem.initial_point(&start);
    let mut pen = problem.zero_penalty(10.0);

    // The penalty loop targets tighter residuals than requested so that
    // the final power flow re-solve stays within tolerance.
    let eq_target = 1e-3 * options.eq_tol;
    let ineq_target = 1e-3 * options.ineq_tol;
    let inner = newton::NewtonOptions {
        grad_tol: 1e-9,
        max_iter: 100,
    };

    let mut prev = f64::INFINITY;
    let mut outer = 0;
    let mut kkt = f64::INFINITY;
    let mut done = false;
    while outer < options.max_outer {
        outer += 1;
        let out = newton::minimize(
            |z| problem.penalized(z, &pen),
            |z| problem.gradient(z, &pen),
            |z| problem.hessian(z, &pen),
            x,
            &inner,
        );
        x = out.x;
        kkt = out.grad_norm;
        let h = problem.equalities(&x);
        let g = problem.inequalities(&x);
        let eq_res = inf_norm(&h);
        let viol = max_violation(&g);
        for (l, hv) in pen.lambda.iter_mut().zip(&h) {
            *l += pen.rho * hv;
        }
        for (m, gv) in pen.mu.iter_mut().zip(&g) {
            *m = (*m + pen.rho * gv).max(0.0);
        }
        if eq_res <= eq_target && viol <= ineq_target && out.grad_norm <= 1e-6 {
            done = true;
            break;
        }
        let worst = eq_res.max(viol);
        if worst > 0.25 * prev && (eq_res > eq_target || viol > ineq_target) {
            pen.rho *= options.penalty_growth;
        }
        prev = worst;
    }
    if !done {
        return Err(Error::OpfNonConvergence {
            outer,
            eq_residual: inf_norm(&problem.equalities(&x)),
            ineq_violation: max_violation(&problem.inequalities(&x)),
            objective: problem.objective(&x),
        });
    }

    let solution = polish(grid, &problem, &x);
    let objective = generation_cost(grid, &solution.gen_p_mw, solution.slack_p_mw)?;
    let feasible = feasibility_check(grid, &solution, options.eq_tol, options.ineq_tol)?.is_empty()
        && (!options.enforce_line_limits
            || feasibility_check_with_ratings(grid, &solution, options.eq_tol, options.ineq_tol)?.is_empty());
    Ok(OPFSolution {
        solution,
        objective,
        kkt_residual: kkt,
        feasible,
        outer_iterations: outer,
    })
}

/// Fixes the controls (unit P, regulated magnitudes) and re-solves the
/// power flow from the optimizer's state. Falls back to the unpolished
/// point if that solve fails.
fn polish(grid: &Grid, problem: &OpfProblem<'_>, x: &[f64]) -> GridSolution {
    let state = problem.state(x);
    let gen_p = problem.gen_p_mw(x);
    let idx = grid.bus_index();
    let mut fixed = grid.clone();
    for (k, g) in fixed.generators.iter_mut().enumerate() {
        if g.in_service {
            g.p_mw = gen_p[k];
            g.vm_pu = state.vm[idx[&g.bus]];
        }
    }
    fixed.slack.vm_pu = state.vm[idx[&grid.slack.bus]];
    let opts = PFOptions {
        tol: 1e-11,
        max_iter: 10,
        flat_start: false,
    };
    match solve_powerflow_from(&fixed, &opts, Some(&state)) {
        Ok(r) => recover_units(grid, problem.admittance(), &r.solution.state, &gen_p),
        Err(_) => problem.solution(x),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// Largest of |ΔP|, |ΔQ| at a bus.
    PowerBalance,
    VoltageMagnitude,
    GenP,
    GenQ,
    SlackP,
    SlackQ,
    LineRating,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Bus, generator or branch id; `None` for the slack.
    pub element: Option<usize>,
    /// Amount beyond the limit, in p.u. (voltage, power) or percent
    /// (line rating).
    pub magnitude: f64,
}

impl Violation {
    pub fn key(&self) -> String {
        let id = self.element.unwrap_or_default();
        match self.kind {
            ViolationKind::PowerBalance => format!("bus{id}_pf"),
            ViolationKind::VoltageMagnitude => format!("bus{id}_bd"),
            ViolationKind::GenP => format!("gen{id}_p"),
            ViolationKind::GenQ => format!("gen{id}_q"),
            ViolationKind::SlackP => "slack_p".to_string(),
            ViolationKind::SlackQ => "slack_q".to_string(),
            ViolationKind::LineRating => format!("line{id}_rate"),
        }
    }
}

fn excess(value: f64, lo: f64, hi: f64) -> f64 {
    (value - hi).max(lo - value).max(0.0)
}

/// Bus balance, voltage and unit boxes violated beyond the tolerances.
pub fn feasibility_check(grid: &Grid, solution: &GridSolution, eq_tol: f64, ineq_tol: f64) -> Result<Vec<Violation>> {
    solution.check_shape(grid)?;
    let y = build_admittance(grid)?;
    let (dp, dq) = bus_balance_residuals(grid, &y, solution)?;
    let base = grid.base_mva;
    let mut out = Vec::new();
    let mut push = |kind, element, magnitude: f64, tol: f64| {
        if magnitude > tol {
            out.push(Violation { kind, element, magnitude });
        }
    };
    for (i, b) in grid.buses.iter().enumerate() {
        if !b.in_service {
            continue;
        }
        push(ViolationKind::PowerBalance, Some(b.id), dp[i].abs().max(dq[i].abs()), eq_tol);
        push(
            ViolationKind::VoltageMagnitude,
            Some(b.id),
            excess(solution.state.vm[i], b.min_vm_pu, b.max_vm_pu),
            ineq_tol,
        );
    }
    for (k, g) in grid.generators.iter().enumerate() {
        if !g.in_service {
            continue;
        }
        push(
            ViolationKind::GenP,
            Some(g.id),
            excess(solution.gen_p_mw[k], g.min_p_mw, g.max_p_mw) / base,
            ineq_tol,
        );
        push(
            ViolationKind::GenQ,
            Some(g.id),
            excess(solution.gen_q_mvar[k], g.min_q_mvar, g.max_q_mvar) / base,
            ineq_tol,
        );
    }
    let s = &grid.slack;
    push(
        ViolationKind::SlackP,
        None,
        excess(solution.slack_p_mw, s.min_p_mw, s.max_p_mw) / base,
        ineq_tol,
    );
    push(
        ViolationKind::SlackQ,
        None,
        excess(solution.slack_q_mvar, s.min_q_mvar, s.max_q_mvar) / base,
        ineq_tol,
    );
    Ok(out)
}

/// [`feasibility_check`] plus branch thermal ratings (tolerance applied to
/// the loading fraction).
pub fn feasibility_check_with_ratings(
    grid: &Grid,
    solution: &GridSolution,
    eq_tol: f64,
    ineq_tol: f64,
) -> Result<Vec<Violation>> {
    let mut out = feasibility_check(grid, solution, eq_tol, ineq_tol)?;
    let y = build_admittance(grid)?;
    for f in line_flows(grid, &y, &solution.state)? {
        if let Some(lp) = f.loading_percent {
            if lp / 100.0 - 1.0 > ineq_tol {
                out.push(Violation {
                    kind: ViolationKind::LineRating,
                    element: Some(f.branch_id),
                    magnitude: lp - 100.0,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
