use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::grid::{cases, parse_matpower_case, CostCurve};

const SYMMETRIC: &str = "\
mpc.baseMVA = 100;
mpc.bus = [
  1 3 0 0 0 0 1 1 0 230 1 1.1 0.9;
  2 2 0 0 0 0 1 1 0 230 1 1.1 0.9;
  3 2 0 0 0 0 1 1 0 230 1 1.1 0.9;
  4 1 120 30 0 0 1 1 0 230 1 1.1 0.9;
];
mpc.gen = [
  1 0 0 300 -300 1 100 1 300 0;
  2 50 0 300 -300 1 100 1 200 0;
  3 40 0 300 -300 1 100 1 200 0;
];
mpc.branch = [
  1 4 0.01 0.1 0 0 0 0 0 0 1 -360 360;
  2 4 0.02 0.12 0.01 0 0 0 0 0 1 -360 360;
  3 4 0.02 0.12 0.01 0 0 0 0 0 1 -360 360;
];
mpc.gencost = [
  2 0 0 3 0.1 40 0;
  2 0 0 3 0.01 10 0;
  2 0 0 3 0.01 10 0;
];
";

fn random_point(problem: &OpfProblem<'_>, grid: &Grid, rng: &mut ChaCha8Rng, rho: f64) -> OpfPoint {
    let pf = solve_powerflow(grid, &PFOptions::default()).unwrap();
    let mut x = problem.initial_point(&pf.solution.state);
    for v in x.iter_mut() {
        *v += rng.random_range(-0.02..0.02);
    }
    let mut pen = problem.zero_penalty(rho);
    for l in pen.lambda.iter_mut() {
        *l = rng.random_range(-1.0..1.0);
    }
    for m in pen.mu.iter_mut() {
        *m = rng.random_range(0.0..1.0);
    }
    OpfPoint { x, penalty: pen }
}

fn fd_gradient(problem: &OpfProblem<'_>, point: &OpfPoint) -> Vec<f64> {
    let mut x = point.x.clone();
    (0..x.len())
        .map(|j| {
            let h = 1e-6;
            let x0 = x[j];
            x[j] = x0 + h;
            let fp = problem.penalized(&x, &point.penalty);
            x[j] = x0 - h;
            let fm = problem.penalized(&x, &point.penalty);
            x[j] = x0;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

#[test]
fn cost_examples() {
    let mut g = cases::case9();
    for gen in g.generators.iter_mut() {
        gen.cost = CostCurve { a: 1.0, b: 2.0, c: 3.0 };
    }
    g.slack.cost = CostCurve::default();
    assert_eq!(generation_cost(&g, &[2.0, 0.0], 5.0).unwrap(), 17.0 + 1.0);
    g.generators.iter_mut().for_each(|u| u.cost = CostCurve::default());
    assert_eq!(generation_cost(&g, &[12.0, 40.0], 90.0).unwrap(), 0.0);
    assert!(matches!(generation_cost(&g, &[1.0], 0.0), Err(Error::Dimension(_))));
}

#[test]
fn gradient_matches_finite_differences_case9() {
    let g = cases::case9();
    let opts = OPFOptions::default();
    let problem = OpfProblem::new(&g, &opts).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let point = random_point(&problem, &g, &mut rng, 10.0);
        let analytic = opf_gradient(&g, &opts, &point).unwrap();
        let numeric = fd_gradient(&problem, &point);
        assert!(rel_err(&analytic, &numeric) < 1e-5, "{}", rel_err(&analytic, &numeric));
    }
}

#[test]
fn gradient_with_line_ratings_matches_finite_differences() {
    let mut g = cases::case9();
    for br in g.branches.iter_mut() {
        br.rate_mva = 40.0;
    }
    let opts = OPFOptions {
        enforce_line_limits: true,
        ..OPFOptions::default()
    };
    let problem = OpfProblem::new(&g, &opts).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let point = random_point(&problem, &g, &mut rng, 10.0);
    let analytic = problem.gradient(&point.x, &point.penalty);
    assert!(rel_err(&analytic, &fd_gradient(&problem, &point)) < 1e-5);
}

#[test]
fn zero_cost_grid_has_no_cost_gradient() {
    let mut g = cases::case9();
    g.slack.cost = CostCurve::default();
    for gen in g.generators.iter_mut() {
        gen.cost = CostCurve::default();
    }
    let problem = OpfProblem::new(&g, &OPFOptions::default()).unwrap();
    let x = problem.initial_point(&crate::powerflow::flat_start(&g));
    assert!(problem.cost_gradient(&x).iter().all(|&v| v == 0.0));
    assert_eq!(problem.objective(&x), 0.0);
}

#[test]
fn stationary_at_unconstrained_minimum() {
    // No load, pure quadratic costs: zero dispatch at the flat state is the
    // cost minimum and every constraint is slack.
    let text = SYMMETRIC
        .replace("4 1 120 30 0 0", "4 1 0 0 0 0")
        .replace("2 50 0 300", "2 0 0 300")
        .replace("3 40 0 300", "3 0 0 300")
        .replace("0.1 40 0;", "0.1 0 0;")
        .replace("0.01 10 0;", "0.01 0 0;")
        .replace("0.01 0 0 0 0 0 1 -360", "0 0 0 0 0 0 1 -360")
        .replace("1 300 0;", "1 300 -300;")
        .replace("1 200 0;", "1 200 -200;");
    let g = parse_matpower_case(&text).unwrap();
    let problem = OpfProblem::new(&g, &OPFOptions::default()).unwrap();
    let x = problem.initial_point(&crate::powerflow::flat_start(&g));
    let pen = problem.zero_penalty(10.0);
    let grad = problem.gradient(&x, &pen);
    assert!(grad.iter().all(|v| v.abs() < 1e-8), "{grad:?}");
}

#[test]
fn case9_matches_published_optimum() {
    let g = cases::case9();
    let sol = solve_opf(&g, &OPFOptions::default()).unwrap();
    assert!(sol.feasible);
    // published MATPOWER runopf result for case9: 5296.69 $/h
    assert!((sol.objective - 5296.69).abs() < 0.05, "{}", sol.objective);
    assert!(feasibility_check(&g, &sol.solution, 1e-6, 1e-6).unwrap().is_empty());
}

#[test]
fn symmetric_units_share_dispatch() {
    let g = parse_matpower_case(SYMMETRIC).unwrap();
    let sol = solve_opf(&g, &OPFOptions::default()).unwrap();
    assert!(sol.feasible);
    let p = &sol.solution.gen_p_mw;
    assert!((p[0] - p[1]).abs() < 1e-6, "{p:?}");
}

#[test]
fn hundredfold_load_is_infeasible() {
    let mut g = cases::case9();
    for l in g.loads.iter_mut() {
        l.p_mw *= 100.0;
        l.q_mvar *= 100.0;
    }
    assert!(matches!(solve_opf(&g, &OPFOptions::default()), Err(Error::Infeasible(_))));
}

#[test]
fn constant_cost_shift_moves_objective_only() {
    let g = cases::case9();
    let base = solve_opf(&g, &OPFOptions::default()).unwrap();
    let mut shifted = g.clone();
    shifted.slack.cost.a += 100.0;
    for gen in shifted.generators.iter_mut() {
        gen.cost.a += 100.0;
    }
    let s = solve_opf(&shifted, &OPFOptions::default()).unwrap();
    assert!((s.objective - base.objective - 300.0).abs() < 1e-6);
    for (a, b) in s.solution.gen_p_mw.iter().zip(&base.solution.gen_p_mw) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn voltage_violation_is_reported_once() {
    let g = cases::case9();
    let mut sol = solve_opf(&g, &OPFOptions::default()).unwrap().solution;
    sol.state.vm[4] = g.buses[4].max_vm_pu + 0.01;
    let v = feasibility_check(&g, &sol, 1e-6, 1e-6).unwrap();
    let vm: Vec<_> = v.iter().filter(|v| v.kind == ViolationKind::VoltageMagnitude).collect();
    assert_eq!(vm.len(), 1);
    assert_eq!(vm[0].key(), "bus5_bd");
    assert!((vm[0].magnitude - 0.01).abs() < 1e-12);
}

#[test]
fn tightened_q_bound_is_reported() {
    let mut g = cases::case9();
    let pf = solve_powerflow(&g, &PFOptions::default()).unwrap().solution;
    g.generators[0].max_q_mvar = pf.gen_q_mvar[0] - 5.0;
    let pf = solve_powerflow(&g, &PFOptions::default()).unwrap().solution;
    let v = feasibility_check(&g, &pf, 1e-6, 1e-6).unwrap();
    assert_eq!(v.len(), 1);
    assert_eq!(v[0].kind, ViolationKind::GenQ);
    assert_eq!(v[0].key(), "gen2_q");
    assert!((v[0].magnitude - 0.05).abs() < 1e-9);
}

#[test]
fn line_limits_bind_when_enforced() {
    let mut g = cases::case9();
    let free = solve_opf(&g, &OPFOptions::default()).unwrap();
    let y = build_admittance(&g).unwrap();
    let flows = line_flows(&g, &y, &free.solution.state).unwrap();
    let (k, f) = flows
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.loading_percent.partial_cmp(&b.1.loading_percent).unwrap())
        .unwrap();
    let s = f.p_from.hypot(f.q_from).max(f.p_to.hypot(f.q_to));
    g.branches[k].rate_mva = 0.9 * s;
    let opts = OPFOptions {
        enforce_line_limits: true,
        ..OPFOptions::default()
    };
    let limited = solve_opf(&g, &opts).unwrap();
    assert!(limited.feasible);
    assert!(limited.objective > free.objective);
    assert!(feasibility_check_with_ratings(&g, &limited.solution, 1e-6, 1e-6).unwrap().is_empty());
}

#[test]
fn case30_converges_feasible() {
    let g = cases::case30();
    let free = solve_opf(&g, &OPFOptions::default()).unwrap();
    assert!(free.feasible);
    let opts = OPFOptions {
        enforce_line_limits: true,
        ..OPFOptions::default()
    };
    let rated = solve_opf(&g, &opts).unwrap();
    assert!(rated.feasible);
    // published MATPOWER runopf result for case30 (ratings enforced): 576.89 $/h
    assert!((rated.objective - 576.89).abs() < 0.05, "{}", rated.objective);
    assert!(free.objective <= rated.objective);
}
