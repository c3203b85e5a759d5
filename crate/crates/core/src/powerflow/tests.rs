use super::*;
use crate::grid::{cases, parse_matpower_case};

fn two_bus(load_mw: f64, load_mvar: f64) -> Grid {
    let text = format!(
        "mpc.baseMVA = 100;\n\
         mpc.bus = [1 3 0 0 0 0 1 1 0 230 1 1.1 0.9; 2 1 {load_mw} {load_mvar} 0 0 1 1 0 230 1 1.1 0.9];\n\
         mpc.gen = [1 0 0 300 -300 1 100 1 300 0];\n\
         mpc.branch = [1 2 0 0.1 0 0 0 0 0 0 1 -360 360];\n"
    );
    parse_matpower_case(&text).unwrap()
}

fn fd_jacobian(grid: &Grid, y: &AdmittanceMatrix, state: &VoltageState, h: f64) -> DMatrix<f64> {
    let layout = PfLayout::new(grid).unwrap();
    let m = layout.n_unknowns();
    let npvpq = layout.pvpq.len();
    let mut jac = DMatrix::zeros(m, m);
    for c in 0..m {
        let perturbed = |delta: f64| {
            let mut s = state.clone();
            if c < npvpq {
                s.va[layout.pvpq[c]] += delta;
            } else {
                s.vm[layout.pq[c - npvpq]] += delta;
            }
            pf_mismatch(grid, y, &s).unwrap()
        };
        let (fp, fm) = (perturbed(h), perturbed(-h));
        for r in 0..m {
            jac[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    jac
}

#[test]
fn flat_zero_injection_mismatch_is_exactly_zero() {
    let g = two_bus(0.0, 0.0);
    let y = build_admittance(&g).unwrap();
    let m = pf_mismatch(&g, &y, &flat_start(&g)).unwrap();
    assert_eq!(m, vec![0.0, 0.0]);
}

#[test]
fn two_bus_mismatch_closed_form() {
    let g = two_bus(50.0, 0.0);
    let y = build_admittance(&g).unwrap();
    let state = VoltageState {
        vm: vec![1.0, 1.0],
        va: vec![0.0, -0.01],
    };
    let m = pf_mismatch(&g, &y, &state).unwrap();
    // P_2 = (v1 v2 / x) sin(θ2 − θ1) = −10 sin(0.01)
    assert!((m[0] - (-0.5 + 10.0 * 0.01f64.sin())).abs() < 1e-14);
}

#[test]
fn mismatch_rejects_wrong_dimensions() {
    let g = cases::case9();
    let y = build_admittance(&g).unwrap();
    let s = VoltageState {
        vm: vec![1.0; 3],
        va: vec![0.0; 3],
    };
    assert!(matches!(pf_mismatch(&g, &y, &s), Err(Error::Dimension(_))));
}

#[test]
fn two_bus_closed_form_angle() {
    let (p_mw, x) = (80.0, 0.1);
    let g = two_bus(p_mw, 0.0);
    let r = solve_powerflow(&g, &PFOptions::default()).unwrap();
    let (v1, v2) = (r.solution.state.vm[0], r.solution.state.vm[1]);
    let expected = (-(p_mw / 100.0) * x / (v1 * v2)).asin();
    assert!((r.solution.state.va[1] - expected).abs() < 1e-10);
    assert!((r.solution.slack_p_mw - p_mw).abs() < 1e-6);
}

#[test]
fn jacobian_matches_finite_differences_case9() {
    let g = cases::case9();
    let y = build_admittance(&g).unwrap();
    let state = VoltageState {
        vm: (0..9).map(|i| 0.97 + 0.007 * i as f64).collect(),
        va: (0..9).map(|i| 0.03 * (i as f64 - 4.0)).collect(),
    };
    let analytic = pf_jacobian(&g, &y, &state).unwrap().to_dense();
    let numeric = fd_jacobian(&g, &y, &state, 1e-6);
    let scale = numeric.amax().max(1.0);
    assert!((analytic - numeric).amax() / scale < 1e-6);
}

#[test]
fn two_bus_dq_dv_diagonal() {
    let g = two_bus(30.0, 10.0);
    let y = build_admittance(&g).unwrap();
    let state = flat_start(&g);
    let jac = pf_jacobian(&g, &y, &state).unwrap();
    // ΔQ_2 = Q_spec + B22 V2² + V2 V1 (B21 cos θ21 − G21 sin θ21)
    let (b22, b21) = (y.get(1, 1).im, y.get(1, 0).im);
    let expected = 2.0 * b22 * state.vm[1] + state.vm[0] * b21;
    assert!((jac.get(1, 1) - expected).abs() < 1e-12);
    let numeric = fd_jacobian(&g, &y, &state, 1e-6);
    assert!((jac.get(1, 1) - numeric[(1, 1)]).abs() < 1e-6 * expected.abs());
}

#[test]
fn single_bus_grid_has_empty_jacobian() {
    let text = "mpc.baseMVA = 100;\n\
                mpc.bus = [1 3 0 0 0 0 1 1 0 230 1 1.1 0.9];\n\
                mpc.gen = [1 0 0 100 -100 1 100 1 200 0];\n\
                mpc.branch = zeros(0, 13);\n";
    let g = match parse_matpower_case(text) {
        Ok(g) => g,
        Err(_) => {
            let mut g = two_bus(0.0, 0.0);
            g.buses.truncate(1);
            g.branches.clear();
            g
        }
    };
    let y = build_admittance(&g).unwrap();
    let j = pf_jacobian(&g, &y, &flat_start(&g)).unwrap();
    assert_eq!((j.nrows(), j.ncols()), (0, 0));
    let r = solve_powerflow(&g, &PFOptions::default()).unwrap();
    assert_eq!(r.iterations, 0);
}

#[test]
fn zero_load_grid_is_flat() {
    let g = two_bus(0.0, 0.0);
    let r = solve_powerflow(&g, &PFOptions::default()).unwrap();
    assert!(r.iterations <= 1);
    assert_eq!(r.solution.slack_p_mw, 0.0);
    assert_eq!(r.solution.state.va, vec![0.0, 0.0]);
}

#[test]
fn case9_converges_quickly() {
    let g = cases::case9();
    let r = solve_powerflow(&g, &PFOptions::default()).unwrap();
    assert!(r.iterations <= 10);
    let y = build_admittance(&g).unwrap();
    assert!(inf_norm(&pf_mismatch(&g, &y, &r.solution.state).unwrap()) < 1e-8);
    // PV magnitudes sit at their setpoints
    for gen in &g.generators {
        let i = g.bus_index()[&gen.bus];
        assert_eq!(r.solution.state.vm[i], gen.vm_pu);
    }
    // published MATPOWER runpf output for case9: slack 71.95 MW, 24.07 MVAr
    assert!((r.solution.slack_p_mw - 71.95).abs() < 0.01, "{}", r.solution.slack_p_mw);
    assert!((r.solution.slack_q_mvar - 24.07).abs() < 0.01, "{}", r.solution.slack_q_mvar);
}

#[test]
fn islanded_bus_is_a_topology_error() {
    let mut g = cases::case9();
    for br in g.branches.iter_mut() {
        if br.from_bus == 9 || br.to_bus == 9 {
            br.in_service = false;
        }
    }
    assert!(matches!(
        solve_powerflow(&g, &PFOptions::default()),
        Err(Error::Topology(_))
    ));
}

#[test]
fn iteration_budget_exhaustion_is_divergence() {
    let g = cases::case9();
    let opts = PFOptions {
        max_iter: 1,
        ..PFOptions::default()
    };
    assert!(matches!(solve_powerflow(&g, &opts), Err(Error::Divergence { iterations: 1, .. })));
}

#[test]
fn impossible_load_diverges() {
    let g = two_bus(5000.0, 0.0);
    let err = solve_powerflow(&g, &PFOptions::default()).unwrap_err();
    assert!(err.is_numerical(), "{err}");
}

#[test]
fn warm_start_reaches_same_solution() {
    let g = cases::case30();
    let cold = solve_powerflow(&g, &PFOptions::default()).unwrap();
    let opts = PFOptions {
        flat_start: false,
        ..PFOptions::default()
    };
    let warm = solve_powerflow_from(&g, &opts, Some(&cold.solution.state)).unwrap();
    assert!(warm.iterations <= 1);
    for (a, b) in warm.solution.state.vm.iter().zip(&cold.solution.state.vm) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn solve_is_deterministic() {
    let g = cases::case118();
    let a = solve_powerflow(&g, &PFOptions::default()).unwrap();
    let b = solve_powerflow(&g, &PFOptions::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn reactive_split_respects_ranges() {
    let q = split_reactive(30.0, &[(0.0, 10.0), (0.0, 30.0)]);
    assert!((q[0] - 7.5).abs() < 1e-12 && (q[1] - 22.5).abs() < 1e-12);
    assert_eq!(split_reactive(4.0, &[(0.0, 0.0), (0.0, 0.0)]), vec![2.0, 2.0]);
}

#[test]
fn balance_residuals_vanish_at_solution() {
    for g in [cases::case9(), cases::case30()] {
        let r = solve_powerflow(&g, &PFOptions::default()).unwrap();
        let y = build_admittance(&g).unwrap();
        let (dp, dq) = bus_balance_residuals(&g, &y, &r.solution).unwrap();
        assert!(inf_norm(&dp) < 1e-8 && inf_norm(&dq) < 1e-8);
    }
}
