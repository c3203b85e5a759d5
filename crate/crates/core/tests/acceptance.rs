//! Acceptance gate: one PASS/FAIL line per criterion. Runs without the libtest
//! harness so the lines always reach stdout; exits non-zero if any fails.

use std::collections::VecDeque;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gridsafe::baseline::mean_predictor;
use gridsafe::cli;
use gridsafe::embed::{embed_grid, export_dataset, import_dataset, dataset_digest, EntryRecord, TRAIN_FILE};
use gridsafe::eval::{constraint_report, EvalConfig, EvalReport};
use gridsafe::grid::{build_admittance, cases, parse_matpower_case, BusType, Grid};
use gridsafe::opf::{feasibility_check, solve_opf, OPFOptions};
use gridsafe::perturb::{generate_dataset, mutate, DatasetConfig, MutationSpec, Scenario, Task};
use gridsafe::powerflow::{
    pf_jacobian, pf_mismatch, power_balance_residual, solve_powerflow, solve_powerflow_from, GridSolution, PFOptions,
    VoltageState,
};
use gridsafe::Error;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

// ---------------------------------------------------------------- criterion 1

fn two_bus(load_mw: f64) -> Grid {
    let text = format!(
        "mpc.baseMVA = 100;\n\
         mpc.bus = [1 3 0 0 0 0 1 1.0 0 230 1 1.1 0.9; 2 1 {load_mw} 0 0 0 1 1 0 230 1 1.1 0.9];\n\
         mpc.gen = [1 0 0 300 -300 1.0 100 1 300 0];\n\
         mpc.branch = [1 2 0 0.1 0 0 0 0 0 0 1 -360 360];\n"
    );
    parse_matpower_case(&text).unwrap()
}

fn c1_two_bus() -> Outcome {
    let (p, x) = (0.5, 0.1);
    let g = two_bus(p * 100.0);
    // Warm the allocator and code paths once; time the second solve.
    solve_powerflow(&g, &PFOptions::default()).unwrap();
    let t = Instant::now();
    let r = solve_powerflow(&g, &PFOptions::default()).unwrap();
    let dt = t.elapsed();
    let (v1, v2) = (r.solution.state.vm[0], r.solution.state.vm[1]);
    let expected = (-p * x / (v1 * v2)).asin();
    let err = (r.solution.state.va[1] - expected).abs();
    outcome(
        err <= 1e-10 && dt < Duration::from_millis(1),
        format!("|theta2 - asin(-Px/(v1 v2))| = {err:.2e} (tol 1e-10), solve {:.3} ms (limit 1 ms)", ms(dt)),
    )
}

// ---------------------------------------------------------------- criterion 2

fn c2_residuals() -> Outcome {
    let t = Instant::now();
    let mut worst = 0.0f64;
    let mut iters = Vec::new();
    for name in cases::BUNDLED {
        let g = cases::bundled(name).unwrap();
        let r = solve_powerflow(&g, &PFOptions::default()).unwrap();
        let y = build_admittance(&g).unwrap();
        worst = worst.max(max_abs(&pf_mismatch(&g, &y, &r.solution.state).unwrap()));
        iters.push(r.iterations);
    }
    let dt = t.elapsed();
    let max_it = iters.iter().copied().max().unwrap();
    outcome(
        worst <= 1e-8 && max_it <= 30 && dt < Duration::from_secs(5),
        format!(
            "max |mismatch| = {worst:.2e} p.u. (tol 1e-8), iterations {iters:?} (limit 30), {:.1} ms (limit 5 s)",
            ms(dt)
        ),
    )
}

// ---------------------------------------------------------------- criterion 3

/// Unknown ordering derived independently: angles at every in-service
/// non-slack bus, then magnitudes at in-service PQ buses, both in bus order.
fn unknowns(g: &Grid) -> (Vec<usize>, Vec<usize>) {
    let types = g.effective_bus_types();
    let live = |i: usize| g.buses[i].in_service;
    let pvpq = (0..g.n_buses()).filter(|&i| live(i) && types[i] != BusType::Slack).collect();
    let pq = (0..g.n_buses()).filter(|&i| live(i) && types[i] == BusType::PQ).collect();
    (pvpq, pq)
}

fn c3_jacobian() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for name in cases::BUNDLED {
        let g = cases::bundled(name).unwrap();
        let y = build_admittance(&g).unwrap();
        let (pvpq, pq) = unknowns(&g);
        let m = pvpq.len() + pq.len();
        for _ in 0..20 {
            let state = VoltageState {
                vm: (0..g.n_buses()).map(|_| rng.random_range(0.95..1.05)).collect(),
                va: (0..g.n_buses()).map(|_| rng.random_range(-0.3..0.3)).collect(),
            };
            let jac = pf_jacobian(&g, &y, &state).unwrap().to_dense();
            assert_eq!((jac.nrows(), jac.ncols()), (m, m));
            let h = 1e-6;
            let mut diff = 0.0f64;
            let mut scale = 1.0f64;
            for c in 0..m {
                let shifted = |d: f64| {
                    let mut s = state.clone();
                    if c < pvpq.len() {
                        s.va[pvpq[c]] += d;
                    } else {
                        s.vm[pq[c - pvpq.len()]] += d;
                    }
                    pf_mismatch(&g, &y, &s).unwrap()
                };
                let (fp, fm) = (shifted(h), shifted(-h));
                for r in 0..m {
                    let fd = (fp[r] - fm[r]) / (2.0 * h);
                    diff = diff.max((jac[(r, c)] - fd).abs());
                    scale = scale.max(jac[(r, c)].abs());
                }
            }
            worst = worst.max(diff / scale);
        }
    }
    outcome(
        worst < 1e-6,
        format!("max relative |J - J_fd| = {worst:.2e} over 20 states x 3 cases (tol 1e-6)"),
    )
}

// ---------------------------------------------------------------- criterion 4

fn c4_balance() -> Outcome {
    let mut solved: Vec<(Grid, GridSolution)> = Vec::new();
    let g = two_bus(50.0);
    let s = solve_powerflow(&g, &PFOptions::default()).unwrap().solution;
    solved.push((g, s));
    for name in cases::BUNDLED {
        let g = cases::bundled(name).unwrap();
        let s = solve_powerflow(&g, &PFOptions::default()).unwrap().solution;
        solved.push((g, s));
    }
    for name in ["case9", "case30"] {
        let g = cases::bundled(name).unwrap();
        let s = solve_opf(&g, &OPFOptions::default()).unwrap().solution;
        solved.push((g, s));
    }
    let base = cases::case9();
    for k in 0..base.branches.len() {
        let mut g = base.clone();
        g.branches[k].in_service = false;
        if let Ok(r) = solve_powerflow(&g, &PFOptions::default()) {
            solved.push((g, r.solution));
        }
    }
    let worst = solved
        .iter()
        .map(|(g, s)| power_balance_residual(g, &build_admittance(g).unwrap(), s).unwrap().abs())
        .fold(0.0f64, f64::max);
    outcome(
        worst <= 1e-7,
        format!("max |gen - load - losses| = {worst:.2e} p.u. over {} solves (tol 1e-7)", solved.len()),
    )
}

// ---------------------------------------------------------------- criterion 5

struct Search<'a> {
    base: &'a Grid,
    warm: Option<VoltageState>,
}

impl Search<'_> {
    /// Cost of dispatching (p2, p3) with the slack balancing, or None when
    /// the power flow fails or any bound is violated. Bounds and cost are
    /// evaluated here, independently of the OPF module.
    fn cost(&mut self, p2: f64, p3: f64) -> Option<f64> {
        let mut g = self.base.clone();
        g.generators[0].p_mw = p2;
        g.generators[1].p_mw = p3;
        let opts = PFOptions {
            flat_start: false,
            ..PFOptions::default()
        };
        let s = solve_powerflow_from(&g, &opts, self.warm.as_ref()).ok()?.solution;
        self.warm = Some(s.state.clone());
        let tol = 1e-6 * g.base_mva;
        let inside = |v: f64, lo: f64, hi: f64, t: f64| v >= lo - t && v <= hi + t;
        let ok = g
            .buses
            .iter()
            .zip(&s.state.vm)
            .all(|(b, &v)| inside(v, b.min_vm_pu, b.max_vm_pu, 1e-6))
            && g.generators.iter().enumerate().all(|(k, u)| {
                inside(s.gen_p_mw[k], u.min_p_mw, u.max_p_mw, tol) && inside(s.gen_q_mvar[k], u.min_q_mvar, u.max_q_mvar, tol)
            })
            && inside(s.slack_p_mw, g.slack.min_p_mw, g.slack.max_p_mw, tol)
            && inside(s.slack_q_mvar, g.slack.min_q_mvar, g.slack.max_q_mvar, tol);
        if !ok {
            return None;
        }
        let q = |c: &gridsafe::grid::CostCurve, p: f64| c.c * p * p + c.b * p + c.a;
        Some(
            g.generators.iter().zip(&s.gen_p_mw).map(|(u, &p)| q(&u.cost, p)).sum::<f64>()
                + q(&g.slack.cost, s.slack_p_mw),
        )
    }
}

fn brute_force_case9() -> (f64, f64, f64) {
    let base = cases::case9();
    let mut search = Search { base: &base, warm: None };
    let (lo2, hi2) = (base.generators[0].min_p_mw, base.generators[0].max_p_mw);
    let (lo3, hi3) = (base.generators[1].min_p_mw, base.generators[1].max_p_mw);
    let mut best = (f64::INFINITY, 0.0, 0.0);
    let mut p2 = lo2;
    while p2 <= hi2 {
        let mut p3 = lo3;
        while p3 <= hi3 {
            if let Some(c) = search.cost(p2, p3) {
                if c < best.0 {
                    best = (c, p2, p3);
                }
            }
            p3 += 1.0;
        }
        p2 += 1.0;
    }
    // Refine around the incumbent at 0.1 MW, then 0.01 MW.
    for step in [0.1, 0.01] {
        let (c2, c3) = (best.1, best.2);
        for i in -10..=10 {
            for j in -10..=10 {
                let (a, b) = (c2 + i as f64 * step, c3 + j as f64 * step);
                if let Some(c) = search.cost(a, b) {
                    if c < best.0 {
                        best = (c, a, b);
                    }
                }
            }
        }
    }
    best
}

fn c5_opf_brute_force() -> Outcome {
    let t = Instant::now();
    let g = cases::case9();
    let sol = solve_opf(&g, &OPFOptions::default()).unwrap();
    let violations = feasibility_check(&g, &sol.solution, 1e-6, 1e-6).unwrap();
    let (oracle, p2, p3) = brute_force_case9();
    let dt = t.elapsed();
    let rel = (sol.objective - oracle).abs() / oracle;
    outcome(
        rel <= 5e-3 && violations.is_empty() && dt < Duration::from_secs(60),
        format!(
            "OPF {:.3} vs grid search {oracle:.3} at ({p2:.2}, {p3:.2}) MW: rel {rel:.2e} (tol 5e-3), \
             {} violations, {:.1} s (limit 60 s)",
            sol.objective,
            violations.len(),
            dt.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- criterion 6

/// Breadth-first reachability from the slack over in-service branches.
fn islanded(g: &Grid) -> bool {
    let idx = g.bus_index();
    let mut seen = vec![false; g.n_buses()];
    let mut queue = VecDeque::from([idx[&g.slack.bus]]);
    seen[idx[&g.slack.bus]] = true;
    while let Some(i) = queue.pop_front() {
        for br in g.branches.iter().filter(|b| b.in_service) {
            let (f, t) = (idx[&br.from_bus], idx[&br.to_bus]);
            let next = if f == i {
                t
            } else if t == i {
                f
            } else {
                continue;
            };
            if !seen[next] {
                seen[next] = true;
                queue.push_back(next);
            }
        }
    }
    g.buses.iter().zip(&seen).any(|(b, &s)| b.in_service && !s)
}

fn c6_n_minus_one() -> Outcome {
    let base = cases::case9();
    let (mut converged, mut rejected, mut wrong) = (0, 0, Vec::new());
    for k in 0..base.branches.len() {
        let mut g = base.clone();
        g.branches[k].in_service = false;
        let island = islanded(&g);
        match (island, solve_powerflow(&g, &PFOptions::default())) {
            (false, Ok(r)) => {
                let y = build_admittance(&g).unwrap();
                if max_abs(&pf_mismatch(&g, &y, &r.solution.state).unwrap()) <= 1e-8 {
                    converged += 1;
                } else {
                    wrong.push(base.branches[k].id);
                }
            }
            (true, Err(Error::Topology(_))) => rejected += 1,
            _ => wrong.push(base.branches[k].id),
        }
    }
    outcome(
        wrong.is_empty() && converged + rejected == base.branches.len(),
        format!("{converged} outages converged, {rejected} islanding outages rejected, wrong: {wrong:?}"),
    )
}

// ---------------------------------------------------------------- criterion 7

fn c7_purity() -> Outcome {
    let base = cases::case9();
    let mut bad = Vec::new();
    for scenario in [Scenario::LoadVariation, Scenario::PriceVariation, Scenario::LineOutage] {
        let spec = MutationSpec::new(scenario, 77);
        for d in 0..1000u64 {
            let (m, _) = mutate(&base, &spec, d).unwrap();
            // Copy the allowed fields back from the mutant; what remains
            // must equal the base exactly.
            let mut restored = m.clone();
            let ok = match scenario {
                Scenario::LoadVariation => {
                    for (r, b) in restored.loads.iter_mut().zip(&base.loads) {
                        r.p_mw = b.p_mw;
                        r.q_mvar = b.q_mvar;
                    }
                    true
                }
                Scenario::PriceVariation => {
                    for (r, b) in restored.generators.iter_mut().zip(&base.generators) {
                        r.cost.b = b.cost.b;
                    }
                    restored.slack.cost.b = base.slack.cost.b;
                    true
                }
                _ => {
                    let flipped: Vec<usize> = (0..base.branches.len())
                        .filter(|&k| m.branches[k].in_service != base.branches[k].in_service)
                        .collect();
                    for r in restored.branches.iter_mut() {
                        r.in_service = true;
                    }
                    flipped.len() == 1
                }
            };
            if !ok || restored != base {
                bad.push((scenario, d));
            }
        }
    }
    outcome(bad.is_empty(), format!("3000 mutants, impure: {}", bad.len()))
}

// ---------------------------------------------------------------- criterion 8

fn c8_reproducibility() -> Outcome {
    let g = cases::case9();
    let cfg = |workers| DatasetConfig {
        workers,
        ..DatasetConfig::new(Task::Pf, 31337)
    };
    let t = Instant::now();
    let a = generate_dataset(&g, &cfg(1)).unwrap();
    let dt = t.elapsed();
    let b = generate_dataset(&g, &cfg(8)).unwrap();
    let c = generate_dataset(&g, &cfg(1)).unwrap();
    let (da, db, dc) = (
        dataset_digest(&a).unwrap(),
        dataset_digest(&b).unwrap(),
        dataset_digest(&c).unwrap(),
    );
    outcome(
        da == db && da == dc && a.train.len() + a.test.len() == 1000 && dt < Duration::from_secs(120),
        format!(
            "digests w1 {} / w8 {} / rerun {} , 1000 mutants in {:.2} s (limit 120 s)",
            &da[..12],
            &db[..12],
            &dc[..12],
            dt.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- criterion 9

fn run_cli(args: &[&str]) -> i32 {
    cli::run(std::iter::once("gridsafe").chain(args.iter().copied()))
}

fn c9_oracle_zero(root: &Path) -> Outcome {
    let configs: [(&str, &str, &str, &str, &str); 6] = [
        ("case9", "pf", "id", "160", "40"),
        ("case9", "pf", "outage", "40", "40"),
        ("case9", "pf", "price", "40", "40"),
        ("case9", "opf", "id", "40", "40"),
        ("case9", "opf", "outage", "20", "20"),
        ("case30", "pf", "id", "40", "40"),
    ];
    let mut failures = Vec::new();
    for (i, (case, task, scenario, n_train, n_test)) in configs.iter().enumerate() {
        let ds = root.join(format!("oracle_ds_{i}"));
        let out = root.join(format!("oracle_rep_{i}"));
        let (ds_s, out_s) = (ds.to_str().unwrap(), out.to_str().unwrap());
        let code = run_cli(&[
            "dataset", "--case", case, "--task", task, "--scenario", scenario, "--n-train", n_train, "--n-test",
            n_test, "--seed", "5", "--out", ds_s,
        ]);
        let code2 = run_cli(&["evaluate", "--dataset", ds_s, "--oracle", "--out", out_s]);
        if code != 0 || code2 != 0 {
            failures.push(format!("{case}/{task}/{scenario}: exit {code}/{code2}"));
            continue;
        }
        let r = EvalReport::from_json(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
        let zero_se = r.supervised.values().all(|s| s.mean == 0.0 && s.std == 0.0);
        let flags = r.constraints.frequencies.iter().filter(|f| f.1 > 0.0).count();
        let ssl_max = r.ssl_mse.mean + r.ssl_mse.std * (r.n_graphs as f64).sqrt();
        if !(zero_se && ssl_max <= 1e-12 && flags == 0 && r.percent_invalid == 0.0) {
            failures.push(format!(
                "{case}/{task}/{scenario}: se zero {zero_se}, ssl {ssl_max:.1e}, flags {flags}, invalid {}%",
                r.percent_invalid
            ));
        }
    }
    outcome(
        failures.is_empty(),
        format!("{} datasets, all-zero oracle reports; failures: {failures:?}", configs.len()),
    )
}

// ---------------------------------------------------------------- criterion 10

fn c10_price_agnostic() -> Outcome {
    let g = cases::case9();
    let base = solve_powerflow(&g, &PFOptions::default()).unwrap().solution;
    let spec = MutationSpec::new(Scenario::PriceVariation, 8);
    let mut differing = 0;
    let mut changed_prices = 0;
    for d in 0..200 {
        let (m, _) = mutate(&g, &spec, d).unwrap();
        if m != g {
            changed_prices += 1;
        }
        let s = solve_powerflow(&m, &PFOptions::default()).unwrap().solution;
        let bits = |s: &GridSolution| -> Vec<u64> {
            s.state
                .vm
                .iter()
                .chain(&s.state.va)
                .chain(&s.gen_p_mw)
                .chain(&s.gen_q_mvar)
                .chain([&s.slack_p_mw, &s.slack_q_mvar])
                .map(|v| v.to_bits())
                .collect()
        };
        if bits(&s) != bits(&base) {
            differing += 1;
        }
    }
    outcome(
        differing == 0 && changed_prices == 200,
        format!("200 price mutants ({changed_prices} with new prices), {differing} PF solutions differ bitwise"),
    )
}

// ---------------------------------------------------------------- criterion 11

fn c11_constraints() -> Outcome {
    let mut totals = Vec::new();
    for name in ["case9", "case30"] {
        let cfg = DatasetConfig {
            n_train: 0,
            n_test: 5,
            ..DatasetConfig::new(Task::Pf, 3)
        };
        let d = generate_dataset(&cases::bundled(name).unwrap(), &cfg).unwrap();
        let preds: Vec<_> = d.test.iter().map(|e| e.solution.clone()).collect();
        totals.push(constraint_report(&d.test, &preds, &EvalConfig::default()).unwrap().total);
    }
    outcome(totals == [21, 66], format!("case9 {} constraints (want 21), case30 {} (want 66)", totals[0], totals[1]))
}

// ---------------------------------------------------------------- criterion 12

fn count_numbers(v: &serde_json::Value) -> usize {
    match v {
        serde_json::Value::Number(_) => 1,
        serde_json::Value::Array(a) => a.iter().map(count_numbers).sum(),
        serde_json::Value::Object(o) => o.values().map(count_numbers).sum(),
        _ => 0,
    }
}

fn c12_output_size(root: &Path) -> Outcome {
    let cfg = DatasetConfig {
        n_train: 3,
        n_test: 1,
        ..DatasetConfig::new(Task::Opf, 12)
    };
    let d = generate_dataset(&cases::case9(), &cfg).unwrap();
    let dir = root.join("c12");
    export_dataset(&d, &dir).unwrap();
    let line = std::fs::read_to_string(dir.join(TRAIN_FILE)).unwrap();
    let first: serde_json::Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
    let on_disk = count_numbers(&first["graph"]["labels"]);
    let rec: EntryRecord = serde_json::from_value(first).unwrap();
    let graph_size = rec.graph.label_size();
    let reimported = import_dataset(&dir).unwrap() == d;
    let unlabeled = embed_grid(&cases::case9()).labels.is_none();
    outcome(
        on_disk == 24 && graph_size == 24 && reimported && unlabeled,
        format!("label values on disk {on_disk}, graph label size {graph_size} (want 2*(9+2+1) = 24)"),
    )
}

// ---------------------------------------------------------------- criterion 13

fn c13_baseline(root: &Path) -> Outcome {
    let t = Instant::now();
    let ds = root.join("c13_ds");
    let (ds_s, model, ridge_out, mean_out) = (
        ds.to_str().unwrap().to_string(),
        root.join("c13_model.json").to_str().unwrap().to_string(),
        root.join("c13_ridge").to_str().unwrap().to_string(),
        root.join("c13_mean").to_str().unwrap().to_string(),
    );
    let csv = root.join("c13_ridge.csv").to_str().unwrap().to_string();
    let codes = [
        run_cli(&["dataset", "--case", "case9", "--task", "opf", "--seed", "13", "--out", &ds_s]),
        run_cli(&["fit", "--dataset", &ds_s, "--out", &model]),
        run_cli(&["evaluate", "--dataset", &ds_s, "--model", &model, "--svg", "--out", &ridge_out]),
        run_cli(&["report", "--input", &format!("{ridge_out}/report.json"), "--format", "csv", "--out", &csv]),
    ];
    let dt = t.elapsed();
    let mean_code = run_cli(&["evaluate", "--dataset", &ds_s, "--baseline", "mean", "--out", &mean_out]);
    if codes.iter().chain([&mean_code]).any(|&c| c != 0) {
        return outcome(false, format!("pipeline exit codes {codes:?} / mean {mean_code}"));
    }
    let load = |dir: &str| EvalReport::from_json(&std::fs::read_to_string(format!("{dir}/report.json")).unwrap()).unwrap();
    let (ridge, mean) = (load(&ridge_out), load(&mean_out));

    // Independent check of the mean predictor: the report must agree with
    // predictions rebuilt directly from the training labels.
    let d = import_dataset(&ds).unwrap();
    let direct = mean_predictor(&d.train).unwrap();
    let mean_slack = d.train.iter().map(|e| e.solution.slack_p_mw).sum::<f64>() / d.train.len() as f64;
    let consistent = (direct.slack_p_mw - mean_slack).abs() < 1e-9 && d.train.len() == 800 && d.test.len() == 200;

    let cmp: Vec<String> = ridge
        .supervised
        .iter()
        .map(|(g, s)| format!("{}: {:.2e} < {:.2e}", g.name(), s.mean, mean.supervised[g].mean))
        .collect();
    let better = ridge.supervised.iter().all(|(g, s)| s.mean < mean.supervised[g].mean);
    outcome(
        better && consistent && dt < Duration::from_secs(300),
        format!("ridge vs mean SE [{}], pipeline {:.1} s (limit 300 s)", cmp.join(", "), dt.as_secs_f64()),
    )
}

type Criterion<'a> = (&'a str, Box<dyn Fn() -> Outcome + 'a>);

fn main() {
    let root = tempfile::tempdir().unwrap();
    let criteria: Vec<Criterion> = vec![
        ("C1 PF analytic 2-bus", Box::new(c1_two_bus)),
        ("C2 PF residual on bundled cases", Box::new(c2_residuals)),
        ("C3 Jacobian vs finite differences", Box::new(c3_jacobian)),
        ("C4 power balance invariant", Box::new(c4_balance)),
        ("C5 OPF vs brute force", Box::new(c5_opf_brute_force)),
        ("C6 N-1 coverage", Box::new(c6_n_minus_one)),
        ("C7 scenario purity", Box::new(c7_purity)),
        ("C8 dataset reproducibility", Box::new(c8_reproducibility)),
        ("C9 oracle-zero metrics", Box::new(|| c9_oracle_zero(root.path()))),
        ("C10 PF price agnosticism", Box::new(c10_price_agnostic)),
        ("C11 constraint enumeration", Box::new(c11_constraints)),
        ("C12 output sizing", Box::new(|| c12_output_size(root.path()))),
        ("C13 baseline end to end", Box::new(|| c13_baseline(root.path()))),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let o = match std::panic::catch_unwind(std::panic::AssertUnwindSafe(check)) {
            Ok(o) => o,
            Err(_) => outcome(false, "panicked".to_string()),
        };
        if !o.pass {
            failed += 1;
        }
        println!("[{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
