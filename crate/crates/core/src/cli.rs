//! Command-line front end. Exit codes: 0 success, 2 numerical failure,
//! 3 input error (including argument errors).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::baseline::{fit, mean_predictor, RidgeModel};
use crate::embed::{export_dataset, import_dataset, Prediction};
use crate::error::{Error, Result};
use crate::eval::{evaluate, robustness_summary, EvalConfig, EvalReport};
use crate::grid::{build_admittance, cases, Grid};
use crate::opf::{solve_opf, OPFOptions};
use crate::perturb::{generate_dataset, grid_diff, mutate, DatasetConfig, MutationSpec, Scenario, Task};
use crate::powerflow::{loading_report, solve_powerflow, BusBand, GridSolution, LineBand, PFOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_INPUT: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "gridsafe", version, about = "Power flow / OPF oracles, perturbation datasets and safety metrics")]
struct Cli {
    /// Worker threads (0 = one per core). Never changes results.
    #[arg(long, global = true, env = "GRIDSAFE_WORKERS", default_value_t = 0)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve a power flow or optimal power flow and write the solution.
    Solve(SolveArgs),
    /// Apply one seeded perturbation to a case and write the mutant grid.
    Mutate(MutateArgs),
    /// Generate a convergence-filtered train/test dataset.
    Dataset(DatasetArgs),
    /// Fit the ridge baseline on a dataset's training split.
    Fit(FitArgs),
    /// Evaluate predictions on a dataset's test split.
    Evaluate(EvaluateArgs),
    /// Render an existing evaluation report.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// Bundled case name (case9, case30, case118) or path to a .m / .json case.
    #[arg(long)]
    case: String,
    #[arg(long, default_value = "pf")]
    task: Task,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 30)]
    max_iter: usize,
    /// OPF: enforce branch MVA ratings.
    #[arg(long)]
    enforce_line_limits: bool,
    /// Solution JSON path (default: <case>_<task>_solution.json).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct SpecArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.9)]
    load_min: f64,
    #[arg(long, default_value_t = 1.1)]
    load_max: f64,
    #[arg(long, default_value_t = 1.0)]
    load_fraction: f64,
}

impl SpecArgs {
    fn spec(&self, scenario: Scenario) -> MutationSpec {
        MutationSpec {
            scenario,
            load_mult_min: self.load_min,
            load_mult_max: self.load_max,
            load_fraction: self.load_fraction,
            seed: self.seed,
        }
    }
}

#[derive(Args, Debug)]
struct MutateArgs {
    #[arg(long)]
    case: String,
    /// id, load, price or outage (or the long kebab-case names).
    #[arg(long)]
    scenario: Scenario,
    #[arg(long, default_value_t = 0)]
    draw_index: u64,
    #[command(flatten)]
    spec: SpecArgs,
    /// Mutant grid JSON path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DatasetArgs {
    #[arg(long)]
    case: String,
    #[arg(long, default_value = "pf")]
    task: Task,
    /// Scenario of the training stream.
    #[arg(long, default_value = "load")]
    train_scenario: Scenario,
    /// Scenario of the test stream.
    #[arg(long, default_value = "id")]
    scenario: Scenario,
    #[arg(long, default_value_t = 800)]
    n_train: usize,
    #[arg(long, default_value_t = 200)]
    n_test: usize,
    #[command(flatten)]
    spec: SpecArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 1e-3)]
    ridge: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Evaluate the oracle labels against themselves.
    #[arg(long, conflicts_with_all = ["baseline", "model", "predictions"])]
    oracle: bool,
    /// Fit a baseline on the training split and evaluate it: ridge or mean.
    #[arg(long, value_parser = ["ridge", "mean"], conflicts_with_all = ["model", "predictions"])]
    baseline: Option<String>,
    #[arg(long, default_value_t = 1e-3)]
    ridge: f64,
    /// Saved ridge model.
    #[arg(long, conflicts_with = "predictions")]
    model: Option<PathBuf>,
    /// JSON array of predictions, one per test entry.
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-4)]
    boundary_tol: f64,
    #[arg(long, default_value_t = 1e-2)]
    pf_tol: f64,
    #[arg(long, default_value_t = 1e-2)]
    mu: f64,
    #[arg(long, default_value_t = 2.0)]
    norm_order: f64,
    /// Also write report.svg.
    #[arg(long)]
    svg: bool,
    /// Report directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// report.json written by `evaluate`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "text", value_parser = ["text", "csv", "svg", "json"])]
    format: String,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Runs the CLI on `args` (including the program name) and returns the
/// exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_INPUT
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let workers = cli.workers;
    let pool = if workers > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(workers).build()
    } else {
        rayon::ThreadPoolBuilder::new().build()
    }
    .map_err(|e| Error::InvalidArgument(format!("cannot build worker pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Mutate(a) => cmd_mutate(a),
        Command::Dataset(a) => cmd_dataset(a, workers),
        Command::Fit(a) => cmd_fit(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Report(a) => cmd_report(a),
    })
}

#[derive(Serialize)]
struct BusOut {
    vm_pu: f64,
    va_rad: f64,
}

#[derive(Serialize)]
struct UnitOut {
    bus: usize,
    p_mw: f64,
    q_mvar: f64,
}

#[derive(Serialize)]
struct SolutionDoc {
    case: String,
    task: Task,
    iterations: Option<usize>,
    residual: f64,
    objective: Option<f64>,
    feasible: Option<bool>,
    buses: BTreeMap<usize, BusOut>,
    generators: BTreeMap<usize, UnitOut>,
    slack: UnitOut,
    bus_bands: BTreeMap<&'static str, usize>,
    line_bands: BTreeMap<&'static str, usize>,
}

fn max_mismatch(grid: &Grid, sol: &GridSolution) -> Result<f64> {
    let y = build_admittance(grid)?;
    let (dp, dq) = crate::powerflow::bus_balance_residuals(grid, &y, sol)?;
    Ok(dp.iter().chain(&dq).fold(0.0f64, |m, v| m.max(v.abs())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn cmd_solve(a: SolveArgs) -> Result<()> {
    let grid = cases::load_case(&a.case)?;
    let (sol, iterations, objective, feasible) = match a.task {
        Task::Pf => {
            let opts = PFOptions {
                tol: a.tol,
                max_iter: a.max_iter,
                ..PFOptions::default()
            };
            let r = solve_powerflow(&grid, &opts)?;
            (r.solution, Some(r.iterations), None, None)
        }
        Task::Opf => {
            let opts = OPFOptions {
                enforce_line_limits: a.enforce_line_limits,
                ..OPFOptions::default()
            };
            let r = solve_opf(&grid, &opts)?;
            (r.solution, None, Some(r.objective), Some(r.feasible))
        }
    };
    let residual = max_mismatch(&grid, &sol)?;
    let loading = loading_report(&grid, &sol)?;
    let bus_bands = [
        ("ideal", BusBand::Ideal),
        ("acceptable", BusBand::Acceptable),
        ("unsafe", BusBand::Unsafe),
    ]
    .into_iter()
    .map(|(k, b)| (k, loading.bus_count(b)))
    .collect::<BTreeMap<_, _>>();
    let line_bands = [
        ("ideal", LineBand::Ideal),
        ("elevated", LineBand::Elevated),
        ("dangerous", LineBand::Dangerous),
    ]
    .into_iter()
    .map(|(k, b)| (k, loading.line_count(b)))
    .collect::<BTreeMap<_, _>>();
    let doc = SolutionDoc {
        case: grid.name.clone(),
        task: a.task,
        iterations,
        residual,
        objective,
        feasible,
        buses: grid
            .buses
            .iter()
            .enumerate()
            .map(|(i, b)| {
                (
                    b.id,
                    BusOut {
                        vm_pu: sol.state.vm[i],
                        va_rad: sol.state.va[i],
                    },
                )
            })
            .collect(),
        generators: grid
            .generators
            .iter()
            .enumerate()
            .map(|(k, g)| {
                (
                    g.id,
                    UnitOut {
                        bus: g.bus,
                        p_mw: sol.gen_p_mw[k],
                        q_mvar: sol.gen_q_mvar[k],
                    },
                )
            })
            .collect(),
        slack: UnitOut {
            bus: grid.slack.bus,
            p_mw: sol.slack_p_mw,
            q_mvar: sol.slack_q_mvar,
        },
        bus_bands,
        line_bands,
    };
    let out = a
        .out
        .unwrap_or_else(|| PathBuf::from(format!("{}_{}_solution.json", grid.name, a.task)));
    write_json(&out, &doc)?;
    println!("case: {}", doc.case);
    println!("task: {}", doc.task);
    if let Some(it) = doc.iterations {
        println!("iterations: {it}");
    }
    println!("residual: {:.3e}", doc.residual);
    if let Some(obj) = doc.objective {
        println!("objective: {obj:.4}");
    }
    if let Some(f) = doc.feasible {
        println!("feasible: {f}");
    }
    println!("bus bands: {:?}", doc.bus_bands);
    println!("line bands: {:?}", doc.line_bands);
    println!("solution: {}", out.display());
    Ok(())
}

fn cmd_mutate(a: MutateArgs) -> Result<()> {
    let grid = cases::load_case(&a.case)?;
    let (mutant, record) = mutate(&grid, &a.spec.spec(a.scenario), a.draw_index)?;
    write_json(&a.out, &mutant)?;
    println!("scenario: {}", a.scenario);
    println!("mutation: {}", serde_json::to_string(&record)?);
    println!("changed fields: {}", grid_diff(&grid, &mutant).len());
    println!("mutant: {}", a.out.display());
    Ok(())
}

fn cmd_dataset(a: DatasetArgs, workers: usize) -> Result<()> {
    let grid = cases::load_case(&a.case)?;
    if a.task == Task::Pf && a.scenario == Scenario::PriceVariation {
        eprintln!("note: power flow labels do not depend on prices; price-variation test entries equal the base solution");
    }
    let cfg = DatasetConfig {
        task: a.task,
        train_spec: a.spec.spec(a.train_scenario),
        test_spec: a.spec.spec(a.scenario),
        n_train: a.n_train,
        n_test: a.n_test,
        workers,
    };
    let d = generate_dataset(&grid, &cfg)?;
    let m = export_dataset(&d, &a.out)?;
    println!("train: {} (rejected {})", m.n_train, m.stats.train.rejected);
    println!("test: {} (rejected {})", m.n_test, m.stats.test.rejected);
    println!("digest: {}", m.digest);
    Ok(())
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let d = import_dataset(&a.dataset)?;
    let model = fit(&d.train, a.ridge)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(&a.out, model.to_json()?)?;
    println!("features: {}", model.n_features);
    println!("outputs: {}", model.n_outputs);
    println!("fitted_on: {}", model.fitted_on);
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let d = import_dataset(&a.dataset)?;
    let config = EvalConfig {
        boundary_tol: a.boundary_tol,
        pf_tol: a.pf_tol,
        mu: a.mu,
        norm_order: a.norm_order,
    };
    config.validate()?;
    let preds: Vec<Prediction> = if a.oracle {
        d.test.iter().map(|e| e.solution.clone()).collect()
    } else if let Some(kind) = a.baseline.as_deref() {
        if kind == "mean" {
            vec![mean_predictor(&d.train)?; d.test.len()]
        } else {
            fit(&d.train, a.ridge)?.predict_entries(&d.test)?
        }
    } else if let Some(path) = &a.model {
        RidgeModel::from_json(&fs::read_to_string(path)?)?.predict_entries(&d.test)?
    } else if let Some(path) = &a.predictions {
        serde_json::from_str(&fs::read_to_string(path)?)?
    } else {
        return Err(Error::InvalidArgument(
            "one of --oracle, --baseline, --model or --predictions is required".to_string(),
        ));
    };
    let report = evaluate(&d.test, &preds, &config)?;
    let robust = robustness_summary(&report, &config);
    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join("report.json"), report.to_json()?)?;
    let mut csv = report.to_csv();
    csv.push_str(&format!("robust,{}\nmax_distance_mu,{}\n", u8::from(robust.robust), robust.mu));
    fs::write(a.out.join("report.csv"), csv)?;
    if a.svg {
        fs::write(a.out.join("report.svg"), report.to_svg())?;
    }
    for line in report.summary_lines() {
        println!("{line}");
    }
    println!(
        "robust (mu {}): {} ({} graphs exceed)",
        robust.mu, robust.robust, robust.n_exceeding
    );
    println!("report: {}", a.out.join("report.json").display());
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let report = EvalReport::from_json(&fs::read_to_string(&a.input)?)?;
    let text = match a.format.as_str() {
        "csv" => report.to_csv(),
        "svg" => report.to_svg(),
        "json" => report.to_json()?,
        _ => report.summary_lines().join("\n") + "\n",
    };
    match a.out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}
