//! Command-line front end: scenario ingestion, subcommand orchestration,
//! result persistence, and plot-data emission.

use clap::{Parser, Subcommand, ValueEnum};
use mflqg::certify::{
    certify_h2_finite_n, certify_h2prime, probe_h3, solve_k_riccati, CertificateReport, Verdict,
};
use mflqg::decoupling::{check_solvability, DEFAULT_RANK_TOL};
use mflqg::error::CoreError;
use mflqg::meanfield::{solve_consistency, ConsistencySolution, SolveMethod};
use mflqg::model::{derive_offsets, validate_h1};
use mflqg::numerics::TimeGrid;
use mflqg::oracle::TreeSpec;
use mflqg::reporting::{
    gnuplot_script, plot_costgap_dat, plot_meanfield_dat, study_results_csv, write_json,
    RunManifest,
};
use mflqg::scenario::load_scenario;
use mflqg::simulate::{
    adversary_perturbation_check, convergence_study, perturbation_direction, tree_comparison,
    AdversaryMode, SimConfig,
};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser)]
#[command(name = "mflqg", version, about = "Mean-field LQG team solver with a volatility adversary")]
struct Cli {
    /// Scenario file defining the model instance.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Output directory; every file the run writes lands here.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Master seed for all random streams.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Grid steps; defaults to the scenario's `steps` field.
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Population sizes, comma separated (study) or first value (simulate).
    #[arg(long = "N", global = true, value_delimiter = ',')]
    n_list: Option<Vec<usize>>,
    /// Monte Carlo replicates per population size.
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Worker threads (0 = machine parallelism). Results never depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Consistency solver.
    #[arg(long, global = true, value_enum, default_value_t = MethodArg::Affine)]
    method: MethodArg,
    /// Positivity/rank tolerance for certificates.
    #[arg(long, global = true, default_value_t = 1e-8)]
    tol: f64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Affine,
    Picard,
}

impl MethodArg {
    fn to_method(self) -> SolveMethod {
        match self {
            MethodArg::Affine => SolveMethod::Affine,
            MethodArg::Picard => SolveMethod::Picard,
        }
    }

    fn name(self) -> &'static str {
        match self {
            MethodArg::Affine => "affine",
            MethodArg::Picard => "picard",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check the baseline hypothesis and report violations.
    Validate,
    /// Run every certificate: Riccati conditions, solvability, convexity probe.
    Certify,
    /// Solve the consistency system and persist it.
    Solve,
    /// Simulate one population size under the solved strategies.
    Simulate {
        /// Reuse a previously solved system instead of solving.
        #[arg(long)]
        solution: Option<PathBuf>,
    },
    /// Sweep population sizes and fit convergence rates.
    Study {
        #[arg(long)]
        solution: Option<PathBuf>,
    },
    /// Exact tree-scale comparison against the oracle.
    OracleCompare,
}

fn exit_code(e: &CoreError) -> i32 {
    match e {
        CoreError::Io(_) | CoreError::Parse { .. } => 3,
        CoreError::Breakdown { .. }
        | CoreError::Divergence { .. }
        | CoreError::NonFinite { .. }
        | CoreError::Singular(_)
        | CoreError::Saddle(_)
        | CoreError::InnerUnbounded { .. }
        | CoreError::FitRefused(_) => 2,
        _ => 1,
    }
}

fn main() {
    let cli = Cli::parse();
    let threads = if cli.threads == 0 {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    } else {
        cli.threads
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool");
    let code = pool.install(|| match run(&cli, threads) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    });
    std::process::exit(code);
}

struct Outputs<'a> {
    dir: &'a Path,
    names: Vec<String>,
    timings: Vec<(String, u128)>,
}

impl<'a> Outputs<'a> {
    fn new(dir: &'a Path) -> Self {
        Self {
            dir,
            names: Vec::new(),
            timings: Vec::new(),
        }
    }

    fn write_text(&mut self, name: &str, body: &str) -> mflqg::Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, body)?;
        self.names.push(name.to_string());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> mflqg::Result<()> {
        write_json(self.dir, name, value)?;
        self.names.push(name.to_string());
        Ok(())
    }

    fn timed<T>(&mut self, label: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.push((label.to_string(), start.elapsed().as_millis()));
        out
    }
}

fn run(cli: &Cli, threads: usize) -> mflqg::Result<i32> {
    std::fs::create_dir_all(&cli.out)?;
    let scenario_path = cli
        .scenario
        .as_ref()
        .ok_or_else(|| CoreError::Invalid("--scenario is required".into()))?;
    let scenario = load_scenario(scenario_path)?;
    let p = scenario.params.clone();
    let steps = cli.steps.unwrap_or(scenario.steps);
    let grid = TimeGrid::new(p.horizon, steps)?;
    let mut outputs = Outputs::new(&cli.out);

    let subcommand_name = match &cli.command {
        Command::Validate => "validate",
        Command::Certify => "certify",
        Command::Solve => "solve",
        Command::Simulate { .. } => "simulate",
        Command::Study { .. } => "study",
        Command::OracleCompare => "oracle-compare",
    };

    let n_list = cli.n_list.clone().unwrap_or_else(|| match cli.command {
        Command::OracleCompare => vec![2],
        Command::Simulate { .. } => vec![8],
        _ => vec![2, 4, 8, 16, 32, 64],
    });
    let paths = cli.paths.unwrap_or(match cli.command {
        Command::Study { .. } => 200,
        _ => 100,
    });

    let code = dispatch(cli, &mut outputs, &p, &grid, &n_list, paths)?;

    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        subcommand: subcommand_name.to_string(),
        scenario: scenario_path.display().to_string(),
        seed: cli.seed,
        steps,
        n_list,
        paths,
        method: cli.method.name().to_string(),
        tolerance: cli.tol,
        threads,
        outputs: outputs.names.clone(),
        timings_ms: outputs.timings.clone(),
    };
    manifest.write(&cli.out)?;
    Ok(code)
}

#[derive(Serialize)]
struct SolveReport<'a> {
    method: &'a str,
    steps: usize,
    h2prime_warning: bool,
    picard_iterations: Option<usize>,
    residuals: &'a mflqg::meanfield::ResidualSummary,
}

fn obtain_solution(
    p: &mflqg::model::ModelParams,
    grid: &TimeGrid,
    method: SolveMethod,
    reuse: &Option<PathBuf>,
) -> mflqg::Result<ConsistencySolution> {
    let d = derive_offsets(p)?;
    match reuse {
        Some(path) => ConsistencySolution::load_csv(path, p, &d),
        None => solve_consistency(p, &d, grid, method),
    }
}

fn dispatch(
    cli: &Cli,
    outputs: &mut Outputs,
    p: &mflqg::model::ModelParams,
    grid: &TimeGrid,
    n_list: &[usize],
    paths: usize,
) -> mflqg::Result<i32> {
    match &cli.command {
        Command::Validate => {
            let report = outputs.timed("validate", || validate_h1(p))?;
            outputs.write_json("report.json", &report)?;
            Ok(if report.ok { 0 } else { 1 })
        }
        Command::Certify => {
            let h1 = validate_h1(p)?;
            if !h1.ok {
                #[derive(Serialize)]
                struct Rejection<'a> {
                    h1: &'a mflqg::model::ValidationReport,
                    violated: Vec<&'a str>,
                }
                outputs.write_json(
                    "certificates.json",
                    &Rejection {
                        h1: &h1,
                        violated: h1.violated(),
                    },
                )?;
                eprintln!("baseline hypothesis violated: {:?}", h1.violated());
                return Ok(1);
            }
            let d = derive_offsets(p)?;
            let mut report = CertificateReport::empty();
            report.h1 = Verdict::Pass;

            let h2p = outputs.timed("k-riccati", || match solve_k_riccati(p, &d, grid) {
                Ok(k) => {
                    let frag = certify_h2prime(&k);
                    report.margins.insert("h2prime_min_eig_K_plus_R0".into(), frag.margin);
                    report.notes.push(frag.note.clone());
                    frag.verdict
                }
                Err(e) => {
                    report.notes.push(format!("h2prime riccati: {e}"));
                    Verdict::Undetermined
                }
            });
            report.h2_prime = h2p;

            let mut finite_verdicts = Vec::new();
            for &n_agents in n_list.iter().filter(|&&n| n * p.n <= 64) {
                let frag = certify_h2_finite_n(p, &d, n_agents, grid)?;
                report
                    .margins
                    .insert(format!("h2_finite_n_{n_agents}"), frag.margin);
                report.notes.push(frag.note.clone());
                finite_verdicts.push(frag.verdict);
            }
            report.h2 = if finite_verdicts.iter().any(|v| *v == Verdict::Fail) {
                Verdict::Fail
            } else if finite_verdicts.iter().all(|v| *v == Verdict::Pass)
                && !finite_verdicts.is_empty()
            {
                Verdict::Pass
            } else {
                Verdict::Undetermined
            };

            let solvability = outputs.timed("solvability", || {
                check_solvability(p, &d, grid, cli.tol.max(DEFAULT_RANK_TOL.min(cli.tol)))
            })?;

            // Convexity probe, with the decentralized strategy included when
            // a coarse solve on the probe grid succeeds.
            let probe = outputs.timed("h3-probe", || {
                let coarse = TimeGrid::new(p.horizon, 4)?;
                let cs = solve_consistency(p, &d, &coarse, SolveMethod::Affine).ok();
                probe_h3(p, cs.as_ref(), 16, cli.seed)
            })?;
            report.h3 = probe.fragment.verdict;
            report.margins.insert("h3_min_probe".into(), probe.fragment.margin);
            report.notes.push(probe.fragment.note.clone());
            report.reconcile();

            #[derive(Serialize)]
            struct Certificates<'a> {
                report: &'a CertificateReport,
                solvability: &'a mflqg::decoupling::SolvabilityReport,
                h3_probe: &'a mflqg::certify::H3Probe,
            }
            outputs.write_json(
                "certificates.json",
                &Certificates {
                    report: &report,
                    solvability: &solvability,
                    h3_probe: &probe,
                },
            )?;
            Ok(0)
        }
        Command::Solve => {
            let d = derive_offsets(p)?;
            let cs = outputs.timed("solve", || {
                solve_consistency(p, &d, grid, cli.method.to_method())
            })?;
            cs.save_csv(&cli.out.join("solution.csv"))?;
            outputs.names.push("solution.csv".into());
            outputs.write_json(
                "solve_report.json",
                &SolveReport {
                    method: cli.method.name(),
                    steps: grid.steps(),
                    h2prime_warning: cs.h2prime_warning,
                    picard_iterations: cs.picard_iterations,
                    residuals: &cs.residuals,
                },
            )?;
            if cs.h2prime_warning {
                eprintln!("warning: uniform convexity of the inner problem is not certified");
            }
            Ok(0)
        }
        Command::Simulate { solution } => {
            let cs = obtain_solution(p, grid, cli.method.to_method(), solution)?;
            let n_agents = n_list[0];
            let rows = outputs.timed("simulate", || {
                mflqg::simulate::simulate_batch(&cs, n_agents, paths, cli.seed)
            })?;
            outputs.write_text("results.csv", &study_results_csv(&rows))?;
            outputs.write_json(
                "summary.json",
                &mflqg::simulate::aggregate_rows(n_agents, &rows),
            )?;
            Ok(0)
        }
        Command::Study { solution } => {
            let cs = obtain_solution(p, grid, cli.method.to_method(), solution)?;
            let cfg = SimConfig {
                n_list: n_list.to_vec(),
                paths_per_n: paths,
                grid: grid.clone(),
                master_seed: cli.seed,
                adversary_mode: AdversaryMode::Meanfield,
            };
            let result = outputs.timed("study", || convergence_study(&cs, &cfg))?;
            outputs.write_text("results.csv", &study_results_csv(&result.rows))?;
            #[derive(Serialize)]
            struct Summary<'a> {
                per_n: &'a [mflqg::simulate::PerNStats],
                meanfield_error_slopes: &'a mflqg::simulate::SlopePair,
                adversary_gap_slopes: &'a Option<mflqg::simulate::SlopePair>,
                cost_gap_slopes: &'a Option<mflqg::simulate::SlopePair>,
                per_capita_bounded: bool,
            }
            outputs.write_json(
                "summary.json",
                &Summary {
                    per_n: &result.per_n,
                    meanfield_error_slopes: &result.meanfield_error_slopes,
                    adversary_gap_slopes: &result.adversary_gap_slopes,
                    cost_gap_slopes: &result.cost_gap_slopes,
                    per_capita_bounded: result.per_capita_bounded,
                },
            )?;
            emit_plot_data(&result, outputs)?;
            Ok(0)
        }
        Command::OracleCompare => {
            let tree_steps = grid.steps().min(6).max(2);
            let tree_grid = TimeGrid::new(p.horizon, tree_steps)?;
            let d = derive_offsets(p)?;
            let cs = solve_consistency(p, &d, &tree_grid, cli.method.to_method())?;
            let mut comparisons = Vec::new();
            let mut csv = String::from(
                "n_agents,steps,minmax_value,decentralized_worst_case,decentralized_meanfield_adversary,optimality_gap\n",
            );
            for &n_agents in n_list.iter().filter(|&&n| n <= 3) {
                let spec = TreeSpec::new(n_agents, tree_steps, p.horizon)?;
                let cmp =
                    outputs.timed("oracle-compare", || tree_comparison(p, &d, &cs, &spec))?;
                csv.push_str(&format!(
                    "{},{},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                    cmp.n_agents,
                    cmp.steps,
                    cmp.minmax_value,
                    cmp.decentralized_worst_case,
                    cmp.decentralized_meanfield_adversary,
                    cmp.optimality_gap
                ));
                comparisons.push(cmp);
            }
            if comparisons.is_empty() {
                return Err(CoreError::Invalid(
                    "oracle-compare needs at least one N <= 3".into(),
                ));
            }
            // Adversary perturbation probe at a moderate population.
            let dirs: Vec<_> = (0..4).map(|k| perturbation_direction(k, p.n, &tree_grid)).collect();
            let perturb = outputs.timed("perturbation", || {
                adversary_perturbation_check(&cs, 16, paths.min(200), cli.seed, &dirs, &[0.1, -0.1, 0.2])
            })?;
            #[derive(Serialize)]
            struct OracleOut<'a> {
                comparisons: &'a [mflqg::simulate::TreeComparison],
                perturbation: &'a mflqg::simulate::PerturbationReport,
            }
            outputs.write_json(
                "oracle_compare.json",
                &OracleOut {
                    comparisons: &comparisons,
                    perturbation: &perturb,
                },
            )?;
            outputs.write_text("oracle_compare.csv", &csv)?;
            Ok(0)
        }
    }
}

/// Log-log plot data plus the gnuplot script that references it.
fn emit_plot_data(
    result: &mflqg::simulate::SimulationResult,
    outputs: &mut Outputs,
) -> mflqg::Result<()> {
    if result.per_n.is_empty() {
        return Err(CoreError::Invalid("no data to plot".into()));
    }
    outputs.write_text("plots/meanfield_error.dat", &plot_meanfield_dat(result))?;
    outputs.write_text("plots/cost_gap.dat", &plot_costgap_dat(result))?;
    outputs.write_text("plots/plot.gp", &gnuplot_script())?;
    Ok(())
}
