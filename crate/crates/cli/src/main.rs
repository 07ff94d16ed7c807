use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use convex_trials::error::Context;
use convex_trials::experiments::{
    self, builtin_instance, effective_state_cap, parallel_risk_estimate, parallel_zeta_values, EstimateOut,
    ExperimentSpec,
};
use convex_trials::io::{self, FwReportFile, PolicyFile};
use convex_trials::{CliError, CliResult};
use convex_trials_core::{
    extract_policy, solve_frank_wolfe, solve_single_trial, solve_single_trial_cvar, FwOptions, Policy, PolicyMode,
    DEFAULT_STATE_CAP,
};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "convex-trials", version, about = "Finite- and infinite-trials convex RL on tabular MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Stationary,
    TimeVarying,
}

#[derive(Subcommand)]
enum Command {
    /// Frank-Wolfe on the infinite-trials objective; writes the extracted policy.
    SolveInfinite {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long)]
        objective: PathBuf,
        #[arg(long, value_enum, default_value = "stationary")]
        mode: Mode,
        #[arg(long, default_value_t = FwOptions::default().gap_tol)]
        gap_tol: f64,
        #[arg(long, default_value_t = FwOptions::default().max_iters)]
        max_iters: usize,
        #[arg(long)]
        out: PathBuf,
        /// Optional Frank-Wolfe report file.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Exact single-trial optimum on the count-extended MDP; writes the count policy.
    SolveFinite {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long, required_unless_present = "risk")]
        objective: Option<PathBuf>,
        /// CVaR functional of the per-trial return; takes precedence over the objective.
        #[arg(long)]
        risk: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte-Carlo evaluation over `runs` independent runs of `n` trials.
    Evaluate {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, required_unless_present = "risk")]
        objective: Option<PathBuf>,
        #[arg(long)]
        risk: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs a bundled experiment end to end.
    Experiment {
        #[arg(long)]
        name: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Approximation error and bound for several trial counts.
    SweepN {
        /// Experiment spec file, or the name of a bundled instance.
        #[arg(long)]
        spec: String,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64")]
        n: Vec<usize>,
        #[arg(long)]
        runs: Option<usize>,
        /// CSV destination; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct EvaluateSummary {
    n: usize,
    runs: usize,
    seed: u64,
    estimate: EstimateOut,
}

#[derive(Serialize)]
struct FiniteSummary {
    optimal_value: f64,
    extended_states: usize,
    cvar_threshold: Option<f64>,
    grid_approximate: bool,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::SolveInfinite { mdp, objective, mode, gap_tol, max_iters, out, report } => {
            let mdp = io::read_mdp(&mdp)?;
            let obj = io::read_objective(&objective)?;
            let opts = FwOptions { gap_tol, max_iters, ..FwOptions::default() };
            let (occ, rep) = solve_frank_wolfe(&mdp, &obj, &opts).context("frank-wolfe")?;
            let mode = match mode {
                Mode::Stationary => PolicyMode::Stationary,
                Mode::TimeVarying => PolicyMode::TimeVarying,
            };
            io::write_json(&out, &PolicyFile::from_policy(&extract_policy(&occ, mode)))?;
            let rep = FwReportFile::from(&rep);
            if let Some(path) = report {
                io::write_json(&path, &rep)?;
            }
            println!("iterations {} gap {:e} value {}", rep.iterations, rep.final_gap, rep.final_value);
        }
        Command::SolveFinite { mdp, objective, risk, out } => {
            let mdp = io::read_mdp(&mdp)?;
            let cap = effective_state_cap(DEFAULT_STATE_CAP)?;
            let sol = match (risk, objective) {
                (Some(r), _) => solve_single_trial_cvar(&mdp, &io::read_risk(&r)?, cap),
                (None, Some(o)) => solve_single_trial(&mdp, &io::read_objective(&o)?, cap),
                (None, None) => return Err(CliError::Validation("an objective or a risk file is required".into())),
            }
            .context("single-trial solve")?;
            io::write_json(&out, &PolicyFile::from_policy(&Policy::Count(sol.policy.clone())))?;
            let summary = FiniteSummary {
                optimal_value: sol.optimal_value,
                extended_states: sol.count_mdp.total_states(),
                cvar_threshold: sol.threshold,
                grid_approximate: sol.grid_approximate,
            };
            print!("{}", io::to_json_string(&summary));
        }
        Command::Evaluate { mdp, policy, objective, risk, n, runs, seed, out } => {
            let mdp = io::read_mdp(&mdp)?;
            let policy = io::read_policy(&policy)?;
            if let Policy::Count(p) = &policy {
                p.check_total(&mdp).context("policy")?;
            }
            let est = match (risk, objective) {
                (Some(r), _) => parallel_risk_estimate(&mdp, &policy, &io::read_risk(&r)?, n, runs, seed)?,
                (None, Some(o)) => parallel_zeta_values(&mdp, &policy, &io::read_objective(&o)?, n, runs, seed)?,
                (None, None) => return Err(CliError::Validation("an objective or a risk file is required".into())),
            };
            io::write_text(&out, &io::runs_csv(&est.raw_values))?;
            print!("{}", io::to_json_string(&EvaluateSummary { n, runs, seed, estimate: (&est).into() }));
        }
        Command::Experiment { name, seed, out_dir } => {
            let mut exp = builtin_instance(&name)?;
            if let Some(s) = seed {
                exp.seed = s;
            }
            let report = experiments::run_experiment(&exp)?;
            for path in report.write(&out_dir)? {
                println!("{}", path.display());
            }
        }
        Command::SweepN { spec, n, runs, out } => {
            let exp = if experiments::BUILTIN_NAMES.contains(&spec.as_str()) {
                builtin_instance(&spec)?
            } else {
                ExperimentSpec::from_file(&PathBuf::from(&spec))?
            };
            let report = experiments::sweep_n(&exp, &n, runs)?;
            match &out {
                Some(path) => {
                    io::write_text(path, &report.csv())?;
                    io::write_json(&path.with_extension("json"), &report)?;
                }
                None => print!("{}", report.csv()),
            }
            match report.log_log_slope {
                Some(s) => eprintln!("log-log slope of err against n: {s}"),
                None => eprintln!("log-log slope of err against n: undefined"),
            }
        }
    }
    Ok(())
}
