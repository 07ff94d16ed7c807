//! Experiment specifications, the bundled instances and the solve/evaluate/report pipeline.

use std::path::{Path, PathBuf};

use convex_trials_core::evaluation::{empirical_lipschitz, risk_estimate_from_returns, run_returns, run_value};
use convex_trials_core::{
    approximation_error, bound_value, extract_policy, occupancy_to_d, outcome_distribution, solve_frank_wolfe,
    solve_single_trial, solve_single_trial_cvar, ConvexObjective, ErrorMethod, ErrorOptions, ErrorReport, FwOptions,
    McEstimate, Mdp, ObjectiveKind, OccupancyMeasure, Policy, PolicyMode, RiskFunctional, SingleTrialSolution,
    StepRule, DEFAULT_STATE_CAP,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult, Context};
use crate::io::{self, FwReportFile, MdpFile, ObjectiveFile, PolicyFile, RiskFile};

pub const STATE_CAP_ENV: &str = "CONVEX_TRIALS_STATE_CAP";

pub const BUILTIN_NAMES: [&str; 5] = ["pure_exploration", "risk_averse", "imitation", "imitation_l2", "linear_control"];

const BUILTIN_FILES: [(&str, &str); 5] = [
    ("pure_exploration", include_str!("../data/pure_exploration.json")),
    ("risk_averse", include_str!("../data/risk_averse.json")),
    ("imitation", include_str!("../data/imitation.json")),
    ("imitation_l2", include_str!("../data/imitation_l2.json")),
    ("linear_control", include_str!("../data/linear_control.json")),
];

/// Values closer than this are merged in exact outcome histograms.
const ATOM_TOL: f64 = 1e-12;
/// Lattice points used for an empirical Lipschitz constant.
const MAX_LIPSCHITZ_POINTS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepName {
    LineSearch,
    OpenLoop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Stationary,
    TimeVarying,
}

impl From<ModeName> for PolicyMode {
    fn from(m: ModeName) -> Self {
        match m {
            ModeName::Stationary => PolicyMode::Stationary,
            ModeName::TimeVarying => PolicyMode::TimeVarying,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub max_iters: usize,
    pub gap_tol: f64,
    pub step: StepName,
    pub policy_mode: ModeName,
    pub state_cap: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        let fw = FwOptions::default();
        Self {
            max_iters: fw.max_iters,
            gap_tol: fw.gap_tol,
            step: StepName::LineSearch,
            policy_mode: ModeName::Stationary,
            state_cap: DEFAULT_STATE_CAP,
        }
    }
}

impl SolverOptions {
    pub fn fw_options(&self) -> FwOptions {
        FwOptions {
            max_iters: self.max_iters,
            gap_tol: self.gap_tol,
            step: match self.step {
                StepName::LineSearch => StepRule::LineSearch,
                StepName::OpenLoop => StepRule::OpenLoop,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErrorSettings {
    /// Lipschitz constant for the concentration bound; derived from the objective when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    pub delta: f64,
}

impl Default for ErrorSettings {
    fn default() -> Self {
        Self { lipschitz: None, delta: 0.05 }
    }
}

fn default_n() -> usize {
    1
}

fn default_runs() -> usize {
    1000
}

/// On-disk experiment description. The MDP, objective and risk may be inline or file references.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mdp: Option<MdpFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mdp_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<ObjectiveFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub risk: Option<RiskFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub risk_file: Option<PathBuf>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub error: ErrorSettings,
}

/// What the single-trial side optimizes.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Objective(ConvexObjective),
    Risk(RiskFunctional),
}

/// A spec with every reference loaded and validated.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub name: String,
    pub note: Option<String>,
    pub mdp: Mdp,
    pub target: Target,
    pub n: usize,
    pub runs: usize,
    pub seed: u64,
    pub solver: SolverOptions,
    pub error: ErrorSettings,
}

impl ExperimentSpec {
    pub fn from_file(path: &Path) -> CliResult<Experiment> {
        let spec: ExperimentSpec = io::read_json(path)?;
        spec.resolve(path.parent().unwrap_or(Path::new(".")))
    }

    /// Loads file references relative to `base` and validates every part.
    pub fn resolve(&self, base: &Path) -> CliResult<Experiment> {
        let mdp = match (&self.mdp, &self.mdp_file) {
            (Some(m), None) => m.to_mdp()?,
            (None, Some(f)) => io::read_mdp(&base.join(f))?,
            _ => return Err(invalid(&self.name, "exactly one of `mdp` and `mdp_file` is required")),
        };
        let objective = match (&self.objective, &self.objective_file) {
            (Some(o), None) => Some(o.to_objective()?),
            (None, Some(f)) => Some(io::read_objective(&base.join(f))?),
            (None, None) => None,
            _ => return Err(invalid(&self.name, "`objective` and `objective_file` are exclusive")),
        };
        let risk = match (&self.risk, &self.risk_file) {
            (Some(r), None) => Some(r.to_risk()?),
            (None, Some(f)) => Some(io::read_risk(&base.join(f))?),
            (None, None) => None,
            _ => return Err(invalid(&self.name, "`risk` and `risk_file` are exclusive")),
        };
        let target = match (objective, risk) {
            (Some(o), None) => {
                o.check_dimension(mdp.num_states()).context(format!("experiment {}", self.name))?;
                Target::Objective(o)
            }
            (None, Some(r)) => {
                if r.reward().len() != mdp.num_states() {
                    return Err(invalid(&self.name, "risk reward length differs from the number of states"));
                }
                Target::Risk(r)
            }
            _ => return Err(invalid(&self.name, "exactly one of an objective and a risk functional is required")),
        };
        if self.n == 0 {
            return Err(invalid(&self.name, "n must be at least 1"));
        }
        if self.runs < 2 {
            return Err(invalid(&self.name, "runs must be at least 2"));
        }
        Ok(Experiment {
            name: self.name.clone(),
            note: self.note.clone(),
            mdp,
            target,
            n: self.n,
            runs: self.runs,
            seed: self.seed,
            solver: self.solver.clone(),
            error: self.error.clone(),
        })
    }
}

fn invalid(name: &str, msg: &str) -> CliError {
    CliError::Validation(format!("experiment {name}: {msg}"))
}

/// The bundled instance `name`, as stored in its data file.
pub fn builtin_spec(name: &str) -> CliResult<ExperimentSpec> {
    let (_, text) = BUILTIN_FILES
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| CliError::Validation(format!("unknown instance `{name}` (known: {})", BUILTIN_NAMES.join(", "))))?;
    serde_json::from_str(text)
        .map_err(|source| CliError::Parse { path: PathBuf::from(format!("<builtin {name}>")), source })
}

pub fn builtin_instance(name: &str) -> CliResult<Experiment> {
    builtin_spec(name)?.resolve(Path::new("."))
}

/// The extended-MDP cap: the environment override if set, otherwise `configured`.
pub fn effective_state_cap(configured: usize) -> CliResult<usize> {
    match std::env::var(STATE_CAP_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::Validation(format!("{STATE_CAP_ENV}={v} is not a non-negative integer"))),
        Err(std::env::VarError::NotPresent) => Ok(configured),
        Err(e) => Err(CliError::Validation(format!("{STATE_CAP_ENV}: {e}"))),
    }
}

impl Experiment {
    /// Objective used on the infinite-trials side; a risk functional is replaced by its expected return.
    pub fn infinite_objective(&self) -> CliResult<ConvexObjective> {
        match &self.target {
            Target::Objective(o) => Ok(o.clone()),
            Target::Risk(r) => ConvexObjective::linear(r.reward().to_vec()).context("risk-neutral objective"),
        }
    }

    pub fn state_cap(&self) -> CliResult<usize> {
        effective_state_cap(self.solver.state_cap)
    }

    /// Explicit serialized form (inline MDP, all defaults filled).
    pub fn to_spec(&self) -> ExperimentSpec {
        let (objective, risk) = match &self.target {
            Target::Objective(o) => (Some(ObjectiveFile::from_objective(o)), None),
            Target::Risk(r) => (None, Some(risk_file(r))),
        };
        ExperimentSpec {
            name: self.name.clone(),
            note: self.note.clone(),
            mdp: Some(MdpFile::from_mdp(&self.mdp)),
            mdp_file: None,
            objective,
            objective_file: None,
            risk,
            risk_file: None,
            n: self.n,
            runs: self.runs,
            seed: self.seed,
            solver: self.solver.clone(),
            error: self.error.clone(),
        }
    }
}

fn risk_file(r: &RiskFunctional) -> RiskFile {
    match r {
        RiskFunctional::Cvar { alpha, reward } => RiskFile::Cvar { alpha: *alpha, reward: reward.clone() },
        RiskFunctional::MeanMinusVariance { reward, weight } => {
            RiskFile::MeanVariance { reward: reward.clone(), weight: *weight }
        }
    }
}

/// Both optimal policies of an experiment.
#[derive(Debug, Clone)]
pub struct Solved {
    pub occupancy: OccupancyMeasure,
    pub fw: convex_trials_core::FwReport,
    /// Infinite-trials policy in the configured extraction mode.
    pub pi_star: Policy,
    /// Time-varying extraction of the same occupancy measure.
    pub pi_star_time_varying: Policy,
    pub dagger: SingleTrialSolution,
    pub pi_dagger: Policy,
}

pub fn solve(exp: &Experiment) -> CliResult<Solved> {
    let ctx = |stage: &str| format!("experiment {}: {stage}", exp.name);
    let cap = exp.state_cap()?;
    let inf_obj = exp.infinite_objective()?;
    let (occupancy, fw) = solve_frank_wolfe(&exp.mdp, &inf_obj, &exp.solver.fw_options()).context(ctx("frank-wolfe"))?;
    let pi_star = extract_policy(&occupancy, exp.solver.policy_mode.into());
    let pi_star_time_varying = extract_policy(&occupancy, PolicyMode::TimeVarying);
    let dagger = match &exp.target {
        Target::Objective(o) => solve_single_trial(&exp.mdp, o, cap),
        Target::Risk(r) => solve_single_trial_cvar(&exp.mdp, r, cap),
    }
    .context(ctx("single-trial solve"))?;
    let pi_dagger = Policy::Count(dagger.policy.clone());
    Ok(Solved { occupancy, fw, pi_star, pi_star_time_varying, dagger, pi_dagger })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Atom {
    pub value: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinOut {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateOut {
    pub mean: f64,
    pub ci_half_width: f64,
    pub samples: usize,
    pub histogram: Vec<BinOut>,
}

impl From<&McEstimate> for EstimateOut {
    fn from(e: &McEstimate) -> Self {
        Self {
            mean: e.mean,
            ci_half_width: e.ci_half_width,
            samples: e.runs,
            histogram: e.histogram.iter().map(|b| BinOut { lower: b.lower, upper: b.upper, count: b.count }).collect(),
        }
    }
}

/// Exact single-trial and infinite-trials values of one policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactOut {
    /// `zeta_1(pi)`, or the exact risk functional of the single-trial return.
    pub single_trial: f64,
    /// `F(d^pi)`; for risk experiments the expected return `r . d^pi`.
    pub infinite_trials: Option<f64>,
    /// Distribution of the single-trial value `F(d)` (or return `r . d`).
    pub outcomes: Vec<Atom>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorOut {
    pub n: usize,
    pub err: f64,
    pub bound: f64,
    pub lipschitz: f64,
    /// `given`, `global` or `empirical`.
    pub lipschitz_source: &'static str,
    pub delta: f64,
    pub method: &'static str,
    pub zeta_dagger: f64,
    pub zeta_star: f64,
    pub ci_half_width: f64,
}

impl ErrorOut {
    fn new(r: &ErrorReport, source: &'static str) -> Self {
        Self {
            n: r.n,
            err: r.err,
            bound: r.bound,
            lipschitz: r.lipschitz_used,
            lipschitz_source: source,
            delta: r.delta,
            method: match r.method {
                ErrorMethod::Exact => "exact",
                ErrorMethod::MonteCarlo => "monte_carlo",
            },
            zeta_dagger: r.zeta_dagger,
            zeta_star: r.zeta_star,
            ci_half_width: r.ci_half_width,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingleTrialOut {
    pub optimal_value: f64,
    pub extended_states: usize,
    pub layer_sizes: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cvar_threshold: Option<f64>,
    pub grid_approximate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub name: String,
    /// `objective` or `risk`.
    pub target: &'static str,
    pub spec: ExperimentSpec,
    pub frank_wolfe: FwReportFile,
    pub single_trial: SingleTrialOut,
    pub exact_dagger: ExactOut,
    pub exact_star: ExactOut,
    pub exact_star_time_varying: ExactOut,
    pub estimate_dagger: EstimateOut,
    pub estimate_star: EstimateOut,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_report: Option<ErrorOut>,
}

/// Everything an experiment emits.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub summary: Summary,
    pub solved: Solved,
    pub dagger_values: Vec<f64>,
    pub star_values: Vec<f64>,
}

impl ExperimentReport {
    pub fn dagger_csv(&self) -> String {
        io::runs_csv(&self.dagger_values)
    }

    pub fn star_csv(&self) -> String {
        io::runs_csv(&self.star_values)
    }

    /// Writes `<name>_dagger.csv`, `<name>_star.csv`, `<name>_summary.json` and both policies.
    pub fn write(&self, dir: &Path) -> CliResult<Vec<PathBuf>> {
        let name = &self.summary.name;
        let files = [
            (format!("{name}_dagger.csv"), self.dagger_csv()),
            (format!("{name}_star.csv"), self.star_csv()),
            (format!("{name}_summary.json"), io::to_json_string(&self.summary)),
            (format!("{name}_pi_dagger.json"), io::to_json_string(&PolicyFile::from_policy(&self.solved.pi_dagger))),
            (format!("{name}_pi_star.json"), io::to_json_string(&PolicyFile::from_policy(&self.solved.pi_star))),
        ];
        let mut written = Vec::new();
        for (file, text) in files {
            let path = dir.join(file);
            io::write_text(&path, &text)?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Per-run `F(d_n)` values, evaluated in parallel and collected in run order.
pub fn parallel_zeta_values(
    mdp: &Mdp,
    policy: &Policy,
    obj: &ConvexObjective,
    n: usize,
    runs: usize,
    seed: u64,
) -> CliResult<McEstimate> {
    policy.check_compatible_shape(mdp).context("policy")?;
    obj.check_dimension(mdp.num_states()).context("objective")?;
    let values: Vec<f64> = (0..runs)
        .into_par_iter()
        .map(|run| run_value(mdp, policy, obj, n, seed, run))
        .collect::<convex_trials_core::Result<_>>()
        .context("simulation")?;
    McEstimate::from_values(values).context("estimate")
}

/// Parallel counterpart of `estimate_risk_n`.
pub fn parallel_risk_estimate(
    mdp: &Mdp,
    policy: &Policy,
    risk: &RiskFunctional,
    n: usize,
    runs: usize,
    seed: u64,
) -> CliResult<McEstimate> {
    policy.check_compatible_shape(mdp).context("policy")?;
    if risk.reward().len() != mdp.num_states() {
        return Err(CliError::Validation("risk reward length differs from the number of states".into()));
    }
    let per_run: Vec<Vec<f64>> = (0..runs)
        .into_par_iter()
        .map(|run| run_returns(mdp, policy, risk, n, seed, run))
        .collect::<convex_trials_core::Result<_>>()
        .context("simulation")?;
    risk_estimate_from_returns(risk, per_run, seed).context("estimate")
}

fn atoms(mut raw: Vec<(f64, f64)>) -> Vec<Atom> {
    raw.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<Atom> = Vec::new();
    for (value, p) in raw {
        match out.last_mut() {
            Some(a) if value - a.value <= ATOM_TOL => a.probability += p,
            _ => out.push(Atom { value, probability: p }),
        }
    }
    out
}

fn exact_out(exp: &Experiment, policy: &Policy, cap: usize) -> CliResult<ExactOut> {
    let ctx = format!("experiment {}: exact evaluation", exp.name);
    let dist = outcome_distribution(&exp.mdp, policy, cap).context(ctx.clone())?;
    let d_inf = if policy.is_markovian() {
        Some(occupancy_to_d(&exp.mdp, &OccupancyMeasure::from_policy(&exp.mdp, policy).context(ctx.clone())?))
    } else {
        None
    };
    match &exp.target {
        Target::Objective(o) => {
            let raw = dist.map_values(|d| o.value(d));
            let single_trial = raw.iter().map(|(v, p)| v * p).sum();
            Ok(ExactOut { single_trial, infinite_trials: d_inf.map(|d| o.value(&d)), outcomes: atoms(raw) })
        }
        Target::Risk(r) => {
            let raw = dist.map_values(|d| r.trial_return(d));
            let single_trial = r.eval(convex_trials_core::Returns::Exact(&raw)).context(ctx)?;
            Ok(ExactOut { single_trial, infinite_trials: d_inf.map(|d| r.trial_return(&d)), outcomes: atoms(raw) })
        }
    }
}

/// Lipschitz constant for the bound and where it came from.
pub fn lipschitz_for(exp: &Experiment, obj: &ConvexObjective, dagger: &SingleTrialSolution) -> (f64, &'static str) {
    if let Some(l) = exp.error.lipschitz {
        return (l, "given");
    }
    let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    match obj.kind() {
        ObjectiveKind::LpDistance { p, .. } if *p == 2.0 => (2.0, "global"),
        ObjectiveKind::LpDistance { p, .. } if *p == 1.0 => (1.0, "global"),
        ObjectiveKind::Linear { reward } => (max_abs(reward), "global"),
        ObjectiveKind::LinearWithConstraint { reward, cost, penalty_weight, .. } => {
            (max_abs(reward) + penalty_weight * max_abs(cost), "global")
        }
        _ => {
            let cm = &dagger.count_mdp;
            let terminal = cm.layer(cm.horizon());
            let mut points: Vec<Vec<f64>> = (0..terminal.len()).map(|i| cm.terminal_d(i)).collect();
            points.dedup();
            let stride = points.len().div_ceil(MAX_LIPSCHITZ_POINTS).max(1);
            let sample: Vec<Vec<f64>> = points.into_iter().step_by(stride).collect();
            (empirical_lipschitz(obj, &sample), "empirical")
        }
    }
}

/// `approximation_error` with the Monte-Carlo branch run in parallel.
pub fn error_report(
    exp: &Experiment,
    obj: &ConvexObjective,
    n: usize,
    runs: usize,
    solved: &Solved,
) -> CliResult<ErrorOut> {
    let (lipschitz, source) = lipschitz_for(exp, obj, &solved.dagger);
    let opts = ErrorOptions { runs, seed: exp.seed, lipschitz, delta: exp.error.delta, state_cap: exp.state_cap()? };
    let report = if n == 1 {
        approximation_error(&exp.mdp, obj, n, &solved.pi_dagger, &solved.pi_star, &opts).context("approximation error")?
    } else {
        let a = parallel_zeta_values(&exp.mdp, &solved.pi_dagger, obj, n, runs, exp.seed)?;
        let b = parallel_zeta_values(&exp.mdp, &solved.pi_star, obj, n, runs, exp.seed)?;
        ErrorReport {
            n,
            err: (a.mean - b.mean).abs(),
            bound: bound_value(lipschitz, exp.mdp.horizon(), exp.mdp.num_states(), n, exp.error.delta),
            lipschitz_used: lipschitz,
            delta: exp.error.delta,
            method: ErrorMethod::MonteCarlo,
            zeta_dagger: a.mean,
            zeta_star: b.mean,
            ci_half_width: a.ci_half_width + b.ci_half_width,
        }
    };
    Ok(ErrorOut::new(&report, source))
}

pub fn run_experiment(exp: &Experiment) -> CliResult<ExperimentReport> {
    let solved = solve(exp)?;
    let cap = exp.state_cap()?;
    let exact_dagger = exact_out(exp, &solved.pi_dagger, cap)?;
    let exact_star = exact_out(exp, &solved.pi_star, cap)?;
    let exact_star_time_varying = exact_out(exp, &solved.pi_star_time_varying, cap)?;
    let (est_dagger, est_star, error_report, target) = match &exp.target {
        Target::Objective(o) => {
            let a = parallel_zeta_values(&exp.mdp, &solved.pi_dagger, o, exp.n, exp.runs, exp.seed)?;
            let b = parallel_zeta_values(&exp.mdp, &solved.pi_star, o, exp.n, exp.runs, exp.seed)?;
            let err = error_report(exp, o, exp.n, exp.runs, &solved)?;
            (a, b, Some(err), "objective")
        }
        Target::Risk(r) => {
            let a = parallel_risk_estimate(&exp.mdp, &solved.pi_dagger, r, exp.n, exp.runs, exp.seed)?;
            let b = parallel_risk_estimate(&exp.mdp, &solved.pi_star, r, exp.n, exp.runs, exp.seed)?;
            (a, b, None, "risk")
        }
    };
    let summary = Summary {
        name: exp.name.clone(),
        target,
        spec: exp.to_spec(),
        frank_wolfe: (&solved.fw).into(),
        single_trial: SingleTrialOut {
            optimal_value: solved.dagger.optimal_value,
            extended_states: solved.dagger.count_mdp.total_states(),
            layer_sizes: solved.dagger.count_mdp.layer_sizes(),
            cvar_threshold: solved.dagger.threshold,
            grid_approximate: solved.dagger.grid_approximate,
        },
        exact_dagger,
        exact_star,
        exact_star_time_varying,
        estimate_dagger: (&est_dagger).into(),
        estimate_star: (&est_star).into(),
        error_report,
    };
    Ok(ExperimentReport {
        summary,
        solved,
        dagger_values: est_dagger.raw_values,
        star_values: est_star.raw_values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub name: String,
    pub rows: Vec<ErrorOut>,
    /// Least-squares slope of `log err` against `log n` over rows with `err > 0`.
    pub log_log_slope: Option<f64>,
}

impl SweepReport {
    pub fn csv(&self) -> String {
        let mut out = String::from("n,err,bound,ci_half_width,zeta_dagger,zeta_star,method\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:?},{:?},{:?},{:?},{:?},{}\n",
                r.n, r.err, r.bound, r.ci_half_width, r.zeta_dagger, r.zeta_star, r.method
            ));
        }
        out
    }
}

/// One approximation-error row per `n`, with `pi_dagger` the single-trial optimum.
pub fn sweep_n(exp: &Experiment, n_values: &[usize], runs: Option<usize>) -> CliResult<SweepReport> {
    let Target::Objective(obj) = &exp.target else {
        return Err(invalid(&exp.name, "sweep-n needs an objective, not a risk functional"));
    };
    if n_values.contains(&0) {
        return Err(invalid(&exp.name, "every n must be at least 1"));
    }
    let runs = runs.unwrap_or(exp.runs);
    let solved = solve(exp)?;
    let rows = n_values.iter().map(|&n| error_report(exp, obj, n, runs, &solved)).collect::<CliResult<Vec<_>>>()?;
    let pts: Vec<(f64, f64)> =
        rows.iter().filter(|r| r.err > 0.0).map(|r| ((r.n as f64).ln(), r.err.ln())).collect();
    Ok(SweepReport { name: exp.name.clone(), log_log_slope: least_squares_slope(&pts), rows })
}

pub fn least_squares_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_resolves() {
        for name in BUILTIN_NAMES {
            let exp = builtin_instance(name).unwrap();
            assert_eq!(exp.name, name);
            assert!(exp.note.as_deref().unwrap_or("").to_lowercase().contains("reconstruct"));
        }
    }

    #[test]
    fn unknown_builtin_is_a_validation_error() {
        assert_eq!(builtin_instance("nope").unwrap_err().exit_code(), 2);
    }

    #[test]
    fn builtin_horizons() {
        assert_eq!(builtin_instance("pure_exploration").unwrap().mdp.horizon(), 6);
        assert_eq!(builtin_instance("risk_averse").unwrap().mdp.horizon(), 5);
        let im = builtin_instance("imitation").unwrap();
        assert_eq!(im.mdp.horizon(), 12);
        match im.target {
            Target::Objective(o) => assert_eq!(o.kind(), &ObjectiveKind::KlToTarget { target: vec![1.0 / 3.0, 2.0 / 3.0] }),
            Target::Risk(_) => panic!("imitation has an objective"),
        }
        match builtin_instance("risk_averse").unwrap().target {
            Target::Risk(RiskFunctional::Cvar { alpha, .. }) => assert_eq!(alpha, 0.4),
            other => panic!("unexpected target {other:?}"),
        }
    }

    #[test]
    fn slope_of_exact_power_law() {
        let pts: Vec<(f64, f64)> = [1.0f64, 2.0, 4.0, 8.0].iter().map(|n| (n.ln(), (3.0 * n.powf(-0.5)).ln())).collect();
        assert!((least_squares_slope(&pts).unwrap() + 0.5).abs() < 1e-12);
        assert_eq!(least_squares_slope(&pts[..1]), None);
    }

    #[test]
    fn atoms_merge_ties() {
        let a = atoms(vec![(0.5, 0.25), (0.1, 0.25), (0.5 + 1e-14, 0.5)]);
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].value, 0.1);
        assert!((a[1].probability - 0.75).abs() < 1e-15);
    }
}
