//! JSON file formats for MDPs, objectives, risk functionals, policies and solver reports.

use std::fs;
use std::path::Path;

use convex_trials_core::{
    ConvexObjective, CountPolicy, FwReport, Mdp, ObjectiveKind, Policy, RiskFunctional, Sense, StationaryPolicy,
    TimeVaryingPolicy,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult, Context};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpFile {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub initial_dist: Vec<f64>,
    /// `transition[s][a][s']`.
    pub transition: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    pub count_initial_state: bool,
}

impl MdpFile {
    pub fn to_mdp(&self) -> CliResult<Mdp> {
        let mdp = Mdp::new(self.num_states, self.num_actions, self.horizon, self.initial_dist.clone(), &self.transition)
            .context("mdp")?;
        Ok(mdp.with_count_initial_state(self.count_initial_state))
    }

    pub fn from_mdp(mdp: &Mdp) -> Self {
        let transition = (0..mdp.num_states())
            .map(|s| (0..mdp.num_actions()).map(|a| mdp.next_state_probs(s, a).to_vec()).collect())
            .collect();
        Self {
            num_states: mdp.num_states(),
            num_actions: mdp.num_actions(),
            horizon: mdp.horizon(),
            initial_dist: mdp.initial_dist().to_vec(),
            transition,
            count_initial_state: mdp.count_initial_state(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SenseName {
    Maximize,
    Minimize,
}

impl From<SenseName> for Sense {
    fn from(s: SenseName) -> Self {
        match s {
            SenseName::Maximize => Sense::Maximize,
            SenseName::Minimize => Sense::Minimize,
        }
    }
}

impl From<Sense> for SenseName {
    fn from(s: Sense) -> Self {
        match s {
            Sense::Maximize => SenseName::Maximize,
            Sense::Minimize => SenseName::Minimize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveFile {
    Entropy {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sense: Option<SenseName>,
    },
    Kl {
        target: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sense: Option<SenseName>,
    },
    Lp {
        p: f64,
        target: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sense: Option<SenseName>,
    },
    Linear {
        reward: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sense: Option<SenseName>,
    },
    LinearConstrained {
        reward: Vec<f64>,
        cost: Vec<f64>,
        threshold: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        penalty_weight: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sense: Option<SenseName>,
    },
}

impl ObjectiveFile {
    pub fn to_objective(&self) -> CliResult<ConvexObjective> {
        let (obj, sense) = match self {
            ObjectiveFile::Entropy { sense } => (ConvexObjective::entropy(), sense),
            ObjectiveFile::Kl { target, sense } => (ConvexObjective::kl_to_target(target.clone()).context("objective")?, sense),
            ObjectiveFile::Lp { p, target, sense } => {
                (ConvexObjective::lp_distance(*p, target.clone()).context("objective")?, sense)
            }
            ObjectiveFile::Linear { reward, sense } => (ConvexObjective::linear(reward.clone()).context("objective")?, sense),
            ObjectiveFile::LinearConstrained { reward, cost, threshold, penalty_weight, sense } => (
                ConvexObjective::linear_constrained(reward.clone(), cost.clone(), *threshold, *penalty_weight)
                    .context("objective")?,
                sense,
            ),
        };
        Ok(match sense {
            Some(s) => obj.with_sense((*s).into()),
            None => obj,
        })
    }

    /// Fully explicit form: defaults such as the sense and penalty weight are filled in.
    pub fn from_objective(obj: &ConvexObjective) -> Self {
        let sense = Some(obj.sense().into());
        match obj.kind() {
            ObjectiveKind::Entropy => ObjectiveFile::Entropy { sense },
            ObjectiveKind::KlToTarget { target } => ObjectiveFile::Kl { target: target.clone(), sense },
            ObjectiveKind::LpDistance { p, target } => ObjectiveFile::Lp { p: *p, target: target.clone(), sense },
            ObjectiveKind::Linear { reward } => ObjectiveFile::Linear { reward: reward.clone(), sense },
            ObjectiveKind::LinearWithConstraint { reward, cost, threshold, penalty_weight } => {
                ObjectiveFile::LinearConstrained {
                    reward: reward.clone(),
                    cost: cost.clone(),
                    threshold: *threshold,
                    penalty_weight: Some(*penalty_weight),
                    sense,
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RiskFile {
    Cvar { alpha: f64, reward: Vec<f64> },
    MeanVariance { reward: Vec<f64>, weight: f64 },
}

impl RiskFile {
    pub fn to_risk(&self) -> CliResult<RiskFunctional> {
        match self {
            RiskFile::Cvar { alpha, reward } => RiskFunctional::cvar(*alpha, reward.clone()).context("risk"),
            RiskFile::MeanVariance { reward, weight } => {
                RiskFunctional::mean_minus_variance(reward.clone(), *weight).context("risk")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountEntry {
    pub t: usize,
    pub counts: Vec<u32>,
    pub state: usize,
    pub action: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyFile {
    /// `probs[s][a]`.
    Stationary { probs: Vec<Vec<f64>> },
    /// `probs[t][s][a]`.
    TimeVarying { probs: Vec<Vec<Vec<f64>>> },
    /// Deterministic actions keyed by `(t, counts of counted states so far, state)`.
    Count { num_states: usize, num_actions: usize, horizon: usize, entries: Vec<CountEntry> },
}

impl PolicyFile {
    pub fn to_policy(&self) -> CliResult<Policy> {
        Ok(match self {
            PolicyFile::Stationary { probs } => StationaryPolicy::new(probs).context("policy")?.into(),
            PolicyFile::TimeVarying { probs } => TimeVaryingPolicy::new(probs).context("policy")?.into(),
            PolicyFile::Count { num_states, num_actions, horizon, entries } => {
                let mut p = CountPolicy::new(*num_states, *num_actions, *horizon);
                for e in entries {
                    p.insert(e.t, e.counts.clone(), e.state, e.action).context("policy entry")?;
                }
                p.into()
            }
        })
    }

    pub fn from_policy(policy: &Policy) -> Self {
        match policy {
            Policy::Stationary(p) => {
                PolicyFile::Stationary { probs: (0..p.num_states()).map(|s| p.row(s).to_vec()).collect() }
            }
            Policy::TimeVarying(p) => PolicyFile::TimeVarying {
                probs: (0..p.horizon()).map(|t| (0..p.num_states()).map(|s| p.row(t, s).to_vec()).collect()).collect(),
            },
            Policy::Count(p) => PolicyFile::Count {
                num_states: p.num_states(),
                num_actions: p.num_actions(),
                horizon: p.horizon(),
                entries: p
                    .entries()
                    .map(|(t, counts, state, action)| CountEntry { t, counts: counts.to_vec(), state, action })
                    .collect(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FwReportFile {
    pub iterations: usize,
    pub final_gap: f64,
    pub converged: bool,
    pub final_value: f64,
    pub final_d: Vec<f64>,
    pub objective_trace: Vec<f64>,
}

impl From<&FwReport> for FwReportFile {
    fn from(r: &FwReport) -> Self {
        Self {
            iterations: r.iterations,
            final_gap: r.final_gap,
            converged: r.converged,
            final_value: r.final_value,
            final_d: r.final_d.clone(),
            objective_trace: r.objective_trace.clone(),
        }
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| CliError::Parse { path: path.to_path_buf(), source })
}

pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_text(path, &to_json_string(value))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// `run_id,value` rows; floats use the shortest round-trip representation.
pub fn runs_csv(values: &[f64]) -> String {
    let mut out = String::from("run_id,value\n");
    for (i, v) in values.iter().enumerate() {
        out.push_str(&format!("{i},{v:?}\n"));
    }
    out
}

pub fn read_mdp(path: &Path) -> CliResult<Mdp> {
    read_json::<MdpFile>(path)?.to_mdp()
}

pub fn read_objective(path: &Path) -> CliResult<ConvexObjective> {
    read_json::<ObjectiveFile>(path)?.to_objective()
}

pub fn read_risk(path: &Path) -> CliResult<RiskFunctional> {
    read_json::<RiskFile>(path)?.to_risk()
}

pub fn read_policy(path: &Path) -> CliResult<Policy> {
    read_json::<PolicyFile>(path)?.to_policy()
}
