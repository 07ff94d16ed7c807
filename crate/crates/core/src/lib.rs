//! Tabular convex reinforcement learning in finite and infinite trials.
//!
//! Two objectives are solved on the same episodic MDP:
//!
//! * the infinite-trials objective `F(d^pi)`, a concave (or convex) program over
//!   occupancy measures, solved by Frank-Wolfe in [`infinite`];
//! * the single-trial objective `E[F(d)]`, solved exactly by dynamic programming
//!   on an extended MDP of visitation counts in [`finite`].
//!
//! [`evaluation`] measures how far apart the two optima are when deployed over
//! `n` trials. The crate is `no_std` and only needs `alloc`.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod error;
pub mod evaluation;
pub mod finite;
pub mod infinite;
pub mod math;
pub mod mdp;
pub mod objective;
pub mod policy;
pub mod rng;
pub mod trajectory;

pub use error::{Error, Result};
pub use evaluation::{
    approximation_error, bound_value, estimate_risk_n, estimate_zeta_n, ErrorMethod, ErrorOptions, ErrorReport,
    HistogramBin, McEstimate,
};
pub use finite::{
    build_count_mdp, evaluate_policy_exact, evaluate_risk_exact, outcome_distribution, solve_single_trial,
    solve_single_trial_cvar, CountMdp, OutcomeDistribution, SingleTrialSolution, DEFAULT_STATE_CAP,
};
pub use infinite::{
    extract_policy, linear_oracle, occupancy_to_d, solve_frank_wolfe, FwOptions, FwReport, LinearSolution,
    OccupancyMeasure, PolicyMode, StepRule,
};
pub use mdp::{validate_mdp, Mdp};
pub use objective::{eval_objective, eval_risk, subgradient, ConvexObjective, ObjectiveKind, Returns, RiskFunctional, Sense};
pub use policy::{ActionChoice, CountPolicy, Policy, StationaryPolicy, TimeVaryingPolicy};
pub use rng::TrialRng;
pub use trajectory::{
    aggregate_empirical, empirical_distribution, enumerate_outcomes, sample_trajectory, state_distribution,
    EmpiricalDistribution, Trajectory, DEFAULT_ENUMERATION_CAP,
};
