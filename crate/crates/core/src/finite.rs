//! Single-trial solver: exact dynamic programming on the extended MDP whose
//! states are `(step, visitation counts, current state)`.
//!
//! A full history is summarized by its visitation counts and its last state:
//! the terminal reward `F(d)` depends only on the counts and the dynamics only
//! on the last state, so the count MDP has the same optimal value as the
//! history MDP while growing polynomially (not exponentially) in `T`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mdp::Mdp;
use crate::objective::{ConvexObjective, Returns, RiskFunctional, Sense};
use crate::policy::{ActionChoice, CountPolicy, Policy};

/// Default cap on the total number of abstract states.
pub const DEFAULT_STATE_CAP: usize = 5_000_000;
/// Largest RU threshold grid solved point by point.
pub const MAX_THRESHOLD_GRID: usize = 100_000;

const NO_SUCCESSOR: u32 = u32::MAX;

/// One layer of abstract states, sorted by `(counts, state)`.
#[derive(Debug, Clone, Default)]
pub struct Layer {
    /// Flat counts with stride `S`.
    counts: Vec<u32>,
    states: Vec<usize>,
}

impl Layer {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn counts(&self, i: usize, num_states: usize) -> &[u32] {
        &self.counts[i * num_states..(i + 1) * num_states]
    }

    pub fn state(&self, i: usize) -> usize {
        self.states[i]
    }

    fn find(&self, counts: &[u32], state: usize, num_states: usize) -> Option<usize> {
        let (mut lo, mut hi) = (0, self.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            let key = (self.counts(mid, num_states), self.states[mid]);
            match key.cmp(&(counts, state)) {
                core::cmp::Ordering::Less => lo = mid + 1,
                core::cmp::Ordering::Greater => hi = mid,
                core::cmp::Ordering::Equal => return Some(mid),
            }
        }
        None
    }
}

/// The forward-reachable layered graph of abstract states.
#[derive(Debug, Clone)]
pub struct CountMdp {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    counted_per_trial: usize,
    /// Layers `0..=T`.
    layers: Vec<Layer>,
    /// For layers `0..T`: flat `[i][s']` index into the next layer.
    successors: Vec<Vec<u32>>,
    /// `F(counts / m)` on the last layer, when built for an objective.
    terminal_value: Vec<f64>,
}

impl CountMdp {
    /// Builds the reachable skeleton (no terminal values).
    pub fn skeleton(mdp: &Mdp, cap: usize) -> Result<Self> {
        let s_n = mdp.num_states();
        let mut total = 0usize;
        let mut layer0: Vec<(Vec<u32>, usize)> = mdp
            .initial_dist()
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(s, _)| {
                let mut c = vec![0u32; s_n];
                if mdp.count_initial_state() {
                    c[s] += 1;
                }
                (c, s)
            })
            .collect();
        layer0.sort();
        let mut layers = vec![layer_from_keys(layer0)];
        total += layers[0].len();
        if total > cap {
            return Err(Error::ExtendedMdpTooLarge { cap });
        }
        // reachable next states from each base state under some action
        let reach: Vec<Vec<usize>> = (0..s_n)
            .map(|s| {
                (0..s_n)
                    .filter(|&s2| (0..mdp.num_actions()).any(|a| mdp.next_state_probs(s, a)[s2] > 0.0))
                    .collect()
            })
            .collect();

        let mut successors = Vec::with_capacity(mdp.horizon());
        for t in 0..mdp.horizon() {
            let cur = &layers[t];
            let mut keys: Vec<(Vec<u32>, usize)> = Vec::new();
            for i in 0..cur.len() {
                let s = cur.state(i);
                for &s2 in &reach[s] {
                    let mut c = cur.counts(i, s_n).to_vec();
                    c[s2] += 1;
                    keys.push((c, s2));
                }
            }
            keys.sort();
            keys.dedup();
            total += keys.len();
            if total > cap {
                return Err(Error::ExtendedMdpTooLarge { cap });
            }
            let next = layer_from_keys(keys);
            let mut succ = vec![NO_SUCCESSOR; cur.len() * s_n];
            let mut scratch = vec![0u32; s_n];
            for i in 0..cur.len() {
                let s = cur.state(i);
                for &s2 in &reach[s] {
                    scratch.copy_from_slice(cur.counts(i, s_n));
                    scratch[s2] += 1;
                    let j = next.find(&scratch, s2, s_n).expect("successor was inserted");
                    succ[i * s_n + s2] = j as u32;
                }
            }
            successors.push(succ);
            layers.push(next);
        }
        Ok(Self {
            num_states: s_n,
            num_actions: mdp.num_actions(),
            horizon: mdp.horizon(),
            counted_per_trial: mdp.counted_per_trial(),
            layers,
            successors,
            terminal_value: Vec::new(),
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn layer(&self, t: usize) -> &Layer {
        &self.layers[t]
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(Layer::len).collect()
    }

    pub fn total_states(&self) -> usize {
        self.layers.iter().map(Layer::len).sum()
    }

    pub fn terminal_values(&self) -> &[f64] {
        &self.terminal_value
    }

    /// Empirical distribution of terminal abstract state `i`.
    pub fn terminal_d(&self, i: usize) -> Vec<f64> {
        let m = self.counted_per_trial as f64;
        self.layers[self.horizon].counts(i, self.num_states).iter().map(|&c| f64::from(c) / m).collect()
    }

    fn terminal_map(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..self.layers[self.horizon].len()).map(|i| f(&self.terminal_d(i))).collect()
    }

    /// Backward induction with the given terminal values; ties go to the lowest action.
    fn backward(&self, mdp: &Mdp, terminal: &[f64], sense: Sense) -> (Vec<Vec<f64>>, CountPolicy) {
        let s_n = self.num_states;
        let mut values: Vec<Vec<f64>> = vec![Vec::new(); self.horizon + 1];
        values[self.horizon] = terminal.to_vec();
        let mut policy = CountPolicy::new(s_n, self.num_actions, self.horizon);
        for t in (0..self.horizon).rev() {
            let layer = &self.layers[t];
            let succ = &self.successors[t];
            let next = &values[t + 1];
            let mut cur = vec![0.0; layer.len()];
            for i in 0..layer.len() {
                let s = layer.state(i);
                let mut best = f64::NAN;
                let mut best_a = 0;
                for a in 0..self.num_actions {
                    let mut q = 0.0;
                    for (s2, &p) in mdp.next_state_probs(s, a).iter().enumerate() {
                        if p > 0.0 {
                            q += p * next[succ[i * s_n + s2] as usize];
                        }
                    }
                    if a == 0 || sense.better(q, best) {
                        best = q;
                        best_a = a;
                    }
                }
                cur[i] = best;
                policy
                    .insert(t, layer.counts(i, s_n).to_vec(), s, best_a)
                    .expect("keys come from the skeleton");
            }
            values[t] = cur;
        }
        (values, policy)
    }

    /// Exact probability of each terminal abstract state under `policy`.
    pub fn propagate(&self, mdp: &Mdp, policy: &Policy) -> Result<Vec<f64>> {
        policy.check_compatible_shape(mdp)?;
        let s_n = self.num_states;
        let mut prob: Vec<f64> = vec![0.0; self.layers[0].len()];
        for (i, p) in prob.iter_mut().enumerate() {
            *p = mdp.initial_dist()[self.layers[0].state(i)];
        }
        for t in 0..self.horizon {
            let layer = &self.layers[t];
            let succ = &self.successors[t];
            let mut next = vec![0.0; self.layers[t + 1].len()];
            for i in 0..layer.len() {
                let w = prob[i];
                if w == 0.0 {
                    continue;
                }
                let s = layer.state(i);
                let mut push = |a: usize, pa: f64| {
                    for (s2, &p) in mdp.next_state_probs(s, a).iter().enumerate() {
                        if p > 0.0 {
                            next[succ[i * s_n + s2] as usize] += w * pa * p;
                        }
                    }
                };
                match policy.choose(t, layer.counts(i, s_n), s)? {
                    ActionChoice::Pure(a) => push(a, 1.0),
                    ActionChoice::Mixed(row) => {
                        for (a, &pa) in row.iter().enumerate() {
                            if pa > 0.0 {
                                push(a, pa);
                            }
                        }
                    }
                }
            }
            prob = next;
        }
        Ok(prob)
    }
}

fn layer_from_keys(keys: Vec<(Vec<u32>, usize)>) -> Layer {
    let mut layer = Layer::default();
    for (c, s) in keys {
        layer.counts.extend_from_slice(&c);
        layer.states.push(s);
    }
    layer
}

/// Builds the count MDP with terminal values `F(counts / m)`.
pub fn build_count_mdp(mdp: &Mdp, obj: &ConvexObjective, cap: usize) -> Result<CountMdp> {
    obj.check_dimension(mdp.num_states())?;
    let mut cm = CountMdp::skeleton(mdp, cap)?;
    cm.terminal_value = cm.terminal_map(|d| obj.value(d));
    Ok(cm)
}

/// An optimal count-conditioned policy for a single-trial objective.
#[derive(Debug, Clone)]
pub struct SingleTrialSolution {
    pub policy: CountPolicy,
    pub optimal_value: f64,
    /// Optimal value-to-go per layer, aligned with [`CountMdp::layer`].
    pub value_table: Vec<Vec<f64>>,
    pub count_mdp: CountMdp,
    /// RU threshold `b` of a CVaR solve.
    pub threshold: Option<f64>,
    /// Set when the RU threshold grid had to be thinned.
    pub grid_approximate: bool,
}

impl SingleTrialSolution {
    /// Optimal value-to-go of an abstract state.
    pub fn value_of(&self, step: usize, counts: &[u32], state: usize) -> Option<f64> {
        let i = self.count_mdp.layer(step).find(counts, state, self.count_mdp.num_states)?;
        Some(self.value_table[step][i])
    }
}

fn layer0_value(cm: &CountMdp, mdp: &Mdp, values: &[f64]) -> f64 {
    let layer = cm.layer(0);
    (0..layer.len()).map(|i| mdp.initial_dist()[layer.state(i)] * values[i]).sum()
}

/// Exactly maximizes (or minimizes, per the objective's sense) `E[F(d)]` over all policies.
pub fn solve_single_trial(mdp: &Mdp, obj: &ConvexObjective, cap: usize) -> Result<SingleTrialSolution> {
    let cm = build_count_mdp(mdp, obj, cap)?;
    let (values, policy) = cm.backward(mdp, &cm.terminal_value, obj.sense());
    let optimal_value = layer0_value(&cm, mdp, &values[0]);
    Ok(SingleTrialSolution { policy, optimal_value, value_table: values, count_mdp: cm, threshold: None, grid_approximate: false })
}

/// Distribution of a policy's terminal visitation counts, merged by count vector.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeDistribution {
    pub counts: Vec<Vec<u32>>,
    pub probs: Vec<f64>,
    pub counted_per_trial: usize,
}

impl OutcomeDistribution {
    pub fn d(&self, i: usize) -> Vec<f64> {
        let m = self.counted_per_trial as f64;
        self.counts[i].iter().map(|&c| f64::from(c) / m).collect()
    }

    /// `(f(d), probability)` atoms.
    pub fn map_values(&self, f: impl Fn(&[f64]) -> f64) -> Vec<(f64, f64)> {
        (0..self.counts.len()).map(|i| (f(&self.d(i)), self.probs[i])).collect()
    }
}

/// Exact outcome distribution of any policy kind, by layer-wise propagation.
pub fn outcome_distribution(mdp: &Mdp, policy: &Policy, cap: usize) -> Result<OutcomeDistribution> {
    let cm = CountMdp::skeleton(mdp, cap)?;
    outcomes_on(&cm, mdp, policy)
}

fn outcomes_on(cm: &CountMdp, mdp: &Mdp, policy: &Policy) -> Result<OutcomeDistribution> {
    let probs = cm.propagate(mdp, policy)?;
    let last = cm.layer(cm.horizon);
    let s_n = cm.num_states;
    let mut counts: Vec<Vec<u32>> = Vec::new();
    let mut out_p: Vec<f64> = Vec::new();
    // layer is sorted by counts first, so equal count vectors are adjacent
    for (i, &p) in probs.iter().enumerate() {
        let c = last.counts(i, s_n);
        if counts.last().map(Vec::as_slice) == Some(c) {
            *out_p.last_mut().expect("non-empty") += p;
        } else {
            counts.push(c.to_vec());
            out_p.push(p);
        }
    }
    let keep: Vec<usize> = (0..counts.len()).filter(|&i| out_p[i] > 0.0).collect();
    Ok(OutcomeDistribution {
        counts: keep.iter().map(|&i| counts[i].clone()).collect(),
        probs: keep.iter().map(|&i| out_p[i]).collect(),
        counted_per_trial: cm.counted_per_trial,
    })
}

/// `zeta_1(pi) = E[F(d)]`, computed exactly.
pub fn evaluate_policy_exact(mdp: &Mdp, policy: &Policy, obj: &ConvexObjective, cap: usize) -> Result<f64> {
    obj.check_dimension(mdp.num_states())?;
    let out = outcome_distribution(mdp, policy, cap)?;
    Ok(out.map_values(|d| obj.value(d)).iter().map(|(v, p)| v * p).sum())
}

/// Exact value of a risk functional of the per-trial return.
pub fn evaluate_risk_exact(mdp: &Mdp, policy: &Policy, risk: &RiskFunctional, cap: usize) -> Result<f64> {
    check_reward_dim(mdp, risk)?;
    let out = outcome_distribution(mdp, policy, cap)?;
    risk.eval(Returns::Exact(&out.map_values(|d| risk.trial_return(d))))
}

fn check_reward_dim(mdp: &Mdp, risk: &RiskFunctional) -> Result<()> {
    if risk.reward().len() != mdp.num_states() {
        return Err(Error::Dimension { what: "risk reward", expected: mdp.num_states(), found: risk.reward().len() });
    }
    Ok(())
}

/// Maximizes the single-trial lower CVaR of `r . d` via the Rockafellar-Uryasev
/// threshold search: for each achievable return `b`, solve
/// `max_pi E[b - (b - r.d)^+ / alpha]` exactly and keep the best pair.
pub fn solve_single_trial_cvar(mdp: &Mdp, risk: &RiskFunctional, cap: usize) -> Result<SingleTrialSolution> {
    let RiskFunctional::Cvar { alpha, .. } = risk else {
        return Err(Error::Invalid("only CVaR has an exact single-trial solver".into()));
    };
    let alpha = *alpha;
    check_reward_dim(mdp, risk)?;
    let mut cm = CountMdp::skeleton(mdp, cap)?;
    let returns = cm.terminal_map(|d| risk.trial_return(d));
    let mut grid = returns.clone();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut grid_approximate = false;
    if grid.len() > MAX_THRESHOLD_GRID {
        let stride = grid.len().div_ceil(MAX_THRESHOLD_GRID);
        let last = *grid.last().expect("non-empty");
        grid = grid.into_iter().step_by(stride).collect();
        if grid.last() != Some(&last) {
            grid.push(last);
        }
        grid_approximate = true;
    }

    let mut best: Option<(f64, f64, Vec<Vec<f64>>, CountPolicy)> = None;
    for &b in &grid {
        let terminal: Vec<f64> = returns.iter().map(|&x| b - (b - x).max(0.0) / alpha).collect();
        let (values, policy) = cm.backward(mdp, &terminal, Sense::Maximize);
        let j = layer0_value(&cm, mdp, &values[0]);
        if best.as_ref().is_none_or(|(bj, ..)| j > *bj) {
            best = Some((j, b, values, policy));
        }
    }
    let (_, b, values, policy) = best.ok_or(Error::Empty("return grid"))?;
    let pol = Policy::Count(policy);
    let out = outcomes_on(&cm, mdp, &pol)?;
    let optimal_value = risk.eval(Returns::Exact(&out.map_values(|d| risk.trial_return(d))))?;
    let Policy::Count(policy) = pol else { unreachable!() };
    cm.terminal_value = returns;
    Ok(SingleTrialSolution { policy, optimal_value, value_table: values, count_mdp: cm, threshold: Some(b), grid_approximate })
}
