//! Episodes, empirical state distributions, exact propagation and enumeration.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mdp::Mdp;
use crate::policy::{ActionChoice, Policy};
use crate::rng::TrialRng;

/// Default cap on the number of candidate outcomes `(S*A)^T` for [`enumerate_outcomes`].
pub const DEFAULT_ENUMERATION_CAP: usize = 10_000_000;

/// One episode: `s_0`, then the `T` states reached after each transition.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Trajectory {
    pub initial_state: usize,
    /// `s_1..s_T`.
    pub states: Vec<usize>,
    /// `a_0..a_{T-1}`.
    pub actions: Vec<usize>,
    /// Whether `s_0` counts toward the empirical distribution.
    pub count_initial_state: bool,
}

impl Trajectory {
    /// States that contribute to the empirical distribution, in visiting order.
    pub fn counted_states(&self) -> impl Iterator<Item = usize> + '_ {
        let head = self.count_initial_state.then_some(self.initial_state);
        head.into_iter().chain(self.states.iter().copied())
    }

    /// Visitation counts of the counted states.
    pub fn counts(&self, num_states: usize) -> Vec<u32> {
        let mut c = vec![0u32; num_states];
        for s in self.counted_states() {
            c[s] += 1;
        }
        c
    }
}

/// Visitation frequencies over `n` trials, stored as exact integer counts.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    counts: Vec<u64>,
    probs: Vec<f64>,
    trial_count: usize,
    denominator: u64,
}

impl EmpiricalDistribution {
    /// `counts` must sum to `trial_count * per_trial`.
    pub fn from_counts(counts: Vec<u64>, trial_count: usize) -> Result<Self> {
        if trial_count == 0 {
            return Err(Error::Empty("trials"));
        }
        let denominator: u64 = counts.iter().sum();
        if denominator == 0 || !denominator.is_multiple_of(trial_count as u64) {
            return Err(Error::Invalid("counts do not split evenly across trials".into()));
        }
        let probs = counts.iter().map(|&c| c as f64 / denominator as f64).collect();
        Ok(Self { counts, probs, trial_count, denominator })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn trial_count(&self) -> usize {
        self.trial_count
    }

    /// `n * (counted states per trial)`.
    pub fn denominator(&self) -> u64 {
        self.denominator
    }

    pub fn num_states(&self) -> usize {
        self.counts.len()
    }
}

/// Empirical distribution `d` of a single trajectory.
pub fn empirical_distribution(traj: &Trajectory, num_states: usize) -> EmpiricalDistribution {
    let counts = traj.counts(num_states).into_iter().map(u64::from).collect();
    EmpiricalDistribution::from_counts(counts, 1).expect("a trajectory counts at least one state")
}

/// `d_n`: the average of per-trial empirical distributions.
pub fn aggregate_empirical(dists: &[EmpiricalDistribution]) -> Result<EmpiricalDistribution> {
    let first = dists.first().ok_or(Error::Empty("empirical distributions"))?;
    let per_trial = first.denominator / first.trial_count as u64;
    let mut counts = vec![0u64; first.num_states()];
    let mut trials = 0;
    for d in dists {
        if d.num_states() != first.num_states() {
            return Err(Error::Dimension { what: "empirical distribution", expected: first.num_states(), found: d.num_states() });
        }
        if d.denominator / d.trial_count as u64 != per_trial {
            return Err(Error::Invalid("empirical distributions have different horizons".into()));
        }
        for (c, &x) in counts.iter_mut().zip(&d.counts) {
            *c += x;
        }
        trials += d.trial_count;
    }
    EmpiricalDistribution::from_counts(counts, trials)
}

#[inline]
fn pick_action(choice: ActionChoice<'_>, rng: &mut TrialRng) -> usize {
    match choice {
        ActionChoice::Pure(a) => a,
        ActionChoice::Mixed(row) => rng.categorical(row),
    }
}

/// Runs one episode. Deterministic given the rng state.
pub fn sample_trajectory(mdp: &Mdp, policy: &Policy, rng: &mut TrialRng) -> Result<Trajectory> {
    let horizon = mdp.horizon();
    let mut counts = vec![0u32; mdp.num_states()];
    let s0 = rng.categorical(mdp.initial_dist());
    if mdp.count_initial_state() {
        counts[s0] += 1;
    }
    let mut states = Vec::with_capacity(horizon);
    let mut actions = Vec::with_capacity(horizon);
    let mut s = s0;
    for t in 0..horizon {
        let a = pick_action(policy.choose(t, &counts, s)?, rng);
        let next = rng.categorical(mdp.next_state_probs(s, a));
        counts[next] += 1;
        actions.push(a);
        states.push(next);
        s = next;
    }
    Ok(Trajectory { initial_state: s0, states, actions, count_initial_state: mdp.count_initial_state() })
}

/// Visitation counts of one sampled episode, without materializing the trajectory.
pub(crate) fn sample_counts(mdp: &Mdp, policy: &Policy, rng: &mut TrialRng, counts: &mut [u32]) -> Result<()> {
    counts.iter_mut().for_each(|c| *c = 0);
    let s0 = rng.categorical(mdp.initial_dist());
    if mdp.count_initial_state() {
        counts[s0] += 1;
    }
    let mut s = s0;
    for t in 0..mdp.horizon() {
        let a = pick_action(policy.choose(t, counts, s)?, rng);
        s = rng.categorical(mdp.next_state_probs(s, a));
        counts[s] += 1;
    }
    Ok(())
}

/// Per-step marginals `d_0..d_T` under a Markovian policy.
pub fn step_marginals(mdp: &Mdp, policy: &Policy) -> Result<Vec<Vec<f64>>> {
    if !policy.is_markovian() {
        return Err(Error::Invalid(
            "count-conditioned policies have no per-step marginal recursion; use exact evaluation".into(),
        ));
    }
    policy.check_compatible(mdp)?;
    let n = mdp.num_states();
    let mut out = Vec::with_capacity(mdp.horizon() + 1);
    out.push(mdp.initial_dist().to_vec());
    for t in 0..mdp.horizon() {
        let cur = &out[t];
        let mut next = vec![0.0; n];
        for (s, &w) in cur.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let row = policy.markov_row(t, s).expect("markovian");
            for (a, &pa) in row.iter().enumerate() {
                if pa == 0.0 {
                    continue;
                }
                for (s2, &p) in mdp.next_state_probs(s, a).iter().enumerate() {
                    next[s2] += w * pa * p;
                }
            }
        }
        out.push(next);
    }
    Ok(out)
}

/// Expected empirical distribution `d^pi` of a Markovian policy.
pub fn state_distribution(mdp: &Mdp, policy: &Policy) -> Result<Vec<f64>> {
    let marginals = step_marginals(mdp, policy)?;
    let skip = usize::from(!mdp.count_initial_state());
    let m = mdp.counted_per_trial() as f64;
    let mut d = vec![0.0; mdp.num_states()];
    for dt in &marginals[skip..] {
        for (x, &p) in d.iter_mut().zip(dt) {
            *x += p;
        }
    }
    d.iter_mut().for_each(|x| *x /= m);
    Ok(d)
}

/// Every positive-probability trajectory with its exact probability.
pub fn enumerate_outcomes(mdp: &Mdp, policy: &Policy, cap: usize) -> Result<Vec<(Trajectory, f64)>> {
    let candidates = libm::pow((mdp.num_states() * mdp.num_actions()) as f64, mdp.horizon() as f64);
    if candidates > cap as f64 {
        return Err(Error::EnumerationTooLarge { outcomes: candidates, cap });
    }
    policy.check_compatible_shape(mdp)?;
    let mut out = Vec::new();
    for (s0, &p0) in mdp.initial_dist().iter().enumerate() {
        if p0 == 0.0 {
            continue;
        }
        let mut counts = vec![0u32; mdp.num_states()];
        if mdp.count_initial_state() {
            counts[s0] += 1;
        }
        let mut walk = Walk { mdp, policy, out: &mut out, s0, states: Vec::new(), actions: Vec::new(), counts };
        walk.expand(0, s0, p0)?;
    }
    Ok(out)
}

struct Walk<'a> {
    mdp: &'a Mdp,
    policy: &'a Policy,
    out: &'a mut Vec<(Trajectory, f64)>,
    s0: usize,
    states: Vec<usize>,
    actions: Vec<usize>,
    counts: Vec<u32>,
}

impl Walk<'_> {
    fn expand(&mut self, t: usize, s: usize, prob: f64) -> Result<()> {
        if t == self.mdp.horizon() {
            self.out.push((
                Trajectory {
                    initial_state: self.s0,
                    states: self.states.clone(),
                    actions: self.actions.clone(),
                    count_initial_state: self.mdp.count_initial_state(),
                },
                prob,
            ));
            return Ok(());
        }
        let actions = match self.policy.choose(t, &self.counts, s)? {
            ActionChoice::Mixed(row) => row.to_vec(),
            ActionChoice::Pure(a) => {
                let mut row = vec![0.0; self.mdp.num_actions()];
                row[a] = 1.0;
                row
            }
        };
        for (a, &pa) in actions.iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            for s2 in 0..self.mdp.num_states() {
                let p = self.mdp.next_state_probs(s, a)[s2];
                if p == 0.0 {
                    continue;
                }
                self.states.push(s2);
                self.actions.push(a);
                self.counts[s2] += 1;
                self.expand(t + 1, s2, prob * pa * p)?;
                self.counts[s2] -= 1;
                self.actions.pop();
                self.states.pop();
            }
        }
        Ok(())
    }
}
