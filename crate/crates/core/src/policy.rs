//! Policy classes: stationary, time-varying Markovian and count-conditioned.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mdp::{check_stochastic, Mdp};

/// `pi(a | s)`, shared across steps.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryPolicy {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl StationaryPolicy {
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let num_states = rows.len();
        let num_actions = rows.first().map_or(0, Vec::len);
        if num_states == 0 || num_actions == 0 {
            return Err(Error::Empty("stationary policy"));
        }
        let mut probs = Vec::with_capacity(num_states * num_actions);
        for (s, row) in rows.iter().enumerate() {
            if row.len() != num_actions {
                return Err(Error::Dimension { what: "stationary policy row", expected: num_actions, found: row.len() });
            }
            check_stochastic(row).map_err(|e| Error::Invalid(format!("policy row s={s}: {e}")))?;
            probs.extend_from_slice(row);
        }
        Ok(Self { num_states, num_actions, probs })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Self { num_states, num_actions, probs: vec![1.0 / num_actions as f64; num_states * num_actions] }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.probs[state * self.num_actions..(state + 1) * self.num_actions]
    }
}

/// `pi_t(a | s)` for `t in 0..horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeVaryingPolicy {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl TimeVaryingPolicy {
    pub fn new(steps: &[Vec<Vec<f64>>]) -> Result<Self> {
        let horizon = steps.len();
        let num_states = steps.first().map_or(0, Vec::len);
        let num_actions = steps.first().and_then(|s| s.first()).map_or(0, Vec::len);
        if horizon == 0 || num_states == 0 || num_actions == 0 {
            return Err(Error::Empty("time-varying policy"));
        }
        let mut probs = Vec::with_capacity(horizon * num_states * num_actions);
        for (t, rows) in steps.iter().enumerate() {
            if rows.len() != num_states {
                return Err(Error::Dimension { what: "time-varying policy states", expected: num_states, found: rows.len() });
            }
            for (s, row) in rows.iter().enumerate() {
                if row.len() != num_actions {
                    return Err(Error::Dimension { what: "time-varying policy row", expected: num_actions, found: row.len() });
                }
                check_stochastic(row).map_err(|e| Error::Invalid(format!("policy row t={t}, s={s}: {e}")))?;
                probs.extend_from_slice(row);
            }
        }
        Ok(Self { horizon, num_states, num_actions, probs })
    }

    /// Builds from a flat `[t][s][a]` array without validation; callers guarantee stochastic rows.
    pub(crate) fn from_flat_unchecked(horizon: usize, num_states: usize, num_actions: usize, probs: Vec<f64>) -> Self {
        debug_assert_eq!(probs.len(), horizon * num_states * num_actions);
        Self { horizon, num_states, num_actions, probs }
    }

    /// Deterministic policy from `actions[t][s]`.
    pub fn deterministic(actions: &[Vec<usize>], num_actions: usize) -> Result<Self> {
        let horizon = actions.len();
        let num_states = actions.first().map_or(0, Vec::len);
        if horizon == 0 || num_states == 0 || num_actions == 0 {
            return Err(Error::Empty("time-varying policy"));
        }
        let mut probs = vec![0.0; horizon * num_states * num_actions];
        for (t, row) in actions.iter().enumerate() {
            if row.len() != num_states {
                return Err(Error::Dimension { what: "deterministic policy states", expected: num_states, found: row.len() });
            }
            for (s, &a) in row.iter().enumerate() {
                if a >= num_actions {
                    return Err(Error::Invalid(format!("action {a} out of range at t={t}, s={s}")));
                }
                probs[(t * num_states + s) * num_actions + a] = 1.0;
            }
        }
        Ok(Self { horizon, num_states, num_actions, probs })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn row(&self, step: usize, state: usize) -> &[f64] {
        let start = (step * self.num_states + state) * self.num_actions;
        &self.probs[start..start + self.num_actions]
    }
}

/// A deterministic policy keyed on `(step, visitation counts, current state)`.
///
/// The count vector covers the states counted toward the empirical distribution
/// so far (`s_1..s_t`, plus `s_0` when the MDP counts the initial state).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CountPolicy {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    /// Per step: counts -> action per current state.
    table: Vec<BTreeMap<Vec<u32>, Vec<Option<usize>>>>,
}

impl CountPolicy {
    pub fn new(num_states: usize, num_actions: usize, horizon: usize) -> Self {
        Self { num_states, num_actions, horizon, table: vec![BTreeMap::new(); horizon] }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn insert(&mut self, step: usize, counts: Vec<u32>, state: usize, action: usize) -> Result<()> {
        if step >= self.horizon {
            return Err(Error::Invalid(format!("step {step} beyond horizon {}", self.horizon)));
        }
        if counts.len() != self.num_states {
            return Err(Error::Dimension { what: "count vector", expected: self.num_states, found: counts.len() });
        }
        if state >= self.num_states || action >= self.num_actions {
            return Err(Error::Invalid(format!("state {state} or action {action} out of range")));
        }
        let n = self.num_states;
        self.table[step].entry(counts).or_insert_with(|| vec![None; n])[state] = Some(action);
        Ok(())
    }

    pub fn get(&self, step: usize, counts: &[u32], state: usize) -> Option<usize> {
        self.table.get(step)?.get(counts)?.get(state).copied().flatten()
    }

    /// Number of `(step, counts, state)` keys with an action.
    pub fn len(&self) -> usize {
        self.table.iter().flat_map(|m| m.values()).map(|v| v.iter().filter(|a| a.is_some()).count()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All entries as `(step, counts, state, action)` in a deterministic order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, &[u32], usize, usize)> + '_ {
        self.table.iter().enumerate().flat_map(|(t, m)| {
            m.iter().flat_map(move |(counts, actions)| {
                actions.iter().enumerate().filter_map(move |(s, a)| a.map(|a| (t, counts.as_slice(), s, a)))
            })
        })
    }

    /// Verifies that every key reachable in `mdp` under this policy has an entry.
    pub fn check_total(&self, mdp: &Mdp) -> Result<()> {
        if mdp.num_states() != self.num_states || mdp.horizon() != self.horizon {
            return Err(Error::Invalid("count policy shape does not match the MDP".into()));
        }
        let s_count = self.num_states;
        let mut frontier: BTreeMap<(Vec<u32>, usize), ()> = BTreeMap::new();
        for (s0, &p) in mdp.initial_dist().iter().enumerate() {
            if p > 0.0 {
                let mut c = vec![0u32; s_count];
                if mdp.count_initial_state() {
                    c[s0] += 1;
                }
                frontier.insert((c, s0), ());
            }
        }
        for t in 0..self.horizon {
            let mut next = BTreeMap::new();
            for (counts, s) in frontier.into_keys() {
                let a = self
                    .get(t, &counts, s)
                    .ok_or_else(|| Error::PolicyIncomplete { step: t, counts: counts.clone(), state: s })?;
                for (s2, &p) in mdp.next_state_probs(s, a).iter().enumerate() {
                    if p > 0.0 {
                        let mut c = counts.clone();
                        c[s2] += 1;
                        next.insert((c, s2), ());
                    }
                }
            }
            frontier = next;
        }
        Ok(())
    }
}

/// What a policy prescribes at one decision point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActionChoice<'a> {
    Mixed(&'a [f64]),
    Pure(usize),
}

/// Any of the three policy classes.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Stationary(StationaryPolicy),
    TimeVarying(TimeVaryingPolicy),
    Count(CountPolicy),
}

impl Policy {
    pub fn is_markovian(&self) -> bool {
        !matches!(self, Policy::Count(_))
    }

    pub fn num_states(&self) -> usize {
        match self {
            Policy::Stationary(p) => p.num_states(),
            Policy::TimeVarying(p) => p.num_states(),
            Policy::Count(p) => p.num_states(),
        }
    }

    pub fn num_actions(&self) -> usize {
        match self {
            Policy::Stationary(p) => p.num_actions(),
            Policy::TimeVarying(p) => p.num_actions(),
            Policy::Count(p) => p.num_actions(),
        }
    }

    /// Action distribution at `step` given the running counts and current state.
    #[inline]
    pub fn choose(&self, step: usize, counts: &[u32], state: usize) -> Result<ActionChoice<'_>> {
        match self {
            Policy::Stationary(p) => Ok(ActionChoice::Mixed(p.row(state))),
            Policy::TimeVarying(p) => Ok(ActionChoice::Mixed(p.row(step, state))),
            Policy::Count(p) => p
                .get(step, counts, state)
                .map(ActionChoice::Pure)
                .ok_or_else(|| Error::PolicyIncomplete { step, counts: counts.to_vec(), state }),
        }
    }

    /// Markovian row `pi_t(. | s)`; `None` for count policies.
    pub fn markov_row(&self, step: usize, state: usize) -> Option<&[f64]> {
        match self {
            Policy::Stationary(p) => Some(p.row(state)),
            Policy::TimeVarying(p) => Some(p.row(step, state)),
            Policy::Count(_) => None,
        }
    }

    /// Checks that the policy's shape fits `mdp` (and, for count policies, totality).
    pub fn check_compatible(&self, mdp: &Mdp) -> Result<()> {
        self.check_compatible_shape(mdp)?;
        match self {
            Policy::Count(p) => p.check_total(mdp),
            _ => Ok(()),
        }
    }

    /// Dimension and horizon checks only.
    pub fn check_compatible_shape(&self, mdp: &Mdp) -> Result<()> {
        if self.num_states() != mdp.num_states() {
            return Err(Error::Dimension { what: "policy states", expected: mdp.num_states(), found: self.num_states() });
        }
        if self.num_actions() != mdp.num_actions() {
            return Err(Error::Dimension { what: "policy actions", expected: mdp.num_actions(), found: self.num_actions() });
        }
        match self {
            Policy::TimeVarying(p) if p.horizon() < mdp.horizon() => {
                Err(Error::Dimension { what: "policy horizon", expected: mdp.horizon(), found: p.horizon() })
            }
            Policy::Count(p) if p.horizon() != mdp.horizon() => {
                Err(Error::Dimension { what: "policy horizon", expected: mdp.horizon(), found: p.horizon() })
            }
            _ => Ok(()),
        }
    }
}

impl From<StationaryPolicy> for Policy {
    fn from(p: StationaryPolicy) -> Self {
        Policy::Stationary(p)
    }
}

impl From<TimeVaryingPolicy> for Policy {
    fn from(p: TimeVaryingPolicy) -> Self {
        Policy::TimeVarying(p)
    }
}

impl From<CountPolicy> for Policy {
    fn from(p: CountPolicy) -> Self {
        Policy::Count(p)
    }
}
