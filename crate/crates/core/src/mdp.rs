//! Tabular episodic MDPs.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Absolute tolerance for validating user-supplied probabilities.
pub const INPUT_TOL: f64 = 1e-12;
/// Absolute tolerance for quantities computed from validated inputs.
pub const COMPUTED_TOL: f64 = 1e-10;

/// A finite-horizon tabular MDP `(S, A, P, T, mu)`.
///
/// An episode draws `s_0 ~ mu` and then takes exactly `horizon` transitions.
/// The empirical distribution of an episode counts the post-transition states
/// `s_1..s_T`; `count_initial_state` switches to counting `s_0..s_T` instead.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    initial_dist: Vec<f64>,
    /// Flat `[s][a][s']`.
    transition: Vec<f64>,
    count_initial_state: bool,
}

impl Mdp {
    /// Builds and validates an MDP from nested `P[s][a][s']` rows.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        initial_dist: Vec<f64>,
        transition: &[Vec<Vec<f64>>],
    ) -> Result<Self> {
        if transition.len() != num_states {
            return Err(Error::Dimension { what: "transition (states)", expected: num_states, found: transition.len() });
        }
        let mut flat = Vec::with_capacity(num_states * num_actions * num_states);
        for rows in transition {
            if rows.len() != num_actions {
                return Err(Error::Dimension { what: "transition (actions)", expected: num_actions, found: rows.len() });
            }
            for row in rows {
                if row.len() != num_states {
                    return Err(Error::Dimension { what: "transition (next states)", expected: num_states, found: row.len() });
                }
                flat.extend_from_slice(row);
            }
        }
        Self::from_flat(num_states, num_actions, horizon, initial_dist, flat)
    }

    /// Builds and validates an MDP from a flat `[s][a][s']` transition array.
    pub fn from_flat(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        initial_dist: Vec<f64>,
        transition: Vec<f64>,
    ) -> Result<Self> {
        let mdp = Self { num_states, num_actions, horizon, initial_dist, transition, count_initial_state: false };
        mdp.validate()?;
        Ok(mdp)
    }

    /// Checks every structural invariant, reporting the first violation.
    pub fn validate(&self) -> Result<()> {
        if self.num_states == 0 {
            return Err(Error::Invalid("num_states must be positive".into()));
        }
        if self.num_actions == 0 {
            return Err(Error::Invalid("num_actions must be positive".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Invalid("horizon must be at least 1".into()));
        }
        if self.initial_dist.len() != self.num_states {
            return Err(Error::Dimension { what: "initial_dist", expected: self.num_states, found: self.initial_dist.len() });
        }
        let expected = self.num_states * self.num_actions * self.num_states;
        if self.transition.len() != expected {
            return Err(Error::Dimension { what: "transition", expected, found: self.transition.len() });
        }
        check_stochastic(&self.initial_dist).map_err(|e| Error::Invalid(format!("initial_dist: {e}")))?;
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                check_stochastic(self.next_state_probs(s, a))
                    .map_err(|e| Error::Invalid(format!("transition row (s={s}, a={a}): {e}")))?;
            }
        }
        Ok(())
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

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    /// `P[s][a][..]`.
    #[inline]
    pub fn next_state_probs(&self, state: usize, action: usize) -> &[f64] {
        let start = (state * self.num_actions + action) * self.num_states;
        &self.transition[start..start + self.num_states]
    }

    pub fn transition_flat(&self) -> &[f64] {
        &self.transition
    }

    pub fn count_initial_state(&self) -> bool {
        self.count_initial_state
    }

    pub fn with_count_initial_state(mut self, yes: bool) -> Self {
        self.count_initial_state = yes;
        self
    }

    /// Number of states that contribute to one episode's empirical distribution.
    pub fn counted_per_trial(&self) -> usize {
        self.horizon + usize::from(self.count_initial_state)
    }

    /// Same dynamics with a different horizon.
    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Invalid("horizon must be at least 1".into()));
        }
        let mut out = self.clone();
        out.horizon = horizon;
        Ok(out)
    }
}

/// Returns the validated MDP, or the first violated invariant.
pub fn validate_mdp(mdp: Mdp) -> Result<Mdp> {
    mdp.validate()?;
    Ok(mdp)
}

/// Checks that `p` is a probability vector within [`INPUT_TOL`].
pub(crate) fn check_stochastic(p: &[f64]) -> core::result::Result<(), alloc::string::String> {
    for (i, &x) in p.iter().enumerate() {
        if !x.is_finite() {
            return Err(format!("non-finite probability {x} at index {i}"));
        }
        if x < 0.0 {
            return Err(format!("negative probability {x} at index {i}"));
        }
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > INPUT_TOL {
        return Err(format!("row sum {sum} deviates from 1"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    #[test]
    fn accepts_deterministic_two_state() {
        let mdp = Mdp::new(2, 1, 1, vec![1.0, 0.0], &[vec![vec![1.0, 0.0]], vec![vec![0.0, 1.0]]]);
        assert!(validate_mdp(mdp.unwrap()).is_ok());
    }

    #[test]
    fn rejects_short_row() {
        let err = Mdp::new(2, 1, 1, vec![1.0, 0.0], &[vec![vec![0.5, 0.4]], vec![vec![0.0, 1.0]]]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row sum 0.9"), "{msg}");
        assert!(msg.contains("s=0, a=0"), "{msg}");
    }

    #[test]
    fn rejects_negative_initial() {
        let err = Mdp::new(2, 1, 1, vec![-0.1, 1.1], &[vec![vec![1.0, 0.0]], vec![vec![0.0, 1.0]]]).unwrap_err();
        assert!(err.to_string().contains("negative probability"));
    }

    #[test]
    fn rejects_zero_horizon_and_bad_shapes() {
        assert!(Mdp::new(1, 1, 0, vec![1.0], &[vec![vec![1.0]]]).is_err());
        assert!(matches!(
            Mdp::new(2, 1, 1, vec![1.0, 0.0], &[vec![vec![1.0, 0.0]]]),
            Err(Error::Dimension { .. })
        ));
    }
}
