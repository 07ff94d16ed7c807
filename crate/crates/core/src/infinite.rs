//! Infinite-trials solver: maximize `F(d^pi)` over time-indexed occupancy
//! measures with Frank-Wolfe, using backward induction as the linear oracle.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::dot;
use crate::mdp::Mdp;
use crate::objective::{ConvexObjective, ObjectiveKind};
use crate::policy::{Policy, StationaryPolicy, TimeVaryingPolicy};

/// Rows with less mass than this fall back to the uniform action distribution.
pub const MASS_EPS: f64 = 1e-12;

/// `omega_t(s, a)` for `t in 0..T`: the probability of being in `s` and taking `a` at step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMeasure {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    omega: Vec<f64>,
}

impl OccupancyMeasure {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn get(&self, step: usize, state: usize, action: usize) -> f64 {
        self.omega[(step * self.num_states + state) * self.num_actions + action]
    }

    /// Flat `[t][s][a]` view.
    pub fn as_slice(&self) -> &[f64] {
        &self.omega
    }

    /// Occupancy induced by a Markovian policy.
    pub fn from_policy(mdp: &Mdp, policy: &Policy) -> Result<Self> {
        if !policy.is_markovian() {
            return Err(Error::Invalid("occupancy measures are defined for Markovian policies".into()));
        }
        policy.check_compatible(mdp)?;
        let (s_n, a_n, t_n) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
        let mut omega = vec![0.0; t_n * s_n * a_n];
        let mut marginal = mdp.initial_dist().to_vec();
        for t in 0..t_n {
            let mut next = vec![0.0; s_n];
            for s in 0..s_n {
                let row = policy.markov_row(t, s).expect("markovian");
                for a in 0..a_n {
                    let w = marginal[s] * row[a];
                    omega[(t * s_n + s) * a_n + a] = w;
                    if w != 0.0 {
                        for (x, &p) in next.iter_mut().zip(mdp.next_state_probs(s, a)) {
                            *x += w * p;
                        }
                    }
                }
            }
            marginal = next;
        }
        Ok(Self { horizon: t_n, num_states: s_n, num_actions: a_n, omega })
    }

    /// Largest violation of the normalization and flow constraints.
    pub fn flow_violation(&self, mdp: &Mdp) -> f64 {
        let (s_n, a_n) = (self.num_states, self.num_actions);
        let mut worst = 0.0f64;
        let mut expected = mdp.initial_dist().to_vec();
        for t in 0..self.horizon {
            let mut total = 0.0;
            let mut next = vec![0.0; s_n];
            for (s, &want) in expected.iter().enumerate() {
                let mut mass = 0.0;
                for a in 0..a_n {
                    let w = self.get(t, s, a);
                    mass += w;
                    for (x, &p) in next.iter_mut().zip(mdp.next_state_probs(s, a)) {
                        *x += w * p;
                    }
                }
                total += mass;
                worst = worst.max((mass - want).abs());
            }
            worst = worst.max((total - 1.0).abs());
            expected = next;
        }
        worst
    }
}

/// Expected empirical distribution of an occupancy, under the MDP's counting convention.
///
/// Step `t` contributes the post-transition marginal `sum_{s,a} P(. | s, a) omega_t(s, a)`.
pub fn occupancy_to_d(mdp: &Mdp, occ: &OccupancyMeasure) -> Vec<f64> {
    let (s_n, a_n) = (occ.num_states, occ.num_actions);
    let mut d = vec![0.0; s_n];
    for t in 0..occ.horizon {
        for s in 0..s_n {
            for a in 0..a_n {
                let w = occ.get(t, s, a);
                if w == 0.0 {
                    continue;
                }
                if t == 0 && mdp.count_initial_state() {
                    d[s] += w;
                }
                for (x, &p) in d.iter_mut().zip(mdp.next_state_probs(s, a)) {
                    *x += w * p;
                }
            }
        }
    }
    let m = mdp.counted_per_trial() as f64;
    d.iter_mut().for_each(|x| *x /= m);
    d
}

/// Output of the linear oracle.
#[derive(Debug, Clone)]
pub struct LinearSolution {
    pub occupancy: OccupancyMeasure,
    pub policy: TimeVaryingPolicy,
    /// `reward . d` at the returned occupancy, from the value function.
    pub value: f64,
    pub d: Vec<f64>,
}

/// Maximizes `reward . d` over the occupancy polytope by backward induction.
///
/// The reward of a transition is collected on the state it reaches. Ties go to
/// the lowest action index.
pub fn linear_oracle(mdp: &Mdp, reward: &[f64]) -> Result<LinearSolution> {
    let (s_n, a_n, t_n) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    if reward.len() != s_n {
        return Err(Error::Dimension { what: "reward", expected: s_n, found: reward.len() });
    }
    let mut value_next = vec![0.0; s_n];
    let mut actions = vec![0usize; t_n * s_n];
    for t in (0..t_n).rev() {
        let mut value = vec![0.0; s_n];
        for s in 0..s_n {
            let mut best = f64::NEG_INFINITY;
            let mut best_a = 0;
            for a in 0..a_n {
                let q: f64 = mdp
                    .next_state_probs(s, a)
                    .iter()
                    .zip(reward.iter().zip(&value_next))
                    .map(|(p, (r, v))| p * (r + v))
                    .sum();
                if q > best {
                    best = q;
                    best_a = a;
                }
            }
            value[s] = best;
            actions[t * s_n + s] = best_a;
        }
        value_next = value;
    }
    let mut total = dot(mdp.initial_dist(), &value_next);
    if mdp.count_initial_state() {
        total += dot(mdp.initial_dist(), reward);
    }
    let value = total / mdp.counted_per_trial() as f64;

    let mut probs = vec![0.0; t_n * s_n * a_n];
    for (i, &a) in actions.iter().enumerate() {
        probs[i * a_n + a] = 1.0;
    }
    let policy = TimeVaryingPolicy::from_flat_unchecked(t_n, s_n, a_n, probs);
    let occupancy = OccupancyMeasure::from_policy(mdp, &Policy::TimeVarying(policy.clone()))?;
    let d = occupancy_to_d(mdp, &occupancy);
    debug_assert!((dot(reward, &d) - value).abs() <= 1e-9 * (1.0 + value.abs()));
    Ok(LinearSolution { occupancy, policy, value, d })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRule {
    /// Golden-section search on `[0, 1]`.
    LineSearch,
    /// `2 / (k + 2)`.
    OpenLoop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FwOptions {
    pub max_iters: usize,
    pub gap_tol: f64,
    pub step: StepRule,
}

impl Default for FwOptions {
    fn default() -> Self {
        Self { max_iters: 2000, gap_tol: 1e-5, step: StepRule::LineSearch }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FwReport {
    /// Number of linear-oracle calls after the starting vertex.
    pub iterations: usize,
    /// Frank-Wolfe gap at the returned iterate (objective units, sense-adjusted).
    pub final_gap: f64,
    /// `F(d)` before each step, in objective units.
    pub objective_trace: Vec<f64>,
    pub final_d: Vec<f64>,
    pub final_value: f64,
    pub converged: bool,
}

/// Frank-Wolfe over time-indexed occupancy measures for `F(d)` in its natural sense.
pub fn solve_frank_wolfe(mdp: &Mdp, obj: &ConvexObjective, opts: &FwOptions) -> Result<(OccupancyMeasure, FwReport)> {
    obj.check_dimension(mdp.num_states())?;
    let sign = obj.sense().sign();
    let n = mdp.num_states();
    let score = |d: &[f64]| sign * obj.value(d);
    let ascent = |d: &[f64], k: usize| -> Result<Vec<f64>> {
        let g = obj.gradient_unchecked(d)?;
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("gradient at iterate {k}")));
        }
        Ok(g.into_iter().map(|x| sign * x).collect())
    };

    // Starting vertex: the best of the oracle answers for the gradient at the
    // uniform point and, for objectives with a linear part, for that part.
    let uniform = vec![1.0 / n as f64; n];
    let mut start = linear_oracle(mdp, &ascent(&uniform, 0)?)?;
    let linear_part = match obj.kind() {
        ObjectiveKind::Linear { reward } | ObjectiveKind::LinearWithConstraint { reward, .. } => Some(reward),
        _ => None,
    };
    if let Some(r) = linear_part {
        let dir: Vec<f64> = r.iter().map(|x| sign * x).collect();
        let cand = linear_oracle(mdp, &dir)?;
        if score(&cand.d) > score(&start.d) {
            start = cand;
        }
    }
    let mut omega = start.occupancy.omega.clone();
    let mut d = start.d.clone();

    let mut trace = Vec::new();
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    for k in 0..opts.max_iters {
        let g = ascent(&d, k)?;
        let vertex = linear_oracle(mdp, &g)?;
        iterations = k + 1;
        gap = dot(&g, &vertex.d) - dot(&g, &d);
        trace.push(obj.value(&d));
        if gap <= opts.gap_tol {
            converged = true;
            break;
        }
        let gamma = match opts.step {
            StepRule::LineSearch => {
                let phi = |gm: f64| {
                    let p: Vec<f64> = d.iter().zip(&vertex.d).map(|(x, v)| (1.0 - gm) * x + gm * v).collect();
                    score(&p)
                };
                let gm = golden_section_max(&phi, 0.0, 1.0, 1e-12);
                if phi(gm).is_finite() && phi(gm) >= phi(0.0) {
                    gm
                } else {
                    2.0 / (k as f64 + 2.0)
                }
            }
            StepRule::OpenLoop => 2.0 / (k as f64 + 2.0),
        };
        if gamma <= 0.0 {
            // Line search cannot improve along this direction.
            break;
        }
        for (x, v) in omega.iter_mut().zip(&vertex.occupancy.omega) {
            *x = (1.0 - gamma) * *x + gamma * v;
        }
        for (x, v) in d.iter_mut().zip(&vertex.d) {
            *x = (1.0 - gamma) * *x + gamma * v;
        }
    }
    let occ = OccupancyMeasure { horizon: mdp.horizon(), num_states: n, num_actions: mdp.num_actions(), omega };
    let final_value = obj.value(&d);
    Ok((occ, FwReport { iterations, final_gap: gap, objective_trace: trace, final_d: d, final_value, converged }))
}

/// Maximizer of a unimodal `f` on `[lo, hi]`; endpoints are compared explicitly.
fn golden_section_max(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut e = a + INV_PHI * (b - a);
    let (mut fc, mut fe) = (f(c), f(e));
    while b - a > tol {
        if fc >= fe {
            b = e;
            e = c;
            fe = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + INV_PHI * (b - a);
            fe = f(e);
        }
    }
    let mid = 0.5 * (a + b);
    let mut best = (mid, f(mid));
    for x in [lo, hi] {
        let fx = f(x);
        if fx > best.1 {
            best = (x, fx);
        }
    }
    best.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyMode {
    TimeVarying,
    Stationary,
}

/// Conditional action distributions of an occupancy measure.
pub fn extract_policy(occ: &OccupancyMeasure, mode: PolicyMode) -> Policy {
    let (t_n, s_n, a_n) = (occ.horizon, occ.num_states, occ.num_actions);
    let uniform = 1.0 / a_n as f64;
    match mode {
        PolicyMode::TimeVarying => {
            let mut probs = vec![0.0; t_n * s_n * a_n];
            for t in 0..t_n {
                for s in 0..s_n {
                    let base = (t * s_n + s) * a_n;
                    let mass: f64 = occ.omega[base..base + a_n].iter().sum();
                    for a in 0..a_n {
                        probs[base + a] = if mass > MASS_EPS { occ.omega[base + a] / mass } else { uniform };
                    }
                }
            }
            Policy::TimeVarying(TimeVaryingPolicy::from_flat_unchecked(t_n, s_n, a_n, probs))
        }
        PolicyMode::Stationary => {
            let mut rows = vec![vec![0.0; a_n]; s_n];
            for t in 0..t_n {
                for (s, row) in rows.iter_mut().enumerate() {
                    for (a, x) in row.iter_mut().enumerate() {
                        *x += occ.get(t, s, a);
                    }
                }
            }
            for row in &mut rows {
                let mass: f64 = row.iter().sum();
                for x in row.iter_mut() {
                    *x = if mass > MASS_EPS { *x / mass } else { uniform };
                }
                // renormalize to absorb division round-off
                let total: f64 = row.iter().sum();
                row.iter_mut().for_each(|x| *x /= total);
            }
            Policy::Stationary(StationaryPolicy::new(&rows).expect("rows are normalized"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::state_distribution;

    fn controllable() -> Mdp {
        // action a moves to state a
        Mdp::new(2, 2, 4, vec![1.0, 0.0], &[
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        ])
        .unwrap()
    }

    #[test]
    fn single_state_occupancy() {
        let mdp = Mdp::new(1, 1, 3, vec![1.0], &[vec![vec![1.0]]]).unwrap();
        let occ = OccupancyMeasure::from_policy(&mdp, &StationaryPolicy::uniform(1, 1).into()).unwrap();
        assert_eq!(occupancy_to_d(&mdp, &occ), vec![1.0]);
    }

    #[test]
    fn cycle_occupancy() {
        let mdp = Mdp::new(2, 1, 2, vec![1.0, 0.0], &[vec![vec![0.0, 1.0]], vec![vec![1.0, 0.0]]]).unwrap();
        let occ = OccupancyMeasure::from_policy(&mdp, &StationaryPolicy::uniform(2, 1).into()).unwrap();
        assert_eq!(occupancy_to_d(&mdp, &occ), vec![0.5, 0.5]);
        assert!(occ.flow_violation(&mdp) < 1e-15);
    }

    #[test]
    fn zero_reward_picks_action_zero() {
        let mdp = controllable();
        let sol = linear_oracle(&mdp, &[0.0, 0.0]).unwrap();
        for t in 0..4 {
            for s in 0..2 {
                assert_eq!(sol.policy.row(t, s), &[1.0, 0.0]);
            }
        }
        assert_eq!(sol.d, vec![1.0, 0.0]);
    }

    #[test]
    fn oracle_reaches_rewarding_state() {
        let mdp = controllable();
        let sol = linear_oracle(&mdp, &[0.0, 1.0]).unwrap();
        assert_eq!(sol.value, 1.0);
        assert_eq!(sol.d, vec![0.0, 1.0]);
    }

    #[test]
    fn linear_fw_takes_one_iteration() {
        let mdp = controllable();
        let obj = ConvexObjective::linear(vec![0.2, 1.0]).unwrap();
        let (_, rep) = solve_frank_wolfe(&mdp, &obj, &FwOptions::default()).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(rep.final_gap.abs() < 1e-15);
        assert_eq!(rep.final_value, 1.0);
    }

    #[test]
    fn entropy_on_controllable_chain() {
        let mdp = controllable();
        let (occ, rep) = solve_frank_wolfe(&mdp, &ConvexObjective::entropy(), &FwOptions::default()).unwrap();
        assert!(rep.converged, "{rep:?}");
        assert!((rep.final_d[0] - 0.5).abs() < 1e-3);
        assert!((rep.final_value - libm::log(2.0)).abs() < 1e-4);
        assert!(occ.flow_violation(&mdp) < 1e-9);
    }

    #[test]
    fn extraction_fallbacks() {
        let mdp = controllable();
        let sol = linear_oracle(&mdp, &[0.0, 1.0]).unwrap();
        // state 0 never visited after t = 0
        let pol = extract_policy(&sol.occupancy, PolicyMode::TimeVarying);
        assert_eq!(pol.markov_row(0, 0).unwrap(), &[0.0, 1.0]);
        assert_eq!(pol.markov_row(2, 0).unwrap(), &[0.5, 0.5]);
        assert_eq!(pol.markov_row(2, 1).unwrap(), &[0.0, 1.0]);
        let d = state_distribution(&mdp, &pol).unwrap();
        assert_eq!(d, sol.d);
        let stat = extract_policy(&sol.occupancy, PolicyMode::Stationary);
        assert_eq!(stat.markov_row(0, 1).unwrap(), &[0.0, 1.0]);
    }

    #[test]
    fn golden_section_finds_interior_maximum() {
        let x = golden_section_max(&|x: f64| -(x - 0.3) * (x - 0.3), 0.0, 1.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-6);
        let x = golden_section_max(&|x: f64| x, 0.0, 1.0, 1e-12);
        assert_eq!(x, 1.0);
    }
}
