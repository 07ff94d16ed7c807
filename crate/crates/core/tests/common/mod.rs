#![allow(dead_code)]

use convex_trials_core::{ConvexObjective, Mdp, Policy, StationaryPolicy, TimeVaryingPolicy, TrialRng};

/// Random probability vector; with `sparse` some entries are zeroed.
pub fn random_simplex(rng: &mut TrialRng, n: usize, sparse: bool) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..n)
            .map(|_| {
                let u = rng.uniform();
                if sparse && rng.uniform() < 0.3 {
                    0.0
                } else {
                    -u.max(1e-300).ln()
                }
            })
            .collect();
        let total: f64 = v.iter().sum();
        if total > 0.0 {
            v.iter_mut().for_each(|x| *x /= total);
            return v;
        }
    }
}

pub fn random_mdp(rng: &mut TrialRng, s: usize, a: usize, t: usize) -> Mdp {
    let sparse = rng.uniform() < 0.5;
    let mu = random_simplex(rng, s, sparse);
    let p: Vec<Vec<Vec<f64>>> =
        (0..s).map(|_| (0..a).map(|_| random_simplex(rng, s, sparse)).collect()).collect();
    Mdp::new(s, a, t, mu, &p).expect("valid random mdp")
}

/// Random MDP with `S <= 3`, `A <= 2`, `T <= 5`.
pub fn small_mdp(rng: &mut TrialRng) -> Mdp {
    let s = 1 + rng.index(3);
    let a = 1 + rng.index(2);
    let t = 1 + rng.index(5);
    let mdp = random_mdp(rng, s, a, t);
    let counted = rng.uniform() < 0.25;
    mdp.with_count_initial_state(counted)
}

pub fn random_stationary(rng: &mut TrialRng, s: usize, a: usize) -> StationaryPolicy {
    let rows: Vec<Vec<f64>> = (0..s).map(|_| random_simplex(rng, a, true)).collect();
    StationaryPolicy::new(&rows).unwrap()
}

pub fn random_time_varying(rng: &mut TrialRng, t: usize, s: usize, a: usize) -> TimeVaryingPolicy {
    let steps: Vec<Vec<Vec<f64>>> =
        (0..t).map(|_| (0..s).map(|_| random_simplex(rng, a, true)).collect()).collect();
    TimeVaryingPolicy::new(&steps).unwrap()
}

pub fn random_markov_policy(rng: &mut TrialRng, mdp: &Mdp) -> Policy {
    if rng.uniform() < 0.5 {
        random_stationary(rng, mdp.num_states(), mdp.num_actions()).into()
    } else {
        random_time_varying(rng, mdp.horizon(), mdp.num_states(), mdp.num_actions()).into()
    }
}

/// Objectives with dimension `s`, covering every kind.
pub fn objectives(rng: &mut TrialRng, s: usize) -> Vec<ConvexObjective> {
    let target = random_simplex(rng, s, false);
    let reward: Vec<f64> = (0..s).map(|_| rng.uniform() * 2.0 - 0.5).collect();
    let cost: Vec<f64> = (0..s).map(|_| rng.uniform()).collect();
    vec![
        ConvexObjective::entropy(),
        ConvexObjective::kl_to_target(target.clone()).unwrap(),
        ConvexObjective::lp_distance(2.0, target.clone()).unwrap(),
        ConvexObjective::lp_distance(1.0, target).unwrap(),
        ConvexObjective::linear(reward.clone()).unwrap(),
        ConvexObjective::linear_constrained(reward, cost, 0.5, None).unwrap(),
    ]
}

/// Optimal single-trial value by backward induction over explicit histories.
pub fn full_history_value(mdp: &Mdp, obj: &ConvexObjective) -> f64 {
    let maximize = obj.sense() == convex_trials_core::Sense::Maximize;
    let mut total = 0.0;
    for (s0, &p) in mdp.initial_dist().iter().enumerate() {
        if p > 0.0 {
            let mut hist = vec![s0];
            total += p * history_value(mdp, obj, &mut hist, maximize);
        }
    }
    total
}

fn history_value(mdp: &Mdp, obj: &ConvexObjective, hist: &mut Vec<usize>, maximize: bool) -> f64 {
    let s_n = mdp.num_states();
    if hist.len() == mdp.horizon() + 1 {
        let skip = usize::from(!mdp.count_initial_state());
        let counted = &hist[skip..];
        let mut d = vec![0.0; s_n];
        for &s in counted {
            d[s] += 1.0;
        }
        d.iter_mut().for_each(|x| *x /= counted.len() as f64);
        return obj.value(&d);
    }
    let s = *hist.last().unwrap();
    let mut best: Option<f64> = None;
    for a in 0..mdp.num_actions() {
        let mut q = 0.0;
        for (s2, &p) in mdp.next_state_probs(s, a).iter().enumerate() {
            if p > 0.0 {
                hist.push(s2);
                q += p * history_value(mdp, obj, hist, maximize);
                hist.pop();
            }
        }
        best = Some(match best {
            None => q,
            Some(b) if maximize => b.max(q),
            Some(b) => b.min(q),
        });
    }
    best.unwrap()
}

/// All deterministic time-varying policies `a = f(t, s)`.
pub fn all_deterministic_time_varying(mdp: &Mdp) -> Vec<Policy> {
    let (t_n, s_n, a_n) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    let slots = t_n * s_n;
    let total = a_n.pow(slots as u32);
    (0..total)
        .map(|mut code| {
            let acts: Vec<Vec<usize>> = (0..t_n)
                .map(|_| {
                    (0..s_n)
                        .map(|_| {
                            let a = code % a_n;
                            code /= a_n;
                            a
                        })
                        .collect()
                })
                .collect();
            TimeVaryingPolicy::deterministic(&acts, a_n).unwrap().into()
        })
        .collect()
}

/// All deterministic stationary policies.
pub fn all_deterministic_stationary(mdp: &Mdp) -> Vec<Policy> {
    let (s_n, a_n) = (mdp.num_states(), mdp.num_actions());
    (0..a_n.pow(s_n as u32))
        .map(|mut code| {
            let rows: Vec<Vec<f64>> = (0..s_n)
                .map(|_| {
                    let a = code % a_n;
                    code /= a_n;
                    (0..a_n).map(|b| if a == b { 1.0 } else { 0.0 }).collect()
                })
                .collect();
            StationaryPolicy::new(&rows).unwrap().into()
        })
        .collect()
}

pub fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
    assert!((a - b).abs() <= tol, "{what}: {a} vs {b} (diff {:e}, tol {tol:e})", (a - b).abs());
}
