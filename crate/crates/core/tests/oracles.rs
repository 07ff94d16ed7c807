//! Exact solvers and evaluators against brute-force oracles written independently here.

mod common;

use common::*;
use convex_trials_core::finite::CountMdp;
use convex_trials_core::*;

const SEED: u64 = 0x5eed;

#[test]
fn exact_evaluation_matches_trajectory_enumeration() {
    let mut rng = TrialRng::new(SEED, 1);
    for _ in 0..50 {
        let mdp = small_mdp(&mut rng);
        for obj in objectives(&mut rng, mdp.num_states()) {
            let pol = random_markov_policy(&mut rng, &mdp);
            let exact = evaluate_policy_exact(&mdp, &pol, &obj, DEFAULT_STATE_CAP).unwrap();
            let brute: f64 = enumerate_outcomes(&mdp, &pol, DEFAULT_ENUMERATION_CAP)
                .unwrap()
                .iter()
                .map(|(traj, p)| p * obj.value(empirical_distribution(traj, mdp.num_states()).probs()))
                .sum();
            assert_close(exact, brute, 1e-10, "exact vs enumeration");
        }
    }
}

#[test]
fn count_dp_matches_full_history_dp() {
    let mut rng = TrialRng::new(SEED, 2);
    for _ in 0..50 {
        let mdp = small_mdp(&mut rng);
        for obj in objectives(&mut rng, mdp.num_states()) {
            let sol = solve_single_trial(&mdp, &obj, DEFAULT_STATE_CAP).unwrap();
            let oracle = full_history_value(&mdp, &obj);
            assert_close(sol.optimal_value, oracle, 1e-12, "count DP vs history DP");
            let realized = evaluate_policy_exact(&mdp, &sol.policy.clone().into(), &obj, DEFAULT_STATE_CAP).unwrap();
            assert_close(realized, sol.optimal_value, 1e-10, "policy attains the DP value");
        }
    }
}

#[test]
fn count_dp_terminal_identity_for_fixed_policies() {
    let mut rng = TrialRng::new(SEED, 3);
    for _ in 0..50 {
        let mdp = small_mdp(&mut rng);
        let obj = objectives(&mut rng, mdp.num_states()).swap_remove(rng.index(6));
        let cm = build_count_mdp(&mdp, &obj, DEFAULT_STATE_CAP).unwrap();
        for _ in 0..20 {
            let pol = random_markov_policy(&mut rng, &mdp);
            let probs = cm.propagate(&mdp, &pol).unwrap();
            let dp: f64 = probs.iter().zip(cm.terminal_values()).map(|(p, v)| p * v).sum();
            let brute: f64 = enumerate_outcomes(&mdp, &pol, DEFAULT_ENUMERATION_CAP)
                .unwrap()
                .iter()
                .map(|(traj, p)| p * obj.value(empirical_distribution(traj, mdp.num_states()).probs()))
                .sum();
            assert_close(dp, brute, 1e-10, "terminal-reward identity");
        }
    }
}

#[test]
fn enumeration_is_a_distribution_and_matches_marginals() {
    let mut rng = TrialRng::new(SEED, 4);
    for _ in 0..50 {
        let mdp = small_mdp(&mut rng);
        let pol = random_markov_policy(&mut rng, &mdp);
        let outcomes = enumerate_outcomes(&mdp, &pol, DEFAULT_ENUMERATION_CAP).unwrap();
        assert!(outcomes.iter().all(|(_, p)| *p >= 0.0));
        assert_close(outcomes.iter().map(|(_, p)| p).sum(), 1.0, 1e-10, "total probability");
        let mut mean = vec![0.0; mdp.num_states()];
        for (traj, p) in &outcomes {
            for (m, x) in mean.iter_mut().zip(empirical_distribution(traj, mdp.num_states()).probs()) {
                *m += p * x;
            }
        }
        let d = state_distribution(&mdp, &pol).unwrap();
        for (x, y) in mean.iter().zip(&d) {
            assert_close(*x, *y, 1e-10, "expected empirical distribution");
        }
    }
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

#[test]
fn layer_sizes_follow_stars_and_bars() {
    // dense 3-state MDP: every (counts, state) with state among the counted support is reachable
    let mut rng = TrialRng::new(SEED, 5);
    let p: Vec<Vec<Vec<f64>>> = (0..3).map(|_| (0..2).map(|_| random_simplex(&mut rng, 3, false)).collect()).collect();
    let mdp = Mdp::new(3, 2, 6, vec![1.0 / 3.0; 3], &p).unwrap();
    let cm = CountMdp::skeleton(&mdp, DEFAULT_STATE_CAP).unwrap();
    let sizes = cm.layer_sizes();
    assert_eq!(sizes[0], 3);
    for (t, &size) in sizes.iter().enumerate().skip(1) {
        // compositions of t into 3 parts, times the states with a positive count
        let expected: usize = (1..=3).map(|k| binomial(3, k) * binomial(t - 1, k - 1) * k).sum();
        assert_eq!(size, expected, "layer {t}");
    }
    // cross-check by deduplicating explicit histories
    let mut keys = std::collections::BTreeSet::new();
    fn walk(hist: &mut Vec<usize>, t_max: usize, keys: &mut std::collections::BTreeSet<(usize, Vec<u32>, usize)>) {
        let t = hist.len() - 1;
        let mut c = vec![0u32; 3];
        hist[1..].iter().for_each(|&s| c[s] += 1);
        keys.insert((t, c, *hist.last().unwrap()));
        if t == t_max {
            return;
        }
        for s in 0..3 {
            hist.push(s);
            walk(hist, t_max, keys);
            hist.pop();
        }
    }
    for s0 in 0..3 {
        walk(&mut vec![s0], 6, &mut keys);
    }
    for (t, &size) in sizes.iter().enumerate() {
        assert_eq!(keys.iter().filter(|k| k.0 == t).count(), size);
    }
}

#[test]
fn linear_oracle_matches_exhaustive_deterministic_policies() {
    let mut rng = TrialRng::new(SEED, 6);
    for _ in 0..30 {
        let s = 1 + rng.index(2);
        let t = 1 + rng.index(3);
        let mdp = random_mdp(&mut rng, s + 1, 2, t);
        let reward: Vec<f64> = (0..mdp.num_states()).map(|_| rng.uniform()).collect();
        let sol = linear_oracle(&mdp, &reward).unwrap();
        let best = all_deterministic_time_varying(&mdp)
            .iter()
            .map(|p| dot(&reward, &state_distribution(&mdp, p).unwrap()))
            .fold(f64::NEG_INFINITY, f64::max);
        assert_close(sol.value, best, 1e-10, "linear oracle");
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn linear_and_penalty_objectives_agree_across_trial_regimes() {
    let mut rng = TrialRng::new(SEED, 7);
    for _ in 0..20 {
        let mdp = small_mdp(&mut rng);
        let reward: Vec<f64> = (0..mdp.num_states()).map(|_| rng.uniform()).collect();
        let lin = ConvexObjective::linear(reward.clone()).unwrap();
        let fin = solve_single_trial(&mdp, &lin, DEFAULT_STATE_CAP).unwrap().optimal_value;
        let (_, rep) = solve_frank_wolfe(&mdp, &lin, &FwOptions::default()).unwrap();
        assert_close(fin, rep.final_value, 1e-8, "linear");
        assert_close(fin, linear_oracle(&mdp, &reward).unwrap().value, 1e-10, "linear oracle");

        // a constraint met by every trajectory of the linear optimum keeps the instance feasible
        let cost: Vec<f64> = (0..mdp.num_states()).map(|_| rng.uniform()).collect();
        let opt = linear_oracle(&mdp, &reward).unwrap();
        let worst = enumerate_outcomes(&mdp, &opt.policy.clone().into(), DEFAULT_ENUMERATION_CAP)
            .unwrap()
            .iter()
            .filter(|(_, p)| *p > 0.0)
            .map(|(traj, _)| dot(&cost, empirical_distribution(traj, mdp.num_states()).probs()))
            .fold(f64::NEG_INFINITY, f64::max);
        let con = ConvexObjective::linear_constrained(reward, cost, worst + 1e-9, None).unwrap();
        let fin = solve_single_trial(&mdp, &con, DEFAULT_STATE_CAP).unwrap().optimal_value;
        let (_, rep) = solve_frank_wolfe(&mdp, &con, &FwOptions::default()).unwrap();
        assert_close(fin, rep.final_value, 1e-8, "constrained");
    }
}

#[test]
fn single_trial_optimum_dominates_random_and_infinite_policies() {
    let mut rng = TrialRng::new(SEED, 8);
    for _ in 0..20 {
        let mdp = small_mdp(&mut rng);
        for obj in objectives(&mut rng, mdp.num_states()) {
            let sol = solve_single_trial(&mdp, &obj, DEFAULT_STATE_CAP).unwrap();
            let sign = obj.sense().sign();
            let (occ, _) = solve_frank_wolfe(&mdp, &obj, &FwOptions::default()).unwrap();
            let mut candidates = vec![
                extract_policy(&occ, PolicyMode::Stationary),
                extract_policy(&occ, PolicyMode::TimeVarying),
            ];
            candidates.extend((0..10).map(|_| random_markov_policy(&mut rng, &mdp)));
            for p in &candidates {
                let v = evaluate_policy_exact(&mdp, p, &obj, DEFAULT_STATE_CAP).unwrap();
                assert!(sign * (sol.optimal_value - v) >= -1e-10, "{obj:?}: {} vs {v}", sol.optimal_value);
            }
        }
    }
}

#[test]
fn jensen_direction_for_markov_policies() {
    let mut rng = TrialRng::new(SEED, 9);
    for _ in 0..50 {
        let mdp = small_mdp(&mut rng);
        let pol = random_markov_policy(&mut rng, &mdp);
        let d = state_distribution(&mdp, &pol).unwrap();
        for obj in objectives(&mut rng, mdp.num_states()) {
            let z1 = evaluate_policy_exact(&mdp, &pol, &obj, DEFAULT_STATE_CAP).unwrap();
            let zinf = obj.value(&d);
            if obj.is_convex() {
                assert!(zinf <= z1 + 1e-10, "convex {obj:?}: {zinf} > {z1}");
            }
            if obj.is_concave() {
                assert!(z1 <= zinf + 1e-10, "concave {obj:?}: {z1} > {zinf}");
            }
        }
    }
}

#[test]
fn cvar_solution_dominates_deterministic_markov_policies() {
    let mut rng = TrialRng::new(SEED, 10);
    for _ in 0..15 {
        let s = 2 + rng.index(2);
        let t = 2 + rng.index(3);
        let mdp = random_mdp(&mut rng, s, 2, t);
        let reward: Vec<f64> = (0..s).map(|_| rng.uniform()).collect();
        let alpha = 0.1 + 0.8 * rng.uniform();
        let risk = RiskFunctional::cvar(alpha, reward).unwrap();
        let sol = solve_single_trial_cvar(&mdp, &risk, DEFAULT_STATE_CAP).unwrap();
        let achieved = evaluate_risk_exact(&mdp, &sol.policy.clone().into(), &risk, DEFAULT_STATE_CAP).unwrap();
        assert_close(achieved, sol.optimal_value, 1e-10, "reported CVaR is the policy's CVaR");
        let mut pols = all_deterministic_stationary(&mdp);
        if mdp.num_states().pow(mdp.horizon() as u32) <= 4096 {
            pols.extend(all_deterministic_time_varying(&mdp));
        }
        for p in &pols {
            let v = evaluate_risk_exact(&mdp, p, &risk, DEFAULT_STATE_CAP).unwrap();
            assert!(sol.optimal_value >= v - 1e-10, "{} < {v}", sol.optimal_value);
        }
    }
}

#[test]
fn cvar_near_one_is_risk_neutral() {
    let mut rng = TrialRng::new(SEED, 11);
    for _ in 0..10 {
        let mdp = random_mdp(&mut rng, 3, 2, 3);
        let reward: Vec<f64> = (0..3).map(|_| rng.uniform()).collect();
        let risk = RiskFunctional::cvar(0.999, reward.clone()).unwrap();
        let sol = solve_single_trial_cvar(&mdp, &risk, DEFAULT_STATE_CAP).unwrap();
        let lin = ConvexObjective::linear(reward).unwrap();
        let mean = evaluate_policy_exact(&mdp, &sol.policy.clone().into(), &lin, DEFAULT_STATE_CAP).unwrap();
        let best = solve_single_trial(&mdp, &lin, DEFAULT_STATE_CAP).unwrap().optimal_value;
        // the tail excludes at most 0.1% of the mass
        assert!(mean >= best - 2e-3, "{mean} vs {best}");
    }
}

#[test]
fn extracted_time_varying_policy_reproduces_occupancy() {
    let mut rng = TrialRng::new(SEED, 12);
    for _ in 0..30 {
        let mdp = small_mdp(&mut rng);
        let obj = ConvexObjective::entropy();
        let (occ, rep) = solve_frank_wolfe(&mdp, &obj, &FwOptions::default()).unwrap();
        assert!(occ.flow_violation(&mdp) <= 1e-9);
        let pol = extract_policy(&occ, PolicyMode::TimeVarying);
        let d = state_distribution(&mdp, &pol).unwrap();
        for (x, y) in d.iter().zip(&occupancy_to_d(&mdp, &occ)) {
            assert_close(*x, *y, 1e-9, "round trip");
        }
        for w in rep.objective_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "trace decreased");
        }
    }
}

#[test]
fn pure_exploration_counts_are_uniform() {
    let p = vec![
        vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]],
        vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]],
        vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
    ];
    let mdp = Mdp::new(3, 2, 6, vec![1.0, 0.0, 0.0], &p).unwrap();
    let sol = solve_single_trial(&mdp, &ConvexObjective::entropy(), DEFAULT_STATE_CAP).unwrap();
    assert_close(sol.optimal_value, 3f64.ln(), 1e-12, "log 3");
    let outcomes = enumerate_outcomes(&mdp, &sol.policy.into(), DEFAULT_ENUMERATION_CAP).unwrap();
    for (traj, p) in outcomes {
        if p > 0.0 {
            assert_eq!(traj.counts(3), vec![2, 2, 2]);
        }
    }
}
