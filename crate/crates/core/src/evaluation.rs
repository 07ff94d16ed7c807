//! Monte-Carlo estimates of finite-trials objectives, approximation error
//! between the finite- and infinite-trials optima, and the concentration bound.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::finite::evaluate_policy_exact;
use crate::math::pairwise_sum;
use crate::mdp::Mdp;
use crate::objective::{ConvexObjective, Returns, RiskFunctional};
use crate::policy::Policy;
use crate::rng::TrialRng;
use crate::trajectory::sample_counts;

/// Normal quantile for a two-sided 95% interval.
pub const Z_95: f64 = 1.959_963_984_540_054;
pub const BOOTSTRAP_RESAMPLES: usize = 1000;
/// Values closer than this share an exact-value histogram bin.
pub const HISTOGRAM_TIE_TOL: f64 = 1e-12;
pub const MAX_EXACT_BINS: usize = 64;
pub const FALLBACK_BINS: usize = 32;

/// Reserved stream for bootstrap resampling; trial streams never reach it.
const BOOTSTRAP_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    /// Half-width of the 95% confidence interval.
    pub ci_half_width: f64,
    pub runs: usize,
    pub histogram: Vec<HistogramBin>,
    /// One value per run (per-run returns for single-trial risk estimates).
    pub raw_values: Vec<f64>,
}

impl McEstimate {
    /// Mean with a normal-approximation interval.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("run values"));
        }
        let n = values.len() as f64;
        // shifted by the first value so constant samples give an exact mean
        let x0 = values[0];
        let shifted: Vec<f64> = values.iter().map(|x| x - x0).collect();
        let mean = x0 + pairwise_sum(&shifted) / n;
        let ci_half_width = if values.len() > 1 {
            let sq: Vec<f64> = values.iter().map(|x| (x - mean) * (x - mean)).collect();
            let var = pairwise_sum(&sq) / (n - 1.0);
            Z_95 * libm::sqrt(var / n)
        } else {
            0.0
        };
        Ok(Self { mean, ci_half_width, runs: values.len(), histogram: histogram(&values), raw_values: values })
    }
}

/// Exact-value bins when there are at most 64 distinct values, otherwise 32 equal-width bins.
pub fn histogram(values: &[f64]) -> Vec<HistogramBin> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut groups: Vec<HistogramBin> = Vec::new();
    for &x in &sorted {
        match groups.last_mut() {
            Some(g) if x - g.lower <= HISTOGRAM_TIE_TOL => {
                g.upper = x;
                g.count += 1;
            }
            _ => {
                if groups.len() == MAX_EXACT_BINS {
                    return equal_width(&sorted);
                }
                groups.push(HistogramBin { lower: x, upper: x, count: 1 });
            }
        }
    }
    groups
}

fn equal_width(sorted: &[f64]) -> Vec<HistogramBin> {
    let lo = sorted[0];
    let hi = sorted[sorted.len() - 1];
    let width = (hi - lo) / FALLBACK_BINS as f64;
    let mut bins: Vec<HistogramBin> = (0..FALLBACK_BINS)
        .map(|k| HistogramBin {
            lower: lo + width * k as f64,
            upper: if k + 1 == FALLBACK_BINS { hi } else { lo + width * (k + 1) as f64 },
            count: 0,
        })
        .collect();
    for &x in sorted {
        let k = (((x - lo) / width) as usize).min(FALLBACK_BINS - 1);
        bins[k].count += 1;
    }
    bins
}

/// `F(d_n)` for run `run`: `n` independent trials aggregated into one empirical distribution.
pub fn run_value(mdp: &Mdp, policy: &Policy, obj: &ConvexObjective, n: usize, seed: u64, run: usize) -> Result<f64> {
    let d = sample_aggregate(mdp, policy, n, seed, run)?;
    Ok(obj.value(&d))
}

fn sample_aggregate(mdp: &Mdp, policy: &Policy, n: usize, seed: u64, run: usize) -> Result<Vec<f64>> {
    let s_n = mdp.num_states();
    let mut total = vec![0u64; s_n];
    let mut counts = vec![0u32; s_n];
    for trial in 0..n {
        let mut rng = TrialRng::for_trial(seed, run, n, trial);
        sample_counts(mdp, policy, &mut rng, &mut counts)?;
        for (t, &c) in total.iter_mut().zip(&counts) {
            *t += u64::from(c);
        }
    }
    let denom = (n * mdp.counted_per_trial()) as f64;
    Ok(total.iter().map(|&c| c as f64 / denom).collect())
}

/// The `n` per-trial returns `r . d_i` of run `run`.
pub fn run_returns(mdp: &Mdp, policy: &Policy, risk: &RiskFunctional, n: usize, seed: u64, run: usize) -> Result<Vec<f64>> {
    let s_n = mdp.num_states();
    let m = mdp.counted_per_trial() as f64;
    let mut counts = vec![0u32; s_n];
    let mut d = vec![0.0; s_n];
    let mut out = Vec::with_capacity(n);
    for trial in 0..n {
        let mut rng = TrialRng::for_trial(seed, run, n, trial);
        sample_counts(mdp, policy, &mut rng, &mut counts)?;
        for (x, &c) in d.iter_mut().zip(&counts) {
            *x = f64::from(c) / m;
        }
        out.push(risk.trial_return(&d));
    }
    Ok(out)
}

fn check_inputs(mdp: &Mdp, policy: &Policy, n: usize, runs: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Invalid("n must be at least 1".into()));
    }
    if runs < 2 {
        return Err(Error::Invalid("at least two runs are needed for an interval".into()));
    }
    policy.check_compatible_shape(mdp)
}

/// Monte-Carlo estimate of `zeta_n(pi) = E[F(d_n)]`.
pub fn estimate_zeta_n(
    mdp: &Mdp,
    policy: &Policy,
    obj: &ConvexObjective,
    n: usize,
    runs: usize,
    seed: u64,
) -> Result<McEstimate> {
    check_inputs(mdp, policy, n, runs)?;
    obj.check_dimension(mdp.num_states())?;
    let values = (0..runs).map(|run| run_value(mdp, policy, obj, n, seed, run)).collect::<Result<Vec<_>>>()?;
    McEstimate::from_values(values)
}

/// Monte-Carlo estimate of a risk functional of per-trial returns.
///
/// For `n = 1` the functional is applied to the pooled returns of all runs;
/// for `n > 1` each run's `n` returns give one value and the runs are averaged.
/// Intervals are bootstrap percentile intervals.
pub fn estimate_risk_n(
    mdp: &Mdp,
    policy: &Policy,
    risk: &RiskFunctional,
    n: usize,
    runs: usize,
    seed: u64,
) -> Result<McEstimate> {
    check_inputs(mdp, policy, n, runs)?;
    if risk.reward().len() != mdp.num_states() {
        return Err(Error::Dimension { what: "risk reward", expected: mdp.num_states(), found: risk.reward().len() });
    }
    let per_run = (0..runs).map(|run| run_returns(mdp, policy, risk, n, seed, run)).collect::<Result<Vec<_>>>()?;
    risk_estimate_from_returns(risk, per_run, seed)
}

/// Assembles a risk estimate from per-run return samples (see [`estimate_risk_n`]).
pub fn risk_estimate_from_returns(risk: &RiskFunctional, per_run: Vec<Vec<f64>>, seed: u64) -> Result<McEstimate> {
    let n = per_run.first().map_or(0, Vec::len);
    if n == 1 {
        let pooled: Vec<f64> = per_run.into_iter().flatten().collect();
        let mean = risk.eval(Returns::Samples(&pooled))?;
        let ci = bootstrap_half_width(&pooled, seed, |xs| risk.eval(Returns::Samples(xs)).unwrap_or(f64::NAN));
        Ok(McEstimate { mean, ci_half_width: ci, runs: pooled.len(), histogram: histogram(&pooled), raw_values: pooled })
    } else {
        let values = per_run.iter().map(|xs| risk.eval(Returns::Samples(xs))).collect::<Result<Vec<_>>>()?;
        let mut est = McEstimate::from_values(values)?;
        let raw = est.raw_values.clone();
        est.ci_half_width = bootstrap_half_width(&raw, seed, |xs| pairwise_sum(xs) / xs.len() as f64);
        Ok(est)
    }
}

/// Half-width of the 95% bootstrap percentile interval of `statistic`.
pub fn bootstrap_half_width(values: &[f64], seed: u64, statistic: impl Fn(&[f64]) -> f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mut rng = TrialRng::new(seed, BOOTSTRAP_STREAM);
    let mut sample = vec![0.0; values.len()];
    let mut stats: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            for x in sample.iter_mut() {
                *x = values[rng.index(values.len())];
            }
            statistic(&sample)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let lo = quantile_sorted(&stats, 0.025);
    let hi = quantile_sorted(&stats, 0.975);
    0.5 * (hi - lo)
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = libm::floor(pos) as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

/// `4 L T sqrt(2 S log(4T / delta) / n)`.
pub fn bound_value(lipschitz: f64, horizon: usize, num_states: usize, n: usize, delta: f64) -> f64 {
    let t = horizon as f64;
    4.0 * lipschitz * t * libm::sqrt(2.0 * num_states as f64 * libm::log(4.0 * t / delta) / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorMethod {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub n: usize,
    /// `|zeta_n(pi_dagger) - zeta_n(pi_star)|`.
    pub err: f64,
    pub bound: f64,
    pub lipschitz_used: f64,
    pub delta: f64,
    pub method: ErrorMethod,
    pub zeta_dagger: f64,
    pub zeta_star: f64,
    /// Summed CI half-widths of the two estimates (zero when exact).
    pub ci_half_width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorOptions {
    pub runs: usize,
    pub seed: u64,
    pub lipschitz: f64,
    pub delta: f64,
    pub state_cap: usize,
}

/// Approximation error of deploying `pi_star` instead of `pi_dagger` over `n` trials.
///
/// Exact for `n = 1`; for `n > 1` both policies are estimated from the same
/// seed family.
pub fn approximation_error(
    mdp: &Mdp,
    obj: &ConvexObjective,
    n: usize,
    pi_dagger: &Policy,
    pi_star: &Policy,
    opts: &ErrorOptions,
) -> Result<ErrorReport> {
    let bound = bound_value(opts.lipschitz, mdp.horizon(), mdp.num_states(), n, opts.delta);
    let (zeta_dagger, zeta_star, ci, method) = if n == 1 {
        let a = evaluate_policy_exact(mdp, pi_dagger, obj, opts.state_cap)?;
        let b = evaluate_policy_exact(mdp, pi_star, obj, opts.state_cap)?;
        (a, b, 0.0, ErrorMethod::Exact)
    } else {
        let a = estimate_zeta_n(mdp, pi_dagger, obj, n, opts.runs, opts.seed)?;
        let b = estimate_zeta_n(mdp, pi_star, obj, n, opts.runs, opts.seed)?;
        (a.mean, b.mean, a.ci_half_width + b.ci_half_width, ErrorMethod::MonteCarlo)
    };
    Ok(ErrorReport {
        n,
        err: (zeta_dagger - zeta_star).abs(),
        bound,
        lipschitz_used: opts.lipschitz,
        delta: opts.delta,
        method,
        zeta_dagger,
        zeta_star,
        ci_half_width: ci,
    })
}

/// Largest difference quotient `|F(x) - F(y)| / ||x - y||_1` over pairs of `points`.
///
/// An instance-restricted ("empirical") Lipschitz constant for objectives that
/// are not globally Lipschitz on the simplex.
pub fn empirical_lipschitz(obj: &ConvexObjective, points: &[Vec<f64>]) -> f64 {
    let vals: Vec<f64> = points.iter().map(|p| obj.value(p)).collect();
    let mut best = 0.0f64;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let dist: f64 = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b).abs()).sum();
            if dist > 0.0 {
                best = best.max((vals[i] - vals[j]).abs() / dist);
            }
        }
    }
    best
}
