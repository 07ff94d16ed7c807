//! Convex (and concave) functions of the state distribution, and risk
//! functionals over the distribution of per-trial returns.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::dot;
use crate::mdp::INPUT_TOL;

/// Tolerance for an argument to be accepted as a point of the simplex.
pub const SIMPLEX_TOL: f64 = 1e-9;
/// Smallest admissible entry of a KL target.
pub const TARGET_EPS: f64 = 1e-9;
/// Entries are clipped below at this value before taking logs in subgradients.
pub const GRAD_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

impl Sense {
    /// `+1` for maximization, `-1` for minimization.
    pub fn sign(self) -> f64 {
        match self {
            Sense::Maximize => 1.0,
            Sense::Minimize => -1.0,
        }
    }

    /// True when `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Sense::Maximize => a > b,
            Sense::Minimize => a < b,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveKind {
    /// `r . d`
    Linear { reward: Vec<f64> },
    /// `||d - d_E||_p^p`
    LpDistance { p: f64, target: Vec<f64> },
    /// `KL(d || d_E)`
    KlToTarget { target: Vec<f64> },
    /// `H(d) = -d . log d`
    Entropy,
    /// `r . d - w * max(0, lambda . d - c)`
    LinearWithConstraint { reward: Vec<f64>, cost: Vec<f64>, threshold: f64, penalty_weight: f64 },
}

/// A function `F` over the state simplex together with its optimization sense.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexObjective {
    kind: ObjectiveKind,
    sense: Sense,
}

fn check_target(target: &[f64]) -> Result<()> {
    if target.is_empty() {
        return Err(Error::Empty("target distribution"));
    }
    crate::mdp::check_stochastic(target).map_err(|e| Error::Invalid(format!("target: {e}")))
}

fn check_finite(v: &[f64], what: &str) -> Result<()> {
    if v.is_empty() {
        return Err(Error::Invalid(format!("{what} is empty")));
    }
    if let Some(x) = v.iter().find(|x| !x.is_finite()) {
        return Err(Error::Invalid(format!("{what} has non-finite entry {x}")));
    }
    Ok(())
}

impl ConvexObjective {
    pub fn linear(reward: Vec<f64>) -> Result<Self> {
        check_finite(&reward, "reward")?;
        Ok(Self { kind: ObjectiveKind::Linear { reward }, sense: Sense::Maximize })
    }

    pub fn lp_distance(p: f64, target: Vec<f64>) -> Result<Self> {
        if p.is_nan() || p < 1.0 || !p.is_finite() {
            return Err(Error::Invalid(format!("exponent p={p} must be >= 1")));
        }
        check_target(&target)?;
        Ok(Self { kind: ObjectiveKind::LpDistance { p, target }, sense: Sense::Minimize })
    }

    pub fn kl_to_target(target: Vec<f64>) -> Result<Self> {
        check_target(&target)?;
        if let Some((i, x)) = target.iter().enumerate().find(|(_, &x)| x < TARGET_EPS) {
            return Err(Error::Invalid(format!("KL target entry {i} = {x} below {TARGET_EPS}")));
        }
        Ok(Self { kind: ObjectiveKind::KlToTarget { target }, sense: Sense::Minimize })
    }

    pub fn entropy() -> Self {
        Self { kind: ObjectiveKind::Entropy, sense: Sense::Maximize }
    }

    /// Exact-penalty form of `max r . d  s.t.  lambda . d <= c`.
    ///
    /// With `penalty_weight = None` the weight defaults to
    /// `10 * max|r| / min{|lambda_s| : lambda_s != 0}`.
    pub fn linear_constrained(reward: Vec<f64>, cost: Vec<f64>, threshold: f64, penalty_weight: Option<f64>) -> Result<Self> {
        check_finite(&reward, "reward")?;
        check_finite(&cost, "constraint cost")?;
        if reward.len() != cost.len() {
            return Err(Error::Dimension { what: "constraint cost", expected: reward.len(), found: cost.len() });
        }
        if !threshold.is_finite() {
            return Err(Error::Invalid("constraint threshold must be finite".into()));
        }
        let penalty_weight = match penalty_weight {
            Some(w) if w >= 0.0 && w.is_finite() => w,
            Some(w) => return Err(Error::Invalid(format!("penalty weight {w} must be finite and >= 0"))),
            None => default_penalty_weight(&reward, &cost),
        };
        Ok(Self {
            kind: ObjectiveKind::LinearWithConstraint { reward, cost, threshold, penalty_weight },
            sense: Sense::Maximize,
        })
    }

    pub fn with_sense(mut self, sense: Sense) -> Self {
        self.sense = sense;
        self
    }

    pub fn kind(&self) -> &ObjectiveKind {
        &self.kind
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    /// Required dimension, if the objective carries vectors.
    pub fn dimension(&self) -> Option<usize> {
        match &self.kind {
            ObjectiveKind::Linear { reward } | ObjectiveKind::LinearWithConstraint { reward, .. } => Some(reward.len()),
            ObjectiveKind::LpDistance { target, .. } | ObjectiveKind::KlToTarget { target } => Some(target.len()),
            ObjectiveKind::Entropy => None,
        }
    }

    pub fn check_dimension(&self, num_states: usize) -> Result<()> {
        match self.dimension() {
            Some(n) if n != num_states => Err(Error::Dimension { what: "objective", expected: num_states, found: n }),
            _ => Ok(()),
        }
    }

    /// True when `F` is concave (a maximization target by nature).
    pub fn is_concave(&self) -> bool {
        matches!(self.kind, ObjectiveKind::Linear { .. } | ObjectiveKind::Entropy | ObjectiveKind::LinearWithConstraint { .. })
    }

    /// True when `F` is convex.
    pub fn is_convex(&self) -> bool {
        matches!(self.kind, ObjectiveKind::Linear { .. } | ObjectiveKind::LpDistance { .. } | ObjectiveKind::KlToTarget { .. })
    }

    /// `F(d)` for `d` on the simplex.
    pub fn eval(&self, d: &[f64]) -> Result<f64> {
        self.check_dimension(d.len())?;
        check_simplex(d)?;
        Ok(self.value(d))
    }

    /// `F(d)` without the simplex check. Entries `<= 0` contribute nothing to log terms.
    pub fn value(&self, d: &[f64]) -> f64 {
        match &self.kind {
            ObjectiveKind::Linear { reward } => dot(reward, d),
            ObjectiveKind::LpDistance { p, target } => {
                if *p == 2.0 {
                    d.iter().zip(target).map(|(x, y)| (x - y) * (x - y)).sum()
                } else if *p == 1.0 {
                    d.iter().zip(target).map(|(x, y)| (x - y).abs()).sum()
                } else {
                    d.iter().zip(target).map(|(x, y)| libm::pow((x - y).abs(), *p)).sum()
                }
            }
            ObjectiveKind::KlToTarget { target } => d
                .iter()
                .zip(target)
                .filter(|(x, _)| **x > 0.0)
                .map(|(x, y)| x * libm::log(x / y))
                .sum(),
            ObjectiveKind::Entropy => -d.iter().filter(|x| **x > 0.0).map(|x| x * libm::log(*x)).sum::<f64>(),
            ObjectiveKind::LinearWithConstraint { reward, cost, threshold, penalty_weight } => {
                dot(reward, d) - penalty_weight * (dot(cost, d) - threshold).max(0.0)
            }
        }
    }

    /// A (sub)gradient of `F` at `d`.
    pub fn subgradient(&self, d: &[f64]) -> Result<Vec<f64>> {
        self.check_dimension(d.len())?;
        check_simplex(d)?;
        self.gradient_unchecked(d)
    }

    pub(crate) fn gradient_unchecked(&self, d: &[f64]) -> Result<Vec<f64>> {
        let g = match &self.kind {
            ObjectiveKind::Linear { reward } => reward.clone(),
            ObjectiveKind::LpDistance { p, target } => {
                if *p == 2.0 {
                    d.iter().zip(target).map(|(x, y)| 2.0 * (x - y)).collect()
                } else if *p == 1.0 {
                    d.iter()
                        .zip(target)
                        .map(|(x, y)| match (x - y).partial_cmp(&0.0) {
                            Some(core::cmp::Ordering::Greater) => 1.0,
                            Some(core::cmp::Ordering::Less) => -1.0,
                            _ => 0.0,
                        })
                        .collect()
                } else {
                    return Err(Error::UnsupportedExponent(*p));
                }
            }
            ObjectiveKind::KlToTarget { target } => {
                d.iter().zip(target).map(|(x, y)| libm::log(x.max(GRAD_EPS) / y) + 1.0).collect()
            }
            ObjectiveKind::Entropy => d.iter().map(|x| -libm::log(x.max(GRAD_EPS)) - 1.0).collect(),
            ObjectiveKind::LinearWithConstraint { reward, cost, threshold, penalty_weight } => {
                if dot(cost, d) > *threshold {
                    reward.iter().zip(cost).map(|(r, l)| r - penalty_weight * l).collect()
                } else {
                    reward.clone()
                }
            }
        };
        Ok(g)
    }
}

fn default_penalty_weight(reward: &[f64], cost: &[f64]) -> f64 {
    let r_max = reward.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let l_min = cost.iter().map(|l| l.abs()).filter(|&l| l > 0.0).fold(f64::INFINITY, f64::min);
    if l_min.is_finite() && r_max > 0.0 {
        10.0 * r_max / l_min
    } else {
        0.0
    }
}

/// Checks `d` lies on the simplex within [`SIMPLEX_TOL`].
pub fn check_simplex(d: &[f64]) -> Result<()> {
    if let Some((i, x)) = d.iter().enumerate().find(|(_, x)| !x.is_finite() || **x < -SIMPLEX_TOL) {
        return Err(Error::Domain(format!("entry {i} = {x} is not a probability")));
    }
    let sum: f64 = d.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::Domain(format!("entries sum to {sum}, not 1")));
    }
    Ok(())
}

/// `F(d)`.
pub fn eval_objective(obj: &ConvexObjective, d: &[f64]) -> Result<f64> {
    obj.eval(d)
}

/// A subgradient of `F` at `d`.
pub fn subgradient(obj: &ConvexObjective, d: &[f64]) -> Result<Vec<f64>> {
    obj.subgradient(d)
}

/// Functionals of the distribution of the per-trial return `X = r . d`.
#[derive(Debug, Clone, PartialEq)]
pub enum RiskFunctional {
    /// Lower CVaR: the mean of the worst `alpha` probability mass of `X`.
    Cvar { alpha: f64, reward: Vec<f64> },
    /// `E[X] - weight * Var[X]`.
    MeanMinusVariance { reward: Vec<f64>, weight: f64 },
}

/// Input to [`eval_risk`].
#[derive(Debug, Clone, Copy)]
pub enum Returns<'a> {
    /// `(value, probability)` atoms.
    Exact(&'a [(f64, f64)]),
    /// Equally weighted samples.
    Samples(&'a [f64]),
}

impl RiskFunctional {
    pub fn cvar(alpha: f64, reward: Vec<f64>) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Invalid(format!("CVaR level alpha={alpha} must lie in (0, 1)")));
        }
        check_finite(&reward, "reward")?;
        Ok(RiskFunctional::Cvar { alpha, reward })
    }

    pub fn mean_minus_variance(reward: Vec<f64>, weight: f64) -> Result<Self> {
        if weight.is_nan() || weight < 0.0 || !weight.is_finite() {
            return Err(Error::Invalid(format!("variance weight {weight} must be >= 0")));
        }
        check_finite(&reward, "reward")?;
        Ok(RiskFunctional::MeanMinusVariance { reward, weight })
    }

    pub fn reward(&self) -> &[f64] {
        match self {
            RiskFunctional::Cvar { reward, .. } | RiskFunctional::MeanMinusVariance { reward, .. } => reward,
        }
    }

    /// Per-trial return `r . d`.
    pub fn trial_return(&self, d: &[f64]) -> f64 {
        dot(self.reward(), d)
    }

    pub fn eval(&self, returns: Returns<'_>) -> Result<f64> {
        let atoms: Vec<(f64, f64)> = match returns {
            Returns::Exact(a) => {
                if a.is_empty() {
                    return Err(Error::Empty("return distribution"));
                }
                let total: f64 = a.iter().map(|(_, p)| p).sum();
                if (total - 1.0).abs() > 1e-9 || a.iter().any(|(_, p)| *p < -INPUT_TOL) {
                    return Err(Error::Invalid(format!("return probabilities sum to {total}")));
                }
                a.to_vec()
            }
            Returns::Samples(xs) => {
                if xs.is_empty() {
                    return Err(Error::Empty("return samples"));
                }
                let w = 1.0 / xs.len() as f64;
                xs.iter().map(|&x| (x, w)).collect()
            }
        };
        if atoms.iter().any(|(x, _)| !x.is_finite()) {
            return Err(Error::NonFinite("return value".into()));
        }
        Ok(match self {
            RiskFunctional::Cvar { alpha, .. } => lower_cvar(atoms, *alpha),
            RiskFunctional::MeanMinusVariance { weight, .. } => {
                let total: f64 = atoms.iter().map(|(_, p)| p).sum();
                let mean = atoms.iter().map(|(x, p)| x * p).sum::<f64>() / total;
                let var = atoms.iter().map(|(x, p)| (x - mean) * (x - mean) * p).sum::<f64>() / total;
                mean - weight * var
            }
        })
    }
}

/// `inf { x : P(X <= x) >= alpha }`.
pub fn value_at_risk(atoms: &[(f64, f64)], alpha: f64) -> Option<f64> {
    let mut sorted = atoms.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = sorted.iter().map(|(_, p)| p).sum();
    let mut acc = 0.0;
    for (x, p) in &sorted {
        acc += p / total;
        if acc >= alpha - 1e-12 {
            return Some(*x);
        }
    }
    sorted.last().map(|(x, _)| *x)
}

/// Mean of the lowest `alpha` probability mass; atoms at the VaR are split.
fn lower_cvar(mut atoms: Vec<(f64, f64)>, alpha: f64) -> f64 {
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = atoms.iter().map(|(_, p)| p).sum();
    let mut remaining = alpha;
    let mut acc = 0.0;
    for (x, p) in atoms {
        if remaining <= 0.0 {
            break;
        }
        let take = (p / total).min(remaining);
        acc += take * x;
        remaining -= take;
    }
    acc / (alpha - remaining.max(0.0))
}

/// Risk functional of a return distribution given as atoms or samples.
pub fn eval_risk(risk: &RiskFunctional, returns: Returns<'_>) -> Result<f64> {
    risk.eval(returns)
}
