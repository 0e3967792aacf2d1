//! Pooled estimators for the three meta-analysis models.
//!
//! | model              | weights                         | target          |
//! |--------------------|---------------------------------|-----------------|
//! | common             | 1/σᵢ²                           | common effect θ |
//! | random             | 1/(σᵢ² + τ̂²)                    | mean effect μ   |
//! | fixed-unweighted   | 1/k                             | φᵤ = mean θᵢ    |
//! | fixed-weighted     | 1/σᵢ²                           | φ_w             |
//! | fixed-optimal      | MSE-optimal (see [`crate::weights`]) | φᵤ         |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{MetaError, Result};
use crate::model::{cochran_q, weighted_mean, Dataset, Model, PooledResult};
use crate::weights::{self, WeightProblem, WeightSolution};

/// Between-study variance estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tau2Method {
    #[default]
    DersimonianLaird,
    PauleMandel,
}

impl Tau2Method {
    pub fn short(self) -> &'static str {
        match self {
            Tau2Method::DersimonianLaird => "DL",
            Tau2Method::PauleMandel => "PM",
        }
    }
}

impl fmt::Display for Tau2Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tau2Method::DersimonianLaird => "dersimonian_laird",
            Tau2Method::PauleMandel => "paule_mandel",
        })
    }
}

impl FromStr for Tau2Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dl" | "dersimonian_laird" | "dersimonian-laird" => Ok(Tau2Method::DersimonianLaird),
            "pm" | "paule_mandel" | "paule-mandel" => Ok(Tau2Method::PauleMandel),
            other => Err(format!("unknown tau2 method `{other}` (expected dl or pm)")),
        }
    }
}

const PM_TOLERANCE: f64 = 1e-10;
const PM_MAX_ITER: usize = 200;

/// Inverse-variance pooled estimate of the common effect.
pub fn common_effect(dataset: &Dataset, level: f64) -> Result<PooledResult> {
    inverse_variance(dataset, Model::Common, level)
}

/// Inverse-variance estimate of the weighted average effect. Numerically
/// the same as [`common_effect`]; only the model tag differs.
pub fn fixed_weighted(dataset: &Dataset, level: f64) -> Result<PooledResult> {
    inverse_variance(dataset, Model::FixedWeighted, level)
}

fn inverse_variance(dataset: &Dataset, model: Model, level: f64) -> Result<PooledResult> {
    dataset.require_pooling()?;
    let ws: Vec<f64> = dataset.studies.iter().map(|s| 1.0 / s.var).collect();
    let variance = 1.0 / ws.iter().sum::<f64>();
    PooledResult::from_weights(model, &ws, &dataset.effects(), variance, level)
}

/// Between-study variance τ̂² ≥ 0.
pub fn tau2(dataset: &Dataset, method: Tau2Method) -> Result<f64> {
    dataset.require_pooling()?;
    let ys = dataset.effects();
    let vars = dataset.variances();
    Ok(match method {
        Tau2Method::DersimonianLaird => dersimonian_laird(&ys, &vars),
        Tau2Method::PauleMandel => paule_mandel(&ys, &vars),
    })
}

fn dersimonian_laird(ys: &[f64], vars: &[f64]) -> f64 {
    let ws: Vec<f64> = vars.iter().map(|v| 1.0 / v).collect();
    let q = cochran_q(ys, &ws);
    let df = (ys.len() - 1) as f64;
    let sw: f64 = ws.iter().sum();
    let sw2: f64 = ws.iter().map(|w| w * w).sum();
    ((q - df) / (sw - sw2 / sw)).max(0.0)
}

/// Generalized Q statistic at a given τ².
pub fn generalized_q(ys: &[f64], vars: &[f64], tau2: f64) -> f64 {
    let ws: Vec<f64> = vars.iter().map(|v| 1.0 / (v + tau2)).collect();
    cochran_q(ys, &ws)
}

/// Root of Q(τ²) = k − 1 by bisection. Q is decreasing in τ², and at
/// τ² = k·max(yᵢ − ȳ)² it is at most 1, so the bracket always holds.
fn paule_mandel(ys: &[f64], vars: &[f64]) -> f64 {
    let target = (ys.len() - 1) as f64;
    if generalized_q(ys, vars, 0.0) <= target {
        return 0.0;
    }
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let max_dev2 = ys
        .iter()
        .fold(0.0f64, |m, y| m.max((y - mean) * (y - mean)));
    let (mut lo, mut hi) = (0.0, max_dev2 * ys.len() as f64);
    for _ in 0..PM_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if generalized_q(ys, vars, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= PM_TOLERANCE * (1.0 + lo) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Random-effects estimate of the mean effect with τ² estimated by `method`.
pub fn random_effects(dataset: &Dataset, method: Tau2Method, level: f64) -> Result<PooledResult> {
    let t2 = tau2(dataset, method)?;
    let mut res = random_effects_with_tau2(dataset, t2, level)?;
    res.tau2_method = Some(method);
    Ok(res)
}

/// Random-effects estimate for a given between-study variance.
pub fn random_effects_with_tau2(dataset: &Dataset, tau2: f64, level: f64) -> Result<PooledResult> {
    dataset.require_pooling()?;
    let ws: Vec<f64> = dataset
        .studies
        .iter()
        .map(|s| 1.0 / (s.var + tau2))
        .collect();
    let variance = 1.0 / ws.iter().sum::<f64>();
    let mut res =
        PooledResult::from_weights(Model::Random, &ws, &dataset.effects(), variance, level)?;
    res.tau2 = Some(tau2);
    Ok(res)
}

/// Plain mean of the observed effects (Laird–Mosteller).
pub fn fixed_unweighted(dataset: &Dataset, level: f64) -> Result<PooledResult> {
    dataset.require_pooling()?;
    let k = dataset.k() as f64;
    let variance = dataset.studies.iter().map(|s| s.var).sum::<f64>() / (k * k);
    let ws = vec![1.0; dataset.k()];
    PooledResult::from_weights(
        Model::FixedUnweighted,
        &ws,
        &dataset.effects(),
        variance,
        level,
    )
}

/// Weight problem for data analysis: the unknown θᵢ are replaced by the
/// observed yᵢ (and φᵤ by their mean).
pub fn plug_in_problem(dataset: &Dataset) -> Result<WeightProblem> {
    dataset.require_pooling()?;
    WeightProblem::new(dataset.effects(), dataset.variances())
}

/// MSE-optimal weights for the plug-in problem.
pub fn fixed_optimal_solution(dataset: &Dataset) -> Result<WeightSolution> {
    weights::optimal_weights(&plug_in_problem(dataset)?)
}

/// MSE-optimal estimate of the unweighted average effect.
pub fn fixed_optimal(dataset: &Dataset, level: f64) -> Result<PooledResult> {
    let sol = fixed_optimal_solution(dataset)?;
    fixed_optimal_from(dataset, &sol, level)
}

/// Pools `dataset` with an already computed weight solution.
pub fn fixed_optimal_from(
    dataset: &Dataset,
    solution: &WeightSolution,
    level: f64,
) -> Result<PooledResult> {
    let total: f64 = solution.w.iter().sum();
    let variance = solution
        .w
        .iter()
        .zip(&dataset.studies)
        .map(|(w, s)| w * w * s.var)
        .sum::<f64>()
        / (total * total);
    PooledResult::from_weights(
        Model::FixedOptimal,
        &solution.w,
        &dataset.effects(),
        variance,
        level,
    )
}

/// Runs a single model.
pub fn pool(
    dataset: &Dataset,
    model: Model,
    method: Tau2Method,
    level: f64,
) -> Result<PooledResult> {
    match model {
        Model::Common => common_effect(dataset, level),
        Model::Random => random_effects(dataset, method, level),
        Model::FixedUnweighted => fixed_unweighted(dataset, level),
        Model::FixedWeighted => fixed_weighted(dataset, level),
        Model::FixedOptimal => fixed_optimal(dataset, level),
    }
}

/// The optimal estimate written as α·φ̂_w + (1 − α)·φ̂ᵤ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaDecomposition {
    /// Σσᵢ⁻² / Σwᵢ with unnormalized closed-form weights.
    pub alpha: f64,
    pub phi_w: f64,
    pub phi_u: f64,
    pub phi_optimal: f64,
    /// |φ̃ᵤ − (α·φ̂_w + (1 − α)·φ̂ᵤ)|.
    pub residual: f64,
}

pub fn alpha_decomposition(dataset: &Dataset) -> Result<AlphaDecomposition> {
    let problem = plug_in_problem(dataset)?;
    if !weights::assumption_holds(&problem) {
        return Err(MetaError::NonInteriorSolution);
    }
    let raw: Vec<f64> = problem
        .assumption_margins()
        .iter()
        .zip(problem.sigma2())
        .map(|(m, s)| m / s)
        .collect();
    let inv_total: f64 = problem.sigma2().iter().map(|s| 1.0 / s).sum();
    let alpha = inv_total / raw.iter().sum::<f64>();
    let ys = dataset.effects();
    let phi_w = weighted_mean(
        &problem.sigma2().iter().map(|s| 1.0 / s).collect::<Vec<_>>(),
        &ys,
    );
    let phi_u = ys.iter().sum::<f64>() / ys.len() as f64;
    let phi_optimal = weighted_mean(&raw, &ys);
    let residual = (phi_optimal - (alpha * phi_w + (1.0 - alpha) * phi_u)).abs();
    Ok(AlphaDecomposition {
        alpha,
        phi_w,
        phi_u,
        phi_optimal,
        residual,
    })
}
