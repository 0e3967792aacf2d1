//! Analytic and Monte Carlo comparison of the unbiased (plain mean) and
//! MSE-optimal estimators of the unweighted average effect.
//!
//! Replicate `r` draws from a ChaCha8 stream keyed by `(seed, r)`, so each
//! replicate's data is independent of how replicates are scheduled. Per
//! replicate results are collected in order and summed with compensation,
//! which makes parallel and serial runs bit-identical.

mod chart;
mod coverage;
mod grid;

pub use chart::{grid_csv, grid_svg};
pub use coverage::{coverage_study, coverage_study_with, CoverageModel};
pub use grid::{grid_values, run_grid, GridAxis, GridRow, PaperGrid};

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MetaError, Result};
use crate::stats::compensated_sum;
use crate::weights::{optimal_weights, WeightProblem};

/// True study effects and standard deviations for a fixed-effects model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub theta: Vec<f64>,
    /// Standard deviations σᵢ (not variances).
    pub sigma: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
}

impl Scenario {
    pub fn new(theta: Vec<f64>, sigma: Vec<f64>, replicates: usize, seed: u64) -> Result<Self> {
        let s = Self {
            theta,
            sigma,
            replicates,
            seed,
        };
        s.check()?;
        Ok(s)
    }

    fn check(&self) -> Result<()> {
        if self.theta.len() != self.sigma.len() {
            return Err(MetaError::InvalidScenario(
                "theta and sigma differ in length".into(),
            ));
        }
        if self.theta.len() < 2 {
            return Err(MetaError::TooFewStudies {
                k: self.theta.len(),
            });
        }
        if self.sigma.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(MetaError::InvalidScenario("sigma must be positive".into()));
        }
        if self.theta.iter().any(|t| !t.is_finite()) {
            return Err(MetaError::InvalidScenario("theta must be finite".into()));
        }
        if self.replicates == 0 {
            return Err(MetaError::InvalidScenario(
                "replicates must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.theta.len()
    }

    pub fn sigma2(&self) -> Vec<f64> {
        self.sigma.iter().map(|s| s * s).collect()
    }

    /// φᵤ, the plain mean of the true effects.
    pub fn phi_u(&self) -> f64 {
        self.theta.iter().sum::<f64>() / self.k() as f64
    }

    /// Weight problem at the true parameters.
    pub fn problem(&self) -> Result<WeightProblem> {
        WeightProblem::new(self.theta.clone(), self.sigma2())
    }

    /// Draws the observed effects of replicate `r`.
    pub fn draw(&self, replicate: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(replicate);
        self.theta
            .iter()
            .zip(&self.sigma)
            .map(|(t, s)| {
                let z: f64 = rng.sample(StandardNormal);
                t + s * z
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// φ̂ᵤ = (1/k) Σ yᵢ.
    Unbiased,
    /// φ̃ᵤ with MSE-optimal weights at the true parameters.
    Optimal,
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::Unbiased => "unbiased",
            Estimator::Optimal => "optimal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Analytic,
    MonteCarlo,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Analytic => "analytic",
            Method::MonteCarlo => "monte_carlo",
        })
    }
}

/// Whether replicates run on the rayon pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Parallel,
    Serial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub estimator: Estimator,
    pub mse: f64,
    pub bias2: f64,
    pub variance: f64,
    pub method: Method,
    /// Monte Carlo standard error of `mse`; zero for analytic reports.
    pub mse_se: f64,
}

/// Normalized weights used by `estimator` at the true parameters.
pub fn estimator_weights(scenario: &Scenario, estimator: Estimator) -> Result<Vec<f64>> {
    scenario.check()?;
    match estimator {
        Estimator::Unbiased => Ok(vec![1.0 / scenario.k() as f64; scenario.k()]),
        Estimator::Optimal => Ok(optimal_weights(&scenario.problem()?)?.w),
    }
}

/// Exact bias², variance and MSE under the fixed-effects model.
pub fn analytic_report(scenario: &Scenario, estimator: Estimator) -> Result<EstimatorReport> {
    let w = estimator_weights(scenario, estimator)?;
    let total: f64 = w.iter().sum();
    let mean: f64 = w
        .iter()
        .zip(&scenario.theta)
        .map(|(w, t)| w * t)
        .sum::<f64>()
        / total;
    let bias = mean - scenario.phi_u();
    let variance = w
        .iter()
        .zip(&scenario.sigma)
        .map(|(w, s)| (w * s) * (w * s))
        .sum::<f64>()
        / (total * total);
    let bias2 = bias * bias;
    Ok(EstimatorReport {
        estimator,
        mse: bias2 + variance,
        bias2,
        variance,
        method: Method::Analytic,
        mse_se: 0.0,
    })
}

pub fn monte_carlo_report(scenario: &Scenario, estimator: Estimator) -> Result<EstimatorReport> {
    monte_carlo_report_with(scenario, estimator, Execution::Parallel)
}

/// Empirical bias², variance (1/n form) and MSE over `scenario.replicates`
/// draws.
pub fn monte_carlo_report_with(
    scenario: &Scenario,
    estimator: Estimator,
    execution: Execution,
) -> Result<EstimatorReport> {
    let w = estimator_weights(scenario, estimator)?;
    let total: f64 = w.iter().sum();
    let estimates = replicate_map(scenario, execution, |y| {
        w.iter().zip(y).map(|(w, y)| w * y).sum::<f64>() / total
    });
    let n = estimates.len() as f64;
    let phi = scenario.phi_u();
    let mean = compensated_sum(estimates.iter().copied()) / n;
    let variance = compensated_sum(estimates.iter().map(|e| (e - mean) * (e - mean))) / n;
    let sq_err: Vec<f64> = estimates.iter().map(|e| (e - phi) * (e - phi)).collect();
    let mse = compensated_sum(sq_err.iter().copied()) / n;
    let mse_se = if estimates.len() > 1 {
        (compensated_sum(sq_err.iter().map(|s| (s - mse) * (s - mse))) / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    let bias = mean - phi;
    Ok(EstimatorReport {
        estimator,
        mse,
        bias2: bias * bias,
        variance,
        method: Method::MonteCarlo,
        mse_se,
    })
}

/// Evaluates `f` on every replicate's draw, in replicate order.
pub(crate) fn replicate_map<T, F>(scenario: &Scenario, execution: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&[f64]) -> T + Sync,
{
    let n = scenario.replicates as u64;
    match execution {
        Execution::Parallel => (0..n)
            .into_par_iter()
            .map(|r| f(&scenario.draw(r)))
            .collect(),
        Execution::Serial => (0..n).map(|r| f(&scenario.draw(r))).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_validation() {
        assert!(Scenario::new(vec![0.0, 1.0], vec![1.0], 10, 1).is_err());
        assert!(Scenario::new(vec![0.0, 1.0], vec![1.0, 0.0], 10, 1).is_err());
        assert!(Scenario::new(vec![0.0, 1.0], vec![1.0, 1.0], 0, 1).is_err());
        assert!(Scenario::new(vec![0.0], vec![1.0], 10, 1).is_err());
    }

    #[test]
    fn analytic_k2_equal_effects() {
        let s = Scenario::new(vec![0.0, 0.0], vec![1.0, 2.0], 1, 0).unwrap();
        let u = analytic_report(&s, Estimator::Unbiased).unwrap();
        let o = analytic_report(&s, Estimator::Optimal).unwrap();
        assert!((u.mse - 1.25).abs() < 1e-15);
        assert_eq!(u.bias2, 0.0);
        // 1 / (1 + 1/4)
        assert!((o.mse - 0.8).abs() < 1e-15);
        assert!(o.bias2 < 1e-30);
    }

    #[test]
    fn equal_sigma_reports_coincide() {
        let s = Scenario::new(vec![-3.0, 1.0, 7.0], vec![1.5; 3], 1, 0).unwrap();
        let u = analytic_report(&s, Estimator::Unbiased).unwrap();
        let o = analytic_report(&s, Estimator::Optimal).unwrap();
        assert!((u.mse - o.mse).abs() < 1e-12);
        assert!((u.variance - o.variance).abs() < 1e-12);
        assert!(o.bias2 < 1e-24);
    }

    #[test]
    fn monte_carlo_matches_analytic() {
        let s = Scenario::new(vec![0.0, 0.0], vec![1.0, 1.0], 100_000, 11).unwrap();
        let mc = monte_carlo_report(&s, Estimator::Unbiased).unwrap();
        assert!((mc.mse - 0.5).abs() <= 3.0 * mc.mse_se, "{mc:?}");

        let s = Scenario::new(vec![0.0, 3.0, 1.0], vec![1.0, 2.0, 0.5], 50_000, 5).unwrap();
        for e in [Estimator::Unbiased, Estimator::Optimal] {
            let mc = monte_carlo_report(&s, e).unwrap();
            let an = analytic_report(&s, e).unwrap();
            assert!(
                (mc.mse - an.mse).abs() <= 3.0 * mc.mse_se,
                "{e}: {mc:?} vs {an:?}"
            );
            assert!((mc.mse - (mc.bias2 + mc.variance)).abs() <= 1e-12 * mc.mse.max(1.0));
        }
    }

    #[test]
    fn same_seed_same_report() {
        let s = Scenario::new(vec![0.0, 2.0], vec![1.0, 3.0], 5_000, 42).unwrap();
        let a = monte_carlo_report(&s, Estimator::Optimal).unwrap();
        let b = monte_carlo_report(&s, Estimator::Optimal).unwrap();
        assert_eq!(a, b);
        let serial = monte_carlo_report_with(&s, Estimator::Optimal, Execution::Serial).unwrap();
        assert_eq!(a.mse.to_bits(), serial.mse.to_bits());
        assert_eq!(a.variance.to_bits(), serial.variance.to_bits());
    }

    #[test]
    fn different_seeds_differ() {
        let a = Scenario::new(vec![0.0, 2.0], vec![1.0, 3.0], 1000, 1).unwrap();
        let b = Scenario {
            seed: 2,
            ..a.clone()
        };
        assert_ne!(
            monte_carlo_report(&a, Estimator::Unbiased).unwrap(),
            monte_carlo_report(&b, Estimator::Unbiased).unwrap()
        );
    }
}
