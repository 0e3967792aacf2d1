use serde::{Deserialize, Serialize};

use super::{estimator_weights, replicate_map, Estimator, Execution, Scenario};
use crate::error::Result;
use crate::estimators;
use crate::model::{Dataset, EffectScale, Study};
use crate::stats::critical_value;

/// Interval construction whose coverage is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoverageModel {
    /// Inverse-variance CI; target is the inverse-variance mean of θ, which
    /// is θ itself when all effects agree.
    Common,
    /// Plain-mean CI; target φᵤ.
    FixedUnweighted,
    /// Optimal-weight CI with weights at the true parameters; target φᵤ.
    FixedOptimal,
}

pub fn coverage_study(scenario: &Scenario, model: CoverageModel, level: f64) -> Result<f64> {
    coverage_study_with(scenario, model, level, Execution::Parallel)
}

/// Fraction of replicates whose `level` interval covers the model target.
pub fn coverage_study_with(
    scenario: &Scenario,
    model: CoverageModel,
    level: f64,
    execution: Execution,
) -> Result<f64> {
    scenario.check()?;
    let z = critical_value(level)?;
    let sigma2 = scenario.sigma2();
    let labels: Vec<String> = (0..scenario.k()).map(|i| format!("S{}", i + 1)).collect();

    let hits: Vec<u8> = match model {
        CoverageModel::Common | CoverageModel::FixedUnweighted => {
            let target = if model == CoverageModel::Common {
                let w: f64 = sigma2.iter().map(|s| 1.0 / s).sum();
                scenario
                    .theta
                    .iter()
                    .zip(&sigma2)
                    .map(|(t, s)| t / s)
                    .sum::<f64>()
                    / w
            } else {
                scenario.phi_u()
            };
            let results = replicate_map(scenario, execution, |y| {
                let data = Dataset {
                    studies: labels
                        .iter()
                        .zip(y)
                        .zip(&sigma2)
                        .map(|((l, &y), &v)| Study::new(l.clone(), y, v))
                        .collect(),
                    scale: EffectScale::Identity,
                };
                let pooled = if model == CoverageModel::Common {
                    estimators::common_effect(&data, level)
                } else {
                    estimators::fixed_unweighted(&data, level)
                };
                pooled.map(|p| u8::from(p.ci_low <= target && target <= p.ci_high))
            });
            results.into_iter().collect::<Result<_>>()?
        }
        CoverageModel::FixedOptimal => {
            let w = estimator_weights(scenario, Estimator::Optimal)?;
            let total: f64 = w.iter().sum();
            let half = z * w
                .iter()
                .zip(&scenario.sigma)
                .map(|(w, s)| (w * s) * (w * s))
                .sum::<f64>()
                .sqrt()
                / total;
            let target = scenario.phi_u();
            replicate_map(scenario, execution, |y| {
                let est = w.iter().zip(y).map(|(w, y)| w * y).sum::<f64>() / total;
                u8::from((est - target).abs() <= half)
            })
        }
    };
    let covered: usize = hits.iter().map(|&h| h as usize).sum();
    Ok(covered as f64 / hits.len() as f64)
}
