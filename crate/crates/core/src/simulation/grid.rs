use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{analytic_report, monte_carlo_report, Estimator, EstimatorReport, Method, Scenario};
use crate::error::{MetaError, Result};

/// Which parameter a grid sweeps. The last study is the one that moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridAxis {
    /// θ_k = θ₁ + d.
    DifferenceD,
    /// σ_k = σ₁ · r.
    RatioR,
}

impl GridAxis {
    pub fn symbol(self) -> &'static str {
        match self {
            GridAxis::DifferenceD => "d",
            GridAxis::RatioR => "r",
        }
    }

    fn apply(self, base: &Scenario, value: f64) -> Result<Scenario> {
        if !value.is_finite() {
            return Err(MetaError::InvalidAxis(format!("non-finite value {value}")));
        }
        let mut s = base.clone();
        let last = s.k() - 1;
        match self {
            GridAxis::DifferenceD => s.theta[last] = s.theta[0] + value,
            GridAxis::RatioR => {
                if value <= 0.0 {
                    return Err(MetaError::InvalidAxis(format!(
                        "variance ratio must be positive, got {value}"
                    )));
                }
                s.sigma[last] = s.sigma[0] * value;
            }
        }
        Ok(s)
    }
}

/// The four sweeps of the numerical comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PaperGrid {
    /// k = 2, σ = (1, 2), θ = (0, d), d ∈ [0, 10].
    K2Difference,
    /// k = 2, θ = (−5, 5), σ = (1, r), r ∈ [1, 10].
    K2Ratio,
    /// k = 3, σ = (1, 2, 3), θ = (0, 5, d), d ∈ [0, 10].
    K3Difference,
    /// k = 3, θ = (−10, 0, 10), σ = (1, 2, r), r ∈ [1, 10].
    K3Ratio,
}

impl PaperGrid {
    pub const ALL: [PaperGrid; 4] = [
        PaperGrid::K2Difference,
        PaperGrid::K2Ratio,
        PaperGrid::K3Difference,
        PaperGrid::K3Ratio,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PaperGrid::K2Difference => "k2-d",
            PaperGrid::K2Ratio => "k2-r",
            PaperGrid::K3Difference => "k3-d",
            PaperGrid::K3Ratio => "k3-r",
        }
    }

    pub fn axis(self) -> GridAxis {
        match self {
            PaperGrid::K2Difference | PaperGrid::K3Difference => GridAxis::DifferenceD,
            PaperGrid::K2Ratio | PaperGrid::K3Ratio => GridAxis::RatioR,
        }
    }

    pub fn range(self) -> (f64, f64) {
        match self.axis() {
            GridAxis::DifferenceD => (0.0, 10.0),
            GridAxis::RatioR => (1.0, 10.0),
        }
    }

    /// Base scenario; the swept coordinate holds its range start.
    pub fn base(self, replicates: usize, seed: u64) -> Scenario {
        let (theta, sigma) = match self {
            PaperGrid::K2Difference => (vec![0.0, 0.0], vec![1.0, 2.0]),
            PaperGrid::K2Ratio => (vec![-5.0, 5.0], vec![1.0, 1.0]),
            PaperGrid::K3Difference => (vec![0.0, 5.0, 0.0], vec![1.0, 2.0, 3.0]),
            PaperGrid::K3Ratio => (vec![-10.0, 0.0, 10.0], vec![1.0, 2.0, 1.0]),
        };
        Scenario {
            theta,
            sigma,
            replicates,
            seed,
        }
    }

    pub fn values(self, step: f64) -> Result<Vec<f64>> {
        let (lo, hi) = self.range();
        grid_values(lo, hi, step)
    }
}

impl fmt::Display for PaperGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PaperGrid {
    type Err = MetaError;

    fn from_str(s: &str) -> Result<Self> {
        PaperGrid::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| MetaError::InvalidAxis(format!("unknown grid `{s}`")))
    }
}

/// `lo, lo + step, …` up to `hi` inclusive, computed without accumulation.
pub fn grid_values(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(MetaError::InvalidAxis(format!(
            "bad range [{lo}, {hi}] with step {step}"
        )));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| lo + i as f64 * step).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub axis_value: f64,
    pub unbiased: EstimatorReport,
    pub optimal: EstimatorReport,
}

/// One report pair per value of `axis`.
pub fn run_grid(
    base: &Scenario,
    axis: GridAxis,
    values: &[f64],
    method: Method,
) -> Result<Vec<GridRow>> {
    base.check()?;
    if values.is_empty() {
        return Err(MetaError::InvalidAxis("empty value list".into()));
    }
    values
        .iter()
        .map(|&v| {
            let s = axis.apply(base, v)?;
            let report = |e| match method {
                Method::Analytic => analytic_report(&s, e),
                Method::MonteCarlo => monte_carlo_report(&s, e),
            };
            Ok(GridRow {
                axis_value: v,
                unbiased: report(Estimator::Unbiased)?,
                optimal: report(Estimator::Optimal)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_include_endpoints() {
        let v = grid_values(0.0, 10.0, 0.25).unwrap();
        assert_eq!(v.len(), 41);
        assert_eq!(v[40], 10.0);
        assert_eq!(grid_values(1.0, 10.0, 0.25).unwrap().len(), 37);
        assert!(grid_values(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn single_point_grid_equals_report() {
        let g = PaperGrid::K2Difference;
        let rows = run_grid(&g.base(1, 0), g.axis(), &[3.0], Method::Analytic).unwrap();
        assert_eq!(rows.len(), 1);
        let s = Scenario::new(vec![0.0, 3.0], vec![1.0, 2.0], 1, 0).unwrap();
        assert_eq!(
            rows[0].optimal,
            analytic_report(&s, Estimator::Optimal).unwrap()
        );
        assert_eq!(
            rows[0].unbiased,
            analytic_report(&s, Estimator::Unbiased).unwrap()
        );
    }

    #[test]
    fn ratio_axis_rejects_nonpositive() {
        let g = PaperGrid::K3Ratio;
        assert!(matches!(
            run_grid(&g.base(1, 0), g.axis(), &[0.0], Method::Analytic),
            Err(MetaError::InvalidAxis(_))
        ));
        assert!(matches!(
            run_grid(&g.base(1, 0), g.axis(), &[], Method::Analytic),
            Err(MetaError::InvalidAxis(_))
        ));
    }

    #[test]
    fn grid_names_round_trip() {
        for g in PaperGrid::ALL {
            assert_eq!(g.name().parse::<PaperGrid>().unwrap(), g);
        }
        assert!("k4-d".parse::<PaperGrid>().is_err());
    }

    #[test]
    fn k2_difference_dominance() {
        let g = PaperGrid::K2Difference;
        let rows = run_grid(
            &g.base(1, 0),
            g.axis(),
            &g.values(0.25).unwrap(),
            Method::Analytic,
        )
        .unwrap();
        for r in &rows {
            assert!(r.optimal.mse < r.unbiased.mse, "{r:?}");
        }
        // improvement shrinks as d grows
        for pair in rows.windows(2) {
            let a = pair[0].unbiased.mse - pair[0].optimal.mse;
            let b = pair[1].unbiased.mse - pair[1].optimal.mse;
            assert!(b < a);
        }
    }

    #[test]
    fn k3_ratio_improvement_grows_past_crossover() {
        let g = PaperGrid::K3Ratio;
        let rows = run_grid(
            &g.base(1, 0),
            g.axis(),
            &g.values(0.25).unwrap(),
            Method::Analytic,
        )
        .unwrap();
        let gain: Vec<f64> = rows
            .iter()
            .map(|r| r.unbiased.mse - r.optimal.mse)
            .collect();
        let start = rows.iter().position(|r| r.axis_value >= 2.5).unwrap();
        for w in gain[start..].windows(2) {
            assert!(w[1] > w[0]);
        }
        assert!(gain.last().unwrap() > &gain[0]);
    }
}
