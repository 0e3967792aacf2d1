//! Domain types shared by every estimator: studies, datasets, effect
//! scales, pooled results and heterogeneity statistics.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{MetaError, Result};
use crate::estimators::Tau2Method;
use crate::stats::{chi_square_sf, critical_value};

/// One observed effect size with its within-study variance, both on the
/// analysis scale. The variance is treated as known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub label: String,
    pub y: f64,
    pub var: f64,
}

impl Study {
    pub fn new(label: impl Into<String>, y: f64, var: f64) -> Self {
        Self {
            label: label.into(),
            y,
            var,
        }
    }

    pub fn se(&self) -> f64 {
        self.var.sqrt()
    }
}

/// Scale on which effects are pooled. Ratio measures (OR, RR) are pooled
/// as logarithms and exponentiated for display.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EffectScale {
    #[default]
    Identity,
    Log,
}

impl EffectScale {
    pub fn to_display(self, y: f64) -> f64 {
        match self {
            EffectScale::Identity => y,
            EffectScale::Log => y.exp(),
        }
    }

    /// Maps a user-facing value (an OR or RR when `Log`) onto the analysis
    /// scale.
    pub fn to_analysis(self, value: f64) -> Result<f64> {
        match self {
            EffectScale::Identity => Ok(value),
            EffectScale::Log if value > 0.0 => Ok(value.ln()),
            EffectScale::Log => Err(MetaError::NonPositiveRatio { value }),
        }
    }

    /// Value of "no effect" on the analysis scale.
    pub fn null_value(self) -> f64 {
        0.0
    }
}

impl fmt::Display for EffectScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EffectScale::Identity => "identity",
            EffectScale::Log => "log",
        })
    }
}

impl FromStr for EffectScale {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "identity" | "id" => Ok(EffectScale::Identity),
            "log" => Ok(EffectScale::Log),
            other => Err(format!(
                "unknown scale `{other}` (expected identity or log)"
            )),
        }
    }
}

/// Ordered collection of studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub studies: Vec<Study>,
    pub scale: EffectScale,
}

impl Dataset {
    /// Builds and validates a dataset.
    pub fn new(studies: Vec<Study>, scale: EffectScale) -> Result<Self> {
        validate(Self { studies, scale })
    }

    /// Number of studies.
    pub fn k(&self) -> usize {
        self.studies.len()
    }

    pub fn effects(&self) -> Vec<f64> {
        self.studies.iter().map(|s| s.y).collect()
    }

    pub fn variances(&self) -> Vec<f64> {
        self.studies.iter().map(|s| s.var).collect()
    }

    pub(crate) fn require_pooling(&self) -> Result<()> {
        if self.k() < 2 {
            return Err(MetaError::TooFewStudies { k: self.k() });
        }
        Ok(())
    }
}

/// Checks the dataset invariants and hands the dataset back unchanged.
pub fn validate(dataset: Dataset) -> Result<Dataset> {
    if dataset.studies.is_empty() {
        return Err(MetaError::EmptyDataset);
    }
    let mut seen = HashSet::with_capacity(dataset.k());
    for s in &dataset.studies {
        if !s.y.is_finite() {
            return Err(MetaError::NonFiniteEffect {
                label: s.label.clone(),
            });
        }
        // NaN fails this comparison too
        if !(s.var > 0.0 && s.var.is_finite()) {
            return Err(MetaError::NonPositiveVariance {
                label: s.label.clone(),
                var: s.var,
            });
        }
        if !seen.insert(s.label.as_str()) {
            return Err(MetaError::DuplicateLabel(s.label.clone()));
        }
    }
    Ok(dataset)
}

/// Recovers an effect and its variance from a symmetric normal-theory
/// interval. Bounds must already be on the analysis scale.
pub fn ci_from_bounds(low: f64, high: f64, level: f64) -> Result<(f64, f64)> {
    if !(high > low) || !low.is_finite() || !high.is_finite() {
        return Err(MetaError::InvalidBounds { low, high });
    }
    let z = critical_value(level)?;
    let y = 0.5 * (low + high);
    let se = (high - low) / (2.0 * z);
    Ok((y, se * se))
}

/// Pooling model tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    Common,
    Random,
    FixedUnweighted,
    FixedWeighted,
    FixedOptimal,
}

impl Model {
    pub const ALL: [Model; 5] = [
        Model::Common,
        Model::Random,
        Model::FixedUnweighted,
        Model::FixedWeighted,
        Model::FixedOptimal,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Model::Common => "common",
            Model::Random => "random",
            Model::FixedUnweighted => "fixed-unweighted",
            Model::FixedWeighted => "fixed-weighted",
            Model::FixedOptimal => "fixed-optimal",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Model {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "common" | "ce" => Ok(Model::Common),
            "random" | "re" => Ok(Model::Random),
            "fixed-unweighted" | "unweighted" | "lm" | "l-m" => Ok(Model::FixedUnweighted),
            "fixed-weighted" | "weighted" | "rice" => Ok(Model::FixedWeighted),
            "fixed-optimal" | "optimal" => Ok(Model::FixedOptimal),
            other => Err(format!("unknown model `{other}`")),
        }
    }
}

/// A pooled summary effect on the analysis scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledResult {
    pub model: Model,
    pub estimate: f64,
    pub variance: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
    /// Normalized per-study weights, in dataset order.
    pub weights: Vec<f64>,
    /// Between-study variance (random-effects only).
    pub tau2: Option<f64>,
    pub tau2_method: Option<Tau2Method>,
}

impl PooledResult {
    pub(crate) fn from_weights(
        model: Model,
        raw_weights: &[f64],
        effects: &[f64],
        variance: f64,
        level: f64,
    ) -> Result<Self> {
        let total: f64 = raw_weights.iter().sum();
        let weights: Vec<f64> = raw_weights.iter().map(|w| w / total).collect();
        let estimate = weighted_mean(&weights, effects);
        let half = critical_value(level)? * variance.sqrt();
        Ok(Self {
            model,
            estimate,
            variance,
            ci_low: estimate - half,
            ci_high: estimate + half,
            level,
            weights,
            tau2: None,
            tau2_method: None,
        })
    }

    pub fn se(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Σ wᵢ yᵢ / Σ wᵢ.
pub(crate) fn weighted_mean(weights: &[f64], values: &[f64]) -> f64 {
    let num: f64 = weights.iter().zip(values).map(|(w, y)| w * y).sum();
    let den: f64 = weights.iter().sum();
    num / den
}

/// Cochran's Q with its derived I² and chi-square p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneityStats {
    pub q: f64,
    pub df: usize,
    pub i2: f64,
    pub p_value: f64,
}

pub fn heterogeneity(dataset: &Dataset) -> Result<HeterogeneityStats> {
    dataset.require_pooling()?;
    let ys = dataset.effects();
    let ws: Vec<f64> = dataset.studies.iter().map(|s| 1.0 / s.var).collect();
    Ok(heterogeneity_from(&ys, &ws))
}

pub(crate) fn cochran_q(ys: &[f64], ws: &[f64]) -> f64 {
    let theta = weighted_mean(ws, ys);
    ws.iter()
        .zip(ys)
        .map(|(w, y)| w * (y - theta) * (y - theta))
        .sum()
}

fn heterogeneity_from(ys: &[f64], ws: &[f64]) -> HeterogeneityStats {
    let q = cochran_q(ys, ws);
    let df = ys.len() - 1;
    if q <= 0.0 {
        return HeterogeneityStats {
            q: 0.0,
            df,
            i2: 0.0,
            p_value: 1.0,
        };
    }
    HeterogeneityStats {
        q,
        df,
        i2: ((q - df as f64) / q).max(0.0),
        p_value: chi_square_sf(q, df),
    }
}
