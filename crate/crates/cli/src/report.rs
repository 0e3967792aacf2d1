//! Analysis reports: every requested model run over one dataset.
//!
//! A [`Report`] serialises to the versioned JSON schema described in
//! `docs/report-schema.md`. [`Report::from_json`] reads it back, and
//! [`Report::dataset`] with [`Report::config`] reproduce the analysis.

use std::str::FromStr;

use metafx_core::estimators::{self, Tau2Method};
use metafx_core::stats::critical_value;
use metafx_core::weights::{assumption_holds, WeightProblem};
use metafx_core::{
    heterogeneity, Dataset, EffectScale, MetaError, Model, PooledResult, Provenance, Study,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Ingested;

pub const SCHEMA: &str = "metafx.report/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Text,
    Json,
    Csv,
    Svg,
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("invalid report JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported report schema `{0}` (expected `{SCHEMA}`)")]
    Schema(String),
    #[error(transparent)]
    Meta(#[from] MetaError),
}

/// What to compute and how to present it. `models` is never empty.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub models: Vec<Model>,
    pub scale: EffectScale,
    pub level: f64,
    pub tau2_method: Tau2Method,
    pub output: OutputFormat,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            models: Model::ALL.to_vec(),
            scale: EffectScale::Identity,
            level: 0.95,
            tau2_method: Tau2Method::DersimonianLaird,
            output: OutputFormat::Text,
        }
    }
}

impl AnalysisConfig {
    /// Checks the invariants and drops duplicate models, keeping first
    /// occurrences in order.
    pub fn validated(mut self) -> Result<Self, MetaError> {
        let mut seen = Vec::with_capacity(self.models.len());
        self.models.retain(|m| {
            let fresh = !seen.contains(m);
            seen.push(*m);
            fresh
        });
        if self.models.is_empty() {
            return Err(MetaError::InvalidProblem("no models requested".into()));
        }
        critical_value(self.level)?;
        Ok(self)
    }
}

/// Comma-separated model list; `all` selects every model.
pub fn parse_models(s: &str) -> Result<Vec<Model>, String> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(Model::ALL.to_vec());
    }
    let models = s
        .split(',')
        .map(Model::from_str)
        .collect::<Result<Vec<_>, _>>()?;
    if models.is_empty() {
        return Err("empty model list".into());
    }
    Ok(models)
}

/// Point estimate and interval on the display scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub estimate: f64,
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelWeight {
    pub model: Model,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub label: String,
    /// Analysis-scale effect and variance; these define the dataset.
    pub y: f64,
    pub var: f64,
    /// Effect as reported in the input, if any (display only).
    pub effect: Option<f64>,
    pub n: Option<u64>,
    pub ci_low: f64,
    pub ci_high: f64,
    pub display: Interval,
    pub weights: Vec<ModelWeight>,
}

impl StudyRow {
    pub fn weight(&self, model: Model) -> Option<f64> {
        self.weights
            .iter()
            .find(|w| w.model == model)
            .map(|w| w.weight)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledRow {
    pub model: Model,
    pub label: String,
    pub estimate: f64,
    pub variance: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub display: Interval,
    pub tau2: Option<f64>,
    pub tau2_method: Option<Tau2Method>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneityBlock {
    pub q: f64,
    pub df: usize,
    pub i2: f64,
    pub p_value: f64,
    pub tau2_dl: f64,
    pub tau2_pm: f64,
}

/// How the optimal fixed-effects weights were obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalStatus {
    /// Whether the positivity condition holds for the plug-in problem.
    pub assumption_holds: bool,
    pub margins: Vec<f64>,
    pub provenance: Provenance,
    /// Labels of studies that receive zero weight.
    pub active_set: Vec<String>,
    pub kkt_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub title: Option<String>,
    /// Name of the effect measure for display, e.g. "OR".
    pub measure: Option<String>,
    pub scale: EffectScale,
    pub level: f64,
    pub tau2_method: Tau2Method,
    pub models: Vec<Model>,
    pub studies: Vec<StudyRow>,
    pub pooled: Vec<PooledRow>,
    pub heterogeneity: HeterogeneityBlock,
    pub optimal: OptimalStatus,
}

pub fn model_label(model: Model, method: Tau2Method) -> String {
    match model {
        Model::Common => "Common effect".into(),
        Model::Random => format!("Random effects ({})", method.short()),
        Model::FixedUnweighted => "Fixed, unweighted (L-M)".into(),
        Model::FixedWeighted => "Fixed, weighted".into(),
        Model::FixedOptimal => "Fixed, optimal".into(),
    }
}

/// Runs every requested model over the ingested data.
pub fn analyze(input: &Ingested, config: &AnalysisConfig) -> Result<Report, MetaError> {
    let config = config.clone().validated()?;
    let data = &input.dataset;
    if data.scale != config.scale {
        return Err(MetaError::InvalidProblem(format!(
            "dataset is on the {} scale but the analysis asks for {}",
            data.scale, config.scale
        )));
    }
    let het = heterogeneity(data)?;
    let block = HeterogeneityBlock {
        q: het.q,
        df: het.df,
        i2: het.i2,
        p_value: het.p_value,
        tau2_dl: estimators::tau2(data, Tau2Method::DersimonianLaird)?,
        tau2_pm: estimators::tau2(data, Tau2Method::PauleMandel)?,
    };

    let problem: WeightProblem = estimators::plug_in_problem(data)?;
    let solution = estimators::fixed_optimal_solution(data)?;
    let optimal = OptimalStatus {
        assumption_holds: assumption_holds(&problem),
        margins: problem.assumption_margins(),
        provenance: solution.provenance,
        active_set: solution
            .active_set
            .iter()
            .map(|&i| data.studies[i].label.clone())
            .collect(),
        kkt_residual: solution.kkt_residual,
    };

    let results = config
        .models
        .iter()
        .map(|&m| match m {
            Model::FixedOptimal => estimators::fixed_optimal_from(data, &solution, config.level),
            _ => estimators::pool(data, m, config.tau2_method, config.level),
        })
        .collect::<Result<Vec<PooledResult>, _>>()?;

    let z = critical_value(config.level)?;
    let scale = config.scale;
    let studies = data
        .studies
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let half = z * s.se();
            let record = input.records.get(i);
            let effect = record.and_then(|r| r.effect);
            StudyRow {
                label: s.label.clone(),
                y: s.y,
                var: s.var,
                effect,
                n: record.and_then(|r| r.n),
                ci_low: s.y - half,
                ci_high: s.y + half,
                display: Interval {
                    estimate: effect.unwrap_or_else(|| scale.to_display(s.y)),
                    low: scale.to_display(s.y - half),
                    high: scale.to_display(s.y + half),
                },
                weights: results
                    .iter()
                    .map(|r| ModelWeight {
                        model: r.model,
                        weight: r.weights[i],
                    })
                    .collect(),
            }
        })
        .collect();

    let pooled = results
        .iter()
        .map(|r| PooledRow {
            model: r.model,
            label: model_label(r.model, config.tau2_method),
            estimate: r.estimate,
            variance: r.variance,
            ci_low: r.ci_low,
            ci_high: r.ci_high,
            display: Interval {
                estimate: scale.to_display(r.estimate),
                low: scale.to_display(r.ci_low),
                high: scale.to_display(r.ci_high),
            },
            tau2: r.tau2,
            tau2_method: r.tau2_method,
        })
        .collect();

    Ok(Report {
        schema: SCHEMA.to_string(),
        title: None,
        measure: None,
        scale,
        level: config.level,
        tau2_method: config.tau2_method,
        models: config.models.clone(),
        studies,
        pooled,
        heterogeneity: block,
        optimal,
    })
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report is serialisable");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        #[derive(Deserialize)]
        struct Header {
            schema: String,
        }
        let header: Header = serde_json::from_str(text)?;
        if header.schema != SCHEMA {
            return Err(ReportError::Schema(header.schema));
        }
        Ok(serde_json::from_str(text)?)
    }

    /// The analysis-scale dataset the report was computed from.
    pub fn dataset(&self) -> Result<Dataset, MetaError> {
        let studies = self
            .studies
            .iter()
            .map(|s| Study::new(s.label.clone(), s.y, s.var))
            .collect();
        Dataset::new(studies, self.scale)
    }

    /// The configuration that produced the report (output format aside).
    pub fn config(&self) -> AnalysisConfig {
        AnalysisConfig {
            models: self.models.clone(),
            scale: self.scale,
            level: self.level,
            tau2_method: self.tau2_method,
            output: OutputFormat::Json,
        }
    }

    pub fn pooled_row(&self, model: Model) -> Option<&PooledRow> {
        self.pooled.iter().find(|p| p.model == model)
    }

    pub fn measure_name(&self) -> &str {
        self.measure.as_deref().unwrap_or("Effect")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::ingest_str;

    fn two_study() -> Ingested {
        ingest_str("study,effect,var\nA,1,1\nB,3,2\n", EffectScale::Identity).unwrap()
    }

    #[test]
    fn single_model_gives_one_pooled_row() {
        let cfg = AnalysisConfig {
            models: vec![Model::FixedUnweighted],
            ..Default::default()
        };
        let report = analyze(&two_study(), &cfg).unwrap();
        assert_eq!(report.pooled.len(), 1);
        assert_eq!(report.pooled[0].estimate, 2.0);
        assert_eq!(report.studies[0].weights.len(), 1);
    }

    #[test]
    fn duplicate_models_collapse_and_empty_is_rejected() {
        let cfg = AnalysisConfig {
            models: vec![Model::Common, Model::Common],
            ..Default::default()
        };
        assert_eq!(analyze(&two_study(), &cfg).unwrap().pooled.len(), 1);
        let cfg = AnalysisConfig {
            models: vec![],
            ..Default::default()
        };
        assert!(analyze(&two_study(), &cfg).is_err());
    }

    #[test]
    fn single_study_is_too_few() {
        let one = ingest_str("study,effect,var\nA,1,1\n", EffectScale::Identity).unwrap();
        assert!(matches!(
            analyze(&one, &AnalysisConfig::default()),
            Err(MetaError::TooFewStudies { k: 1 })
        ));
    }

    #[test]
    fn random_row_names_its_method() {
        let cfg = AnalysisConfig {
            tau2_method: Tau2Method::PauleMandel,
            ..Default::default()
        };
        let report = analyze(&two_study(), &cfg).unwrap();
        let row = report.pooled_row(Model::Random).unwrap();
        assert_eq!(row.label, "Random effects (PM)");
        assert_eq!(row.tau2_method, Some(Tau2Method::PauleMandel));
    }

    #[test]
    fn json_round_trip_is_bit_identical() {
        let report = analyze(&two_study(), &AnalysisConfig::default()).unwrap();
        let back = Report::from_json(&report.to_json()).unwrap();
        assert_eq!(back, report);
        let again = analyze(
            &Ingested::from_dataset(back.dataset().unwrap()),
            &back.config(),
        )
        .unwrap();
        for (a, b) in again.pooled.iter().zip(&report.pooled) {
            assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
            assert_eq!(a.ci_low.to_bits(), b.ci_low.to_bits());
            assert_eq!(a.ci_high.to_bits(), b.ci_high.to_bits());
        }
    }

    #[test]
    fn wrong_schema_rejected() {
        let report = analyze(&two_study(), &AnalysisConfig::default()).unwrap();
        let text = report.to_json().replace(SCHEMA, "metafx.report/0");
        assert!(matches!(
            Report::from_json(&text),
            Err(ReportError::Schema(_))
        ));
    }

    #[test]
    fn parse_model_lists() {
        assert_eq!(parse_models("all").unwrap(), Model::ALL.to_vec());
        assert_eq!(
            parse_models("common, optimal").unwrap(),
            vec![Model::Common, Model::FixedOptimal]
        );
        assert!(parse_models("common,bogus").is_err());
    }
}
