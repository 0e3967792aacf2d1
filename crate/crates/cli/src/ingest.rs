//! CSV study input.
//!
//! The header names the columns; order is free. Recognised columns are
//! `study`, `effect`, `se`, `var`, `ci_low`, `ci_high` and `n`. Each row
//! gives exactly one variance specification: `effect` + `se`,
//! `effect` + `var`, or `ci_low` + `ci_high` (with an optional `effect`
//! kept for display). Lines starting with `#` are comments.
//!
//! On the log scale `effect`, `ci_low` and `ci_high` are ratios (OR, RR)
//! and must be positive, while `se` and `var` already refer to the log
//! ratio.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use metafx_core::{ci_from_bounds, Dataset, EffectScale, MetaError, Study};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Confidence level assumed for CI bounds in the input unless overridden.
pub const DEFAULT_CI_LEVEL: f64 = 0.95;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    ParseError { line: u64, message: String },
    #[error("line {line}: study `{study}` must give exactly one of se, var or ci_low + ci_high")]
    MixedSpecification { line: u64, study: String },
    #[error("line {line}: {value} is not a positive ratio (log scale)")]
    NonPositiveRatio { line: u64, value: f64 },
    #[error("line {line}: {source}")]
    Invalid {
        line: u64,
        #[source]
        source: MetaError,
    },
    #[error(transparent)]
    Dataset(#[from] MetaError),
}

/// One input row as written by the user, on the user-facing scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub study: String,
    pub effect: Option<f64>,
    pub se: Option<f64>,
    pub var: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    /// Sample size, carried for display only.
    pub n: Option<u64>,
}

/// A validated dataset together with the rows it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub dataset: Dataset,
    pub records: Vec<InputRecord>,
}

impl Ingested {
    /// Wraps a dataset that did not come from CSV.
    pub fn from_dataset(dataset: Dataset) -> Self {
        Self {
            dataset,
            records: Vec::new(),
        }
    }
}

pub fn ingest_path(
    path: &Path,
    scale: EffectScale,
    ci_level: f64,
) -> Result<Ingested, IngestError> {
    let io_err = |source| IngestError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    ingest(file, scale, ci_level)
}

pub fn ingest_str(text: &str, scale: EffectScale) -> Result<Ingested, IngestError> {
    ingest(text.as_bytes(), scale, DEFAULT_CI_LEVEL)
}

/// Reads CSV rows into a dataset, preserving row order.
pub fn ingest<R: Read>(
    reader: R,
    scale: EffectScale,
    ci_level: f64,
) -> Result<Ingested, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = rdr.headers().map_err(|e| csv_error(e, 1))?.clone();
    let header_line = headers.position().map_or(1, |p| p.line());
    let columns = Columns::from_headers(&headers, header_line)?;

    let mut records = Vec::new();
    let mut studies = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(e, 0))?;
        let line = row.position().map_or(0, |p| p.line());
        let record = columns.record(&row, line)?;
        studies.push(to_study(&record, scale, ci_level, line)?);
        records.push(record);
    }
    let dataset = Dataset::new(studies, scale)?;
    Ok(Ingested { dataset, records })
}

fn csv_error(e: csv::Error, fallback: u64) -> IngestError {
    let line = e.position().map_or(fallback, |p| p.line());
    let message = match e.kind() {
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => {
            format!("expected {expected_len} fields, found {len}")
        }
        csv::ErrorKind::Utf8 { .. } => "invalid UTF-8".to_string(),
        _ => e.to_string(),
    };
    IngestError::ParseError { line, message }
}

#[derive(Default)]
struct Columns {
    study: Option<usize>,
    effect: Option<usize>,
    se: Option<usize>,
    var: Option<usize>,
    ci_low: Option<usize>,
    ci_high: Option<usize>,
    n: Option<usize>,
}

impl Columns {
    fn from_headers(headers: &csv::StringRecord, line: u64) -> Result<Self, IngestError> {
        let mut cols = Columns::default();
        for (i, name) in headers.iter().enumerate() {
            let slot = match name.to_ascii_lowercase().as_str() {
                "study" => &mut cols.study,
                "effect" => &mut cols.effect,
                "se" => &mut cols.se,
                "var" => &mut cols.var,
                "ci_low" => &mut cols.ci_low,
                "ci_high" => &mut cols.ci_high,
                "n" => &mut cols.n,
                other => {
                    return Err(IngestError::ParseError {
                        line,
                        message: format!("unknown column `{other}`"),
                    })
                }
            };
            if slot.replace(i).is_some() {
                return Err(IngestError::ParseError {
                    line,
                    message: format!("duplicate column `{name}`"),
                });
            }
        }
        if cols.study.is_none() {
            return Err(IngestError::ParseError {
                line,
                message: "missing `study` column".into(),
            });
        }
        Ok(cols)
    }

    fn record(&self, row: &csv::StringRecord, line: u64) -> Result<InputRecord, IngestError> {
        let text = |col: Option<usize>| col.and_then(|i| row.get(i)).filter(|s| !s.is_empty());
        let number = |col: Option<usize>, name: &str| -> Result<Option<f64>, IngestError> {
            text(col)
                .map(|s| {
                    s.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| IngestError::ParseError {
                            line,
                            message: format!("`{name}` is not a finite number: `{s}`"),
                        })
                })
                .transpose()
        };
        let study = text(self.study)
            .ok_or_else(|| IngestError::ParseError {
                line,
                message: "empty study label".into(),
            })?
            .to_string();
        let n = text(self.n)
            .map(|s| match s.parse::<u64>() {
                Ok(n) if n > 0 => Ok(n),
                _ => Err(IngestError::ParseError {
                    line,
                    message: format!("`n` must be a positive integer: `{s}`"),
                }),
            })
            .transpose()?;
        Ok(InputRecord {
            study,
            effect: number(self.effect, "effect")?,
            se: number(self.se, "se")?,
            var: number(self.var, "var")?,
            ci_low: number(self.ci_low, "ci_low")?,
            ci_high: number(self.ci_high, "ci_high")?,
            n,
        })
    }
}

fn to_study(
    r: &InputRecord,
    scale: EffectScale,
    ci_level: f64,
    line: u64,
) -> Result<Study, IngestError> {
    let mixed = || IngestError::MixedSpecification {
        line,
        study: r.study.clone(),
    };
    let analysis = |v: f64| {
        scale
            .to_analysis(v)
            .map_err(|_| IngestError::NonPositiveRatio { line, value: v })
    };
    let invalid = |source| IngestError::Invalid { line, source };

    if let Some(effect) = r.effect {
        analysis(effect)?;
    }
    let (y, var) = match (r.se, r.var, r.ci_low, r.ci_high) {
        (Some(se), None, None, None) => {
            let effect = r.effect.ok_or_else(mixed)?;
            if se <= 0.0 {
                return Err(invalid(MetaError::NonPositiveVariance {
                    label: r.study.clone(),
                    var: se,
                }));
            }
            (analysis(effect)?, se * se)
        }
        (None, Some(var), None, None) => (analysis(r.effect.ok_or_else(mixed)?)?, var),
        (None, None, Some(low), Some(high)) => {
            ci_from_bounds(analysis(low)?, analysis(high)?, ci_level).map_err(invalid)?
        }
        _ => return Err(mixed()),
    };
    Ok(Study::new(r.study.clone(), y, var))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn se_is_squared() {
        let got = ingest_str("study,effect,se\nA,0.5,0.1", EffectScale::Identity).unwrap();
        let s = &got.dataset.studies[0];
        assert_eq!(s.label, "A");
        assert_eq!(s.y, 0.5);
        assert!((s.var - 0.01).abs() < 1e-15);
    }

    #[test]
    fn both_se_and_var_is_mixed() {
        let err =
            ingest_str("study,effect,se,var\nA,0.5,0.1,0.01", EffectScale::Identity).unwrap_err();
        assert!(
            matches!(err, IngestError::MixedSpecification { line: 2, .. }),
            "{err}"
        );
    }

    #[test]
    fn missing_specification_is_mixed() {
        let err = ingest_str("study,effect,se\nA,0.5,", EffectScale::Identity).unwrap_err();
        assert!(matches!(err, IngestError::MixedSpecification { .. }));
        let err = ingest_str("study,ci_low,ci_high\nA,0.1,", EffectScale::Identity).unwrap_err();
        assert!(matches!(err, IngestError::MixedSpecification { .. }));
    }

    #[test]
    fn ratio_bounds_are_logged() {
        let got = ingest_str(
            "study,effect,ci_low,ci_high\nS1,0.29,0.19,0.43",
            EffectScale::Log,
        )
        .unwrap();
        let (y, var) = ci_from_bounds(0.19f64.ln(), 0.43f64.ln(), 0.95).unwrap();
        assert_eq!(got.dataset.studies[0].y, y);
        assert_eq!(got.dataset.studies[0].var, var);
        assert!((y - (-1.2523506385580898)).abs() < 1e-12);
        assert_eq!(got.records[0].effect, Some(0.29));
    }

    #[test]
    fn nonpositive_ratio_rejected() {
        let err =
            ingest_str("study,effect,ci_low,ci_high\nA,0.5,0,0.9", EffectScale::Log).unwrap_err();
        assert!(matches!(err, IngestError::NonPositiveRatio { line: 2, value } if value == 0.0));
        let err = ingest_str("study,effect,se\nA,-1,0.2", EffectScale::Log).unwrap_err();
        assert!(matches!(err, IngestError::NonPositiveRatio { .. }));
    }

    #[test]
    fn parse_error_carries_line() {
        let text = "# comment\nstudy,effect,se\nA,0.5,0.1\nB,abc,0.1\n";
        let err = ingest_str(text, EffectScale::Identity).unwrap_err();
        assert!(
            matches!(err, IngestError::ParseError { line: 4, .. }),
            "{err}"
        );
        let err = ingest_str("study,effect,se\nA,0.5\n", EffectScale::Identity).unwrap_err();
        assert!(
            matches!(err, IngestError::ParseError { line: 2, .. }),
            "{err}"
        );
    }

    #[test]
    fn unknown_column_rejected() {
        let err = ingest_str("study,effect,sd\nA,1,2", EffectScale::Identity).unwrap_err();
        assert!(matches!(err, IngestError::ParseError { line: 1, .. }));
    }

    #[test]
    fn order_and_n_preserved() {
        let text = "study,effect,var,n\nB,1,1,10\nA,2,2,\n";
        let got = ingest_str(text, EffectScale::Identity).unwrap();
        let labels: Vec<_> = got
            .dataset
            .studies
            .iter()
            .map(|s| s.label.as_str())
            .collect();
        assert_eq!(labels, ["B", "A"]);
        assert_eq!(got.records[0].n, Some(10));
        assert_eq!(got.records[1].n, None);
    }

    #[test]
    fn bad_values_surface_core_errors() {
        let err = ingest_str("study,effect,var\nA,1,0", EffectScale::Identity).unwrap_err();
        assert!(
            matches!(
                err,
                IngestError::Dataset(MetaError::NonPositiveVariance { .. })
            ),
            "{err}"
        );
        let err = ingest_str("study,effect,var\nA,1,1\nA,2,1", EffectScale::Identity).unwrap_err();
        assert!(matches!(
            err,
            IngestError::Dataset(MetaError::DuplicateLabel(_))
        ));
        let err = ingest_str("study,ci_low,ci_high\nA,2,1", EffectScale::Identity).unwrap_err();
        assert!(matches!(
            err,
            IngestError::Invalid {
                source: MetaError::InvalidBounds { .. },
                ..
            }
        ));
        let err = ingest_str("study,effect,var\n", EffectScale::Identity).unwrap_err();
        assert!(matches!(err, IngestError::Dataset(MetaError::EmptyDataset)));
    }
}
