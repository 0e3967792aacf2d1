//! Command-line front end: CSV ingestion, analysis reports in text, JSON,
//! CSV and SVG, built-in example datasets and MSE grid simulations.

pub mod cli;
pub mod examples;
pub mod ingest;
pub mod render;
pub mod report;

pub use cli::{cli_main, run};
pub use ingest::{ingest, ingest_path, ingest_str, IngestError, Ingested, InputRecord};
pub use render::{render, render_forest, RenderError, Style};
pub use report::{analyze, AnalysisConfig, OutputFormat, Report};
