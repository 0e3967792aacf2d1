//! Argument parsing and command dispatch.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use metafx_core::simulation::{grid_csv, grid_svg, run_grid, Method, PaperGrid};
use metafx_core::{EffectScale, MetaError, Model, Tau2Method};

use crate::examples;
use crate::ingest::{ingest_path, IngestError, DEFAULT_CI_LEVEL};
use crate::render::{render, Style};
use crate::report::{analyze, parse_models, AnalysisConfig, OutputFormat};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "metafx",
    version,
    about = "Meta-analysis of a few studies under common, random and fixed effects"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pool the studies in a CSV file.
    Analyze(AnalyzeArgs),
    /// Compare the MSE of the unbiased and optimal estimators over a grid.
    Simulate(SimulateArgs),
    /// Analyse one of the built-in datasets.
    Example(ExampleArgs),
}

#[derive(Debug, Clone, Args)]
struct ModelArgs {
    /// Comma-separated models (common, random, fixed-unweighted,
    /// fixed-weighted, fixed-optimal) or `all`.
    #[arg(long, value_parser = model_list, default_value = "all")]
    models: ModelList,
    /// Confidence level for every interval.
    #[arg(long, value_parser = level, default_value_t = 0.95)]
    level: f64,
    /// Between-study variance estimator for the random-effects model.
    #[arg(long, value_parser = tau2_method, default_value = "dl")]
    tau2: Tau2Method,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
    /// Write to a file instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_parser = scale, default_value = "identity")]
    scale: EffectScale,
    /// Confidence level of CI bounds given in the input.
    #[arg(long, value_parser = level, default_value_t = DEFAULT_CI_LEVEL)]
    ci_level: f64,
    /// Name of the effect measure, e.g. OR.
    #[arg(long)]
    measure: Option<String>,
    #[arg(long)]
    title: Option<String>,
    #[command(flatten)]
    common: ModelArgs,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, value_parser = grid)]
    grid: PaperGrid,
    /// Monte Carlo replicates per grid point.
    #[arg(long, value_parser = replicates)]
    replicates: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Spacing of grid points along the varied axis.
    #[arg(long, value_parser = step, default_value_t = 0.25)]
    step: f64,
    #[arg(long, value_enum, default_value_t = SimFormat::Csv)]
    format: SimFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum SimFormat {
    Csv,
    Svg,
}

#[derive(Debug, Args)]
struct ExampleArgs {
    /// Dataset name; see --list.
    #[arg(required_unless_present = "list")]
    name: Option<String>,
    /// Print the built-in dataset names.
    #[arg(long)]
    list: bool,
    #[command(flatten)]
    common: ModelArgs,
}

#[derive(Debug, Clone)]
struct ModelList(Vec<Model>);

fn model_list(s: &str) -> Result<ModelList, String> {
    parse_models(s).map(ModelList)
}

fn level(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("level must lie strictly between 0 and 1, got {v}"))
    }
}

fn tau2_method(s: &str) -> Result<Tau2Method, String> {
    s.parse()
}

fn scale(s: &str) -> Result<EffectScale, String> {
    s.parse()
}

fn grid(s: &str) -> Result<PaperGrid, String> {
    s.parse().map_err(|e: MetaError| e.to_string())
}

fn replicates(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("replicates must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(_) => Err(format!("`{s}` is not a positive integer")),
    }
}

fn step(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("step must be a positive number, got `{s}`")),
    }
}

enum Failure {
    Usage(String),
    Data(String),
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<MetaError> for Failure {
    fn from(e: MetaError) -> Self {
        Failure::Data(e.to_string())
    }
}

/// Runs the command line with standard streams; ANSI styling is used when
/// standard output is a terminal and `NO_COLOR` is unset or empty.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    use std::io::IsTerminal;
    let color = std::env::var_os("NO_COLOR").is_none_or(|v| v.is_empty())
        && std::io::stdout().is_terminal();
    let mut out = std::io::stdout().lock();
    let mut err = std::io::stderr().lock();
    run(args, &mut out, &mut err, color)
}

/// Runs the command line against the given streams.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write, color: bool) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().ansi().to_string();
            let plain = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", if color { text } else { plain });
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{plain}");
                    EXIT_USAGE
                }
            };
        }
    };
    let result = match cli.command {
        Command::Analyze(a) => cmd_analyze(a, out, color),
        Command::Simulate(s) => cmd_simulate(s, out),
        Command::Example(e) => cmd_example(e, out, color),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Data(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_DATA
        }
    }
}

fn config(args: &ModelArgs, scale: EffectScale) -> AnalysisConfig {
    AnalysisConfig {
        models: args.models.0.clone(),
        scale,
        level: args.level,
        tau2_method: args.tau2,
        output: args.format,
    }
}

fn emit(bytes: &[u8], path: Option<&PathBuf>, out: &mut dyn Write) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, bytes)
            .map_err(|e| Failure::Data(format!("cannot write {}: {e}", p.display()))),
        None => out
            .write_all(bytes)
            .map_err(|e| Failure::Data(format!("cannot write output: {e}"))),
    }
}

fn cmd_analyze(a: AnalyzeArgs, out: &mut dyn Write, color: bool) -> Result<(), Failure> {
    let input = ingest_path(&a.input, a.scale, a.ci_level)?;
    let cfg = config(&a.common, a.scale);
    let mut report = analyze(&input, &cfg)?;
    report.title = a.title;
    report.measure = a.measure;
    let style = Style {
        ansi: color && a.common.out.is_none(),
    };
    emit(
        &render(&report, cfg.output, style),
        a.common.out.as_ref(),
        out,
    )
}

fn cmd_example(e: ExampleArgs, out: &mut dyn Write, color: bool) -> Result<(), Failure> {
    if e.list {
        let mut text = String::new();
        for ex in &examples::EXAMPLES {
            text.push_str(&format!("{:<16} {} ({})\n", ex.name, ex.title, ex.measure));
        }
        return emit(text.as_bytes(), None, out);
    }
    let name = e.name.unwrap_or_default();
    let ex = examples::find(&name).ok_or_else(|| {
        Failure::Usage(format!(
            "unknown example `{name}` (available: {})",
            examples::names().join(", ")
        ))
    })?;
    let input = ex.ingest()?;
    let cfg = config(&e.common, ex.scale);
    let mut report = analyze(&input, &cfg)?;
    report.title = Some(ex.title.to_string());
    report.measure = Some(ex.measure.to_string());
    let style = Style {
        ansi: color && e.common.out.is_none(),
    };
    emit(
        &render(&report, cfg.output, style),
        e.common.out.as_ref(),
        out,
    )
}

fn cmd_simulate(s: SimulateArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let base = s.grid.base(s.replicates, s.seed);
    let values = s
        .grid
        .values(s.step)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let axis = s.grid.axis();
    let analytic = run_grid(&base, axis, &values, Method::Analytic)?;
    let monte_carlo = run_grid(&base, axis, &values, Method::MonteCarlo)?;
    let bytes = match s.format {
        SimFormat::Csv => {
            let mut text = grid_csv(&analytic);
            let mc = grid_csv(&monte_carlo);
            text.extend(mc.lines().skip(1).flat_map(|l| [l, "\n"]));
            text
        }
        SimFormat::Svg => {
            let title = format!(
                "MSE of the unbiased and optimal estimators, grid {}",
                s.grid.name()
            );
            grid_svg(&title, axis, &analytic, &monte_carlo)
        }
    };
    emit(bytes.as_bytes(), s.out.as_ref(), out)
}
