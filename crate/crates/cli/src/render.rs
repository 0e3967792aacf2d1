//! Report renderers: fixed-width text, JSON, CSV and an SVG forest plot.

use std::fmt::Write as _;

use metafx_core::{EffectScale, Model, Provenance};
use thiserror::Error;

use crate::report::{OutputFormat, Report};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RenderError {
    #[error("format `{0}` is not supported here")]
    UnsupportedFormat(String),
}

/// Text-table options.
#[derive(Debug, Clone, Copy, Default)]
pub struct Style {
    /// Emit ANSI bold for headings and pooled rows.
    pub ansi: bool,
}

const FOREST_WIDTH: usize = 31;

/// Renders a report in any output format.
pub fn render(report: &Report, format: OutputFormat, style: Style) -> Vec<u8> {
    match format {
        OutputFormat::Text => text(report, style).into_bytes(),
        OutputFormat::Json => report.to_json().into_bytes(),
        OutputFormat::Csv => csv(report).into_bytes(),
        OutputFormat::Svg => svg(report).into_bytes(),
    }
}

/// Forest-plot renderer: `text` or `svg` only.
pub fn render_forest(report: &Report, format: OutputFormat) -> Result<Vec<u8>, RenderError> {
    match format {
        OutputFormat::Text => Ok(text(report, Style::default()).into_bytes()),
        OutputFormat::Svg => Ok(svg(report).into_bytes()),
        other => Err(RenderError::UnsupportedFormat(
            format!("{other:?}").to_lowercase(),
        )),
    }
}

/// Two decimals, without a negative sign on zero.
pub fn fmt2(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn fmt_level(level: f64) -> String {
    let pct = format!("{:.4}", level * 100.0);
    pct.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn short_tag(model: Model) -> &'static str {
    match model {
        Model::Common => "CE",
        Model::Random => "RE",
        Model::FixedUnweighted => "FU",
        Model::FixedWeighted => "FW",
        Model::FixedOptimal => "FO",
    }
}

/// Model whose weights size the forest-plot squares.
fn primary_model(report: &Report) -> Model {
    if report.models.contains(&Model::FixedOptimal) {
        Model::FixedOptimal
    } else {
        report.models[0]
    }
}

/// Analysis-scale span covering every interval and the null value, padded
/// by 5% on each side.
fn plot_range(report: &Report) -> (f64, f64) {
    let null = report.scale.null_value();
    let lows = report
        .studies
        .iter()
        .map(|s| s.ci_low)
        .chain(report.pooled.iter().map(|p| p.ci_low));
    let highs = report
        .studies
        .iter()
        .map(|s| s.ci_high)
        .chain(report.pooled.iter().map(|p| p.ci_high));
    let lo = lows.fold(null, f64::min);
    let hi = highs.fold(null, f64::max);
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 1.0 };
    (lo - pad, hi + pad)
}

fn column(x: f64, (lo, hi): (f64, f64), width: usize) -> usize {
    let t = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
    (t * (width - 1) as f64).round() as usize
}

fn glyph_row(
    low: f64,
    high: f64,
    estimate: f64,
    marker: char,
    range: (f64, f64),
    null: f64,
) -> String {
    let mut cells = vec![' '; FOREST_WIDTH];
    let n = column(null, range, FOREST_WIDTH);
    let (a, b, e) = (
        column(low, range, FOREST_WIDTH),
        column(high, range, FOREST_WIDTH),
        column(estimate, range, FOREST_WIDTH),
    );
    cells[n] = '│';
    for (c, cell) in cells.iter_mut().enumerate().take(b + 1).skip(a) {
        *cell = if c == n { '┼' } else { '─' };
    }
    if a < b {
        cells[a] = '├';
        cells[b] = '┤';
    }
    cells[e] = marker;
    cells.into_iter().collect()
}

fn pad_right(s: &str, width: usize) -> String {
    let n = s.chars().count();
    format!("{s}{}", " ".repeat(width.saturating_sub(n)))
}

fn pad_left(s: &str, width: usize) -> String {
    let n = s.chars().count();
    format!("{}{s}", " ".repeat(width.saturating_sub(n)))
}

fn interval(low: f64, high: f64) -> String {
    format!("[{}, {}]", fmt2(low), fmt2(high))
}

fn text(report: &Report, style: Style) -> String {
    let bold = |s: String| {
        if style.ansi {
            format!("\x1b[1m{s}\x1b[0m")
        } else {
            s
        }
    };
    let measure = report.measure_name();
    let level = fmt_level(report.level);
    let range = plot_range(report);
    let null = report.scale.null_value();

    let label_w = report
        .studies
        .iter()
        .map(|s| s.label.as_str())
        .chain(report.pooled.iter().map(|p| p.label.as_str()))
        .chain(["Study"])
        .map(|s| s.chars().count())
        .max()
        .unwrap_or(5);
    let effect_w = measure.chars().count().max(8);
    let ci_head = format!("{level}% CI");
    let ci_w = report
        .studies
        .iter()
        .map(|s| interval(s.display.low, s.display.high))
        .chain(
            report
                .pooled
                .iter()
                .map(|p| interval(p.display.low, p.display.high)),
        )
        .map(|s| s.chars().count())
        .chain([ci_head.chars().count()])
        .max()
        .unwrap_or(0);
    let weight_cols: String = report
        .models
        .iter()
        .map(|m| pad_left(short_tag(*m), 7))
        .collect();
    let blank_weights = " ".repeat(weight_cols.chars().count());

    let mut out = String::new();
    if let Some(title) = &report.title {
        out.push_str(&bold(title.clone()));
        out.push('\n');
    }
    let k = report.studies.len();
    let _ = writeln!(
        out,
        "k = {k} studies, {measure} on the {} scale, {level}% confidence intervals",
        report.scale
    );
    out.push('\n');

    let header = format!(
        "{}  {}  {}{}  {}",
        pad_right("Study", label_w),
        pad_left(measure, effect_w),
        pad_right(&ci_head, ci_w),
        weight_cols,
        pad_right("Forest", FOREST_WIDTH)
    );
    let rule_w = header.chars().count();
    out.push_str(&bold(header.trim_end().to_string()));
    out.push('\n');
    out.push_str(&"─".repeat(rule_w));
    out.push('\n');

    for s in &report.studies {
        let weights: String = report
            .models
            .iter()
            .map(|m| pad_left(&format!("{:.1}", 100.0 * s.weight(*m).unwrap_or(0.0)), 7))
            .collect();
        let _ = writeln!(
            out,
            "{}  {}  {}{}  {}",
            pad_right(&s.label, label_w),
            pad_left(&fmt2(s.display.estimate), effect_w),
            pad_right(&interval(s.display.low, s.display.high), ci_w),
            weights,
            glyph_row(s.ci_low, s.ci_high, s.y, '■', range, null)
        );
    }
    out.push_str(&"─".repeat(rule_w));
    out.push('\n');
    for p in &report.pooled {
        let row = format!(
            "{}  {}  {}{}  {}",
            pad_right(&p.label, label_w),
            pad_left(&fmt2(p.display.estimate), effect_w),
            pad_right(&interval(p.display.low, p.display.high), ci_w),
            blank_weights,
            glyph_row(p.ci_low, p.ci_high, p.estimate, '◆', range, null)
        );
        out.push_str(&bold(row));
        out.push('\n');
    }
    out.push('\n');

    let legend: Vec<String> = report
        .models
        .iter()
        .map(|m| format!("{} {}", short_tag(*m), m.tag()))
        .collect();
    let _ = writeln!(out, "Weights (%): {}", legend.join(", "));
    let _ = writeln!(
        out,
        "Forest axis: {} {} to {}, │ marks {}",
        measure,
        fmt2(report.scale.to_display(range.0)),
        fmt2(report.scale.to_display(range.1)),
        fmt2(report.scale.to_display(null))
    );
    let h = &report.heterogeneity;
    let p = if h.p_value < 0.001 {
        "p < 0.001".to_string()
    } else {
        format!("p = {:.3}", h.p_value)
    };
    let _ = writeln!(
        out,
        "Heterogeneity: Q = {}, df = {}, {p}, I² = {:.1}%",
        fmt2(h.q),
        h.df,
        100.0 * h.i2
    );
    let _ = writeln!(
        out,
        "Between-study variance: τ² (DL) = {:.4}, τ² (PM) = {:.4}",
        h.tau2_dl, h.tau2_pm
    );
    out.push_str(&optimal_line(report));
    out.push('\n');
    out
}

fn optimal_line(report: &Report) -> String {
    let o = &report.optimal;
    let source = match o.provenance {
        Provenance::ClosedForm => "closed form",
        Provenance::QpSolver => "quadratic program",
    };
    let condition = if o.assumption_holds { "holds" } else { "fails" };
    let mut line = format!("Optimal weights: {source}, positivity condition {condition}");
    if !o.active_set.is_empty() {
        let _ = write!(line, ", zero weight for {}", o.active_set.join(", "));
    }
    let _ = write!(line, ", KKT residual {:.1e}", o.kkt_residual);
    line
}

fn csv(report: &Report) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    w.write_record([
        "section",
        "label",
        "model",
        "estimate",
        "variance",
        "ci_low",
        "ci_high",
        "display_estimate",
        "display_ci_low",
        "display_ci_high",
        "weight",
        "tau2",
    ])
    .expect("in-memory write");
    for s in &report.studies {
        for mw in &s.weights {
            w.write_record([
                "study".to_string(),
                s.label.clone(),
                mw.model.tag().to_string(),
                s.y.to_string(),
                s.var.to_string(),
                s.ci_low.to_string(),
                s.ci_high.to_string(),
                s.display.estimate.to_string(),
                s.display.low.to_string(),
                s.display.high.to_string(),
                mw.weight.to_string(),
                String::new(),
            ])
            .expect("in-memory write");
        }
    }
    for p in &report.pooled {
        w.write_record([
            "pooled".to_string(),
            p.label.clone(),
            p.model.tag().to_string(),
            p.estimate.to_string(),
            p.variance.to_string(),
            p.ci_low.to_string(),
            p.ci_high.to_string(),
            p.display.estimate.to_string(),
            p.display.low.to_string(),
            p.display.high.to_string(),
            String::new(),
            opt(p.tau2),
        ])
        .expect("in-memory write");
    }
    let h = &report.heterogeneity;
    for (name, value) in [
        ("q", h.q),
        ("df", h.df as f64),
        ("i2", h.i2),
        ("p_value", h.p_value),
        ("tau2_dl", h.tau2_dl),
        ("tau2_pm", h.tau2_pm),
    ] {
        let mut row = vec![String::new(); 12];
        row[0] = "heterogeneity".into();
        row[1] = name.into();
        row[3] = value.to_string();
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Tick positions (analysis scale) and labels (display scale).
fn axis_ticks(scale: EffectScale, (lo, hi): (f64, f64)) -> Vec<(f64, String)> {
    match scale {
        EffectScale::Identity => {
            let raw = (hi - lo) / 5.0;
            let mag = 10f64.powf(raw.log10().floor());
            let step = [1.0, 2.0, 5.0, 10.0]
                .iter()
                .map(|m| m * mag)
                .find(|s| *s >= raw)
                .unwrap_or(10.0 * mag);
            let decimals = (-step.log10().floor()).max(0.0) as usize;
            let first = (lo / step).ceil() as i64;
            let last = (hi / step).floor() as i64;
            (first..=last)
                .map(|i| {
                    let v = i as f64 * step + 0.0;
                    (v, format!("{:.*}", decimals, v))
                })
                .collect()
        }
        EffectScale::Log => {
            let mut all = Vec::new();
            for e in -4i32..=4 {
                for m in [1.0, 2.0, 5.0] {
                    let decimals = (-e).max(0) as usize;
                    let v: f64 = m * 10f64.powi(e);
                    if (lo..=hi).contains(&v.ln()) {
                        all.push((
                            v.ln(),
                            trim_number(&format!("{:.*}", decimals, v)),
                            m == 1.0,
                        ));
                    }
                }
            }
            if all.len() > 8 {
                all.retain(|t| t.2);
            }
            all.into_iter().map(|(x, s, _)| (x, s)).collect()
        }
    }
}

fn trim_number(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// Horizontal geometry of the SVG plot area.
pub const SVG_PLOT_X0: f64 = 460.0;
pub const SVG_PLOT_X1: f64 = 740.0;

fn svg(report: &Report) -> String {
    const WIDTH: f64 = 880.0;
    const ROW: f64 = 24.0;
    const TOP: f64 = 84.0;
    let range = plot_range(report);
    let x =
        |v: f64| SVG_PLOT_X0 + (v - range.0) / (range.1 - range.0) * (SVG_PLOT_X1 - SVG_PLOT_X0);
    let measure = escape(report.measure_name());
    let primary = primary_model(report);
    let k = report.studies.len();
    let pooled_top = TOP + k as f64 * ROW + 12.0;
    let bottom = pooled_top + report.pooled.len() as f64 * ROW - 6.0;
    let axis_y = bottom + 6.0;
    let height = axis_y + 70.0;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if let Some(title) = &report.title {
        let _ = writeln!(
            s,
            r#"<text x="16" y="24" font-size="14" font-weight="bold">{}</text>"#,
            escape(title)
        );
    }
    let level = fmt_level(report.level);
    let _ = writeln!(
        s,
        r#"<g font-weight="bold"><text x="16" y="60">Study</text><text x="250" y="60">{measure} [{level}% CI]</text><text x="{}" y="60" text-anchor="middle">{measure}</text><text x="860" y="60" text-anchor="end">Weight (%)</text></g>"#,
        (SVG_PLOT_X0 + SVG_PLOT_X1) / 2.0
    );
    let _ = writeln!(
        s,
        r##"<line x1="16" y1="68" x2="864" y2="68" stroke="#888"/>"##
    );

    let null_x = x(report.scale.null_value());
    let _ = writeln!(
        s,
        r##"<line id="null-line" x1="{null_x:.2}" y1="70" x2="{null_x:.2}" y2="{axis_y:.2}" stroke="#444" stroke-dasharray="4 3"/>"##
    );

    let max_w = report
        .studies
        .iter()
        .filter_map(|r| r.weight(primary))
        .fold(0.0, f64::max);
    let _ = writeln!(s, r#"<g class="studies">"#);
    for (i, row) in report.studies.iter().enumerate() {
        let y = TOP + i as f64 * ROW;
        let w = row.weight(primary).unwrap_or(0.0);
        let side = 4.0 + 12.0 * if max_w > 0.0 { (w / max_w).sqrt() } else { 0.0 };
        let cx = x(row.y);
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.2}">{}</text><text x="250" y="{:.2}">{} {}</text><text x="860" y="{:.2}" text-anchor="end">{:.1}</text>"#,
            y + 4.0,
            escape(&row.label),
            y + 4.0,
            fmt2(row.display.estimate),
            interval(row.display.low, row.display.high),
            y + 4.0,
            100.0 * w
        );
        let _ = writeln!(
            s,
            r#"<line class="ci" x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black"/><rect class="study" x="{:.2}" y="{:.2}" width="{side:.2}" height="{side:.2}" fill="black"/>"#,
            x(row.ci_low),
            x(row.ci_high),
            cx - side / 2.0,
            y - side / 2.0
        );
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r#"<g class="pooled-rows">"#);
    for (j, p) in report.pooled.iter().enumerate() {
        let y = pooled_top + j as f64 * ROW;
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.2}" font-weight="bold">{}</text><text x="250" y="{:.2}" font-weight="bold">{} {}</text>"#,
            y + 4.0,
            escape(&p.label),
            y + 4.0,
            fmt2(p.display.estimate),
            interval(p.display.low, p.display.high)
        );
        let _ = writeln!(
            s,
            r##"<polygon class="pooled" points="{:.2},{y:.2} {:.2},{:.2} {:.2},{y:.2} {:.2},{:.2}" fill="#1f4e9c"/>"##,
            x(p.ci_low),
            x(p.estimate),
            y - 7.0,
            x(p.ci_high),
            x(p.estimate),
            y + 7.0
        );
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(
        s,
        r#"<line class="axis" x1="{SVG_PLOT_X0}" y1="{axis_y:.2}" x2="{SVG_PLOT_X1}" y2="{axis_y:.2}" stroke="black"/>"#
    );
    for (v, label) in axis_ticks(report.scale, range) {
        let tx = x(v);
        let _ = writeln!(
            s,
            r#"<line x1="{tx:.2}" y1="{axis_y:.2}" x2="{tx:.2}" y2="{:.2}" stroke="black"/><text class="tick" x="{tx:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#,
            axis_y + 5.0,
            axis_y + 18.0
        );
    }
    let h = &report.heterogeneity;
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}">Heterogeneity: I² = {:.1}%, Q = {} (df = {}), τ² (DL) = {:.4}; squares sized by {} weight</text>"#,
        axis_y + 44.0,
        100.0 * h.i2,
        fmt2(h.q),
        h.df,
        h.tau2_dl,
        primary.tag()
    );
    let _ = writeln!(s, "</svg>");
    s
}
