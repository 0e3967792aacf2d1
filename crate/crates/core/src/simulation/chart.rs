use std::fmt::Write;

use super::{EstimatorReport, GridAxis, GridRow};

/// Flat table: `axis_value,estimator,mse,bias2,variance,method`.
pub fn grid_csv(rows: &[GridRow]) -> String {
    let mut out = String::from("axis_value,estimator,mse,bias2,variance,method\n");
    for row in rows {
        for rep in [&row.unbiased, &row.optimal] {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                row.axis_value, rep.estimator, rep.mse, rep.bias2, rep.variance, rep.method
            );
        }
    }
    out
}

const PANEL_W: f64 = 300.0;
const PANEL_H: f64 = 250.0;
const MARGIN_L: f64 = 55.0;
const MARGIN_R: f64 = 15.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 45.0;
const UNBIASED_COLOR: &str = "#d62728";
const OPTIMAL_COLOR: &str = "#1f77b4";

/// Three panels (MSE, squared bias, variance) against the swept parameter.
/// Analytic rows are drawn as lines with markers (open red circles for the
/// unbiased estimator, solid blue for the optimal one); Monte Carlo rows,
/// if any, are overlaid as crosses.
pub fn grid_svg(
    title: &str,
    axis: GridAxis,
    analytic: &[GridRow],
    monte_carlo: &[GridRow],
) -> String {
    let metrics: [(&str, fn(&EstimatorReport) -> f64); 3] = [
        ("MSE", |r| r.mse),
        ("Squared bias", |r| r.bias2),
        ("Variance", |r| r.variance),
    ];
    let width = 3.0 * (PANEL_W + MARGIN_L + MARGIN_R);
    let height = PANEL_H + MARGIN_T + MARGIN_B + 30.0;
    let all: Vec<&GridRow> = analytic.iter().chain(monte_carlo).collect();
    let (x_lo, x_hi) = all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r.axis_value), hi.max(r.axis_value))
        });
    let (x_lo, x_hi) = if x_hi > x_lo {
        (x_lo, x_hi)
    } else {
        (x_lo - 0.5, x_lo + 0.5)
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
        width / 2.0,
        escape(title)
    );

    for (p, (name, metric)) in metrics.iter().enumerate() {
        let ox = p as f64 * (PANEL_W + MARGIN_L + MARGIN_R) + MARGIN_L;
        let oy = MARGIN_T + 10.0;
        let y_max = all
            .iter()
            .flat_map(|r| [metric(&r.unbiased), metric(&r.optimal)])
            .fold(0.0f64, f64::max);
        let y_max = if y_max > 0.0 { y_max * 1.05 } else { 1.0 };
        let px = |x: f64| ox + (x - x_lo) / (x_hi - x_lo) * PANEL_W;
        let py = |y: f64| oy + PANEL_H - y / y_max * PANEL_H;

        let _ = writeln!(svg, r#"<g class="panel" id="panel-{p}">"#);
        let _ = writeln!(
            svg,
            r#"<rect x="{ox}" y="{oy}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{name}</text>"#,
            ox + PANEL_W / 2.0,
            oy - 6.0
        );
        for t in ticks(0.0, y_max) {
            let y = py(t);
            let _ = writeln!(
                svg,
                r#"<line x1="{}" y1="{y:.2}" x2="{ox}" y2="{y:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
                ox - 4.0,
                ox - 6.0,
                y + 4.0,
                fmt_tick(t)
            );
        }
        for t in ticks(x_lo, x_hi) {
            let x = px(t);
            let _ = writeln!(
                svg,
                r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/><text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#,
                oy + PANEL_H,
                oy + PANEL_H + 4.0,
                oy + PANEL_H + 16.0,
                fmt_tick(t)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            ox + PANEL_W / 2.0,
            oy + PANEL_H + 34.0,
            axis.symbol()
        );

        for (color, filled, pick) in [
            (
                UNBIASED_COLOR,
                false,
                (|r: &GridRow| r.unbiased) as fn(&GridRow) -> EstimatorReport,
            ),
            (OPTIMAL_COLOR, true, |r: &GridRow| r.optimal),
        ] {
            if !analytic.is_empty() {
                let points: Vec<String> = analytic
                    .iter()
                    .map(|r| format!("{:.2},{:.2}", px(r.axis_value), py(metric(&pick(r)))))
                    .collect();
                let _ = writeln!(
                    svg,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                    points.join(" ")
                );
                for r in analytic {
                    let fill = if filled { color } else { "white" };
                    let _ = writeln!(
                        svg,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{fill}" stroke="{color}"/>"#,
                        px(r.axis_value),
                        py(metric(&pick(r)))
                    );
                }
            }
            for r in monte_carlo {
                let (x, y) = (px(r.axis_value), py(metric(&pick(r))));
                let _ = writeln!(
                    svg,
                    r#"<path d="M{:.2},{:.2} l6,6 m0,-6 l-6,6" stroke="{color}" fill="none"/>"#,
                    x - 3.0,
                    y - 3.0
                );
            }
        }
        let _ = writeln!(svg, "</g>");
    }

    let ly = height - 12.0;
    let _ = writeln!(
        svg,
        r#"<circle cx="{}" cy="{}" r="3" fill="white" stroke="{UNBIASED_COLOR}"/><text x="{}" y="{}">unbiased</text>"#,
        MARGIN_L,
        ly - 4.0,
        MARGIN_L + 8.0,
        ly
    );
    let _ = writeln!(
        svg,
        r#"<circle cx="{}" cy="{}" r="3" fill="{OPTIMAL_COLOR}" stroke="{OPTIMAL_COLOR}"/><text x="{}" y="{}">optimal</text>"#,
        MARGIN_L + 90.0,
        ly - 4.0,
        MARGIN_L + 98.0,
        ly
    );
    svg.push_str("</svg>\n");
    svg
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    if !(span > 0.0) {
        return vec![lo];
    }
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step + 1e-9).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn fmt_tick(t: f64) -> String {
    let s = format!("{t:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

pub(crate) fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
