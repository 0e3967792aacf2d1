use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use metafx_cli::ingest::Ingested;
use metafx_cli::report::{analyze, Report};
use metafx_cli::{examples, run};

fn metafx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_metafx"))
        .args(args)
        .env_remove("NO_COLOR")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 output")
}

fn golden_path(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(format!("{name}.txt"))
}

#[test]
fn examples_match_golden_text() {
    for name in examples::names() {
        let first = metafx(&["example", name]);
        assert!(
            first.status.success(),
            "{name}: {}",
            String::from_utf8_lossy(&first.stderr)
        );
        let second = metafx(&["example", name]);
        assert_eq!(
            first.stdout, second.stdout,
            "{name} output differs between runs"
        );
        let golden = fs::read_to_string(golden_path(name)).expect("golden file present");
        assert_eq!(
            stdout(&first),
            golden,
            "{name} differs from its golden file"
        );
    }
}

#[test]
fn piped_output_has_no_ansi() {
    let out = metafx(&["example", "ding2018"]);
    assert!(!stdout(&out).contains('\x1b'));
}

#[test]
fn color_flag_controls_styling() {
    let mut styled = Vec::new();
    let mut err = Vec::new();
    assert_eq!(
        run(
            ["metafx", "example", "ding2018"],
            &mut styled,
            &mut err,
            true
        ),
        0
    );
    assert!(String::from_utf8(styled).unwrap().contains("\x1b[1m"));
    let mut plain = Vec::new();
    assert_eq!(
        run(
            ["metafx", "example", "ding2018"],
            &mut plain,
            &mut err,
            false
        ),
        0
    );
    assert!(!String::from_utf8(plain).unwrap().contains('\x1b'));
}

#[test]
fn ding_text_shows_pooled_rows() {
    let text = stdout(&metafx(&["example", "ding2018"]));
    assert_eq!(text.matches('■').count(), 2);
    assert_eq!(text.matches('◆').count(), 5);
    assert!(text.contains("Random effects (DL)"));
    let common = text
        .lines()
        .find(|l| l.starts_with("Common effect"))
        .unwrap();
    assert!(common.contains("0.77"), "{common}");
    let lm = text
        .lines()
        .find(|l| l.starts_with("Fixed, unweighted (L-M)"))
        .unwrap();
    assert!(lm.contains("0.52"), "{lm}");
    assert!(text.contains("I² = 96.3%"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    let out = metafx(&["analyze", "--input", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());

    assert_eq!(
        metafx(&["simulate", "--grid", "k2-d", "--replicates", "0"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        metafx(&["simulate", "--grid", "k9-z", "--replicates", "5"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(metafx(&["example", "nope"]).status.code(), Some(1));
    assert_eq!(
        metafx(&["example", "ding2018", "--level", "1.5"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        metafx(&["example", "ding2018", "--models", "bogus"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(metafx(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(metafx(&[]).status.code(), Some(1));
    assert_eq!(metafx(&["--help"]).status.code(), Some(0));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "study,effect,se\nA,1,0.1\nB,x,0.2\n").unwrap();
    let out = metafx(&["analyze", "--input", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let one = dir.path().join("one.csv");
    fs::write(&one, "study,effect,se\nA,1,0.1\n").unwrap();
    assert_eq!(
        metafx(&["analyze", "--input", one.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );

    let mixed = dir.path().join("mixed.csv");
    fs::write(&mixed, "study,effect,se,var\nA,1,0.1,0.01\nB,2,0.1,\n").unwrap();
    assert_eq!(
        metafx(&["analyze", "--input", mixed.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );

    let ratio = dir.path().join("ratio.csv");
    fs::write(&ratio, "study,effect,se\nA,-1,0.1\nB,2,0.1\n").unwrap();
    let out = metafx(&[
        "analyze",
        "--input",
        ratio.to_str().unwrap(),
        "--scale",
        "log",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn analyze_single_model_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("two.csv");
    fs::write(&input, "study,effect,se,n\nA,1,1,20\nB,3,1,30\n").unwrap();
    let out = metafx(&[
        "analyze",
        "--input",
        input.to_str().unwrap(),
        "--models",
        "fixed-unweighted",
        "--format",
        "json",
    ]);
    assert!(out.status.success());
    let report = Report::from_json(&stdout(&out)).unwrap();
    assert_eq!(report.pooled.len(), 1);
    assert_eq!(report.pooled[0].estimate, 2.0);
    assert_eq!(report.studies[1].n, Some(30));
}

#[test]
fn json_round_trip_reproduces_pooled_estimates() {
    for name in examples::names() {
        for tau2 in ["dl", "pm"] {
            let out = metafx(&["example", name, "--format", "json", "--tau2", tau2]);
            assert!(out.status.success());
            let report = Report::from_json(&stdout(&out)).unwrap();
            let again = analyze(
                &Ingested::from_dataset(report.dataset().unwrap()),
                &report.config(),
            )
            .unwrap();
            assert_eq!(again.pooled.len(), report.pooled.len());
            for (a, b) in again.pooled.iter().zip(&report.pooled) {
                for (x, y) in [
                    (a.estimate, b.estimate),
                    (a.variance, b.variance),
                    (a.ci_low, b.ci_low),
                    (a.ci_high, b.ci_high),
                ] {
                    assert_eq!(x.to_bits(), y.to_bits(), "{name} {:?}", a.model);
                }
                assert_eq!(a.tau2.map(f64::to_bits), b.tau2.map(f64::to_bits));
            }
        }
    }
}

#[test]
fn display_scale_matches_exponentiated_bounds() {
    for name in ["ding2018", "armitage2019"] {
        let report =
            Report::from_json(&stdout(&metafx(&["example", name, "--format", "json"]))).unwrap();
        let text = stdout(&metafx(&["example", name]));
        for p in &report.pooled {
            let (lo, hi) = (
                format!("{:.2}", p.ci_low.exp()),
                format!("{:.2}", p.ci_high.exp()),
            );
            assert_eq!(lo, format!("{:.2}", p.display.low));
            assert_eq!(hi, format!("{:.2}", p.display.high));
            let line = text.lines().find(|l| l.starts_with(&p.label)).unwrap();
            assert!(line.contains(&format!("[{lo}, {hi}]")), "{line}");
            assert!(line.contains(&format!("{:.2}", p.estimate.exp())), "{line}");
        }
    }
}

fn attr(node: roxmltree::Node, name: &str) -> f64 {
    node.attribute(name).unwrap().parse().unwrap()
}

#[test]
fn svg_forest_is_valid_with_null_line_at_no_effect() {
    for (name, null_label) in [
        ("ding2018", "1"),
        ("armitage2019", "1"),
        ("shrestha2019-2", "0"),
        ("shrestha2019-3", "0"),
    ] {
        let out = metafx(&["example", name, "--format", "svg"]);
        assert!(out.status.success());
        let text = stdout(&out);
        let doc = roxmltree::Document::parse(&text).expect("well-formed SVG");
        let root = doc.root_element();
        assert_eq!(root.tag_name().name(), "svg");
        assert_eq!(root.attribute("version"), Some("1.1"));

        let null = doc
            .descendants()
            .find(|n| n.attribute("id") == Some("null-line"))
            .expect("null line");
        assert_eq!(attr(null, "x1"), attr(null, "x2"));
        let tick = doc
            .descendants()
            .find(|n| n.attribute("class") == Some("tick") && n.text() == Some(null_label))
            .expect("tick at the null value");
        assert_eq!(attr(tick, "x"), attr(null, "x1"), "{name}");

        let ex = examples::find(name).unwrap();
        let k = ex.ingest().unwrap().dataset.k();
        let squares: Vec<_> = doc
            .descendants()
            .filter(|n| n.attribute("class") == Some("study"))
            .collect();
        assert_eq!(squares.len(), k);
        let diamonds = doc
            .descendants()
            .filter(|n| n.attribute("class") == Some("pooled"))
            .count();
        assert_eq!(diamonds, 5);
    }
}

#[test]
fn svg_squares_grow_with_weight() {
    let text = stdout(&metafx(&[
        "example",
        "armitage2019",
        "--format",
        "svg",
        "--models",
        "common",
    ]));
    let doc = roxmltree::Document::parse(&text).unwrap();
    let sides: Vec<f64> = doc
        .descendants()
        .filter(|n| n.attribute("class") == Some("study"))
        .map(|n| attr(n, "width"))
        .collect();
    // study 3 carries about 92% of the common-effect weight
    assert!(sides[2] > sides[0] && sides[2] > sides[1], "{sides:?}");
}

#[test]
fn csv_report_has_full_precision_rows() {
    let out = metafx(&[
        "example",
        "shrestha2019-3",
        "--format",
        "csv",
        "--models",
        "common,optimal",
    ]);
    assert!(out.status.success());
    let mut rdr = csv::Reader::from_reader(out.stdout.as_slice());
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.iter().filter(|r| &r[0] == "study").count(), 6);
    assert_eq!(rows.iter().filter(|r| &r[0] == "pooled").count(), 2);
    let optimal = rows
        .iter()
        .find(|r| &r[0] == "pooled" && &r[2] == "fixed-optimal")
        .unwrap();
    let est: f64 = optimal[3].parse().unwrap();
    assert!((est - (-1.452)).abs() < 1e-3);
    assert!(optimal[3].len() > 8);
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let out = metafx(&[
        "example",
        "ding2018",
        "--format",
        "json",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    Report::from_json(&fs::read_to_string(path).unwrap()).unwrap();
}

#[test]
fn simulate_csv_has_analytic_and_monte_carlo_rows() {
    let out = metafx(&[
        "simulate",
        "--grid",
        "k2-d",
        "--replicates",
        "200",
        "--seed",
        "3",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("axis_value,estimator,mse,bias2,variance,method")
    );
    let rows: Vec<&str> = lines.collect();
    // 41 grid points × 2 estimators × 2 methods
    assert_eq!(rows.len(), 164);
    assert_eq!(rows.iter().filter(|l| l.ends_with(",analytic")).count(), 82);
    assert_eq!(
        rows.iter().filter(|l| l.ends_with(",monte_carlo")).count(),
        82
    );
    let again = metafx(&[
        "simulate",
        "--grid",
        "k2-d",
        "--replicates",
        "200",
        "--seed",
        "3",
    ]);
    assert_eq!(out.stdout, again.stdout);
}

#[test]
fn simulate_svg_is_valid() {
    let out = metafx(&[
        "simulate",
        "--grid",
        "k3-r",
        "--replicates",
        "100",
        "--format",
        "svg",
        "--step",
        "1",
    ]);
    assert!(out.status.success());
    roxmltree::Document::parse(&stdout(&out)).expect("well-formed SVG");
}

#[test]
fn example_list_names_all_datasets() {
    let text = stdout(&metafx(&["example", "--list"]));
    for name in examples::names() {
        assert!(text.contains(name));
    }
}
