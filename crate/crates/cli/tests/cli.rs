use std::collections::HashMap;
use std::path::Path;
use std::process::{Command, Output};

use efficiency::{coverage_binomial, f_exact, Method};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_efficiency")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Data rows of CSV output as column -> value maps.
fn rows(csv_text: &str) -> Vec<HashMap<String, String>> {
    let body: String = csv_text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let header: Vec<String> = r.headers().unwrap().iter().map(str::to_owned).collect();
    r.records()
        .map(|rec| header.iter().cloned().zip(rec.unwrap().iter().map(str::to_owned)).collect())
        .collect()
}

fn num(row: &HashMap<String, String>, col: &str) -> f64 {
    row[col].parse().unwrap_or_else(|_| panic!("{col} = {:?}", row[col]))
}

#[test]
fn wilson_interval() {
    let r = rows(&ok(&["interval", "--method", "wilson", "--k", "5", "--n", "10", "--level", "0.6827"]));
    assert_eq!(r.len(), 1);
    assert!((num(&r[0], "lower") - 0.3492).abs() < 5e-5);
    assert!((num(&r[0], "upper") - 0.6508).abs() < 5e-5);
    assert_eq!(r[0]["method"], "wilson");
    assert_eq!(r[0]["clipped"], "false");
}

#[test]
fn clopper_pearson_at_zero() {
    let r = rows(&ok(&["interval", "--method", "clopper-pearson", "--k", "0", "--n", "10", "--level", "0.95"]));
    assert_eq!(num(&r[0], "lower"), 0.0);
    assert!((num(&r[0], "upper") - 0.3085).abs() < 5e-5);
}

#[test]
fn extra_without_background_is_wilson() {
    let e = rows(&ok(&["interval", "--method", "wilson-extra", "--n1", "8", "--n2", "2", "--var1", "8", "--var2", "2", "--level", "0.6827"]));
    let w = rows(&ok(&["interval", "--method", "wilson", "--k", "8", "--n", "10", "--level", "0.6827"]));
    for col in ["lower", "upper", "p_hat"] {
        assert!((num(&e[0], col) - num(&w[0], col)).abs() < 1e-8, "{col}");
    }
}

#[test]
fn weighted_from_events_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.csv");
    std::fs::write(&path, "weight,success\n1,1\n1,0\n1,1\n1,1\n").unwrap();
    let from_file = rows(&ok(&["interval", "--method", "wilson-weighted", "--events", path.to_str().unwrap()]));
    let from_summary = rows(&ok(&["interval", "--method", "wilson-weighted", "--p-hat", "0.75", "--n-eff", "4"]));
    assert_eq!(num(&from_file[0], "n_eff"), 4.0);
    for col in ["lower", "upper", "p_hat"] {
        assert_eq!(from_file[0][col], from_summary[0][col]);
    }
}

#[test]
fn wilson_poisson_modes() {
    let a = rows(&ok(&["interval", "--method", "wilson-poisson:large-n", "--k", "5", "--n", "10"]));
    let b = rows(&ok(&["interval", "--method", "wilson-poisson", "--fn-mode", "large-n", "--k", "5", "--n", "10"]));
    assert_eq!(a[0]["lower"], b[0]["lower"]);
    assert_eq!(a[0]["method"], "wilson-poisson:large-n");
}

#[test]
fn fn_table_rows() {
    let r = rows(&ok(&["fn-table", "--n-grid", "0.5,3,100"]));
    assert_eq!(r.len(), 3);
    assert_eq!(num(&r[0], "f_small_n"), 0.4375);
    assert!((num(&r[1], "f_exact") - 1.298).abs() < 1e-3);
    for col in ["f_exact", "f_large_n", "f_approx"] {
        assert!((num(&r[2], col) / 1.010206 - 1.0).abs() < 2e-3, "{col}");
    }
    let default = rows(&ok(&["fn-table"]));
    assert_eq!(default.len(), 400);
}

#[test]
fn clopper_pearson_never_undercovers() {
    let r = rows(&ok(&[
        "coverage", "--method", "clopper-pearson", "--sampling", "binomial", "--level", "0.6827", "--n-grid", "1:40:40", "--p-grid", "0.01:0.99:50",
    ]));
    assert_eq!(r.len(), 40 * 50);
    let min = r.iter().map(|row| num(row, "deviation")).fold(f64::INFINITY, f64::min);
    assert!(min >= 0.0, "{min}");
}

#[test]
fn single_cell_matches_library() {
    let r = rows(&ok(&["coverage", "--method", "wilson", "--sampling", "binomial", "--p-grid", "0.37", "--n-grid", "23"]));
    let lib = coverage_binomial(Method::Wilson, 0.37, 23, 0.6827).unwrap();
    assert_eq!(r[0]["coverage"], efficiency_cli::output::format_number(lib));
    assert_eq!(r[0]["error"], "");
}

#[test]
fn coverage_errors_stay_in_their_cells() {
    let r = rows(&ok(&["coverage", "--method", "wilson", "--sampling", "binomial", "--p-grid", "0.5", "--n-grid", "10,2.5"]));
    assert_eq!(r[0]["error"], "");
    assert_eq!(r[1]["coverage"], "");
    assert!(!r[1]["error"].is_empty());
}

#[test]
fn average_coverage_rows() {
    let r = rows(&ok(&["coverage", "--method", "wilson,clopper-pearson", "--average", "--n-grid", "5,10"]));
    assert_eq!(r.len(), 4);
    assert_eq!(r[2]["method"], "clopper-pearson");
    assert!(num(&r[2], "average_coverage") > 0.6827);
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

#[test]
fn seeded_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let args = |out: &Path, threads: &str| {
        vec![
            "coverage".to_owned(),
            "--method".into(),
            "wilson-weighted,wilson-extra,wilson".into(),
            "--dist".into(),
            "exp:5".into(),
            "--bkg".into(),
            "0.2".into(),
            "--n-grid".into(),
            "10,40".into(),
            "--p-grid".into(),
            "0.2,0.5".into(),
            "--reps".into(),
            "3000".into(),
            "--seed".into(),
            "42".into(),
            "--threads".into(),
            threads.into(),
            "--output".into(),
            out.to_str().unwrap().into(),
        ]
    };
    let a_args = args(&a, "1");
    let b_args = args(&b, "3");
    ok(&a_args.iter().map(String::as_str).collect::<Vec<_>>());
    ok(&b_args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(read(&a), read(&b));
    let text = String::from_utf8(read(&a)).unwrap();
    assert!(text.contains("# seed: 42\n"));
    assert!(text.contains("mc:3000:42"));
    assert!(!text.contains("--threads"));
}

#[test]
fn csv_and_json_encode_the_same_values() {
    let args = ["simulate", "extra", "--n", "200", "--bkg", "0.2", "--reps", "10000", "--seed", "5", "--p-grid", "0.2,0.7"];
    let csv_rows = rows(&ok(&args));
    let mut json_args = args.to_vec();
    json_args.extend(["--format", "json"]);
    let json = ok(&json_args);
    let lines: Vec<serde_json::Value> = json.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines[0]["metadata"]["seed"], 5);
    assert_eq!(lines.len(), csv_rows.len() + 1);
    for (row, obj) in csv_rows.iter().zip(&lines[1..]) {
        for (col, text) in row {
            let v = &obj[col];
            match text.parse::<f64>() {
                Ok(x) => assert_eq!(v.as_f64(), Some(x), "{col}"),
                Err(_) => assert_eq!(v.as_str(), Some(text.as_str()), "{col}"),
            }
        }
    }
}

#[test]
fn metadata_header() {
    let text = ok(&["fn-table", "--n-grid", "1"]);
    for key in ["# tool: efficiency ", "# command: efficiency fn-table --n-grid 1", "# seed: 0", "# poisson_truncation_tail: 1e-10", "# n_hat_zero: "] {
        assert!(text.contains(key), "{key}");
    }
    assert!(text.contains("n,f_exact,f_large_n,f_small_n,f_approx\n"));
}

#[test]
fn simulate_weighted_ratios() {
    let r = rows(&ok(&["simulate", "weighted", "--dist", "exp:5", "--n", "100", "--p", "0.5", "--reps", "100000", "--seed", "1"]));
    assert_eq!(r[0]["dist"], "exp:5");
    assert!((num(&r[0], "ratio_large_n_eff") - 1.0).abs() < 0.05);
    assert!(num(&r[0], "ratio_unity") < num(&r[0], "ratio_large_n_eff"));
}

#[test]
fn simulate_xdep_mean() {
    let r = rows(&ok(&["simulate", "xdep", "--n", "10000", "--reps", "1000", "--seed", "7"]));
    let (mean, se) = (num(&r[0], "mean_p_hat"), num(&r[0], "p_hat_se"));
    assert!((mean - 0.8).abs() < 5.0 * se, "{mean} +- {se}");
    assert!((num(&r[0], "p_bar") - 0.8).abs() < 1e-8);
}

#[test]
fn simulate_xdep_bias_curve() {
    let r = rows(&ok(&["simulate", "xdep", "--n", "2,20,200", "--reps", "2000", "--bias-only", "--seed", "7"]));
    assert_eq!(r.len(), 3);
    assert!(num(&r[0], "mean_p_hat") < num(&r[2], "mean_p_hat"));
}

#[test]
fn simulate_extra_formula() {
    let r = rows(&ok(&["simulate", "extra", "--n", "1000", "--bkg", "0.2", "--reps", "10000", "--seed", "3"]));
    assert_eq!(r.len(), 9);
    for row in &r {
        let ratio = num(row, "ratio_formula");
        assert!((0.9..=1.1).contains(&ratio), "p = {}: {ratio}", row["p"]);
    }
}

#[test]
fn exit_codes() {
    let code = |args: &[&str]| run(args).status.code().unwrap();
    assert_eq!(code(&["interval", "--method", "wilson", "--k", "5", "--n", "10"]), 0);
    assert_eq!(code(&["interval", "--method", "wilson", "--k", "11", "--n", "10"]), 2);
    assert_eq!(code(&["interval", "--method", "wilsen", "--k", "1", "--n", "10"]), 2);
    assert_eq!(code(&["interval", "--method", "wilson"]), 2);
    assert_eq!(code(&["fn-table", "--n-grid", "1:x:3"]), 2);
    assert_eq!(code(&["simulate", "weighted", "--dist", "gamma:3", "--n", "10", "--p", "0.5", "--reps", "100"]), 2);
    assert_eq!(code(&["coverage", "--method", "wilson-weighted", "--dist", "exp:5", "--n-grid", "10"]), 2);
    assert_eq!(code(&["nonsense"]), 2);
    assert_eq!(code(&["interval", "--method", "wilson", "--k", "0", "--n", "0"]), 3);
    assert_eq!(code(&["interval", "--method", "wilson-extra", "--n1", "8", "--n2", "2", "--var1", "1", "--var2", "2"]), 3);
    assert_eq!(code(&["simulate", "weighted", "--dist", "exp:5", "--n", "10", "--p", "0.5", "--reps", "10"]), 3);
    let out = run(&["interval", "--method", "wilson", "--k", "0", "--n", "0"]);
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
}

#[test]
fn f_exact_column_matches_library() {
    let r = rows(&ok(&["fn-table", "--n-grid", "0.1:100:7:log"]));
    for row in &r {
        let n = num(row, "n");
        let lib = f_exact(n, 1e-12).unwrap();
        assert!((num(row, "f_exact") / lib - 1.0).abs() < 1e-8);
    }
}
