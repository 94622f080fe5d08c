use std::process::{Command, Output};

fn riskdiv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riskdiv"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn single_loading() {
    let o = riskdiv(&[
        "loading",
        "--model",
        "iid",
        "--N",
        "1",
        "--p",
        "0.1667",
        "--measure",
        "var",
    ]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "3.000\n");
}

#[test]
fn fraction_probabilities_and_shock_models() {
    let o = riskdiv(&[
        "loading", "--model", "shock", "--N", "1", "--p", "1/6", "--ptilde", "0.001",
    ]);
    assert_eq!(stdout(&o), "2.997\n");
    let o = riskdiv(&[
        "loading",
        "--model",
        "crisis",
        "--N",
        "100",
        "--ptilde",
        "0.1",
        "--measure",
        "tvar",
        "--convention",
        "quantile",
    ]);
    assert_eq!(stdout(&o), "1.358\n");
}

#[test]
fn simulated_loading_reports_standard_error() {
    let o = riskdiv(&[
        "loading", "--model", "crisis", "--N", "10", "--ptilde", "0.05", "--mc", "--sims", "50000",
        "--seed", "1",
    ]);
    assert!(o.status.success());
    let line = stdout(&o);
    let fields: Vec<&str> = line.trim().split(',').collect();
    assert_eq!(fields.len(), 2, "{line}");
    assert!(fields[1].parse::<f64>().unwrap() >= 0.0);
}

#[test]
fn table_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t1.csv");
    let o = riskdiv(&["table", "--id", "T1", "--output", path.to_str().unwrap()]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("k,policy_loss,pmf,cdf\n"));
    assert!(text.contains("\n1,10,0.40188,0.73678\n"));
    let o = riskdiv(&["verify", "--id", "T1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn verify_exact_tables_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.csv");
    let o = riskdiv(&[
        "verify",
        "--id",
        "T2,T3,T4",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let report = std::fs::read_to_string(&path).unwrap();
    // header plus one line per reference cell
    assert_eq!(report.lines().count(), 1 + 45 + 75 + 85);
    assert_eq!(report.matches(",flagged,").count(), 1 + 3 + 5);
    let again = riskdiv(&["verify", "--id", "T2,T3,T4"]);
    assert_eq!(stdout(&again), stdout(&o));
}

#[test]
fn verify_fails_when_parameters_change() {
    let o = riskdiv(&["--eta", "0.2", "verify", "--id", "T2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("UNEXPECTED"));
}

#[test]
fn usage_errors_exit_2() {
    let o = riskdiv(&["loading", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(riskdiv(&["table", "--id", "T9"]).status.code(), Some(2));
    assert_eq!(riskdiv(&["loading", "--p", "1.5"]).status.code(), Some(2));
    assert_eq!(riskdiv(&["--alpha", "1", "loading"]).status.code(), Some(2));
}

#[test]
fn support_guard_from_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_riskdiv"))
        .args(["loading", "--N", "1000"])
        .env("RISKDIV_MAX_SUPPORT", "100")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("6000") && err.contains("100"), "{err}");
}

#[test]
fn json_rows_use_csv_headers() {
    let o = riskdiv(&["--format", "json", "table", "--id", "T2", "--N", "1,10"]);
    assert!(o.status.success());
    let rows: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let first = rows[0].as_object().unwrap();
    let keys: Vec<&str> = first.keys().map(String::as_str).collect();
    assert_eq!(keys, ["measure", "N", "p=1/6", "p=1/4", "p=1/2"]);
    assert_eq!(first["p=1/6"], serde_json::json!(3.0));
    assert_eq!(rows.as_array().unwrap().len(), 5);
}

#[test]
fn zero_crisis_sweep_matches_iid_column() {
    let sweep = stdout(&riskdiv(&["sweep", "--model", "shock", "--ptilde", "0"]));
    let iid = stdout(&riskdiv(&["table", "--id", "T2"]));
    let first_three = |s: &str| -> Vec<String> {
        s.lines()
            .skip(1)
            .map(|l| l.split(',').take(3).collect::<Vec<_>>().join(","))
            .collect()
    };
    assert_eq!(first_three(&sweep), first_three(&iid));
}

#[test]
fn simulate_is_reproducible() {
    let args = [
        "simulate",
        "--model",
        "crisis",
        "--N",
        "100",
        "--ptilde",
        "0.001",
        "--sims",
        "200000",
        "--seed",
        "42",
        "--block-size",
        "7000",
    ];
    let a = riskdiv(&args);
    let b = riskdiv(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert!(text.starts_with("count,tally\n"));
    let total: u64 = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(total, 200_000);
}

#[test]
fn distribution_output() {
    let o = riskdiv(&["dist", "--N", "1"]);
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "k,loss,pmf,cdf");
    assert_eq!(lines.len(), 8);
    assert!(lines[7].starts_with("6,60,"));
}

#[test]
fn converge_small_budgets() {
    let o = riskdiv(&[
        "converge",
        "--sims",
        "20000,40000",
        "--ptilde",
        "0,0.1",
        "--seed",
        "3",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "measure,sims,ptilde=0,ptilde=0.1");
    assert_eq!(lines.len(), 6);
    assert!(lines[1].starts_with("VaR,20000,"));
    assert!(lines[5].starts_with("E[L]/N,,10.00,12.00"));
}
