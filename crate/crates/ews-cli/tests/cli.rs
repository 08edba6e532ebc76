//! End-to-end checks of the `ews` binary: exit codes, report shapes and
//! byte-identical reruns.

use std::fs;
use std::path::Path;

use assert_cmd::Command;
use predicates::prelude::*;

fn ews() -> Command {
    Command::cargo_bin("ews").unwrap()
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

/// A panel with a drawdown in the price column and two noisy feature
/// columns correlated with the drawdown.
fn toy_panel_csv(n: usize) -> String {
    let mut out = String::from("date,price,returns,f1,f2\n");
    let mut price: f64 = 100.0;
    for i in 0..n {
        // Deterministic pseudo-noise; a crash window in the middle.
        let wiggle = ((i as f64 * 0.7).sin() + (i as f64 * 0.13).cos()) * 0.01;
        let crash = if (n / 2..n / 2 + 8).contains(&i) { -0.06 } else { 0.004 };
        let r = crash + wiggle;
        price *= 1.0 + r;
        let date = chrono::NaiveDate::from_ymd_opt(2015, 1, 1).unwrap()
            + chrono::Duration::days(i as i64);
        let f1 = r * 3.0 + (i as f64 * 0.29).sin() * 0.02;
        let f2 = (i as f64 * 0.41).cos();
        out.push_str(&format!("{date},{price},{r},{f1},{f2}\n"));
    }
    out
}

fn labels_csv(n: usize) -> String {
    let mut out = String::from("date,label\n");
    for i in 0..n {
        let date = chrono::NaiveDate::from_ymd_opt(2015, 1, 1).unwrap()
            + chrono::Duration::days(i as i64);
        let label = u8::from((n / 2..n / 2 + 8).contains(&i));
        out.push_str(&format!("{date},{label}\n"));
    }
    out
}

#[test]
fn missing_data_file_exits_2_with_path() {
    let dir = tempfile::tempdir().unwrap();
    write(
        &dir.path().join("cfg.toml"),
        "[data]\npanel = \"does/not/exist.csv\"\n",
    );
    ews()
        .current_dir(dir.path())
        .args(["--config", "cfg.toml", "classify"])
        .assert()
        .code(2)
        .stderr(predicate::str::contains("does/not/exist.csv"));
}

#[test]
fn missing_config_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    ews()
        .current_dir(dir.path())
        .args(["--config", "nope.toml", "simulate"])
        .assert()
        .code(2)
        .stderr(predicate::str::contains("nope.toml"));
}

#[test]
fn invalid_config_value_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    write(
        &dir.path().join("cfg.toml"),
        "[classifier]\nkind = \"mystery\"\n",
    );
    ews()
        .current_dir(dir.path())
        .args(["--config", "cfg.toml", "simulate"])
        .assert()
        .code(2)
        .stderr(predicate::str::contains("mystery"));
}

#[test]
fn simulate_is_byte_identical_across_reruns() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("cfg.toml"), "[simulate]\nlength = 120\nn_factors = 2\n");
    for out in ["a", "b"] {
        ews()
            .current_dir(dir.path())
            .args(["--config", "cfg.toml", "--out", out, "simulate"])
            .assert()
            .success();
    }
    for file in ["panel.csv", "truth.csv"] {
        let a = fs::read(dir.path().join("a").join(file)).unwrap();
        let b = fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between reruns");
    }
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("cfg.toml"), "[simulate]\nlength = 120\nn_factors = 2\n");
    ews()
        .current_dir(dir.path())
        .args(["--config", "cfg.toml", "--out", "a", "simulate"])
        .assert()
        .success();
    ews()
        .current_dir(dir.path())
        .args(["--config", "cfg.toml", "--out", "b", "--seed", "7", "simulate"])
        .assert()
        .success();
    let a = fs::read(dir.path().join("a/panel.csv")).unwrap();
    let b = fs::read(dir.path().join("b/panel.csv")).unwrap();
    assert_ne!(a, b, "different seeds must change the simulation");
}

#[test]
fn classify_lambda_grid_emits_one_row_per_lambda_with_argmin() {
    let dir = tempfile::tempdir().unwrap();
    let n = 160;
    write(&dir.path().join("panel.csv"), &toy_panel_csv(n));
    write(
        &dir.path().join("cfg.toml"),
        r#"
[data]
panel = "panel.csv"
price_column = "price"

[classifier]
kind = "cmax"
lambda_grid = [0.5, 1.0, 1.5]
cmax_window = 12
bootstrap_b = 5
"#,
    );
    ews()
        .current_dir(dir.path())
        .args(["--config", "cfg.toml", "classify"])
        .assert()
        .success();
    let report = fs::read_to_string(dir.path().join("out/classify_report.csv")).unwrap();
    let rows: Vec<&str> = report.lines().skip(1).collect();
    assert_eq!(rows.len(), 3, "one row per lambda:\n{report}");
    let argmins = rows.iter().filter(|r| r.ends_with(",1")).count();
    assert_eq!(argmins, 1, "exactly one argmin flag:\n{report}");
    assert!(dir.path().join("out/labels_cmax_lambda_1.csv").exists());
}

#[test]
fn train_eval_backtest_report_run_and_rerun_identically() {
    let dir = tempfile::tempdir().unwrap();
    let n = 160;
    write(&dir.path().join("panel.csv"), &toy_panel_csv(n));
    write(&dir.path().join("labels.csv"), &labels_csv(n));
    write(
        &dir.path().join("cfg.toml"),
        r#"
[data]
panel = "panel.csv"
labels = "labels.csv"
price_column = "price"

[predictors]
list = ["stepwise_logit", "gradient_boost", "random_forest"]
rf_trees = 20
gbt_rounds = 20

[backtest]
assets = ["returns", "f2"]
vol_window = 20
bootstrap_b = 50
"#,
    );
    for out in ["a", "b"] {
        for cmd in ["train-eval", "backtest", "report"] {
            ews()
                .current_dir(dir.path())
                .args(["--config", "cfg.toml", "--out", out, cmd])
                .assert()
                .success();
        }
    }
    for file in [
        "eval_report.csv",
        "eval_report.txt",
        "forecast_gradient_boost.csv",
        "importance_random_forest.csv",
        "backtest_table.csv",
        "reality_check.csv",
        "track_buy_and_hold_g2.csv",
        "report.txt",
    ] {
        let a = fs::read(dir.path().join("a").join(file)).unwrap();
        let b = fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between reruns");
    }

    let eval = fs::read_to_string(dir.path().join("a/eval_report.csv")).unwrap();
    assert_eq!(eval.lines().count(), 4, "header plus one row per predictor");
    let table = fs::read_to_string(dir.path().join("a/backtest_table.csv")).unwrap();
    assert!(table.starts_with("strategy,metric,gamma_1,gamma_2,gamma_3"));
    let rc = fs::read_to_string(dir.path().join("a/reality_check.csv")).unwrap();
    // classifier-only benchmark compared for each gamma.
    assert_eq!(rc.lines().count(), 4);
    let report = fs::read_to_string(dir.path().join("a/report.txt")).unwrap();
    assert!(report.contains("== forecast evaluation"));
    assert!(report.contains("== back-test"));
}

#[test]
fn single_cell_report_has_one_row_and_failures_are_isolated() {
    let dir = tempfile::tempdir().unwrap();
    let n = 120;
    write(&dir.path().join("panel.csv"), &toy_panel_csv(n));
    write(&dir.path().join("labels.csv"), &labels_csv(n));
    // attn_lstm is configured with an impossible window so its cell fails;
    // the logit cell must still be reported.
    write(
        &dir.path().join("cfg.toml"),
        r#"
[data]
panel = "panel.csv"
labels = "labels.csv"
price_column = "price"

[predictors]
list = ["stepwise_logit", "attn_lstm"]
attn_t_steps = 5000
"#,
    );
    ews()
        .current_dir(dir.path())
        .args(["--config", "cfg.toml", "train-eval"])
        .assert()
        .success()
        .stderr(predicate::str::contains("cell=attn_lstm status=failed"));
    let eval = fs::read_to_string(dir.path().join("out/eval_report.csv")).unwrap();
    assert_eq!(eval.lines().count(), 2, "header plus the surviving cell");
    assert!(eval.contains("stepwise_logit"));
}

#[test]
fn output_panel_round_trips_through_the_loader() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("cfg.toml"), "[simulate]\nlength = 100\nn_factors = 2\n");
    ews()
        .current_dir(dir.path())
        .args(["--config", "cfg.toml", "simulate"])
        .assert()
        .success();
    let panel = ews_core::frame::FactorPanel::load_csv(
        dir.path().join("out/panel.csv"),
        ews_core::frame::Frequency::Daily,
    )
    .unwrap();
    assert_eq!(panel.len(), 100);
    assert_eq!(panel.to_csv_string(), fs::read_to_string(dir.path().join("out/panel.csv")).unwrap());
}
