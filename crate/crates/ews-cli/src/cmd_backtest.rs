//! `ews backtest`: run the buy-and-hold benchmark, the classifier-only
//! benchmark and (when a forecast file is configured) the warning-driven
//! strategy over each risk-aversion level, then compare realized variances
//! with the bootstrap reality check.

use indexmap::IndexMap;
use std::path::Path;

use ews_core::backtest::{
    reality_check, run_backtest, sharpe_and_cer, PortfolioTrack, Strategy,
};

use crate::config::ExperimentConfig;
use crate::pipeline::{build_labels, load_panel};
use crate::{write_file, CliError};

fn load_forecast_csv(path: &Path, max_len: usize) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
    let mut probs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let field = line.split(',').nth(1).ok_or_else(|| {
            CliError::Runtime(format!(
                "{}: line {} has no probability field",
                path.display(),
                i + 1
            ))
        })?;
        let p: f64 = field.trim().parse().map_err(|_| {
            CliError::Runtime(format!(
                "{}: line {}: bad probability {field:?}",
                path.display(),
                i + 1
            ))
        })?;
        probs.push(p);
    }
    if probs.len() < 2 || probs.len() > max_len {
        return Err(CliError::Runtime(format!(
            "{}: {} forecasts cannot align with a {max_len}-row asset panel",
            path.display(),
            probs.len()
        )));
    }
    Ok(probs)
}

pub fn run(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let panel = load_panel(cfg)?;
    if cfg.backtest.assets.is_empty() {
        return Err(CliError::Config("backtest.assets must list at least one column".into()));
    }
    let asset_names: Vec<&str> = cfg.backtest.assets.iter().map(|s| s.as_str()).collect();
    let mut assets = panel.select(&asset_names)?;
    let labels = build_labels(cfg, &panel)?;
    let mut crisis = labels.labels.clone();

    let mut strategies: Vec<Strategy> = vec![Strategy::BuyAndHold];
    if let Some(path) = &cfg.backtest.forecast {
        let path = cfg.require_file("backtest.forecast", Some(path))?;
        let probs = load_forecast_csv(path, assets.len())?;
        // A forecast file shorter than the panel (the usual case: it covers
        // the out-of-sample window) restricts the whole back-test to the
        // trailing window it spans.
        let start = assets.len() - probs.len();
        if start > 0 {
            assets = assets.slice(start, assets.len());
            crisis = crisis[start..].to_vec();
        }
        let mut map = IndexMap::new();
        for name in &cfg.backtest.assets {
            map.insert(name.clone(), probs.clone());
        }
        strategies.push(Strategy::Forecasts(map));
    }
    strategies.push(Strategy::ClassifierOnly(crisis));

    // One track per (strategy, gamma); Sharpe/CER in wide form with one
    // column per risk-aversion level.
    let gammas = &cfg.backtest.gammas;
    let mut tracks: Vec<(String, u8, PortfolioTrack)> = Vec::new();
    let mut sharpe_rows: Vec<(String, Vec<Option<f64>>, Vec<f64>)> = Vec::new();
    for strategy in &strategies {
        let mut sharpes = Vec::new();
        let mut cers = Vec::new();
        for &gamma in gammas {
            let track = run_backtest(&assets, strategy, gamma, cfg.backtest.vol_window)?;
            let (sharpe, cer) = sharpe_and_cer(&track)?;
            sharpes.push(sharpe);
            cers.push(cer);
            write_file(
                &cfg.run
                    .out_dir
                    .join(format!("track_{}_g{gamma}.csv", strategy.name())),
                &track.to_csv_string(),
            )?;
            tracks.push((strategy.name().to_string(), gamma, track));
        }
        sharpe_rows.push((strategy.name().to_string(), sharpes, cers));
    }

    let mut table = String::from("strategy,metric");
    for g in gammas {
        table.push_str(&format!(",gamma_{g}"));
    }
    table.push('\n');
    for (name, sharpes, cers) in &sharpe_rows {
        table.push_str(&format!("{name},sharpe"));
        for s in sharpes {
            table.push_str(&format!(
                ",{}",
                s.map(|v| v.to_string()).unwrap_or_else(|| "—".into())
            ));
        }
        table.push('\n');
        table.push_str(&format!("{name},cer"));
        for c in cers {
            table.push_str(&format!(",{c}"));
        }
        table.push('\n');
    }
    write_file(&cfg.run.out_dir.join("backtest_table.csv"), &table)?;

    // Reality check of every non-benchmark strategy against buy-and-hold.
    let mut rc = String::from("candidate,benchmark,gamma,statistic,p_value,resamples,block_parameter\n");
    for (i, (name, gamma, track)) in tracks.iter().enumerate() {
        if name == "buy_and_hold" {
            continue;
        }
        let bench = tracks
            .iter()
            .find(|(n, g, _)| n == "buy_and_hold" && g == gamma)
            .expect("buy-and-hold track exists for every gamma");
        let result = reality_check(
            track,
            &bench.2,
            cfg.backtest.bootstrap_b,
            cfg.backtest.block_parameter,
            cfg.run.seed.wrapping_add(7700 + i as u64),
        )?;
        rc.push_str(&format!(
            "{name},buy_and_hold,{gamma},{},{},{},{}\n",
            result.statistic, result.p_value, result.b, result.block_parameter
        ));
        eprintln!(
            "stage=backtest candidate={name} gamma={gamma} p_value={}",
            result.p_value
        );
    }
    write_file(&cfg.run.out_dir.join("reality_check.csv"), &rc)
}
