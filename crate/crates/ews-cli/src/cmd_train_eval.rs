//! `ews train-eval`: fit every configured predictor on the in-sample window,
//! forecast the out-of-sample window, score each cell and emit the
//! evaluation grid with its screening summary. Cell failures are isolated:
//! a predictor that errors is logged and skipped, the rest proceed.

use indexmap::IndexMap;

use ews_core::classify::CrisisLabels;
use ews_core::evaluate::{assemble_report, calibration, hit_ratios, ReportCell};
use ews_core::frame::{standardize, FactorPanel, SplitSpec};
use ews_core::predict::{
    attn_importance, fit_attn_lstm, fit_gradient_boost, fit_klr, fit_mlp, fit_random_forest,
    fit_stepwise_logit, gbt_importance, mlp_importance, rf_importance, ForecastSeries,
    ImportanceTable,
};
use ews_core::Result as EwsResult;

use crate::config::ExperimentConfig;
use crate::pipeline::{build_labels, load_panel, sanitize};
use crate::{write_file, CliError};

/// Columns never used as predictor features.
fn feature_panel(cfg: &ExperimentConfig, panel: &FactorPanel) -> Result<FactorPanel, CliError> {
    let reserved: Vec<&str> = [
        Some(cfg.data.return_column.as_str()),
        cfg.data.price_column.as_deref(),
        cfg.data.exchange_column.as_deref(),
        cfg.data.reserves_column.as_deref(),
        cfg.data.rate_column.as_deref(),
    ]
    .into_iter()
    .flatten()
    .collect();
    let keep: Vec<&str> = panel.names().filter(|n| !reserved.contains(n)).collect();
    if keep.is_empty() {
        return Err(CliError::Config(
            "panel has no feature columns beyond the reserved series".into(),
        ));
    }
    panel.select(&keep).map_err(CliError::from)
}

fn fit_cell(
    kind: &str,
    cfg: &ExperimentConfig,
    train: &FactorPanel,
    test: &FactorPanel,
    labels_train: &CrisisLabels,
    seed: u64,
) -> EwsResult<(Vec<f64>, ImportanceTable)> {
    let p = &cfg.predictors;
    match kind {
        "stepwise_logit" => {
            let m = fit_stepwise_logit(train, labels_train, p.logit_alpha)?;
            Ok((m.probabilities(test)?, m.importance()))
        }
        "klr" => {
            let m = fit_klr(train, labels_train, p.klr_nsr_ceiling, &IndexMap::new())?;
            Ok((m.probabilities(test)?, m.importance()))
        }
        "mlp" => {
            let m = fit_mlp(train, labels_train, p.mlp_hidden, p.mlp_l2, p.mlp_epochs, seed)?;
            let imp = mlp_importance(&m, train, labels_train)?;
            Ok((m.probabilities(test)?, imp))
        }
        "random_forest" => {
            let m = fit_random_forest(train, labels_train, p.rf_trees, seed)?;
            let imp = rf_importance(&m, train, labels_train)?;
            Ok((m.probabilities(test)?, imp))
        }
        "gradient_boost" => {
            let m = fit_gradient_boost(train, labels_train, p.gbt_depth, p.gbt_rounds, seed)?;
            Ok((m.probabilities(test)?, gbt_importance(&m)))
        }
        "attn_lstm" => {
            let m = fit_attn_lstm(
                train,
                labels_train,
                p.attn_t_steps,
                p.attn_hidden,
                p.attn_epochs,
                seed,
            )?;
            Ok((m.probabilities(test)?, attn_importance(&m)))
        }
        other => Err(ews_core::EwsError::InvalidArgument(format!(
            "unknown predictor {other:?}"
        ))),
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let panel = load_panel(cfg)?;
    let labels = build_labels(cfg, &panel)?;
    let features = feature_panel(cfg, &panel)?;

    let split = SplitSpec::new(cfg.run.split_fraction)?;
    let (train_raw, test_raw) = features.split(split)?;
    let (train, scaler) = standardize(&train_raw, &train_raw)?;
    let test = scaler.apply(&test_raw)?;

    let cut = train.len();
    let labels_train = CrisisLabels::new(
        labels.labels[..cut].to_vec(),
        labels.horizon_kind,
        labels.provenance.clone(),
    );
    let labels_test = CrisisLabels::new(
        labels.labels[cut..].to_vec(),
        labels.horizon_kind,
        labels.provenance.clone(),
    );

    let mut cells = Vec::new();
    for (i, kind) in cfg.predictors.list.iter().enumerate() {
        let seed = cfg.run.seed.wrapping_add(1000 * (i as u64 + 1));
        match fit_cell(kind, cfg, &train, &test, &labels_train, seed) {
            Ok((probs, importance)) => {
                let forecast = ForecastSeries::new(probs, cfg.run.threshold)?;
                let hits = hit_ratios(&labels_test, &forecast.signals)?;
                let scores = calibration(&labels_test, &forecast)?;
                write_file(
                    &cfg.run.out_dir.join(format!("forecast_{}.csv", sanitize(kind))),
                    &forecast.to_csv_string(test.dates()),
                )?;
                write_file(
                    &cfg.run.out_dir.join(format!("importance_{}.csv", sanitize(kind))),
                    &importance.to_csv_string(),
                )?;
                eprintln!("stage=train-eval cell={kind} status=ok");
                cells.push(ReportCell {
                    classifier: labels.provenance.clone(),
                    predictor: kind.clone(),
                    horizon: labels.horizon_kind,
                    hits,
                    scores,
                    importance: Some(importance),
                });
            }
            Err(e) => {
                eprintln!("stage=train-eval cell={kind} status=failed error={e}");
            }
        }
    }
    if cells.is_empty() {
        return Err(CliError::Runtime("every predictor cell failed".into()));
    }
    let report = assemble_report(cells)?;
    write_file(&cfg.run.out_dir.join("eval_report.csv"), &report.to_csv_string())?;
    write_file(&cfg.run.out_dir.join("eval_report.txt"), &report.to_text_table())
}
