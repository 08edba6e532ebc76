//! Shared wiring between subcommands: panel loading, horizon parsing and
//! classifier construction.

use std::path::Path;

use ews_core::classify::{
    compute_cmax, compute_epi, compute_fpi, filtered_high_vol, fit_swarch, swarch_label,
    tqi_label, CrisisLabels, CutoffPolicy, EpiKind, HorizonKind,
};
use ews_core::frame::{FactorPanel, Frequency};
use ews_core::Result as EwsResult;

use crate::config::ExperimentConfig;
use crate::CliError;

pub fn load_panel(cfg: &ExperimentConfig) -> Result<FactorPanel, CliError> {
    let path = cfg.require_file("data.panel", cfg.data.panel.as_ref())?;
    let frequency: Frequency = cfg
        .data
        .frequency
        .parse()
        .map_err(|e: ews_core::EwsError| CliError::Config(e.to_string()))?;
    FactorPanel::load_csv(path, frequency).map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn parse_horizon(s: &str) -> Result<HorizonKind, CliError> {
    match s {
        "short" => Ok(HorizonKind::ShortTerm),
        "long" => Ok(HorizonKind::LongTerm),
        other => Err(CliError::Config(format!("unknown horizon {other:?}"))),
    }
}

/// A named labeling rule that can be re-run on any sub-panel (as the
/// misspecification bootstrap requires).
pub struct Classifier {
    pub id: String,
    pub lambda: Option<f64>,
    pub labeler: Box<dyn Fn(&FactorPanel) -> EwsResult<CrisisLabels> + Sync>,
}

/// Expands the configured classifier into report rows: the regime classifier
/// yields its fixed-cutoff and valley-cutoff variants, index classifiers one
/// row per threshold coefficient.
pub fn build_classifiers(cfg: &ExperimentConfig) -> Result<Vec<Classifier>, CliError> {
    let horizon = parse_horizon(&cfg.run.horizon)?;
    let c = cfg.classifier.clone();
    let kind = c.kind.as_str();
    let mut out = Vec::new();

    if kind == "swarch" {
        let ret = cfg.data.return_column.clone();
        let seed = cfg.run.seed;
        let (k, p, q) = (c.k, c.p, c.q);
        let fixed = c.fixed_cutoff;
        let bins = c.bins;
        let ret2 = ret.clone();
        out.push(Classifier {
            id: "swarch".into(),
            lambda: None,
            labeler: Box::new(move |panel: &FactorPanel| {
                let model = fit_swarch(panel.column(&ret)?, k, p, q, seed)?;
                swarch_label(&filtered_high_vol(&model), CutoffPolicy::Fixed(fixed), horizon)
            }),
        });
        out.push(Classifier {
            id: "swarch_opt".into(),
            lambda: None,
            labeler: Box::new(move |panel: &FactorPanel| {
                let model = fit_swarch(panel.column(&ret2)?, k, p, q, seed)?;
                swarch_label(
                    &filtered_high_vol(&model),
                    CutoffPolicy::TwoPeak { window: None, bins },
                    horizon,
                )
            }),
        });
        return Ok(out);
    }

    for &lambda in &c.lambda_grid {
        let labeler: Box<dyn Fn(&FactorPanel) -> EwsResult<CrisisLabels> + Sync> = match kind {
            "cmax" => {
                let price = require_column(cfg, "data.price_column", &cfg.data.price_column)?;
                let m = c.cmax_window;
                Box::new(move |panel: &FactorPanel| {
                    tqi_label(&compute_cmax(panel.column(&price)?, m)?, lambda)
                })
            }
            "fpi" | "epi_erw" | "epi_klr" => {
                let e = require_column(cfg, "data.exchange_column", &cfg.data.exchange_column)?;
                let r = require_column(cfg, "data.reserves_column", &cfg.data.reserves_column)?;
                let i = require_column(cfg, "data.rate_column", &cfg.data.rate_column)?;
                let epi_kind = match kind {
                    "epi_erw" => Some(EpiKind::Erw),
                    "epi_klr" => Some(EpiKind::Klr),
                    _ => None,
                };
                Box::new(move |panel: &FactorPanel| {
                    let index = match epi_kind {
                        None => compute_fpi(panel.column(&e)?, panel.column(&r)?, panel.column(&i)?)?,
                        Some(kind) => {
                            compute_epi(kind, panel.column(&e)?, panel.column(&r)?, panel.column(&i)?)?
                        }
                    };
                    tqi_label(&index, lambda)
                })
            }
            other => {
                return Err(CliError::Config(format!("unknown classifier kind {other:?}")))
            }
        };
        out.push(Classifier {
            id: format!("{kind}(lambda={lambda})"),
            lambda: Some(lambda),
            labeler,
        });
    }
    Ok(out)
}

fn require_column(
    _cfg: &ExperimentConfig,
    field: &str,
    value: &Option<String>,
) -> Result<String, CliError> {
    value
        .clone()
        .ok_or_else(|| CliError::Config(format!("{field} must be set for this classifier")))
}

/// Labels for downstream stages: a precomputed label file when configured,
/// otherwise the first configured classifier run on the full panel (the
/// valley-cutoff regime variant when the kind is `swarch`).
pub fn build_labels(cfg: &ExperimentConfig, panel: &FactorPanel) -> Result<CrisisLabels, CliError> {
    if cfg.data.labels.is_some() {
        let path = cfg.require_file("data.labels", cfg.data.labels.as_ref())?;
        let horizon = parse_horizon(&cfg.run.horizon)?;
        return load_labels_csv(path, panel.len(), horizon);
    }
    let classifiers = build_classifiers(cfg)?;
    let chosen = classifiers
        .iter()
        .find(|c| c.id == "swarch_opt")
        .or_else(|| classifiers.first())
        .ok_or_else(|| CliError::Config("no classifier configured".into()))?;
    (chosen.labeler)(panel).map_err(CliError::from)
}

/// Parses a `date,label` (or `date,label,cutoff`) CSV.
pub fn load_labels_csv(
    path: &Path,
    expected_len: usize,
    horizon: HorizonKind,
) -> Result<CrisisLabels, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let field = line.split(',').nth(1).ok_or_else(|| {
            CliError::Runtime(format!("{}: line {} has no label field", path.display(), i + 1))
        })?;
        let v: u8 = field.trim().parse().map_err(|_| {
            CliError::Runtime(format!("{}: line {}: bad label {field:?}", path.display(), i + 1))
        })?;
        if v > 1 {
            return Err(CliError::Runtime(format!(
                "{}: line {}: label {v} not binary",
                path.display(),
                i + 1
            )));
        }
        labels.push(v);
    }
    if labels.len() != expected_len {
        return Err(CliError::Runtime(format!(
            "{}: {} labels but the panel has {expected_len} rows",
            path.display(),
            labels.len()
        )));
    }
    Ok(CrisisLabels::new(labels, horizon, format!("file:{}", path.display())))
}

/// File-name-safe version of a classifier id.
pub fn sanitize(id: &str) -> String {
    let mut out = String::new();
    for ch in id.chars() {
        if ch.is_ascii_alphanumeric() || ch == '.' {
            out.push(ch);
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}
