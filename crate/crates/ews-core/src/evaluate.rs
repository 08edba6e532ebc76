//! Forecast scoring: hit ratios against crisis labels, probability
//! calibration metrics, and assembly of the evaluation grid with a
//! threshold-based screening pass.
//!
//! Metrics whose denominator is empty (no crisis observations, no issued
//! signals, single-class labels) are reported as `None`, never as a silent
//! zero.

use crate::classify::{CrisisLabels, HorizonKind};
use crate::predict::{ForecastSeries, ImportanceTable};
use crate::{EwsError, Result};

/// Signal-versus-label hit ratios.
///
/// `pct_false_alarms` is the share of issued signals that fall on non-crisis
/// dates (the precision complement), so a model that signals only during
/// crises scores 0 even if it misses some.
#[derive(Debug, Clone, PartialEq)]
pub struct HitRatios {
    /// % of crisis observations covered by a signal. `None` when the labels
    /// contain no crisis.
    pub pct_crisis_called: Option<f64>,
    /// % of crisis onsets with a signal in the `[onset - H, onset]` window.
    pub pct_onsets_called: Option<f64>,
    /// % of issued signals that are false. `None` when no signal was issued.
    pub pct_false_alarms: Option<f64>,
    /// Mean lead time (periods) of the earliest in-window signal over called
    /// onsets. `None` when no onset was called.
    pub advance_periods: Option<f64>,
}

/// Probability-forecast calibration scores. `sar` is the stored value of
/// `(accuracy + auc + (1 - rmse)) / 3` and is `None` exactly when `auc` is.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationScores {
    pub qps: f64,
    pub youden_j: Option<f64>,
    pub sar: Option<f64>,
    pub auc: Option<f64>,
    pub accuracy: f64,
    pub rmse: f64,
}

/// Default onset advance allowance for a horizon: 3 periods short-term,
/// 12 long-term.
pub fn default_advance_allowance(horizon: HorizonKind) -> usize {
    match horizon {
        HorizonKind::ShortTerm => 3,
        HorizonKind::LongTerm => 12,
    }
}

/// Hit ratios with the horizon's default advance allowance.
pub fn hit_ratios(labels: &CrisisLabels, signals: &[u8]) -> Result<HitRatios> {
    hit_ratios_with(labels, signals, default_advance_allowance(labels.horizon_kind))
}

/// Hit ratios with an explicit advance allowance `h`: an onset at `t` counts
/// as called if any signal occurs in `[t - h, t]`.
pub fn hit_ratios_with(labels: &CrisisLabels, signals: &[u8], h: usize) -> Result<HitRatios> {
    let y = &labels.labels;
    if y.len() != signals.len() {
        return Err(EwsError::LengthMismatch {
            left: y.len(),
            right: signals.len(),
        });
    }

    let n_crisis = y.iter().filter(|&&v| v == 1).count();
    let n_signals = signals.iter().filter(|&&v| v == 1).count();

    let pct_crisis_called = if n_crisis > 0 {
        let hits = y
            .iter()
            .zip(signals)
            .filter(|(&yv, &sv)| yv == 1 && sv == 1)
            .count();
        Some(100.0 * hits as f64 / n_crisis as f64)
    } else {
        None
    };

    let pct_false_alarms = if n_signals > 0 {
        let false_hits = y
            .iter()
            .zip(signals)
            .filter(|(&yv, &sv)| yv == 0 && sv == 1)
            .count();
        Some(100.0 * false_hits as f64 / n_signals as f64)
    } else {
        None
    };

    // Onsets: positions where a crisis spell starts (t = 0 counts).
    let onsets: Vec<usize> = (0..y.len())
        .filter(|&t| y[t] == 1 && (t == 0 || y[t - 1] == 0))
        .collect();
    let mut called = 0usize;
    let mut advance_sum = 0.0;
    for &t in &onsets {
        let lo = t.saturating_sub(h);
        if let Some(first) = (lo..=t).find(|&u| signals[u] == 1) {
            called += 1;
            advance_sum += (t - first) as f64;
        }
    }
    let pct_onsets_called = if onsets.is_empty() {
        None
    } else {
        Some(100.0 * called as f64 / onsets.len() as f64)
    };
    let advance_periods = if called > 0 {
        Some(advance_sum / called as f64)
    } else {
        None
    };

    Ok(HitRatios {
        pct_crisis_called,
        pct_onsets_called,
        pct_false_alarms,
        advance_periods,
    })
}

/// Which quadratic probability score to compute. `Signed` is the default:
/// `(1/T) Σ 2(ŷ_t - y_t)` with no square, matching reported negative values;
/// `Squared` is the conventional `(1/T) Σ 2(ŷ_t - y_t)²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QpsVariant {
    #[default]
    Signed,
    Squared,
}

/// Calibration scores with the signed QPS.
pub fn calibration(labels: &CrisisLabels, forecast: &ForecastSeries) -> Result<CalibrationScores> {
    calibration_with(labels, forecast, QpsVariant::Signed)
}

pub fn calibration_with(
    labels: &CrisisLabels,
    forecast: &ForecastSeries,
    variant: QpsVariant,
) -> Result<CalibrationScores> {
    let y = &labels.labels;
    let probs = &forecast.probabilities;
    if y.len() != probs.len() {
        return Err(EwsError::LengthMismatch {
            left: y.len(),
            right: probs.len(),
        });
    }
    if y.is_empty() {
        return Err(EwsError::TooShort { need: 1, got: 0 });
    }
    let t = y.len() as f64;

    let qps = y
        .iter()
        .zip(probs)
        .map(|(&yv, &p)| {
            let d = p - f64::from(yv);
            match variant {
                QpsVariant::Signed => 2.0 * d,
                QpsVariant::Squared => 2.0 * d * d,
            }
        })
        .sum::<f64>()
        / t;

    let rmse = (y
        .iter()
        .zip(probs)
        .map(|(&yv, &p)| (p - f64::from(yv)).powi(2))
        .sum::<f64>()
        / t)
        .sqrt();

    // Confusion counts from the binarized signals.
    let (mut tp, mut tn, mut fp, mut fne) = (0usize, 0usize, 0usize, 0usize);
    for (&yv, &sv) in y.iter().zip(&forecast.signals) {
        match (yv, sv) {
            (1, 1) => tp += 1,
            (0, 0) => tn += 1,
            (0, 1) => fp += 1,
            _ => fne += 1,
        }
    }
    let accuracy = (tp + tn) as f64 / t;

    let n_pos = tp + fne;
    let n_neg = tn + fp;
    let (youden_j, auc) = if n_pos > 0 && n_neg > 0 {
        let sensitivity = tp as f64 / n_pos as f64;
        let specificity = tn as f64 / n_neg as f64;
        (
            Some(sensitivity + specificity - 1.0),
            Some(rank_auc(probs, y)),
        )
    } else {
        (None, None)
    };
    let sar = auc.map(|a| (accuracy + a + (1.0 - rmse)) / 3.0);

    Ok(CalibrationScores {
        qps,
        youden_j,
        sar,
        auc,
        accuracy,
        rmse,
    })
}

/// AUC as the rank statistic: over all (positive, negative) pairs, the share
/// where the positive scores higher, ties counting one half.
pub fn rank_auc(probs: &[f64], labels: &[u8]) -> f64 {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[a].partial_cmp(&probs[b]).unwrap());
    // Midranks over tied scores.
    let mut ranks = vec![0.0; probs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && probs[order[j + 1]] == probs[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mid;
        }
        i = j + 1;
    }
    let n_pos = labels.iter().filter(|&&v| v == 1).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    let rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &yv)| yv == 1)
        .map(|(&r, _)| r)
        .sum();
    (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg)
}

/// One evaluated (classifier, predictor, horizon) combination.
#[derive(Debug, Clone)]
pub struct ReportCell {
    pub classifier: String,
    pub predictor: String,
    pub horizon: HorizonKind,
    pub hits: HitRatios,
    pub scores: CalibrationScores,
    pub importance: Option<ImportanceTable>,
}

/// Screening thresholds, defaulted to: crisis-called > 90, onsets-called
/// > 80, false alarms < 10, |QPS| < 0.05, Youden J > 0.9, SAR > 0.8.
#[derive(Debug, Clone, PartialEq)]
pub struct ScreeningThresholds {
    pub crisis_called_min: f64,
    pub onsets_called_min: f64,
    pub false_alarms_max: f64,
    pub qps_abs_max: f64,
    pub youden_min: f64,
    pub sar_min: f64,
}

impl Default for ScreeningThresholds {
    fn default() -> Self {
        ScreeningThresholds {
            crisis_called_min: 90.0,
            onsets_called_min: 80.0,
            false_alarms_max: 10.0,
            qps_abs_max: 0.05,
            youden_min: 0.9,
            sar_min: 0.8,
        }
    }
}

pub const N_SCREENING_CONDITIONS: usize = 6;

impl ScreeningThresholds {
    /// Number of conditions (out of six) a cell passes. An undefined metric
    /// fails its condition.
    pub fn conditions_passed(&self, cell: &ReportCell) -> usize {
        let mut passed = 0;
        if cell.hits.pct_crisis_called.is_some_and(|v| v > self.crisis_called_min) {
            passed += 1;
        }
        if cell.hits.pct_onsets_called.is_some_and(|v| v > self.onsets_called_min) {
            passed += 1;
        }
        if cell.hits.pct_false_alarms.is_some_and(|v| v < self.false_alarms_max) {
            passed += 1;
        }
        if cell.scores.qps.abs() < self.qps_abs_max {
            passed += 1;
        }
        if cell.scores.youden_j.is_some_and(|v| v > self.youden_min) {
            passed += 1;
        }
        if cell.scores.sar.is_some_and(|v| v > self.sar_min) {
            passed += 1;
        }
        passed
    }
}

/// The evaluation grid plus its screening outcome.
#[derive(Debug, Clone)]
pub struct EvaluationReport {
    pub cells: Vec<ReportCell>,
    pub thresholds: ScreeningThresholds,
    /// Conditions passed per cell, aligned with `cells`.
    pub passes: Vec<usize>,
    /// `classifier/predictor/horizon` ids of the cells passing the most
    /// conditions.
    pub best: Vec<String>,
}

fn cell_id(cell: &ReportCell) -> String {
    let horizon = match cell.horizon {
        HorizonKind::ShortTerm => "short",
        HorizonKind::LongTerm => "long",
    };
    format!("{}/{}/{}", cell.classifier, cell.predictor, horizon)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "—".into())
}

/// Assembles the grid report with default screening thresholds.
pub fn assemble_report(cells: Vec<ReportCell>) -> Result<EvaluationReport> {
    assemble_report_with(cells, ScreeningThresholds::default())
}

pub fn assemble_report_with(
    cells: Vec<ReportCell>,
    thresholds: ScreeningThresholds,
) -> Result<EvaluationReport> {
    if cells.is_empty() {
        return Err(EwsError::InvalidArgument("empty report".into()));
    }
    let passes: Vec<usize> = cells
        .iter()
        .map(|c| thresholds.conditions_passed(c))
        .collect();
    let max_passes = *passes.iter().max().unwrap();
    let best = cells
        .iter()
        .zip(&passes)
        .filter(|(_, &p)| p == max_passes)
        .map(|(c, _)| cell_id(c))
        .collect();
    Ok(EvaluationReport {
        cells,
        thresholds,
        passes,
        best,
    })
}

impl EvaluationReport {
    /// One row per cell; undefined metrics print an em-dash.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(
            "classifier,predictor,horizon,crisis_called,onsets_called,false_alarms,advance,qps,youden_j,sar,auc,accuracy,rmse,screening_passed\n",
        );
        for (cell, &p) in self.cells.iter().zip(&self.passes) {
            let horizon = match cell.horizon {
                HorizonKind::ShortTerm => "short",
                HorizonKind::LongTerm => "long",
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{:.4},{},{},{},{:.4},{:.4},{}\n",
                cell.classifier,
                cell.predictor,
                horizon,
                fmt_opt(cell.hits.pct_crisis_called),
                fmt_opt(cell.hits.pct_onsets_called),
                fmt_opt(cell.hits.pct_false_alarms),
                fmt_opt(cell.hits.advance_periods),
                cell.scores.qps,
                fmt_opt(cell.scores.youden_j),
                fmt_opt(cell.scores.sar),
                fmt_opt(cell.scores.auc),
                cell.scores.accuracy,
                cell.scores.rmse,
                p,
            ));
        }
        out
    }

    /// Aligned-column plain-text table.
    pub fn to_text_table(&self) -> String {
        let header = [
            "model", "hit1", "hit2", "hit3", "adv", "QPS", "J", "SAR", "AUC", "pass",
        ];
        let mut rows: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
        for (cell, &p) in self.cells.iter().zip(&self.passes) {
            rows.push(vec![
                cell_id(cell),
                fmt_opt(cell.hits.pct_crisis_called),
                fmt_opt(cell.hits.pct_onsets_called),
                fmt_opt(cell.hits.pct_false_alarms),
                fmt_opt(cell.hits.advance_periods),
                format!("{:.4}", cell.scores.qps),
                fmt_opt(cell.scores.youden_j),
                fmt_opt(cell.scores.sar),
                fmt_opt(cell.scores.auc),
                format!("{p}/{N_SCREENING_CONDITIONS}"),
            ]);
        }
        let widths: Vec<usize> = (0..header.len())
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap())
            .collect();
        let mut out = String::new();
        for row in &rows {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(cellv, &w)| format!("{cellv:<w$}"))
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out.push_str(&format!("best: {}\n", self.best.join(", ")));
        out
    }
}
