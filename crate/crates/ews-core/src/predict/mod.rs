//! Crisis predictors behind one interface: fit on (features, labels), emit
//! probability forecasts on new data, and expose per-feature contributions.

mod attn;
mod boost;
mod forest;
mod klr;
mod logit;
mod mlp;

pub use attn::{attn_importance, attn_loss_and_grad, fit_attn_lstm, AttnLayout, AttnLstmModel};
pub use boost::{fit_gradient_boost, fit_gradient_boost_cv, gbt_importance, GradientBoostModel};
pub use forest::{default_k, fit_random_forest, rf_importance, RandomForestModel};
pub use klr::{fit_klr, klr_predict, nsr_from_confusion, KlrModel, KlrVariable, TailDirection};
pub use logit::{
    fit_stepwise_logit, fit_stepwise_logit_at_critical, logit_predict, LogitModel,
};
pub use mlp::{fit_mlp, mlp_importance, mlp_loss_and_grad, MlpModel, MlpParams};

use crate::frame::FactorPanel;
use crate::{EwsError, Result};

/// The six predictor families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictorKind {
    StepwiseLogit,
    Klr,
    Mlp,
    RandomForest,
    GradientBoost,
    AttnLstm,
}

impl std::fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PredictorKind::StepwiseLogit => "stepwise_logit",
            PredictorKind::Klr => "klr",
            PredictorKind::Mlp => "mlp",
            PredictorKind::RandomForest => "random_forest",
            PredictorKind::GradientBoost => "gradient_boost",
            PredictorKind::AttnLstm => "attn_lstm",
        };
        f.write_str(s)
    }
}

/// A fitted model of any family, with a uniform predict surface.
#[derive(Debug, Clone)]
pub enum Predictor {
    StepwiseLogit(LogitModel),
    Klr(KlrModel),
    Mlp(MlpModel),
    RandomForest(RandomForestModel),
    GradientBoost(GradientBoostModel),
    AttnLstm(AttnLstmModel),
}

impl Predictor {
    pub fn kind(&self) -> PredictorKind {
        match self {
            Predictor::StepwiseLogit(_) => PredictorKind::StepwiseLogit,
            Predictor::Klr(_) => PredictorKind::Klr,
            Predictor::Mlp(_) => PredictorKind::Mlp,
            Predictor::RandomForest(_) => PredictorKind::RandomForest,
            Predictor::GradientBoost(_) => PredictorKind::GradientBoost,
            Predictor::AttnLstm(_) => PredictorKind::AttnLstm,
        }
    }

    /// Feature names the model consumes, in order.
    pub fn feature_names(&self) -> &[String] {
        match self {
            Predictor::StepwiseLogit(m) => &m.feature_names,
            Predictor::Klr(m) => &m.feature_names,
            Predictor::Mlp(m) => &m.feature_names,
            Predictor::RandomForest(m) => &m.feature_names,
            Predictor::GradientBoost(m) => &m.feature_names,
            Predictor::AttnLstm(m) => &m.feature_names,
        }
    }

    /// Probability forecast with the given signal threshold.
    pub fn predict(&self, features: &FactorPanel, threshold: f64) -> Result<ForecastSeries> {
        let probs = match self {
            Predictor::StepwiseLogit(m) => m.probabilities(features)?,
            Predictor::Klr(m) => m.probabilities(features)?,
            Predictor::Mlp(m) => m.probabilities(features)?,
            Predictor::RandomForest(m) => m.probabilities(features)?,
            Predictor::GradientBoost(m) => m.probabilities(features)?,
            Predictor::AttnLstm(m) => m.probabilities(features)?,
        };
        ForecastSeries::new(probs, threshold)
    }
}

/// Probability forecasts plus binarized signals.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSeries {
    pub probabilities: Vec<f64>,
    pub threshold: f64,
    pub signals: Vec<u8>,
}

impl ForecastSeries {
    pub fn new(probabilities: Vec<f64>, threshold: f64) -> Result<Self> {
        for &p in &probabilities {
            if !(0.0..=1.0).contains(&p) {
                return Err(EwsError::InvalidArgument(format!(
                    "probability {p} outside [0,1]"
                )));
            }
        }
        let signals = binarize(&probabilities, threshold)?;
        Ok(ForecastSeries {
            probabilities,
            threshold,
            signals,
        })
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    /// `date,probability,signal` CSV.
    pub fn to_csv_string(&self, dates: &[chrono::NaiveDate]) -> String {
        let mut out = String::from("date,probability,signal\n");
        for (t, (&p, &s)) in self.probabilities.iter().zip(&self.signals).enumerate() {
            let date = dates
                .get(t)
                .map(|d| d.format("%Y-%m-%d").to_string())
                .unwrap_or_else(|| t.to_string());
            out.push_str(&format!("{date},{p},{s}\n"));
        }
        out
    }
}

/// Thresholds probabilities into binary signals (`>=` convention).
pub fn binarize(probabilities: &[f64], threshold: f64) -> Result<Vec<u8>> {
    if !(0.0 < threshold && threshold < 1.0) {
        return Err(EwsError::InvalidArgument(format!(
            "threshold {threshold} outside (0,1)"
        )));
    }
    Ok(probabilities
        .iter()
        .map(|&p| u8::from(p >= threshold))
        .collect())
}

/// One feature's contribution score. `score` is `None` for features the
/// model excluded (shown as a marker, never a silent zero).
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceEntry {
    pub feature: String,
    pub score: Option<f64>,
    pub method: String,
}

/// Per-feature contribution scores, sorted descending (excluded last).
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceTable {
    pub entries: Vec<ImportanceEntry>,
}

impl ImportanceTable {
    pub fn new(mut entries: Vec<ImportanceEntry>) -> Self {
        entries.sort_by(|a, b| match (a.score, b.score) {
            (Some(x), Some(y)) => y.partial_cmp(&x).unwrap_or(std::cmp::Ordering::Equal),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => std::cmp::Ordering::Equal,
        });
        ImportanceTable { entries }
    }

    pub fn score_of(&self, feature: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.feature == feature)
            .and_then(|e| e.score)
    }

    /// `factor,score,method` CSV; excluded features print an em-dash.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("factor,score,method\n");
        for e in &self.entries {
            let score = e
                .score
                .map(|s| s.to_string())
                .unwrap_or_else(|| "—".to_string());
            out.push_str(&format!("{},{score},{}\n", e.feature, e.method));
        }
        out
    }
}

/// Checks the panel for missing values and returns a row-major matrix of the
/// named columns (all columns when `names` is empty).
pub(crate) fn dense_matrix(
    panel: &FactorPanel,
    names: &[String],
) -> Result<(Vec<Vec<f64>>, Vec<String>)> {
    let names: Vec<String> = if names.is_empty() {
        panel.names().map(|s| s.to_string()).collect()
    } else {
        names.to_vec()
    };
    let mut cols = Vec::with_capacity(names.len());
    for name in &names {
        let col = panel.column(name)?;
        if let Some(i) = col.iter().position(|v| !v.is_finite()) {
            return Err(EwsError::DegenerateData(format!(
                "column {name:?} has a missing value at row {i}"
            )));
        }
        cols.push(col.to_vec());
    }
    let rows = (0..panel.len())
        .map(|t| cols.iter().map(|c| c[t]).collect())
        .collect();
    Ok((rows, names))
}

/// Validates labels against the feature panel and returns them as f64.
pub(crate) fn check_labels(panel: &FactorPanel, labels: &crate::classify::CrisisLabels) -> Result<Vec<f64>> {
    if panel.len() != labels.len() {
        return Err(EwsError::LengthMismatch {
            left: panel.len(),
            right: labels.len(),
        });
    }
    Ok(labels.labels.iter().map(|&l| f64::from(l)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binarize_examples() {
        assert_eq!(binarize(&[0.4, 0.6], 0.5).unwrap(), vec![0, 1]);
        assert_eq!(binarize(&[0.5], 0.5).unwrap(), vec![1]);
        let near_one = 1.0 - 1e-12;
        assert_eq!(binarize(&[0.3, 0.99, 1.0], near_one).unwrap(), vec![0, 0, 1]);
        assert!(binarize(&[0.5], 0.0).is_err());
        assert!(binarize(&[0.5], 1.0).is_err());
    }

    #[test]
    fn binarize_monotone_in_threshold() {
        let probs = [0.1, 0.3, 0.5, 0.7, 0.9];
        let mut prev = binarize(&probs, 0.05).unwrap();
        for t in [0.2, 0.4, 0.6, 0.8, 0.95] {
            let next = binarize(&probs, t).unwrap();
            for (n, p) in next.iter().zip(&prev) {
                assert!(n <= p, "raising the threshold added a signal");
            }
            prev = next;
        }
    }

    #[test]
    fn importance_table_sorted_with_exclusions_last() {
        let t = ImportanceTable::new(vec![
            ImportanceEntry {
                feature: "a".into(),
                score: Some(1.0),
                method: "gain".into(),
            },
            ImportanceEntry {
                feature: "b".into(),
                score: None,
                method: "gain".into(),
            },
            ImportanceEntry {
                feature: "c".into(),
                score: Some(5.0),
                method: "gain".into(),
            },
        ]);
        let order: Vec<&str> = t.entries.iter().map(|e| e.feature.as_str()).collect();
        assert_eq!(order, vec!["c", "a", "b"]);
        assert!(t.to_csv_string().contains("b,—,gain"));
    }

    #[test]
    fn forecast_series_rejects_bad_probabilities() {
        assert!(ForecastSeries::new(vec![0.5, 1.1], 0.5).is_err());
        let f = ForecastSeries::new(vec![0.2, 0.8], 0.5).unwrap();
        assert_eq!(f.signals, vec![0, 1]);
    }
}
