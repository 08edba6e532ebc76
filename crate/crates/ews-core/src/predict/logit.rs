//! Logistic regression with backward stepwise elimination by likelihood
//! ratio against the chi-square(1) critical value.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{check_labels, dense_matrix, ForecastSeries, ImportanceEntry, ImportanceTable};
use crate::classify::CrisisLabels;
use crate::frame::FactorPanel;
use crate::{EwsError, Result};

const RIDGE: f64 = 1e-6;

/// A fitted (possibly intercept-only) logit.
#[derive(Debug, Clone)]
pub struct LogitModel {
    /// Retained features, in design-matrix order.
    pub feature_names: Vec<String>,
    /// Intercept first, then one coefficient per retained feature.
    pub coefficients: Vec<f64>,
    /// Features dropped by the stepwise loop, in elimination order.
    pub eliminated: Vec<String>,
    /// Significance level used for the elimination test.
    pub alpha: f64,
    pub log_likelihood: f64,
    /// Set when the IRLS solve hit its iteration cap (e.g. perfect
    /// separation); the ridge keeps the estimates finite.
    pub separation_warning: bool,
}

impl LogitModel {
    pub fn probabilities(&self, features: &FactorPanel) -> Result<Vec<f64>> {
        let (rows, _) = dense_matrix(features, &self.feature_names)?;
        Ok(rows
            .iter()
            .map(|row| {
                let mut z = self.coefficients[0];
                for (x, b) in row.iter().zip(&self.coefficients[1..]) {
                    z += x * b;
                }
                sigmoid(z)
            })
            .collect())
    }

    /// Coefficient table (the intercept is excluded; eliminated features get
    /// the exclusion marker).
    pub fn importance(&self) -> ImportanceTable {
        let mut entries: Vec<ImportanceEntry> = self
            .feature_names
            .iter()
            .zip(&self.coefficients[1..])
            .map(|(name, &c)| ImportanceEntry {
                feature: name.clone(),
                score: Some(c),
                method: "coef".into(),
            })
            .collect();
        for name in &self.eliminated {
            entries.push(ImportanceEntry {
                feature: name.clone(),
                score: None,
                method: "coef".into(),
            });
        }
        ImportanceTable::new(entries)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Fits a ridge-stabilized logit by iteratively reweighted least squares and
/// prunes features backward: refit without each candidate, drop the one with
/// the smallest likelihood-ratio statistic while it stays below the
/// chi-square(1) critical value at `alpha`, repeat until all survive.
pub fn fit_stepwise_logit(
    features: &FactorPanel,
    labels: &CrisisLabels,
    alpha: f64,
) -> Result<LogitModel> {
    let critical = chi2_critical(alpha)?;
    fit_stepwise_logit_at_critical(features, labels, alpha, critical)
}

/// As [`fit_stepwise_logit`] but with the elimination threshold given
/// directly (used by property tests probing the threshold's effect).
pub fn fit_stepwise_logit_at_critical(
    features: &FactorPanel,
    labels: &CrisisLabels,
    alpha: f64,
    critical: f64,
) -> Result<LogitModel> {
    let y = check_labels(features, labels)?;
    if y.iter().all(|&v| v == y[0]) {
        return Err(EwsError::DegenerateData("single-class labels".into()));
    }
    let (rows, all_names) = dense_matrix(features, &[])?;

    let mut active: Vec<usize> = (0..all_names.len()).collect();
    let mut eliminated = Vec::new();
    let (mut beta, mut ll, mut warn) = irls(&rows, &y, &active)?;

    while !active.is_empty() {
        // Likelihood-ratio statistic for dropping each active feature.
        let mut weakest: Option<(usize, f64)> = None;
        for (pos, _) in active.iter().enumerate() {
            let mut reduced = active.clone();
            reduced.remove(pos);
            let (_, ll_reduced, _) = irls(&rows, &y, &reduced)?;
            let stat = 2.0 * (ll - ll_reduced);
            if weakest.map_or(true, |(_, s)| stat < s) {
                weakest = Some((pos, stat));
            }
        }
        let (pos, stat) = weakest.expect("nonempty active set");
        if stat >= critical {
            break;
        }
        eliminated.push(all_names[active[pos]].clone());
        active.remove(pos);
        let refit = irls(&rows, &y, &active)?;
        beta = refit.0;
        ll = refit.1;
        warn = refit.2;
    }

    Ok(LogitModel {
        feature_names: active.iter().map(|&i| all_names[i].clone()).collect(),
        coefficients: beta,
        eliminated,
        alpha,
        log_likelihood: ll,
        separation_warning: warn,
    })
}

fn chi2_critical(alpha: f64) -> Result<f64> {
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(EwsError::InvalidArgument(format!(
            "significance {alpha} outside (0,1)"
        )));
    }
    let chi2 = ChiSquared::new(1.0).expect("df=1");
    Ok(chi2.inverse_cdf(1.0 - alpha))
}

/// Convenience wrapper matching the module surface.
pub fn logit_predict(
    model: &LogitModel,
    features: &FactorPanel,
    threshold: f64,
) -> Result<ForecastSeries> {
    ForecastSeries::new(model.probabilities(features)?, threshold)
}

/// Ridge-penalized logit MLE on the selected columns (intercept always
/// included and unpenalized is unnecessary at 1e-6; the ridge applies to all
/// coefficients). Returns (coefficients, unpenalized log likelihood, capped).
fn irls(rows: &[Vec<f64>], y: &[f64], active: &[usize]) -> Result<(Vec<f64>, f64, bool)> {
    let d = active.len() + 1;
    let design: Vec<Vec<f64>> = rows
        .iter()
        .map(|row| {
            let mut x = Vec::with_capacity(d);
            x.push(1.0);
            x.extend(active.iter().map(|&j| row[j]));
            x
        })
        .collect();

    let mut beta = vec![0.0; d];
    let mut converged = false;
    for _ in 0..100 {
        // Gradient and Hessian of the penalized log likelihood.
        let mut grad = vec![0.0; d];
        let mut hess = vec![vec![0.0; d]; d];
        for (x, &yi) in design.iter().zip(y) {
            let z: f64 = x.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let p = sigmoid(z);
            let w = (p * (1.0 - p)).max(1e-12);
            for i in 0..d {
                grad[i] += (yi - p) * x[i];
                for j in 0..d {
                    hess[i][j] += w * x[i] * x[j];
                }
            }
        }
        for i in 0..d {
            grad[i] -= RIDGE * beta[i];
            hess[i][i] += RIDGE;
        }
        let step = solve(hess, grad.clone()).ok_or_else(|| {
            EwsError::DegenerateData("singular information matrix in logit fit".into())
        })?;
        let delta: f64 = step.iter().map(|s| s.abs()).fold(0.0, f64::max);
        for (b, s) in beta.iter_mut().zip(&step) {
            *b += s;
        }
        if delta < 1e-10 {
            converged = true;
            break;
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(EwsError::DegenerateData("non-finite logit estimate".into()));
        }
    }

    let mut ll = 0.0;
    for (x, &yi) in design.iter().zip(y) {
        let z: f64 = x.iter().zip(&beta).map(|(a, b)| a * b).sum();
        // Numerically stable log-likelihood: y*z - log(1+e^z).
        let log1pez = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
        ll += yi * z - log1pez;
    }
    Ok((beta, ll, !converged))
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i][col]
                .abs()
                .partial_cmp(&a[j][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}
