//! Gradient boosting: stagewise depth-D regression trees fit to residuals of
//! the running prediction, initialized at the label mean.

use rayon::prelude::*;

use super::{check_labels, dense_matrix, ImportanceEntry, ImportanceTable};
use crate::classify::CrisisLabels;
use crate::frame::FactorPanel;
use crate::{EwsError, Result};

/// Fixed shrinkage applied to every tree's contribution.
pub const LEARNING_RATE: f64 = 0.1;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        /// Sum-of-squares reduction this split achieved.
        gain: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    fn predict(&self, row: &[f64]) -> f64 {
        match self {
            Node::Leaf { value } => *value,
            Node::Split {
                feature,
                threshold,
                left,
                right,
                ..
            } => {
                if row[*feature] <= *threshold {
                    left.predict(row)
                } else {
                    right.predict(row)
                }
            }
        }
    }

    fn accumulate_gains(&self, gains: &mut [f64]) {
        if let Node::Split {
            feature,
            gain,
            left,
            right,
            ..
        } = self
        {
            gains[*feature] += gain;
            left.accumulate_gains(gains);
            right.accumulate_gains(gains);
        }
    }
}

/// A fitted boosted ensemble.
#[derive(Debug, Clone)]
pub struct GradientBoostModel {
    pub feature_names: Vec<String>,
    /// Step-1 initialization: the label mean.
    pub base: f64,
    trees: Vec<Node>,
    pub depth: usize,
    pub rounds: usize,
    pub seed: u64,
}

fn grow_regression_node(rows: &[Vec<f64>], r: &[f64], idx: &[usize], depth: usize) -> Node {
    let n = idx.len();
    let mean = idx.iter().map(|&i| r[i]).sum::<f64>() / n as f64;
    if depth == 0 || n < 2 {
        return Node::Leaf { value: mean };
    }
    let sse_parent: f64 = idx.iter().map(|&i| (r[i] - mean).powi(2)).sum();

    // Exact greedy split over sorted values of every feature.
    let mut best: Option<(f64, usize, f64)> = None; // (gain, feature, threshold)
    for f in 0..rows[0].len() {
        let mut order = idx.to_vec();
        order.sort_by(|&a, &b| {
            rows[a][f]
                .partial_cmp(&rows[b][f])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let total: f64 = idx.iter().map(|&i| r[i]).sum();
        let total_sq: f64 = idx.iter().map(|&i| r[i] * r[i]).sum();
        let (mut ln, mut lsum, mut lsq) = (0.0f64, 0.0f64, 0.0f64);
        for w in 0..n - 1 {
            let i = order[w];
            ln += 1.0;
            lsum += r[i];
            lsq += r[i] * r[i];
            let (a, b) = (rows[order[w]][f], rows[order[w + 1]][f]);
            if a == b {
                continue;
            }
            let rn = n as f64 - ln;
            let sse_left = lsq - lsum * lsum / ln;
            let rsum = total - lsum;
            let sse_right = (total_sq - lsq) - rsum * rsum / rn;
            let gain = sse_parent - sse_left - sse_right;
            if gain > 1e-12 && best.map_or(true, |(g, _, _)| gain > g) {
                best = Some((gain, f, 0.5 * (a + b)));
            }
        }
    }

    match best {
        None => Node::Leaf { value: mean },
        Some((gain, feature, threshold)) => {
            let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
                idx.iter().partition(|&&i| rows[i][feature] <= threshold);
            Node::Split {
                feature,
                threshold,
                gain,
                left: Box::new(grow_regression_node(rows, r, &left_idx, depth - 1)),
                right: Box::new(grow_regression_node(rows, r, &right_idx, depth - 1)),
            }
        }
    }
}

/// Fits `rounds` depth-`depth` regression trees to the running residuals.
/// The procedure is deterministic for fixed inputs; `seed` is carried for
/// interface uniformity and recorded on the model.
pub fn fit_gradient_boost(
    features: &FactorPanel,
    labels: &CrisisLabels,
    depth: usize,
    rounds: usize,
    seed: u64,
) -> Result<GradientBoostModel> {
    if !(1..=5).contains(&depth) {
        return Err(EwsError::InvalidArgument(format!(
            "depth {depth} outside 1..=5"
        )));
    }
    let y = check_labels(features, labels)?;
    let (rows, names) = dense_matrix(features, &[])?;
    if y.iter().all(|&v| v == y[0]) {
        return Err(EwsError::DegenerateData("single-class labels".into()));
    }

    let base = y.iter().sum::<f64>() / y.len() as f64;
    let mut pred = vec![base; y.len()];
    let all_idx: Vec<usize> = (0..y.len()).collect();
    let mut trees = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        let residual: Vec<f64> = y.iter().zip(&pred).map(|(yi, pi)| yi - pi).collect();
        let tree = grow_regression_node(&rows, &residual, &all_idx, depth);
        for (p, row) in pred.iter_mut().zip(&rows) {
            *p += LEARNING_RATE * tree.predict(row);
        }
        trees.push(tree);
    }

    Ok(GradientBoostModel {
        feature_names: names,
        base,
        trees,
        depth,
        rounds,
        seed,
    })
}

impl GradientBoostModel {
    pub fn probabilities(&self, features: &FactorPanel) -> Result<Vec<f64>> {
        let (rows, _) = dense_matrix(features, &self.feature_names)?;
        Ok(rows
            .iter()
            .map(|row| {
                let raw = self.base
                    + LEARNING_RATE
                        * self.trees.iter().map(|t| t.predict(row)).sum::<f64>();
                raw.clamp(0.0, 1.0)
            })
            .collect())
    }

    /// Unclamped ensemble output (used by tests checking the update rule).
    pub fn raw_scores(&self, features: &FactorPanel) -> Result<Vec<f64>> {
        let (rows, _) = dense_matrix(features, &self.feature_names)?;
        Ok(rows
            .iter()
            .map(|row| {
                self.base
                    + LEARNING_RATE
                        * self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
            })
            .collect())
    }
}

/// Split-gain importance: per-feature summed gain, normalized to percentages
/// over used features; unused features carry the exclusion marker.
pub fn gbt_importance(model: &GradientBoostModel) -> ImportanceTable {
    let mut gains = vec![0.0; model.feature_names.len()];
    for tree in &model.trees {
        tree.accumulate_gains(&mut gains);
    }
    let total: f64 = gains.iter().sum();
    let entries = model
        .feature_names
        .iter()
        .zip(&gains)
        .map(|(name, &g)| ImportanceEntry {
            feature: name.clone(),
            score: if g > 0.0 && total > 0.0 {
                Some(100.0 * g / total)
            } else {
                None
            },
            method: "gain".into(),
        })
        .collect();
    ImportanceTable::new(entries)
}

/// Cross-validated grid selection over (depth, rounds) by mean validation
/// AUC across `folds` contiguous folds; ties prefer the smaller grid point.
pub fn fit_gradient_boost_cv(
    features: &FactorPanel,
    labels: &CrisisLabels,
    depths: &[usize],
    rounds_grid: &[usize],
    folds: usize,
    seed: u64,
) -> Result<GradientBoostModel> {
    if depths.is_empty() || rounds_grid.is_empty() || folds < 2 {
        return Err(EwsError::InvalidArgument("empty CV grid".into()));
    }
    let y = check_labels(features, labels)?;
    let n = features.len();
    if n < folds * 2 {
        return Err(EwsError::TooShort {
            need: folds * 2,
            got: n,
        });
    }

    let grid: Vec<(usize, usize)> = depths
        .iter()
        .flat_map(|&d| rounds_grid.iter().map(move |&m| (d, m)))
        .collect();
    let scores: Vec<Option<f64>> = grid
        .par_iter()
        .map(|&(d, m)| {
            let mut aucs = Vec::new();
            for fold in 0..folds {
                let lo = fold * n / folds;
                let hi = (fold + 1) * n / folds;
                let train_panel = if lo == 0 {
                    features.slice(hi, n)
                } else if hi == n {
                    features.slice(0, lo)
                } else {
                    match features.slice(0, lo).concat(&features.slice(hi, n)) {
                        Ok(p) => p,
                        Err(_) => return None,
                    }
                };
                let mut train_labels: Vec<u8> = labels.labels[..lo].to_vec();
                train_labels.extend_from_slice(&labels.labels[hi..]);
                let train_y = CrisisLabels::new(
                    train_labels,
                    labels.horizon_kind,
                    labels.provenance.clone(),
                );
                let model = match fit_gradient_boost(&train_panel, &train_y, d, m, seed) {
                    Ok(model) => model,
                    Err(_) => return None,
                };
                let val = features.slice(lo, hi);
                let probs = match model.probabilities(&val) {
                    Ok(p) => p,
                    Err(_) => return None,
                };
                if let Some(auc) = rank_auc(&probs, &y[lo..hi]) {
                    aucs.push(auc);
                }
            }
            if aucs.is_empty() {
                None
            } else {
                Some(aucs.iter().sum::<f64>() / aucs.len() as f64)
            }
        })
        .collect();

    let mut best: Option<(f64, usize)> = None;
    for (i, s) in scores.iter().enumerate() {
        if let Some(v) = s {
            if best.map_or(true, |(bv, _)| *v > bv) {
                best = Some((*v, i));
            }
        }
    }
    let (_, idx) =
        best.ok_or_else(|| EwsError::DegenerateData("every CV cell failed".into()))?;
    let (d, m) = grid[idx];
    fit_gradient_boost(features, labels, d, m, seed)
}

/// Mann-Whitney AUC with ties at 0.5; None when labels are single-class.
fn rank_auc(scores: &[f64], y: &[f64]) -> Option<f64> {
    let pos: Vec<f64> = scores
        .iter()
        .zip(y)
        .filter(|(_, &yi)| yi == 1.0)
        .map(|(&s, _)| s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(y)
        .filter(|(_, &yi)| yi == 0.0)
        .map(|(&s, _)| s)
        .collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut wins = 0.0;
    for &p in &pos {
        for &q in &neg {
            wins += if p > q {
                1.0
            } else if p == q {
                0.5
            } else {
                0.0
            };
        }
    }
    Some(wins / (pos.len() * neg.len()) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::HorizonKind;
    use crate::frame::Frequency;
    use chrono::NaiveDate;

    fn panel(columns: Vec<(&str, Vec<f64>)>) -> FactorPanel {
        let n = columns[0].1.len();
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let dates = (0..n)
            .map(|i| start + chrono::Duration::days(i as i64))
            .collect();
        FactorPanel::from_columns(dates, columns, Frequency::Daily).unwrap()
    }

    fn labels(v: Vec<u8>) -> CrisisLabels {
        CrisisLabels::new(v, HorizonKind::ShortTerm, "test")
    }

    #[test]
    fn zero_rounds_is_label_mean() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let y: Vec<u8> = (0..20).map(|i| u8::from(i >= 14)).collect();
        let p = panel(vec![("x", x)]);
        let model = fit_gradient_boost(&p, &labels(y), 3, 0, 0).unwrap();
        for v in model.probabilities(&p).unwrap() {
            assert!((v - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn one_round_depth_one_matches_stump_oracle() {
        // Step function in one dimension; residuals after initialization are
        // y - mean, and a single stump splits at the step.
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<u8> = (0..10).map(|i| u8::from(i >= 6)).collect();
        let p = panel(vec![("x", x.clone())]);
        let model = fit_gradient_boost(&p, &labels(y.clone()), 1, 1, 0).unwrap();
        let got = model.raw_scores(&p).unwrap();

        // Hand oracle: mean = 0.4; best stump threshold 5.5; left leaf value
        // mean(-0.4 over 6 rows) = -0.4; right leaf mean(0.6 over 4) = 0.6.
        for (i, &g) in got.iter().enumerate() {
            let leaf = if (i as f64) <= 5.5 { -0.4 } else { 0.6 };
            let want = 0.4 + LEARNING_RATE * leaf;
            assert!((g - want).abs() < 1e-12, "row {i}: {g} vs {want}");
        }
    }

    #[test]
    fn single_feature_importance_is_hundred() {
        let x: Vec<f64> = (0..40).map(f64::from).collect();
        let y: Vec<u8> = (0..40).map(|i| u8::from(i >= 25)).collect();
        let p = panel(vec![("x", x)]);
        let model = fit_gradient_boost(&p, &labels(y), 3, 20, 0).unwrap();
        let imp = gbt_importance(&model);
        assert!((imp.score_of("x").unwrap() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn unused_feature_excluded_and_shares_sum_to_hundred() {
        let x: Vec<f64> = (0..60).map(f64::from).collect();
        let constant = vec![1.0; 60];
        let y: Vec<u8> = (0..60).map(|i| u8::from(i >= 40)).collect();
        let p = panel(vec![("x", x), ("dead", constant)]);
        let model = fit_gradient_boost(&p, &labels(y), 3, 30, 0).unwrap();
        let imp = gbt_importance(&model);
        assert_eq!(imp.score_of("dead"), None);
        let total: f64 = imp.entries.iter().filter_map(|e| e.score).sum();
        assert!((total - 100.0).abs() < 1e-9);
    }

    #[test]
    fn informative_feature_outranks_noise() {
        // Labels follow x1; x2 is a fixed pseudo-noise pattern.
        let n = 80;
        let x1: Vec<f64> = (0..n).map(f64::from).collect();
        let x2: Vec<f64> = (0..n).map(|i| ((i * 37) % 19) as f64).collect();
        let y: Vec<u8> = (0..n).map(|i| u8::from(i >= 50)).collect();
        let p = panel(vec![("x1", x1), ("x2", x2)]);
        let model = fit_gradient_boost(&p, &labels(y), 2, 25, 0).unwrap();
        let imp = gbt_importance(&model);
        let a = imp.score_of("x1").unwrap();
        let b = imp.score_of("x2").unwrap_or(0.0);
        assert!(a > b, "x1 {a} vs x2 {b}");
    }

    #[test]
    fn probabilities_clamped_to_unit_interval() {
        let x: Vec<f64> = (0..30).map(f64::from).collect();
        let y: Vec<u8> = (0..30).map(|i| u8::from(i >= 15)).collect();
        let p = panel(vec![("x", x)]);
        let model = fit_gradient_boost(&p, &labels(y), 5, 200, 0).unwrap();
        for v in model.probabilities(&p).unwrap() {
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn cv_grid_selects_and_fits() {
        let n = 100;
        let x: Vec<f64> = (0..n).map(|i| f64::from(i % 25)).collect();
        let y: Vec<u8> = x.iter().map(|&v| u8::from(v >= 18.0)).collect();
        let p = panel(vec![("x", x)]);
        let model =
            fit_gradient_boost_cv(&p, &labels(y), &[1, 3], &[50, 100], 5, 0).unwrap();
        assert!(model.depth == 1 || model.depth == 3);
        assert!(model.rounds == 50 || model.rounds == 100);
    }

    #[test]
    fn deterministic() {
        let x: Vec<f64> = (0..50).map(f64::from).collect();
        let y: Vec<u8> = (0..50).map(|i| u8::from(i % 3 == 0)).collect();
        let p = panel(vec![("x", x)]);
        let a = fit_gradient_boost(&p, &labels(y.clone()), 3, 100, 1).unwrap();
        let b = fit_gradient_boost(&p, &labels(y), 3, 100, 1).unwrap();
        let pa = a.probabilities(&p).unwrap();
        let pb = b.probabilities(&p).unwrap();
        for (x, y) in pa.iter().zip(&pb) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn invalid_depth_rejected() {
        let p = panel(vec![("x", vec![1.0, 2.0, 3.0, 4.0])]);
        assert!(fit_gradient_boost(&p, &labels(vec![0, 1, 0, 1]), 6, 10, 0).is_err());
        assert!(fit_gradient_boost(&p, &labels(vec![0, 1, 0, 1]), 0, 10, 0).is_err());
    }
}
