//! Three-layer perceptron (ReLU hidden layer, sigmoid output) trained by
//! full-batch gradient descent on L2-penalized cross-entropy.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_labels, dense_matrix, ImportanceEntry, ImportanceTable};
use crate::classify::CrisisLabels;
use crate::frame::FactorPanel;
use crate::{EwsError, Result};

const LEARNING_RATE: f64 = 0.01;
const PATIENCE: usize = 10;

/// Network weights: `w1` is hidden x input, `w2` is the output row.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl MlpParams {
    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        MlpParams {
            w1: vec![vec![0.0; inputs]; hidden],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
        }
    }

    fn random(inputs: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let scale = 1.0 / (inputs.max(1) as f64).sqrt();
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.gen_range(-0.5..0.5) * scale).collect()
        };
        MlpParams {
            w1: (0..hidden).map(|_| draw(inputs)).collect(),
            b1: draw(hidden),
            w2: draw(hidden),
            b2: 0.0,
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.w1.iter().flatten().copied().collect();
        v.extend(&self.b1);
        v.extend(&self.w2);
        v.push(self.b2);
        v
    }

    pub fn from_flat(flat: &[f64], inputs: usize, hidden: usize) -> Self {
        let mut it = flat.iter().copied();
        let mut take = |n: usize| -> Vec<f64> { (0..n).map(|_| it.next().unwrap()).collect() };
        MlpParams {
            w1: (0..hidden).map(|_| take(inputs)).collect(),
            b1: take(hidden),
            w2: take(hidden),
            b2: it.next().unwrap(),
        }
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        let z2: f64 = self
            .w1
            .iter()
            .zip(&self.b1)
            .zip(&self.w2)
            .map(|((w_row, &b), &v)| {
                let z: f64 = w_row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b;
                v * z.max(0.0)
            })
            .sum::<f64>()
            + self.b2;
        sigmoid(z2)
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

/// Mean cross-entropy over the batch plus `0.5 * l2 * ||weights||^2`
/// (biases unpenalized), with its analytic gradient.
pub fn mlp_loss_and_grad(
    params: &MlpParams,
    x: &[Vec<f64>],
    y: &[f64],
    l2: f64,
) -> (f64, MlpParams) {
    let n = x.len() as f64;
    let hidden = params.w2.len();
    let inputs = params.w1.first().map_or(0, |r| r.len());
    let mut grad = MlpParams::zeros(inputs, hidden);
    let mut loss = 0.0;

    for (xi, &yi) in x.iter().zip(y) {
        let z1: Vec<f64> = params
            .w1
            .iter()
            .zip(&params.b1)
            .map(|(row, &b)| row.iter().zip(xi).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect();
        let a1: Vec<f64> = z1.iter().map(|&z| z.max(0.0)).collect();
        let z2: f64 = params.w2.iter().zip(&a1).map(|(w, a)| w * a).sum::<f64>() + params.b2;
        let p = sigmoid(z2);

        // Stable cross-entropy: -y*log p - (1-y)*log(1-p) via logits.
        let log1pez = if z2 > 0.0 {
            z2 + (-z2).exp().ln_1p()
        } else {
            z2.exp().ln_1p()
        };
        loss += (log1pez - yi * z2) / n;

        let dz2 = (p - yi) / n;
        grad.b2 += dz2;
        for h in 0..hidden {
            grad.w2[h] += dz2 * a1[h];
            if z1[h] > 0.0 {
                let dz1 = dz2 * params.w2[h];
                grad.b1[h] += dz1;
                for (g, v) in grad.w1[h].iter_mut().zip(xi) {
                    *g += dz1 * v;
                }
            }
        }
    }

    for (g_row, p_row) in grad.w1.iter_mut().zip(&params.w1) {
        for (g, w) in g_row.iter_mut().zip(p_row) {
            loss += 0.5 * l2 * w * w;
            *g += l2 * w;
        }
    }
    for (g, w) in grad.w2.iter_mut().zip(&params.w2) {
        loss += 0.5 * l2 * w * w;
        *g += l2 * w;
    }
    (loss, grad)
}

/// A fitted perceptron plus the hyperparameters needed to refit it
/// (drop-one importance refits with identical settings).
#[derive(Debug, Clone)]
pub struct MlpModel {
    pub feature_names: Vec<String>,
    pub params: MlpParams,
    pub hidden: usize,
    pub l2: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Epoch the early stop triggered at, if it did.
    pub stopped_at: Option<usize>,
}

impl MlpModel {
    pub fn probabilities(&self, features: &FactorPanel) -> Result<Vec<f64>> {
        let (rows, _) = dense_matrix(features, &self.feature_names)?;
        Ok(rows.iter().map(|x| self.params.forward(x)).collect())
    }

    /// In-sample classification accuracy at threshold 0.5.
    fn accuracy(&self, features: &FactorPanel, y: &[f64]) -> Result<f64> {
        let probs = self.probabilities(features)?;
        let correct = probs
            .iter()
            .zip(y)
            .filter(|(&p, &yi)| f64::from(p >= 0.5) == yi)
            .count();
        Ok(correct as f64 / y.len() as f64)
    }
}

/// Trains the network for `epochs` full-batch passes with early stopping on
/// the trailing 10% of rows (patience 10, best-validation weights kept).
pub fn fit_mlp(
    features: &FactorPanel,
    labels: &CrisisLabels,
    hidden: usize,
    l2: f64,
    epochs: usize,
    seed: u64,
) -> Result<MlpModel> {
    if ![2, 4, 8, 16, 32].contains(&hidden) {
        return Err(EwsError::InvalidArgument(format!(
            "hidden width {hidden} not in {{2,4,8,16,32}}"
        )));
    }
    let y = check_labels(features, labels)?;
    let (rows, names) = dense_matrix(features, &[])?;
    let n = rows.len();
    if n < 5 {
        return Err(EwsError::TooShort { need: 5, got: n });
    }
    let val_len = (n / 10).max(1);
    let split = n - val_len;
    let (x_train, y_train) = (&rows[..split], &y[..split]);
    let (x_val, y_val) = (&rows[split..], &y[split..]);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = MlpParams::random(names.len(), hidden, &mut rng);
    let mut best = params.clone();
    let mut best_val = f64::INFINITY;
    let mut since_best = 0;
    let mut stopped_at = None;

    for epoch in 0..epochs {
        let (loss, grad) = mlp_loss_and_grad(&params, x_train, y_train, l2);
        if !loss.is_finite() {
            return Err(EwsError::NonFiniteLoss { epoch });
        }
        for (p_row, g_row) in params.w1.iter_mut().zip(&grad.w1) {
            for (p, g) in p_row.iter_mut().zip(g_row) {
                *p -= LEARNING_RATE * g;
            }
        }
        for (p, g) in params.b1.iter_mut().zip(&grad.b1) {
            *p -= LEARNING_RATE * g;
        }
        for (p, g) in params.w2.iter_mut().zip(&grad.w2) {
            *p -= LEARNING_RATE * g;
        }
        params.b2 -= LEARNING_RATE * grad.b2;

        let (val_loss, _) = mlp_loss_and_grad(&params, x_val, y_val, l2);
        if val_loss < best_val {
            best_val = val_loss;
            best = params.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= PATIENCE {
                stopped_at = Some(epoch);
                break;
            }
        }
    }

    Ok(MlpModel {
        feature_names: names,
        params: best,
        hidden,
        l2,
        epochs,
        seed,
        stopped_at,
    })
}

/// Drop-one-feature importance: refit without each feature (same seed and
/// hyperparameters) and report the accuracy loss in percentage points;
/// losses below 0.1 report as 0.
pub fn mlp_importance(
    model: &MlpModel,
    features: &FactorPanel,
    labels: &CrisisLabels,
) -> Result<ImportanceTable> {
    let y = check_labels(features, labels)?;
    let full_acc = model.accuracy(features, &y)?;
    let mut entries = Vec::with_capacity(model.feature_names.len());
    for name in &model.feature_names {
        let keep: Vec<&str> = model
            .feature_names
            .iter()
            .filter(|n| n != &name)
            .map(|s| s.as_str())
            .collect();
        let reduced_panel = features.select(&keep)?;
        let reduced = fit_mlp(
            &reduced_panel,
            labels,
            model.hidden,
            model.l2,
            model.epochs,
            model.seed,
        )?;
        let acc = reduced.accuracy(&reduced_panel, &y)?;
        let mut loss_pct = 100.0 * (full_acc - acc);
        if loss_pct.abs() < 0.1 {
            loss_pct = 0.0;
        }
        entries.push(ImportanceEntry {
            feature: name.clone(),
            score: Some(loss_pct),
            method: "imp".into(),
        });
    }
    Ok(ImportanceTable::new(entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::HorizonKind;
    use crate::frame::Frequency;
    use chrono::NaiveDate;
    use rand::distributions::Distribution;
    use statrs::distribution::Normal;

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
    fn activation_pointwise_values() {
        // ReLU through a 1-hidden-unit identity path: f(-2)=0, f(3)=3.
        let mut p = MlpParams::zeros(1, 1);
        p.w1[0][0] = 1.0;
        p.w2[0] = 1.0;
        // forward = sigmoid(relu(x)); invert the sigmoid to read relu.
        let relu = |x: f64| {
            let s = p.forward(&[x]);
            (s / (1.0 - s)).ln()
        };
        assert!((relu(-2.0) - 0.0).abs() < 1e-12);
        assert!((relu(3.0) - 3.0).abs() < 1e-12);
        // sigmoid(0) = 0.5.
        assert_eq!(MlpParams::zeros(3, 2).forward(&[5.0, -1.0, 2.0]), 0.5);
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let (inputs, hidden, n) = (5, 4, 20);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..inputs).map(|_| normal.sample(&mut rng)).collect())
            .collect();
        let y: Vec<f64> = (0..n).map(|_| f64::from(rng.gen::<bool>())).collect();
        let params = MlpParams::random(inputs, hidden, &mut rng);
        let l2 = 0.01;

        let (_, grad) = mlp_loss_and_grad(&params, &x, &y, l2);
        let g = grad.to_flat();
        let flat = params.to_flat();
        let h = 1e-6;
        let mut max_rel = 0.0f64;
        for i in 0..flat.len() {
            let mut plus = flat.clone();
            plus[i] += h;
            let mut minus = flat.clone();
            minus[i] -= h;
            let lp = mlp_loss_and_grad(&MlpParams::from_flat(&plus, inputs, hidden), &x, &y, l2).0;
            let lm = mlp_loss_and_grad(&MlpParams::from_flat(&minus, inputs, hidden), &x, &y, l2).0;
            let fd = (lp - lm) / (2.0 * h);
            let rel = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-8);
            max_rel = max_rel.max(rel);
        }
        assert!(max_rel < 1e-5, "max relative error {max_rel}");
    }

    fn separable_data(seed: u64, n: usize) -> (FactorPanel, CrisisLabels) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let info: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
        let noise: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
        let y: Vec<u8> = info.iter().map(|&v| u8::from(v > 0.0)).collect();
        (
            panel(vec![("info", info), ("noise", noise)]),
            labels(y),
        )
    }

    #[test]
    fn deterministic_given_seed() {
        let (p, y) = separable_data(1, 120);
        let a = fit_mlp(&p, &y, 4, 1e-4, 60, 7).unwrap();
        let b = fit_mlp(&p, &y, 4, 1e-4, 60, 7).unwrap();
        assert_eq!(a.params, b.params);
        let pa = a.probabilities(&p).unwrap();
        let pb = b.probabilities(&p).unwrap();
        for (x, y) in pa.iter().zip(&pb) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn importance_informative_feature_dominates() {
        let (p, y) = separable_data(3, 300);
        let model = fit_mlp(&p, &y, 8, 1e-4, 100, 11).unwrap();
        let table = mlp_importance(&model, &p, &y).unwrap();
        let info = table.score_of("info").unwrap();
        let noise = table.score_of("noise").unwrap();
        assert!(info > noise, "info {info} vs noise {noise}");
        assert!(info > 0.0);
    }

    #[test]
    fn duplicate_feature_importance_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let n = 200;
        let a: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
        let y: Vec<u8> = a.iter().map(|&v| u8::from(v > 0.0)).collect();
        let p = panel(vec![("a", a.clone()), ("a_copy", a)]);
        let model = fit_mlp(&p, &labels(y.clone()), 4, 1e-4, 3000, 2).unwrap();
        let table = mlp_importance(&model, &p, &labels(y)).unwrap();
        // Either copy carries the other's information, so dropping one
        // costs (almost) nothing.
        for name in ["a", "a_copy"] {
            let score = table.score_of(name).unwrap();
            assert!(score.abs() <= 5.0, "{name} score {score}");
        }
    }

    #[test]
    fn refit_same_seed_zero_loss() {
        let (p, y) = separable_data(5, 150);
        let model = fit_mlp(&p, &y, 4, 1e-4, 80, 13).unwrap();
        let refit = fit_mlp(&p, &y, 4, 1e-4, 80, 13).unwrap();
        let ys = check_labels(&p, &y).unwrap();
        let a = model.accuracy(&p, &ys).unwrap();
        let b = refit.accuracy(&p, &ys).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_hidden_width_rejected() {
        let (p, y) = separable_data(1, 50);
        assert!(fit_mlp(&p, &y, 5, 1e-4, 10, 0).is_err());
    }
}
