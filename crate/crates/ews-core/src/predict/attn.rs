//! Attention-weighted LSTM classifier: a tanh scoring layer with shared
//! per-feature weights produces a softmax over the window's timesteps; the
//! attention-scaled inputs feed one LSTM (zero initial state) and a sigmoid
//! head. Trained by full backpropagation through time on cross-entropy.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_labels, dense_matrix, ImportanceEntry, ImportanceTable};
use crate::classify::CrisisLabels;
use crate::frame::FactorPanel;
use crate::{EwsError, Result};

const LEARNING_RATE: f64 = 0.05;

/// Flat parameter vector layout for `n` features and `h` hidden units:
/// attention weights and biases (n each), then for each of the four gates
/// (input, forget, output, candidate) the input matrix W (h x n, row-major),
/// recurrent matrix U (h x h) and bias (h), then the output head (h + 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttnLayout {
    pub n: usize,
    pub h: usize,
}

impl AttnLayout {
    pub fn total(&self) -> usize {
        2 * self.n + 4 * (self.h * self.n + self.h * self.h + self.h) + self.h + 1
    }
    fn attn_w(&self) -> usize {
        0
    }
    fn attn_b(&self) -> usize {
        self.n
    }
    fn gate(&self, g: usize) -> (usize, usize, usize) {
        let per = self.h * self.n + self.h * self.h + self.h;
        let base = 2 * self.n + g * per;
        (base, base + self.h * self.n, base + self.h * self.n + self.h * self.h)
    }
    fn head_v(&self) -> usize {
        2 * self.n + 4 * (self.h * self.n + self.h * self.h + self.h)
    }
    fn head_c(&self) -> usize {
        self.total() - 1
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

struct WindowCache {
    e: Vec<Vec<f64>>,      // T x n tanh scores
    alpha: Vec<f64>,       // T
    z: Vec<Vec<f64>>,      // T x n scaled inputs
    gates: Vec<[Vec<f64>; 4]>, // T x (i,f,o,g) x h
    c: Vec<Vec<f64>>,      // T x h cell states
    h: Vec<Vec<f64>>,      // T x h hidden states
    p: f64,
}

fn forward_window(params: &[f64], x: &[Vec<f64>], lay: AttnLayout) -> WindowCache {
    let (n, hidden) = (lay.n, lay.h);
    let t_steps = x.len();

    // Attention scores and softmax over timesteps.
    let mut e = Vec::with_capacity(t_steps);
    let mut s = Vec::with_capacity(t_steps);
    for row in x {
        let et: Vec<f64> = (0..n)
            .map(|f| (params[lay.attn_w() + f] * row[f] + params[lay.attn_b() + f]).tanh())
            .collect();
        s.push(et.iter().sum::<f64>() / n as f64);
        e.push(et);
    }
    let s_max = s.iter().cloned().fold(f64::MIN, f64::max);
    let exps: Vec<f64> = s.iter().map(|v| (v - s_max).exp()).collect();
    let z_sum: f64 = exps.iter().sum();
    let alpha: Vec<f64> = exps.iter().map(|v| v / z_sum).collect();

    let z: Vec<Vec<f64>> = x
        .iter()
        .zip(&alpha)
        .map(|(row, &a)| row.iter().map(|v| a * v).collect())
        .collect();

    // LSTM sweep from zero state.
    let mut gates = Vec::with_capacity(t_steps);
    let mut cs = Vec::with_capacity(t_steps);
    let mut hs = Vec::with_capacity(t_steps);
    let mut c_prev = vec![0.0; hidden];
    let mut h_prev = vec![0.0; hidden];
    for zt in &z {
        let mut acts: [Vec<f64>; 4] = [vec![], vec![], vec![], vec![]];
        for (g, act) in acts.iter_mut().enumerate() {
            let (w0, u0, b0) = lay.gate(g);
            *act = (0..hidden)
                .map(|r| {
                    let mut a = params[b0 + r];
                    for f in 0..n {
                        a += params[w0 + r * n + f] * zt[f];
                    }
                    for q in 0..hidden {
                        a += params[u0 + r * hidden + q] * h_prev[q];
                    }
                    if g == 3 {
                        a.tanh()
                    } else {
                        sigmoid(a)
                    }
                })
                .collect();
        }
        let c_t: Vec<f64> = (0..hidden)
            .map(|r| acts[1][r] * c_prev[r] + acts[0][r] * acts[3][r])
            .collect();
        let h_t: Vec<f64> = (0..hidden).map(|r| acts[2][r] * c_t[r].tanh()).collect();
        gates.push(acts);
        cs.push(c_t.clone());
        hs.push(h_t.clone());
        c_prev = c_t;
        h_prev = h_t;
    }

    let mut out = params[lay.head_c()];
    for r in 0..hidden {
        out += params[lay.head_v() + r] * h_prev[r];
    }
    WindowCache {
        e,
        alpha,
        z,
        gates,
        c: cs,
        h: hs,
        p: sigmoid(out),
    }
}

/// Mean cross-entropy over the windows with its analytic gradient.
pub fn attn_loss_and_grad(
    params: &[f64],
    windows: &[(Vec<Vec<f64>>, f64)],
    lay: AttnLayout,
) -> (f64, Vec<f64>) {
    let (n, hidden) = (lay.n, lay.h);
    let m = windows.len() as f64;
    let mut grad = vec![0.0; lay.total()];
    let mut loss = 0.0;

    for (x, y) in windows {
        let t_steps = x.len();
        let cache = forward_window(params, x, lay);
        let p = cache.p.clamp(1e-12, 1.0 - 1e-12);
        loss += -(y * p.ln() + (1.0 - y) * (1.0 - p).ln()) / m;

        let d_out = (cache.p - y) / m;
        grad[lay.head_c()] += d_out;
        let mut dh = vec![0.0; hidden];
        for r in 0..hidden {
            grad[lay.head_v() + r] += d_out * cache.h[t_steps - 1][r];
            dh[r] = d_out * params[lay.head_v() + r];
        }

        let mut dc = vec![0.0; hidden];
        let mut dz = vec![vec![0.0; n]; t_steps];
        for t in (0..t_steps).rev() {
            let acts = &cache.gates[t];
            let c_t = &cache.c[t];
            let c_prev: Vec<f64> = if t == 0 {
                vec![0.0; hidden]
            } else {
                cache.c[t - 1].clone()
            };
            let h_prev: Vec<f64> = if t == 0 {
                vec![0.0; hidden]
            } else {
                cache.h[t - 1].clone()
            };

            let mut da = [
                vec![0.0; hidden],
                vec![0.0; hidden],
                vec![0.0; hidden],
                vec![0.0; hidden],
            ];
            for r in 0..hidden {
                let tanh_c = c_t[r].tanh();
                let d_o = dh[r] * tanh_c;
                let dct = dc[r] + dh[r] * acts[2][r] * (1.0 - tanh_c * tanh_c);
                let d_i = dct * acts[3][r];
                let d_g = dct * acts[0][r];
                let d_f = dct * c_prev[r];
                dc[r] = dct * acts[1][r];
                da[0][r] = d_i * acts[0][r] * (1.0 - acts[0][r]);
                da[1][r] = d_f * acts[1][r] * (1.0 - acts[1][r]);
                da[2][r] = d_o * acts[2][r] * (1.0 - acts[2][r]);
                da[3][r] = d_g * (1.0 - acts[3][r] * acts[3][r]);
            }

            let mut dh_prev = vec![0.0; hidden];
            for (g, dag) in da.iter().enumerate() {
                let (w0, u0, b0) = lay.gate(g);
                for r in 0..hidden {
                    grad[b0 + r] += dag[r];
                    for f in 0..n {
                        grad[w0 + r * n + f] += dag[r] * cache.z[t][f];
                        dz[t][f] += dag[r] * params[w0 + r * n + f];
                    }
                    for q in 0..hidden {
                        grad[u0 + r * hidden + q] += dag[r] * h_prev[q];
                        dh_prev[q] += dag[r] * params[u0 + r * hidden + q];
                    }
                }
            }
            dh = dh_prev;
        }

        // Through the attention softmax into the scoring layer.
        let dalpha: Vec<f64> = (0..t_steps)
            .map(|t| (0..n).map(|f| dz[t][f] * x[t][f]).sum())
            .collect();
        let dot: f64 = cache
            .alpha
            .iter()
            .zip(&dalpha)
            .map(|(a, d)| a * d)
            .sum();
        for t in 0..t_steps {
            let ds = cache.alpha[t] * (dalpha[t] - dot);
            let de = ds / n as f64;
            for f in 0..n {
                let e = cache.e[t][f];
                let dpre = de * (1.0 - e * e);
                grad[lay.attn_w() + f] += dpre * x[t][f];
                grad[lay.attn_b() + f] += dpre;
            }
        }
    }
    (loss, grad)
}

/// A fitted attention-LSTM.
#[derive(Debug, Clone)]
pub struct AttnLstmModel {
    pub feature_names: Vec<String>,
    pub t_steps: usize,
    pub hidden: usize,
    pub params: Vec<f64>,
    pub epochs: usize,
    pub seed: u64,
    /// Mean absolute within-window deviation of each feature's pre-softmax
    /// attention score over the training windows (importance before
    /// normalization).
    pub attention_mass: Vec<f64>,
}

fn make_windows(rows: &[Vec<f64>], y: &[f64], t_steps: usize) -> Vec<(Vec<Vec<f64>>, f64)> {
    (t_steps - 1..rows.len())
        .map(|t| (rows[t + 1 - t_steps..=t].to_vec(), y[t]))
        .collect()
}

/// Trains for `epochs` full-batch passes. Deterministic given the seed.
pub fn fit_attn_lstm(
    features: &FactorPanel,
    labels: &CrisisLabels,
    t_steps: usize,
    hidden: usize,
    epochs: usize,
    seed: u64,
) -> Result<AttnLstmModel> {
    if t_steps < 2 {
        return Err(EwsError::InvalidArgument("T_steps must be >= 2".into()));
    }
    let y = check_labels(features, labels)?;
    let (rows, names) = dense_matrix(features, &[])?;
    if rows.len() < t_steps {
        return Err(EwsError::TooShort {
            need: t_steps,
            got: rows.len(),
        });
    }
    let lay = AttnLayout {
        n: names.len(),
        h: hidden,
    };
    let windows = make_windows(&rows, &y, t_steps);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / ((names.len() + hidden).max(1) as f64).sqrt();
    let mut params: Vec<f64> = (0..lay.total())
        .map(|_| rng.gen_range(-0.5..0.5) * scale)
        .collect();

    for epoch in 0..epochs {
        let (loss, grad) = attn_loss_and_grad(&params, &windows, lay);
        if !loss.is_finite() {
            return Err(EwsError::NonFiniteLoss { epoch });
        }
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= LEARNING_RATE * g;
        }
    }

    // Attention mass per feature for the importance table: mean absolute
    // deviation of a feature's scores within each window. A score that is
    // constant across the window cannot move the softmax, so only the
    // variation counts as attention contribution.
    let mut mass = vec![0.0; names.len()];
    let mut count = 0usize;
    for (x, _) in &windows {
        let cache = forward_window(&params, x, lay);
        let steps = cache.e.len() as f64;
        for f in 0..names.len() {
            let mean: f64 = cache.e.iter().map(|et| et[f]).sum::<f64>() / steps;
            mass[f] += cache.e.iter().map(|et| (et[f] - mean).abs()).sum::<f64>();
        }
        count += cache.e.len();
    }
    if count > 0 {
        for m in mass.iter_mut() {
            *m /= count as f64;
        }
    }

    Ok(AttnLstmModel {
        feature_names: names,
        t_steps,
        hidden,
        params,
        epochs,
        seed,
        attention_mass: mass,
    })
}

impl AttnLstmModel {
    /// Per-row probabilities. Rows earlier than one full window use a window
    /// front-padded with the first row.
    pub fn probabilities(&self, features: &FactorPanel) -> Result<Vec<f64>> {
        let (rows, _) = dense_matrix(features, &self.feature_names)?;
        if rows.is_empty() {
            return Ok(vec![]);
        }
        let lay = AttnLayout {
            n: self.feature_names.len(),
            h: self.hidden,
        };
        Ok((0..rows.len())
            .map(|t| {
                let window: Vec<Vec<f64>> = (0..self.t_steps)
                    .map(|k| {
                        let idx = (t + 1 + k).saturating_sub(self.t_steps);
                        rows[idx.min(t)].clone()
                    })
                    .collect();
                forward_window(&self.params, &window, lay).p
            })
            .collect())
    }

    /// Attention weights over one window (exposed for tests).
    pub fn attention_weights(&self, window: &[Vec<f64>]) -> Vec<f64> {
        let lay = AttnLayout {
            n: self.feature_names.len(),
            h: self.hidden,
        };
        forward_window(&self.params, &window.to_vec(), lay).alpha
    }
}

/// Final attention mass per feature, scaled to percentages summing to 100.
pub fn attn_importance(model: &AttnLstmModel) -> ImportanceTable {
    let total: f64 = model.attention_mass.iter().sum();
    let k = model.attention_mass.len() as f64;
    let entries = model
        .feature_names
        .iter()
        .zip(&model.attention_mass)
        .map(|(name, &m)| ImportanceEntry {
            feature: name.clone(),
            score: Some(if total > 0.0 {
                100.0 * m / total
            } else {
                100.0 / k
            }),
            method: "wgt".into(),
        })
        .collect();
    ImportanceTable::new(entries)
}
