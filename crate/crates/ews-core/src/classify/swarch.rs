//! AR(p)-SWARCH(K,q): autoregression with Markov regime-scaled ARCH variance,
//! fitted by maximizing the Hamilton-filter likelihood.
//!
//! The observation model is
//!
//! ```text
//! y_t = u + theta_1 y_{t-1} + ... + theta_p y_{t-p} + eps_t
//! eps_t | I_{t-1} ~ N(0, sigma2_t)
//! sigma2_t = gamma_{s_t} * (alpha_0 + sum_j alpha_j eps_{t-j}^2 / gamma_{s_{t-j}})
//! ```
//!
//! with `s_t` a K-state Markov chain and `gamma_1 = 1`. Because the variance
//! depends on the last `q` regimes, the filter runs over composite states
//! `(s_t, ..., s_{t-q})`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::frame::mean_sd;
use crate::optim::nelder_mead;
use crate::{EwsError, Result};

/// Parameters of an AR(p)-SWARCH(K,q) model.
#[derive(Debug, Clone)]
pub struct RegimeModel {
    pub k: usize,
    pub p: usize,
    pub q: usize,
    pub intercept: f64,
    pub ar_coeffs: Vec<f64>,
    /// `alpha_0..alpha_q`, all nonnegative with `alpha_0 > 0`.
    pub arch_coeffs: Vec<f64>,
    /// `gamma_1..gamma_K`, ascending with `gamma_1 == 1`.
    pub scales: Vec<f64>,
    /// Row-stochastic K x K transition matrix.
    pub transition: Vec<Vec<f64>>,
    /// Achieved Hamilton-filter log likelihood.
    pub log_likelihood: f64,
    /// T x K filtered state probabilities, one row per observation. Rows
    /// before the first filterable index carry the ergodic distribution.
    pub filtered: Vec<Vec<f64>>,
    /// Whether the optimizer met its tolerance within the iteration budget.
    pub converged: bool,
}

impl RegimeModel {
    /// Filtered probability of the highest-volatility regime, `FPH_t`.
    pub fn filtered_high_vol(&self) -> Vec<f64> {
        self.filtered.iter().map(|row| row[self.k - 1]).collect()
    }

    /// Human-readable parameter report.
    pub fn report(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "AR({})-SWARCH({},{})\nlog-likelihood: {}\nconverged: {}\n",
            self.p, self.k, self.q, self.log_likelihood, self.converged
        ));
        s.push_str(&format!("intercept: {}\n", self.intercept));
        s.push_str(&format!("ar_coeffs: {:?}\n", self.ar_coeffs));
        s.push_str(&format!("arch_coeffs: {:?}\n", self.arch_coeffs));
        s.push_str(&format!("scales: {:?}\n", self.scales));
        s.push_str("transition:\n");
        for row in &self.transition {
            s.push_str(&format!("  {row:?}\n"));
        }
        s
    }

    /// Filtered probabilities as `date-less` CSV (`t,p_1..p_K`).
    pub fn filtered_csv(&self) -> String {
        let mut out = String::from("t");
        for k in 1..=self.k {
            out.push_str(&format!(",p{k}"));
        }
        out.push('\n');
        for (t, row) in self.filtered.iter().enumerate() {
            out.push_str(&t.to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Plain parameter bundle for likelihood evaluation and simulation.
#[derive(Debug, Clone)]
pub struct SwarchSpec {
    pub k: usize,
    pub p: usize,
    pub q: usize,
    pub intercept: f64,
    pub ar_coeffs: Vec<f64>,
    pub arch_coeffs: Vec<f64>,
    pub scales: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
}

impl SwarchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > 4 {
            return Err(EwsError::InvalidArgument(format!("K={} out of range", self.k)));
        }
        if self.ar_coeffs.len() != self.p || self.arch_coeffs.len() != self.q + 1 {
            return Err(EwsError::InvalidArgument("coefficient lengths".into()));
        }
        if !(self.arch_coeffs[0] > 0.0) || self.arch_coeffs.iter().any(|&a| a < 0.0) {
            return Err(EwsError::InvalidArgument("arch coefficients".into()));
        }
        if self.scales.len() != self.k || (self.scales[0] - 1.0).abs() > 1e-12 {
            return Err(EwsError::InvalidArgument("scales".into()));
        }
        if self.transition.len() != self.k {
            return Err(EwsError::InvalidTransition("row count".into()));
        }
        for row in &self.transition {
            if row.len() != self.k || row.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(EwsError::InvalidTransition("row entries".into()));
            }
            if (row.iter().sum::<f64>() - 1.0).abs() > 1e-10 {
                return Err(EwsError::InvalidTransition("row sum".into()));
            }
        }
        Ok(())
    }

    /// Ergodic distribution of the transition matrix (power iteration).
    pub fn ergodic(&self) -> Vec<f64> {
        let k = self.k;
        let mut pi = vec![1.0 / k as f64; k];
        for _ in 0..500 {
            let mut next = vec![0.0; k];
            for i in 0..k {
                for j in 0..k {
                    next[j] += pi[i] * self.transition[i][j];
                }
            }
            let s: f64 = next.iter().sum();
            for v in next.iter_mut() {
                *v /= s;
            }
            pi = next;
        }
        pi
    }
}

/// Hamilton filter: returns per-time filtered regime probabilities (rows sum
/// to 1) and the total log likelihood.
pub fn hamilton_filter(returns: &[f64], spec: &SwarchSpec) -> Result<(Vec<Vec<f64>>, f64)> {
    spec.validate()?;
    let t_total = returns.len();
    let (k, p, q) = (spec.k, spec.p, spec.q);
    let t0 = p + q;
    if t_total <= t0 + 1 {
        return Err(EwsError::TooShort {
            need: t0 + 2,
            got: t_total,
        });
    }

    // AR residuals, valid from index p.
    let mut eps = vec![0.0; t_total];
    for t in p..t_total {
        let mut fitted = spec.intercept;
        for (lag, theta) in spec.ar_coeffs.iter().enumerate() {
            fitted += theta * returns[t - 1 - lag];
        }
        eps[t] = returns[t] - fitted;
    }

    // Composite states: tuple (s_t, s_{t-1}, ..., s_{t-q}) encoded base K
    // with the current state in the lowest digit.
    let m_total = k.pow(q as u32 + 1);
    let k_pow_q = k.pow(q as u32);
    let ergodic = spec.ergodic();

    // Stationary distribution over composite tuples.
    let mut pi = vec![0.0; m_total];
    for (m, prob) in pi.iter_mut().enumerate() {
        let digits: Vec<usize> = (0..=q).map(|j| (m / k.pow(j as u32)) % k).collect();
        let mut pr = ergodic[digits[q]];
        for j in (0..q).rev() {
            pr *= spec.transition[digits[j + 1]][digits[j]];
        }
        *prob = pr;
    }

    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let mut filtered = vec![vec![0.0; k]; t_total];
    for row in filtered.iter_mut().take(t0) {
        row.copy_from_slice(&ergodic);
    }
    let mut loglik = 0.0;
    let mut lag_sum = vec![0.0; k_pow_q];
    let mut weights = vec![0.0; m_total];

    for t in t0..t_total {
        // Predict: marginalize the oldest lag, then extend with a new state.
        for v in lag_sum.iter_mut() {
            *v = 0.0;
        }
        for (m, &prob) in pi.iter().enumerate() {
            lag_sum[m % k_pow_q] += prob;
        }
        // Update with the conditional Gaussian density per tuple.
        let mut total = 0.0;
        for m in 0..m_total {
            let lags = m / k;
            let predicted = spec.transition[lags % k][m % k] * lag_sum[lags];
            let s_now = m % k;
            let mut h = spec.arch_coeffs[0];
            for j in 1..=q {
                let s_lag = (m / k.pow(j as u32)) % k;
                h += spec.arch_coeffs[j] * eps[t - j] * eps[t - j] / spec.scales[s_lag];
            }
            let sigma2 = spec.scales[s_now] * h;
            let logpdf = -0.5 * (ln_2pi + sigma2.ln() + eps[t] * eps[t] / sigma2);
            weights[m] = predicted * logpdf.exp();
            total += weights[m];
        }
        if !(total > 0.0) || !total.is_finite() {
            return Err(EwsError::DegenerateData(format!(
                "filter underflow at t={t}"
            )));
        }
        loglik += total.ln();
        for (m, w) in weights.iter().enumerate() {
            pi[m] = w / total;
            filtered[t][m % k] += pi[m];
        }
        // Summing normalized weights can overshoot 1 by an ulp; downstream
        // consumers treat these as probabilities in [0,1].
        for v in filtered[t].iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
    }
    Ok((filtered, loglik))
}

/// Controls for the maximum-likelihood search.
#[derive(Debug, Clone)]
pub struct SwarchFitOptions {
    /// Seeded random restarts; the best likelihood is kept.
    pub multistarts: usize,
    /// Nelder-Mead iteration budget per start (scaled by dimension).
    pub max_iters_per_dim: usize,
    pub tol: f64,
}

impl Default for SwarchFitOptions {
    fn default() -> Self {
        SwarchFitOptions {
            multistarts: 20,
            max_iters_per_dim: 300,
            tol: 1e-9,
        }
    }
}

/// Fits by maximum likelihood with the default options.
pub fn fit_swarch(returns: &[f64], k: usize, p: usize, q: usize, seed: u64) -> Result<RegimeModel> {
    fit_swarch_with(returns, k, p, q, seed, &SwarchFitOptions::default())
}

/// Fits by maximum likelihood. Identical seed and inputs reproduce identical
/// output: starting points are drawn from one seeded stream and the best
/// start is selected by (likelihood, start index).
pub fn fit_swarch_with(
    returns: &[f64],
    k: usize,
    p: usize,
    q: usize,
    seed: u64,
    options: &SwarchFitOptions,
) -> Result<RegimeModel> {
    if !(1..=4).contains(&k) {
        return Err(EwsError::InvalidArgument(format!("K={k} must be in 1..=4")));
    }
    if p > 3 || q > 3 {
        return Err(EwsError::InvalidArgument("p and q must be <= 3".into()));
    }
    if returns.len() < 30 * k {
        return Err(EwsError::TooShort {
            need: 30 * k,
            got: returns.len(),
        });
    }
    let (mu_y, sd_y) = mean_sd(returns);
    if !(sd_y > 0.0) {
        return Err(EwsError::DegenerateData("constant returns".into()));
    }
    let var_y = sd_y * sd_y;

    let dim = 1 + p + (q + 1) + (k - 1) + k * (k - 1);
    let max_iter = options.max_iters_per_dim * dim;

    // Draw every start from one stream so thread count cannot change them.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<Vec<f64>> = (0..options.multistarts.max(1))
        .map(|_| random_start(&mut rng, k, p, q, mu_y, var_y))
        .collect();

    let results: Vec<(usize, Vec<f64>, f64, bool)> = starts
        .into_par_iter()
        .enumerate()
        .map(|(idx, x0)| {
            let objective = |x: &[f64]| {
                let spec = decode(x, k, p, q);
                match hamilton_filter(returns, &spec) {
                    Ok((_, ll)) => -ll,
                    Err(_) => f64::INFINITY,
                }
            };
            let (x, v, conv) = nelder_mead(objective, &x0, 0.4, max_iter, options.tol);
            (idx, x, v, conv)
        })
        .collect();

    let best = results
        .iter()
        .min_by(|a, b| {
            a.2.partial_cmp(&b.2)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.0.cmp(&b.0))
        })
        .expect("at least one start");
    if !best.2.is_finite() {
        return Err(EwsError::DegenerateData(
            "likelihood not finite at any start".into(),
        ));
    }

    // Polish the winner with a tighter simplex.
    let objective = |x: &[f64]| {
        let spec = decode(x, k, p, q);
        match hamilton_filter(returns, &spec) {
            Ok((_, ll)) => -ll,
            Err(_) => f64::INFINITY,
        }
    };
    let (x, v, conv2) = nelder_mead(objective, &best.1, 0.05, max_iter, options.tol);
    let (x, v) = if v < best.2 { (x, v) } else { (best.1.clone(), best.2) };

    let spec = decode(&x, k, p, q);
    let (filtered, loglik) = hamilton_filter(returns, &spec)?;
    debug_assert!((loglik + v).abs() < 1e-6 * (1.0 + v.abs()));
    Ok(RegimeModel {
        k,
        p,
        q,
        intercept: spec.intercept,
        ar_coeffs: spec.ar_coeffs,
        arch_coeffs: spec.arch_coeffs,
        scales: spec.scales,
        transition: spec.transition,
        log_likelihood: loglik,
        filtered,
        converged: best.3 || conv2,
    })
}

/// Regime classification measure: `100 * K^2 * mean_t prod_k p_{t,k}`.
/// 0 means perfectly separated regimes; 100 is maximal confusion for K=2.
pub fn rcm(model: &RegimeModel) -> f64 {
    let k2 = (model.k * model.k) as f64;
    let mean_prod = model
        .filtered
        .iter()
        .map(|row| row.iter().product::<f64>())
        .sum::<f64>()
        / model.filtered.len() as f64;
    100.0 * k2 * mean_prod
}

/// Filtered probability of the high-volatility regime.
pub fn filtered_high_vol(model: &RegimeModel) -> Vec<f64> {
    model.filtered_high_vol()
}

// Unconstrained parameterization: positivity via exp, gamma ascending via
// cumulative exp increments, transition rows via softmax with the diagonal
// as reference.
fn decode(x: &[f64], k: usize, p: usize, q: usize) -> SwarchSpec {
    let mut i = 0;
    let intercept = x[i];
    i += 1;
    let ar_coeffs = x[i..i + p].to_vec();
    i += p;
    let arch_coeffs: Vec<f64> = x[i..i + q + 1].iter().map(|a| a.exp()).collect();
    i += q + 1;
    let mut scales = vec![1.0];
    for g in &x[i..i + k - 1] {
        let prev = *scales.last().unwrap();
        scales.push(prev + g.exp());
    }
    i += k - 1;
    let mut transition = Vec::with_capacity(k);
    for row_idx in 0..k {
        let logits = &x[i..i + k - 1];
        i += k - 1;
        // softmax over [logits interleaved with 0 at the diagonal]
        let mut full = Vec::with_capacity(k);
        let mut off = 0;
        for col in 0..k {
            if col == row_idx {
                full.push(0.0);
            } else {
                full.push(logits[off]);
                off += 1;
            }
        }
        let max = full.iter().cloned().fold(f64::MIN, f64::max);
        let exps: Vec<f64> = full.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        transition.push(exps.iter().map(|e| e / sum).collect());
    }
    SwarchSpec {
        k,
        p,
        q,
        intercept,
        ar_coeffs,
        arch_coeffs,
        scales,
        transition,
    }
}

fn random_start(
    rng: &mut ChaCha8Rng,
    k: usize,
    p: usize,
    q: usize,
    mu_y: f64,
    var_y: f64,
) -> Vec<f64> {
    let mut x = Vec::new();
    x.push(mu_y * rng.gen_range(0.5..1.5));
    for _ in 0..p {
        x.push(rng.gen_range(-0.3..0.3));
    }
    x.push((var_y * rng.gen_range(0.2..1.0)).ln());
    for _ in 0..q {
        x.push(rng.gen_range(0.05f64..0.5).ln());
    }
    for _ in 0..k - 1 {
        x.push(rng.gen_range(0.5f64..8.0).ln());
    }
    for _ in 0..k {
        // Off-diagonal logits well below the diagonal reference favors
        // persistent chains, where SWARCH likelihoods are usually found.
        for _ in 0..k - 1 {
            x.push(rng.gen_range(-4.0..-1.0));
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate_swarch, SimSpec};

    fn two_regime_spec() -> SwarchSpec {
        SwarchSpec {
            k: 2,
            p: 0,
            q: 1,
            intercept: 0.0,
            ar_coeffs: vec![],
            arch_coeffs: vec![1.0, 0.3],
            scales: vec![1.0, 10.0],
            transition: vec![vec![0.98, 0.02], vec![0.02, 0.98]],
        }
    }

    #[test]
    fn k1_filtered_is_constant_one() {
        let sim = simulate_swarch(
            &SimSpec {
                spec: SwarchSpec {
                    k: 1,
                    p: 1,
                    q: 1,
                    intercept: 0.1,
                    ar_coeffs: vec![0.2],
                    arch_coeffs: vec![1.0, 0.3],
                    scales: vec![1.0],
                    transition: vec![vec![1.0]],
                },
                len: 200,
                n_noise_factors: 0,
            },
            5,
        )
        .unwrap();
        let model = fit_swarch_with(
            &sim.returns,
            1,
            1,
            1,
            5,
            &SwarchFitOptions {
                multistarts: 4,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(model
            .filtered
            .iter()
            .all(|row| row.len() == 1 && (row[0] - 1.0).abs() < 1e-12));
        assert_eq!(model.filtered_high_vol(), vec![1.0; 200]);
    }

    #[test]
    fn filtered_and_transition_rows_sum_to_one() {
        let sim = simulate_swarch(
            &SimSpec {
                spec: two_regime_spec(),
                len: 400,
                n_noise_factors: 0,
            },
            42,
        )
        .unwrap();
        let model = fit_swarch_with(
            &sim.returns,
            2,
            0,
            1,
            42,
            &SwarchFitOptions {
                multistarts: 6,
                ..Default::default()
            },
        )
        .unwrap();
        for row in &model.filtered {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
        for row in &model.transition {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
        assert!((model.scales[0] - 1.0).abs() < 1e-12);
        assert!(model.scales[1] > model.scales[0]);
    }

    #[test]
    fn fit_beats_random_feasible_draws() {
        let sim = simulate_swarch(
            &SimSpec {
                spec: two_regime_spec(),
                len: 400,
                n_noise_factors: 0,
            },
            9,
        )
        .unwrap();
        let model = fit_swarch_with(
            &sim.returns,
            2,
            0,
            1,
            9,
            &SwarchFitOptions {
                multistarts: 6,
                ..Default::default()
            },
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        for _ in 0..20 {
            let a = rng.gen_range(0.05..0.95);
            let b = rng.gen_range(0.05..0.95);
            let draw = SwarchSpec {
                k: 2,
                p: 0,
                q: 1,
                intercept: rng.gen_range(-0.5..0.5),
                ar_coeffs: vec![],
                arch_coeffs: vec![rng.gen_range(0.1..3.0), rng.gen_range(0.0..0.8)],
                scales: vec![1.0, rng.gen_range(1.5..20.0)],
                transition: vec![vec![a, 1.0 - a], vec![b, 1.0 - b]],
            };
            let (_, ll) = hamilton_filter(&sim.returns, &draw).unwrap();
            assert!(
                model.log_likelihood >= ll - 1e-9,
                "random draw beat the fit: {ll} vs {}",
                model.log_likelihood
            );
        }
    }

    #[test]
    fn high_vol_segments_get_higher_fph() {
        let sim = simulate_swarch(
            &SimSpec {
                spec: two_regime_spec(),
                len: 800,
                n_noise_factors: 0,
            },
            21,
        )
        .unwrap();
        let model = fit_swarch_with(
            &sim.returns,
            2,
            0,
            1,
            21,
            &SwarchFitOptions {
                multistarts: 8,
                ..Default::default()
            },
        )
        .unwrap();
        let fph = model.filtered_high_vol();
        assert!(fph.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let (mut hi_sum, mut hi_n, mut lo_sum, mut lo_n) = (0.0, 0, 0.0, 0);
        for (t, &s) in sim.regimes.iter().enumerate() {
            if s == 1 {
                hi_sum += fph[t];
                hi_n += 1;
            } else {
                lo_sum += fph[t];
                lo_n += 1;
            }
        }
        assert!(hi_n > 20 && lo_n > 20, "degenerate simulation");
        assert!(hi_sum / hi_n as f64 > lo_sum / lo_n as f64);
    }

    #[test]
    fn rcm_examples() {
        let base = |filtered: Vec<Vec<f64>>| RegimeModel {
            k: 2,
            p: 0,
            q: 0,
            intercept: 0.0,
            ar_coeffs: vec![],
            arch_coeffs: vec![1.0],
            scales: vec![1.0, 2.0],
            transition: vec![vec![0.9, 0.1], vec![0.1, 0.9]],
            log_likelihood: 0.0,
            filtered,
            converged: true,
        };
        // Degenerate rows: product contains a zero.
        let m = base(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(rcm(&m), 0.0);
        // Maximal confusion.
        let m = base(vec![vec![0.5, 0.5]; 4]);
        assert!((rcm(&m) - 100.0).abs() < 1e-12);
        // Hand-computed mixed case: mean(0.3*0.7, 0.9*0.1) = 0.15, * 400 = 60.
        let m = base(vec![vec![0.3, 0.7], vec![0.9, 0.1]]);
        assert!((rcm(&m) - 60.0).abs() < 1e-12);
    }

    #[test]
    fn rcm_separates_two_regime_data() {
        let sim = simulate_swarch(
            &SimSpec {
                spec: two_regime_spec(),
                len: 900,
                n_noise_factors: 0,
            },
            77,
        )
        .unwrap();
        let opts = SwarchFitOptions {
            multistarts: 8,
            ..Default::default()
        };
        let m1 = fit_swarch_with(&sim.returns, 1, 0, 1, 77, &opts).unwrap();
        let m2 = fit_swarch_with(&sim.returns, 2, 0, 1, 77, &opts).unwrap();
        // K=1 is the no-separation baseline: its single filtered column is
        // identically 1, so RCM = 100. A good 2-regime fit on persistent
        // 2-regime data should sit far below that.
        assert!((rcm(&m1) - 100.0).abs() < 1e-9);
        let r2 = rcm(&m2);
        assert!((0.0..=100.0).contains(&r2));
        assert!(r2 < 50.0, "rcm2={r2}");
    }

    #[test]
    fn deterministic_given_seed() {
        let sim = simulate_swarch(
            &SimSpec {
                spec: two_regime_spec(),
                len: 300,
                n_noise_factors: 0,
            },
            3,
        )
        .unwrap();
        let opts = SwarchFitOptions {
            multistarts: 4,
            ..Default::default()
        };
        let a = fit_swarch_with(&sim.returns, 2, 0, 1, 11, &opts).unwrap();
        let b = fit_swarch_with(&sim.returns, 2, 0, 1, 11, &opts).unwrap();
        assert_eq!(a.log_likelihood.to_bits(), b.log_likelihood.to_bits());
        assert_eq!(a.scales[1].to_bits(), b.scales[1].to_bits());
    }

    #[test]
    fn constant_returns_rejected() {
        let err = fit_swarch(&vec![1.0; 100], 2, 0, 1, 0).unwrap_err();
        assert!(matches!(err, EwsError::DegenerateData(_)));
    }
}
