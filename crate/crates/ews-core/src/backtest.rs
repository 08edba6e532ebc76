//! Signal-driven portfolio back-testing: warning probabilities scale asset
//! weights down, tracks are scored by Sharpe ratio and certainty-equivalent
//! return, and competing tracks are compared with a stationary-bootstrap
//! reality check on realized variance.

use chrono::NaiveDate;
use indexmap::IndexMap;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::frame::FactorPanel;
use crate::{EwsError, Result};

/// Weight bounds: no more than 50% short, no more than 50% leverage.
pub const WEIGHT_FLOOR: f64 = -0.5;
pub const WEIGHT_CAP: f64 = 1.5;
/// Volatility floor applied inside [`run_backtest`] so near-riskless assets
/// (e.g. a deposit-rate column) do not blow up the weight ratio.
pub const VOL_FLOOR: f64 = 1e-6;

/// A back-tested strategy: per-asset weight series and the resulting
/// portfolio returns.
#[derive(Debug, Clone)]
pub struct PortfolioTrack {
    pub strategy: String,
    /// Risk aversion level, one of 1, 2, 3.
    pub gamma: u8,
    pub asset_names: Vec<String>,
    pub dates: Vec<NaiveDate>,
    /// Time-major: `weights[t][i]` is asset `i`'s weight at time `t`.
    pub weights: Vec<Vec<f64>>,
    /// Portfolio return `R_t = Σ_i weights[t][i] · r[t][i]`.
    pub returns: Vec<f64>,
}

impl PortfolioTrack {
    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    fn mean_return(&self) -> f64 {
        self.returns.iter().sum::<f64>() / self.returns.len() as f64
    }

    fn sd_return(&self) -> f64 {
        let mean = self.mean_return();
        let ss: f64 = self.returns.iter().map(|r| (r - mean).powi(2)).sum();
        (ss / (self.returns.len() - 1) as f64).sqrt()
    }

    /// `date, w_<asset>..., portfolio_return` CSV.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("date");
        for name in &self.asset_names {
            out.push_str(&format!(",w_{name}"));
        }
        out.push_str(",portfolio_return\n");
        for (t, r) in self.returns.iter().enumerate() {
            out.push_str(&self.dates[t].format("%Y-%m-%d").to_string());
            for w in &self.weights[t] {
                out.push_str(&format!(",{w}"));
            }
            out.push_str(&format!(",{r}\n"));
        }
        out
    }
}

/// Rolling standard deviation over a trailing `window`; leading positions
/// use the expanding prefix, always with at least two points.
pub fn realized_vol(returns: &[f64], window: usize) -> Result<Vec<f64>> {
    if window < 2 {
        return Err(EwsError::InvalidArgument(format!(
            "volatility window {window} must be >= 2"
        )));
    }
    if returns.len() < 2 {
        return Err(EwsError::TooShort {
            need: 2,
            got: returns.len(),
        });
    }
    Ok((0..returns.len())
        .map(|t| {
            let hi = (t + 1).max(2);
            let lo = hi.saturating_sub(window);
            let slice = &returns[lo..hi];
            let mean = slice.iter().sum::<f64>() / slice.len() as f64;
            let ss: f64 = slice.iter().map(|r| (r - mean).powi(2)).sum();
            (ss / (slice.len() - 1) as f64).sqrt()
        })
        .collect())
}

/// `w_t = clamp((1 / (γ + ŷ_t)) · (η_t / σ_t), -0.5, 1.5)`; positions with
/// nonpositive volatility get weight zero.
pub fn portfolio_weights(
    signal: &[f64],
    mean_return: &[f64],
    vol: &[f64],
    gamma: u8,
) -> Result<Vec<f64>> {
    if !(1..=3).contains(&gamma) {
        return Err(EwsError::InvalidArgument(format!(
            "risk aversion {gamma} must be 1, 2 or 3"
        )));
    }
    if signal.len() != mean_return.len() || signal.len() != vol.len() {
        return Err(EwsError::LengthMismatch {
            left: signal.len(),
            right: mean_return.len().max(vol.len()),
        });
    }
    for &y in signal {
        if !(0.0..=1.0).contains(&y) {
            return Err(EwsError::InvalidArgument(format!(
                "signal {y} outside [0,1]"
            )));
        }
    }
    Ok(signal
        .iter()
        .zip(mean_return)
        .zip(vol)
        .map(|((&y, &eta), &sigma)| {
            if sigma <= 0.0 {
                0.0
            } else {
                ((1.0 / (f64::from(gamma) + y)) * (eta / sigma)).clamp(WEIGHT_FLOOR, WEIGHT_CAP)
            }
        })
        .collect())
}

/// What drives the warning probability ŷ in the weight rule.
#[derive(Debug, Clone)]
pub enum Strategy {
    /// Warning probabilities per asset (missing assets error).
    Forecasts(IndexMap<String, Vec<f64>>),
    /// ŷ ≡ 0: always fully invested per the weight rule.
    BuyAndHold,
    /// The classifier's own binary crisis labels as ŷ, applied to every
    /// asset; no predictive model involved.
    ClassifierOnly(Vec<u8>),
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Forecasts(_) => "ews",
            Strategy::BuyAndHold => "buy_and_hold",
            Strategy::ClassifierOnly(_) => "classifier_only",
        }
    }

    fn signal_for(&self, asset: &str, n: usize) -> Result<Vec<f64>> {
        match self {
            Strategy::Forecasts(map) => map
                .get(asset)
                .cloned()
                .ok_or_else(|| EwsError::InvalidArgument(format!("no forecast for asset {asset:?}"))),
            Strategy::BuyAndHold => Ok(vec![0.0; n]),
            Strategy::ClassifierOnly(labels) => Ok(labels.iter().map(|&c| f64::from(c)).collect()),
        }
    }
}

/// Builds a track from explicit per-asset inputs (all time-major, one inner
/// entry per asset). Volatilities are floored at [`VOL_FLOOR`].
pub fn build_track(
    strategy_id: &str,
    gamma: u8,
    asset_names: &[String],
    dates: &[NaiveDate],
    returns: &[Vec<f64>],
    etas: &[Vec<f64>],
    vols: &[Vec<f64>],
    signals: &[Vec<f64>],
) -> Result<PortfolioTrack> {
    let n = dates.len();
    let n_assets = asset_names.len();
    let mut weights = Vec::with_capacity(n);
    let mut track_returns = Vec::with_capacity(n);
    for t in 0..n {
        let mut row = Vec::with_capacity(n_assets);
        let mut rp = 0.0;
        for i in 0..n_assets {
            let w = portfolio_weights(
                &[signals[i][t]],
                &[etas[i][t]],
                &[vols[i][t].max(VOL_FLOOR)],
                gamma,
            )?[0];
            rp += w * returns[i][t];
            row.push(w);
        }
        weights.push(row);
        track_returns.push(rp);
    }
    Ok(PortfolioTrack {
        strategy: strategy_id.to_string(),
        gamma,
        asset_names: asset_names.to_vec(),
        dates: dates.to_vec(),
        weights,
        returns: track_returns,
    })
}

/// Back-tests one strategy on a panel of asset returns. Expected returns and
/// volatilities feeding the weight rule are the trailing rolling mean and
/// standard deviation over `vol_window` (expanding prefix at the start).
pub fn run_backtest(
    assets: &FactorPanel,
    strategy: &Strategy,
    gamma: u8,
    vol_window: usize,
) -> Result<PortfolioTrack> {
    let n = assets.len();
    if n < 2 {
        return Err(EwsError::TooShort { need: 2, got: n });
    }
    let names: Vec<String> = assets.names().map(|s| s.to_string()).collect();
    let mut returns = Vec::with_capacity(names.len());
    let mut etas = Vec::with_capacity(names.len());
    let mut vols = Vec::with_capacity(names.len());
    let mut signals = Vec::with_capacity(names.len());
    for name in &names {
        let col = assets.column(name)?.to_vec();
        let eta: Vec<f64> = (0..n)
            .map(|t| {
                let hi = t + 1;
                let lo = hi.saturating_sub(vol_window);
                col[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
            })
            .collect();
        vols.push(realized_vol(&col, vol_window)?);
        etas.push(eta);
        let signal = strategy.signal_for(name, n)?;
        if signal.len() != n {
            return Err(EwsError::LengthMismatch {
                left: n,
                right: signal.len(),
            });
        }
        signals.push(signal);
        returns.push(col);
    }
    build_track(
        strategy.name(),
        gamma,
        &names,
        assets.dates(),
        &returns,
        &etas,
        &vols,
        &signals,
    )
}

/// Which dispersion term enters the certainty-equivalent return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CerVariant {
    /// `R̄ - 0.5·γ·σ`, the formula as reported.
    #[default]
    StdDev,
    /// `R̄ - 0.5·γ·σ²`, the textbook mean-variance form.
    Variance,
}

/// Sharpe ratio (`None` when the track has zero volatility) and
/// certainty-equivalent return.
pub fn sharpe_and_cer(track: &PortfolioTrack) -> Result<(Option<f64>, f64)> {
    sharpe_and_cer_with(track, CerVariant::StdDev)
}

pub fn sharpe_and_cer_with(
    track: &PortfolioTrack,
    variant: CerVariant,
) -> Result<(Option<f64>, f64)> {
    if track.len() < 2 {
        return Err(EwsError::TooShort {
            need: 2,
            got: track.len(),
        });
    }
    let mean = track.mean_return();
    let sd = track.sd_return();
    let sharpe = if sd > 0.0 { Some(mean / sd) } else { None };
    let dispersion = match variant {
        CerVariant::StdDev => sd,
        CerVariant::Variance => sd * sd,
    };
    Ok((sharpe, mean - 0.5 * f64::from(track.gamma) * dispersion))
}

/// Stationary-bootstrap resamples: blocks start uniformly at random and
/// extend with continuation probability `1 - p`, wrapping circularly.
pub fn stationary_bootstrap(
    series: &[f64],
    p: f64,
    b: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if !(0.0 < p && p <= 1.0) {
        return Err(EwsError::InvalidArgument(format!(
            "block parameter {p} outside (0,1]"
        )));
    }
    if b == 0 {
        return Err(EwsError::InvalidArgument("need at least one resample".into()));
    }
    if series.is_empty() {
        return Err(EwsError::TooShort { need: 1, got: 0 });
    }
    let n = series.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(b);
    for _ in 0..b {
        let mut resample = Vec::with_capacity(n);
        let mut idx = rng.gen_range(0..n);
        resample.push(series[idx]);
        for _ in 1..n {
            if rng.gen::<f64>() < p {
                idx = rng.gen_range(0..n);
            } else {
                idx = (idx + 1) % n;
            }
            resample.push(series[idx]);
        }
        out.push(resample);
    }
    Ok(out)
}

/// Outcome of the variance reality check between two tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct RealityCheckResult {
    /// Mean of `f_t = V_candidate,t - V_benchmark,t`.
    pub statistic: f64,
    /// One-sided bootstrap p-value under H0: `E(f) >= 0`; small values
    /// support the candidate having lower realized variance.
    pub p_value: f64,
    pub b: usize,
    pub block_parameter: f64,
    pub seed: u64,
    /// How the variance series was built (recorded for the result record).
    pub variance_construction: &'static str,
}

impl RealityCheckResult {
    pub fn to_csv_string(&self) -> String {
        format!(
            "statistic,p_value,resamples,block_parameter,seed\n{},{},{},{},{}\n",
            self.statistic, self.p_value, self.b, self.block_parameter, self.seed
        )
    }
}

/// Squared deviations of a return series from its expanding mean.
fn realized_variance_series(returns: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(returns.len());
    let mut sum = 0.0;
    for (t, &r) in returns.iter().enumerate() {
        sum += r;
        let mean = sum / (t + 1) as f64;
        out.push((r - mean).powi(2));
    }
    out
}

/// Tests H0: `E(V_candidate - V_benchmark) >= 0` against the candidate
/// having strictly lower realized variance, via centered stationary-bootstrap
/// resamples and the `(B+1)`-denominator rank p-value.
pub fn reality_check(
    candidate: &PortfolioTrack,
    benchmark: &PortfolioTrack,
    b: usize,
    block_parameter: f64,
    seed: u64,
) -> Result<RealityCheckResult> {
    if candidate.len() != benchmark.len() {
        return Err(EwsError::LengthMismatch {
            left: candidate.len(),
            right: benchmark.len(),
        });
    }
    if candidate.is_empty() {
        return Err(EwsError::TooShort { need: 1, got: 0 });
    }
    let v_c = realized_variance_series(&candidate.returns);
    let v_b = realized_variance_series(&benchmark.returns);
    let f: Vec<f64> = v_c.iter().zip(&v_b).map(|(c, bn)| c - bn).collect();
    let statistic = f.iter().sum::<f64>() / f.len() as f64;

    let resamples = stationary_bootstrap(&f, block_parameter, b, seed)?;
    // Center each resampled mean at the observed statistic, then count how
    // often the centered draw falls at or below it (the lower tail of the
    // null distribution).
    let hits = resamples
        .iter()
        .filter(|res| {
            let m = res.iter().sum::<f64>() / res.len() as f64;
            m - statistic <= statistic
        })
        .count();
    Ok(RealityCheckResult {
        statistic,
        p_value: (1 + hits) as f64 / (b + 1) as f64,
        b,
        block_parameter,
        seed,
        variance_construction: "squared deviations from the expanding mean",
    })
}
