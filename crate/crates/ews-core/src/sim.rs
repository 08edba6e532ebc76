//! Seeded synthetic-data generation: regime-switching ARCH return paths with
//! ground-truth regime labels and optional correlated factor columns.

use chrono::NaiveDate;
use rand::distributions::Distribution;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::Normal;

use crate::classify::SwarchSpec;
use crate::frame::{FactorPanel, Frequency};
use crate::{EwsError, Result};

/// What to simulate.
#[derive(Debug, Clone)]
pub struct SimSpec {
    pub spec: SwarchSpec,
    /// Output length after burn-in.
    pub len: usize,
    /// Extra factor columns: the first half track the regime (signal plus
    /// unit noise), the rest are pure noise.
    pub n_noise_factors: usize,
}

/// A simulated path with its ground truth.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub returns: Vec<f64>,
    /// True regime index per observation, 0-based (K-1 = highest volatility).
    pub regimes: Vec<usize>,
    pub factors: Vec<(String, Vec<f64>)>,
}

const BURN_IN: usize = 200;

/// Simulates an AR(p)-SWARCH(K,q) path. Deterministic given the seed.
pub fn simulate_swarch(sim: &SimSpec, seed: u64) -> Result<SimOutput> {
    sim.spec.validate()?;
    if sim.len < 10 {
        return Err(EwsError::TooShort {
            need: 10,
            got: sim.len,
        });
    }
    let spec = &sim.spec;
    let (k, q) = (spec.k, spec.q);
    let total = sim.len + BURN_IN;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    // Regime chain from the ergodic start.
    let ergodic = spec.ergodic();
    let mut state = sample_categorical(&mut rng, &ergodic);
    let mut regimes = Vec::with_capacity(total);
    for _ in 0..total {
        regimes.push(state);
        state = sample_categorical(&mut rng, &spec.transition[state]);
    }

    let mut y = Vec::with_capacity(total);
    let mut eps = Vec::with_capacity(total);
    for t in 0..total {
        let mut h = spec.arch_coeffs[0];
        for j in 1..=q {
            if t >= j {
                let e: f64 = eps[t - j];
                h += spec.arch_coeffs[j] * e * e / spec.scales[regimes[t - j]];
            }
        }
        let sigma = (spec.scales[regimes[t]] * h).sqrt();
        let e = sigma * std_normal.sample(&mut rng);
        let mut value = spec.intercept + e;
        for (lag, theta) in spec.ar_coeffs.iter().enumerate() {
            if t > lag {
                value += theta * y[t - 1 - lag];
            }
        }
        eps.push(e);
        y.push(value);
    }

    let returns: Vec<f64> = y[BURN_IN..].to_vec();
    let regimes: Vec<usize> = regimes[BURN_IN..].to_vec();

    // Factor columns: the regime path leaks into the first half, scaled so
    // the signal is informative but not trivially separable.
    let half = sim.n_noise_factors / 2;
    let regime_signal: Vec<f64> = regimes
        .iter()
        .map(|&s| s as f64 / (k.max(2) - 1) as f64)
        .collect();
    let mut factors = Vec::with_capacity(sim.n_noise_factors);
    for j in 0..sim.n_noise_factors {
        let informative = j < half || sim.n_noise_factors == 1;
        let col: Vec<f64> = regime_signal
            .iter()
            .map(|&sig| {
                let noise = std_normal.sample(&mut rng);
                if informative {
                    2.0 * sig + noise
                } else {
                    noise
                }
            })
            .collect();
        factors.push((format!("f{}", j + 1), col));
    }

    Ok(SimOutput {
        returns,
        regimes,
        factors,
    })
}

impl SimOutput {
    /// Packs returns and factors into a panel on a synthetic monthly (or
    /// other frequency) calendar starting at `start`.
    pub fn to_panel(&self, start: NaiveDate, frequency: Frequency) -> Result<FactorPanel> {
        let n = self.returns.len();
        let dates: Vec<NaiveDate> = (0..n)
            .map(|i| match frequency {
                Frequency::Daily => start + chrono::Duration::days(i as i64),
                Frequency::Monthly => add_months(start, i as u32),
                Frequency::Annual => add_months(start, 12 * i as u32),
            })
            .collect();
        let mut columns: Vec<(&str, Vec<f64>)> = vec![("returns", self.returns.clone())];
        for (name, col) in &self.factors {
            columns.push((name.as_str(), col.clone()));
        }
        FactorPanel::from_columns(dates, columns, frequency)
    }

    /// Ground-truth labels CSV: `t,regime,high_vol`.
    pub fn truth_csv(&self, k: usize) -> String {
        let mut out = String::from("t,regime,high_vol\n");
        for (t, &s) in self.regimes.iter().enumerate() {
            out.push_str(&format!("{t},{s},{}\n", u8::from(s == k - 1)));
        }
        out
    }
}

fn add_months(start: NaiveDate, months: u32) -> NaiveDate {
    let total = start.format("%Y").to_string().parse::<i32>().unwrap() * 12
        + start.format("%m").to_string().parse::<i32>().unwrap()
        - 1
        + months as i32;
    let (year, month) = (total / 12, (total % 12) as u32 + 1);
    NaiveDate::from_ymd_opt(year, month, start.format("%d").to_string().parse().unwrap())
        .or_else(|| NaiveDate::from_ymd_opt(year, month, 28))
        .unwrap()
}

fn sample_categorical(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return i;
        }
    }
    probs.len() - 1
}
