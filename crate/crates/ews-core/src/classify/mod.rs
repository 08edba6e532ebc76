//! Crisis labeling: technical indices, AR-SWARCH regime filtering with fixed
//! or histogram-valley cutoffs, and misspecification-rate validation.

mod cutoff;
mod swarch;
mod tqi;

pub use cutoff::{swarch_label, two_peak_cutoff, CutoffPolicy, TwoPeakCutoff};
pub use swarch::{
    fit_swarch, fit_swarch_with, filtered_high_vol, hamilton_filter, rcm, RegimeModel,
    SwarchFitOptions, SwarchSpec,
};
pub use tqi::{compute_cmax, compute_epi, compute_fpi, tqi_label, EpiKind, TqiIndex, TqiKind};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::frame::FactorPanel;
use crate::{EwsError, Result};

/// Prediction horizon flavor for labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HorizonKind {
    ShortTerm,
    LongTerm,
}

/// Binary crisis labels plus the classifier provenance that produced them.
#[derive(Debug, Clone)]
pub struct CrisisLabels {
    pub labels: Vec<u8>,
    pub horizon_kind: HorizonKind,
    /// Classifier kind and parameters, e.g. `"fpi(lambda=1.5)"`.
    pub provenance: String,
    /// Per-time cutoff used, when a cutoff policy applies.
    pub cutoffs: Option<Vec<f64>>,
}

impl CrisisLabels {
    pub fn new(labels: Vec<u8>, horizon_kind: HorizonKind, provenance: impl Into<String>) -> Self {
        debug_assert!(labels.iter().all(|&l| l <= 1));
        CrisisLabels {
            labels,
            horizon_kind,
            provenance: provenance.into(),
            cutoffs: None,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn crisis_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    /// Serializes to `date,label,cutoff_used` CSV rows.
    pub fn to_csv_string(&self, dates: &[chrono::NaiveDate]) -> String {
        let mut out = String::from("date,label,cutoff_used\n");
        for (t, &l) in self.labels.iter().enumerate() {
            let date = dates
                .get(t)
                .map(|d| d.format("%Y-%m-%d").to_string())
                .unwrap_or_else(|| t.to_string());
            let cutoff = self
                .cutoffs
                .as_ref()
                .map(|c| format!("{}", c[t]))
                .unwrap_or_default();
            out.push_str(&format!("{date},{l},{cutoff}\n"));
        }
        out
    }
}

/// Forward-looking "perfect signal" transform: `Y_t = 1` iff a crisis occurs
/// within the next `horizon` periods (inclusive of `t` itself). Trailing
/// positions use whatever lookahead is available.
pub fn perfect_signal(labels: &CrisisLabels, horizon: usize) -> CrisisLabels {
    let n = labels.labels.len();
    let mut out = vec![0u8; n];
    for t in 0..n {
        let hi = (t + horizon).min(n.saturating_sub(1));
        if labels.labels[t..=hi].iter().any(|&c| c == 1) {
            out[t] = 1;
        }
    }
    CrisisLabels {
        labels: out,
        horizon_kind: HorizonKind::LongTerm,
        provenance: format!("perfect_signal(h={horizon}) of {}", labels.provenance),
        cutoffs: None,
    }
}

/// Disagreement frequency between two label vectors of equal length.
pub fn misspecification_rate(full_truncated: &CrisisLabels, test: &CrisisLabels) -> Result<f64> {
    if full_truncated.len() != test.len() {
        return Err(EwsError::LengthMismatch {
            left: full_truncated.len(),
            right: test.len(),
        });
    }
    if test.is_empty() {
        return Err(EwsError::TooShort { need: 1, got: 0 });
    }
    let disagree = full_truncated
        .labels
        .iter()
        .zip(&test.labels)
        .filter(|(a, b)| a != b)
        .count();
    Ok(disagree as f64 / test.len() as f64)
}

/// Result of the bootstrapped misspecification average.
#[derive(Debug, Clone)]
pub struct BootstrapMisspec {
    pub avg_rate: f64,
    /// Windows where the classifier failed and was excluded.
    pub excluded: usize,
    pub b: usize,
}

/// Averages the misspecification rate over `b` seeded random contiguous
/// windows: the classifier is re-run on each window and compared with the
/// full-sample labels truncated to the same window.
///
/// Windows are independent work items executed in parallel; the aggregation
/// order is fixed by window index so threading cannot change the result.
pub fn bootstrap_misspecification<F>(
    classifier: F,
    panel: &FactorPanel,
    piece_length: usize,
    b: usize,
    seed: u64,
) -> Result<BootstrapMisspec>
where
    F: Fn(&FactorPanel) -> Result<CrisisLabels> + Sync,
{
    let n = panel.len();
    if piece_length >= n {
        return Err(EwsError::InvalidArgument(format!(
            "piece_length {piece_length} must be < panel length {n}"
        )));
    }
    if b < 1 {
        return Err(EwsError::InvalidArgument("B must be >= 1".into()));
    }
    let full = classifier(panel)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<usize> = (0..b).map(|_| rng.gen_range(0..=n - piece_length)).collect();

    let rates: Vec<Option<f64>> = starts
        .par_iter()
        .map(|&start| {
            let window = panel.slice(start, start + piece_length);
            let test = match classifier(&window) {
                Ok(l) => l,
                Err(_) => return None,
            };
            let truncated = CrisisLabels::new(
                full.labels[start..start + piece_length].to_vec(),
                full.horizon_kind,
                full.provenance.clone(),
            );
            misspecification_rate(&truncated, &test).ok()
        })
        .collect();

    let kept: Vec<f64> = rates.iter().flatten().copied().collect();
    if kept.is_empty() {
        return Err(EwsError::DegenerateData(
            "classifier failed on every bootstrap window".into(),
        ));
    }
    Ok(BootstrapMisspec {
        avg_rate: kept.iter().sum::<f64>() / kept.len() as f64,
        excluded: b - kept.len(),
        b,
    })
}
