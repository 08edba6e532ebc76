//! Threshold selection for regime-probability labeling: fixed cutoffs and the
//! two-peak histogram-valley rule with expanding-window recomputation.

use super::{CrisisLabels, HorizonKind};
use crate::{EwsError, Result};

/// Result of valley detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPeakCutoff {
    pub cutoff: f64,
    /// Set when no two separated peaks exist and the 0.5 fallback was used.
    pub unimodal: bool,
}

/// How the labeling threshold is chosen at each time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CutoffPolicy {
    /// Constant threshold in (0,1).
    Fixed(f64),
    /// Histogram-valley threshold, recomputed on an expanding window.
    /// `window` is the initial estimation length (default 60% of the series);
    /// positions before it reuse the first computed cutoff.
    TwoPeak { window: Option<usize>, bins: usize },
}

impl CutoffPolicy {
    pub fn two_peak() -> Self {
        CutoffPolicy::TwoPeak {
            window: None,
            bins: 50,
        }
    }
}

/// Finds the valley between the two highest density peaks of `values`
/// histogrammed into `bins` equal-width bins over [0,1]. Peaks are detected
/// on 3-bin moving-average smoothed counts; the valley is the minimum raw
/// count strictly between them, ties broken toward the higher cutoff. Falls
/// back to 0.5 with the unimodal flag when no two separated peaks exist.
pub fn two_peak_cutoff(values: &[f64], bins: usize) -> Result<TwoPeakCutoff> {
    if bins < 2 {
        return Err(EwsError::InvalidArgument("bins must be >= 2".into()));
    }
    if values.is_empty() {
        return Err(EwsError::TooShort { need: 1, got: 0 });
    }
    let mut counts = vec![0usize; bins];
    for &v in values {
        if !(0.0..=1.0).contains(&v) {
            return Err(EwsError::InvalidArgument(format!(
                "probability {v} outside [0,1]"
            )));
        }
        let bin = ((v * bins as f64) as usize).min(bins - 1);
        counts[bin] += 1;
    }
    Ok(valley_from_counts(&counts))
}

/// Valley detection on precomputed bin counts.
fn valley_from_counts(counts: &[usize]) -> TwoPeakCutoff {
    let bins = counts.len();
    let smoothed: Vec<f64> = (0..bins)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(bins - 1);
            counts[lo..=hi].iter().sum::<usize>() as f64 / (hi - lo + 1) as f64
        })
        .collect();

    // Strict local maxima of the smoothed counts; edge bins compare against
    // their single neighbor. Flat plateaus yield no peak, which routes
    // degenerate inputs to the fallback.
    let mut peaks: Vec<usize> = Vec::new();
    for i in 0..bins {
        let left_ok = i == 0 || smoothed[i] > smoothed[i - 1];
        let right_ok = i == bins - 1 || smoothed[i] > smoothed[i + 1];
        if left_ok && right_ok && counts[i] > 0 {
            peaks.push(i);
        }
    }
    if peaks.len() < 2 {
        return TwoPeakCutoff {
            cutoff: 0.5,
            unimodal: true,
        };
    }
    // Two highest peaks by smoothed height, deterministic tie-break by index.
    peaks.sort_by(|&a, &b| {
        smoothed[b]
            .partial_cmp(&smoothed[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let (mut lo, mut hi) = (peaks[0], peaks[1]);
    if lo > hi {
        std::mem::swap(&mut lo, &mut hi);
    }
    if hi - lo < 2 {
        return TwoPeakCutoff {
            cutoff: 0.5,
            unimodal: true,
        };
    }
    // Minimum-count bin strictly between the peaks, judged on the smoothed
    // counts so wide flat valleys resolve sensibly. Tied minima collapse to
    // their midpoint, rounded toward the higher cutoff (fewer crisis flags);
    // the midpoint keeps the choice stable under mirroring the sample.
    let min_val = smoothed[lo + 1..hi]
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let first = (lo + 1..hi).find(|&i| smoothed[i] == min_val).unwrap();
    let last = (lo + 1..hi).rev().find(|&i| smoothed[i] == min_val).unwrap();
    let valley = (first + last + 1) / 2;
    TwoPeakCutoff {
        cutoff: (valley as f64 + 0.5) / bins as f64,
        unimodal: false,
    }
}

/// Labels a filtered high-volatility probability series.
///
/// Short-term: `C_t = 1` iff `FPH_t >= c_t`. Long-term: `Y_t = 1` iff
/// `1 - (1 - FPH_t)^12 >= c_t`. Under the two-peak policy the threshold is
/// recomputed at every step `t >= l` from the expanding prefix of the
/// thresholded series; earlier positions reuse the first computed value.
pub fn swarch_label(
    fph: &[f64],
    policy: CutoffPolicy,
    horizon_kind: HorizonKind,
) -> Result<CrisisLabels> {
    if fph.is_empty() {
        return Err(EwsError::TooShort { need: 1, got: 0 });
    }
    for &v in fph {
        if !(0.0..=1.0).contains(&v) {
            return Err(EwsError::InvalidArgument(format!(
                "probability {v} outside [0,1]"
            )));
        }
    }
    let transformed: Vec<f64> = match horizon_kind {
        HorizonKind::ShortTerm => fph.to_vec(),
        HorizonKind::LongTerm => fph.iter().map(|&p| 1.0 - (1.0 - p).powi(12)).collect(),
    };
    let n = transformed.len();

    let (cutoffs, provenance) = match policy {
        CutoffPolicy::Fixed(c) => {
            if !(0.0 < c && c < 1.0) {
                return Err(EwsError::InvalidArgument(format!(
                    "fixed cutoff {c} outside (0,1)"
                )));
            }
            (vec![c; n], format!("swarch(fixed={c},{horizon_kind:?})"))
        }
        CutoffPolicy::TwoPeak { window, bins } => {
            let l = window.unwrap_or_else(|| ((n as f64 * 0.6).ceil() as usize).max(1));
            if l >= n {
                return Err(EwsError::InvalidArgument(format!(
                    "initial window {l} must be < series length {n}"
                )));
            }
            let mut cutoffs = vec![0.0; n];
            for t in l..n {
                cutoffs[t] = two_peak_cutoff(&transformed[..=t], bins)?.cutoff;
            }
            let first = cutoffs[l];
            for c in cutoffs.iter_mut().take(l) {
                *c = first;
            }
            (
                cutoffs,
                format!("swarch(two_peak,l={l},bins={bins},{horizon_kind:?})"),
            )
        }
    };

    let labels: Vec<u8> = transformed
        .iter()
        .zip(&cutoffs)
        .map(|(&x, &c)| u8::from(x >= c))
        .collect();
    let mut out = CrisisLabels::new(labels, horizon_kind, provenance);
    out.cutoffs = Some(cutoffs);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::distributions::Distribution;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::Normal;

    fn bimodal_sample(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lo = Normal::new(0.15, 0.12).unwrap();
        let hi = Normal::new(0.85, 0.12).unwrap();
        (0..n)
            .map(|i| {
                let d = if i % 2 == 0 { &lo } else { &hi };
                d.sample(&mut rng).clamp(0.0, 1.0)
            })
            .collect()
    }

    #[test]
    fn identical_values_fall_back_unimodal() {
        let out = two_peak_cutoff(&vec![0.37; 100], 50).unwrap();
        assert!(out.unimodal);
        assert_eq!(out.cutoff, 0.5);
    }

    #[test]
    fn bimodal_mixture_valley_in_middle() {
        let sample = bimodal_sample(1, 2000);
        let out = two_peak_cutoff(&sample, 50).unwrap();
        assert!(!out.unimodal);
        assert!((0.3..=0.7).contains(&out.cutoff), "cutoff {}", out.cutoff);

        // Brute-force oracle: rebuild the smoothed histogram and check the
        // returned bin attains the minimum between the cluster modes.
        let mut counts = vec![0usize; 50];
        for &v in &sample {
            counts[((v * 50.0) as usize).min(49)] += 1;
        }
        let smoothed: Vec<f64> = (0..50usize)
            .map(|i| {
                let lo = i.saturating_sub(1);
                let hi = (i + 1).min(49);
                counts[lo..=hi].iter().sum::<usize>() as f64 / (hi - lo + 1) as f64
            })
            .collect();
        let bin = (out.cutoff * 50.0) as usize;
        let interior_min = smoothed[12..38]
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        assert_eq!(smoothed[bin], interior_min);
    }

    #[test]
    fn hand_built_three_bins() {
        // Counts [9,1,7]: the valley is the middle bin, center 0.5.
        let mut sample = Vec::new();
        sample.extend(std::iter::repeat(0.1).take(9));
        sample.push(0.5);
        sample.extend(std::iter::repeat(0.9).take(7));
        let out = two_peak_cutoff(&sample, 3).unwrap();
        assert!((out.cutoff - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mirror_property_within_one_bin() {
        for seed in 0..8 {
            let sample = bimodal_sample(seed, 1000);
            let mirrored: Vec<f64> = sample.iter().map(|&x| 1.0 - x).collect();
            let a = two_peak_cutoff(&sample, 50).unwrap();
            let b = two_peak_cutoff(&mirrored, 50).unwrap();
            assert_eq!(a.unimodal, b.unimodal);
            if !a.unimodal {
                assert!(
                    (a.cutoff + b.cutoff - 1.0).abs() <= 1.0 / 50.0 + 1e-12,
                    "seed {seed}: {} vs {}",
                    a.cutoff,
                    b.cutoff
                );
            }
        }
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(two_peak_cutoff(&[0.5, 1.2], 10).is_err());
        assert!(swarch_label(&[-0.1], CutoffPolicy::Fixed(0.5), HorizonKind::ShortTerm).is_err());
    }

    #[test]
    fn fixed_short_term_threshold() {
        let out = swarch_label(&[0.2, 0.7], CutoffPolicy::Fixed(0.5), HorizonKind::ShortTerm)
            .unwrap();
        assert_eq!(out.labels, vec![0, 1]);
        assert_eq!(out.cutoffs, Some(vec![0.5, 0.5]));
    }

    #[test]
    fn long_term_transform_boundary() {
        // 1-(1-0.056)^12 ~ 0.4992 < 0.5; 1-(1-0.06)^12 ~ 0.5241 >= 0.5.
        let out = swarch_label(
            &[0.056, 0.06],
            CutoffPolicy::Fixed(0.5),
            HorizonKind::LongTerm,
        )
        .unwrap();
        assert_eq!(out.labels, vec![0, 1]);
    }

    #[test]
    fn zero_fph_never_flags() {
        let fph = vec![0.0; 120];
        for policy in [CutoffPolicy::Fixed(0.5), CutoffPolicy::two_peak()] {
            for hk in [HorizonKind::ShortTerm, HorizonKind::LongTerm] {
                let out = swarch_label(&fph, policy, hk).unwrap();
                assert!(out.labels.iter().all(|&l| l == 0));
            }
        }
    }

    #[test]
    fn long_term_monotone_in_cutoff() {
        let sample = bimodal_sample(4, 200);
        let loose = swarch_label(&sample, CutoffPolicy::Fixed(0.4), HorizonKind::LongTerm)
            .unwrap();
        let strict = swarch_label(&sample, CutoffPolicy::Fixed(0.7), HorizonKind::LongTerm)
            .unwrap();
        for (s, l) in strict.labels.iter().zip(&loose.labels) {
            assert!(s <= l, "strict cutoff added a crisis");
        }
    }

    #[test]
    fn two_peak_expanding_window_history() {
        let sample = bimodal_sample(9, 300);
        let out = swarch_label(
            &sample,
            CutoffPolicy::TwoPeak {
                window: Some(180),
                bins: 50,
            },
            HorizonKind::ShortTerm,
        )
        .unwrap();
        let cutoffs = out.cutoffs.as_ref().unwrap();
        assert_eq!(cutoffs.len(), 300);
        // Pre-window positions reuse the first computed cutoff.
        assert!(cutoffs[..180].iter().all(|&c| c == cutoffs[180]));
        // Each post-window cutoff matches a fresh prefix computation.
        for t in [180usize, 200, 299] {
            let expect = two_peak_cutoff(&sample[..=t], 50).unwrap().cutoff;
            assert_eq!(cutoffs[t], expect);
        }
        // Labels follow the per-time cutoffs.
        for t in 0..300 {
            assert_eq!(out.labels[t] == 1, sample[t] >= cutoffs[t]);
        }
    }
}
