//! Signal-extraction predictor: per-variable threshold search over the
//! 80th-90th percentile grid, scored by noise-to-signal ratio, composited
//! with inverse-NSR weights.

use indexmap::IndexMap;

use super::{check_labels, dense_matrix, ForecastSeries};
use crate::classify::CrisisLabels;
use crate::frame::FactorPanel;
use crate::{EwsError, Result};

/// Which tail of a variable counts as a warning breach.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TailDirection {
    #[default]
    Upper,
    Lower,
}

/// One retained variable's calibration.
#[derive(Debug, Clone)]
pub struct KlrVariable {
    pub name: String,
    pub cutoff: f64,
    pub direction: TailDirection,
    /// Best (minimum) noise-to-signal ratio over the percentile grid.
    pub nsr: f64,
    pub weight: f64,
    /// Percentile (80..=90) that produced the cutoff.
    pub percentile: usize,
}

/// The fitted composite: retained variables plus the ones excluded at the
/// NSR ceiling.
#[derive(Debug, Clone)]
pub struct KlrModel {
    pub feature_names: Vec<String>,
    pub retained: Vec<KlrVariable>,
    /// (name, best NSR) for variables at or above the ceiling.
    pub excluded: Vec<(String, f64)>,
    pub nsr_ceiling: f64,
}

/// Weight cap: a perfect in-sample signaler (NSR 0) gets 1/0.01 = 100 so it
/// cannot drown out every other variable.
const NSR_FLOOR: f64 = 0.01;

/// Noise-to-signal ratio from the confusion counts
/// (A: signal & crisis, B: signal & calm, C: silent & crisis, D: silent & calm).
pub fn nsr_from_confusion(a: usize, b: usize, c: usize, d: usize) -> f64 {
    let good = a as f64 / (a + c) as f64;
    let noise = if b + d == 0 { 0.0 } else { b as f64 / (b + d) as f64 };
    if good == 0.0 {
        f64::INFINITY
    } else {
        noise / good
    }
}

fn breaches(value: f64, cutoff: f64, direction: TailDirection) -> bool {
    match direction {
        TailDirection::Upper => value > cutoff,
        TailDirection::Lower => value < cutoff,
    }
}

/// Nearest-rank percentile of `values` (q in 0..=100).
fn percentile(sorted: &[f64], q: usize) -> f64 {
    let n = sorted.len();
    let rank = ((q as f64 / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Fits the signal-extraction composite. For each variable the cutoff grid
/// is its 80th..=90th percentile (mirrored to 10th..=20th for lower-tail
/// variables); the cutoff minimizing NSR is kept, and the variable is
/// retained with weight 1/NSR when NSR < `nsr_ceiling`.
pub fn fit_klr(
    features: &FactorPanel,
    labels: &CrisisLabels,
    nsr_ceiling: f64,
    directions: &IndexMap<String, TailDirection>,
) -> Result<KlrModel> {
    let y = check_labels(features, labels)?;
    if !y.iter().any(|&v| v == 1.0) {
        return Err(EwsError::NoCrisisObservations);
    }
    let (rows, names) = dense_matrix(features, &[])?;

    let mut retained = Vec::new();
    let mut excluded = Vec::new();
    for (j, name) in names.iter().enumerate() {
        let direction = directions.get(name).copied().unwrap_or_default();
        let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let mut sorted = col.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));

        let mut best: Option<(f64, f64, usize)> = None; // (nsr, cutoff, pct)
        for q in 80..=90usize {
            let q_dir = match direction {
                TailDirection::Upper => q,
                TailDirection::Lower => 100 - q,
            };
            let cutoff = percentile(&sorted, q_dir);
            let (mut a, mut b, mut c, mut d) = (0usize, 0, 0, 0);
            for (v, &yi) in col.iter().zip(&y) {
                match (breaches(*v, cutoff, direction), yi == 1.0) {
                    (true, true) => a += 1,
                    (true, false) => b += 1,
                    (false, true) => c += 1,
                    (false, false) => d += 1,
                }
            }
            let nsr = nsr_from_confusion(a, b, c, d);
            if best.map_or(true, |(n, _, _)| nsr < n) {
                best = Some((nsr, cutoff, q));
            }
        }
        let (nsr, cutoff, pct) = best.expect("nonempty grid");
        if nsr < nsr_ceiling {
            retained.push(KlrVariable {
                name: name.clone(),
                cutoff,
                direction,
                nsr,
                weight: 1.0 / nsr.max(NSR_FLOOR),
                percentile: pct,
            });
        } else {
            excluded.push((name.clone(), nsr));
        }
    }

    Ok(KlrModel {
        feature_names: names,
        retained,
        excluded,
        nsr_ceiling,
    })
}

impl KlrModel {
    /// Composite warning index: weighted share of breached variables. An
    /// empty retained set yields a constant-zero forecast.
    pub fn probabilities(&self, features: &FactorPanel) -> Result<Vec<f64>> {
        let n = features.len();
        if self.retained.is_empty() {
            return Ok(vec![0.0; n]);
        }
        let names: Vec<String> = self.retained.iter().map(|v| v.name.clone()).collect();
        let (rows, _) = dense_matrix(features, &names)?;
        let total: f64 = self.retained.iter().map(|v| v.weight).sum();
        Ok(rows
            .iter()
            .map(|row| {
                let hit: f64 = self
                    .retained
                    .iter()
                    .zip(row)
                    .filter(|(v, &x)| breaches(x, v.cutoff, v.direction))
                    .map(|(v, _)| v.weight)
                    .sum();
                hit / total
            })
            .collect())
    }

    /// NSR table: retained variables score 1/NSR-weighted entries; excluded
    /// ones carry the exclusion marker.
    pub fn importance(&self) -> super::ImportanceTable {
        let mut entries: Vec<super::ImportanceEntry> = self
            .retained
            .iter()
            .map(|v| super::ImportanceEntry {
                feature: v.name.clone(),
                score: Some(v.weight),
                method: "nsr".into(),
            })
            .collect();
        for (name, _) in &self.excluded {
            entries.push(super::ImportanceEntry {
                feature: name.clone(),
                score: None,
                method: "nsr".into(),
            });
        }
        super::ImportanceTable::new(entries)
    }
}

/// Convenience wrapper matching the module surface.
pub fn klr_predict(
    model: &KlrModel,
    features: &FactorPanel,
    threshold: f64,
) -> Result<ForecastSeries> {
    ForecastSeries::new(model.probabilities(features)?, threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::HorizonKind;
    use crate::frame::Frequency;
    use chrono::NaiveDate;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

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
    fn perfect_signaler_capped_weight() {
        // Variable exceeds its cutoff exactly at the crisis dates: with
        // crises on the top decile, every grid cutoff at or above the 90th
        // percentile cleanly separates.
        let n = 100;
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let y: Vec<u8> = (0..n).map(|i| u8::from(i >= 90)).collect();
        let model = fit_klr(
            &panel(vec![("x", x)]),
            &labels(y),
            0.75,
            &IndexMap::new(),
        )
        .unwrap();
        assert_eq!(model.retained.len(), 1);
        let v = &model.retained[0];
        assert_eq!(v.nsr, 0.0);
        assert_eq!(v.weight, 100.0);
    }

    #[test]
    fn independent_variable_excluded() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 2000;
        let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let y: Vec<u8> = (0..n).map(|_| u8::from(rng.gen::<f64>() < 0.2)).collect();
        let model = fit_klr(
            &panel(vec![("x", x)]),
            &labels(y),
            0.75,
            &IndexMap::new(),
        )
        .unwrap();
        assert!(model.retained.is_empty());
        let (_, nsr) = &model.excluded[0];
        assert!((nsr - 1.0).abs() < 0.35, "nsr={nsr}");
    }

    #[test]
    fn tiny_instance_matches_hand_confusion_tables() {
        // 8 observations, crises at the two largest values.
        let x = vec![1.0, 5.0, 2.0, 8.0, 3.0, 9.0, 4.0, 6.0];
        let y = vec![0, 0, 0, 1, 0, 1, 0, 0];
        let model = fit_klr(
            &panel(vec![("x", x.clone())]),
            &labels(y.clone()),
            2.0,
            &IndexMap::new(),
        )
        .unwrap();
        let v = &model.retained[0];

        // Exhaustive oracle over the same nearest-rank grid.
        let mut sorted = x.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut best = f64::INFINITY;
        for q in 80..=90usize {
            let rank = ((q as f64 / 100.0) * 8.0).ceil() as usize;
            let cutoff = sorted[rank.clamp(1, 8) - 1];
            let (mut a, mut b, mut c, mut d) = (0, 0, 0, 0);
            for (xi, yi) in x.iter().zip(&y) {
                match (*xi > cutoff, *yi == 1) {
                    (true, true) => a += 1,
                    (true, false) => b += 1,
                    (false, true) => c += 1,
                    (false, false) => d += 1,
                }
            }
            let nsr = nsr_from_confusion(a, b, c, d);
            if nsr < best {
                best = nsr;
            }
        }
        assert_eq!(v.nsr, best);
        // Hand check: the 90th percentile cutoff is 8 (rank ceil(7.2)=8), so
        // only 9 breaches: A=1,B=0,C=1,D=6 -> NSR=0. The 80th keeps {8,9}:
        // A=2,B=0 -> NSR=0 as well.
        assert_eq!(v.nsr, 0.0);
    }

    #[test]
    fn no_crisis_observations_error() {
        let p = panel(vec![("x", vec![1.0, 2.0, 3.0])]);
        assert!(matches!(
            fit_klr(&p, &labels(vec![0, 0, 0]), 0.75, &IndexMap::new()),
            Err(EwsError::NoCrisisObservations)
        ));
    }

    #[test]
    fn predict_weighted_share() {
        let model = KlrModel {
            feature_names: vec!["a".into(), "b".into()],
            retained: vec![
                KlrVariable {
                    name: "a".into(),
                    cutoff: 1.0,
                    direction: TailDirection::Upper,
                    nsr: 0.5,
                    weight: 2.0,
                    percentile: 85,
                },
                KlrVariable {
                    name: "b".into(),
                    cutoff: 1.0,
                    direction: TailDirection::Upper,
                    nsr: 1.0,
                    weight: 1.0,
                    percentile: 85,
                },
            ],
            excluded: vec![],
            nsr_ceiling: 0.75,
        };
        // Rows: nothing breaches; both breach; only `a` breaches.
        let p = panel(vec![("a", vec![0.0, 2.0, 2.0]), ("b", vec![0.0, 2.0, 0.0])]);
        let probs = model.probabilities(&p).unwrap();
        assert_eq!(probs[0], 0.0);
        assert_eq!(probs[1], 1.0);
        assert!((probs[2] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_retained_set_constant_zero() {
        let model = KlrModel {
            feature_names: vec!["a".into()],
            retained: vec![],
            excluded: vec![("a".into(), 1.3)],
            nsr_ceiling: 0.75,
        };
        let p = panel(vec![("a", vec![5.0, 6.0])]);
        assert_eq!(model.probabilities(&p).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn lower_tail_direction() {
        // Crises at the smallest values; only a lower-tail read finds them.
        let n = 50;
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let y: Vec<u8> = (0..n).map(|i| u8::from(i < 5)).collect();
        let mut directions = IndexMap::new();
        directions.insert("x".to_string(), TailDirection::Lower);
        let model = fit_klr(&panel(vec![("x", x)]), &labels(y), 0.75, &directions).unwrap();
        assert_eq!(model.retained.len(), 1);
        assert_eq!(model.retained[0].nsr, 0.0);
    }

    #[test]
    fn exhaustive_confusion_equivalence_small_instances() {
        // Every instance with <= 12 observations: NSR at each grid cutoff
        // must equal an independently built confusion table's ratio.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for n in 4..=12usize {
            for _ in 0..20 {
                let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
                let mut y: Vec<u8> = (0..n).map(|_| u8::from(rng.gen::<f64>() < 0.4)).collect();
                if !y.contains(&1) {
                    y[0] = 1;
                }
                let model = fit_klr(
                    &panel(vec![("x", x.clone())]),
                    &labels(y.clone()),
                    f64::INFINITY,
                    &IndexMap::new(),
                )
                .unwrap();
                // With an infinite ceiling the variable is excluded only
                // when its best NSR is itself infinite (A=0 everywhere).
                let got = model
                    .retained
                    .first()
                    .map(|v| v.nsr)
                    .unwrap_or_else(|| model.excluded[0].1);

                let mut sorted = x.clone();
                sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let mut best = f64::INFINITY;
                for q in 80..=90usize {
                    let rank = ((q as f64 / 100.0) * n as f64).ceil() as usize;
                    let cutoff = sorted[rank.clamp(1, n) - 1];
                    let (mut a, mut b, mut c, mut d) = (0, 0, 0, 0);
                    for (xi, yi) in x.iter().zip(&y) {
                        match (*xi > cutoff, *yi == 1) {
                            (true, true) => a += 1,
                            (true, false) => b += 1,
                            (false, true) => c += 1,
                            (false, false) => d += 1,
                        }
                    }
                    best = best.min(nsr_from_confusion(a, b, c, d));
                }
                assert_eq!(got, best, "n={n}");
            }
        }
    }
}
