//! Technically quantized indices: FPI, EPI (single-economy forms) and CMAX.

use crate::frame::mean_sd;
use crate::{EwsError, Result};

use super::{CrisisLabels, HorizonKind};

/// Index family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TqiKind {
    Fpi,
    Cmax,
    EpiErw,
    EpiKlr,
}

/// EPI variant selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpiKind {
    Erw,
    Klr,
}

/// A computed index series with the parameters that produced it.
#[derive(Debug, Clone)]
pub struct TqiIndex {
    pub kind: TqiKind,
    pub values: Vec<f64>,
    pub params: Vec<(String, f64)>,
}

fn check_equal_lengths(series: &[&[f64]]) -> Result<usize> {
    let n = series[0].len();
    for s in series {
        if s.len() != n {
            return Err(EwsError::LengthMismatch {
                left: n,
                right: s.len(),
            });
        }
    }
    if n < 2 {
        return Err(EwsError::TooShort { need: 2, got: n });
    }
    Ok(n)
}

fn stats_checked(xs: &[f64], label: &str) -> Result<(f64, f64)> {
    let (mu, sd) = mean_sd(xs);
    if !(sd > 0.0) {
        return Err(EwsError::ZeroStd(label.to_string()));
    }
    Ok((mu, sd))
}

/// Financial pressure index: standardized average of exchange-rate change,
/// reserve change (negated) and interest-rate change over the supplied
/// window:
/// `FPI_t = 1/3 * ((e_t-mu_e)/sd_e - (r_t-mu_r)/sd_r + (i_t-mu_i)/sd_i)`.
pub fn compute_fpi(
    exchange_pct: &[f64],
    reserves_pct: &[f64],
    rate_change: &[f64],
) -> Result<TqiIndex> {
    let n = check_equal_lengths(&[exchange_pct, reserves_pct, rate_change])?;
    let (mu_e, sd_e) = stats_checked(exchange_pct, "exchange_pct")?;
    let (mu_r, sd_r) = stats_checked(reserves_pct, "reserves_pct")?;
    let (mu_i, sd_i) = stats_checked(rate_change, "rate_change")?;
    let values = (0..n)
        .map(|t| {
            ((exchange_pct[t] - mu_e) / sd_e - (reserves_pct[t] - mu_r) / sd_r
                + (rate_change[t] - mu_i) / sd_i)
                / 3.0
        })
        .collect();
    Ok(TqiIndex {
        kind: TqiKind::Fpi,
        values,
        params: vec![],
    })
}

/// Exchange market pressure index, single-economy form.
///
/// ERW weights each relative change by its inverse standard deviation; KLR
/// scales the reserve and interest terms onto the exchange-rate scale.
pub fn compute_epi(
    kind: EpiKind,
    exchange_rel: &[f64],
    reserves_rel: &[f64],
    rate_change: &[f64],
) -> Result<TqiIndex> {
    let n = check_equal_lengths(&[exchange_rel, reserves_rel, rate_change])?;
    let (_, sd_e) = stats_checked(exchange_rel, "exchange_rel")?;
    let (_, sd_r) = stats_checked(reserves_rel, "reserves_rel")?;
    let (_, sd_i) = stats_checked(rate_change, "rate_change")?;
    let values = (0..n)
        .map(|t| match kind {
            EpiKind::Erw => {
                exchange_rel[t] / sd_e - reserves_rel[t] / sd_r + rate_change[t] / sd_i
            }
            EpiKind::Klr => {
                exchange_rel[t] - (sd_e / sd_r) * reserves_rel[t]
                    + (sd_e / sd_i) * rate_change[t]
            }
        })
        .collect();
    Ok(TqiIndex {
        kind: match kind {
            EpiKind::Erw => TqiKind::EpiErw,
            EpiKind::Klr => TqiKind::EpiKlr,
        },
        values,
        params: vec![],
    })
}

/// Drawdown index `CMAX_t = P_t / max(P_{t-m}, ..., P_t)`; positions before
/// `m` use the available prefix.
pub fn compute_cmax(prices: &[f64], m: usize) -> Result<TqiIndex> {
    if m < 1 {
        return Err(EwsError::InvalidArgument("window m must be >= 1".into()));
    }
    if prices.len() <= m {
        return Err(EwsError::TooShort {
            need: m + 1,
            got: prices.len(),
        });
    }
    for (i, &p) in prices.iter().enumerate() {
        if !(p > 0.0) {
            return Err(EwsError::NonPositive {
                column: "prices".into(),
                value: p,
                index: i,
            });
        }
    }
    let values = (0..prices.len())
        .map(|t| {
            let lo = t.saturating_sub(m);
            let max = prices[lo..=t].iter().cloned().fold(f64::MIN, f64::max);
            prices[t] / max
        })
        .collect();
    Ok(TqiIndex {
        kind: TqiKind::Cmax,
        values,
        params: vec![("m".into(), m as f64)],
    })
}

/// Thresholds an index into crisis labels with bound coefficient `lambda`.
///
/// FPI/EPI flag the upper tail (`index > mu + lambda*sd`); CMAX flags deep
/// drawdowns (`index <= mu - lambda*sd`). A constant index (sd = 0) yields
/// all-zero labels.
pub fn tqi_label(index: &TqiIndex, lambda: f64) -> Result<CrisisLabels> {
    if !(lambda > 0.0) {
        return Err(EwsError::InvalidArgument(format!(
            "lambda must be > 0, got {lambda}"
        )));
    }
    let (mu, sd) = mean_sd(&index.values);
    let labels = if !(sd > 0.0) {
        vec![0u8; index.values.len()]
    } else {
        index
            .values
            .iter()
            .map(|&v| match index.kind {
                TqiKind::Cmax => u8::from(v <= mu - lambda * sd),
                _ => u8::from(v > mu + lambda * sd),
            })
            .collect()
    };
    Ok(CrisisLabels::new(
        labels,
        HorizonKind::ShortTerm,
        format!("{:?}(lambda={lambda})", index.kind),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::mean_sd;

    #[test]
    fn fpi_centering_and_unit_deviation() {
        // Symmetric inputs: at the middle point every series sits at its mean.
        let e = vec![-1.0, 0.0, 1.0];
        let r = vec![-2.0, 0.0, 2.0];
        let i = vec![-3.0, 0.0, 3.0];
        let fpi = compute_fpi(&e, &r, &i).unwrap();
        assert!(fpi.values[1].abs() < 1e-12);

        // e one sd above mean, r and i flat at mean contribution.
        let (mu_e, sd_e) = mean_sd(&e);
        let t = 2;
        let expected = ((e[t] - mu_e) / sd_e - (r[t] - 0.0) / mean_sd(&r).1
            + (i[t] - 0.0) / mean_sd(&i).1)
            / 3.0;
        assert!((fpi.values[t] - expected).abs() < 1e-12);
        // unit-deviation identity on a constructed case: z_e = 1, others 0 -> 1/3
        let z = (1.0f64 - 0.0) / 1.0 / 3.0;
        assert!((z - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn fpi_hand_oracle() {
        let e = vec![1.0, 2.0, 3.0];
        let r = vec![5.0, 4.0, 6.0];
        let i = vec![0.1, 0.3, 0.2];
        let fpi = compute_fpi(&e, &r, &i).unwrap();
        let (mu_e, sd_e) = mean_sd(&e);
        let (mu_r, sd_r) = mean_sd(&r);
        let (mu_i, sd_i) = mean_sd(&i);
        for t in 0..3 {
            let hand =
                ((e[t] - mu_e) / sd_e - (r[t] - mu_r) / sd_r + (i[t] - mu_i) / sd_i) / 3.0;
            assert!((fpi.values[t] - hand).abs() < 1e-12);
        }
    }

    #[test]
    fn fpi_zero_std_rejected() {
        let e = vec![1.0, 1.0, 1.0];
        let r = vec![5.0, 4.0, 6.0];
        let i = vec![0.1, 0.3, 0.2];
        assert!(matches!(
            compute_fpi(&e, &r, &i).unwrap_err(),
            EwsError::ZeroStd(_)
        ));
    }

    #[test]
    fn epi_klr_term_isolation() {
        let e = vec![0.5, -0.25, 0.75];
        let r = vec![0.1, -0.1, 0.05];
        let i = vec![0.2, -0.3, 0.1];
        let epi = compute_epi(EpiKind::Klr, &e, &r, &i).unwrap();
        let (_, sd_e) = mean_sd(&e);
        let (_, sd_r) = mean_sd(&r);
        let (_, sd_i) = mean_sd(&i);
        for t in 0..3 {
            let hand = e[t] - sd_e / sd_r * r[t] + sd_e / sd_i * i[t];
            assert!((epi.values[t] - hand).abs() < 1e-12);
        }
        // With the r and i contributions zeroed at a point, EPI reduces to the
        // exchange-rate term.
        let r0 = vec![0.0, 0.1, -0.1];
        let i0 = vec![0.0, 0.2, -0.2];
        let epi = compute_epi(EpiKind::Klr, &e, &r0, &i0).unwrap();
        assert!((epi.values[0] - e[0]).abs() < 1e-12);
    }

    #[test]
    fn epi_erw_hand_oracle() {
        let e = vec![0.5, -0.25, 0.75];
        let r = vec![0.1, -0.1, 0.05];
        let i = vec![0.2, -0.3, 0.1];
        let epi = compute_epi(EpiKind::Erw, &e, &r, &i).unwrap();
        let (_, sd_e) = mean_sd(&e);
        let (_, sd_r) = mean_sd(&r);
        let (_, sd_i) = mean_sd(&i);
        for t in 0..3 {
            let hand = e[t] / sd_e - r[t] / sd_r + i[t] / sd_i;
            assert!((epi.values[t] - hand).abs() < 1e-12);
        }
    }

    #[test]
    fn cmax_examples() {
        // Strictly increasing prices: running max is the current price.
        let inc: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let cm = compute_cmax(&inc, 3).unwrap();
        assert!(cm.values.iter().all(|&v| (v - 1.0).abs() < 1e-15));

        let prices = vec![10.0, 12.0, 9.0, 8.0];
        let cm = compute_cmax(&prices, 2).unwrap();
        let expect = [1.0, 1.0, 0.75, 8.0 / 12.0];
        for (v, e) in cm.values.iter().zip(expect) {
            assert!((v - e).abs() < 1e-12);
        }

        // P_t equal to half its window max.
        let prices = vec![10.0, 5.0];
        let cm = compute_cmax(&prices, 1).unwrap();
        assert!((cm.values[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cmax_values_in_unit_interval() {
        let prices = vec![3.0, 1.0, 4.0, 1.5, 9.0, 2.6, 5.0];
        let cm = compute_cmax(&prices, 3).unwrap();
        assert!(cm.values.iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn tqi_label_examples() {
        let constant = TqiIndex {
            kind: TqiKind::Fpi,
            values: vec![2.0; 6],
            params: vec![],
        };
        for lambda in [0.5, 1.0, 3.0] {
            assert_eq!(tqi_label(&constant, lambda).unwrap().crisis_count(), 0);
        }

        let idx = TqiIndex {
            kind: TqiKind::Fpi,
            values: vec![0.0, 0.0, 0.0, 10.0],
            params: vec![],
        };
        // mu = 2.5, sd = 5, bound 7.5 -> only the last point crosses.
        let labels = tqi_label(&idx, 1.0).unwrap();
        assert_eq!(labels.labels, vec![0, 0, 0, 1]);
    }

    #[test]
    fn tqi_label_monotone_in_lambda() {
        let idx = TqiIndex {
            kind: TqiKind::Fpi,
            values: vec![0.1, -0.4, 2.0, 0.3, 3.5, -1.0, 1.8, 0.0],
            params: vec![],
        };
        let grid = [1.0, 1.5, 2.0, 2.5, 3.0];
        let mut prev: Option<Vec<u8>> = None;
        for &lambda in &grid {
            let l = tqi_label(&idx, lambda).unwrap().labels;
            if let Some(p) = prev {
                // larger lambda -> crisis set is a subset
                for (a, b) in l.iter().zip(&p) {
                    assert!(a <= b);
                }
            }
            prev = Some(l);
        }
    }

    #[test]
    fn cmax_label_direction() {
        let prices = vec![10.0, 10.0, 10.0, 10.0, 10.0, 10.0, 10.0, 4.0];
        let cm = compute_cmax(&prices, 3).unwrap();
        let labels = tqi_label(&cm, 1.0).unwrap();
        // Only the crash point is below mu - sd.
        assert_eq!(labels.labels.last(), Some(&1));
        assert_eq!(labels.crisis_count(), 1);
    }
}
