//! Factor panel ingestion, alignment, splitting and standardization.
//!
//! A [`FactorPanel`] is a date-indexed table of named real-valued series at a
//! declared observation frequency. Missing values are carried as `NaN` and are
//! only legal before alignment/fill.

use std::fmt;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate};
use indexmap::IndexMap;

use crate::{EwsError, Result};

/// Observation frequency. Ordering is total: daily < monthly < annual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Frequency {
    Daily,
    Monthly,
    Annual,
}

impl Frequency {
    /// Identifies the calendar period a date belongs to at this frequency.
    fn period_key(self, d: NaiveDate) -> (i32, u32, u32) {
        match self {
            Frequency::Daily => (d.year(), d.month(), d.day()),
            Frequency::Monthly => (d.year(), d.month(), 0),
            Frequency::Annual => (d.year(), 0, 0),
        }
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Frequency::Daily => write!(f, "daily"),
            Frequency::Monthly => write!(f, "monthly"),
            Frequency::Annual => write!(f, "annual"),
        }
    }
}

impl std::str::FromStr for Frequency {
    type Err = EwsError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "daily" => Ok(Frequency::Daily),
            "monthly" => Ok(Frequency::Monthly),
            "annual" | "annually" => Ok(Frequency::Annual),
            other => Err(EwsError::InvalidArgument(format!(
                "unknown frequency {other:?}"
            ))),
        }
    }
}

/// Resampling method for [`FactorPanel::align`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignMethod {
    /// Coarse to fine: the last published coarse value carries forward.
    ForwardFill,
    /// Fine to coarse: keep the final observation of each period.
    LastOfPeriod,
}

/// A date-indexed table of named factor series at one frequency.
///
/// Invariants: dates strictly increasing, every column has the same length as
/// the date index, no duplicate names. Panels are immutable after
/// construction; all operations return new panels.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPanel {
    dates: Vec<NaiveDate>,
    columns: IndexMap<String, Vec<f64>>,
    frequency: Frequency,
}

impl FactorPanel {
    pub fn new(
        dates: Vec<NaiveDate>,
        columns: IndexMap<String, Vec<f64>>,
        frequency: Frequency,
    ) -> Result<Self> {
        for (i, w) in dates.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(EwsError::NonMonotoneDates { row: i + 1 });
            }
        }
        for col in columns.values() {
            if col.len() != dates.len() {
                return Err(EwsError::LengthMismatch {
                    left: dates.len(),
                    right: col.len(),
                });
            }
        }
        Ok(FactorPanel {
            dates,
            columns,
            frequency,
        })
    }

    /// Convenience constructor from (name, series) pairs.
    pub fn from_columns(
        dates: Vec<NaiveDate>,
        cols: Vec<(&str, Vec<f64>)>,
        frequency: Frequency,
    ) -> Result<Self> {
        let mut columns = IndexMap::new();
        for (name, series) in cols {
            if columns.insert(name.to_string(), series).is_some() {
                return Err(EwsError::InvalidArgument(format!(
                    "duplicate column {name:?}"
                )));
            }
        }
        Self::new(dates, columns, frequency)
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn frequency(&self) -> Frequency {
        self.frequency
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(|s| s.as_str())
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .get(name)
            .map(|v| v.as_slice())
            .ok_or_else(|| EwsError::UnknownColumn(name.to_string()))
    }

    pub fn columns(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.columns.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Row-major design matrix over the given column order.
    pub fn design_matrix(&self, names: &[String]) -> Result<Vec<Vec<f64>>> {
        let cols: Vec<&[f64]> = names
            .iter()
            .map(|n| self.column(n))
            .collect::<Result<_>>()?;
        Ok((0..self.len())
            .map(|t| cols.iter().map(|c| c[t]).collect())
            .collect())
    }

    /// Loads a CSV with a leading `date` column (ISO-8601) and numeric
    /// columns; empty cells become missing markers.
    pub fn load_csv<P: AsRef<Path>>(path: P, frequency: Frequency) -> Result<Self> {
        let path_str = path.as_ref().display().to_string();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_path(path.as_ref())
            .map_err(|e| match e.kind() {
                csv::ErrorKind::Io(_) => EwsError::Io {
                    path: path_str.clone(),
                    source: std::io::Error::other(e.to_string()),
                },
                _ => EwsError::Csv {
                    path: path_str.clone(),
                    message: e.to_string(),
                },
            })?;
        let headers = reader
            .headers()
            .map_err(|e| EwsError::Csv {
                path: path_str.clone(),
                message: e.to_string(),
            })?
            .clone();
        if headers.is_empty() || headers.get(0) != Some("date") {
            return Err(EwsError::Csv {
                path: path_str,
                message: "first column header must be \"date\"".into(),
            });
        }
        let names: Vec<String> = headers.iter().skip(1).map(|s| s.to_string()).collect();
        let mut dates = Vec::new();
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
        for (row_idx, record) in reader.records().enumerate() {
            let row = row_idx + 1; // 1-based data row
            let record = record.map_err(|e| EwsError::Csv {
                path: path_str.clone(),
                message: e.to_string(),
            })?;
            if record.len() != names.len() + 1 {
                return Err(EwsError::RaggedRow {
                    row,
                    expected: names.len() + 1,
                    got: record.len(),
                });
            }
            let date_str = record.get(0).unwrap();
            let date = NaiveDate::parse_from_str(date_str, "%Y-%m-%d").map_err(|_| {
                EwsError::BadDate {
                    row,
                    value: date_str.to_string(),
                }
            })?;
            if let Some(prev) = dates.last() {
                if date <= *prev {
                    return Err(EwsError::NonMonotoneDates { row });
                }
            }
            dates.push(date);
            for (j, cell) in record.iter().skip(1).enumerate() {
                let cell = cell.trim();
                if cell.is_empty() {
                    cols[j].push(f64::NAN);
                } else {
                    let v: f64 = cell.parse().map_err(|_| EwsError::BadNumber {
                        row,
                        column: names[j].clone(),
                        value: cell.to_string(),
                    })?;
                    cols[j].push(v);
                }
            }
        }
        let mut columns = IndexMap::new();
        for (name, col) in names.into_iter().zip(cols) {
            if columns.insert(name.clone(), col).is_some() {
                return Err(EwsError::InvalidArgument(format!(
                    "duplicate column {name:?}"
                )));
            }
        }
        Self::new(dates, columns, frequency)
    }

    /// Serializes the panel back to the CSV wire format accepted by
    /// [`FactorPanel::load_csv`]. Missing values become empty cells.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("date");
        for name in self.columns.keys() {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (t, d) in self.dates.iter().enumerate() {
            out.push_str(&d.format("%Y-%m-%d").to_string());
            for col in self.columns.values() {
                out.push(',');
                if col[t].is_finite() || col[t].is_infinite() {
                    out.push_str(&format!("{}", col[t]));
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn save_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_csv_string()).map_err(|e| EwsError::Io {
            path: path.as_ref().display().to_string(),
            source: e,
        })
    }

    /// Simple percentage returns of a strictly positive price column:
    /// `100 * (P_t - P_{t-1}) / P_{t-1}`.
    pub fn to_returns(&self, column: &str) -> Result<Vec<f64>> {
        let prices = self.column(column)?;
        if prices.len() < 2 {
            return Err(EwsError::TooShort {
                need: 2,
                got: prices.len(),
            });
        }
        for (i, &p) in prices.iter().enumerate() {
            if !(p > 0.0) {
                return Err(EwsError::NonPositive {
                    column: column.to_string(),
                    value: p,
                    index: i,
                });
            }
        }
        Ok(prices
            .windows(2)
            .map(|w| 100.0 * (w[1] - w[0]) / w[0])
            .collect())
    }

    /// Resamples the panel onto the target frequency.
    ///
    /// Coarse to fine uses `ForwardFill`: the value published at date `d`
    /// carries to every finer date `>= d` until the next publication; fine to
    /// coarse uses `LastOfPeriod`. Aligning to the panel's own frequency is
    /// the identity. After alignment, interior gaps are forward-filled so
    /// that no missing values remain after the first published value.
    pub fn align(&self, target: Frequency, method: AlignMethod) -> Result<FactorPanel> {
        if target == self.frequency {
            return Ok(self.clone());
        }
        for (name, col) in &self.columns {
            if !col.iter().any(|v| v.is_finite()) {
                return Err(EwsError::AllMissing(name.clone()));
            }
        }
        if self.is_empty() {
            return Err(EwsError::TooShort { need: 1, got: 0 });
        }
        let mut panel = if target < self.frequency {
            if method != AlignMethod::ForwardFill {
                return Err(EwsError::InvalidArgument(
                    "coarse-to-fine alignment requires forward_fill".into(),
                ));
            }
            self.refine(target)?
        } else {
            if method != AlignMethod::LastOfPeriod {
                return Err(EwsError::InvalidArgument(
                    "fine-to-coarse alignment requires last_of_period".into(),
                ));
            }
            self.coarsen(target)?
        };
        panel.forward_fill_in_place();
        Ok(panel)
    }

    fn refine(&self, target: Frequency) -> Result<FactorPanel> {
        let first = *self.dates.first().unwrap();
        let last = *self.dates.last().unwrap();
        let grid = period_grid(self.frequency, target, first, last);
        let mut columns = IndexMap::new();
        for (name, col) in &self.columns {
            let mut out = Vec::with_capacity(grid.len());
            let mut src = 0usize;
            let mut current = f64::NAN;
            for &g in &grid {
                while src < self.dates.len() && self.dates[src] <= g {
                    if col[src].is_finite() {
                        current = col[src];
                    }
                    src += 1;
                }
                out.push(current);
            }
            columns.insert(name.clone(), out);
        }
        FactorPanel::new(grid, columns, target)
    }

    fn coarsen(&self, target: Frequency) -> Result<FactorPanel> {
        // Last observation of each period; the period is dated by its final
        // observed row.
        let mut grid: Vec<NaiveDate> = Vec::new();
        let mut picks: Vec<usize> = Vec::new();
        for (i, &d) in self.dates.iter().enumerate() {
            let key = target.period_key(d);
            if let Some(&prev) = picks.last() {
                if target.period_key(self.dates[prev]) == key {
                    *picks.last_mut().unwrap() = i;
                    *grid.last_mut().unwrap() = d;
                    continue;
                }
            }
            picks.push(i);
            grid.push(d);
        }
        let mut columns = IndexMap::new();
        for (name, col) in &self.columns {
            columns.insert(name.clone(), picks.iter().map(|&i| col[i]).collect());
        }
        FactorPanel::new(grid, columns, target)
    }

    fn forward_fill_in_place(&mut self) {
        for col in self.columns.values_mut() {
            let mut current = f64::NAN;
            for v in col.iter_mut() {
                if v.is_finite() {
                    current = *v;
                } else if current.is_finite() {
                    *v = current;
                }
            }
        }
    }

    /// Joins another panel's columns onto this panel's date index. The other
    /// panel must be at the same frequency; its values are matched by the
    /// latest publication date not after each of this panel's dates.
    pub fn merge(&self, other: &FactorPanel) -> Result<FactorPanel> {
        if other.frequency != self.frequency {
            return Err(EwsError::InvalidArgument(format!(
                "cannot merge {} panel into {} panel; align first",
                other.frequency, self.frequency
            )));
        }
        let mut columns = self.columns.clone();
        for (name, col) in &other.columns {
            if columns.contains_key(name) {
                return Err(EwsError::InvalidArgument(format!(
                    "duplicate column {name:?}"
                )));
            }
            let mut out = Vec::with_capacity(self.len());
            let mut src = 0usize;
            let mut current = f64::NAN;
            for &d in &self.dates {
                while src < other.dates.len()
                    && self.frequency.period_key(other.dates[src]) <= self.frequency.period_key(d)
                {
                    if col[src].is_finite() {
                        current = col[src];
                    }
                    src += 1;
                }
                out.push(current);
            }
            columns.insert(name.clone(), out);
        }
        FactorPanel::new(self.dates.clone(), columns, self.frequency)
    }

    /// Chronological split at `floor(in_fraction * len)`.
    pub fn split(&self, spec: SplitSpec) -> Result<(FactorPanel, FactorPanel)> {
        let n = self.len();
        let cut = (spec.in_fraction * n as f64).floor() as usize;
        if cut < 1 || cut >= n {
            return Err(EwsError::BadSplit {
                fraction: spec.in_fraction,
                len: n,
            });
        }
        Ok((self.slice(0, cut), self.slice(cut, n)))
    }

    /// Row slice `[start, end)` as a new panel.
    pub fn slice(&self, start: usize, end: usize) -> FactorPanel {
        let dates = self.dates[start..end].to_vec();
        let columns = self
            .columns
            .iter()
            .map(|(k, v)| (k.clone(), v[start..end].to_vec()))
            .collect();
        FactorPanel {
            dates,
            columns,
            frequency: self.frequency,
        }
    }

    /// A new panel keeping only the named columns, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<FactorPanel> {
        let mut columns = IndexMap::new();
        for &name in names {
            columns.insert(name.to_string(), self.column(name)?.to_vec());
        }
        FactorPanel::new(self.dates.clone(), columns, self.frequency)
    }

    /// Appends another panel's rows; dates must continue strictly increasing
    /// and the column sets must match.
    pub fn concat(&self, other: &FactorPanel) -> Result<FactorPanel> {
        let mut dates = self.dates.clone();
        dates.extend_from_slice(&other.dates);
        let mut columns = IndexMap::new();
        for (name, col) in &self.columns {
            let tail = other.column(name)?;
            let mut v = col.clone();
            v.extend_from_slice(tail);
            columns.insert(name.clone(), v);
        }
        FactorPanel::new(dates, columns, self.frequency)
    }
}

/// In-sample fraction for a chronological split.
#[derive(Debug, Clone, Copy)]
pub struct SplitSpec {
    pub in_fraction: f64,
}

impl SplitSpec {
    pub fn new(in_fraction: f64) -> Result<Self> {
        if !(in_fraction > 0.0 && in_fraction < 1.0) {
            return Err(EwsError::InvalidArgument(format!(
                "in_fraction must be in (0,1), got {in_fraction}"
            )));
        }
        Ok(SplitSpec { in_fraction })
    }
}

fn period_grid(
    source: Frequency,
    target: Frequency,
    first: NaiveDate,
    last: NaiveDate,
) -> Vec<NaiveDate> {
    // Span the full calendar periods covered by the source sample so that the
    // last published value fills its own period.
    let (start, end) = match source {
        Frequency::Annual => (
            NaiveDate::from_ymd_opt(first.year(), 1, 1).unwrap(),
            NaiveDate::from_ymd_opt(last.year(), 12, 31).unwrap(),
        ),
        Frequency::Monthly => (
            NaiveDate::from_ymd_opt(first.year(), first.month(), 1).unwrap(),
            last_day_of_month(last.year(), last.month()),
        ),
        Frequency::Daily => (first, last),
    };
    match target {
        Frequency::Daily => {
            let mut out = Vec::new();
            let mut d = start;
            while d <= end {
                out.push(d);
                d += Duration::days(1);
            }
            out
        }
        Frequency::Monthly => {
            let mut out = Vec::new();
            let (mut y, mut m) = (start.year(), start.month());
            loop {
                let d = NaiveDate::from_ymd_opt(y, m, 1).unwrap();
                if d > end {
                    break;
                }
                out.push(d);
                if m == 12 {
                    y += 1;
                    m = 1;
                } else {
                    m += 1;
                }
            }
            out
        }
        Frequency::Annual => (start.year()..=end.year())
            .map(|y| NaiveDate::from_ymd_opt(y, 1, 1).unwrap())
            .collect(),
    }
}

fn last_day_of_month(year: i32, month: u32) -> NaiveDate {
    let (ny, nm) = if month == 12 {
        (year + 1, 1)
    } else {
        (year, month + 1)
    };
    NaiveDate::from_ymd_opt(ny, nm, 1).unwrap() - Duration::days(1)
}

/// Per-column location/scale fitted on a training panel.
#[derive(Debug, Clone)]
pub struct Standardizer {
    /// Retained columns with their training mean and sample sd.
    pub stats: Vec<(String, f64, f64)>,
    /// Columns dropped for zero or undefined training variance.
    pub dropped: Vec<String>,
}

impl Standardizer {
    /// Fits per-column mean and (n-1)-divisor standard deviation. Columns
    /// with zero or undefined variance are dropped, not fatal.
    pub fn fit(train: &FactorPanel) -> Standardizer {
        let mut stats = Vec::new();
        let mut dropped = Vec::new();
        for (name, col) in train.columns() {
            let (mu, sd) = mean_sd(col);
            if sd > 0.0 && sd.is_finite() {
                stats.push((name.to_string(), mu, sd));
            } else {
                dropped.push(name.to_string());
            }
        }
        Standardizer { stats, dropped }
    }

    /// Applies `(x - mu_train) / sd_train` to the retained columns.
    pub fn apply(&self, panel: &FactorPanel) -> Result<FactorPanel> {
        let mut columns = IndexMap::new();
        for (name, mu, sd) in &self.stats {
            let col = panel.column(name)?;
            columns.insert(name.clone(), col.iter().map(|x| (x - mu) / sd).collect());
        }
        FactorPanel::new(panel.dates().to_vec(), columns, panel.frequency())
    }

    /// Inverts the transform for a single column.
    pub fn invert(&self, name: &str, z: f64) -> Result<f64> {
        self.stats
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, mu, sd)| z * sd + mu)
            .ok_or_else(|| EwsError::UnknownColumn(name.to_string()))
    }
}

/// Fits on `train` and transforms `apply_to` in one step.
pub fn standardize(train: &FactorPanel, apply_to: &FactorPanel) -> Result<(FactorPanel, Standardizer)> {
    let s = Standardizer::fit(train);
    let out = s.apply(apply_to)?;
    Ok((out, s))
}

/// Mean and sample standard deviation ((n-1) divisor).
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mu = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mu, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mu, var.sqrt())
}
