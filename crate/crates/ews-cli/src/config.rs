//! TOML experiment configuration: data sources, simulation parameters,
//! classifier and predictor settings, run controls and back-test settings.
//! Every section has complete defaults so partial configs work.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub simulate: SimulateConfig,
    pub classifier: ClassifierConfig,
    pub predictors: PredictorsConfig,
    pub run: RunConfig,
    pub backtest: BacktestConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Factor panel CSV (first column `date`, one column per series).
    pub panel: Option<PathBuf>,
    /// Optional precomputed crisis labels CSV (`date,label`).
    pub labels: Option<PathBuf>,
    /// Market kind, `currency` or `stock` (selects index defaults).
    pub market: String,
    /// `daily`, `monthly` or `annual`.
    pub frequency: String,
    /// Column holding the market return series.
    pub return_column: String,
    /// Columns for the pressure indices (currency market).
    pub exchange_column: Option<String>,
    pub reserves_column: Option<String>,
    pub rate_column: Option<String>,
    /// Price-level column for the drawdown index (stock market).
    pub price_column: Option<String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            panel: None,
            labels: None,
            market: "stock".into(),
            frequency: "daily".into(),
            return_column: "returns".into(),
            exchange_column: None,
            reserves_column: None,
            rate_column: None,
            price_column: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub k: usize,
    pub p: usize,
    pub q: usize,
    pub intercept: f64,
    pub ar: Vec<f64>,
    /// ARCH coefficients `alpha_0..alpha_q`.
    pub arch: Vec<f64>,
    /// Regime variance scales, first fixed at 1.
    pub scales: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
    pub length: usize,
    /// Extra factor columns (first half regime-informative, rest noise).
    pub n_factors: usize,
    pub start_date: String,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            k: 2,
            p: 1,
            q: 1,
            intercept: 0.0,
            ar: vec![0.1],
            arch: vec![0.5, 0.3],
            scales: vec![1.0, 10.0],
            transition: vec![vec![0.98, 0.02], vec![0.02, 0.98]],
            length: 1000,
            n_factors: 8,
            start_date: "2000-01-03".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    /// `swarch` (reports both the fixed-cutoff and valley-cutoff variants),
    /// `fpi`, `cmax`, `epi_erw` or `epi_klr`.
    pub kind: String,
    /// Threshold coefficients for the index classifiers (one report row per
    /// value; the first is used when a single labeling is needed).
    pub lambda_grid: Vec<f64>,
    pub k: usize,
    pub p: usize,
    pub q: usize,
    /// Fixed labeling cutoff for the plain regime classifier.
    pub fixed_cutoff: f64,
    /// Histogram bins for the valley cutoff.
    pub bins: usize,
    /// Trailing window for the drawdown index.
    pub cmax_window: usize,
    /// Resamples for the misspecification average.
    pub bootstrap_b: usize,
    /// Bootstrap window length as a fraction of the sample.
    pub piece_fraction: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            kind: "swarch".into(),
            lambda_grid: vec![1.0, 1.5, 2.0, 2.5, 3.0],
            k: 2,
            p: 1,
            q: 1,
            fixed_cutoff: 0.5,
            bins: 50,
            cmax_window: 24,
            bootstrap_b: 200,
            piece_fraction: 0.25,
        }
    }
}

pub const KNOWN_CLASSIFIERS: [&str; 5] = ["swarch", "fpi", "cmax", "epi_erw", "epi_klr"];
pub const KNOWN_PREDICTORS: [&str; 6] = [
    "stepwise_logit",
    "klr",
    "mlp",
    "random_forest",
    "gradient_boost",
    "attn_lstm",
];

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictorsConfig {
    pub list: Vec<String>,
    pub logit_alpha: f64,
    pub klr_nsr_ceiling: f64,
    pub mlp_hidden: usize,
    pub mlp_l2: f64,
    pub mlp_epochs: usize,
    /// Forest size ceiling for the out-of-bag sweep.
    pub rf_trees: usize,
    pub gbt_depth: usize,
    pub gbt_rounds: usize,
    pub attn_t_steps: usize,
    pub attn_hidden: usize,
    pub attn_epochs: usize,
}

impl Default for PredictorsConfig {
    fn default() -> Self {
        PredictorsConfig {
            list: KNOWN_PREDICTORS.iter().map(|s| s.to_string()).collect(),
            logit_alpha: 0.05,
            klr_nsr_ceiling: 0.75,
            mlp_hidden: 8,
            mlp_l2: 1e-4,
            mlp_epochs: 300,
            rf_trees: 100,
            gbt_depth: 3,
            gbt_rounds: 100,
            attn_t_steps: 4,
            attn_hidden: 8,
            attn_epochs: 100,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// `short` or `long`.
    pub horizon: String,
    pub split_fraction: f64,
    pub seed: u64,
    /// Probability threshold for turning forecasts into signals.
    pub threshold: f64,
    pub out_dir: PathBuf,
    /// Worker threads; 0 keeps the library default.
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            horizon: "short".into(),
            split_fraction: 0.75,
            seed: 42,
            threshold: 0.5,
            out_dir: PathBuf::from("out"),
            jobs: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BacktestConfig {
    /// Asset return columns of the panel.
    pub assets: Vec<String>,
    /// Risk-aversion levels.
    pub gammas: Vec<u8>,
    /// Rolling window for realized volatility and expected return.
    pub vol_window: usize,
    /// Optional forecast CSV (`date,probability,signal`) driving the
    /// warning-based strategy.
    pub forecast: Option<PathBuf>,
    /// Reality-check resamples.
    pub bootstrap_b: usize,
    pub block_parameter: f64,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            assets: vec![],
            gammas: vec![1, 2, 3],
            vol_window: 252,
            forecast: None,
            bootstrap_b: 1000,
            block_parameter: 0.1,
        }
    }
}

impl ExperimentConfig {
    /// Loads and validates; all failures are configuration errors (exit 2).
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: String| Err(CliError::Config(msg));
        if !KNOWN_CLASSIFIERS.contains(&self.classifier.kind.as_str()) {
            return fail(format!(
                "classifier.kind {:?} not one of {KNOWN_CLASSIFIERS:?}",
                self.classifier.kind
            ));
        }
        for p in &self.predictors.list {
            if !KNOWN_PREDICTORS.contains(&p.as_str()) {
                return fail(format!("predictors.list entry {p:?} not one of {KNOWN_PREDICTORS:?}"));
            }
        }
        if self.classifier.lambda_grid.is_empty()
            || self.classifier.lambda_grid.iter().any(|&l| !(l > 0.0))
        {
            return fail("classifier.lambda_grid must be nonempty with positive values".into());
        }
        if !(self.run.split_fraction > 0.0 && self.run.split_fraction < 1.0) {
            return fail(format!(
                "run.split_fraction {} outside (0,1)",
                self.run.split_fraction
            ));
        }
        if !(self.run.threshold > 0.0 && self.run.threshold < 1.0) {
            return fail(format!("run.threshold {} outside (0,1)", self.run.threshold));
        }
        if self.run.horizon != "short" && self.run.horizon != "long" {
            return fail(format!("run.horizon {:?} must be short or long", self.run.horizon));
        }
        if self.backtest.gammas.iter().any(|&g| !(1..=3).contains(&g)) {
            return fail("backtest.gammas entries must be 1, 2 or 3".into());
        }
        if !(self.backtest.block_parameter > 0.0 && self.backtest.block_parameter <= 1.0) {
            return fail(format!(
                "backtest.block_parameter {} outside (0,1]",
                self.backtest.block_parameter
            ));
        }
        if !(self.classifier.piece_fraction > 0.0 && self.classifier.piece_fraction < 1.0) {
            return fail(format!(
                "classifier.piece_fraction {} outside (0,1)",
                self.classifier.piece_fraction
            ));
        }
        Ok(())
    }

    /// Checks that a referenced input file exists, naming it otherwise.
    pub fn require_file<'a>(
        &self,
        field: &str,
        value: Option<&'a PathBuf>,
    ) -> Result<&'a PathBuf, CliError> {
        let path =
            value.ok_or_else(|| CliError::Config(format!("config field {field} is not set")))?;
        if !path.exists() {
            return Err(CliError::Config(format!(
                "{field}: no such file: {}",
                path.display()
            )));
        }
        Ok(path)
    }
}
