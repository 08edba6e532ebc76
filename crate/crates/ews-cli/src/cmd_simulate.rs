//! `ews simulate`: write a synthetic regime-switching panel plus its
//! ground-truth regime labels into the output directory.

use chrono::NaiveDate;

use ews_core::classify::SwarchSpec;
use ews_core::frame::Frequency;
use ews_core::sim::{simulate_swarch, SimSpec};

use crate::config::ExperimentConfig;
use crate::{write_file, CliError};

pub fn run(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let s = &cfg.simulate;
    let spec = SwarchSpec {
        k: s.k,
        p: s.p,
        q: s.q,
        intercept: s.intercept,
        ar_coeffs: s.ar.clone(),
        arch_coeffs: s.arch.clone(),
        scales: s.scales.clone(),
        transition: s.transition.clone(),
    };
    spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let frequency: Frequency = cfg
        .data
        .frequency
        .parse()
        .map_err(|e: ews_core::EwsError| CliError::Config(e.to_string()))?;
    let start: NaiveDate = s
        .start_date
        .parse()
        .map_err(|e| CliError::Config(format!("simulate.start_date: {e}")))?;

    let out = simulate_swarch(
        &SimSpec {
            spec,
            len: s.length,
            n_noise_factors: s.n_factors,
        },
        cfg.run.seed,
    )?;
    let panel = out.to_panel(start, frequency)?;
    write_file(&cfg.run.out_dir.join("panel.csv"), &panel.to_csv_string())?;
    write_file(&cfg.run.out_dir.join("truth.csv"), &out.truth_csv(s.k))?;
    Ok(())
}
