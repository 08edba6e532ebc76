//! `ews classify`: run each configured classifier on the full sample and the
//! held-out test window, compute the disagreement rate and its bootstrap
//! average, and emit the misspecification report plus label files.

use ews_core::classify::{bootstrap_misspecification, misspecification_rate, CrisisLabels};
use ews_core::frame::SplitSpec;

use crate::config::ExperimentConfig;
use crate::pipeline::{build_classifiers, load_panel, sanitize};
use crate::{write_file, CliError};

struct Row {
    id: String,
    lambda: Option<f64>,
    crises_full: usize,
    crises_truncated: usize,
    crises_test: usize,
    misspec_rate: f64,
    bootstrap_avg: f64,
    bootstrap_excluded: usize,
}

pub fn run(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let panel = load_panel(cfg)?;
    let n = panel.len();
    let split = SplitSpec::new(cfg.run.split_fraction)?;
    let (train, test) = panel.split(split)?;
    let test_start = train.len();

    let piece_length = ((n as f64 * cfg.classifier.piece_fraction).round() as usize)
        .clamp(2, n.saturating_sub(1));
    let classifiers = build_classifiers(cfg)?;

    let mut rows = Vec::new();
    for c in &classifiers {
        let full = (c.labeler)(&panel)?;
        let test_labels = (c.labeler)(&test)?;
        let truncated = CrisisLabels::new(
            full.labels[test_start..].to_vec(),
            full.horizon_kind,
            full.provenance.clone(),
        );
        let rate = misspecification_rate(&truncated, &test_labels)?;
        let boot = bootstrap_misspecification(
            |window| (c.labeler)(window),
            &panel,
            piece_length,
            cfg.classifier.bootstrap_b,
            cfg.run.seed ^ 0xB007_5EED,
        )?;

        write_file(
            &cfg.run.out_dir.join(format!("labels_{}.csv", sanitize(&c.id))),
            &full.to_csv_string(panel.dates()),
        )?;
        rows.push(Row {
            id: c.id.clone(),
            lambda: c.lambda,
            crises_full: full.crisis_count(),
            crises_truncated: truncated.crisis_count(),
            crises_test: test_labels.crisis_count(),
            misspec_rate: rate,
            bootstrap_avg: boot.avg_rate,
            bootstrap_excluded: boot.excluded,
        });
        eprintln!(
            "stage=classify classifier={} rate={rate:.6} bootstrap_avg={:.6}",
            c.id, boot.avg_rate
        );
    }

    let best = rows
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.bootstrap_avg.partial_cmp(&b.bootstrap_avg).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let mut csv = String::from(
        "classifier,lambda,crises_full,crises_truncated,crises_test,misspec_rate,bootstrap_avg_rate,bootstrap_excluded,is_argmin\n",
    );
    for (i, r) in rows.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.id,
            r.lambda.map(|l| l.to_string()).unwrap_or_default(),
            r.crises_full,
            r.crises_truncated,
            r.crises_test,
            r.misspec_rate,
            r.bootstrap_avg,
            r.bootstrap_excluded,
            u8::from(i == best),
        ));
    }
    write_file(&cfg.run.out_dir.join("classify_report.csv"), &csv)
}
