//! `ews report`: gather whatever reports the other stages left in the output
//! directory into one plain-text summary (stdout and `report.txt`).

use crate::config::ExperimentConfig;
use crate::{write_file, CliError};

const SECTIONS: [(&str, &str); 4] = [
    ("crisis classification", "classify_report.csv"),
    ("forecast evaluation", "eval_report.txt"),
    ("back-test", "backtest_table.csv"),
    ("reality check", "reality_check.csv"),
];

pub fn run(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let mut out = String::new();
    for (title, file) in SECTIONS {
        out.push_str(&format!("== {title} ({file}) ==\n"));
        match std::fs::read_to_string(cfg.run.out_dir.join(file)) {
            Ok(text) => out.push_str(&text),
            Err(_) => out.push_str("(not found)\n"),
        }
        out.push('\n');
    }
    print!("{out}");
    write_file(&cfg.run.out_dir.join("report.txt"), &out)
}
