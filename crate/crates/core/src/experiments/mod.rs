//! Configuration-driven experiment runners with deterministic CSV output
//! and model persistence.
//!
//! Every runner takes a validated [`ExperimentConfig`] and an output
//! directory, writes its CSV files there together with a `run.json` record,
//! and returns an in-memory report. Feeding `run.json` back as the config
//! reproduces every CSV byte for byte.
//!
//! CSV files are UTF-8 with a header row; floats are written with 17
//! significant digits. Column layouts are fixed per
//! [`CSV_SCHEMA_VERSION`]:
//!
//! | file | columns |
//! |------|---------|
//! | `rank_sweep.csv` | rank, ae_x_rel, ae_b_rel, pair_forward_rel, pair_inverse_rel, tsvd_forward_rel, tsvd_inverse_rel, r_x, r_b |
//! | `mnist_errors.csv` | sample_id, rel_error |
//! | `loss_curves.csv` | epoch, loss_x, loss_b |
//! | `e2e_comparison.csv` | j, pair_error, e2e_error |
//! | `ood_metrics.csv` | set, sample_id, metric, value |
//! | `ood_auroc.csv` | metric, auroc, null_auroc |
//! | `ood_summary.csv` | set, count, flagged_fraction |

mod config;
mod ct;
mod mnist;
mod persist;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use config::{
    CtGeometry, E2eSettings, ExperimentConfig, ExperimentKind, MnistSettings, OodSettings,
    TrainingSettings, CONFIG_SCHEMA_VERSION,
};
pub use ct::{
    ct_operator, fit_ct_pair, generate_ct, rank_sweep_on_bundle, run_rank_sweep, tsvd_errors,
    RankSweepReport, RankSweepRow, RANK_SWEEP_HEADER,
};
pub use mnist::{
    blur_operator, e2e_comparison, load_mnist, observe, ood_experiment, run_e2e_comparison,
    run_mnist_pipeline, run_ood_experiment, train_neural_pair, write_e2e_csv, write_ood_csv,
    E2eReport, E2eRow, MnistData, MnistReport, NeuralPair, OodReport,
};
pub use persist::{
    load_model, save_model, FileEntry, ModelKind, ModelManifest, SavedModel,
    MANIFEST_SCHEMA_VERSION,
};

pub const LIBRARY_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const CSV_SCHEMA_VERSION: u32 = 1;

/// Contents of `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub library_version: String,
    pub csv_schema_version: u32,
    pub config: ExperimentConfig,
    pub outputs: Vec<String>,
}

pub fn write_run_record(
    out: &Path,
    command: &str,
    cfg: &ExperimentConfig,
    outputs: &[&str],
) -> Result<()> {
    let record = RunRecord {
        command: command.to_string(),
        library_version: LIBRARY_VERSION.to_string(),
        csv_schema_version: CSV_SCHEMA_VERSION,
        config: cfg.clone(),
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    };
    std::fs::write(
        out.join("run.json"),
        serde_json::to_string_pretty(&record)? + "\n",
    )?;
    Ok(())
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut text = header.join(",");
    text.push('\n');
    for row in rows {
        let _ = writeln!(text, "{}", row.join(","));
    }
    std::fs::write(path, text)?;
    Ok(())
}
