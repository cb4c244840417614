//! Single training runs and their on-disk outputs.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use memsac_core::exec::Execution;
use memsac_core::nn::ModelBundle;
use memsac_core::trainer::{run_training_exec, IterationRecord, TrainOutcome};
use serde::{Deserialize, Serialize};

use crate::config::{LoadedData, RunConfig};

pub const CSV_HEADER: &str = "iter,l_sup,l_d,l_sc,total,lr_encoder,lr_heads,bank_size,\
mean_sim_avg,mean_sim_literal,pl_acc,skip_count";

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MODEL_FILE: &str = "model.json";
pub const MANIFEST_FILE: &str = "manifest.cfg";

pub fn csv_row(r: &IterationRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        r.iteration,
        r.l_sup,
        r.l_d,
        r.l_sc,
        r.total,
        r.lr_encoder,
        r.lr_heads,
        r.bank_size,
        r.mean_sim_avg,
        r.mean_sim_literal,
        r.pl_acc.map_or(String::new(), |v| v.to_string()),
        r.skip_count
    )
}

/// Final report of a run. Accuracy fields are absent when the target set
/// has no labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub iterations: usize,
    pub seed: u64,
    pub data: String,
    pub accuracy: Option<f64>,
    pub macro_accuracy: Option<f64>,
    /// `null` for classes absent from the target set.
    pub per_class: Vec<Option<f64>>,
    pub mean_similarity: Option<f64>,
    pub pseudo_label_accuracy: Option<f64>,
    pub final_l_sup: f64,
    pub final_l_d: f64,
    pub final_l_sc: f64,
    pub final_total: f64,
}

impl Summary {
    fn new(cfg: &RunConfig, data: &LoadedData, outcome: &TrainOutcome) -> Self {
        let last = outcome.history.last().cloned().unwrap_or_default();
        let eval = outcome.eval.as_ref();
        Self {
            iterations: outcome.history.len(),
            seed: cfg.train.seed,
            data: data.description.clone(),
            accuracy: eval.map(|e| e.accuracy),
            macro_accuracy: eval.map(|e| e.macro_accuracy),
            per_class: eval.map_or_else(Vec::new, |e| {
                e.per_class
                    .iter()
                    .map(|v| (!v.is_nan()).then_some(*v))
                    .collect()
            }),
            mean_similarity: eval.map(|e| e.mean_similarity),
            pseudo_label_accuracy: eval.map(|e| e.pseudo_label_accuracy),
            final_l_sup: last.l_sup,
            final_l_d: last.l_d,
            final_l_sc: last.l_sc,
            final_total: last.total,
        }
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

/// Resolved configuration as a re-loadable config file; provenance goes in
/// comment lines.
pub fn manifest_text(cfg: &RunConfig, data: &LoadedData, out: &Path) -> String {
    format!(
        "# memsac run manifest\n# tool: memsac {}\n# started: {} (unix seconds)\n# output: {}\n# data: {}\n{}",
        env!("CARGO_PKG_VERSION"),
        unix_now(),
        out.display(),
        data.description,
        cfg.to_text()
    )
}

/// Everything a completed run produced.
pub struct RunResult {
    pub summary: Summary,
    pub model: ModelBundle,
    pub history: Vec<IterationRecord>,
}

/// Trains one configuration, writing the manifest first and then the
/// metrics CSV, summary and model into `out`.
pub fn train_to_dir(
    cfg: &RunConfig,
    out: &Path,
    exec: Execution,
    mut progress: impl FnMut(&IterationRecord),
) -> Result<RunResult> {
    let data = cfg.load_data()?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let manifest_path = out.join(MANIFEST_FILE);
    fs::write(&manifest_path, manifest_text(cfg, &data, out))
        .with_context(|| format!("writing {}", manifest_path.display()))?;

    let csv_path = out.join(METRICS_FILE);
    let mut csv = BufWriter::new(
        File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?,
    );
    writeln!(csv, "{CSV_HEADER}")?;
    let mut write_err = None;
    let outcome = run_training_with(cfg, &data, exec, |r| {
        if write_err.is_none() {
            if let Err(e) = writeln!(csv, "{}", csv_row(r)) {
                write_err = Some(e);
            }
        }
        progress(r);
    });
    // Keep whatever rows were produced, even when training failed.
    csv.flush()?;
    let outcome = outcome?;
    if let Some(e) = write_err {
        return Err(e).with_context(|| format!("writing {}", csv_path.display()));
    }

    let summary = Summary::new(cfg, &data, &outcome);
    fs::write(
        out.join(SUMMARY_FILE),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    fs::write(out.join(MODEL_FILE), serde_json::to_string(&outcome.model)?)?;
    let mut manifest = fs::OpenOptions::new().append(true).open(&manifest_path)?;
    writeln!(manifest, "# finished: {} (unix seconds)", unix_now())?;
    Ok(RunResult {
        summary,
        model: outcome.model,
        history: outcome.history,
    })
}

/// Trains one configuration in memory.
pub fn run_training_with(
    cfg: &RunConfig,
    data: &LoadedData,
    exec: Execution,
    observer: impl FnMut(&IterationRecord),
) -> Result<TrainOutcome> {
    Ok(run_training_exec(
        &cfg.train,
        &data.source,
        &data.target,
        data.truth.as_ref(),
        exec,
        observer,
    )?)
}

/// Convenience for callers that only need the summary.
pub fn train_in_memory(cfg: &RunConfig, exec: Execution) -> Result<(Summary, TrainOutcome)> {
    let data = cfg.load_data()?;
    let outcome = run_training_with(cfg, &data, exec, |_| {})?;
    Ok((Summary::new(cfg, &data, &outcome), outcome))
}
