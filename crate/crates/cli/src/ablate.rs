//! Grid sweeps over one configuration axis.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use memsac_core::exec::Execution;

use crate::config::RunConfig;
use crate::run::{train_in_memory, train_to_dir, Summary};

pub const AXES: &[&str] = &[
    "bank_capacity",
    "tau",
    "k",
    "classes",
    "lambda_sc",
    "pseudo_label",
    "similarity",
];

pub const RESULTS_HEADER: &str =
    "axis,value,seed,accuracy,macro_accuracy,mean_similarity,pseudo_label_accuracy,final_total";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: String,
    pub values: Vec<String>,
    pub seeds: Vec<u64>,
}

/// One results row; `seed` is `None` on the per-value median rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis: String,
    pub value: String,
    pub seed: Option<u64>,
    pub accuracy: f64,
    pub macro_accuracy: f64,
    pub mean_similarity: f64,
    pub pseudo_label_accuracy: f64,
    pub final_total: f64,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let axis = self.axis.replace('-', "_");
        if !AXES.contains(&axis.as_str()) {
            bail!(
                "unknown sweep axis '{}'; expected one of {}",
                self.axis,
                AXES.join(", ")
            );
        }
        if self.values.is_empty() {
            bail!("sweep needs at least one value");
        }
        if self.seeds.is_empty() {
            bail!("sweep needs at least one seed");
        }
        Ok(())
    }

    /// Per-run configurations in output order: values outer, seeds inner.
    pub fn configs(&self, base: &RunConfig) -> Result<Vec<(String, u64, RunConfig)>> {
        self.validate()?;
        let mut out = Vec::new();
        for value in &self.values {
            for &seed in &self.seeds {
                let mut cfg = base.clone();
                cfg.set(&self.axis, value)?;
                cfg.train.seed = seed;
                cfg.train.validate()?;
                out.push((value.clone(), seed, cfg));
            }
        }
        Ok(out)
    }
}

fn row(axis: &str, value: &str, seed: u64, s: &Summary) -> SweepRow {
    SweepRow {
        axis: axis.to_string(),
        value: value.to_string(),
        seed: Some(seed),
        accuracy: s.accuracy.unwrap_or(f64::NAN),
        macro_accuracy: s.macro_accuracy.unwrap_or(f64::NAN),
        mean_similarity: s.mean_similarity.unwrap_or(f64::NAN),
        pseudo_label_accuracy: s.pseudo_label_accuracy.unwrap_or(f64::NAN),
        final_total: s.final_total,
    }
}

/// Directory of one sweep member below `root`.
pub fn run_dir(root: &Path, axis: &str, value: &str, seed: u64) -> PathBuf {
    root.join("runs")
        .join(format!("{axis}={value}"))
        .join(format!("seed{seed}"))
}

#[cfg(feature = "parallel")]
fn map_jobs<T, R, F>(jobs: &[T], parallel: bool, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    if parallel {
        jobs.par_iter().map(f).collect()
    } else {
        jobs.iter().map(f).collect()
    }
}

#[cfg(not(feature = "parallel"))]
fn map_jobs<T, R, F>(jobs: &[T], _parallel: bool, f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    jobs.iter().map(f).collect()
}

/// Runs every configuration × seed and returns the per-run rows followed,
/// for each value, by a median row. With `out`, each run writes its full
/// outputs under `out/runs/<axis>=<value>/seed<seed>`.
pub fn run_sweep(
    base: &RunConfig,
    spec: &SweepSpec,
    out: Option<&Path>,
    parallel: bool,
) -> Result<Vec<SweepRow>> {
    let jobs = spec.configs(base)?;
    let axis = spec.axis.replace('-', "_");
    let summaries = map_jobs(&jobs, parallel, |(value, seed, cfg)| -> Result<Summary> {
        match out {
            Some(root) => Ok(train_to_dir(
                cfg,
                &run_dir(root, &axis, value, *seed),
                Execution::Sequential,
                |_| {},
            )?
            .summary),
            None => Ok(train_in_memory(cfg, Execution::Sequential)?.0),
        }
    });
    let mut rows = Vec::new();
    let mut results = jobs.iter().zip(summaries);
    for value in &spec.values {
        let mut group = Vec::new();
        for _ in &spec.seeds {
            let ((_, seed, _), summary) = results.next().expect("one result per job");
            group.push(row(&axis, value, *seed, &summary?));
        }
        let med = |f: fn(&SweepRow) -> f64| median(&group.iter().map(f).collect::<Vec<_>>());
        let median_row = SweepRow {
            axis: axis.clone(),
            value: value.clone(),
            seed: None,
            accuracy: med(|r| r.accuracy),
            macro_accuracy: med(|r| r.macro_accuracy),
            mean_similarity: med(|r| r.mean_similarity),
            pseudo_label_accuracy: med(|r| r.pseudo_label_accuracy),
            final_total: med(|r| r.final_total),
        };
        rows.extend(group);
        rows.push(median_row);
    }
    Ok(rows)
}

pub fn results_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(RESULTS_HEADER);
    s.push('\n');
    for r in rows {
        let seed = r.seed.map_or("median".to_string(), |v| v.to_string());
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.axis,
            r.value,
            seed,
            r.accuracy,
            r.macro_accuracy,
            r.mean_similarity,
            r.pseudo_label_accuracy,
            r.final_total
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn unknown_axis_rejected() {
        let spec = SweepSpec {
            axis: "learning_rate".into(),
            values: vec!["1".into()],
            seeds: vec![0],
        };
        let err = spec.validate().unwrap_err().to_string();
        assert!(err.contains("learning_rate"), "{err}");
        let empty = SweepSpec {
            axis: "tau".into(),
            values: vec![],
            seeds: vec![0],
        };
        assert!(empty.validate().is_err());
    }

    #[test]
    fn configs_cover_values_times_seeds() {
        let spec = SweepSpec {
            axis: "bank_capacity".into(),
            values: ["32", "256", "1024", "4096"].map(String::from).to_vec(),
            seeds: vec![0, 1, 2],
        };
        let jobs = spec.configs(&RunConfig::default()).unwrap();
        assert_eq!(jobs.len(), 12);
        assert_eq!(jobs[4].2.train.bank_capacity, 256);
        assert_eq!(jobs[4].2.train.seed, 1);
        let classes = SweepSpec {
            axis: "classes".into(),
            values: vec!["10".into()],
            seeds: vec![0],
        };
        assert_eq!(
            classes.configs(&RunConfig::default()).unwrap()[0]
                .2
                .data
                .classes,
            10
        );
    }
}
