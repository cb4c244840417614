use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use memsac_cli::ablate::{results_csv, run_sweep, SweepSpec};
use memsac_cli::config::RunConfig;
use memsac_cli::run::{train_to_dir, METRICS_FILE};
use memsac_core::data::{load_feature_table, write_feature_table, FeatureTable};
use memsac_core::exec::Execution;
use memsac_core::metrics::{accuracy, macro_average, per_class_accuracy};
use memsac_core::nn::ModelBundle;

#[derive(Parser)]
#[command(
    name = "memsac",
    version,
    about = "Memory-augmented sample-consistency domain adaptation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Any configuration key as `--key value` or `--key=value`.
    #[arg(
        trailing_var_arg = true,
        allow_hyphen_values = true,
        value_name = "--KEY VALUE"
    )]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic source and target sets as feature tables.
    GenData {
        /// Output directory for source.csv and target.csv.
        #[arg(long, default_value = "data")]
        out: PathBuf,
        #[command(flatten)]
        cfg: Overrides,
    },
    /// Train one configuration.
    Train {
        #[arg(long, default_value = "memsac-run")]
        out: PathBuf,
        /// Print a progress line every this many iterations (0 = quiet).
        #[arg(long, default_value_t = 0)]
        progress: usize,
        #[command(flatten)]
        cfg: Overrides,
    },
    /// Sweep one configuration axis over several seeds.
    Ablate {
        /// One of bank_capacity, tau, k, classes, lambda_sc, pseudo_label, similarity.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
        #[arg(long, default_value = "memsac-ablate")]
        out: PathBuf,
        /// Run sweep members one at a time.
        #[arg(long)]
        sequential: bool,
        #[command(flatten)]
        cfg: Overrides,
    },
    /// Accuracy of a saved model on a labeled feature table.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
}

/// Prints a line to stdout; a closed pipe is not an error.
fn say(text: &str) {
    let _ = writeln!(std::io::stdout(), "{text}");
}

fn resolve(o: &Overrides) -> Result<RunConfig> {
    RunConfig::resolve(o.config.as_deref(), &o.overrides)
}

fn gen_data(out: PathBuf, o: &Overrides) -> Result<()> {
    let cfg = resolve(o)?;
    let seed = cfg.data_seed();
    let (src, tgt) =
        memsac_core::data::gen_shifted_pair(&cfg.data.mixture(seed), &cfg.data.shift())?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    for (name, ds) in [("source.csv", &src), ("target.csv", &tgt)] {
        let path = out.join(name);
        write_feature_table(&path, &FeatureTable::from(ds))
            .with_context(|| format!("writing {}", path.display()))?;
        say(&format!("{} ({} rows)", path.display(), ds.len()));
    }
    Ok(())
}

fn train(out: PathBuf, progress: usize, o: &Overrides) -> Result<()> {
    let cfg = resolve(o)?;
    let result = train_to_dir(&cfg, &out, Execution::default(), |r| {
        if progress > 0 && (r.iteration + 1) % progress == 0 {
            eprintln!(
                "iter {:>6}  l_sup {:.4}  l_d {:.4}  l_sc {:.4}  bank {}",
                r.iteration + 1,
                r.l_sup,
                r.l_d,
                r.l_sc,
                r.bank_size
            );
        }
    })
    .with_context(|| {
        format!(
            "run in {} failed; partial metrics in {METRICS_FILE}",
            out.display()
        )
    })?;
    say(&serde_json::to_string_pretty(&result.summary)?);
    Ok(())
}

fn ablate(spec: SweepSpec, out: PathBuf, sequential: bool, o: &Overrides) -> Result<()> {
    let cfg = resolve(o)?;
    let rows = run_sweep(&cfg, &spec, Some(&out), !sequential)?;
    let table = results_csv(&rows);
    let path = out.join("results.csv");
    std::fs::write(&path, &table).with_context(|| format!("writing {}", path.display()))?;
    say(table.trim_end());
    Ok(())
}

fn eval(model: PathBuf, data: PathBuf) -> Result<()> {
    let text =
        std::fs::read_to_string(&model).with_context(|| format!("reading {}", model.display()))?;
    let model: ModelBundle = serde_json::from_str(&text).context("parsing model file")?;
    let table = load_feature_table(&data)?;
    let (set, truth) = table.into_target();
    let truth = truth.context("evaluation needs a fully labeled table")?;
    let preds = model.predict(set.samples())?;
    let per_class = per_class_accuracy(&preds, truth.labels(), truth.classes());
    let report = serde_json::json!({
        "samples": preds.len(),
        "accuracy": accuracy(&preds, truth.labels())?,
        "macro_accuracy": macro_average(&per_class),
        "per_class": per_class.iter().map(|v| (!v.is_nan()).then_some(*v)).collect::<Vec<_>>(),
    });
    say(&serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData { out, cfg } => gen_data(out, &cfg),
        Command::Train { out, progress, cfg } => train(out, progress, &cfg),
        Command::Ablate {
            axis,
            values,
            seeds,
            out,
            sequential,
            cfg,
        } => ablate(
            SweepSpec {
                axis,
                values,
                seeds,
            },
            out,
            sequential,
            &cfg,
        ),
        Command::Eval { model, data } => eval(model, data),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
