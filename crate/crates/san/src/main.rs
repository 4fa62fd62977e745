//! Command-line harness around the library: train a single model, sweep the
//! variant grid, evaluate a checkpoint, or export embeddings.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use san::harness::{config, metrics, run_sweep, FullConfig};
use san::harness::run::{evaluate, export_embeddings, prepare_data, run_experiment};
use san::model::SanModel;
use san::Result;

#[derive(Parser)]
#[command(
    name = "san",
    version,
    about = "Adversarial partial transfer learning with class-wise domain critics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model; writes metrics.csv and checkpoint.json
    Train {
        /// Config file (key = value lines); defaults apply when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the seed from the config
        #[arg(long)]
        seed: Option<u64>,
        /// Override the variant: SAN, SAN_selective, SAN_entropy, DANN,
        /// source_only
        #[arg(long)]
        variant: Option<String>,
        /// Output directory
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Suppress the per-step metric lines
        #[arg(long)]
        quiet: bool,
    },
    /// Train the target-count × variant × seed grid; appends to sweep.csv
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on the config's evaluation split
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the seed (controls synthetic data generation)
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write feature-space embeddings of both domains to a CSV
    ExportEmbeddings {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output file
        #[arg(long, default_value = "out/embeddings.csv")]
        out: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> Result<FullConfig> {
    match path {
        Some(p) => config::parse_file(p),
        None => Ok(FullConfig::default()),
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path)
        .map_err(|e| san::SanError::io(path.display().to_string(), e))
}

fn print_eval(report: &san::harness::EvalReport) {
    if report.accuracy.is_nan() {
        println!("target accuracy: n/a (no evaluation labels)");
        return;
    }
    println!("target accuracy: {:.4}", report.accuracy);
    for (c, (acc, n)) in report
        .per_class_accuracy
        .iter()
        .zip(&report.per_class_counts)
        .enumerate()
    {
        if *n > 0 {
            println!("  class {c}: {acc:.4}  ({n} examples)");
        } else {
            println!("  class {c}: absent from evaluation split");
        }
    }
}

fn cmd_train(
    cfg_path: Option<&Path>,
    seed: Option<u64>,
    variant: Option<&str>,
    out: &Path,
    quiet: bool,
) -> Result<()> {
    let mut full = load_config(cfg_path)?;
    if let Some(s) = seed {
        full.run.seed = s;
    }
    if let Some(v) = variant {
        full.run.variant = v.parse()?;
    }
    let cfg = &full.run;
    create_dir(out)?;

    println!(
        "training {} (seed {}) for {} steps",
        cfg.variant, cfg.seed, cfg.total_steps
    );
    let outcome = run_experiment(cfg)?;

    if !quiet {
        println!("{}", metrics::csv_header(outcome.num_classes));
        for row in &outcome.records {
            println!("{}", metrics::csv_row(row));
        }
    }

    let metrics_path = out.join("metrics.csv");
    metrics::write_csv(&metrics_path, outcome.num_classes, &outcome.records)?;
    let ckpt_path = out.join("checkpoint.json");
    outcome.model.save_checkpoint(&ckpt_path)?;

    print_eval(&outcome.final_eval);
    println!(
        "wrote {} and {}",
        metrics_path.display(),
        ckpt_path.display()
    );
    Ok(())
}

fn cmd_sweep(cfg_path: Option<&Path>, out: &Path) -> Result<()> {
    let full = load_config(cfg_path)?;
    create_dir(out)?;
    let csv = out.join("sweep.csv");
    let cells = full.sweep.target_counts.len() * full.sweep.variants.len() * full.sweep.seeds.len();
    println!("sweeping {cells} cells into {}", csv.display());
    let results = run_sweep(&full.run, &full.sweep, &csv)?;
    for r in &results {
        println!(
            "target_classes={} variant={} seed={}  accuracy={:.4}  [{}]",
            r.target_classes, r.variant, r.seed, r.target_accuracy, r.status
        );
    }
    let failures = results.iter().filter(|r| r.status != "ok").count();
    if failures > 0 {
        return Err(san::SanError::Config(format!(
            "{failures} sweep cell(s) failed; see {}",
            csv.display()
        )));
    }
    Ok(())
}

fn cmd_eval(checkpoint: &Path, cfg_path: Option<&Path>, seed: Option<u64>) -> Result<()> {
    let mut full = load_config(cfg_path)?;
    if let Some(s) = seed {
        full.run.seed = s;
    }
    let model = SanModel::load_checkpoint(checkpoint)?;
    let data = prepare_data(&full.run)?;
    let report = evaluate(
        &model,
        &data.eval_x,
        data.eval_labels.as_deref(),
        model.num_classes,
    )?;
    print_eval(&report);
    Ok(())
}

fn cmd_export(
    checkpoint: &Path,
    cfg_path: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let mut full = load_config(cfg_path)?;
    if let Some(s) = seed {
        full.run.seed = s;
    }
    let model = SanModel::load_checkpoint(checkpoint)?;
    let data = prepare_data(&full.run)?;
    if let Some(dir) = out.parent() {
        if !dir.as_os_str().is_empty() {
            create_dir(dir)?;
        }
    }
    let rows = export_embeddings(
        &model,
        &data.source,
        &data.target,
        data.target_labels.as_deref(),
        out,
    )?;
    println!("wrote {rows} embedding rows to {}", out.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            config,
            seed,
            variant,
            out,
            quiet,
        } => cmd_train(config.as_deref(), seed, variant.as_deref(), &out, quiet),
        Command::Sweep { config, out } => cmd_sweep(config.as_deref(), &out),
        Command::Eval {
            checkpoint,
            config,
            seed,
        } => cmd_eval(&checkpoint, config.as_deref(), seed),
        Command::ExportEmbeddings {
            checkpoint,
            config,
            seed,
            out,
        } => cmd_export(&checkpoint, config.as_deref(), seed, &out),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
