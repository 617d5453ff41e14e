use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ssqa_core::inference::InferenceMode;
use ssqa_core::metrics::{BestPolicy, MetricName, MetricReport};
use ssqa_core::recipe::{self, RecipeConfig};
use ssqa_core::Exec;

/// Train, run and benchmark speech quality (MOS) predictors.
///
/// Settings come from `--config`; flags given here override the file.
#[derive(Debug, Parser)]
#[command(name = "ssqa", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Recipe file with `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed list, e.g. `1,2,3`.
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Inference mode(s): parametric, knn, domain-retrieval (comma separated).
    #[arg(long, global = true)]
    inference: Option<String>,
    #[arg(long, global = true)]
    knn_k: Option<usize>,
    #[arg(long, global = true)]
    knn_temperature: Option<f64>,
    /// Weight kNN neighbors by exp(+d/T) instead of exp(-d/T).
    #[arg(long, global = true)]
    paper_literal_knn: bool,
    /// Pre-train on this corpus, then fine-tune on all of `train_on`.
    #[arg(long, global = true)]
    mdf_pretrain: Option<String>,
    /// Run without the thread pool.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic corpora and materialize declared ones.
    Prepare,
    /// Train one model per seed.
    Train,
    /// Score a test set with trained models and print its metrics.
    Infer {
        #[arg(long)]
        test: String,
    },
    /// Train (or reuse) models and evaluate every test set and inference mode.
    Benchmark,
    /// Best score difference / ratio matrix from metric record files.
    Aggregate {
        #[arg(long = "records", required = true, num_args = 1..)]
        records: Vec<PathBuf>,
        #[arg(long, default_value = "utt_mse")]
        error_metric: String,
    },
    /// Dump time-averaged embeddings of sampled utterances with a 2-D PCA.
    ExportEmbeddings {
        #[arg(long)]
        n_per_set: Option<usize>,
    },
    /// Per-utterance and per-system (true, predicted) scatter data.
    DistributionData {
        #[arg(long)]
        test: String,
    },
}

fn load_config(common: &Common) -> Result<RecipeConfig> {
    let path = common
        .config
        .as_ref()
        .context("this command needs --config")?;
    let mut cfg = recipe::load_recipe(path)?;
    let cwd = Path::new(".");
    if let Some(s) = &common.seed {
        cfg.set("seeds", s, cwd)?;
    }
    if let Some(o) = &common.out {
        cfg.set("out", &o.to_string_lossy(), cwd)?;
    }
    if let Some(m) = &common.inference {
        cfg.set("inference", m, cwd)?;
    }
    if let Some(k) = common.knn_k {
        cfg.knn.k = k;
    }
    if let Some(t) = common.knn_temperature {
        cfg.knn.temperature = t;
    }
    if common.paper_literal_knn {
        cfg.knn.paper_literal = true;
    }
    if let Some(p) = &common.mdf_pretrain {
        cfg.set("mdf_pretrain", p, cwd)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |v| format!("{v:.4}"))
}

fn print_report(label: &str, r: &MetricReport) {
    println!(
        "{label}: utt_mse={} utt_lcc={} utt_srcc={} sys_mse={} sys_lcc={} sys_srcc={}",
        fmt_opt(r.utt_mse),
        fmt_opt(r.utt_lcc),
        fmt_opt(r.utt_srcc),
        fmt_opt(r.sys_mse),
        fmt_opt(r.sys_lcc),
        fmt_opt(r.sys_srcc)
    );
}

fn run(cli: Cli) -> Result<()> {
    let exec = if cli.common.sequential { Exec::Sequential } else { Exec::default() };
    match cli.command {
        Command::Prepare => {
            let cfg = load_config(&cli.common)?;
            for p in recipe::prepare(&cfg)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Train => {
            let cfg = load_config(&cli.common)?;
            for run in recipe::cmd_train(&cfg, exec)? {
                println!("seed {}: {}", run.seed, run.dir.join("best.ckpt").display());
            }
        }
        Command::Infer { test } => {
            let cfg = load_config(&cli.common)?;
            for &seed in &cfg.seeds {
                let run = recipe::load_run(&cfg, seed)?;
                for &mode in &cfg.inference {
                    let pairs = recipe::infer_test(&cfg, &run, &test, mode, exec)?;
                    let report = ssqa_core::metrics::evaluate(&pairs)?;
                    print_report(&format!("{test} {mode} seed {seed}"), &report);
                }
            }
        }
        Command::Benchmark => {
            let cfg = load_config(&cli.common)?;
            let out = recipe::cmd_benchmark(&cfg, exec)?;
            for ((model, test), r) in &out.mean.reports {
                print_report(&format!("{model} on {test}"), r);
            }
            println!("records: {}", cfg.out.join("records.csv").display());
        }
        Command::Aggregate { records, error_metric } => {
            let metric: MetricName = error_metric.parse()?;
            let out = cli.common.out.clone().unwrap_or_else(|| PathBuf::from("aggregate"));
            let m = recipe::cmd_aggregate(&records, metric, &BestPolicy::WithinFamily, &out)?;
            print!("{}", m.render_table());
        }
        Command::ExportEmbeddings { n_per_set } => {
            let mut cfg = load_config(&cli.common)?;
            if let Some(n) = n_per_set {
                cfg.export_per_set = n;
            }
            let seed = cfg.seeds[0];
            let export = recipe::cmd_export_embeddings(&cfg, seed, exec)?;
            for n in &export.notes {
                println!("note: {n}");
            }
            println!("exported {} embeddings", export.rows.len());
        }
        Command::DistributionData { test } => {
            let cfg = load_config(&cli.common)?;
            let mode: InferenceMode = cfg.inference[0];
            if cfg.inference.len() > 1 {
                bail!("distribution-data takes a single --inference mode");
            }
            for &seed in &cfg.seeds {
                let d = recipe::cmd_distribution_data(&cfg, seed, &test, mode, exec)?;
                print_report(&format!("{test} {mode} seed {seed}"), &d.report);
            }
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<ssqa_core::Error>() {
        Some(e) if e.is_validation() => 1,
        Some(_) => 2,
        // argument problems caught in this binary
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
