use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use pair_core::experiments::{self, ExperimentConfig, ExperimentKind, SavedModel};

#[derive(Parser)]
#[command(name = "pair", version, about = "Paired autoencoder experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config, or a run.json from an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed stored in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a CT dataset bundle.
    GenCt(RunArgs),
    /// Sweep latent rank on the CT problem against truncated SVD.
    RankSweep(RunArgs),
    /// Train the convolutional pair on blurred MNIST.
    Mnist(RunArgs),
    /// Compare the pair against end-to-end networks over J supervised pairs.
    E2e(RunArgs),
    /// Out-of-distribution detection with pair metrics.
    Ood(RunArgs),
    /// Fit a model from a config and save it.
    Save {
        #[command(flatten)]
        run: RunArgs,
        /// Latent rank for CT configs; defaults to the largest listed rank.
        #[arg(long)]
        rank: Option<usize>,
    },
    /// Load a saved model, verify its hashes and print its manifest.
    Info {
        /// Model directory.
        dir: PathBuf,
    },
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn save(cfg: &ExperimentConfig, rank: Option<usize>, out: &Path) -> Result<()> {
    let config = serde_json::to_value(cfg)?;
    let model = match cfg.kind {
        ExperimentKind::GenCt | ExperimentKind::CtRankSweep => {
            let rank = match rank.or_else(|| cfg.ranks.iter().copied().max()) {
                Some(r) => r,
                None => bail!("pass --rank or list ranks in the config"),
            };
            SavedModel::Linear(experiments::fit_ct_pair(cfg, rank)?)
        }
        ExperimentKind::Mnist | ExperimentKind::E2e | ExperimentKind::Ood => {
            let data = experiments::load_mnist(cfg.mnist.as_ref().unwrap(), &cfg.noise, cfg.seed)?;
            let (pair, _, _) =
                experiments::train_neural_pair(&data, cfg.training.as_ref().unwrap(), cfg.seed)?;
            SavedModel::Neural(pair)
        }
    };
    let manifest = experiments::save_model(&model, out, &config)?;
    println!("saved {} files to {}", manifest.files.len(), out.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::GenCt(a) => {
            let b = experiments::generate_ct(&load_config(&a)?, &a.out)?;
            println!(
                "wrote {} + {} + {} + {} samples to {}",
                b.unpaired_b.ncols(),
                b.unpaired_x.ncols(),
                b.paired_x.ncols(),
                b.test_x.ncols(),
                a.out.display()
            );
        }
        Command::RankSweep(a) => {
            let report = experiments::run_rank_sweep(&load_config(&a)?, &a.out)?;
            println!("rank  pair_inverse  tsvd_inverse");
            for r in &report.rows {
                println!(
                    "{:>4}  {:.4}        {:.4}",
                    r.rank, r.pair_inverse_rel, r.tsvd_inverse_rel
                );
            }
            for (rank, why) in &report.skipped {
                println!("skipped rank {rank}: {why}");
            }
        }
        Command::Mnist(a) => {
            let report = experiments::run_mnist_pipeline(&load_config(&a)?, &a.out)?;
            println!("mean inverse relative error {:.4}", report.mean_error);
        }
        Command::E2e(a) => {
            let report = experiments::run_e2e_comparison(&load_config(&a)?, &a.out)?;
            println!("    J  pair    e2e");
            for r in &report.rows {
                println!("{:>5}  {:.4}  {:.4}", r.j, r.pair_error, r.e2e_error);
            }
        }
        Command::Ood(a) => {
            let report = experiments::run_ood_experiment(&load_config(&a)?, &a.out)?;
            for (kind, auc, null) in &report.auroc {
                println!("{:<22} auroc {auc:.4}  null {null:.4}", kind.name());
            }
            println!(
                "flagged: in {:.3}, out {:.3}",
                report.in_flagged, report.out_flagged
            );
        }
        Command::Save { run, rank } => save(&load_config(&run)?, rank, &run.out)?,
        Command::Info { dir } => {
            let (_, manifest) = experiments::load_model(&dir)?;
            println!("{}", serde_json::to_string_pretty(&manifest)?);
        }
    }
    Ok(())
}
