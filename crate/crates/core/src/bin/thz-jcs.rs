use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use thz_jcs::config::ExperimentConfig;
use thz_jcs::experiment::{cmd_dataset, cmd_evaluate, cmd_explain, cmd_train, Layout, TopologySource};
use thz_jcs::Result;

/// Joint communication and sensing experiments for THz vehicular networks.
#[derive(Parser)]
#[command(name = "thz-jcs", version, about)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML file overriding the defaults (or the smoke profile).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Start from the small smoke profile instead of the full one.
    #[arg(long, global = true)]
    smoke: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Draw topologies and label them with the exhaustive oracle.
    Dataset,
    /// Train the heterogeneous (and homogeneous) model on the train split.
    Train,
    /// Score every scheme on the test split.
    Evaluate {
        /// Also run the sweeps over SPV count, target counts and λ₀.
        #[arg(long)]
        sweeps: bool,
    },
    /// Emit the geometry and link quality of one decision.
    Explain {
        /// Topology JSON file.
        #[arg(long, conflicts_with = "instance")]
        topology: Option<PathBuf>,
        /// Position of a record in the test split.
        #[arg(long)]
        instance: Option<usize>,
    },
    /// dataset, train and evaluate in sequence.
    All {
        #[arg(long)]
        sweeps: bool,
    },
}

fn resolve(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path, common.smoke)?,
        None => ExperimentConfig::profile(common.smoke),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve(&cli.common)?;
    let layout = Layout::new(&cli.common.out);
    match cli.command {
        Command::Dataset => {
            let s = cmd_dataset(&cfg, &layout)?;
            for split in s.splits {
                println!(
                    "{:?}: {} records, {} infeasible skipped",
                    split.split, split.records, split.infeasible_skipped
                );
            }
        }
        Command::Train => {
            let s = cmd_train(&cfg, &layout)?;
            for m in s.models {
                println!(
                    "{:?}: loss {:.4} -> {:.4} (smoothed {:.4})",
                    m.mode, m.initial_loss, m.final_loss, m.final_smoothed_loss
                );
            }
        }
        Command::Evaluate { sweeps } => print_eval(&cfg, &layout, sweeps)?,
        Command::Explain { topology, instance } => {
            let source = match (topology, instance) {
                (Some(p), _) => TopologySource::File(p),
                (None, Some(i)) => TopologySource::TestRecord(i),
                (None, None) => TopologySource::Generated,
            };
            let r = cmd_explain(&cfg, &layout, &source)?;
            println!(
                "{} links, sum rate {:.4e} bit/s, feasible {}",
                r.links.len(),
                r.sum_rate,
                r.feasible
            );
        }
        Command::All { sweeps } => {
            cmd_dataset(&cfg, &layout)?;
            cmd_train(&cfg, &layout)?;
            print_eval(&cfg, &layout, sweeps)?;
        }
    }
    Ok(())
}

fn print_eval(cfg: &ExperimentConfig, layout: &Layout, sweeps: bool) -> Result<()> {
    let s = cmd_evaluate(cfg, layout, sweeps)?;
    println!("scheme,sum_rate_mean,ratio_mean,ratio_ci_low,ratio_ci_high,subset_accuracy,feasibility_rate");
    for m in s.metrics {
        println!(
            "{},{:.6e},{:.4},{:.4},{:.4},{:.4},{:.4}",
            m.scheme.name(),
            m.sum_rate_mean,
            m.ratio_mean,
            m.ratio_ci_low,
            m.ratio_ci_high,
            m.subset_accuracy,
            m.feasibility_rate
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
