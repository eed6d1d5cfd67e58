use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use safefm::commands::{cmd_dataset, cmd_eval, cmd_plot, cmd_sample, cmd_train, SampleOptions};
use safefm::config::Config;

#[derive(Parser)]
#[command(name = "safefm", version, about = "Flow-matching trajectory generation with hard safety constraints")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the Bezier trajectory dataset.
    Dataset {
        #[arg(long, default_value = "dataset.csv")]
        out: PathBuf,
    },
    /// Train the vector field.
    Train {
        #[arg(long, default_value = "dataset.csv")]
        dataset: PathBuf,
        #[arg(long, default_value = "model.bin")]
        out: PathBuf,
    },
    /// Sample trajectories from a trained field.
    Sample {
        #[arg(long, default_value = "model.bin")]
        model: PathBuf,
        /// Enable the safety regularizer (default).
        #[arg(long, conflicts_with = "unsafe_")]
        safe: bool,
        /// Plain flow-matching sampling.
        #[arg(long = "unsafe")]
        unsafe_: bool,
        /// Trajectories per class.
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// Only sample this class.
        #[arg(long)]
        class: Option<usize>,
        #[arg(long, default_value = "samples.csv")]
        out: PathBuf,
        /// Also write `<out>.trace.csv` with every integration step.
        #[arg(long)]
        trace: bool,
    },
    /// Compare unconstrained and safe sampling.
    Eval {
        #[arg(long, default_value = "model.bin")]
        model: PathBuf,
        /// Samples per class, overriding the config.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value = "table1.csv")]
        out: PathBuf,
    },
    /// Draw trajectories over the constraint geometry as SVG.
    Plot {
        trajectories: PathBuf,
        #[arg(long, default_value = "plot.svg")]
        out: PathBuf,
    },
}

fn load_config(common: &Common) -> safefm::Result<Config> {
    let mut cfg = match &common.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> safefm::Result<()> {
    let mut cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Dataset { out } => {
            let data = cmd_dataset(&cfg, &out)?;
            println!("wrote {} trajectories to {}", data.len(), out.display());
        }
        Command::Train { dataset, out } => {
            let outcome = cmd_train(&cfg, &dataset, &out)?;
            let (first, last) = safefm::model::smoothed(&outcome.losses, 50);
            println!("trained {} steps, loss {first:.4} -> {last:.4}; wrote {}", outcome.losses.len(), out.display());
        }
        Command::Sample {
            model,
            safe: _,
            unsafe_,
            n,
            class,
            out,
            trace,
        } => {
            let opts = SampleOptions {
                safe: !unsafe_,
                n,
                class,
                trace,
            };
            let data = cmd_sample(&cfg, &model, &opts, &out)?;
            println!("wrote {} trajectories to {}", data.len(), out.display());
        }
        Command::Eval { model, n, out } => {
            if let Some(n) = n {
                cfg.eval.samples_per_class = n;
            }
            cfg.validate()?;
            let table = cmd_eval(&cfg, &model, &out)?;
            print!("{}", table.to_text());
        }
        Command::Plot { trajectories, out } => {
            let count = cmd_plot(&cfg, &trajectories, &out)?;
            println!("plotted {count} trajectories to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
