use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use latent_gait::config::{ExperimentConfig, TOOL_VERSION};
use latent_gait::eval::Scenario;
use latent_gait::pipeline::{cmd_collect, cmd_eval, cmd_reconstruct, cmd_train_ae, cmd_train_policy};
use latent_gait::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "latent-gait", version, about = "Collect gaits, train the autoencoder and policy, evaluate")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment config (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for this stage.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Caps worker threads.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Walk the baseline over the speed grid and write the dataset.
    Collect,
    /// Train the autoencoder on a dataset.
    TrainAe {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Train the policy against a trained encoder.
    TrainPolicy {
        #[arg(long)]
        ae: PathBuf,
    },
    /// Run evaluation scenarios (all when none is selected).
    Eval {
        #[arg(long)]
        ae: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long = "scenario", value_parser = parse_scenario)]
        scenarios: Vec<Scenario>,
    },
    /// Per-feature reconstruction errors of an autoencoder on a dataset.
    Reconstruct {
        #[arg(long)]
        ae: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
    },
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    Scenario::parse(s).map_err(|e| e.to_string())
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p).map_err(|e| match e {
            Error::Io { .. } => Error::Config(e.to_string()),
            other => other,
        })?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cmd: &Command, cfg: &ExperimentConfig, out: &Path) -> Result<(), Error> {
    match cmd {
        Command::Collect => {
            cmd_collect(cfg, out)?;
        }
        Command::TrainAe { dataset } => {
            cmd_train_ae(cfg, dataset, out)?;
        }
        Command::TrainPolicy { ae } => {
            let total = cfg.ppo.iterations();
            cmd_train_policy(cfg, ae, out, |r| {
                eprintln!(
                    "iteration {}/{total} steps {} return {:.3} length {:.1} speed rmse {:.4}",
                    r.iteration, r.steps, r.mean_return, r.mean_ep_len, r.speed_rmse
                );
            })?;
        }
        Command::Eval { ae, policy, scenarios } => {
            let selected = if scenarios.is_empty() { Scenario::ALL.to_vec() } else { scenarios.clone() };
            let (_, output) = cmd_eval(cfg, ae, policy, &selected, out)?;
            let summary = serde_json::to_string_pretty(&output.report.summary).map_err(|e| Error::Format(e.to_string()))?;
            println!("{summary}");
        }
        Command::Reconstruct { ae, dataset } => {
            cmd_reconstruct(cfg, ae, dataset, out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let cfg = match load_config(&cli.common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let threads = cli.common.workers.unwrap_or(0);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    match pool.install(|| run(&cli.command, &cfg, &cli.common.out)) {
        Ok(()) => {
            eprintln!("{TOOL_VERSION}: wrote {}", cli.common.out.display());
            ExitCode::SUCCESS
        }
        Err(e @ Error::Config(_)) => {
            eprintln!("config error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
