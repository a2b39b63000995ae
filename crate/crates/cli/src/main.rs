use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use coopmarl_cli::{commands, CliError, RunConfig};

#[derive(Parser)]
#[command(name = "coopmarl", version, about = "Cooperative multi-agent RL experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run config; defaults apply to every missing key.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replaces the config's seed list; repeatable.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dotted-key override such as `agent.gamma=0.0`; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut config = RunConfig::load(self.config.as_deref(), &self.overrides)?;
        if !self.seeds.is_empty() {
            config.seeds = self.seeds.clone();
        }
        if let Some(out) = &self.out {
            config.out = out.clone();
        }
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent online per seed.
    TrainOnline(Common),
    /// Train every (agent kind, action size) cell of the control task.
    Sweep(Common),
    /// Collect an offline dataset from registered checkpoints.
    GenDataset {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        registry: PathBuf,
    },
    /// Train from a logged dataset without environment interaction.
    TrainOffline {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Train the configured models on logged sessions and score them with IPS.
    EvalIps {
        #[command(flatten)]
        common: Common,
        /// Use this log instead of generating one per seed.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Greedy rollouts of a saved agent.
    EvalRollout {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        agent: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::TrainOnline(c) => {
            commands::train_online_cmd(&c.load()?)?;
        }
        Command::Sweep(c) => {
            commands::sweep_cmd(&c.load()?)?;
        }
        Command::GenDataset { common, registry } => {
            commands::gen_dataset_cmd(&common.load()?, &registry)?;
        }
        Command::TrainOffline { common, dataset } => {
            commands::train_offline_cmd(&common.load()?, &dataset)?;
        }
        Command::EvalIps { common, log } => {
            commands::eval_ips_cmd(&common.load()?, log.as_deref())?;
        }
        Command::EvalRollout { common, agent } => {
            commands::eval_rollout_cmd(&common.load()?, &agent)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
