use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sosrec::pipeline::Mode;

mod commands;
mod config;

#[derive(Parser)]
#[command(name = "sosrec", version, about = "Stochastic SoS recovery simulation and DeepONet surrogates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,
    /// Overrides the seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Only print warnings and errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo SoS recovery curve of independent systems.
    Simulate,
    /// Solve the Markov-renewal equation for a kernel.
    Solve,
    /// Generate training and test datasets.
    GenData,
    /// Train a DeepONet on datasets in the output directory.
    Train,
    /// Evaluate a trained checkpoint on the test dataset.
    Eval,
    /// Run a default experiment end to end.
    Reproduce { experiment: Experiment },
}

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    Identical,
    Disparate,
}

impl From<Experiment> for Mode {
    fn from(e: Experiment) -> Self {
        match e {
            Experiment::Identical => Mode::Identical,
            Experiment::Disparate => Mode::Disparate,
        }
    }
}

fn require(config: Option<&Path>) -> sosrec::Result<&Path> {
    config.ok_or_else(|| sosrec::Error::Config("this command needs --config".into()))
}

fn run(cli: &Cli) -> sosrec::Result<()> {
    let config = cli.config.as_deref();
    let out = cli.out.as_path();
    match cli.command {
        Command::Simulate => commands::simulate(require(config)?, out, cli.seed),
        Command::Solve => commands::solve(require(config)?, out),
        Command::GenData => commands::gen_data(&commands::experiment_config(config, out, None, cli.seed)?, out),
        Command::Train => commands::train_cmd(&commands::experiment_config(config, out, None, cli.seed)?, out),
        Command::Eval => commands::eval_cmd(out),
        Command::Reproduce { experiment } => {
            let cfg = commands::experiment_config(config, out, Some(experiment.into()), cli.seed)?;
            commands::reproduce(&cfg, out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}
