//! CLI entry point. Exit codes: 0 success, 1 run error, 2 config error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use adafd::config::RunConfig;
use adafd::error::Error;
use adafd::fed::Method;
use adafd::runner;

#[derive(Parser)]
#[command(name = "adafd", about = "Federated distillation engine and non-IID benchmark builder")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the partition plan manifest and distribution report.
    Partition {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the configured experiments and emit traces, reports, checkpoints.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Restrict to these methods (repeatable).
        #[arg(long = "method")]
        methods: Vec<String>,
        /// Environment variable holding the LLM credential.
        #[arg(long)]
        llm_endpoint_env: Option<String>,
    },
    /// Combine eval reports into a methods-by-testsets comparison table.
    Compare {
        /// Eval report JSONL files (at least 2).
        reports: Vec<PathBuf>,
        #[arg(long, default_value = "comparison.csv")]
        out: PathBuf,
    },
    /// Run the adafd_enwc experiment once per beta.
    SweepBeta {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 5.0, 10.0, 15.0, 20.0])]
        betas: Vec<f64>,
    },
    /// Run each federated experiment once per communication-round budget.
    SweepRounds {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1, 5, 10])]
        rounds: Vec<usize>,
    },
}

fn parse_method(s: &str) -> Result<Method, Error> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| Error::Config(format!("unknown method {s:?}")))
}

fn load(config: &PathBuf, seed: Option<u64>) -> Result<RunConfig, Error> {
    let mut c = RunConfig::load(config)?;
    if let Some(s) = seed {
        c.seed = s;
    }
    Ok(c)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Partition { config, out, seed } => {
            let config = load(&config, seed)?;
            let manifest = runner::cmd_partition(&config, &out)?;
            println!("wrote {}", manifest.display());
        }
        Command::Run {
            config,
            out,
            seed,
            methods,
            llm_endpoint_env,
        } => {
            let mut config = load(&config, seed)?;
            if let (Some(env), Some(llm)) = (llm_endpoint_env, config.llm.as_mut()) {
                llm.auth_env = env;
            }
            let methods = methods
                .iter()
                .map(|m| parse_method(m))
                .collect::<Result<Vec<_>, _>>()?;
            let outcome = runner::cmd_run(&config, &out, &methods, None)?;
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Compare { reports, out } => {
            runner::cmd_compare(&reports, &out)?;
            println!("wrote {}", out.display());
        }
        Command::SweepBeta {
            config,
            out,
            seed,
            betas,
        } => {
            let config = load(&config, seed)?;
            runner::cmd_sweep_beta(&config, &out, &betas)?;
            println!("wrote {}", out.join("beta_sweep.csv").display());
        }
        Command::SweepRounds {
            config,
            out,
            seed,
            rounds,
        } => {
            let config = load(&config, seed)?;
            runner::cmd_sweep_rounds(&config, &out, &rounds)?;
            println!("wrote {}", out.join("rounds_sweep.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
