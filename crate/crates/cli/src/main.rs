//! Command-line driver: trace generation, learning, evaluation and kernel
//! comparison.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 unparsable input, 3 bad
//! configuration or mismatched inputs, 4 empty result.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Settings;
use error::CliError;

#[derive(Parser)]
#[command(name = "striplearn", version, about = "Learn STRIPS action models from noisy, partial traces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML file with any of the settings below; flags win.
    #[arg(long, short = 'c')]
    config: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a training trace.
    Generate(Common),
    /// Learn action schemas from a trace.
    Learn {
        #[command(flatten)]
        common: Common,
        /// Trace to learn from [default: <out>/trace.jsonl].
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Score a learned domain against a reference domain.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Learned domain [default: <out>/learned.pddl].
        #[arg(long)]
        learned: Option<PathBuf>,
        /// Reference domain [default: --domain].
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Trace to score change predictions on.
        #[arg(long)]
        test_trace: Option<PathBuf>,
    },
    /// Compare perceptron variants over a noise and observability grid.
    CompareKernels(Common),
    /// generate, learn, eval and compare-kernels in one go.
    Pipeline(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Generate(c) | Command::CompareKernels(c) | Command::Pipeline(c) => c,
            Command::Learn { common, .. } | Command::Eval { common, .. } => common,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Generate(_) => "generate",
            Command::Learn { .. } => "learn",
            Command::Eval { .. } => "eval",
            Command::CompareKernels(_) => "compare-kernels",
            Command::Pipeline(_) => "pipeline",
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let common = cli.command.common();
    let s = Settings::resolve(common.config.as_deref(), &common.settings)?;
    if let Some(n) = s.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    }
    commands::snapshot(&s, cli.command.name())?;
    let out = s.out_dir().to_path_buf();
    match &cli.command {
        Command::Generate(_) => commands::generate(&s).map(|t| {
            println!("wrote {} steps to {}", t.steps.len(), out.join(commands::TRACE).display());
        }),
        Command::Learn { trace, .. } => {
            let trace = trace.clone().unwrap_or_else(|| out.join(commands::TRACE));
            commands::learn_cmd(&s, &trace).map(|_| ())
        }
        Command::Eval {
            learned,
            truth,
            test_trace,
            ..
        } => {
            let learned = learned.clone().unwrap_or_else(|| out.join(commands::LEARNED));
            let truth = match truth {
                Some(t) => t.clone(),
                None => s.require_domain()?.to_path_buf(),
            };
            commands::eval_cmd(&s, &learned, &truth, test_trace.as_deref()).map(|_| ())
        }
        Command::CompareKernels(_) => commands::compare_cmd(&s),
        Command::Pipeline(_) => commands::pipeline(&s),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("striplearn: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
