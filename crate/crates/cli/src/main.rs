mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Overrides;

#[derive(Parser)]
#[command(
    name = "fraclap",
    version,
    about = "Fractional Sobolev extremals on contracted domains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimal-energy extremal at a single contraction factor.
    Extremal(RunArgs),
    /// Sweep over the ε grid and locate the first loss of uniqueness.
    Sweep(RunArgs),
    /// Poincaré–Sobolev constant of the domain.
    Poincare(RunArgs),
    /// Lower bound on the uniqueness threshold.
    Bound(BoundArgs),
    /// Run the acceptance suite.
    Verify {
        #[arg(long)]
        threads: Option<usize>,
        /// Run only these criteria (1-based).
        #[arg(long = "only", value_delimiter = ',')]
        only: Vec<usize>,
    },
}

#[derive(Args, Clone)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    s: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    /// Elements per side of the domain.
    #[arg(long = "elements")]
    elements: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Skip bisection of the detected bracket (`sweep`).
    #[arg(long)]
    no_refine: bool,
}

#[derive(Args, Clone)]
struct BoundArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Use this Poincaré constant instead of computing it.
    #[arg(long)]
    c: Option<f64>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            out: self.out.clone(),
            seed: self.seed,
            s: self.s,
            q: self.q,
            eps: self.eps,
            elements: self.elements,
            max_iter: self.max_iter,
        }
    }
}

/// Failure of a subcommand, carrying its exit code.
#[derive(Debug)]
pub enum CliError {
    /// Exit code 1.
    Invalid(String),
    /// Exit code 2.
    NotConverged(String),
}

impl CliError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Self::Invalid(msg.into())
    }

    fn code(&self) -> u8 {
        match self {
            Self::Invalid(_) => 1,
            Self::NotConverged(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Invalid(m) => write!(f, "invalid input: {m}"),
            Self::NotConverged(m) => write!(f, "not converged: {m}"),
        }
    }
}

impl From<fraclap::Error> for CliError {
    fn from(e: fraclap::Error) -> Self {
        match e {
            fraclap::Error::Invalid(m) => Self::Invalid(m),
            fraclap::Error::Numerical(m) => Self::NotConverged(m),
        }
    }
}

fn set_threads(threads: Option<usize>) -> Result<(), CliError> {
    if let Some(t) = threads {
        if t == 0 {
            return Err(CliError::invalid("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::invalid(format!("cannot size the thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let resolve = |args: &RunArgs| {
        set_threads(args.threads)?;
        let mut config = config::RunConfig::load(args.config.as_deref())?;
        config.apply(&args.overrides());
        if args.no_refine {
            config.refine = false;
        }
        Ok::<_, CliError>(config)
    };
    match cli.command {
        Command::Extremal(a) => commands::extremal(resolve(&a)?),
        Command::Sweep(a) => commands::sweep(resolve(&a)?),
        Command::Poincare(a) => commands::poincare(resolve(&a)?),
        Command::Bound(b) => commands::bound(resolve(&b.run)?, b.c),
        Command::Verify { threads, only } => {
            set_threads(threads)?;
            commands::verify(&only)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fraclap: {e}");
            ExitCode::from(e.code())
        }
    }
}
