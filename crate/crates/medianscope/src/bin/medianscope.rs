use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use medianscope::harness::{parse_spec, run_to_output, HarnessError};

#[derive(Parser)]
#[command(name = "medianscope", version, about = "Cube complex boundaries and random walk experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment spec (JSON).
    #[arg(long)]
    config: PathBuf,
    /// CSV destination; overrides the spec's output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Vertices or hyperplanes of a truncated complex.
    Build(Common),
    /// Product factors and deep halfspaces.
    Decompose(Common),
    /// Construct, check or measure ultrafilters.
    Boundary(Common),
    Folner(Common),
    Symdiff(Common),
    Meager(Common),
    /// l1 embedding of an interval.
    Embed(Common),
    Witness(Common),
    Walk(Common),
    Stationary(Common),
    Strip(Common),
    Entropy(Common),
    /// Proximality and flipping/skewering searches.
    Search(Common),
    /// Compare a CSV against a baseline.
    Compare(Common),
}

impl Command {
    fn split(&self) -> (&'static str, &Common) {
        match self {
            Command::Build(c) => ("build", c),
            Command::Decompose(c) => ("decompose", c),
            Command::Boundary(c) => ("boundary", c),
            Command::Folner(c) => ("folner", c),
            Command::Symdiff(c) => ("symdiff", c),
            Command::Meager(c) => ("meager", c),
            Command::Embed(c) => ("embed", c),
            Command::Witness(c) => ("witness", c),
            Command::Walk(c) => ("walk", c),
            Command::Stationary(c) => ("stationary", c),
            Command::Strip(c) => ("strip", c),
            Command::Entropy(c) => ("entropy", c),
            Command::Search(c) => ("search", c),
            Command::Compare(c) => ("compare", c),
        }
    }
}

fn run(cli: &Cli) -> Result<i32, HarnessError> {
    let (op, common) = cli.command.split();
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| HarnessError::Config(format!("{}: {e}", common.config.display())))?;
    let mut spec = parse_spec(&text)?;
    if let Some(seed) = common.seed {
        spec.seed = seed;
    }
    run_to_output(&spec, Some(op), common.out.as_deref())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("medianscope: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
