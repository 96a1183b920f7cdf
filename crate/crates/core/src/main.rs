use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sociolex::pipeline::{run_command, Command, RunConfig};

#[derive(Parser)]
#[command(name = "sociolex", version, about = "Lexical style, author attributes and social-network homophily")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long, short, global = true, env = "SOCIOLEX_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Read messages and names, filter authors, build the mention graph.
    Ingest,
    /// Cross-validate the gender classifier and fit a final model.
    Classify,
    /// Find Beta-Binomial gender markers.
    Markers,
    /// Assign vocabulary terms to categories and report shares by gender.
    Categorize,
    /// Cluster authors with hard EM and report cluster composition.
    Cluster,
    /// Per-author network gender composition and skew tests.
    Network,
    /// Correlate classifier confidence and marker use with network composition.
    Homophily,
    /// Accuracy with and without network features per token budget.
    Curve,
    /// Generate a synthetic corpus with planted ground truth.
    Synth,
    /// Run the full pipeline.
    All,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Ingest => Command::Ingest,
            Cmd::Classify => Command::Classify,
            Cmd::Markers => Command::Markers,
            Cmd::Categorize => Command::Categorize,
            Cmd::Cluster => Command::Cluster,
            Cmd::Network => Command::Network,
            Cmd::Homophily => Command::Homophily,
            Cmd::Curve => Command::Curve,
            Cmd::Synth => Command::Synth,
            Cmd::All => Command::All,
        }
    }
}

fn run(cli: Cli) -> sociolex::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    let out = cli.output_dir.unwrap_or_else(|| cfg.paths.output_dir.clone());
    let command = Command::from(cli.command);
    let record = run_command(command, &cfg, &out)?;
    log::info!("{command}: {} artifacts in {}", record.artifacts.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
