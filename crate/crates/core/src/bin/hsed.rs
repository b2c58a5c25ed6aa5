use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hsed::cli;
use hsed::config::{parse_tree_spec, Mode, RunConfig};
use hsed::synth::SyntheticTreeSpec;
use hsed::Result;

#[derive(Parser)]
#[command(name = "hsed", version, about = "Hyperbolic graph representation learning for event detection")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a message graph from JSON-lines messages and a token table.
    BuildGraph {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a pipeline; writes the model artifact and report into --out.
    Train {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a saved checkpoint or embedding dump on the test split.
    Eval {
        #[arg(long)]
        graph: PathBuf,
        /// checkpoint.json or embeddings.json
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a labeled synthetic tree graph.
    SynthTree {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare Poincaré, hyperboloid and Euclidean variants.
    Ablate {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: Option<&PathBuf>, mode: Option<Mode>, seed: Option<u64>) -> Result<RunConfig> {
    let mut c = match path {
        Some(p) => RunConfig::read(p)?,
        None => RunConfig::default(),
    };
    if let Some(m) = mode {
        c.mode = m;
    }
    if let Some(s) = seed {
        c.seed = s;
    }
    c.validate()?;
    Ok(c)
}

fn run(args: Args) -> Result<()> {
    match args.command {
        Command::BuildGraph { input, embeddings, out } => {
            println!("{}", cli::cmd_build_graph(&input, &embeddings, &out)?);
        }
        Command::Train { graph, config, mode, out, seed } => {
            let c = load_config(config.as_ref(), mode, seed)?;
            let outcome = cli::cmd_train(&graph, &c, &out)?;
            if let Some(r) = outcome.report {
                print!("{r}");
                println!("wall_seconds = {:.3}", r.wall_seconds);
            }
        }
        Command::Eval { graph, input, config, seed, out } => {
            let c = load_config(config.as_ref(), None, seed)?;
            let r = cli::cmd_eval(&graph, &input, &c)?;
            print!("{r}");
            if let Some(out) = out {
                cli::write_report(&out, &r)?;
            }
        }
        Command::SynthTree { config, out, seed } => {
            let mut spec = match &config {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| hsed::Error::from(e).in_file(p))?;
                    parse_tree_spec(&text).map_err(|e| e.in_file(p))?
                }
                None => SyntheticTreeSpec::default(),
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            println!("{}", cli::cmd_synth_tree(&spec, &out)?);
        }
        Command::Ablate { graph, config, mode, seed, out } => {
            let c = load_config(config.as_ref(), mode, seed)?;
            let rows = cli::cmd_ablate(&graph, &c, out.as_deref())?;
            print!("{}", cli::ablation_table(&rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
