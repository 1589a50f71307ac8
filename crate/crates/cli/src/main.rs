mod analyze;
mod eval;
mod exit;
mod import;
mod infer;
mod settings;
mod train;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "docclean",
    version,
    about = "Document image cleanup with light-weight encoder-decoder networks"
)]
struct Cli {
    /// Worker threads; 1 gives the strict deterministic mode. Falls back to DOCCLEAN_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a paired noisy/clean dataset.
    Train(train::TrainArgs),
    /// Clean images with a trained checkpoint.
    Infer(infer::InferArgs),
    /// Score predictions against ground truth.
    Eval(eval::EvalArgs),
    /// Report parameter and Mult-Add counts.
    Analyze(analyze::AnalyzeArgs),
    /// Convert a directory of VGG-19 .npy dumps into a weight container.
    ImportWeights(import::ImportArgs),
}

fn thread_count(flag: Option<usize>) -> anyhow::Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("DOCCLEAN_THREADS") {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| exit::usage(format!("DOCCLEAN_THREADS must be a positive integer, got `{v}`"))),
        _ => Ok(None),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = thread_count(cli.threads)? {
        if n == 0 {
            return Err(exit::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
        log::debug!("using {n} worker thread(s)");
    }
    match cli.command {
        Command::Train(a) => train::run(a),
        Command::Infer(a) => infer::run(a),
        Command::Eval(a) => eval::run(a),
        Command::Analyze(a) => analyze::run(a),
        Command::ImportWeights(a) => import::run(a),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(exit::code_for(&e));
    }
}
