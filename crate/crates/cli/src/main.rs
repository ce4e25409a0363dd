mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{RunConfig, UsageError};

#[derive(Parser, Debug)]
#[command(name = "kgperf", version, about = "Performance prediction for modular optimizers via knowledge-graph embeddings")]
struct Cli {
    /// Run configuration (key = value per line). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; overrides `seed` from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `out_dir` from the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the modular DE over the problem suite and write performance data.
    Datagen {
        /// Keep this many configurations, spread evenly over the module space.
        #[arg(long)]
        configs: Option<usize>,
    },
    /// Compute landscape features, or validate and copy an external features CSV.
    Ela {
        #[arg(long)]
        ingest: Option<PathBuf>,
    },
    /// Build one knowledge graph per (budget, threshold) pair.
    Build {
        #[arg(long)]
        budget: Option<u64>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Train one ComplEx model with the configured hyperparameters.
    Train(ModelArgs),
    /// Train every grid point and keep the best on validation F1.
    Gridsearch(ModelArgs),
    /// Run an evaluation scenario and print the report.
    Eval {
        #[command(flatten)]
        model: ModelArgs,
        /// `score`, `rf` or `both`.
        #[arg(long, default_value = "score")]
        pipeline: String,
        /// Train the configured hyperparameters instead of a per-fold grid search.
        #[arg(long)]
        fixed: bool,
    },
    /// Classify (configuration, problem) pairs with a trained model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Needed by the rf pipeline, which trains its forest on the graph's performance triples.
        #[arg(long)]
        kg: Option<PathBuf>,
        #[arg(long, default_value = "score")]
        pipeline: String,
        #[arg(long, requires = "problem_id", conflicts_with = "queries")]
        config_id: Option<String>,
        #[arg(long, requires = "config_id")]
        problem_id: Option<String>,
        /// CSV with `config_id,problem_id` columns.
        #[arg(long)]
        queries: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Knowledge graph TSV.
    #[arg(long)]
    kg: PathBuf,
    #[arg(long, default_value = "random_stratified")]
    scenario: String,
}

fn load_config(cli: &Cli) -> Result<RunConfig, UsageError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Datagen { configs } => commands::datagen(&cfg, configs),
        Command::Ela { ingest } => commands::ela(&cfg, ingest.as_deref()),
        Command::Build { budget, threshold } => commands::build(&cfg, budget, threshold),
        Command::Train(m) => commands::train(&cfg, &m.kg, &m.scenario),
        Command::Gridsearch(m) => commands::gridsearch(&cfg, &m.kg, &m.scenario),
        Command::Eval { model, pipeline, fixed } => commands::eval(&cfg, &model.kg, &model.scenario, &pipeline, fixed),
        Command::Predict {
            model,
            kg,
            pipeline,
            config_id,
            problem_id,
            queries,
        } => {
            let queries = match (config_id, problem_id, queries) {
                (Some(c), Some(p), None) => vec![(c, p)],
                (None, None, Some(path)) => commands::read_queries(&path)?,
                _ => return Err(UsageError("give --config-id and --problem-id, or --queries".into()).into()),
            };
            commands::predict(&cfg, &model, kg.as_deref(), &pipeline, &queries)
        }
    }
}

/// 1 usage, 2 bad data, 3 anything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    match err.downcast_ref::<kgperf_core::Error>() {
        Some(kgperf_core::Error::Config(_)) => 1,
        Some(e) if e.is_data_error() => 2,
        Some(_) => 3,
        None if err.is::<std::io::Error>() || err.is::<csv::Error>() => 2,
        None => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
