use clap::{Parser, Subcommand, ValueEnum};
use linker_core::config::PipelineConfig;
use linker_core::pipeline::{Pipeline, PipelineError, Stage, StageOutcome};
use linker_core::qualify::Verdict;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "linker",
    version,
    about = "Inventor-author disambiguation pipeline over patents and publications"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Txt,
    Structured,
}

#[derive(clap::Args, Clone)]
struct CommonArgs {
    /// Pipeline config file (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Restrict to one corpus id
    #[arg(long)]
    corpus: Option<String>,
    /// Re-run the stage even when its artifact is up to date
    #[arg(long)]
    force: bool,
    /// Override the sampling seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the name-similarity threshold [0-100]
    #[arg(long)]
    name_threshold: Option<u8>,
    /// Override the classifier score threshold
    #[arg(long)]
    ipccat_threshold: Option<u64>,
    /// Override the IPC comparison prefix length [1-8]
    #[arg(long)]
    ipc_prefix_len: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Fetch or replay patent records for each corpus
    Ingest(CommonArgs),
    /// Cluster raw inventor names into inventors
    Normalize(CommonArgs),
    /// Retrieve homonymous authors' publications per inventor
    Homonyms(CommonArgs),
    /// Classify publication abstracts into scored IPC codes
    Classify(CommonArgs),
    /// Apply the score/IPC-overlap match rule
    Match(CommonArgs),
    /// Geocode affiliations of matched candidates (best effort)
    Geocode(CommonArgs),
    /// Draw the seeded qualification sample from the candidates
    Sample(CommonArgs),
    /// Record a manual verdict for a sampled candidate
    Verdict {
        #[command(flatten)]
        common: CommonArgs,
        /// Sampled cluster id
        #[arg(long)]
        cluster: String,
        /// verified | doubt | error
        #[arg(long)]
        verdict: String,
    },
    /// Build the qualification and proportion reports
    Report {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, default_value = "txt")]
        format: Format,
    },
    /// Run every stage in order, then the report
    RunAll(CommonArgs),
    /// Materialize the bundled offline demo and run it end to end
    Demo {
        /// Output directory for fixtures, config and artifacts
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn load_config(common: &CommonArgs) -> Result<PipelineConfig, PipelineError> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| PipelineError::Invalid("--config is required".into()))?;
    let mut config = PipelineConfig::load(path)?;
    if let Some(seed) = common.seed {
        config.sampling.seed = seed;
    }
    if let Some(t) = common.name_threshold {
        config.thresholds.name_similarity = t;
    }
    if let Some(t) = common.ipccat_threshold {
        config.thresholds.classifier_score = t;
    }
    if let Some(l) = common.ipc_prefix_len {
        config.thresholds.prefix_len = l;
    }
    config
        .validate()
        .map_err(PipelineError::Config)?;
    Ok(config)
}

fn print_outcome(outcome: &StageOutcome) {
    let marker = if outcome.noop { "-" } else { "+" };
    println!(
        "{marker} [{}] {}: {}",
        outcome.corpus_id, outcome.stage, outcome.summary
    );
}

fn run_per_corpus_stage(common: &CommonArgs, stage: Stage) -> Result<(), PipelineError> {
    let config = load_config(common)?;
    let pipeline = Pipeline::new(&config);
    let ids: Vec<String> = match &common.corpus {
        Some(id) => vec![config.corpus(id)?.corpus_id.clone()],
        None => config.corpora.iter().map(|c| c.corpus_id.clone()).collect(),
    };
    for id in ids {
        print_outcome(&pipeline.run_stage(&id, stage, common.force)?);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Ingest(c) => run_per_corpus_stage(&c, Stage::Ingest),
        Command::Normalize(c) => run_per_corpus_stage(&c, Stage::Normalize),
        Command::Homonyms(c) => run_per_corpus_stage(&c, Stage::Homonyms),
        Command::Classify(c) => run_per_corpus_stage(&c, Stage::Classify),
        Command::Match(c) => run_per_corpus_stage(&c, Stage::Match),
        Command::Geocode(c) => run_per_corpus_stage(&c, Stage::Geocode),
        Command::Sample(c) => run_per_corpus_stage(&c, Stage::Sample),
        Command::Verdict {
            common,
            cluster,
            verdict,
        } => {
            let config = load_config(&common)?;
            let corpus = common
                .corpus
                .clone()
                .ok_or_else(|| PipelineError::Invalid("--corpus is required for verdict".into()))?;
            let verdict: Verdict = verdict.parse().map_err(PipelineError::Qualify)?;
            Pipeline::new(&config).apply_verdict(&corpus, &cluster, verdict)?;
            println!("+ [{corpus}] verdict recorded for {cluster}");
            Ok(())
        }
        Command::Report { common, format } => {
            let config = load_config(&common)?;
            let pipeline = Pipeline::new(&config);
            let outcome = pipeline.run_report(common.force)?;
            print_outcome(&outcome);
            let dir = &config.general.artifacts_dir;
            let file = match format {
                Format::Txt => dir.join("report.txt"),
                Format::Structured => dir.join("report.json"),
            };
            print!("{}", std::fs::read_to_string(file)?);
            Ok(())
        }
        Command::RunAll(c) => {
            let config = load_config(&c)?;
            let pipeline = Pipeline::new(&config);
            for outcome in pipeline.run_all(c.corpus.as_deref(), c.force)? {
                print_outcome(&outcome);
            }
            Ok(())
        }
        Command::Demo { out, workers, seed } => {
            let config_path = linker_core::demo::materialize(&out, workers, seed)?;
            println!("demo fixtures and config written to {}", out.display());
            let config = PipelineConfig::load(&config_path)?;
            let pipeline = Pipeline::new(&config);
            for outcome in pipeline.run_all(None, false)? {
                print_outcome(&outcome);
            }
            println!(
                "report written to {}",
                config.general.artifacts_dir.join("report.txt").display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
