//! `fedrec`: config-driven experiment runner.

mod config;
mod pipeline;
mod report;

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use fedrec_core::experiments::PartitionScheme;
use fedrec_core::features::SessionConfig;
use fedrec_core::federation::ClusterConfig;

use crate::config::{invalid, ExperimentConfig, Invalid, Stage, DATA_DIR_ENV};
use crate::pipeline::RunContext;

#[derive(Parser, Debug)]
#[command(name = "fedrec", version, about = "Two-stage recommender experiments")]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 gives the reproducible single-threaded path.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Root of the per-run output directories.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    /// MovieLens 1M directory used when the config does not name one.
    #[arg(long, global = true, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PartitionArg {
    Iid,
    Cluster,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Runs the configured stage end to end.
    Run,
    /// Checks the configuration and prints its run directory; writes nothing.
    Validate,
    /// Parses the dataset and writes a summary and the event log.
    Ingest,
    /// Writes cross-occurrence similarities for every indicator.
    CcoBuild,
    /// Leave-one-out HR/NDCG of a `cco` stage config.
    CcoEval,
    /// Centralized CTR training of a `ctr-central` config.
    CtrTrain,
    /// Federated CTR training of a `ctr-federated` config.
    FedTrain {
        /// Comma-separated parameter groups averaged by the server.
        #[arg(long, value_delimiter = ',')]
        plan: Option<Vec<String>>,
        #[arg(long, value_enum)]
        partition: Option<PartitionArg>,
    },
    /// Writes one 112-column session embedding per window of a sensor CSV.
    FeaturesExtract {
        input: PathBuf,
        /// Output CSV; standard output if absent.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Merges run reports (files or run directories) into one CSV table.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli, expect: Option<Stage>, tweak: impl FnOnce(&mut ExperimentConfig)) -> Result<ExperimentConfig> {
    let path = cli.config.as_deref().ok_or_else(|| invalid!("this command needs --config"))?;
    let mut cfg = ExperimentConfig::load(path)?;
    tweak(&mut cfg);
    let cfg = cfg.resolve(cli.seed)?;
    if let Some(stage) = expect {
        if cfg.stage != stage {
            return Err(invalid!("expected a `{}` config, got stage `{}`", stage.name(), cfg.stage.name()));
        }
    }
    Ok(cfg)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn execute(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(invalid!("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let ctx = RunContext {
        data_dir: cli.data_dir.as_deref(),
        out: &cli.out,
    };
    let run = |cfg: ExperimentConfig| -> Result<()> {
        let (dir, _) = pipeline::run(&cfg, &ctx)?;
        println!("{}", dir.display());
        Ok(())
    };
    match &cli.command {
        Command::Run => run(load_config(cli, None, |_| {})?),
        Command::Validate => {
            let cfg = load_config(cli, None, |_| {})?;
            println!("{}", cfg.run_dir(&cli.out).display());
            Ok(())
        }
        Command::CcoEval => run(load_config(cli, Some(Stage::Cco), |_| {})?),
        Command::CtrTrain => run(load_config(cli, Some(Stage::CtrCentral), |_| {})?),
        Command::FedTrain { plan, partition } => run(load_config(cli, Some(Stage::CtrFederated), |cfg| {
            let f = cfg.federated.get_or_insert_with(Default::default);
            if let Some(plan) = plan {
                f.train.rounds.plan = plan.clone();
            }
            match partition {
                Some(PartitionArg::Iid) => f.train.partition = PartitionScheme::Iid,
                Some(PartitionArg::Cluster) if !matches!(f.train.partition, PartitionScheme::Cluster(_)) => {
                    f.train.partition = PartitionScheme::Cluster(ClusterConfig::default())
                }
                _ => {}
            }
        })?),
        Command::Ingest => {
            let dir = pipeline::ingest(&load_config(cli, None, |_| {})?, &ctx)?;
            println!("{}", dir.display());
            Ok(())
        }
        Command::CcoBuild => {
            let path = pipeline::cco_build(&load_config(cli, Some(Stage::Cco), |_| {})?, &ctx)?;
            println!("{}", path.display());
            Ok(())
        }
        Command::FeaturesExtract { input, output: out } => {
            if !input.is_file() {
                return Err(invalid!("sensor file {} does not exist", input.display()));
            }
            pipeline::extract_features(input, &SessionConfig::default(), output(out.as_deref())?)?;
            Ok(())
        }
        Command::Report { reports, output: out } => {
            let loaded = report::load_reports(reports)?;
            let mut buf = Vec::new();
            report::merge(&loaded, &mut buf)?;
            output(out.as_deref())?.write_all(&buf)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<Invalid>().is_some() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
