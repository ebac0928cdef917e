use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use cryptostack::classifiers::Family;
use cryptostack::pipeline::{emit_report, write_synthetic_inputs, InputFile, Pipeline, RunConfig, Stage};
use cryptostack::NaiveDate;

/// Technical-indicator features, stacked classifiers and PDP importance for
/// daily crypto price direction.
#[derive(Parser)]
#[command(name = "cryptostack", version)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Merge and impute the exchange feeds into composite.csv.
    Ingest,
    /// Compute the indicator frame into features.csv.
    Features,
    /// Purged walk-forward random search per model family.
    Cv,
    /// Fit every family on the level-0 window with its selected parameters.
    Train,
    /// Build level-one data and train the meta-learner.
    Stack,
    /// Score every model and the stack on both report windows.
    Evaluate,
    /// Partial-dependence importance and charts.
    Importance,
    /// Every stage in order.
    Run,
    /// Write report.txt from existing artifacts and print it.
    Report,
    /// Print the default configuration.
    DefaultConfig,
    /// Write seeded synthetic exchange feeds and a matching config.
    Synth {
        /// Directory for the CSV files and config.toml.
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 365)]
        bars: usize,
        #[arg(long, default_value = "2017-08-01")]
        start: NaiveDate,
        #[arg(long, value_delimiter = ',', default_value = "bitstamp,coinbase,kraken,bitfinex")]
        exchanges: Vec<String>,
        #[arg(long, default_value_t = 0.02)]
        missing_rate: f64,
        /// Search iterations written into the config.
        #[arg(long, default_value_t = 100)]
        n_iter: usize,
        /// Families written into the config (default: all nine).
        #[arg(long, value_delimiter = ',')]
        families: Vec<Family>,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let Some(path) = &cli.config else {
        bail!("--config <path> is required for this command");
    };
    let mut c = RunConfig::load(path).with_context(|| format!("loading config {}", path.display()))?;
    if let Some(seed) = cli.seed {
        c.seed = seed;
    }
    if let Some(out) = &cli.out {
        c.out_dir = out.clone();
    }
    Ok(c)
}

fn run_stage(cli: &Cli, stage: Stage) -> Result<()> {
    let mut p = Pipeline::resume(load_config(cli)?)?;
    p.run_stage(stage)?;
    if stage == Stage::Report {
        print!("{}", emit_report(p.out_dir())?);
    } else {
        eprintln!("{stage}: done ({})", p.out_dir().display());
    }
    Ok(())
}

fn synth(cli: &Cli, dir: &Path, bars: usize, start: NaiveDate, exchanges: &[String], missing_rate: f64, n_iter: usize, families: &[Family]) -> Result<()> {
    let seed = cli.seed.unwrap_or(42);
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let names: Vec<&str> = exchanges.iter().map(String::as_str).collect();
    let inputs = write_synthetic_inputs(dir, bars, start, &names, missing_rate, seed)?;
    // Store paths relative to the config so the directory can move.
    let inputs = inputs
        .into_iter()
        .map(|i| InputFile {
            path: PathBuf::from(i.path.file_name().expect("file name")),
            exchange: i.exchange,
        })
        .collect();
    let mut c = RunConfig::study_default(inputs);
    c.seed = seed;
    c.search.n_iter = n_iter;
    if !families.is_empty() {
        c.search.families = families.to_vec();
    }
    if let Some(out) = &cli.out {
        c.out_dir = out.clone();
    }
    c.validate()?;
    let path = dir.join("config.toml");
    std::fs::write(&path, c.to_toml()?).with_context(|| format!("writing {}", path.display()))?;
    eprintln!("wrote {} feeds and {}", names.len(), path.display());
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Ingest => run_stage(cli, Stage::Ingest),
        Command::Features => run_stage(cli, Stage::Features),
        Command::Cv => run_stage(cli, Stage::Cv),
        Command::Train => run_stage(cli, Stage::Train),
        Command::Stack => run_stage(cli, Stage::Stack),
        Command::Evaluate => run_stage(cli, Stage::Evaluate),
        Command::Importance => run_stage(cli, Stage::Importance),
        Command::Report => run_stage(cli, Stage::Report),
        Command::Run => {
            let mut p = Pipeline::new(load_config(cli)?)?;
            p.run_all()?;
            print!("{}", emit_report(p.out_dir())?);
            Ok(())
        }
        Command::DefaultConfig => {
            let inputs = vec![InputFile {
                exchange: "bitstamp".into(),
                path: "bitstamp.csv".into(),
            }];
            print!("{}", RunConfig::study_default(inputs).to_toml()?);
            Ok(())
        }
        Command::Synth {
            dir,
            bars,
            start,
            exchanges,
            missing_rate,
            n_iter,
            families,
        } => synth(cli, dir, *bars, *start, exchanges, *missing_rate, *n_iter, families),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
