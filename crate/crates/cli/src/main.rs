use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dualpath::config::{ConfigFile, ExperimentConfig, Overrides};
use dualpath::experiments::{self, Metadata, Table};
use dualpath::pathloss::db_to_linear;
use dualpath::Error;

/// Worker-count variable; unset means one worker per available core.
const THREADS_VAR: &str = "DUALPATH_THREADS";

#[derive(Parser, Debug)]
#[command(
    name = "dualpath",
    version,
    about = "Coverage and rate of small cells under rectangle blockages"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Coverage vs serving order and SIR threshold.
    Fig2(Common),
    /// Coverage vs serving order for four station/blockage intensity pairs.
    Fig3(Common),
    /// Azimuth-averaged LoS probability vs distance.
    Fig4(Common),
    /// Average rate over a log grid of station and blockage intensities.
    Fig5(Common),
    /// Analytic-vs-simulation cross-validation; exits 1 on any failure.
    Validate(Common),
    /// Coverage of the k-th nearest station at one threshold.
    Coverage {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// Defaults to the configured threshold.
        #[arg(long, allow_hyphen_values = true)]
        threshold_db: Option<f64>,
    },
    /// Association-averaged rate with its per-order terms.
    Rate(Common),
    /// Association probabilities, analytic and simulated.
    Assoc(Common),
    /// LoS probability of a single link.
    Los {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100.0)]
        r: f64,
        /// Link azimuth in radians.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        theta: f64,
    },
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON config with `params` and optional `sweep`; defaults apply without one.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// exact | bound
    #[arg(long)]
    mode: Option<String>,
    /// geometric | probabilistic
    #[arg(long)]
    blockage: Option<String>,
    /// table1 | argmax | argmax-fading
    #[arg(long)]
    assoc: Option<String>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig, Error> {
        let file = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        ExperimentConfig::resolve(
            file,
            Overrides {
                seed: self.seed,
                trials: self.trials,
                output: self.out.clone(),
                mode: self.mode.clone(),
                blockage: self.blockage.clone(),
                assoc: self.assoc.clone(),
            },
        )
        // Anything wrong with the inputs is a config error, whatever layer caught it.
        .map_err(|e| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        })
    }
}

fn init_pool() -> Result<(), Error> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::Config(format!(
            "{THREADS_VAR} must be a positive integer, got `{raw}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

fn emit(cfg: &ExperimentConfig, meta: Metadata, table: &Table) -> Result<(), Error> {
    let csv = table.to_csv(&meta);
    match &cfg.output_path {
        Some(path) => {
            std::fs::write(path, csv).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        }
        None => std::io::stdout()
            .write_all(csv.as_bytes())
            .map_err(|e| Error::Config(format!("stdout: {e}"))),
    }
}

/// Returns whether every gating check passed.
fn run(command: Command) -> Result<bool, Error> {
    init_pool()?;
    let (name, common) = match &command {
        Command::Fig2(c) => ("fig2", c),
        Command::Fig3(c) => ("fig3", c),
        Command::Fig4(c) => ("fig4", c),
        Command::Fig5(c) => ("fig5", c),
        Command::Validate(c) => ("validate", c),
        Command::Coverage { common, .. } => ("coverage", common),
        Command::Rate(c) => ("rate", c),
        Command::Assoc(c) => ("assoc", c),
        Command::Los { common, .. } => ("los", common),
    };
    let cfg = common.resolve()?;
    let meta = Metadata::for_config(name, &cfg);
    let table = match command {
        Command::Fig2(_) => experiments::run_fig2(&cfg)?,
        Command::Fig3(_) => experiments::run_fig3(&cfg)?,
        Command::Fig4(_) => experiments::run_fig4(&cfg)?,
        Command::Fig5(_) => experiments::run_fig5(&cfg)?,
        Command::Validate(_) => {
            let report = experiments::run_validate(&cfg)?;
            for c in &report.checks {
                eprintln!(
                    "{} {}: {:e} (tolerance {:e})",
                    c.outcome, c.name, c.measured, c.tolerance
                );
            }
            emit(&cfg, meta, &report.table())?;
            return Ok(report.passed());
        }
        Command::Coverage {
            k, threshold_db, ..
        } => {
            if k == 0 {
                return Err(Error::Config("--k must be at least 1".into()));
            }
            let t = threshold_db.map_or(cfg.params.sir_threshold, db_to_linear);
            experiments::run_coverage(&cfg, k, t)?
        }
        Command::Rate(_) => experiments::run_rate(&cfg)?,
        Command::Assoc(_) => experiments::run_assoc(&cfg)?,
        Command::Los { r, theta, .. } => experiments::run_los(&cfg, r, theta)?,
    };
    emit(&cfg, meta, &table)?;
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ Error::Config(_)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
