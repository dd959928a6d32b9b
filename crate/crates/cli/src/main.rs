use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use metcal_cli::pipeline;
use metcal_cli::RunConfig;
use metcal_core::selection::Family;
use metcal_core::{Error, ErrorCategory, Result, Timestamp};

#[derive(Parser)]
#[command(
    name = "metcal",
    version,
    about = "Calibrate and verify multi-component forecasts"
)]
struct Cli {
    /// JSON run configuration; the synthetic demo when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for simulation and bootstrap resampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Bootstrap replicates for bias and parameter bands (0 disables).
    #[arg(long, global = true)]
    bootstrap: Option<usize>,
    #[arg(long, global = true, value_enum)]
    family: Option<FamilyArg>,
    /// Override a configuration value, e.g. `--set max_covariates=2`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Lr,
    Nhgr,
    Both,
}

impl FamilyArg {
    fn families(self) -> Vec<Family> {
        match self {
            FamilyArg::Lr => vec![Family::Lr],
            FamilyArg::Nhgr => vec![Family::Nhgr],
            FamilyArg::Both => vec![Family::Lr, Family::Nhgr],
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic scenario to the configured data paths.
    Simulate,
    /// Fit every candidate model at every horizon on the training period.
    Fit,
    /// Pick optimal and consistent models from the fitted store.
    Select,
    /// Verify consistent models over the training and test periods.
    Diagnose {
        /// Only this period (`train` or a test period name).
        #[arg(long)]
        period: Option<String>,
    },
    /// Calibrated forecasts for one issue time.
    Predict {
        #[arg(long, value_name = "YYYY-MM-DDTHH:MMZ")]
        issue_time: String,
    },
    /// Collect outputs into flat tables for plotting.
    Report,
}

fn load(cli: &Cli) -> Result<RunConfig> {
    let mut overrides = Vec::new();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    if let Some(b) = cli.bootstrap {
        overrides.push(format!("bootstrap.replicates={b}"));
        overrides.push(format!("bootstrap.parameter_replicates={b}"));
    }
    overrides.extend(cli.overrides.iter().cloned());
    let mut cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    if let (Some(seed), Some(s)) = (cli.seed, cfg.scenario.as_mut()) {
        s.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.set_output(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let mut cfg = load(cli)?;
    let families = cli.family.map(FamilyArg::families);
    match &cli.command {
        Command::Simulate => {
            let truth = pipeline::run_simulate(&cfg)?;
            println!(
                "simulated {} issue times x {} horizons into {}",
                truth.issue_times,
                truth.horizons.len(),
                cfg.forecasts.display()
            );
        }
        Command::Fit => {
            if let Some(f) = families {
                cfg.families = f;
            }
            let index = pipeline::run_fit(&cfg)?;
            println!(
                "fitted {} response(s); {} fit(s) skipped",
                index.responses.len(),
                index.skipped.len()
            );
        }
        Command::Select => {
            for s in pipeline::run_select(&cfg, families.as_deref())? {
                println!(
                    "{} {}: {} (optimal at {}/{} horizons)",
                    s.family, s.response, s.spec, s.horizons_optimal, s.horizons
                );
            }
        }
        Command::Diagnose { period } => {
            let res = pipeline::run_diagnose(&cfg, period.as_deref(), families.as_deref())?;
            for p in res {
                println!(
                    "diagnosed period {} ({} horizon rows)",
                    p.period,
                    p.horizons.len()
                );
            }
        }
        Command::Predict { issue_time } => {
            let issue = Timestamp::parse(issue_time)
                .map_err(|e| Error::Config(format!("bad --issue-time `{issue_time}`: {e:?}")))?;
            let preds = pipeline::run_predict(&cfg, issue, families.as_deref())?;
            let rows: usize = preds.iter().map(|p| p.rows.len()).sum();
            println!("wrote {rows} forecast rows for {issue}");
        }
        Command::Report => {
            let r = pipeline::run_report(&cfg)?;
            println!("report tables for {} figure families", r.figures.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => tracing::Level::WARN,
        1 => tracing::Level::INFO,
        _ => tracing::Level::DEBUG,
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(level)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.category() {
                ErrorCategory::Config => 2,
                ErrorCategory::Data => 3,
                ErrorCategory::Numerical => 4,
            })
        }
    }
}
