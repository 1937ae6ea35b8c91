use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sre::harness::{run_to_dir, ExperimentId, RunConfig};
use sre::SreError;

#[derive(Parser)]
#[command(name = "sre", version, about = "Structural regularization Monte Carlo experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write summary.csv, curves.csv, config.snapshot
    /// and report.json.
    Run {
        /// auction, entry-exit or demand; overrides the config file.
        #[arg(long)]
        experiment: Option<String>,
        #[arg(long)]
        scenario: Option<u32>,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// TOML run configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a configuration file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// List the experiments and their scenarios.
    ListExperiments,
}

fn run(
    experiment: Option<String>,
    scenario: Option<u32>,
    trials: Option<u64>,
    seed: Option<u64>,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<(), SreError> {
    let mut cfg = match config {
        Some(path) => RunConfig::load(&path)?,
        None => {
            let (Some(e), Some(s)) = (&experiment, scenario) else {
                return Err(SreError::Config(
                    "without --config both --experiment and --scenario are required".into(),
                ));
            };
            RunConfig::new(ExperimentId::parse(e)?, s)
        }
    };
    if let Some(e) = experiment {
        cfg.experiment = ExperimentId::parse(&e)?;
    }
    if let Some(s) = scenario {
        cfg.scenario = s;
    }
    if let Some(t) = trials {
        cfg.trials = t;
    }
    if let Some(s) = seed {
        cfg.base_seed = s;
    }
    if let Some(o) = out {
        cfg.output_dir = Some(o);
    }
    let out_dir = cfg
        .output_dir
        .clone()
        .ok_or_else(|| SreError::Config("no output directory: pass --out".into()))?;
    let report = run_to_dir(&cfg, &out_dir)?;
    println!(
        "{} scenario {}: {} trials, seed {}, {:.1}s",
        report.experiment,
        report.scenario,
        report.trials,
        report.base_seed,
        report.metadata.wall_time_seconds
    );
    println!("{:<13} {:<6} {:>12} {:>12} {:>12}", "estimator", "domain", "bias", "variance", "mse");
    for a in &report.aggregates {
        println!(
            "{:<13} {:<6} {:>12.6} {:>12.6} {:>12.6}",
            a.estimator.as_str(),
            a.domain.as_str(),
            a.bias,
            a.variance,
            a.mse
        );
    }
    println!("wrote {}", out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            experiment,
            scenario,
            trials,
            seed,
            config,
            out,
        } => run(experiment, scenario, trials, seed, config, out),
        Command::Validate { config } => RunConfig::load(&config)
            .and_then(|c| c.validate())
            .map(|()| println!("ok")),
        Command::ListExperiments => {
            for id in ExperimentId::ALL {
                let s = id.scenarios();
                println!("{:<11} scenarios {}-{}  {}", id.as_str(), s.start(), s.end(), id.description());
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
