//! Monte Carlo orchestration: run configuration, the bias/variance/MSE
//! metrics, the parallel trial loop and the files a run leaves behind.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::apps::auction::{AuctionEstimation, AuctionExperiment, AuctionScenario};
use crate::apps::demand::{DemandEstimation, DemandExperiment, DemandParams};
use crate::apps::entry_exit::{DdcParams, EntryExitEstimation, EntryExitExperiment, ProfitLaw};
use crate::apps::{CurvePoint, EstimatorKind, EvalDomain, Experiment};
use crate::data::SeededRng;
use crate::error::{Result, SreError};
use crate::tuning::CvPlan;

pub const SUMMARY_FILE: &str = "summary.csv";
pub const CURVES_FILE: &str = "curves.csv";
pub const SNAPSHOT_FILE: &str = "config.snapshot";
pub const REPORT_FILE: &str = "report.json";

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "SRE_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    Auction,
    EntryExit,
    Demand,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 3] = [
        ExperimentId::Auction,
        ExperimentId::EntryExit,
        ExperimentId::Demand,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentId::Auction => "auction",
            ExperimentId::EntryExit => "entry-exit",
            ExperimentId::Demand => "demand",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| {
                SreError::Config(format!(
                    "unknown experiment {s:?}; expected auction, entry-exit or demand"
                ))
            })
    }

    pub fn scenarios(self) -> std::ops::RangeInclusive<u32> {
        match self {
            ExperimentId::Auction | ExperimentId::EntryExit => 1..=3,
            ExperimentId::Demand => 1..=4,
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            ExperimentId::Auction => {
                "first-price auctions: expected winning bid against bidder count (1 uniform, 2 beta(2,5), 3 uniform with overbidding)"
            }
            ExperimentId::EntryExit => {
                "dynamic entry and exit: one-step-ahead market occupancy (1 perfect foresight, 2 adaptive, 3 myopic)"
            }
            ExperimentId::Demand => {
                "IV demand with monopoly pricing (1 optimal/linear, 2 markup/linear, 3 optimal/log-log, 4 markup/log-log)"
            }
        }
    }
}

impl std::fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuctionBlock {
    /// Replaces the scenario preset entirely when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub design: Option<AuctionScenario>,
    pub estimation: AuctionEstimation,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntryExitBlock {
    pub params: DdcParams,
    pub profit: ProfitLaw,
    pub estimation: EntryExitEstimation,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemandBlock {
    pub params: DemandParams,
    pub estimation: DemandEstimation,
}

fn default_trials() -> u64 {
    100
}

/// A complete run description, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: ExperimentId,
    pub scenario: u32,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "EstimatorKind::defaults")]
    pub estimators: Vec<EstimatorKind>,
    /// Overrides the experiment's λ grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_grid: Option<Vec<f64>>,
    /// Overrides the experiment's cross-validation plan.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv: Option<CvPlan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub auction: AuctionBlock,
    #[serde(default)]
    pub entry_exit: EntryExitBlock,
    #[serde(default)]
    pub demand: DemandBlock,
}

impl RunConfig {
    pub fn new(experiment: ExperimentId, scenario: u32) -> Self {
        Self {
            experiment,
            scenario,
            trials: default_trials(),
            base_seed: 0,
            estimators: EstimatorKind::defaults(),
            lambda_grid: None,
            cv: None,
            output_dir: None,
            auction: AuctionBlock::default(),
            entry_exit: EntryExitBlock::default(),
            demand: DemandBlock::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| SreError::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    /// The config with every default written out, in a stable layout.
    pub fn canonical(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| SreError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(SreError::Config("trials must be positive".into()));
        }
        if self.estimators.is_empty() {
            return Err(SreError::Config("estimator list is empty".into()));
        }
        let mut seen = self.estimators.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.estimators.len() {
            return Err(SreError::Config("estimator list has duplicates".into()));
        }
        if let Some(grid) = &self.lambda_grid {
            if grid.is_empty() || grid.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
                return Err(SreError::Config(
                    "lambda_grid must be a nonempty list of finite nonnegative values".into(),
                ));
            }
        }
        build_experiment(self).map(|_| ())
    }
}

/// Constructs the experiment a config describes, applying the top-level λ
/// grid and CV overrides to its estimation block.
pub fn build_experiment(config: &RunConfig) -> Result<Box<dyn Experiment>> {
    let id = config.experiment;
    if !id.scenarios().contains(&config.scenario) {
        return Err(SreError::Config(format!(
            "{id} has scenarios {:?}, got {}",
            id.scenarios(),
            config.scenario
        )));
    }
    let grid = config.lambda_grid.clone();
    let cv = config.cv.clone();
    Ok(match id {
        ExperimentId::Auction => {
            let mut est = config.auction.estimation.clone();
            est.lambda_grid = grid.or(est.lambda_grid);
            est.cv = cv.or(est.cv);
            let design = match &config.auction.design {
                Some(d) => d.clone(),
                None => AuctionScenario::preset(config.scenario)?,
            };
            Box::new(AuctionExperiment::new(config.scenario, design, est)?)
        }
        ExperimentId::EntryExit => {
            let block = &config.entry_exit;
            let mut est = block.estimation.clone();
            est.lambda_grid = grid.or(est.lambda_grid);
            est.cv = cv.or(est.cv);
            Box::new(EntryExitExperiment::new(
                config.scenario,
                block.params.clone(),
                block.profit.clone(),
                est,
            )?)
        }
        ExperimentId::Demand => {
            let block = &config.demand;
            let mut est = block.estimation.clone();
            est.lambda_grid = grid.or(est.lambda_grid);
            est.cv = cv.or(est.cv);
            Box::new(DemandExperiment::new(config.scenario, block.params.clone(), est)?)
        }
    })
}

/// Bias, variance and MSE of one estimator on one domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub estimator: EstimatorKind,
    pub domain: EvalDomain,
    pub bias: f64,
    pub variance: f64,
    pub mse: f64,
    pub trials: u64,
}

type PointsByX = BTreeMap<u64, Vec<(f64, f64)>>;

/// Pointwise mean absolute error, variance around the pointwise mean and
/// mean squared error, each averaged over the evaluation points of an
/// (estimator, domain) cell. Points are matched across trials by `x`.
pub fn metrics(curves: &[CurvePoint]) -> Result<Vec<Aggregate>> {
    // (estimator, domain) -> x bits -> [(truth, prediction)] in curve order.
    let mut cells: BTreeMap<(EstimatorKind, EvalDomain), PointsByX> =
        BTreeMap::new();
    for c in curves {
        cells
            .entry((c.estimator, c.domain))
            .or_default()
            .entry(c.x.to_bits())
            .or_default()
            .push((c.truth, c.prediction));
    }
    let mut out = Vec::with_capacity(cells.len());
    for ((estimator, domain), points) in cells {
        let r = points.values().next().map_or(0, Vec::len);
        if let Some((x, v)) = points.iter().find(|(_, v)| v.len() != r) {
            return Err(SreError::InvalidArgument(format!(
                "{} {} has {} trials at x = {} but {r} elsewhere",
                estimator.as_str(),
                domain.as_str(),
                v.len(),
                f64::from_bits(*x)
            )));
        }
        let rf = r as f64;
        let (mut bias, mut variance, mut mse) = (0.0, 0.0, 0.0);
        for v in points.values() {
            let mean = v.iter().map(|(_, p)| p).sum::<f64>() / rf;
            bias += v.iter().map(|(t, p)| (p - t).abs()).sum::<f64>() / rf;
            variance += v.iter().map(|(_, p)| (p - mean).powi(2)).sum::<f64>() / rf;
            mse += v.iter().map(|(t, p)| (p - t).powi(2)).sum::<f64>() / rf;
        }
        let k = points.len() as f64;
        out.push(Aggregate {
            estimator,
            domain,
            bias: bias / k,
            variance: variance / k,
            mse: mse / k,
            trials: r as u64,
        });
    }
    Ok(out)
}

/// Run facts that are not reproducible by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub software_version: String,
    pub started_unix_seconds: u64,
    pub wall_time_seconds: f64,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub experiment: ExperimentId,
    pub scenario: u32,
    pub trials: u64,
    pub base_seed: u64,
    pub notes: Vec<String>,
    pub aggregates: Vec<Aggregate>,
    pub curves: Vec<CurvePoint>,
    pub config: RunConfig,
    pub metadata: RunMetadata,
}

impl MonteCarloReport {
    pub fn aggregate(&self, estimator: EstimatorKind, domain: EvalDomain) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.estimator == estimator && a.domain == domain)
    }
}

/// Worker count: `SRE_THREADS` when set to a positive integer, otherwise
/// rayon's default.
pub fn thread_count() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(SreError::Config(format!(
                "{THREADS_ENV} must be a positive integer, got {v:?}"
            ))),
        },
        Err(_) => Ok(rayon::current_num_threads()),
    }
}

/// Runs every trial (trial `r` draws from stream `r` of the base seed) and
/// aggregates the results. Trial order never affects the report.
pub fn run_monte_carlo(config: &RunConfig) -> Result<MonteCarloReport> {
    config.validate()?;
    let experiment = build_experiment(config)?;
    let threads = thread_count()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| SreError::Config(format!("thread pool: {e}")))?;
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let clock = Instant::now();
    let results: Vec<Result<Vec<CurvePoint>>> = pool.install(|| {
        (0..config.trials)
            .into_par_iter()
            .map(|trial| {
                let mut rng = SeededRng::new(config.base_seed, trial);
                experiment
                    .run_trial(trial, &config.estimators, &mut rng)
                    .map_err(|e| e.in_trial(trial))
            })
            .collect()
    });
    let mut curves = Vec::new();
    for r in results {
        curves.extend(r?);
    }
    let aggregates = metrics(&curves)?;
    Ok(MonteCarloReport {
        experiment: config.experiment,
        scenario: config.scenario,
        trials: config.trials,
        base_seed: config.base_seed,
        notes: experiment.notes(),
        aggregates,
        curves,
        config: config.clone(),
        metadata: RunMetadata {
            software_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix_seconds: started,
            wall_time_seconds: clock.elapsed().as_secs_f64(),
            threads,
        },
    })
}

/// Seventeen significant digits.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_summary<W: Write>(report: &MonteCarloReport, mut w: W) -> Result<()> {
    writeln!(w, "experiment,scenario,estimator,domain,bias,variance,mse,trials,seed")?;
    for a in &report.aggregates {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            report.experiment,
            report.scenario,
            a.estimator.as_str(),
            a.domain.as_str(),
            num(a.bias),
            num(a.variance),
            num(a.mse),
            a.trials,
            report.base_seed
        )?;
    }
    Ok(())
}

pub fn write_curves<W: Write>(curves: &[CurvePoint], mut w: W) -> Result<()> {
    writeln!(w, "trial,estimator,domain,x,truth,prediction")?;
    for c in curves {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            c.trial,
            c.estimator.as_str(),
            c.domain.as_str(),
            num(c.x),
            num(c.truth),
            num(c.prediction)
        )?;
    }
    Ok(())
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<fs::File>) -> Result<()>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Writes the four run artifacts into `out_dir`, creating it if needed. On
/// failure every artifact already written is removed.
pub fn emit_outputs(report: &MonteCarloReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let result = (|| -> Result<()> {
        let path = out_dir.join(SUMMARY_FILE);
        written.push(path.clone());
        write_file(&path, |w| write_summary(report, w))?;
        let path = out_dir.join(CURVES_FILE);
        written.push(path.clone());
        write_file(&path, |w| write_curves(&report.curves, w))?;
        let path = out_dir.join(SNAPSHOT_FILE);
        written.push(path.clone());
        // The output location is not part of what determines the results.
        let snapshot = RunConfig {
            output_dir: None,
            ..report.config.clone()
        }
        .canonical()?;
        write_file(&path, |w| Ok(w.write_all(snapshot.as_bytes())?))?;
        let path = out_dir.join(REPORT_FILE);
        written.push(path.clone());
        write_file(&path, |w| {
            serde_json::to_writer_pretty(&mut *w, report)
                .map_err(|e| SreError::Io(std::io::Error::other(e)))
        })?;
        Ok(())
    })();
    match result {
        Ok(()) => Ok(written),
        Err(e) => {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            Err(e)
        }
    }
}

/// Removes any artifacts of an earlier run so a failed run leaves nothing
/// that could be mistaken for its output.
pub fn clear_outputs(out_dir: &Path) -> Result<()> {
    for name in [SUMMARY_FILE, CURVES_FILE, SNAPSHOT_FILE, REPORT_FILE] {
        match fs::remove_file(out_dir.join(name)) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

/// Runs a config and writes its artifacts. A failing run leaves no
/// artifacts in `out_dir`.
pub fn run_to_dir(config: &RunConfig, out_dir: &Path) -> Result<MonteCarloReport> {
    let report = match run_monte_carlo(config) {
        Ok(r) => r,
        Err(e) => {
            clear_outputs(out_dir)?;
            return Err(e);
        }
    };
    emit_outputs(&report, out_dir)?;
    Ok(report)
}

/// Recomputes the aggregates from a `curves.csv` body.
pub fn metrics_from_curves_csv(text: &str) -> Result<Vec<Aggregate>> {
    let mut curves = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || SreError::InvalidArgument(format!("curves.csv line {}: {line:?}", i + 1));
        if f.len() != 6 {
            return Err(bad());
        }
        let parse = |s: &str| s.parse::<f64>().map_err(|_| bad());
        curves.push(CurvePoint {
            trial: f[0].parse().map_err(|_| bad())?,
            estimator: EstimatorKind::parse(f[1]).ok_or_else(bad)?,
            domain: match f[2] {
                "in" => EvalDomain::In,
                "out" => EvalDomain::Out,
                _ => return Err(bad()),
            },
            x: parse(f[3])?,
            truth: parse(f[4])?,
            prediction: parse(f[5])?,
        });
    }
    metrics(&curves)
}
