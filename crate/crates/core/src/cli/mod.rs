//! Command-line interface: configuration, cached solves, studies and
//! result files.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 numerical
//! failure.

mod cache;
mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub use self::cache::{CacheOutcome, DiskGrids};
pub use self::config::RunConfig;
use crate::cfmm::LevelSetCurve;
use crate::demand::Side;
use crate::error::{Error, Result};
use crate::harness::{self, ExperimentSpec, Scenario, StudyResult};
use crate::sim;
use crate::strategies::{GridProvider, HjbFactory, StrategyRegistry};

pub const DEFAULT_OUT: &str = "out";
pub const DEFAULT_CACHE: &str = ".lpfrontier-cache";

#[derive(Debug, Parser)]
#[command(name = "lpfrontier", version, about = "Liquidity-provider payoff analysis for AMM pricing rules")]
pub struct Cli {
    /// TOML run configuration (see configs/reference.toml).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; path i uses seed XOR i.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Monte Carlo paths per configuration.
    #[arg(long, global = true)]
    pub paths: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "LPFRONTIER_OUT")]
    pub out: Option<PathBuf>,
    /// Directory of cached HJB solves.
    #[arg(long, global = true, env = "LPFRONTIER_CACHE")]
    pub cache: Option<PathBuf>,
    /// Write the trade log of path 0 of every configuration.
    #[arg(long, global = true)]
    pub event_log: bool,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the HJB equation for one risk aversion and cache the result.
    Solve {
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Efficient frontier over the configured risk aversions.
    Frontier,
    /// Preconfigured study reproducing one figure.
    Figure {
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=6))]
        figure: u32,
    },
    /// Series and strategies declared in the configuration file.
    Run,
    /// Excess PnL and LVR rate of a fee-less CFMM over a grid of rates.
    CfmmPayoff {
        #[arg(long, value_enum, default_value_t = CurveKind::Cpmm)]
        curve: CurveKind,
        /// Stableswap amplification.
        #[arg(long, default_value_t = 100.0)]
        amp: f64,
        /// Smallest rate as a multiple of the initial rate.
        #[arg(long, default_value_t = 0.25)]
        ratio_min: f64,
        #[arg(long, default_value_t = 4.0)]
        ratio_max: f64,
        #[arg(long, default_value_t = 41)]
        points: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CurveKind {
    Cpmm,
    Stableswap,
}

/// Map an error to the process exit code.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        2
    } else {
        1
    }
}

struct Session {
    config: RunConfig,
    scenario: Scenario,
    out: PathBuf,
    grids: Arc<DiskGrids>,
    event_log: bool,
}

impl Session {
    fn open(cli: &Cli) -> Result<Self> {
        let mut config = match &cli.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if cli.seed.is_some() {
            config.seed = cli.seed;
        }
        if cli.paths.is_some() {
            config.paths = cli.paths;
        }
        let scenario = config.scenario()?;
        let out = cli
            .out
            .clone()
            .or_else(|| config.out.clone())
            .unwrap_or_else(|| DEFAULT_OUT.into());
        let cache = cli
            .cache
            .clone()
            .or_else(|| config.cache.clone())
            .unwrap_or_else(|| DEFAULT_CACHE.into());
        fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        Ok(Session {
            config,
            scenario,
            out,
            grids: Arc::new(DiskGrids::new(cache)?),
            event_log: cli.event_log,
        })
    }

    fn provider(&self) -> Arc<dyn GridProvider> {
        self.grids.clone()
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    code_version: &'a str,
    config_hash: String,
    seed: u64,
    paths: usize,
    outputs: Vec<String>,
}

fn hash_json<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_string(value).expect("configuration serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

fn write_manifest<T: Serialize>(dir: &Path, command: &str, resolved: &T, scenario: &Scenario) -> Result<()> {
    let mut outputs: Vec<String> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n != "manifest.json")
        .collect();
    outputs.sort();
    let m = Manifest {
        command,
        code_version: env!("CARGO_PKG_VERSION"),
        config_hash: hash_json(resolved),
        seed: scenario.seed,
        paths: scenario.paths,
        outputs,
    };
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&m).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Parse arguments, run the command and return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            exit_code(&e)
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let session = Session::open(cli)?;
    match &cli.command {
        Command::Solve { gamma } => cmd_solve(&session, *gamma).map(|_| ()),
        Command::Frontier => {
            let spec = harness::frontier_study(&session.scenario, &session.config.gammas());
            cmd_study(&session, "frontier", &spec)
        }
        Command::Figure { figure } => {
            let spec = harness::figure(*figure, &session.scenario)?;
            cmd_study(&session, &format!("figure {figure}"), &spec)
        }
        Command::Run => {
            let series = session.config.series_specs();
            if series.is_empty() {
                return Err(Error::Config("`run` needs [[series]] or [[strategies]] in the configuration".into()));
            }
            let spec = ExperimentSpec {
                name: "run".into(),
                scenario: session.scenario.clone(),
                series,
            };
            cmd_study(&session, "run", &spec)
        }
        Command::CfmmPayoff {
            curve,
            amp,
            ratio_min,
            ratio_max,
            points,
        } => cmd_cfmm_payoff(&session, *curve, *amp, *ratio_min, *ratio_max, *points),
    }
}

fn cmd_solve(session: &Session, gamma: Option<f64>) -> Result<CacheOutcome> {
    let gamma = gamma
        .or(session.config.hjb.gamma)
        .ok_or_else(|| Error::Config("`solve` needs --gamma or hjb.gamma".into()))?;
    let reduced = session.config.hjb.reduced;
    let ctx = session.scenario.context(session.provider());
    let problem = HjbFactory::problem(&ctx, gamma, None, None, None)?;
    let (solved, outcome) = session.grids.get_with_outcome(&problem, reduced)?;
    let (gp, mp) = session.grids.paths(&problem, reduced);
    println!("{outcome:?}: {} {}", gp.display(), mp.display());

    let path = session.out.join("solve.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let mut header = vec!["y".to_string(), "theta".to_string()];
    let atoms = problem.demand.measure().atoms();
    for a in atoms {
        for side in Side::BOTH {
            header.push(format!("markup_{}_{}", side.as_str(), a.size));
        }
    }
    w.write_record(&header)?;
    let grid = &solved.grid;
    for (i, y) in grid.ys().iter().enumerate() {
        let mut row = vec![y.to_string(), grid.at(0, i).to_string()];
        for k in 0..atoms.len() {
            for side in Side::BOTH {
                row.push(solved.table.get(0, i, k, side).to_string());
            }
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    let mid = grid.n_ys() / 2;
    println!("theta(0, 0) = {}", grid.at(0, mid));
    write_manifest(&session.out, "solve", &(&problem, reduced), &session.scenario)?;
    Ok(outcome)
}

fn cmd_study(session: &Session, command: &str, spec: &ExperimentSpec) -> Result<()> {
    let registry = StrategyRegistry::with_builtins();
    let study = harness::run_study(spec, &registry, session.provider())?;
    harness::write_study(&session.out, &study)?;
    if session.event_log {
        write_event_logs(session, spec, &registry)?;
    }
    print_summary(&study);
    write_manifest(&session.out, command, spec, &session.scenario)
}

fn write_event_logs(session: &Session, spec: &ExperimentSpec, registry: &StrategyRegistry) -> Result<()> {
    let dir = session.out.join("events");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let ctx = spec.scenario.context(session.provider());
    for s in &spec.series {
        let cfg = s.sim.apply(&spec.scenario.sim);
        for sc in &s.strategies {
            let strategy = registry.build(sc, &ctx)?;
            let mut log = Vec::new();
            sim::simulate_path(&cfg, strategy.as_ref(), 0, spec.scenario.seed, Some(&mut log))?;
            let name: String = format!("{}__{}", s.name, strategy.label())
                .chars()
                .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' || c == '_' { c } else { '_' })
                .collect();
            sim::write_events(&dir.join(format!("{name}.csv")), &log)?;
        }
    }
    Ok(())
}

fn print_summary(study: &StudyResult) {
    println!("{:<40} {:>14} {:>14} {:>10}", "label", "mean", "std", "se_mean");
    for s in &study.series {
        for p in s.points() {
            println!("{:<40} {:>14.3} {:>14.3} {:>10.3}", p.label, p.mean, p.std, p.se_mean);
        }
    }
}

fn cmd_cfmm_payoff(
    session: &Session,
    kind: CurveKind,
    amp: f64,
    ratio_min: f64,
    ratio_max: f64,
    points: usize,
) -> Result<()> {
    if !(ratio_min > 0.0 && ratio_max > ratio_min && points >= 2) {
        return Err(Error::Config("need 0 < ratio-min < ratio-max and at least 2 points".into()));
    }
    let sim = &session.scenario.sim;
    let s0 = sim.market.s0;
    let curve = match kind {
        CurveKind::Cpmm => LevelSetCurve::constant_product(sim.q0, sim.q1)?,
        CurveKind::Stableswap => LevelSetCurve::stableswap(amp, sim.q0, sim.q1, s0)?,
    };
    let sigma2 = sim.market.sigma * sim.market.sigma;
    let path = session.out.join("cfmm_payoff.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["rate", "ratio", "excess_pnl", "closed_form", "pool_value", "lvr_per_day"])?;
    let (lo, hi) = (ratio_min.ln(), ratio_max.ln());
    // Include the initial rate exactly when it lies on the grid.
    let mut ratios: Vec<f64> = (0..points)
        .map(|i| (lo + (hi - lo) * i as f64 / (points - 1) as f64).exp())
        .collect();
    if ratio_min < 1.0 && ratio_max > 1.0 && !ratios.contains(&1.0) {
        ratios.push(1.0);
        ratios.sort_by(f64::total_cmp);
    }
    for r in ratios {
        let st = s0 * r;
        let excess = crate::cfmm::excess_pnl_cfmm(&curve, s0, st)?;
        let closed = match curve {
            LevelSetCurve::ConstantProduct { k } => (-(k * s0).sqrt() * (r.sqrt() - 1.0).powi(2)).to_string(),
            _ => String::new(),
        };
        let point = curve.legendre_value(st)?;
        let lvr = -0.5 * curve.legendre_curvature(st)? * sigma2 * st * st;
        w.write_record([
            st.to_string(),
            r.to_string(),
            excess.to_string(),
            closed,
            point.pool_value().to_string(),
            lvr.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    write_manifest(
        &session.out,
        "cfmm-payoff",
        &(&curve, s0, ratio_min, ratio_max, points),
        &session.scenario,
    )
}
