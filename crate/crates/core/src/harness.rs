//! Monte Carlo experiment drivers and summary statistics.
//!
//! A study is a list of series; each series runs a roster of strategies on
//! one simulator configuration. Path `i` of every configuration uses the
//! same seed, so all points of a study share their rate paths.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::demand::{DemandCurve, IntensityParams, SizeMeasure};
use crate::error::{Error, Result};
use crate::hjb::{DEFAULT_HALF_WIDTH_STEPS, DEFAULT_TIME_STEPS};
use crate::sim::{self, ArbitrageConfig, PathResult, SimConfig};
use crate::strategies::{BuildContext, GridProvider, Market, Strategy, StrategyConfig, StrategyRegistry};
use crate::units::{annual_vol_to_daily, DAYS_PER_YEAR, SECONDS_PER_DAY};

pub const DEFAULT_PATHS: usize = 1000;
pub const DEFAULT_SEED: u64 = 20_210_501;
pub const DEFAULT_ARBITRAGE_COST: f64 = 0.00075;

/// Base parameters shared by every configuration of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub sim: SimConfig,
    /// HJB grid half-width in grid steps.
    pub half_width_steps: usize,
    pub n_time: usize,
    pub paths: usize,
    pub seed: u64,
}

impl Scenario {
    /// ETH/USD pool: rate 1600, 2,000,000 USD and 1250 ETH, 4000 USD trades
    /// arriving at up to 100 per day and side with `alpha = -1.8`,
    /// `beta = 1300`, volatility 1 per square-root year, no drift, half a
    /// day, one-second steps.
    pub fn reference() -> Self {
        let p = IntensityParams::new(100.0, -1.8, 1300.0).expect("valid reference curve");
        let demand = DemandCurve::uniform(SizeMeasure::dirac(4000.0).expect("valid size"), p, p)
            .expect("valid reference demand");
        Scenario {
            sim: SimConfig {
                market: Market {
                    s0: 1600.0,
                    mu: 0.0,
                    sigma: annual_vol_to_daily(1.0),
                    horizon: 0.5,
                },
                demand,
                q0: 2_000_000.0,
                q1: 1250.0,
                dt: 1.0 / SECONDS_PER_DAY,
                lag_seconds: 0.0,
                arbitrage: None,
            },
            half_width_steps: DEFAULT_HALF_WIDTH_STEPS,
            n_time: DEFAULT_TIME_STEPS,
            paths: DEFAULT_PATHS,
            seed: DEFAULT_SEED,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        if self.paths < 2 {
            return Err(Error::Config(format!("at least 2 paths required, got {}", self.paths)));
        }
        if self.half_width_steps == 0 || self.n_time == 0 {
            return Err(Error::Config("HJB grid sizes must be >= 1".into()));
        }
        Ok(())
    }

    pub fn context(&self, grids: Arc<dyn GridProvider>) -> BuildContext {
        BuildContext {
            market: self.sim.market,
            demand: self.sim.demand.clone(),
            q0: self.sim.q0,
            q1: self.sim.q1,
            half_width_steps: self.half_width_steps,
            n_time: self.n_time,
            grids,
        }
    }
}

/// Simulator changes applied to one series.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimOverrides {
    pub lag_seconds: Option<f64>,
    /// Proportional arbitrage cost; enables the arbitrageur.
    pub arbitrage_cost: Option<f64>,
}

impl SimOverrides {
    pub fn apply(&self, base: &SimConfig) -> SimConfig {
        let mut cfg = base.clone();
        if let Some(l) = self.lag_seconds {
            cfg.lag_seconds = l;
        }
        if let Some(c) = self.arbitrage_cost {
            cfg.arbitrage = Some(ArbitrageConfig::new(c));
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSpec {
    pub name: String,
    #[serde(default)]
    pub sim: SimOverrides,
    pub strategies: Vec<StrategyConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub scenario: Scenario,
    pub series: Vec<SeriesSpec>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        for s in &self.series {
            if s.name.is_empty() || s.name.contains(['/', ',', ' ']) {
                return Err(Error::Config(format!("invalid series name `{}`", s.name)));
            }
            let mut gammas = Vec::new();
            for c in &s.strategies {
                if let Some(g) = c.params.get("gamma") {
                    let g = g.as_float().or_else(|| g.as_integer().map(|i| i as f64));
                    match g {
                        Some(g) if g >= 0.0 => {
                            if gammas.contains(&g) {
                                return Err(Error::Config(format!("duplicate gamma {g} in series `{}`", s.name)));
                            }
                            gammas.push(g);
                        }
                        _ => return Err(Error::Config(format!("gamma must be >= 0 in series `{}`", s.name))),
                    }
                }
            }
            SimOverrides::apply(&s.sim, &self.scenario.sim).validate()?;
        }
        Ok(())
    }
}

/// Summary statistics of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub label: String,
    pub gamma: Option<f64>,
    pub mean: f64,
    pub std: f64,
    pub se_mean: f64,
    pub se_std: f64,
    pub n: usize,
    pub mean_taker_fills: f64,
    pub mean_arbitrage_trades: f64,
    pub mean_arbitrage_volume: f64,
    pub boundary_hits: usize,
    pub arbitrage_cap_hits: usize,
    pub max_band_excess: f64,
    pub mean_markup_leg: f64,
    pub mean_drift_leg: f64,
    pub mean_brownian_leg: f64,
    pub mean_execution_leg: f64,
}

/// Sample statistics with `N - 1` normalization; `se_std` is the
/// normal-theory standard error `std / sqrt(2 (N - 1))`.
pub fn summarize(label: &str, gamma: Option<f64>, paths: &[PathResult]) -> FrontierPoint {
    let n = paths.len();
    let nf = n as f64;
    let mean_of = |f: &dyn Fn(&PathResult) -> f64| paths.iter().map(f).sum::<f64>() / nf;
    let mean = mean_of(&|p| p.excess_pnl);
    let var = if n > 1 {
        paths.iter().map(|p| (p.excess_pnl - mean).powi(2)).sum::<f64>() / (nf - 1.0)
    } else {
        0.0
    };
    let std = var.sqrt();
    FrontierPoint {
        label: label.to_string(),
        gamma,
        mean,
        std,
        se_mean: std / nf.sqrt(),
        se_std: if n > 1 { std / (2.0 * (nf - 1.0)).sqrt() } else { 0.0 },
        n,
        mean_taker_fills: mean_of(&|p| p.taker_fills() as f64),
        mean_arbitrage_trades: mean_of(&|p| p.arbitrage_trades as f64),
        mean_arbitrage_volume: mean_of(&|p| p.arbitrage_volume),
        boundary_hits: paths.iter().filter(|p| p.boundary_hit).count(),
        arbitrage_cap_hits: paths.iter().filter(|p| p.arbitrage_cap_hit).count(),
        max_band_excess: paths.iter().map(|p| p.max_band_excess).fold(0.0, f64::max),
        mean_markup_leg: mean_of(&|p| p.markup_leg),
        mean_drift_leg: mean_of(&|p| p.drift_leg),
        mean_brownian_leg: mean_of(&|p| p.brownian_leg),
        mean_execution_leg: mean_of(&|p| p.execution_leg),
    }
}

/// `sqrt(a^2 + b^2)`.
pub fn pooled_se(a: f64, b: f64) -> f64 {
    a.hypot(b)
}

/// Frontier mean and its standard error at `std`, linearly interpolated
/// between points sorted by std. Below the least risky point the frontier
/// runs to the no-trade origin (0, 0); above the riskiest point it is held
/// at that point.
pub fn frontier_at_std(frontier: &[FrontierPoint], std: f64) -> (f64, f64) {
    let mut pts: Vec<&FrontierPoint> = frontier.iter().collect();
    pts.sort_by(|a, b| a.std.total_cmp(&b.std));
    let first = pts[0];
    let last = pts[pts.len() - 1];
    if std <= first.std {
        if std <= 0.0 || first.std <= 0.0 {
            return if first.std <= 0.0 { (first.mean, first.se_mean) } else { (0.0, 0.0) };
        }
        let t = std / first.std;
        return (t * first.mean, t * first.se_mean);
    }
    if std >= last.std {
        return (last.mean, last.se_mean);
    }
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if std <= b.std {
            let t = if b.std > a.std { (std - a.std) / (b.std - a.std) } else { 0.0 };
            return (a.mean + t * (b.mean - a.mean), a.se_mean + t * (b.se_mean - a.se_mean));
        }
    }
    (last.mean, last.se_mean)
}

/// Paths and summary of one strategy on one configuration.
#[derive(Debug, Clone)]
pub struct Batch {
    pub point: FrontierPoint,
    pub paths: Vec<PathResult>,
}

/// Simulate `paths` seeded paths of `strategy`; the first failing path
/// aborts the batch.
pub fn run_batch(cfg: &SimConfig, strategy: &dyn Strategy, paths: usize, seed: u64, label: &str) -> Result<Batch> {
    cfg.validate()?;
    let results: Vec<PathResult> = (0..paths)
        .into_par_iter()
        .map(|i| sim::simulate_path(cfg, strategy, i, seed, None))
        .collect::<Result<_>>()?;
    let point = summarize(label, strategy.gamma(), &results);
    log::info!(
        "{label}: mean {:.3} std {:.3} (n = {}, fills {:.1})",
        point.mean,
        point.std,
        point.n,
        point.mean_taker_fills
    );
    Ok(Batch { point, paths: results })
}

#[derive(Debug, Clone)]
pub struct SeriesResult {
    pub name: String,
    pub batches: Vec<Batch>,
}

impl SeriesResult {
    /// Summaries sorted by std.
    pub fn points(&self) -> Vec<FrontierPoint> {
        let mut pts: Vec<FrontierPoint> = self.batches.iter().map(|b| b.point.clone()).collect();
        pts.sort_by(|a, b| a.std.total_cmp(&b.std));
        pts
    }

    pub fn point(&self, label: &str) -> Option<&FrontierPoint> {
        let full = format!("{}/{label}", self.name);
        self.batches.iter().map(|b| &b.point).find(|p| p.label == full)
    }
}

#[derive(Debug, Clone)]
pub struct StudyResult {
    pub name: String,
    pub series: Vec<SeriesResult>,
}

impl StudyResult {
    pub fn series(&self, name: &str) -> Option<&SeriesResult> {
        self.series.iter().find(|s| s.name == name)
    }
}

/// Run every series of `spec`. Strategies are built lazily, one at a time,
/// so that at most the solves memoized by `grids` are held in memory.
pub fn run_study(spec: &ExperimentSpec, registry: &StrategyRegistry, grids: Arc<dyn GridProvider>) -> Result<StudyResult> {
    spec.validate()?;
    let ctx = spec.scenario.context(grids);
    let mut series = Vec::new();
    for s in &spec.series {
        let cfg = s.sim.apply(&spec.scenario.sim);
        let mut batches = Vec::new();
        for sc in &s.strategies {
            let strategy = registry.build(sc, &ctx)?;
            let label = format!("{}/{}", s.name, strategy.label());
            batches.push(run_batch(&cfg, strategy.as_ref(), spec.scenario.paths, spec.scenario.seed, &label)?);
        }
        series.push(SeriesResult {
            name: s.name.clone(),
            batches,
        });
    }
    Ok(StudyResult {
        name: spec.name.clone(),
        series,
    })
}

/// Risk aversions of the frontier sweeps, per unit of currency 0.
pub const FRONTIER_GAMMAS: [f64; 10] = [0.0, 1e-6, 3e-6, 1e-5, 3e-5, 1e-4, 3e-4, 1e-3, 1e-2, 1e-1];
pub const CPMM_FEES_BPS: [f64; 6] = [1.0, 5.0, 10.0, 30.0, 50.0, 100.0];
pub const STABLESWAP_AMPS: [f64; 3] = [10.0, 100.0, 1000.0];
pub const STABLESWAP_FEE_BPS: f64 = 4.0;
pub const CONSTANT_MARKUPS_BPS: [f64; 6] = [0.0, 5.0, 10.0, 15.0, 20.0, 30.0];
pub const LAGS_SECONDS: [f64; 6] = [0.0, 10.0, 30.0, 60.0, 300.0, 1800.0];

fn table(entries: &[(&str, toml::Value)]) -> toml::Table {
    entries.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

/// One HJB strategy per risk aversion, with extra parameters.
pub fn hjb_roster(gammas: &[f64], extra: &toml::Table) -> Vec<StrategyConfig> {
    gammas
        .iter()
        .map(|&g| {
            let mut params = extra.clone();
            params.insert("gamma".into(), toml::Value::Float(g));
            StrategyConfig::new("hjb", params).labeled(format!("gamma={g:e}"))
        })
        .collect()
}

pub fn cpmm_roster(fees_bps: &[f64]) -> Vec<StrategyConfig> {
    fees_bps
        .iter()
        .map(|&f| {
            StrategyConfig::new("cpmm", table(&[("fee", toml::Value::Float(f * 1e-4))])).labeled(format!("fee={f}bps"))
        })
        .collect()
}

pub fn stableswap_roster(amps: &[f64], fee_bps: f64) -> Vec<StrategyConfig> {
    amps.iter()
        .map(|&a| {
            StrategyConfig::new(
                "stableswap",
                table(&[("amp", toml::Value::Float(a)), ("fee", toml::Value::Float(fee_bps * 1e-4))]),
            )
            .labeled(format!("A={a}"))
        })
        .collect()
}

pub fn constant_roster(markups_bps: &[f64]) -> Vec<StrategyConfig> {
    markups_bps
        .iter()
        .map(|&d| {
            StrategyConfig::new("constant", table(&[("markup", toml::Value::Float(d * 1e-4))]))
                .labeled(format!("delta={d}bps"))
        })
        .collect()
}

fn series(name: &str, sim: SimOverrides, strategies: Vec<StrategyConfig>) -> SeriesSpec {
    SeriesSpec {
        name: name.to_string(),
        sim,
        strategies,
    }
}

fn lag_name(seconds: f64) -> String {
    format!("lag{seconds}s")
}

/// Preconfigured study reproducing figure `id` (1 to 6) on `scenario`.
///
/// 1. frontier, CPMMs across fees, stableswap pools, constant markups;
/// 2. frontier and a rule assuming 50 trades per day instead of 100;
/// 3. frontier and a rule assuming volatility 1.2 per square-root year;
/// 4. frontier and a rule assuming drift 0.4 per year (positive risk
///    aversions only);
/// 5. frontiers for oracle delays of 0, 10 s, 30 s, 1 min, 5 min, 30 min;
/// 6. frontier, 10 s delay with and without arbitrageurs, and CFMMs with
///    arbitrageurs.
pub fn figure(id: u32, scenario: &Scenario) -> Result<ExperimentSpec> {
    let none = toml::Table::new();
    let frontier = || series("frontier", SimOverrides::default(), hjb_roster(&FRONTIER_GAMMAS, &none));
    let positive: Vec<f64> = FRONTIER_GAMMAS.iter().copied().filter(|&g| g > 0.0).collect();
    let arb = || SimOverrides {
        arbitrage_cost: Some(DEFAULT_ARBITRAGE_COST),
        ..Default::default()
    };
    let series = match id {
        1 => vec![
            frontier(),
            series("cpmm", SimOverrides::default(), cpmm_roster(&CPMM_FEES_BPS)),
            series(
                "stableswap",
                SimOverrides::default(),
                stableswap_roster(&STABLESWAP_AMPS, STABLESWAP_FEE_BPS),
            ),
            series("constant", SimOverrides::default(), constant_roster(&CONSTANT_MARKUPS_BPS)),
        ],
        2 => vec![
            frontier(),
            series(
                "lambda50",
                SimOverrides::default(),
                hjb_roster(&FRONTIER_GAMMAS, &table(&[("lambda", toml::Value::Float(50.0))])),
            ),
        ],
        3 => vec![
            frontier(),
            series(
                "sigma1.2",
                SimOverrides::default(),
                hjb_roster(
                    &FRONTIER_GAMMAS,
                    &table(&[("sigma", toml::Value::Float(annual_vol_to_daily(1.2)))]),
                ),
            ),
        ],
        4 => vec![
            frontier(),
            series(
                "mu0.4",
                SimOverrides::default(),
                hjb_roster(&positive, &table(&[("mu", toml::Value::Float(0.4 / DAYS_PER_YEAR))])),
            ),
        ],
        5 => LAGS_SECONDS
            .iter()
            .map(|&l| {
                series(
                    &lag_name(l),
                    SimOverrides {
                        lag_seconds: Some(l),
                        ..Default::default()
                    },
                    hjb_roster(&FRONTIER_GAMMAS, &none),
                )
            })
            .collect(),
        6 => vec![
            frontier(),
            series(
                "lag10s",
                SimOverrides {
                    lag_seconds: Some(10.0),
                    ..Default::default()
                },
                hjb_roster(&FRONTIER_GAMMAS, &none),
            ),
            series(
                "lag10s_arb",
                SimOverrides {
                    lag_seconds: Some(10.0),
                    ..arb()
                },
                hjb_roster(&FRONTIER_GAMMAS, &none),
            ),
            series("cpmm_arb", arb(), cpmm_roster(&CPMM_FEES_BPS)),
            series("stableswap_arb", arb(), stableswap_roster(&STABLESWAP_AMPS, STABLESWAP_FEE_BPS)),
        ],
        other => return Err(Error::Config(format!("unknown figure {other}; expected 1 to 6"))),
    };
    Ok(ExperimentSpec {
        name: format!("figure{id}"),
        scenario: scenario.clone(),
        series,
    })
}

/// Frontier sweep alone.
pub fn frontier_study(scenario: &Scenario, gammas: &[f64]) -> ExperimentSpec {
    ExperimentSpec {
        name: "frontier".into(),
        scenario: scenario.clone(),
        series: vec![series("frontier", SimOverrides::default(), hjb_roster(gammas, &toml::Table::new()))],
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|g| g.to_string()).unwrap_or_default()
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?))
}

#[derive(Serialize, Deserialize)]
struct PathRow {
    label: String,
    path: usize,
    seed: u64,
    final_rate: f64,
    excess_pnl: f64,
    markup_leg: f64,
    drift_leg: f64,
    brownian_leg: f64,
    execution_leg: f64,
    taker_fills_zero_for_one: u64,
    taker_fills_one_for_zero: u64,
    arbitrage_trades: u64,
    arbitrage_volume: f64,
    min_q0: f64,
    max_q0: f64,
    min_q1: f64,
    max_q1: f64,
    boundary_hit: bool,
    arbitrage_cap_hit: bool,
    max_band_excess: f64,
    accounting_error: f64,
}

impl PathRow {
    fn new(label: &str, r: &PathResult) -> Self {
        PathRow {
            label: label.to_string(),
            path: r.path,
            seed: r.seed,
            final_rate: r.final_rate,
            excess_pnl: r.excess_pnl,
            markup_leg: r.markup_leg,
            drift_leg: r.drift_leg,
            brownian_leg: r.brownian_leg,
            execution_leg: r.execution_leg,
            taker_fills_zero_for_one: r.taker_fills_zero_for_one,
            taker_fills_one_for_zero: r.taker_fills_one_for_zero,
            arbitrage_trades: r.arbitrage_trades,
            arbitrage_volume: r.arbitrage_volume,
            min_q0: r.min_q0,
            max_q0: r.max_q0,
            min_q1: r.min_q1,
            max_q1: r.max_q1,
            boundary_hit: r.boundary_hit,
            arbitrage_cap_hit: r.arbitrage_cap_hit,
            max_band_excess: r.max_band_excess,
            accounting_error: r.accounting_error,
        }
    }

    fn result(&self) -> PathResult {
        PathResult {
            path: self.path,
            seed: self.seed,
            final_rate: self.final_rate,
            excess_pnl: self.excess_pnl,
            markup_leg: self.markup_leg,
            drift_leg: self.drift_leg,
            brownian_leg: self.brownian_leg,
            execution_leg: self.execution_leg,
            taker_fills_zero_for_one: self.taker_fills_zero_for_one,
            taker_fills_one_for_zero: self.taker_fills_one_for_zero,
            arbitrage_trades: self.arbitrage_trades,
            arbitrage_volume: self.arbitrage_volume,
            min_q0: self.min_q0,
            max_q0: self.max_q0,
            min_q1: self.min_q1,
            max_q1: self.max_q1,
            boundary_hit: self.boundary_hit,
            arbitrage_cap_hit: self.arbitrage_cap_hit,
            max_band_excess: self.max_band_excess,
            accounting_error: self.accounting_error,
        }
    }
}

/// Write `frontier.csv`, `diagnostics.csv`, `paths.csv` and one
/// `<series>.dat` (std, mean) file per series into `dir`.
pub fn write_study(dir: &Path, study: &StudyResult) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let points: Vec<FrontierPoint> = study.series.iter().flat_map(|s| s.points()).collect();
    write_frontier(&dir.join("frontier.csv"), &points)?;
    write_diagnostics(&dir.join("diagnostics.csv"), &points)?;

    let paths_file = dir.join("paths.csv");
    let mut w = csv::Writer::from_path(&paths_file)?;
    for s in &study.series {
        for b in &s.batches {
            for r in &b.paths {
                w.serialize(PathRow::new(&b.point.label, r))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(&paths_file, e))?;

    for s in &study.series {
        let path = dir.join(format!("{}.dat", s.name));
        let mut f = create(&path)?;
        let mut body = format!("# {}: std mean (currency 0)\n", s.name);
        for p in s.points() {
            body.push_str(&format!("{} {}\n", p.std, p.mean));
        }
        f.write_all(body.as_bytes()).map_err(|e| Error::io(&path, e))?;
        f.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

pub fn write_frontier(path: &Path, points: &[FrontierPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["label", "gamma", "mean", "std", "se_mean", "se_std", "n"])?;
    for p in points {
        w.write_record([
            p.label.clone(),
            fmt_opt(p.gamma),
            p.mean.to_string(),
            p.std.to_string(),
            p.se_mean.to_string(),
            p.se_std.to_string(),
            p.n.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_diagnostics(path: &Path, points: &[FrontierPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "label",
        "mean_taker_fills",
        "mean_arbitrage_trades",
        "mean_arbitrage_volume",
        "boundary_hits",
        "arbitrage_cap_hits",
        "max_band_excess",
        "mean_markup_leg",
        "mean_drift_leg",
        "mean_brownian_leg",
        "mean_execution_leg",
    ])?;
    for p in points {
        w.write_record([
            p.label.clone(),
            p.mean_taker_fills.to_string(),
            p.mean_arbitrage_trades.to_string(),
            p.mean_arbitrage_volume.to_string(),
            p.boundary_hits.to_string(),
            p.arbitrage_cap_hits.to_string(),
            p.max_band_excess.to_string(),
            p.mean_markup_leg.to_string(),
            p.mean_drift_leg.to_string(),
            p.mean_brownian_leg.to_string(),
            p.mean_execution_leg.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Recompute summaries from a `paths.csv`, in order of first appearance
/// and sorted by std within each series.
pub fn summarize_paths_file(path: &Path) -> Result<Vec<FrontierPoint>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<PathResult>> = BTreeMap::new();
    for row in r.deserialize() {
        let row: PathRow = row?;
        if !groups.contains_key(&row.label) {
            order.push(row.label.clone());
        }
        let result = row.result();
        groups.entry(row.label).or_default().push(result);
    }
    let gamma_of = |label: &str| {
        label
            .rsplit('/')
            .next()
            .and_then(|p| p.strip_prefix("gamma="))
            .and_then(|g| g.parse::<f64>().ok())
    };
    let mut out: Vec<FrontierPoint> = Vec::new();
    let mut current: Option<String> = None;
    let mut chunk: Vec<FrontierPoint> = Vec::new();
    for label in order {
        let series = label.split('/').next().unwrap_or("").to_string();
        if current.as_ref() != Some(&series) {
            chunk.sort_by(|a, b| a.std.total_cmp(&b.std));
            out.append(&mut chunk);
            current = Some(series);
        }
        chunk.push(summarize(&label, gamma_of(&label), &groups[&label]));
    }
    chunk.sort_by(|a, b| a.std.total_cmp(&b.std));
    out.append(&mut chunk);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategies::{ConstantStrategy, MemoryGrids};

    fn quick_scenario() -> Scenario {
        let mut s = Scenario::reference();
        s.sim.market.horizon = 0.05;
        s.sim.dt = 10.0 / SECONDS_PER_DAY;
        s.half_width_steps = 40;
        s.n_time = 100;
        s.paths = 24;
        s
    }

    fn result(x: f64) -> PathResult {
        let mut r = sim::simulate_path(
            &quick_scenario().sim,
            &ConstantStrategy::symmetric("c", 0.0).unwrap(),
            0,
            0,
            None,
        )
        .unwrap();
        r.excess_pnl = x;
        r
    }

    #[test]
    fn summary_statistics() {
        let rs: Vec<_> = [1.0, 2.0, 3.0, 4.0].iter().map(|&x| result(x)).collect();
        let p = summarize("s/a", None, &rs);
        assert_eq!(p.mean, 2.5);
        let std = (5.0f64 / 3.0).sqrt();
        assert!((p.std - std).abs() < 1e-15);
        assert!((p.se_mean - std / 2.0).abs() < 1e-15);
        assert!((p.se_std - std / 6f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn interpolation_runs_to_origin_and_clamps_above() {
        let mk = |mean: f64, std: f64| FrontierPoint {
            mean,
            std,
            se_mean: 1.0,
            ..summarize("x", None, &[result(0.0), result(0.0)])
        };
        let f = vec![mk(10.0, 100.0), mk(0.0, 0.0), mk(20.0, 300.0)];
        assert_eq!(frontier_at_std(&f, 50.0).0, 5.0);
        assert_eq!(frontier_at_std(&f, 200.0).0, 15.0);
        assert_eq!(frontier_at_std(&f, 1000.0).0, 20.0);
        assert_eq!(frontier_at_std(&f, -1.0).0, 0.0);
        let g = vec![mk(10.0, 100.0), mk(20.0, 300.0)];
        assert_eq!(frontier_at_std(&g, 50.0), (5.0, 0.5));
        assert_eq!(frontier_at_std(&g, 0.0), (0.0, 0.0));
        assert!((pooled_se(3.0, 4.0) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn zero_demand_batch_is_degenerate() {
        let mut scenario = quick_scenario();
        scenario.sim.demand = scenario.sim.demand.with_lambda(0.0);
        let s = ConstantStrategy::symmetric("c", 0.001).unwrap();
        let b = run_batch(&scenario.sim, &s, 8, 1, "zero").unwrap();
        assert_eq!((b.point.mean, b.point.std), (0.0, 0.0));
    }

    #[test]
    fn study_outputs_reproduce_from_raw_paths() {
        let scenario = quick_scenario();
        let spec = ExperimentSpec {
            name: "t".into(),
            scenario: scenario.clone(),
            series: vec![
                SeriesSpec {
                    name: "frontier".into(),
                    sim: SimOverrides::default(),
                    strategies: hjb_roster(&[0.0, 1e-4], &toml::Table::new()),
                },
                SeriesSpec {
                    name: "cpmm".into(),
                    sim: SimOverrides::default(),
                    strategies: cpmm_roster(&[30.0]),
                },
            ],
        };
        let grids: Arc<dyn GridProvider> = Arc::new(MemoryGrids::default());
        let study = run_study(&spec, &StrategyRegistry::with_builtins(), grids).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_study(dir.path(), &study).unwrap();
        let again = summarize_paths_file(&dir.path().join("paths.csv")).unwrap();
        let direct: Vec<FrontierPoint> = study.series.iter().flat_map(|s| s.points()).collect();
        assert_eq!(again, direct);
        let header = fs::read_to_string(dir.path().join("frontier.csv")).unwrap();
        assert!(header.starts_with("label,gamma,mean,std,se_mean,se_std,n\n"));
        assert!(header.contains("frontier/gamma=1e-4,0.0001,"));
        assert!(dir.path().join("cpmm.dat").exists());
    }

    #[test]
    fn figures_are_preconfigured() {
        let s = Scenario::reference();
        assert_eq!(figure(1, &s).unwrap().series.len(), 4);
        assert_eq!(figure(5, &s).unwrap().series.len(), 6);
        let f4 = figure(4, &s).unwrap();
        assert!(f4.series[1].strategies.iter().all(|c| c.params["gamma"].as_float().unwrap() > 0.0));
        assert!(matches!(figure(7, &s), Err(Error::Config(_))));
        figure(6, &s).unwrap().validate().unwrap();
    }

    #[test]
    fn duplicate_gammas_rejected() {
        let mut spec = frontier_study(&quick_scenario(), &[1e-5, 1e-5]);
        assert!(spec.validate().is_err());
        spec.scenario.paths = 1;
        assert!(spec.validate().is_err());
    }
}
