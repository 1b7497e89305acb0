//! Run configuration file.
//!
//! Every section and key is optional; missing values fall back to the
//! reference scenario (see [`Scenario::reference`]). Unknown keys are
//! rejected. See `configs/reference.toml` for the documented schema.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::demand::{Atom, DemandCurve, IntensityParams, SizeMeasure, DEFAULT_MARKUP_FLOOR};
use crate::error::{Error, Result};
use crate::harness::{Scenario, SeriesSpec, SimOverrides, FRONTIER_GAMMAS};
use crate::sim::{ArbitrageConfig, DEFAULT_ARBITRAGE_ROUNDS};
use crate::strategies::StrategyConfig;
use crate::units::{Duration, Fraction, PerDay, Volatility, SECONDS_PER_DAY};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub out: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    #[serde(default)]
    pub market: MarketSection,
    #[serde(default)]
    pub pool: PoolSection,
    #[serde(default)]
    pub demand: DemandSection,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub hjb: HjbSection,
    #[serde(default)]
    pub frontier: FrontierSection,
    #[serde(default)]
    pub series: Vec<SeriesSection>,
    /// Roster run as one extra series named `strategies`.
    #[serde(default)]
    pub strategies: Vec<StrategyConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSection {
    pub s0: Option<f64>,
    pub mu: Option<PerDay>,
    pub sigma: Option<Volatility>,
    pub horizon: Option<Duration>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSection {
    pub q0: Option<f64>,
    pub q1: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSection {
    pub lambda: Option<PerDay>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub floor: Option<Fraction>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandSection {
    /// Trade sizes, currency-0 notional.
    pub sizes: Option<Vec<f64>>,
    /// Weights of the sizes; default 1 each.
    pub weights: Option<Vec<f64>>,
    pub lambda: Option<PerDay>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub floor: Option<Fraction>,
    /// Overrides for trades paying currency 0 (buying currency 1).
    pub zero_for_one: Option<CurveSection>,
    /// Overrides for trades paying currency 1.
    pub one_for_zero: Option<CurveSection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub dt: Option<Duration>,
    pub lag: Option<Duration>,
    /// Enables the arbitrageur with this external cost.
    pub arbitrage_cost: Option<Fraction>,
    pub arbitrage_rounds: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HjbSection {
    pub half_width_steps: Option<usize>,
    pub n_time: Option<usize>,
    /// Risk aversion solved by `solve`.
    pub gamma: Option<f64>,
    #[serde(default)]
    pub reduced: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontierSection {
    pub gammas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesSection {
    pub name: String,
    pub lag: Option<Duration>,
    pub arbitrage_cost: Option<Fraction>,
    #[serde(default)]
    pub strategies: Vec<StrategyConfig>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Base scenario with every configured override applied.
    pub fn scenario(&self) -> Result<Scenario> {
        let mut s = Scenario::reference();
        let m = &self.market;
        if let Some(v) = m.s0 {
            s.sim.market.s0 = v;
        }
        if let Some(v) = m.mu {
            s.sim.market.mu = v.get();
        }
        if let Some(v) = m.sigma {
            s.sim.market.sigma = v.get();
        }
        if let Some(v) = m.horizon {
            s.sim.market.horizon = v.get();
        }
        if let Some(v) = self.pool.q0 {
            s.sim.q0 = v;
        }
        if let Some(v) = self.pool.q1 {
            s.sim.q1 = v;
        }
        s.sim.demand = self.demand.build(&s.sim.demand)?;
        let sim = &self.simulation;
        if let Some(v) = sim.dt {
            s.sim.dt = v.get();
        }
        if let Some(v) = sim.lag {
            s.sim.lag_seconds = v.get() * SECONDS_PER_DAY;
        }
        if let Some(c) = sim.arbitrage_cost {
            s.sim.arbitrage = Some(ArbitrageConfig {
                cost: c.get(),
                max_rounds: sim.arbitrage_rounds.unwrap_or(DEFAULT_ARBITRAGE_ROUNDS),
            });
        } else if sim.arbitrage_rounds.is_some() {
            return Err(Error::Config("`arbitrage_rounds` requires `arbitrage_cost`".into()));
        }
        if let Some(v) = self.hjb.half_width_steps {
            s.half_width_steps = v;
        }
        if let Some(v) = self.hjb.n_time {
            s.n_time = v;
        }
        if let Some(v) = self.paths {
            s.paths = v;
        }
        if let Some(v) = self.seed {
            s.seed = v;
        }
        s.validate()?;
        Ok(s)
    }

    pub fn gammas(&self) -> Vec<f64> {
        self.frontier.gammas.clone().unwrap_or_else(|| FRONTIER_GAMMAS.to_vec())
    }

    /// Series declared in the file, plus the top-level roster.
    pub fn series_specs(&self) -> Vec<SeriesSpec> {
        let mut out: Vec<SeriesSpec> = self
            .series
            .iter()
            .map(|s| SeriesSpec {
                name: s.name.clone(),
                sim: SimOverrides {
                    lag_seconds: s.lag.map(|l| l.get() * SECONDS_PER_DAY),
                    arbitrage_cost: s.arbitrage_cost.map(Fraction::get),
                },
                strategies: s.strategies.clone(),
            })
            .collect();
        if !self.strategies.is_empty() {
            out.push(SeriesSpec {
                name: "strategies".into(),
                sim: SimOverrides::default(),
                strategies: self.strategies.clone(),
            });
        }
        out
    }
}

impl CurveSection {
    fn apply(&self, base: IntensityParams) -> Result<IntensityParams> {
        IntensityParams::with_floor(
            self.lambda.map(PerDay::get).unwrap_or(base.lambda),
            self.alpha.unwrap_or(base.alpha),
            self.beta.unwrap_or(base.beta),
            self.floor.map(Fraction::get).unwrap_or(base.floor),
        )
    }
}

impl DemandSection {
    fn build(&self, reference: &DemandCurve) -> Result<DemandCurve> {
        let measure = match (&self.sizes, &self.weights) {
            (None, None) => reference.measure().clone(),
            (None, Some(_)) => return Err(Error::Config("`demand.weights` requires `demand.sizes`".into())),
            (Some(sizes), weights) => {
                let weights = weights.clone().unwrap_or_else(|| vec![1.0; sizes.len()]);
                if weights.len() != sizes.len() {
                    return Err(Error::Config("`demand.sizes` and `demand.weights` differ in length".into()));
                }
                SizeMeasure::new(
                    sizes
                        .iter()
                        .zip(&weights)
                        .map(|(&size, &weight)| Atom { size, weight })
                        .collect(),
                )
                .map_err(|e| Error::Config(e.to_string()))?
            }
        };
        let base = reference.params(0, crate::demand::Side::ZeroForOne);
        let base = IntensityParams {
            floor: DEFAULT_MARKUP_FLOOR,
            ..*base
        };
        let common = CurveSection {
            lambda: self.lambda,
            alpha: self.alpha,
            beta: self.beta,
            floor: self.floor,
        }
        .apply(base)?;
        let z01 = match &self.zero_for_one {
            Some(c) => c.apply(common)?,
            None => common,
        };
        let z10 = match &self.one_for_zero {
            Some(c) => c.apply(common)?,
            None => common,
        };
        DemandCurve::uniform(measure, z01, z10).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_reference() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c.scenario().unwrap(), Scenario::reference());
    }

    #[test]
    fn units_are_converted() {
        let c = RunConfig::from_toml(
            r#"
            [market]
            sigma = "1.2/sqrt(year)"
            mu = "0.4/year"
            horizon = "12h"
            [demand]
            lambda = "50/day"
            [demand.one_for_zero]
            alpha = -2.0
            [simulation]
            lag = "1m"
            arbitrage_cost = "7.5bps"
            "#,
        )
        .unwrap();
        let s = c.scenario().unwrap();
        assert!((s.sim.market.sigma - 1.2 / 365f64.sqrt()).abs() < 1e-15);
        assert!((s.sim.market.mu - 0.4 / 365.0).abs() < 1e-15);
        assert_eq!(s.sim.market.horizon, 0.5);
        assert!((s.sim.lag_seconds - 60.0).abs() < 1e-9);
        assert!((s.sim.arbitrage.unwrap().cost - 0.00075).abs() < 1e-15);
        let d = &s.sim.demand;
        assert_eq!(d.params(0, crate::demand::Side::ZeroForOne).lambda, 50.0);
        assert_eq!(d.params(0, crate::demand::Side::OneForZero).alpha, -2.0);
        assert_eq!(d.params(0, crate::demand::Side::OneForZero).lambda, 50.0);
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let e = RunConfig::from_toml("[market]\nsigma = 0.1\nvolatility = 2\n").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("volatility") && msg.contains("line 3"), "{msg}");
        assert!(RunConfig::from_toml("[market]\nsigma = \"fast\"\n").is_err());
    }

    #[test]
    fn series_and_roster() {
        let c = RunConfig::from_toml(
            r#"
            [[series]]
            name = "lagged"
            lag = "10s"
            [[series.strategies]]
            kind = "hjb"
            gamma = 1e-5

            [[strategies]]
            kind = "cpmm"
            fee = "30bps"
            "#,
        )
        .unwrap();
        let s = c.series_specs();
        assert_eq!(s.len(), 2);
        assert!((s[0].sim.lag_seconds.unwrap() - 10.0).abs() < 1e-9);
        assert_eq!(s[1].name, "strategies");
        assert_eq!(s[1].strategies[0].kind, "cpmm");
    }

    #[test]
    fn reference_config_file_parses() {
        let text = include_str!("../../../../configs/reference.toml");
        let c = RunConfig::from_toml(text).unwrap();
        assert_eq!(c.scenario().unwrap(), Scenario::reference());
    }
}
