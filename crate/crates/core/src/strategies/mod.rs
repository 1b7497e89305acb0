//! Pricing strategies of the liquidity provider.
//!
//! Every rule implements [`Strategy`] and is built by name from a
//! [`StrategyRegistry`]. Built-in kinds: `constant`, `cpmm`, `stableswap`
//! and `hjb`.

mod cfmm;
mod constant;
mod hjb;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::demand::{DemandCurve, Side};
use crate::error::{Error, Result};

pub use self::cfmm::{CfmmFactory, CfmmStrategy};
pub use self::constant::{ConstantFactory, ConstantStrategy};
pub use self::hjb::{GridProvider, HjbFactory, HjbStrategy, MemoryGrids, SolvedGrid};

/// Reserves and markup account of the pool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolState {
    pub q0: f64,
    pub q1: f64,
    pub q0_init: f64,
    pub q1_init: f64,
    /// Separate currency-0 account collecting markups and fees.
    pub markup_account: f64,
}

impl PoolState {
    pub fn new(q0: f64, q1: f64) -> Self {
        PoolState {
            q0,
            q1,
            q0_init: q0,
            q1_init: q1,
            markup_account: 0.0,
        }
    }

    /// Currency-1 deviation valued in currency 0 at `rate`.
    pub fn deviation(&self, rate: f64) -> f64 {
        (self.q1 - self.q1_init) * rate
    }

    /// Value of the reserves and markup account relative to the initial
    /// reserves at `rate`.
    pub fn excess_value(&self, rate: f64) -> f64 {
        self.markup_account + (self.q0 - self.q0_init) + (self.q1 - self.q1_init) * rate
    }
}

/// A liquidity taker's request: trade `size` units of currency-0 notional
/// in direction `side` at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuoteRequest {
    pub t: f64,
    pub size: f64,
    pub side: Side,
    /// Rate used to convert notional into currency-1 amounts: the (possibly
    /// lagged) oracle rate for oracle strategies, the market rate otherwise.
    pub reference_rate: f64,
}

/// Terms offered by the pool.
///
/// For [`Side::ZeroForOne`] the taker pays `quote_amount` of currency 0 and
/// receives `base_amount` of currency 1; for [`Side::OneForZero`] the taker
/// pays `base_amount` and receives `quote_amount`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quote {
    /// Markup relative to `reference_rate`.
    pub markup: f64,
    /// Currency-0 per unit of currency 1 paid or received by the taker.
    pub effective_rate: f64,
    pub base_amount: f64,
    pub quote_amount: f64,
    /// Change of the currency-0 reserve `q0`.
    pub reserve_delta0: f64,
    /// Amount credited to the markup account.
    pub accrual: f64,
}

/// Why a quote was not offered.
#[derive(Debug, Clone, PartialEq)]
pub enum Refusal {
    /// The trade would exhaust a reserve.
    Depletion,
    /// The trade would leave the inventory range the rule is defined on.
    OutOfRange,
    Numerical(String),
}

impl fmt::Display for Refusal {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        match self {
            Refusal::Depletion => f.write_str("reserve depletion"),
            Refusal::OutOfRange => f.write_str("inventory out of range"),
            Refusal::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

pub type QuoteResult = std::result::Result<Quote, Refusal>;

pub trait Strategy: Send + Sync + fmt::Debug {
    fn label(&self) -> &str;

    /// Whether quotes are anchored to the oracle rate.
    fn uses_oracle(&self) -> bool;

    fn quote(&self, pool: &PoolState, request: &QuoteRequest) -> QuoteResult;

    /// Book a fill of `quote` into `pool`.
    fn apply_fill(&self, pool: &mut PoolState, side: Side, quote: &Quote) {
        match side {
            Side::ZeroForOne => pool.q1 -= quote.base_amount,
            Side::OneForZero => pool.q1 += quote.base_amount,
        }
        pool.q0 += quote.reserve_delta0;
        pool.markup_account += quote.accrual;
    }

    /// Marginal price quoted by the pool, when it has one.
    fn marginal_price(&self, _pool: &PoolState) -> Option<f64> {
        None
    }

    fn fee(&self) -> f64 {
        0.0
    }

    /// Largest notional the rule accepts in direction `side`.
    fn max_size(&self, pool: &PoolState, side: Side, reference_rate: f64) -> f64 {
        match side {
            Side::ZeroForOne => pool.q1 * reference_rate,
            Side::OneForZero => pool.q0,
        }
    }

    /// Half-width of the inventory range the rule is defined on, in
    /// currency 0 at the oracle rate.
    fn inventory_bound(&self) -> Option<f64> {
        None
    }

    /// Risk aversion, for strategies that carry one.
    fn gamma(&self) -> Option<f64> {
        None
    }
}

/// Market model shared by strategies and the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Market {
    pub s0: f64,
    /// Drift per day.
    pub mu: f64,
    /// Volatility per square-root day.
    pub sigma: f64,
    /// Horizon in days.
    pub horizon: f64,
}

/// Everything a factory may need to build a strategy.
#[derive(Clone)]
pub struct BuildContext {
    pub market: Market,
    pub demand: DemandCurve,
    pub q0: f64,
    pub q1: f64,
    /// HJB grid half-width in grid steps.
    pub half_width_steps: usize,
    pub n_time: usize,
    pub grids: Arc<dyn GridProvider>,
}

impl fmt::Debug for BuildContext {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.debug_struct("BuildContext")
            .field("market", &self.market)
            .field("q0", &self.q0)
            .field("q1", &self.q1)
            .field("half_width_steps", &self.half_width_steps)
            .field("n_time", &self.n_time)
            .finish_non_exhaustive()
    }
}

/// One `[[strategies]]` entry: a kind, an optional label and kind-specific
/// parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub kind: String,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(flatten)]
    pub params: toml::Table,
}

impl StrategyConfig {
    pub fn new(kind: &str, params: toml::Table) -> Self {
        StrategyConfig {
            kind: kind.to_string(),
            label: None,
            params,
        }
    }

    pub fn labeled(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }
}

pub trait StrategyFactory: Send + Sync {
    fn kind(&self) -> &'static str;

    fn build(&self, label: Option<&str>, params: &toml::Table, ctx: &BuildContext) -> Result<Arc<dyn Strategy>>;
}

/// Name-keyed collection of strategy factories.
pub struct StrategyRegistry {
    factories: BTreeMap<&'static str, Box<dyn StrategyFactory>>,
}

impl StrategyRegistry {
    pub fn empty() -> Self {
        StrategyRegistry {
            factories: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(ConstantFactory));
        r.register(Box::new(CfmmFactory::ConstantProduct));
        r.register(Box::new(CfmmFactory::StableSwap));
        r.register(Box::new(HjbFactory));
        r
    }

    pub fn register(&mut self, factory: Box<dyn StrategyFactory>) {
        self.factories.insert(factory.kind(), factory);
    }

    pub fn kinds(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    pub fn build(&self, config: &StrategyConfig, ctx: &BuildContext) -> Result<Arc<dyn Strategy>> {
        let factory = self
            .factories
            .get(config.kind.as_str())
            .ok_or_else(|| Error::UnknownStrategy(config.kind.clone()))?;
        factory.build(config.label.as_deref(), &config.params, ctx)
    }
}

impl Default for StrategyRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

pub(crate) fn parse_params<T: serde::de::DeserializeOwned>(kind: &str, params: &toml::Table) -> Result<T> {
    params
        .clone()
        .try_into()
        .map_err(|e| Error::Config(format!("strategy `{kind}`: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{IntensityParams, SizeMeasure};

    pub(crate) fn context() -> BuildContext {
        let p = IntensityParams::new(100.0, -1.8, 1300.0).unwrap();
        BuildContext {
            market: Market {
                s0: 1600.0,
                mu: 0.0,
                sigma: 1.0 / 365f64.sqrt(),
                horizon: 0.5,
            },
            demand: DemandCurve::uniform(SizeMeasure::dirac(4000.0).unwrap(), p, p).unwrap(),
            q0: 2e6,
            q1: 1250.0,
            half_width_steps: 40,
            n_time: 200,
            grids: Arc::new(MemoryGrids::default()),
        }
    }

    #[test]
    fn registry_knows_builtins() {
        let r = StrategyRegistry::with_builtins();
        let kinds: Vec<_> = r.kinds().collect();
        assert_eq!(kinds, vec!["constant", "cpmm", "hjb", "stableswap"]);
    }

    #[test]
    fn unknown_kind_and_field_rejected() {
        let r = StrategyRegistry::with_builtins();
        let ctx = context();
        let e = r.build(&StrategyConfig::new("martingale", toml::Table::new()), &ctx).unwrap_err();
        assert!(matches!(e, Error::UnknownStrategy(_)));
        let cfg: StrategyConfig = toml::from_str("kind = \"constant\"\nmarkup = \"10bps\"\ncolour = 3").unwrap();
        assert!(matches!(r.build(&cfg, &ctx).unwrap_err(), Error::Config(_)));
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg: StrategyConfig = toml::from_str("kind = \"cpmm\"\nlabel = \"cp30\"\nfee = \"30bps\"").unwrap();
        assert_eq!(cfg.kind, "cpmm");
        assert_eq!(cfg.label.as_deref(), Some("cp30"));
        let s = StrategyRegistry::with_builtins().build(&cfg, &context()).unwrap();
        assert_eq!(s.label(), "cp30");
        assert!((s.fee() - 0.003).abs() < 1e-15);
    }
}
