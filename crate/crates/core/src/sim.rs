//! Monte Carlo simulator of one pool over one horizon.
//!
//! The market rate follows geometric Brownian motion sampled exactly on a
//! fixed step. Each step:
//!
//! 1. the rate moves and the oracle (possibly lagged) is updated;
//! 2. for every (atom, side) a liquidity taker arrives with probability
//!    `weight * Lambda(delta) * dt`, where `delta` is the markup of the quote
//!    measured against the true rate;
//! 3. an arbitrageur, if enabled, trades while a profitable trade exists.
//!
//! Each path owns two independent random streams (rate shocks and arrival
//! uniforms) derived from `seed ^ path_index`, and the arrival stream draws
//! one uniform per (atom, side) per step whether or not a quote is offered.
//! Paths are therefore reproducible, and two strategies run on the same seed
//! see the same rates (common random numbers).

use std::collections::VecDeque;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::demand::{DemandCurve, Side};
use crate::error::{Error, Result};
use crate::strategies::{Market, PoolState, Quote, QuoteRequest, Refusal, Strategy};
use crate::units::SECONDS_PER_DAY;

/// Largest admissible arrival probability per step and (atom, side).
pub const MAX_STEP_PROBABILITY: f64 = 0.1;
pub const DEFAULT_ARBITRAGE_ROUNDS: usize = 100;
/// Relative edge below which an arbitrage opportunity is ignored.
pub const ARBITRAGE_EDGE_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArbitrageConfig {
    /// Proportional cost paid by the arbitrageur on the external market.
    pub cost: f64,
    pub max_rounds: usize,
}

impl ArbitrageConfig {
    pub fn new(cost: f64) -> Self {
        ArbitrageConfig {
            cost,
            max_rounds: DEFAULT_ARBITRAGE_ROUNDS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub market: Market,
    /// True demand of the liquidity takers.
    pub demand: DemandCurve,
    pub q0: f64,
    pub q1: f64,
    /// Step, days.
    pub dt: f64,
    /// Oracle delay, seconds.
    pub lag_seconds: f64,
    pub arbitrage: Option<ArbitrageConfig>,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let m = &self.market;
        if !(m.s0 > 0.0 && m.s0.is_finite()) {
            return Err(Error::Config(format!("initial rate must be > 0, got {}", m.s0)));
        }
        if !(m.sigma >= 0.0 && m.sigma.is_finite() && m.mu.is_finite()) {
            return Err(Error::Config("drift and volatility must be finite, volatility >= 0".into()));
        }
        if !(m.horizon > 0.0 && m.horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be > 0, got {}", m.horizon)));
        }
        if !(self.dt > 0.0 && self.dt <= m.horizon) {
            return Err(Error::Config(format!("step {} must lie in (0, horizon]", self.dt)));
        }
        if !(self.q0 > 0.0 && self.q1 > 0.0) {
            return Err(Error::Config("initial reserves must be > 0".into()));
        }
        if !(self.lag_seconds >= 0.0 && self.lag_seconds.is_finite()) {
            return Err(Error::Config(format!("lag must be >= 0, got {}", self.lag_seconds)));
        }
        let p = self.demand.max_intensity() * self.dt;
        if p > MAX_STEP_PROBABILITY {
            return Err(Error::Config(format!(
                "arrival probability per step {p:.3} exceeds {MAX_STEP_PROBABILITY}; reduce dt"
            )));
        }
        if let Some(a) = &self.arbitrage {
            if !(a.cost >= 0.0 && a.cost < 1.0) || a.max_rounds == 0 {
                return Err(Error::Config("arbitrage cost must lie in [0, 1) and rounds >= 1".into()));
            }
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.market.horizon / self.dt).round().max(1.0) as usize
    }

    /// Oracle delay in steps.
    pub fn lag_steps(&self) -> usize {
        (self.lag_seconds / (self.dt * SECONDS_PER_DAY)).round() as usize
    }
}

/// Summary of one simulated path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathResult {
    pub path: usize,
    pub seed: u64,
    pub final_rate: f64,
    /// Value of reserves and markup account over the initial reserves, at
    /// the final rate.
    pub excess_pnl: f64,
    /// Markups and fees collected.
    pub markup_leg: f64,
    /// `sum mu y dt`.
    pub drift_leg: f64,
    /// `sum y dW`-type term: inventory times unexpected rate moves.
    pub brownian_leg: f64,
    /// Value of the executed trades at the market rate, net of markups.
    pub execution_leg: f64,
    pub taker_fills_zero_for_one: u64,
    pub taker_fills_one_for_zero: u64,
    pub arbitrage_trades: u64,
    /// Currency-0 notional traded by the arbitrageur.
    pub arbitrage_volume: f64,
    pub min_q0: f64,
    pub max_q0: f64,
    pub min_q1: f64,
    pub max_q1: f64,
    /// The inventory left the range of the pricing rule at least once.
    pub boundary_hit: bool,
    /// The arbitrageur stopped on the round cap at least once.
    pub arbitrage_cap_hit: bool,
    /// Largest relative distance of the marginal price outside the
    /// no-arbitrage band after the arbitrageur acted.
    pub max_band_excess: f64,
    /// Largest relative gap between the incrementally accumulated and the
    /// directly valued excess PnL.
    pub accounting_error: f64,
}

impl PathResult {
    pub fn taker_fills(&self) -> u64 {
        self.taker_fills_zero_for_one + self.taker_fills_one_for_zero
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trader {
    Taker,
    Arbitrageur,
}

/// One executed trade.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub step: usize,
    pub t: f64,
    pub trader: Trader,
    pub side: Side,
    pub size: f64,
    pub markup: f64,
    pub rate: f64,
    pub oracle_rate: f64,
    pub q0: f64,
    pub q1: f64,
    pub markup_account: f64,
}

pub fn write_events(path: &Path, events: &[Event]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for e in events {
        w.serialize(e)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Seed of path `index` under master seed `seed`.
pub fn path_seed(seed: u64, index: usize) -> u64 {
    seed ^ index as u64
}

fn streams(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut rates = ChaCha8Rng::seed_from_u64(seed);
    let mut arrivals = rates.clone();
    rates.set_stream(0);
    arrivals.set_stream(1);
    (rates, arrivals)
}

/// Exact GBM step: `S exp((mu - sigma^2/2) dt + sigma sqrt(dt) w)`.
pub fn step_rate(s: f64, mu: f64, sigma: f64, dt: f64, w: f64) -> f64 {
    s * ((mu - 0.5 * sigma * sigma) * dt + sigma * dt.sqrt() * w).exp()
}

/// Rate path alone for a path seed (see [`path_seed`]), drawn from the same
/// stream as [`simulate_path`].
pub fn rate_path(market: &Market, dt: f64, n_steps: usize, seed: u64) -> Vec<f64> {
    let (mut rng, _) = streams(seed);
    let mut s = market.s0;
    let mut out = Vec::with_capacity(n_steps + 1);
    out.push(s);
    for _ in 0..n_steps {
        let w: f64 = rng.sample(StandardNormal);
        s = step_rate(s, market.mu, market.sigma, dt, w);
        out.push(s);
    }
    out
}

/// Markup of `quote` against the true rate `s`.
pub fn effective_markup(quote: &Quote, side: Side, s: f64) -> f64 {
    let fair = quote.base_amount * s;
    match side {
        Side::ZeroForOne => quote.quote_amount / fair - 1.0,
        Side::OneForZero => 1.0 - quote.quote_amount / fair,
    }
}

/// Arbitrage profit at the market rate `s` net of the external cost `c`.
pub fn arbitrage_profit(quote: &Quote, side: Side, s: f64, c: f64) -> f64 {
    match side {
        Side::ZeroForOne => quote.base_amount * s * (1.0 - c) - quote.quote_amount,
        Side::OneForZero => quote.quote_amount - quote.base_amount * s * (1.0 + c),
    }
}

/// Mutable state of one path.
struct PathState {
    pool: PoolState,
    incremental: f64,
    drift_leg: f64,
    brownian_leg: f64,
    fills: [u64; 2],
    arb_trades: u64,
    arb_volume: f64,
    min_q0: f64,
    max_q0: f64,
    min_q1: f64,
    max_q1: f64,
    boundary_hit: bool,
    arb_cap_hit: bool,
    max_band_excess: f64,
    accounting_error: f64,
    scale: f64,
}

impl PathState {
    fn new(cfg: &SimConfig) -> Self {
        PathState {
            pool: PoolState::new(cfg.q0, cfg.q1),
            incremental: 0.0,
            drift_leg: 0.0,
            brownian_leg: 0.0,
            fills: [0; 2],
            arb_trades: 0,
            arb_volume: 0.0,
            min_q0: cfg.q0,
            max_q0: cfg.q0,
            min_q1: cfg.q1,
            max_q1: cfg.q1,
            boundary_hit: false,
            arb_cap_hit: false,
            max_band_excess: 0.0,
            accounting_error: 0.0,
            scale: cfg.q0 + cfg.q1 * cfg.market.s0,
        }
    }

    fn fill(&mut self, strategy: &dyn Strategy, side: Side, quote: &Quote, s: f64) {
        let before = self.pool;
        strategy.apply_fill(&mut self.pool, side, quote);
        let p = &self.pool;
        self.incremental +=
            (p.q0 - before.q0) + (p.q1 - before.q1) * s + (p.markup_account - before.markup_account);
        self.min_q0 = self.min_q0.min(p.q0);
        self.max_q0 = self.max_q0.max(p.q0);
        self.min_q1 = self.min_q1.min(p.q1);
        self.max_q1 = self.max_q1.max(p.q1);
    }

    fn check_accounting(&mut self, s: f64) {
        let direct = self.pool.excess_value(s);
        let gap = (direct - self.incremental).abs() / self.scale;
        self.accounting_error = self.accounting_error.max(gap);
    }
}

fn to_error(r: Refusal, path: usize, seed: u64) -> Error {
    Error::Path {
        path,
        seed,
        source: Box::new(Error::Domain(r.to_string())),
    }
}

/// Simulate one path of `strategy` under `cfg`.
pub fn simulate_path(
    cfg: &SimConfig,
    strategy: &dyn Strategy,
    path: usize,
    seed: u64,
    mut log: Option<&mut Vec<Event>>,
) -> Result<PathResult> {
    let seed = path_seed(seed, path);
    let (mut rates, mut arrivals) = streams(seed);
    let m = cfg.market;
    let dt = cfg.dt;
    let n_steps = cfg.n_steps();
    let lag = cfg.lag_steps();
    let atoms = cfg.demand.measure().atoms().to_vec();
    let mut tr = PathState::new(cfg);
    let mut history: VecDeque<f64> = VecDeque::with_capacity(lag + 1);
    let mut s = m.s0;
    history.push_back(s);

    for n in 0..n_steps {
        // 1. Rate move, booked against the inventory held over the step.
        let w: f64 = rates.sample(StandardNormal);
        let next = step_rate(s, m.mu, m.sigma, dt, w);
        let dq1 = tr.pool.q1 - tr.pool.q1_init;
        let y = dq1 * s;
        tr.drift_leg += m.mu * y * dt;
        tr.brownian_leg += dq1 * (next - s - m.mu * s * dt);
        tr.incremental += dq1 * (next - s);
        s = next;
        history.push_back(s);
        if history.len() > lag + 1 {
            history.pop_front();
        }
        // Before the first `lag` steps have elapsed the oracle reports S0.
        let oracle = if n + 1 >= lag { history[0] } else { m.s0 };
        let t = ((n + 1) as f64 * dt).min(m.horizon);
        let reference = if strategy.uses_oracle() { oracle } else { s };

        // 2. Liquidity takers.
        for (k, atom) in atoms.iter().enumerate() {
            for side in Side::BOTH {
                let u: f64 = arrivals.random();
                let request = QuoteRequest {
                    t,
                    size: atom.size,
                    side,
                    reference_rate: reference,
                };
                let quote = match strategy.quote(&tr.pool, &request) {
                    Ok(q) => q,
                    Err(Refusal::Depletion) | Err(Refusal::OutOfRange) => continue,
                    Err(r) => return Err(to_error(r, path, seed)),
                };
                let delta = effective_markup(&quote, side, s);
                if u < cfg.demand.rate(k, side, delta) * dt {
                    tr.fill(strategy, side, &quote, s);
                    tr.fills[side.index()] += 1;
                    if let Some(log) = log.as_deref_mut() {
                        log.push(event(n, t, Trader::Taker, side, atom.size, delta, s, oracle, &tr.pool));
                    }
                }
            }
        }

        // 3. Arbitrage.
        if let Some(arb) = &cfg.arbitrage {
            arbitrage(strategy, arb, &mut tr, t, s, reference, n, oracle, &mut log)
                .map_err(|r| to_error(r, path, seed))?;
            if let Some(price) = strategy.marginal_price(&tr.pool) {
                let f = strategy.fee();
                let lower = s * (1.0 - arb.cost) / (1.0 + f);
                let upper = s * (1.0 + arb.cost) / (1.0 - f);
                let excess = (lower / price - 1.0).max(price / upper - 1.0).max(0.0);
                tr.max_band_excess = tr.max_band_excess.max(excess);
            }
        }

        if let Some(bound) = strategy.inventory_bound() {
            if tr.pool.deviation(oracle).abs() > bound * (1.0 + 1e-12) {
                tr.boundary_hit = true;
            }
        }
        tr.check_accounting(s);
    }

    let p = tr.pool;
    let excess = p.excess_value(s);
    let markup_leg = p.markup_account;
    let execution_leg = excess - markup_leg - tr.drift_leg - tr.brownian_leg;
    if !excess.is_finite() {
        return Err(Error::Path {
            path,
            seed,
            source: Box::new(Error::Domain("non-finite excess PnL".into())),
        });
    }
    Ok(PathResult {
        path,
        seed,
        final_rate: s,
        excess_pnl: excess,
        markup_leg,
        drift_leg: tr.drift_leg,
        brownian_leg: tr.brownian_leg,
        execution_leg,
        taker_fills_zero_for_one: tr.fills[0],
        taker_fills_one_for_zero: tr.fills[1],
        arbitrage_trades: tr.arb_trades,
        arbitrage_volume: tr.arb_volume,
        min_q0: tr.min_q0,
        max_q0: tr.max_q0,
        min_q1: tr.min_q1,
        max_q1: tr.max_q1,
        boundary_hit: tr.boundary_hit,
        arbitrage_cap_hit: tr.arb_cap_hit,
        max_band_excess: tr.max_band_excess,
        accounting_error: tr.accounting_error,
    })
}

#[allow(clippy::too_many_arguments)]
fn event(
    step: usize,
    t: f64,
    trader: Trader,
    side: Side,
    size: f64,
    markup: f64,
    rate: f64,
    oracle_rate: f64,
    pool: &PoolState,
) -> Event {
    Event {
        step,
        t,
        trader,
        side,
        size,
        markup,
        rate,
        oracle_rate,
        q0: pool.q0,
        q1: pool.q1,
        markup_account: pool.markup_account,
    }
}

/// Best arbitrage trade against `strategy` in direction `side`:
/// `(size, profit, quote)`, or `None` if no trade is worth making.
pub fn best_arbitrage(
    strategy: &dyn Strategy,
    pool: &PoolState,
    t: f64,
    side: Side,
    s: f64,
    reference: f64,
    cost: f64,
) -> std::result::Result<Option<(f64, f64, Quote)>, Refusal> {
    let cap = strategy.max_size(pool, side, reference);
    let scale = pool.q0 + pool.q1 * s;
    let probe = (1e-8 * scale).min(cap);
    if probe.is_nan() || probe <= 0.0 {
        return Ok(None);
    }
    let profit = |z: f64| -> std::result::Result<(f64, Option<Quote>), Refusal> {
        let req = QuoteRequest {
            t,
            size: z,
            side,
            reference_rate: reference,
        };
        match strategy.quote(pool, &req) {
            Ok(q) => Ok((arbitrage_profit(&q, side, s, cost), Some(q))),
            Err(Refusal::Depletion) | Err(Refusal::OutOfRange) => Ok((f64::NEG_INFINITY, None)),
            Err(r) => Err(r),
        }
    };
    // Profit is zero at zero size and concave, so a non-positive edge at a
    // tiny size rules out any profitable trade.
    let (p0, _) = profit(probe)?;
    if p0.is_nan() || p0 <= ARBITRAGE_EDGE_TOL * probe {
        return Ok(None);
    }

    // Coarse geometric scan from the cap down to the probe, then golden
    // section around the best scan point.
    let mut zs = Vec::new();
    let mut z = cap;
    while z > probe {
        zs.push(z);
        z *= 0.5;
    }
    zs.push(probe);
    let mut best_k = zs.len() - 1;
    let mut best_p = p0;
    for (k, &z) in zs.iter().enumerate().take(zs.len() - 1) {
        let (p, _) = profit(z)?;
        if p > best_p {
            best_p = p;
            best_k = k;
        }
    }
    let mut a = if best_k + 1 < zs.len() { zs[best_k + 1] } else { zs[best_k] };
    let mut b = if best_k > 0 { zs[best_k - 1] } else { zs[best_k] };
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = profit(x1)?.0;
    let mut f2 = profit(x2)?.0;
    for _ in 0..200 {
        if b - a <= 1e-12 * b {
            break;
        }
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = profit(x2)?.0;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = profit(x1)?.0;
        }
    }
    let mut candidates = [(zs[best_k], best_p), (x1, f1), (x2, f2)];
    candidates.sort_by(|p, q| q.1.total_cmp(&p.1));
    let (z, _) = candidates[0];
    match profit(z)? {
        (p, Some(q)) if p > 0.0 => Ok(Some((z, p, q))),
        _ => Ok(None),
    }
}

#[allow(clippy::too_many_arguments)]
fn arbitrage(
    strategy: &dyn Strategy,
    arb: &ArbitrageConfig,
    tr: &mut PathState,
    t: f64,
    s: f64,
    reference: f64,
    step: usize,
    oracle: f64,
    log: &mut Option<&mut Vec<Event>>,
) -> std::result::Result<(), Refusal> {
    for _ in 0..arb.max_rounds {
        let mut best: Option<(Side, f64, f64, Quote)> = None;
        for side in Side::BOTH {
            if let Some((z, p, q)) = best_arbitrage(strategy, &tr.pool, t, side, s, reference, arb.cost)? {
                if best.as_ref().is_none_or(|b| p > b.2) {
                    best = Some((side, z, p, q));
                }
            }
        }
        let Some((side, z, _, q)) = best else {
            return Ok(());
        };
        tr.fill(strategy, side, &q, s);
        tr.arb_trades += 1;
        tr.arb_volume += z;
        if let Some(log) = log.as_deref_mut() {
            let delta = effective_markup(&q, side, s);
            log.push(event(step, t, Trader::Arbitrageur, side, z, delta, s, oracle, &tr.pool));
        }
    }
    tr.arb_cap_hit = true;
    Ok(())
}
