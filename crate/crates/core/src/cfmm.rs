//! Constant function market maker mathematics.
//!
//! Reserves live on a level set `q0 = psi(q1)`. Trades move along the level
//! set; proportional fees are paid in currency 0 into a separate account so
//! the curve itself stays exact. The pool is valued through the Legendre
//! transform `psi*(p) = sup_q p q - psi(q)`, which gives the classic
//! impermanent-loss inequality and the LVR term of the Ito decomposition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const INVARIANT_TOL: f64 = 1e-13;
const INVARIANT_MAX_ITER: usize = 200;
const LVR_FD_STEP: f64 = 1e-5;

/// Trading function expressed through its level set `q0 = psi(q1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LevelSetCurve {
    /// `q0 q1 = k`.
    ConstantProduct { k: f64 },
    /// Two-asset stableswap invariant
    /// `4A (x + y) + D = 4 A D + D^3 / (4 x y)` with `x = q0`, `y = q1 * scale`.
    ///
    /// `scale` normalizes currency 1 by a reference exchange rate so that a
    /// balanced pool prices at that rate. USD/ETH is not a stable pair;
    /// this is a modelling convention, not a Curve deployment parameter.
    StableSwap { amp: f64, d: f64, scale: f64 },
}

impl LevelSetCurve {
    pub fn constant_product(q0: f64, q1: f64) -> Result<Self> {
        check_reserves(q0, q1)?;
        Ok(LevelSetCurve::ConstantProduct { k: q0 * q1 })
    }

    /// Stableswap curve through `(q0, q1)` with currency 1 scaled by `scale`.
    pub fn stableswap(amp: f64, q0: f64, q1: f64, scale: f64) -> Result<Self> {
        check_reserves(q0, q1)?;
        if !(amp > 0.0 && amp.is_finite()) {
            return Err(Error::Domain(format!("amplification must be > 0, got {amp}")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Domain(format!("scale must be > 0, got {scale}")));
        }
        let d = stableswap_invariant(amp, q0, q1 * scale)?;
        Ok(LevelSetCurve::StableSwap { amp, d, scale })
    }

    /// `psi(q1)`.
    pub fn psi(&self, q1: f64) -> f64 {
        match *self {
            LevelSetCurve::ConstantProduct { k } => k / q1,
            LevelSetCurve::StableSwap { amp, d, scale } => stableswap_x(amp, d, q1 * scale),
        }
    }

    /// `psi'(q1)`; the marginal price is `-psi'`.
    pub fn psi_prime(&self, q1: f64) -> f64 {
        match *self {
            LevelSetCurve::ConstantProduct { k } => -k / (q1 * q1),
            LevelSetCurve::StableSwap { amp, d, scale } => {
                let y = q1 * scale;
                let x = stableswap_x(amp, d, y);
                scale * stableswap_slope(amp, d, x, y).0
            }
        }
    }

    /// `psi''(q1)`.
    pub fn psi_second(&self, q1: f64) -> f64 {
        match *self {
            LevelSetCurve::ConstantProduct { k } => 2.0 * k / (q1 * q1 * q1),
            LevelSetCurve::StableSwap { amp, d, scale } => {
                let y = q1 * scale;
                let x = stableswap_x(amp, d, y);
                scale * scale * stableswap_slope(amp, d, x, y).1
            }
        }
    }

    /// Reserve `q1` at which the marginal price `-psi'(q1)` equals `rate`.
    pub fn q1_at_price(&self, rate: f64) -> Result<f64> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::Domain(format!("exchange rate must be > 0, got {rate}")));
        }
        match *self {
            LevelSetCurve::ConstantProduct { k } => Ok((k / rate).sqrt()),
            LevelSetCurve::StableSwap { d, scale, .. } => {
                // Newton in log q1 on the decreasing marginal price,
                // safeguarded by a bracket.
                let mut u = (0.5 * d / scale).ln();
                let price = |u: f64| -self.psi_prime(u.exp());
                let (mut lo, mut hi) = (u - 1.0, u + 1.0);
                while price(lo) < rate {
                    lo -= 2.0 * (u - lo);
                    if lo < -700.0 {
                        return Err(Error::InvariantNonConvergence(format!(
                            "no reserve level prices at {rate}"
                        )));
                    }
                }
                while price(hi) > rate {
                    hi += 2.0 * (hi - u);
                    if hi > 700.0 {
                        return Err(Error::InvariantNonConvergence(format!(
                            "no reserve level prices at {rate}"
                        )));
                    }
                }
                for _ in 0..INVARIANT_MAX_ITER {
                    let q = u.exp();
                    let r = -self.psi_prime(q) - rate;
                    if r.abs() <= 1e-14 * rate {
                        return Ok(q);
                    }
                    if r > 0.0 {
                        lo = u;
                    } else {
                        hi = u;
                    }
                    // d price / d u = -psi''(q) q
                    let slope = -self.psi_second(q) * q;
                    let next = u - r / slope;
                    let prev = u;
                    u = if next.is_finite() && next > lo && next < hi {
                        next
                    } else {
                        0.5 * (lo + hi)
                    };
                    if hi - lo < 1e-15 || (u - prev).abs() < 1e-15 * u.abs().max(1.0) {
                        return Ok(u.exp());
                    }
                }
                Err(Error::InvariantNonConvergence(format!(
                    "marginal price inversion at rate {rate}"
                )))
            }
        }
    }

    /// `psi*(-rate)` and its derivative `psi*'(-rate) = q1*`.
    pub fn legendre_value(&self, rate: f64) -> Result<LegendrePoint> {
        match *self {
            LevelSetCurve::ConstantProduct { k } => {
                if !(rate > 0.0 && rate.is_finite()) {
                    return Err(Error::Domain(format!("exchange rate must be > 0, got {rate}")));
                }
                Ok(LegendrePoint {
                    conjugate: -2.0 * (k * rate).sqrt(),
                    q1: (k / rate).sqrt(),
                })
            }
            LevelSetCurve::StableSwap { .. } => {
                let q1 = self.q1_at_price(rate)?;
                Ok(LegendrePoint {
                    conjugate: -rate * q1 - self.psi(q1),
                    q1,
                })
            }
        }
    }

    /// `psi*''(-rate)`, the curvature driving the LVR term.
    pub fn legendre_curvature(&self, rate: f64) -> Result<f64> {
        match *self {
            LevelSetCurve::ConstantProduct { k } => Ok(0.5 * k.sqrt() * rate.powf(-1.5)),
            LevelSetCurve::StableSwap { .. } => {
                let h = LVR_FD_STEP * rate;
                let up = self.q1_at_price(rate + h)?;
                let down = self.q1_at_price(rate - h)?;
                // p = -S, so d q1*/dp = -d q1*/dS
                Ok(-(up - down) / (2.0 * h))
            }
        }
    }
}

/// Value of the convex conjugate and its maximizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegendrePoint {
    /// `psi*(-S)`; the pool is worth `-conjugate` in currency 0.
    pub conjugate: f64,
    /// Maximizer `q1* = psi*'(-S)`.
    pub q1: f64,
}

impl LegendrePoint {
    pub fn pool_value(&self) -> f64 {
        -self.conjugate
    }
}

fn check_reserves(q0: f64, q1: f64) -> Result<()> {
    if !(q0 > 0.0 && q1 > 0.0 && q0.is_finite() && q1.is_finite()) {
        return Err(Error::Domain(format!(
            "reserves must be positive, got ({q0}, {q1})"
        )));
    }
    Ok(())
}

/// Solve the two-asset stableswap invariant for `D` by Newton's method.
pub fn stableswap_invariant(amp: f64, x: f64, y: f64) -> Result<f64> {
    // f(D) = D^3 / (4xy) + (4A - 1) D - 4A (x + y), convex and increasing;
    // Newton from D = x + y >= D* descends monotonically.
    let xy4 = 4.0 * x * y;
    let a4 = 4.0 * amp;
    let mut d = x + y;
    for _ in 0..INVARIANT_MAX_ITER {
        let f = d * d * d / xy4 + (a4 - 1.0) * d - a4 * (x + y);
        let fp = 3.0 * d * d / xy4 + a4 - 1.0;
        let next = d - f / fp;
        if !(next.is_finite() && next > 0.0) {
            break;
        }
        let done = (next - d).abs() <= INVARIANT_TOL * d;
        d = next;
        if done {
            return Ok(d);
        }
    }
    Err(Error::InvariantNonConvergence(format!(
        "stableswap D for reserves ({x}, {y}), A = {amp}"
    )))
}

/// Relative residual of the stableswap invariant at `(x, y, D)`.
pub fn stableswap_residual(amp: f64, d: f64, x: f64, y: f64) -> f64 {
    let lhs = 4.0 * amp * (x + y) + d;
    let rhs = 4.0 * amp * d + d * d * d / (4.0 * x * y);
    (lhs - rhs).abs() / lhs.abs().max(rhs.abs())
}

/// `x` on the invariant given `y`: the positive root of
/// `4A x^2 + (4A y + D - 4A D) x - D^3 / (4y) = 0`.
fn stableswap_x(amp: f64, d: f64, y: f64) -> f64 {
    let a = 4.0 * amp;
    let b = a * y + d - a * d;
    let c = d * d * d / (4.0 * y);
    let disc = (b * b + 4.0 * a * c).sqrt();
    if b > 0.0 {
        2.0 * c / (b + disc)
    } else {
        (disc - b) / (2.0 * a)
    }
}

/// `(dx/dy, d2x/dy2)` along the invariant.
fn stableswap_slope(amp: f64, d: f64, x: f64, y: f64) -> (f64, f64) {
    let a = 4.0 * amp;
    let u = d * d * d / (4.0 * x * y);
    let n = a + u / y;
    let m = a + u / x;
    let r = -n / m;
    let dn = -2.0 * u / (y * y) - u * r / (x * y);
    let dm = -u / (x * y) - 2.0 * u * r / (x * x);
    let r2 = -(dn * m - n * dm) / (m * m);
    (r, r2)
}

/// A two-asset CFMM pool with a proportional fee paid into a currency-0
/// fee account.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfmmPool {
    pub curve: LevelSetCurve,
    pub q0: f64,
    pub q1: f64,
    pub fee: f64,
    pub fee_account: f64,
}

impl CfmmPool {
    pub fn new(curve: LevelSetCurve, q1: f64, fee: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&fee) {
            return Err(Error::Domain(format!("fee must lie in [0, 1), got {fee}")));
        }
        let q0 = curve.psi(q1);
        check_reserves(q0, q1)?;
        Ok(CfmmPool {
            curve,
            q0,
            q1,
            fee,
            fee_account: 0.0,
        })
    }

    /// Currency 0 received for selling `dq1` of currency 1, net of fee.
    pub fn quote_sell_ccy1(&self, dq1: f64) -> Result<f64> {
        Ok(self.sell_ccy1_legs(dq1)?.0)
    }

    /// Currency 0 paid for buying `dq1` of currency 1, fee included.
    pub fn quote_buy_ccy1(&self, dq1: f64) -> Result<f64> {
        Ok(self.buy_ccy1_legs(dq1)?.0)
    }

    /// `(taker proceeds, fee)` for a sale of `dq1`.
    pub fn sell_ccy1_legs(&self, dq1: f64) -> Result<(f64, f64)> {
        if !(dq1 > 0.0 && dq1.is_finite()) {
            return Err(Error::Domain(format!("trade amount must be > 0, got {dq1}")));
        }
        let gross = self.q0 - self.curve.psi(self.q1 + dq1);
        let fee = self.fee * gross;
        Ok((gross - fee, fee))
    }

    /// `(taker cost, fee)` for a purchase of `dq1`.
    pub fn buy_ccy1_legs(&self, dq1: f64) -> Result<(f64, f64)> {
        if !(dq1 > 0.0 && dq1.is_finite()) {
            return Err(Error::Domain(format!("trade amount must be > 0, got {dq1}")));
        }
        if dq1 >= self.q1 {
            return Err(Error::Depletion(format!(
                "cannot buy {dq1} of currency 1 from reserves {}",
                self.q1
            )));
        }
        let gross = self.curve.psi(self.q1 - dq1) - self.q0;
        let fee = self.fee * gross;
        Ok((gross + fee, fee))
    }

    /// Execute a sale of `dq1` by a taker; returns the taker's proceeds.
    pub fn sell_ccy1(&mut self, dq1: f64) -> Result<f64> {
        let (out, fee) = self.sell_ccy1_legs(dq1)?;
        self.q1 += dq1;
        self.q0 = self.curve.psi(self.q1);
        self.fee_account += fee;
        Ok(out)
    }

    /// Execute a purchase of `dq1` by a taker; returns the taker's cost.
    pub fn buy_ccy1(&mut self, dq1: f64) -> Result<f64> {
        let (cost, fee) = self.buy_ccy1_legs(dq1)?;
        self.q1 -= dq1;
        self.q0 = self.curve.psi(self.q1);
        self.fee_account += fee;
        Ok(cost)
    }

    /// `S = -psi'(q1)`.
    pub fn marginal_price(&self) -> f64 {
        -self.curve.psi_prime(self.q1)
    }

    /// `|q0 - psi(q1)| / q0`.
    pub fn level_set_error(&self) -> f64 {
        (self.q0 - self.curve.psi(self.q1)).abs() / self.q0
    }
}

/// Excess PnL of a fee-less CFMM over holding, when the rate moves from
/// `s0` to `st`: `psi*(-S0) - psi*(-St) - (St - S0) psi*'(-S0)`.
pub fn excess_pnl_cfmm(curve: &LevelSetCurve, s0: f64, st: f64) -> Result<f64> {
    let start = curve.legendre_value(s0)?;
    let end = curve.legendre_value(st)?;
    Ok(start.conjugate - end.conjugate - (st - s0) * start.q1)
}

/// Discretized Ito decomposition of the fee-less CFMM excess PnL.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LvrDecomposition {
    /// `sum (psi*'(-S_i) - psi*'(-S_0)) (S_{i+1} - S_i)`, hedgeable.
    pub hedge_leg: f64,
    /// `-1/2 sum psi*''(-S_i) (S_{i+1} - S_i)^2`, always nonpositive.
    pub lvr_leg: f64,
}

impl LvrDecomposition {
    pub fn total(&self) -> f64 {
        self.hedge_leg + self.lvr_leg
    }
}

pub fn lvr_decomposition(curve: &LevelSetCurve, path: &[f64]) -> Result<LvrDecomposition> {
    if path.len() < 2 {
        return Err(Error::Domain("path needs at least two samples".into()));
    }
    if let Some(bad) = path.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(Error::Domain(format!("path rates must be positive, got {bad}")));
    }
    let q_start = curve.legendre_value(path[0])?.q1;
    let mut hedge = 0.0;
    let mut lvr = 0.0;
    for w in path.windows(2) {
        let ds = w[1] - w[0];
        if ds == 0.0 {
            continue;
        }
        let q = curve.legendre_value(w[0])?.q1;
        hedge += (q - q_start) * ds;
        lvr -= 0.5 * curve.legendre_curvature(w[0])? * ds * ds;
    }
    Ok(LvrDecomposition {
        hedge_leg: hedge,
        lvr_leg: lvr,
    })
}
