use std::sync::Arc;

use serde::Deserialize;

use super::constant::fmt_bps;
use super::{parse_params, BuildContext, PoolState, Quote, QuoteRequest, QuoteResult, Refusal, Strategy, StrategyFactory};
use crate::cfmm::{CfmmPool, LevelSetCurve};
use crate::demand::Side;
use crate::error::{Error, Result};
use crate::units::Fraction;

/// A fee-charging CFMM: trades along the level set `q0 = psi(q1)`, fees go
/// to the markup account.
#[derive(Debug, Clone, PartialEq)]
pub struct CfmmStrategy {
    label: String,
    curve: LevelSetCurve,
    fee: f64,
}

impl CfmmStrategy {
    pub fn new(label: impl Into<String>, curve: LevelSetCurve, fee: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&fee) {
            return Err(Error::Config(format!("fee must lie in [0, 1), got {fee}")));
        }
        Ok(CfmmStrategy {
            label: label.into(),
            curve,
            fee,
        })
    }

    pub fn curve(&self) -> &LevelSetCurve {
        &self.curve
    }

    fn pool(&self, pool: &PoolState) -> CfmmPool {
        CfmmPool {
            curve: self.curve,
            q0: pool.q0,
            q1: pool.q1,
            fee: self.fee,
            fee_account: 0.0,
        }
    }
}

impl Strategy for CfmmStrategy {
    fn label(&self) -> &str {
        &self.label
    }

    fn uses_oracle(&self) -> bool {
        false
    }

    fn quote(&self, pool: &PoolState, request: &QuoteRequest) -> QuoteResult {
        let z = request.size;
        let base = z / request.reference_rate;
        let amm = self.pool(pool);
        match request.side {
            Side::ZeroForOne => {
                let (cost, fee) = amm.buy_ccy1_legs(base).map_err(refusal)?;
                Ok(Quote {
                    markup: cost / z - 1.0,
                    effective_rate: cost / base,
                    base_amount: base,
                    quote_amount: cost,
                    reserve_delta0: cost - fee,
                    accrual: fee,
                })
            }
            Side::OneForZero => {
                let (proceeds, fee) = amm.sell_ccy1_legs(base).map_err(refusal)?;
                Ok(Quote {
                    markup: 1.0 - proceeds / z,
                    effective_rate: proceeds / base,
                    base_amount: base,
                    quote_amount: proceeds,
                    reserve_delta0: -(proceeds + fee),
                    accrual: fee,
                })
            }
        }
    }

    fn apply_fill(&self, pool: &mut PoolState, side: Side, quote: &Quote) {
        match side {
            Side::ZeroForOne => pool.q1 -= quote.base_amount,
            Side::OneForZero => pool.q1 += quote.base_amount,
        }
        pool.q0 = self.curve.psi(pool.q1);
        pool.markup_account += quote.accrual;
    }

    fn marginal_price(&self, pool: &PoolState) -> Option<f64> {
        Some(-self.curve.psi_prime(pool.q1))
    }

    fn fee(&self) -> f64 {
        self.fee
    }

    fn max_size(&self, pool: &PoolState, side: Side, reference_rate: f64) -> f64 {
        match side {
            Side::ZeroForOne => pool.q1 * reference_rate * (1.0 - 1e-9),
            Side::OneForZero => 10.0 * (pool.q0 + pool.q1 * reference_rate),
        }
    }
}

fn refusal(e: Error) -> Refusal {
    match e {
        Error::Depletion(_) => Refusal::Depletion,
        other => Refusal::Numerical(other.to_string()),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CpmmParams {
    #[serde(default)]
    fee: Fraction,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StableSwapParams {
    #[serde(default)]
    fee: Fraction,
    amp: f64,
    /// Rate normalizing currency 1; defaults to the initial rate.
    scale: Option<f64>,
}

pub enum CfmmFactory {
    ConstantProduct,
    StableSwap,
}

impl StrategyFactory for CfmmFactory {
    fn kind(&self) -> &'static str {
        match self {
            CfmmFactory::ConstantProduct => "cpmm",
            CfmmFactory::StableSwap => "stableswap",
        }
    }

    fn build(&self, label: Option<&str>, params: &toml::Table, ctx: &BuildContext) -> Result<Arc<dyn Strategy>> {
        let (curve, fee, default_label) = match self {
            CfmmFactory::ConstantProduct => {
                let p: CpmmParams = parse_params(self.kind(), params)?;
                let curve = LevelSetCurve::constant_product(ctx.q0, ctx.q1)?;
                (curve, p.fee.get(), format!("cpmm_{}bps", fmt_bps(p.fee.get())))
            }
            CfmmFactory::StableSwap => {
                let p: StableSwapParams = parse_params(self.kind(), params)?;
                let scale = p.scale.unwrap_or(ctx.market.s0);
                let curve = LevelSetCurve::stableswap(p.amp, ctx.q0, ctx.q1, scale)?;
                (
                    curve,
                    p.fee.get(),
                    format!("stableswap_a{}_{}bps", p.amp, fmt_bps(p.fee.get())),
                )
            }
        };
        let label = label.map(str::to_string).unwrap_or(default_label);
        Ok(Arc::new(CfmmStrategy::new(label, curve, fee)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cpmm(fee: f64) -> CfmmStrategy {
        CfmmStrategy::new("cp", LevelSetCurve::constant_product(2e6, 1250.0).unwrap(), fee).unwrap()
    }

    #[test]
    fn buy_matches_hand_computation() {
        let s = cpmm(0.003);
        let mut pool = PoolState::new(2e6, 1250.0);
        let req = QuoteRequest {
            t: 0.0,
            size: 4000.0,
            side: Side::ZeroForOne,
            reference_rate: 1600.0,
        };
        let q = s.quote(&pool, &req).unwrap();
        // k = 2.5e9; buying 2.5 moves q0 to 2.5e9 / 1247.5.
        let gross = 2.5e9 / 1247.5 - 2e6;
        assert!((q.quote_amount - gross * 1.003).abs() < 1e-8);
        assert!((q.accrual - gross * 0.003).abs() < 1e-10);
        assert!(q.markup > 0.003);
        s.apply_fill(&mut pool, Side::ZeroForOne, &q);
        assert!((pool.q0 * pool.q1 - 2.5e9).abs() < 1e-3);
        assert!((pool.markup_account - gross * 0.003).abs() < 1e-10);
        let p = s.marginal_price(&pool).unwrap();
        assert!(p > 1600.0);
    }

    #[test]
    fn round_trip_costs_only_fees_and_curvature() {
        let s = cpmm(0.0);
        let mut pool = PoolState::new(2e6, 1250.0);
        let buy = QuoteRequest {
            t: 0.0,
            size: 4000.0,
            side: Side::ZeroForOne,
            reference_rate: 1600.0,
        };
        let q = s.quote(&pool, &buy).unwrap();
        s.apply_fill(&mut pool, Side::ZeroForOne, &q);
        let sell = QuoteRequest { side: Side::OneForZero, ..buy };
        let q2 = s.quote(&pool, &sell).unwrap();
        s.apply_fill(&mut pool, Side::OneForZero, &q2);
        assert!((pool.q1 - 1250.0).abs() < 1e-12);
        assert!((pool.q0 - 2e6).abs() < 1e-6);
        assert!((q.quote_amount - q2.quote_amount).abs() < 1e-6);
    }

    #[test]
    fn depletion_is_refused() {
        let s = cpmm(0.0);
        let pool = PoolState::new(2e6, 1250.0);
        let req = QuoteRequest {
            t: 0.0,
            size: 1250.0 * 1600.0,
            side: Side::ZeroForOne,
            reference_rate: 1600.0,
        };
        assert_eq!(s.quote(&pool, &req), Err(Refusal::Depletion));
    }

    #[test]
    fn stableswap_quotes_tighter_than_cpmm() {
        let ss = CfmmStrategy::new("ss", LevelSetCurve::stableswap(100.0, 2e6, 1250.0, 1600.0).unwrap(), 0.0).unwrap();
        let cp = cpmm(0.0);
        let pool = PoolState::new(2e6, 1250.0);
        let req = QuoteRequest {
            t: 0.0,
            size: 40_000.0,
            side: Side::ZeroForOne,
            reference_rate: 1600.0,
        };
        let a = ss.quote(&pool, &req).unwrap();
        let b = cp.quote(&pool, &req).unwrap();
        assert!(a.markup > 0.0 && a.markup < b.markup);
    }
}
