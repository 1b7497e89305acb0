use std::sync::Arc;

use serde::Deserialize;

use super::{parse_params, BuildContext, PoolState, Quote, QuoteRequest, QuoteResult, Refusal, Strategy, StrategyFactory};
use crate::demand::Side;
use crate::error::{Error, Result};
use crate::units::Fraction;

/// Fixed markups around the oracle rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantStrategy {
    label: String,
    markups: [f64; 2],
}

impl ConstantStrategy {
    pub fn new(label: impl Into<String>, zero_for_one: f64, one_for_zero: f64) -> Result<Self> {
        for d in [zero_for_one, one_for_zero] {
            if !d.is_finite() || d <= -1.0 {
                return Err(Error::Config(format!("markup {d} must be finite and above -1")));
            }
        }
        Ok(ConstantStrategy {
            label: label.into(),
            markups: [zero_for_one, one_for_zero],
        })
    }

    pub fn symmetric(label: impl Into<String>, markup: f64) -> Result<Self> {
        Self::new(label, markup, markup)
    }
}

/// Terms of an oracle-anchored trade with markup `delta`.
pub(crate) fn oracle_quote(pool: &PoolState, request: &QuoteRequest, delta: f64) -> QuoteResult {
    let z = request.size;
    let base = z / request.reference_rate;
    match request.side {
        Side::ZeroForOne => {
            if base >= pool.q1 {
                return Err(Refusal::Depletion);
            }
            Ok(Quote {
                markup: delta,
                effective_rate: request.reference_rate * (1.0 + delta),
                base_amount: base,
                quote_amount: z * (1.0 + delta),
                reserve_delta0: z,
                accrual: z * delta,
            })
        }
        Side::OneForZero => {
            if z >= pool.q0 {
                return Err(Refusal::Depletion);
            }
            Ok(Quote {
                markup: delta,
                effective_rate: request.reference_rate * (1.0 - delta),
                base_amount: base,
                quote_amount: z * (1.0 - delta),
                reserve_delta0: -z,
                accrual: z * delta,
            })
        }
    }
}

impl Strategy for ConstantStrategy {
    fn label(&self) -> &str {
        &self.label
    }

    fn uses_oracle(&self) -> bool {
        true
    }

    fn quote(&self, pool: &PoolState, request: &QuoteRequest) -> QuoteResult {
        oracle_quote(pool, request, self.markups[request.side.index()])
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Params {
    markup: Option<Fraction>,
    markup_zero_for_one: Option<Fraction>,
    markup_one_for_zero: Option<Fraction>,
}

pub struct ConstantFactory;

impl StrategyFactory for ConstantFactory {
    fn kind(&self) -> &'static str {
        "constant"
    }

    fn build(&self, label: Option<&str>, params: &toml::Table, _ctx: &BuildContext) -> Result<Arc<dyn Strategy>> {
        let p: Params = parse_params("constant", params)?;
        let both = p.markup.map(Fraction::get);
        let d0 = p.markup_zero_for_one.map(Fraction::get).or(both);
        let d1 = p.markup_one_for_zero.map(Fraction::get).or(both);
        let (Some(d0), Some(d1)) = (d0, d1) else {
            return Err(Error::Config("strategy `constant` needs `markup` or both per-side markups".into()));
        };
        let label = label
            .map(str::to_string)
            .unwrap_or_else(|| format!("constant_{}bps", fmt_bps(d0)));
        Ok(Arc::new(ConstantStrategy::new(label, d0, d1)?))
    }
}

pub(crate) fn fmt_bps(x: f64) -> String {
    let bps = (x * 1e10).round() / 1e6;
    format!("{bps}")
}
