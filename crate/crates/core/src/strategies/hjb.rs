use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use serde::Deserialize;

use super::constant::oracle_quote;
use super::{parse_params, BuildContext, PoolState, QuoteRequest, QuoteResult, Refusal, Strategy, StrategyFactory};
use crate::demand::Side;
use crate::error::Result;
use crate::hjb::{self, HjbProblem, MarkupTable, ValueGrid};
use crate::units::{PerDay, Volatility};

/// A solved value function together with its markup table.
#[derive(Debug, Clone, PartialEq)]
pub struct SolvedGrid {
    pub problem: HjbProblem,
    pub reduced: bool,
    pub grid: ValueGrid,
    pub table: MarkupTable,
}

impl SolvedGrid {
    pub fn compute(problem: &HjbProblem, reduced: bool) -> Result<Self> {
        let grid = if reduced {
            hjb::reduced_solve(problem)?
        } else {
            hjb::solve(problem)?
        };
        let table = hjb::extract_markups(problem, &grid)?;
        Ok(SolvedGrid {
            problem: problem.clone(),
            reduced,
            grid,
            table,
        })
    }
}

/// Source of solved value functions, e.g. an in-memory memo or a disk cache.
pub trait GridProvider: Send + Sync {
    fn get(&self, problem: &HjbProblem, reduced: bool) -> Result<Arc<SolvedGrid>>;
}

/// Memoizes solves by problem hash for the lifetime of the value.
#[derive(Default)]
pub struct MemoryGrids {
    solved: Mutex<HashMap<String, Arc<SolvedGrid>>>,
}

impl MemoryGrids {
    pub fn insert(&self, solved: Arc<SolvedGrid>) {
        let key = solved.problem.cache_key(solved.reduced);
        self.solved.lock().unwrap().insert(key, solved);
    }

    pub fn lookup(&self, problem: &HjbProblem, reduced: bool) -> Option<Arc<SolvedGrid>> {
        self.solved.lock().unwrap().get(&problem.cache_key(reduced)).cloned()
    }

    pub fn clear(&self) {
        self.solved.lock().unwrap().clear();
    }
}

impl GridProvider for MemoryGrids {
    fn get(&self, problem: &HjbProblem, reduced: bool) -> Result<Arc<SolvedGrid>> {
        if let Some(s) = self.lookup(problem, reduced) {
            return Ok(s);
        }
        let solved = Arc::new(SolvedGrid::compute(problem, reduced)?);
        self.insert(solved.clone());
        Ok(solved)
    }
}

/// Markups read off the optimal pricing rule, quoted around the oracle rate.
pub struct HjbStrategy {
    label: String,
    solved: Arc<SolvedGrid>,
}

impl fmt::Debug for HjbStrategy {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.debug_struct("HjbStrategy")
            .field("label", &self.label)
            .field("gamma", &self.solved.problem.gamma)
            .field("reduced", &self.solved.reduced)
            .finish()
    }
}

impl HjbStrategy {
    pub fn new(label: impl Into<String>, solved: Arc<SolvedGrid>) -> Self {
        HjbStrategy {
            label: label.into(),
            solved,
        }
    }

    pub fn solved(&self) -> &SolvedGrid {
        &self.solved
    }

    /// Optimal markup at time `t` and deviation `y` for a trade of `size`.
    ///
    /// Sizes that match an atom read the markup table; other sizes evaluate
    /// the maximizer from the interpolated value function with the curve of
    /// the nearest atom. Deviations beyond the grid are clamped to its edge.
    pub fn markup(&self, t: f64, y: f64, size: f64, side: Side) -> std::result::Result<f64, Refusal> {
        let s = &*self.solved;
        let grid = &s.grid;
        let n = grid.time_index(t);
        let y_max = grid.y_max();
        let y = y.clamp(-y_max, y_max);
        let atom = s.problem.demand.nearest_atom(size);
        let atom_size = s.problem.demand.measure().atoms()[atom].size;
        if (size - atom_size).abs() <= 1e-9 * atom_size {
            let u = grid.y_coordinate(y).ok_or(Refusal::OutOfRange)?;
            let d = s.table.interpolate(n, u, atom, side);
            return if d.is_finite() { Ok(d) } else { Err(Refusal::OutOfRange) };
        }
        let target = match side {
            Side::ZeroForOne => y - size,
            Side::OneForZero => y + size,
        };
        let here = grid.value_at(n, y).ok_or(Refusal::OutOfRange)?;
        let there = grid.value_at(n, target).ok_or(Refusal::OutOfRange)?;
        let p = (here - there) / size;
        s.problem
            .demand
            .params(atom, side)
            .hamiltonian(size, p)
            .map(|h| h.maximizer)
            .map_err(|e| Refusal::Numerical(e.to_string()))
    }
}

impl Strategy for HjbStrategy {
    fn label(&self) -> &str {
        &self.label
    }

    fn uses_oracle(&self) -> bool {
        true
    }

    fn quote(&self, pool: &PoolState, request: &QuoteRequest) -> QuoteResult {
        let y = pool.deviation(request.reference_rate);
        let delta = self.markup(request.t, y, request.size, request.side)?;
        oracle_quote(pool, request, delta)
    }

    fn max_size(&self, pool: &PoolState, side: Side, reference_rate: f64) -> f64 {
        let y_max = self.solved.grid.y_max();
        let y = pool.deviation(reference_rate).clamp(-y_max, y_max);
        let (reserve, room) = match side {
            Side::ZeroForOne => (pool.q1 * reference_rate, y + y_max),
            Side::OneForZero => (pool.q0, y_max - y),
        };
        reserve.min(room) * (1.0 - 1e-12)
    }

    fn inventory_bound(&self) -> Option<f64> {
        Some(self.solved.grid.y_max())
    }

    fn gamma(&self) -> Option<f64> {
        Some(self.solved.problem.gamma)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Params {
    gamma: f64,
    /// Curve height assumed by the rule, replacing the market's.
    lambda: Option<PerDay>,
    /// Volatility assumed by the rule.
    sigma: Option<Volatility>,
    /// Drift assumed by the rule.
    mu: Option<PerDay>,
    #[serde(default)]
    reduced: bool,
    half_width_steps: Option<usize>,
    n_time: Option<usize>,
}

pub struct HjbFactory;

impl HjbFactory {
    /// Problem the rule is solved for, honoring overrides of the model.
    pub fn problem(
        ctx: &BuildContext,
        gamma: f64,
        lambda: Option<f64>,
        sigma: Option<f64>,
        mu: Option<f64>,
    ) -> Result<HjbProblem> {
        let demand = match lambda {
            Some(l) => ctx.demand.with_lambda(l),
            None => ctx.demand.clone(),
        };
        let step = hjb::grid_step(&demand)?;
        let problem = HjbProblem {
            mu: mu.unwrap_or(ctx.market.mu),
            sigma: sigma.unwrap_or(ctx.market.sigma),
            gamma,
            horizon: ctx.market.horizon,
            demand,
            y_max: step * ctx.half_width_steps as f64,
            n_time: ctx.n_time,
        };
        problem.validate()?;
        Ok(problem)
    }
}

impl StrategyFactory for HjbFactory {
    fn kind(&self) -> &'static str {
        "hjb"
    }

    fn build(&self, label: Option<&str>, params: &toml::Table, ctx: &BuildContext) -> Result<Arc<dyn Strategy>> {
        let p: Params = parse_params("hjb", params)?;
        let mut ctx = ctx.clone();
        if let Some(h) = p.half_width_steps {
            ctx.half_width_steps = h;
        }
        if let Some(n) = p.n_time {
            ctx.n_time = n;
        }
        let problem = Self::problem(
            &ctx,
            p.gamma,
            p.lambda.map(PerDay::get),
            p.sigma.map(Volatility::get),
            p.mu.map(PerDay::get),
        )?;
        let solved = ctx.grids.get(&problem, p.reduced)?;
        let label = label
            .map(str::to_string)
            .unwrap_or_else(|| format!("hjb_gamma{:e}", p.gamma));
        Ok(Arc::new(HjbStrategy::new(label, solved)))
    }
}
