//! Backward solver for the value function `theta(t, y)` of the optimal
//! oracle-based pricing problem, and extraction of the optimal markups.
//!
//! The state `y` is the currency-0 value of the deviation of currency-1
//! reserves from their initial level. Each backward time step is split
//! (Lie splitting) into
//!
//! 1. the differential part
//!    `d_t theta + mu y (1 + d_y theta) - gamma/2 sigma^2 y^2 + 1/2 sigma^2 y^2 d_yy theta`,
//!    discretized implicitly with upwinded drift and zero-slope (ghost node)
//!    boundaries at `+-y_max`, one tridiagonal solve per step;
//! 2. the nonlocal part
//!    `sum_z w z [H01(z, (theta(y) - theta(y - z)) / z) + H10(z, (theta(y) - theta(y + z)) / z)]`,
//!    discretized implicitly and solved by Newton-Raphson over the grid.
//!
//! The y-grid step divides every trade size, so `y +- z` is always a node.
//! Trades that would leave `[-y_max, y_max]` are not accepted.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::demand::{DemandCurve, Side};
use crate::error::{Error, Result};

const NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX_ITER: usize = 50;
const MAX_HALVINGS: usize = 30;

/// Default horizon discretization.
pub const DEFAULT_TIME_STEPS: usize = 5000;
/// Default grid half-width, in numbers of grid steps.
pub const DEFAULT_HALF_WIDTH_STEPS: usize = 125;

/// Parameters of one HJB solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HjbProblem {
    /// Drift of the exchange rate, per day.
    pub mu: f64,
    /// Volatility, per square-root day.
    pub sigma: f64,
    /// Risk aversion, per unit of currency 0.
    pub gamma: f64,
    /// Horizon, days.
    pub horizon: f64,
    /// Demand curves assumed by the pricing rule.
    pub demand: DemandCurve,
    /// Grid half-width, currency 0.
    pub y_max: f64,
    /// Number of time steps.
    pub n_time: usize,
}

impl HjbProblem {
    /// Problem with the default grid: `y_max` = 125 grid steps, 5000 time steps.
    pub fn with_default_grid(mu: f64, sigma: f64, gamma: f64, horizon: f64, demand: DemandCurve) -> Result<Self> {
        let step = grid_step(&demand)?;
        let p = HjbProblem {
            mu,
            sigma,
            gamma,
            horizon,
            demand,
            y_max: step * DEFAULT_HALF_WIDTH_STEPS as f64,
            n_time: DEFAULT_TIME_STEPS,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Domain(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Domain(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Domain(format!("horizon must be > 0, got {}", self.horizon)));
        }
        if !self.mu.is_finite() {
            return Err(Error::Domain("mu must be finite".into()));
        }
        if self.n_time == 0 {
            return Err(Error::Domain("n_time must be >= 1".into()));
        }
        let step = grid_step(&self.demand)?;
        let ratio = self.y_max / step;
        if !(ratio >= 1.0 && (ratio - ratio.round()).abs() < 1e-9) {
            return Err(Error::Domain(format!(
                "y_max {} must be a positive multiple of the grid step {step}",
                self.y_max
            )));
        }
        Ok(())
    }

    /// Grid step: the gcd of the atom sizes.
    pub fn grid_step(&self) -> Result<f64> {
        grid_step(&self.demand)
    }

    pub fn time_step(&self) -> f64 {
        self.horizon / self.n_time as f64
    }

    pub fn n_y(&self) -> Result<usize> {
        let half = (self.y_max / self.grid_step()?).round() as usize;
        Ok(2 * half + 1)
    }

    /// Hex SHA-256 of the serialized problem, distinguishing the reduced
    /// scheme.
    pub fn cache_key(&self, reduced: bool) -> String {
        let json = serde_json::to_string(self).expect("problem serializes");
        let mut h = Sha256::new();
        h.update(if reduced { b"reduced:".as_slice() } else { b"full:".as_slice() });
        h.update(json.as_bytes());
        hex::encode(h.finalize())
    }
}

/// Greatest common divisor of the (integer-valued) atom sizes.
pub fn grid_step(demand: &DemandCurve) -> Result<f64> {
    let mut g: u64 = 0;
    for a in demand.measure().atoms() {
        let r = a.size.round();
        if (a.size - r).abs() > 1e-9 * a.size.max(1.0) || r < 1.0 {
            return Err(Error::Domain(format!(
                "atom size {} must be a positive integer amount of currency 0",
                a.size
            )));
        }
        g = gcd(g, r as u64);
    }
    Ok(g as f64)
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Value function on a time x deviation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueGrid {
    times: Vec<f64>,
    ys: Vec<f64>,
    step: f64,
    theta: Vec<f64>,
}

impl ValueGrid {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn n_ys(&self) -> usize {
        self.ys.len()
    }

    pub fn y_step(&self) -> f64 {
        self.step
    }

    pub fn y_max(&self) -> f64 {
        *self.ys.last().unwrap()
    }

    pub fn time_step(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    pub fn row(&self, n: usize) -> &[f64] {
        let m = self.ys.len();
        &self.theta[n * m..(n + 1) * m]
    }

    pub fn at(&self, n: usize, i: usize) -> f64 {
        self.theta[n * self.ys.len() + i]
    }

    /// Index of the time node at or before `t`, clamped to the grid.
    pub fn time_index(&self, t: f64) -> usize {
        let dt = self.time_step();
        let last = self.times.len() - 1;
        if t <= 0.0 {
            return 0;
        }
        // Small tolerance so that exact node times map onto themselves.
        let n = (t / dt + 1e-9).floor() as usize;
        n.min(last)
    }

    /// Fractional grid coordinate of `y`; `None` outside the grid.
    pub fn y_coordinate(&self, y: f64) -> Option<f64> {
        let u = (y - self.ys[0]) / self.step;
        let last = (self.ys.len() - 1) as f64;
        if u < -1e-9 || u > last + 1e-9 {
            None
        } else {
            Some(u.clamp(0.0, last))
        }
    }

    /// `theta(t_n, y)` with linear interpolation in `y`.
    pub fn value_at(&self, n: usize, y: f64) -> Option<f64> {
        let u = self.y_coordinate(y)?;
        let row = self.row(n);
        let i = (u.floor() as usize).min(row.len() - 2);
        let w = u - i as f64;
        Some(row[i] * (1.0 - w) + row[i + 1] * w)
    }

    /// Flat binary layout, little endian:
    /// `b"LPFVGRD1"`, `u64 n_times`, `u64 n_ys`, `f64 y_step`,
    /// `n_times` f64 times, `n_ys` f64 ys, then theta row by row
    /// (time-major, `n_times * n_ys` f64).
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
        put(GRID_MAGIC)?;
        put(&(self.times.len() as u64).to_le_bytes())?;
        put(&(self.ys.len() as u64).to_le_bytes())?;
        put(&self.step.to_le_bytes())?;
        for v in self.times.iter().chain(&self.ys).chain(&self.theta) {
            put(&v.to_le_bytes())?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let bytes = read_all(path)?;
        let corrupt = |reason: &str| Error::CorruptCache {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        let mut r = ByteReader::new(&bytes);
        if r.take(8).ok_or_else(|| corrupt("truncated header"))? != GRID_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let nt = r.u64().ok_or_else(|| corrupt("truncated header"))? as usize;
        let ny = r.u64().ok_or_else(|| corrupt("truncated header"))? as usize;
        let step = r.f64().ok_or_else(|| corrupt("truncated header"))?;
        if nt < 2 || ny < 3 || nt.checked_mul(ny).is_none() {
            return Err(corrupt("bad dimensions"));
        }
        if r.remaining() != 8 * (nt + ny + nt * ny) {
            return Err(corrupt("size mismatch"));
        }
        let times = r.f64s(nt).unwrap();
        let ys = r.f64s(ny).unwrap();
        let theta = r.f64s(nt * ny).unwrap();
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(corrupt("non-finite value"));
        }
        Ok(ValueGrid { times, ys, step, theta })
    }

    /// CSV with columns `time_index,y_index,value`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["time_index", "y_index", "value"])?;
        for n in 0..self.n_times() {
            for (i, v) in self.row(n).iter().enumerate() {
                w.write_record([n.to_string(), i.to_string(), v.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

const GRID_MAGIC: &[u8; 8] = b"LPFVGRD1";
const TABLE_MAGIC: &[u8; 8] = b"LPFMKUP1";

/// Optimal markups on the grid. Entries for trades that would leave the
/// grid are `+inf` (trade refused).
#[derive(Debug, Clone, PartialEq)]
pub struct MarkupTable {
    n_times: usize,
    n_ys: usize,
    n_atoms: usize,
    data: Vec<f64>,
}

impl MarkupTable {
    fn index(&self, n: usize, i: usize, atom: usize, side: Side) -> usize {
        ((n * self.n_ys + i) * self.n_atoms + atom) * 2 + side.index()
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn n_ys(&self) -> usize {
        self.n_ys
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn get(&self, n: usize, i: usize, atom: usize, side: Side) -> f64 {
        self.data[self.index(n, i, atom, side)]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    /// Markup at fractional grid coordinate `u`, linear in `y`.
    pub fn interpolate(&self, n: usize, u: f64, atom: usize, side: Side) -> f64 {
        let i = (u.floor() as usize).min(self.n_ys - 2);
        let w = u - i as f64;
        let a = self.get(n, i, atom, side);
        if w == 0.0 {
            return a;
        }
        let b = self.get(n, i + 1, atom, side);
        if w == 1.0 {
            return b;
        }
        if a.is_infinite() || b.is_infinite() {
            return f64::INFINITY;
        }
        a * (1.0 - w) + b * w
    }

    /// Flat binary layout, little endian: `b"LPFMKUP1"`, `u64 n_times`,
    /// `u64 n_ys`, `u64 n_atoms`, then `n_times * n_ys * n_atoms * 2` f64
    /// indexed `((time * n_ys + y) * n_atoms + atom) * 2 + side`
    /// (side 0 = zero-for-one, 1 = one-for-zero; `+inf` = refused).
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
        put(TABLE_MAGIC)?;
        for n in [self.n_times, self.n_ys, self.n_atoms] {
            put(&(n as u64).to_le_bytes())?;
        }
        for v in &self.data {
            put(&v.to_le_bytes())?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let bytes = read_all(path)?;
        let corrupt = |reason: &str| Error::CorruptCache {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        let mut r = ByteReader::new(&bytes);
        if r.take(8).ok_or_else(|| corrupt("truncated header"))? != TABLE_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let nt = r.u64().ok_or_else(|| corrupt("truncated header"))? as usize;
        let ny = r.u64().ok_or_else(|| corrupt("truncated header"))? as usize;
        let na = r.u64().ok_or_else(|| corrupt("truncated header"))? as usize;
        let len = nt
            .checked_mul(ny)
            .and_then(|v| v.checked_mul(na))
            .and_then(|v| v.checked_mul(2))
            .ok_or_else(|| corrupt("bad dimensions"))?;
        if ny < 2 || r.remaining() != 8 * len {
            return Err(corrupt("size mismatch"));
        }
        let data = r.f64s(len).unwrap();
        if data.iter().any(|v| v.is_nan()) {
            return Err(corrupt("NaN entry"));
        }
        Ok(MarkupTable {
            n_times: nt,
            n_ys: ny,
            n_atoms: na,
            data,
        })
    }
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::new();
    f.read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;
    Ok(buf)
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        ByteReader { bytes, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let out = self.bytes.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(out)
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }

    fn f64(&mut self) -> Option<f64> {
        Some(f64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }

    fn f64s(&mut self, n: usize) -> Option<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Full,
    /// No drift and no second-order term; the penalty is kept.
    Reduced,
}

/// Solve the HJB equation backward from `theta(T, .) = 0`.
pub fn solve(problem: &HjbProblem) -> Result<ValueGrid> {
    solve_with(problem, Mode::Full)
}

/// Same scheme with `mu = 0` and the `1/2 sigma^2 y^2 d_yy` term dropped.
pub fn reduced_solve(problem: &HjbProblem) -> Result<ValueGrid> {
    solve_with(problem, Mode::Reduced)
}

struct Jump {
    /// Offset in grid steps.
    offset: usize,
    size: f64,
    weight: f64,
    atom: usize,
}

fn jumps(problem: &HjbProblem, step: f64) -> Vec<Jump> {
    problem
        .demand
        .measure()
        .atoms()
        .iter()
        .enumerate()
        .map(|(atom, a)| Jump {
            offset: (a.size / step).round() as usize,
            size: a.size,
            weight: a.weight,
            atom,
        })
        .collect()
}

fn solve_with(problem: &HjbProblem, mode: Mode) -> Result<ValueGrid> {
    problem.validate()?;
    let step = problem.grid_step()?;
    let ny = problem.n_y()?;
    let nt = problem.n_time + 1;
    let dt = problem.time_step();
    let ys: Vec<f64> = (0..ny)
        .map(|i| (i as f64 - (ny / 2) as f64) * step)
        .collect();
    let times: Vec<f64> = (0..nt).map(|n| n as f64 * dt).collect();
    let jumps = jumps(problem, step);
    let bandwidth = jumps.iter().map(|j| j.offset).max().unwrap();

    let mu = if mode == Mode::Reduced { 0.0 } else { problem.mu };
    let sig2 = problem.sigma * problem.sigma;
    let source: Vec<f64> = ys
        .iter()
        .map(|&y| mu * y - 0.5 * problem.gamma * sig2 * y * y)
        .collect();

    let diffusion = (mode == Mode::Full).then(|| DiffusionOperator::new(&ys, step, mu, sig2, dt));

    let mut theta = vec![0.0; nt * ny];
    let mut next = vec![0.0; ny];
    let mut half = vec![0.0; ny];
    let mut newton = NonlocalNewton::new(ny, bandwidth);

    for n in (0..problem.n_time).rev() {
        for i in 0..ny {
            half[i] = next[i] + dt * source[i];
        }
        if let Some(op) = &diffusion {
            op.solve_in_place(&mut half);
        }
        let row = newton.solve(problem, &jumps, dt, &half, n)?;
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::HjbNonFinite { step: n });
        }
        theta[n * ny..(n + 1) * ny].copy_from_slice(row);
        next.copy_from_slice(row);
    }

    Ok(ValueGrid {
        times,
        ys,
        step,
        theta,
    })
}

/// `I - dt L` for the differential part, pre-factorized (Thomas).
struct DiffusionOperator {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl DiffusionOperator {
    fn new(ys: &[f64], step: f64, mu: f64, sig2: f64, dt: f64) -> Self {
        let n = ys.len();
        let mut lower = vec![0.0; n];
        let mut diag = vec![1.0; n];
        let mut upper = vec![0.0; n];
        let h2 = step * step;
        for i in 0..n {
            let y = ys[i];
            let a = 0.5 * sig2 * y * y / h2;
            if i == 0 {
                // ghost node theta_{-1} = theta_1, zero slope kills the drift
                diag[i] += dt * 2.0 * a;
                upper[i] -= dt * 2.0 * a;
                continue;
            }
            if i == n - 1 {
                diag[i] += dt * 2.0 * a;
                lower[i] -= dt * 2.0 * a;
                continue;
            }
            let b = mu * y / step;
            let (bl, bu) = if b >= 0.0 { (0.0, b) } else { (-b, 0.0) };
            lower[i] -= dt * (a + bl);
            upper[i] -= dt * (a + bu);
            diag[i] += dt * (2.0 * a + bl + bu);
        }
        DiffusionOperator { lower, diag, upper }
    }

    fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        let mut c = vec![0.0; n];
        let mut beta = self.diag[0];
        c[0] = self.upper[0] / beta;
        rhs[0] /= beta;
        for i in 1..n {
            beta = self.diag[i] - self.lower[i] * c[i - 1];
            c[i] = self.upper[i] / beta;
            rhs[i] = (rhs[i] - self.lower[i] * rhs[i - 1]) / beta;
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= c[i] * rhs[i + 1];
        }
    }
}

/// Workspace for the implicit nonlocal sub-step
/// `theta - dt N(theta) = rhs`.
struct NonlocalNewton {
    n: usize,
    bw: usize,
    theta: Vec<f64>,
    residual: Vec<f64>,
    trial: Vec<f64>,
    trial_residual: Vec<f64>,
    band: BandMatrix,
    update: Vec<f64>,
}

impl NonlocalNewton {
    fn new(n: usize, bw: usize) -> Self {
        NonlocalNewton {
            n,
            bw,
            theta: vec![0.0; n],
            residual: vec![0.0; n],
            trial: vec![0.0; n],
            trial_residual: vec![0.0; n],
            band: BandMatrix::new(n, bw),
            update: vec![0.0; n],
        }
    }

    fn solve(
        &mut self,
        problem: &HjbProblem,
        jumps: &[Jump],
        dt: f64,
        rhs: &[f64],
        step: usize,
    ) -> Result<&[f64]> {
        self.theta.copy_from_slice(rhs);
        let mut res_norm = residual(problem, jumps, dt, rhs, &self.theta, &mut self.residual, None)?;
        for _ in 0..NEWTON_MAX_ITER {
            self.band.clear();
            residual(
                problem,
                jumps,
                dt,
                rhs,
                &self.theta,
                &mut self.residual,
                Some(&mut self.band),
            )?;
            self.update.copy_from_slice(&self.residual);
            self.band.solve_in_place(&mut self.update);

            let scale = self.theta.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..MAX_HALVINGS {
                for i in 0..self.n {
                    self.trial[i] = self.theta[i] - t * self.update[i];
                }
                let r = residual(problem, jumps, dt, rhs, &self.trial, &mut self.trial_residual, None)?;
                if r <= res_norm || r <= NEWTON_TOL * scale {
                    res_norm = r;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                let upd = self.update.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                return Err(Error::HjbNonConvergence { step, update: upd });
            }
            std::mem::swap(&mut self.theta, &mut self.trial);
            let upd = t * self.update.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if upd <= NEWTON_TOL * scale {
                return Ok(&self.theta);
            }
        }
        let upd = self.update.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if self.bw == 0 {
            unreachable!("bandwidth is at least one grid step");
        }
        Err(Error::HjbNonConvergence { step, update: upd })
    }
}

/// Residual `G = theta - dt N(theta) - rhs`; fills the Jacobian
/// `I - dt dN/dtheta` when requested. Returns `max |G|`.
fn residual(
    problem: &HjbProblem,
    jumps: &[Jump],
    dt: f64,
    rhs: &[f64],
    theta: &[f64],
    out: &mut [f64],
    mut jac: Option<&mut BandMatrix>,
) -> Result<f64> {
    let n = theta.len();
    let mut norm = 0.0f64;
    for i in 0..n {
        let mut nl = 0.0;
        if let Some(j) = jac.as_deref_mut() {
            j.add(i, i, 1.0);
        }
        for jump in jumps {
            let k = jump.offset;
            if i >= k {
                let p = (theta[i] - theta[i - k]) / jump.size;
                let h = problem
                    .demand
                    .params(jump.atom, Side::ZeroForOne)
                    .hamiltonian(jump.size, p)?;
                nl += jump.weight * jump.size * h.value;
                if let Some(j) = jac.as_deref_mut() {
                    let d = dt * jump.weight * h.intensity;
                    j.add(i, i, d);
                    j.add(i, i - k, -d);
                }
            }
            if i + k < n {
                let p = (theta[i] - theta[i + k]) / jump.size;
                let h = problem
                    .demand
                    .params(jump.atom, Side::OneForZero)
                    .hamiltonian(jump.size, p)?;
                nl += jump.weight * jump.size * h.value;
                if let Some(j) = jac.as_deref_mut() {
                    let d = dt * jump.weight * h.intensity;
                    j.add(i, i, d);
                    j.add(i, i + k, -d);
                }
            }
        }
        let g = theta[i] - dt * nl - rhs[i];
        out[i] = g;
        norm = norm.max(g.abs());
    }
    Ok(norm)
}

/// Square band matrix with equal lower and upper bandwidth, LU without
/// pivoting. The Newton Jacobian is a strictly diagonally dominant
/// M-matrix, for which this is stable.
struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    fn new(n: usize, bw: usize) -> Self {
        BandMatrix {
            n,
            bw,
            data: vec![0.0; n * (2 * bw + 1)],
        }
    }

    fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        i * (2 * self.bw + 1) + (j + self.bw - i)
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.slot(i, j)]
    }

    /// Factorizes in place and solves; the matrix is consumed.
    fn solve_in_place(&mut self, rhs: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        for k in 0..n {
            let pivot = self.get(k, k);
            let last = (k + bw).min(n - 1);
            for i in k + 1..=last {
                let f = self.get(i, k) / pivot;
                if f == 0.0 {
                    continue;
                }
                for j in k..=last {
                    let v = self.get(k, j);
                    if v != 0.0 {
                        self.add(i, j, -f * v);
                    }
                }
                rhs[i] -= f * rhs[k];
            }
        }
        for k in (0..n).rev() {
            let last = (k + bw).min(n - 1);
            let mut s = rhs[k];
            for (j, r) in rhs.iter().enumerate().take(last + 1).skip(k + 1) {
                s -= self.get(k, j) * r;
            }
            rhs[k] = s / self.get(k, k);
        }
    }
}

/// Optimal markups `delta_bar(z, (theta(t,y) - theta(t,y -+ z)) / z)` at
/// every node.
pub fn extract_markups(problem: &HjbProblem, grid: &ValueGrid) -> Result<MarkupTable> {
    let step = grid.y_step();
    let jumps = jumps(problem, step);
    let (nt, ny, na) = (grid.n_times(), grid.n_ys(), jumps.len());
    let mut table = MarkupTable {
        n_times: nt,
        n_ys: ny,
        n_atoms: na,
        data: vec![f64::INFINITY; nt * ny * na * 2],
    };
    for n in 0..nt {
        let row = grid.row(n);
        for i in 0..ny {
            for jump in &jumps {
                let k = jump.offset;
                if i >= k {
                    let p = (row[i] - row[i - k]) / jump.size;
                    let h = problem
                        .demand
                        .params(jump.atom, Side::ZeroForOne)
                        .hamiltonian(jump.size, p)?;
                    let idx = table.index(n, i, jump.atom, Side::ZeroForOne);
                    table.data[idx] = h.maximizer;
                }
                if i + k < ny {
                    let p = (row[i] - row[i + k]) / jump.size;
                    let h = problem
                        .demand
                        .params(jump.atom, Side::OneForZero)
                        .hamiltonian(jump.size, p)?;
                    let idx = table.index(n, i, jump.atom, Side::OneForZero);
                    table.data[idx] = h.maximizer;
                }
            }
        }
    }
    Ok(table)
}
