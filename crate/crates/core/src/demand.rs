//! Logistic demand curves of liquidity takers.
//!
//! A trade of size `z` (currency-0 notional) quoted with markup `delta`
//! arrives at rate `lambda / (1 + exp(alpha + beta * delta))`. Markups are
//! dimensionless fractions (10 bps = 0.0010) and `beta` is expressed per
//! unit of fraction, so `beta * delta = 1.3` at 10 bps with `beta = 1300`.
//!
//! The Hamiltonian `H(z, p) = sup_{delta >= -C} Lambda(z, delta) (delta - p)`
//! and its maximizer drive the HJB solver. The interior maximizer solves
//! `delta - p = (1 + exp(-(alpha + beta delta))) / beta`; writing
//! `x = alpha + beta delta` this becomes `x - exp(-x) = 1 + alpha + beta p`,
//! a strictly increasing scalar equation solved by safeguarded Newton.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default lower bound `C` on admissible markups (markups never below -100%).
pub const DEFAULT_MARKUP_FLOOR: f64 = 1.0;

const HAMILTONIAN_TOL: f64 = 1e-12;
const HAMILTONIAN_MAX_ITER: usize = 100;

/// Direction of a liquidity-taker trade, seen from the pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// The pool sells currency 1 and receives currency 0 (the taker buys ccy1).
    ZeroForOne,
    /// The pool sells currency 0 and receives currency 1 (the taker sells ccy1).
    OneForZero,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::ZeroForOne, Side::OneForZero];

    pub fn index(self) -> usize {
        match self {
            Side::ZeroForOne => 0,
            Side::OneForZero => 1,
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::ZeroForOne => Side::OneForZero,
            Side::OneForZero => Side::ZeroForOne,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::ZeroForOne => "zero_for_one",
            Side::OneForZero => "one_for_zero",
        }
    }
}

/// Parameters of one logistic demand curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityParams {
    /// Maximum trade intensity, per day.
    pub lambda: f64,
    /// Dimensionless shift of the curve.
    pub alpha: f64,
    /// Markup sensitivity, per unit of markup fraction.
    pub beta: f64,
    /// Lower bound `C` on admissible markups.
    pub floor: f64,
}

impl IntensityParams {
    pub fn new(lambda: f64, alpha: f64, beta: f64) -> Result<Self> {
        Self::with_floor(lambda, alpha, beta, DEFAULT_MARKUP_FLOOR)
    }

    pub fn with_floor(lambda: f64, alpha: f64, beta: f64, floor: f64) -> Result<Self> {
        let p = IntensityParams {
            lambda,
            alpha,
            beta,
            floor,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Domain(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Domain(format!("beta must be > 0, got {}", self.beta)));
        }
        if !(self.floor > 0.0 && self.floor.is_finite()) {
            return Err(Error::Domain(format!("markup floor C must be > 0, got {}", self.floor)));
        }
        if !self.alpha.is_finite() {
            return Err(Error::Domain("alpha must be finite".into()));
        }
        Ok(())
    }

    /// Same curve with a different height.
    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    /// Arrival rate `Lambda(delta)`, per day.
    pub fn intensity(&self, delta: f64) -> f64 {
        self.lambda * logistic_tail(self.alpha + self.beta * delta)
    }

    /// `d Lambda / d delta`.
    pub fn intensity_slope(&self, delta: f64) -> f64 {
        let s = logistic_tail(self.alpha + self.beta * delta);
        -self.lambda * self.beta * s * (1.0 - s)
    }

    /// Markup at which the curve delivers `target` trades per day.
    pub fn inverse_intensity(&self, target: f64) -> Result<f64> {
        if !(target > 0.0 && target < self.lambda) {
            return Err(Error::Domain(format!(
                "target rate {target} outside (0, {})",
                self.lambda
            )));
        }
        Ok(((self.lambda / target - 1.0).ln() - self.alpha) / self.beta)
    }

    /// `H(p)` together with its maximizer.
    pub fn hamiltonian(&self, size: f64, p: f64) -> Result<HamiltonianPoint> {
        if !p.is_finite() {
            return Err(Error::HamiltonianNonConvergence { p, z: size });
        }
        let target = 1.0 + self.alpha + self.beta * p;
        let x_floor = self.alpha - self.beta * self.floor;

        // g(x) = x - exp(-x) is increasing; if g at the floor already exceeds
        // the target the unconstrained root lies below -C.
        if foc_lhs(x_floor) >= target {
            let delta = -self.floor;
            let intensity = self.intensity(delta);
            return Ok(HamiltonianPoint {
                value: intensity * (delta - p),
                maximizer: delta,
                intensity,
                clamped: true,
            });
        }

        let mut lo = target.max(x_floor);
        let mut hi = if target > -1.0 { target + 1.0 } else { 0.0 };
        let mut x = if target > -1.0 {
            target + (-target).exp().min(1.0) * 0.5
        } else {
            -(-target).ln()
        };
        x = x.clamp(lo, hi);

        let mut converged = false;
        for _ in 0..HAMILTONIAN_MAX_ITER {
            let e = (-x).exp();
            let r = x - e - target;
            if r.abs() <= HAMILTONIAN_TOL * target.abs().max(1.0) {
                converged = true;
                break;
            }
            if r < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let next = x - r / (1.0 + e);
            x = if next.is_finite() && next > lo && next < hi {
                next
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= f64::EPSILON * x.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::HamiltonianNonConvergence { p, z: size });
        }

        let delta = (x - self.alpha) / self.beta;
        let intensity = self.lambda * logistic_tail(x);
        // At the root delta - p = (1 + e^{-x}) / beta, which avoids
        // cancellation when p is large.
        let spread = (1.0 + (-x).exp()) / self.beta;
        Ok(HamiltonianPoint {
            value: intensity * spread,
            maximizer: delta,
            intensity,
            clamped: false,
        })
    }
}

/// Value and maximizer of the Hamiltonian at one `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianPoint {
    /// `H(p)`, a rate times a markup fraction.
    pub value: f64,
    /// Maximizing markup `delta_bar(p)`.
    pub maximizer: f64,
    /// `Lambda(delta_bar(p))`; by the envelope theorem `dH/dp = -intensity`.
    pub intensity: f64,
    /// Whether the maximizer sits on the markup floor `-C`.
    pub clamped: bool,
}

impl HamiltonianPoint {
    pub fn slope(&self) -> f64 {
        -self.intensity
    }
}

fn foc_lhs(x: f64) -> f64 {
    x - (-x).exp()
}

/// `1 / (1 + e^x)` without overflow.
fn logistic_tail(x: f64) -> f64 {
    if x > 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// One atom of the discrete trade-size measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    /// Trade size, currency-0 notional.
    pub size: f64,
    /// Mass of the atom (scales the intensity).
    pub weight: f64,
}

/// Discrete trade-size measure `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeMeasure {
    atoms: Vec<Atom>,
}

impl SizeMeasure {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Domain("size measure needs at least one atom".into()));
        }
        for a in &atoms {
            if !(a.size > 0.0 && a.size.is_finite()) {
                return Err(Error::Domain(format!("atom size must be > 0, got {}", a.size)));
            }
            if !(a.weight >= 0.0 && a.weight.is_finite()) {
                return Err(Error::Domain(format!("atom weight must be >= 0, got {}", a.weight)));
            }
        }
        Ok(SizeMeasure { atoms })
    }

    /// Dirac mass of unit weight.
    pub fn dirac(size: f64) -> Result<Self> {
        Self::new(vec![Atom { size, weight: 1.0 }])
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

/// Demand model of the liquidity takers: a size measure and one logistic
/// curve per (atom, side).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandCurve {
    measure: SizeMeasure,
    params: Vec<[IntensityParams; 2]>,
}

impl DemandCurve {
    /// Same curve for every atom, possibly asymmetric across sides.
    pub fn uniform(
        measure: SizeMeasure,
        zero_for_one: IntensityParams,
        one_for_zero: IntensityParams,
    ) -> Result<Self> {
        zero_for_one.validate()?;
        one_for_zero.validate()?;
        let params = vec![[zero_for_one, one_for_zero]; measure.len()];
        Ok(DemandCurve { measure, params })
    }

    pub fn per_atom(measure: SizeMeasure, params: Vec<[IntensityParams; 2]>) -> Result<Self> {
        if params.len() != measure.len() {
            return Err(Error::Domain("one parameter pair per atom required".into()));
        }
        for pair in &params {
            pair[0].validate()?;
            pair[1].validate()?;
        }
        Ok(DemandCurve { measure, params })
    }

    pub fn measure(&self) -> &SizeMeasure {
        &self.measure
    }

    pub fn params(&self, atom: usize, side: Side) -> &IntensityParams {
        &self.params[atom][side.index()]
    }

    /// Index of the atom whose size is closest to `size`.
    pub fn nearest_atom(&self, size: f64) -> usize {
        let mut best = 0;
        let mut dist = f64::INFINITY;
        for (i, a) in self.measure.atoms().iter().enumerate() {
            let d = (a.size - size).abs();
            if d < dist {
                dist = d;
                best = i;
            }
        }
        best
    }

    /// Rate of fills for an atom, weight included, per day.
    pub fn rate(&self, atom: usize, side: Side, delta: f64) -> f64 {
        self.measure.atoms[atom].weight * self.params(atom, side).intensity(delta)
    }

    /// Multiply every curve height by `factor`.
    pub fn scale_lambda(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for pair in &mut out.params {
            for p in pair.iter_mut() {
                p.lambda *= factor;
            }
        }
        out
    }

    /// Replace every curve height by `lambda`.
    pub fn with_lambda(&self, lambda: f64) -> Self {
        let mut out = self.clone();
        for pair in &mut out.params {
            for p in pair.iter_mut() {
                p.lambda = lambda;
            }
        }
        out
    }

    pub fn max_intensity(&self) -> f64 {
        self.params
            .iter()
            .zip(self.measure.atoms())
            .map(|(pair, a)| a.weight * pair[0].lambda.max(pair[1].lambda))
            .fold(0.0, f64::max)
    }

    /// True when both sides share the same curve for every atom.
    pub fn is_symmetric(&self) -> bool {
        self.params.iter().all(|p| p[0] == p[1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reference_params() -> IntensityParams {
        IntensityParams::new(100.0, -1.8, 1300.0).unwrap()
    }

    /// Exhaustive search on a uniform grid, refined by the vertex of the
    /// parabola through the best grid point and its neighbours.
    pub(crate) fn grid_search(params: &IntensityParams, p: f64, hi: f64, step: f64) -> (f64, f64) {
        let f = |d: f64| params.intensity(d) * (d - p);
        let lo = -params.floor;
        let n = ((hi - lo) / step).round() as usize;
        let mut best_i = 0;
        let mut best = f64::NEG_INFINITY;
        for i in 0..=n {
            let v = f(lo + i as f64 * step);
            if v > best {
                best = v;
                best_i = i;
            }
        }
        if best_i == 0 || best_i == n {
            return (lo + best_i as f64 * step, best);
        }
        let d0 = lo + best_i as f64 * step;
        let (fm, f0, fp) = (f(d0 - step), best, f(d0 + step));
        let denom = fm - 2.0 * f0 + fp;
        if denom >= 0.0 {
            return (d0, f0);
        }
        let shift = 0.5 * step * (fm - fp) / denom;
        let vertex = d0 + shift;
        (vertex, f(vertex).max(f0))
    }

    #[test]
    fn calibration_matches_trade_counts() {
        let p = reference_params();
        assert!((p.intensity(0.0) - 85.81).abs() < 0.01);
        assert!((p.intensity(-0.0010) - 95.69).abs() < 0.01);
        assert!((p.intensity(0.0010) - 62.25).abs() < 0.01);
        assert!(p.intensity(10.0) < 1e-100);
    }

    #[test]
    fn inverse_round_trip_at_zero() {
        let p = reference_params();
        let target = p.lambda / (1.0 + p.alpha.exp());
        assert!(p.inverse_intensity(target).unwrap().abs() < 1e-15);
        assert!(p.inverse_intensity(85.81).unwrap().abs() < 1e-5);
        assert!(p.inverse_intensity(0.0).is_err());
        assert!(p.inverse_intensity(100.0).is_err());
        assert!(p.inverse_intensity(150.0).is_err());
    }

    #[test]
    fn hamiltonian_at_zero_matches_grid() {
        let p = reference_params();
        let h = p.hamiltonian(4000.0, 0.0).unwrap();
        let (d, v) = grid_search(&p, 0.0, 0.05, 1e-6);
        assert!((h.maximizer - d).abs() < 2e-6, "{} vs {}", h.maximizer, d);
        assert!((h.value - v).abs() <= 1e-9 * v.abs());
        assert!(h.maximizer > 0.0014 && h.maximizer < 0.0015);
        assert!(!h.clamped);
    }

    #[test]
    fn hamiltonian_large_p_asymptote() {
        let p = reference_params();
        for &pp in &[0.05, 0.1, 0.5] {
            let h = p.hamiltonian(4000.0, pp).unwrap();
            assert!(h.value > 0.0 && h.value < 1e-20);
            assert!((h.maximizer - pp - 1.0 / p.beta).abs() < 1e-12);
        }
    }

    #[test]
    fn hamiltonian_clamps_at_floor() {
        // A small floor and a very negative p force the constraint to bind.
        let p = IntensityParams::with_floor(100.0, -1.8, 1300.0, 0.001).unwrap();
        let h = p.hamiltonian(1.0, -0.5).unwrap();
        assert!(h.clamped);
        assert_eq!(h.maximizer, -0.001);
        assert!((h.value - p.intensity(-0.001) * (-0.001 + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn hamiltonian_rejects_non_finite() {
        assert!(reference_params().hamiltonian(1.0, f64::NAN).is_err());
    }

    #[test]
    fn measure_validation() {
        assert!(SizeMeasure::new(vec![]).is_err());
        assert!(SizeMeasure::dirac(-1.0).is_err());
        assert!(SizeMeasure::new(vec![Atom { size: 1.0, weight: -1.0 }]).is_err());
        assert!(IntensityParams::new(100.0, 0.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn intensity_round_trip(delta in -0.01f64..0.05) {
            let p = reference_params();
            let back = p.inverse_intensity(p.intensity(delta)).unwrap();
            prop_assert!((back - delta).abs() < 1e-12);
        }

        #[test]
        fn intensity_decreasing(a in -0.02f64..0.05, b in -0.02f64..0.05) {
            prop_assume!(a < b - 1e-9);
            let p = reference_params();
            prop_assert!(p.intensity(a) > p.intensity(b));
            prop_assert!(p.intensity(b) > 0.0 && p.intensity(a) < p.lambda);
        }

        #[test]
        fn hamiltonian_dominates(p in -0.01f64..0.02, d in -1.0f64..0.05) {
            let params = reference_params();
            let h = params.hamiltonian(1.0, p).unwrap();
            prop_assert!(h.value >= params.intensity(d) * (d - p) - 1e-15);
        }

        #[test]
        fn hamiltonian_monotone_convex(a in -0.01f64..0.02, b in -0.01f64..0.02) {
            prop_assume!(a < b);
            let params = reference_params();
            let ha = params.hamiltonian(1.0, a).unwrap();
            let hb = params.hamiltonian(1.0, b).unwrap();
            let hm = params.hamiltonian(1.0, 0.5 * (a + b)).unwrap();
            prop_assert!(ha.value >= hb.value);
            prop_assert!(ha.maximizer <= hb.maximizer);
            prop_assert!(hm.value <= 0.5 * (ha.value + hb.value) + 1e-14);
        }

        #[test]
        fn envelope_and_foc(p in -0.01f64..0.02) {
            let params = reference_params();
            let h = params.hamiltonian(1.0, p).unwrap();
            let eps = 1e-7;
            let fd = (params.hamiltonian(1.0, p + eps).unwrap().value
                - params.hamiltonian(1.0, p - eps).unwrap().value) / (2.0 * eps);
            prop_assert!((fd + h.intensity).abs() < 1e-6);
            let x = params.alpha + params.beta * h.maximizer;
            let foc = h.maximizer - p - (1.0 + (-x).exp()) / params.beta;
            prop_assert!(foc.abs() < 1e-10);
        }
    }
}
