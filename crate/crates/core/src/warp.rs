//! Smooth monotone warping functions `h(t) = β0 + β1 ∫_0^t exp(W(s)) ds` with
//! `W = cᵀB(t)` expanded over a basis (cubic B-splines by default).
//!
//! The constants are not free: `β0 = 0` and `β1` normalizes the integral so the
//! warp maps `[0, 1]` onto itself. A constant shift of `W` is absorbed by `β1`,
//! which is the gauge freedom of the coefficient vector.

use crate::basis::{check_domain, BasisSpec};
use crate::error::{Error, Result};
use crate::quad;

/// `W` is clamped to this magnitude before exponentiation.
pub const W_CLAMP: f64 = 40.0;

/// Default number of quadrature nodes.
pub const DEFAULT_QUAD_POINTS: usize = 1001;

/// Smallest accepted quadrature grid.
pub const MIN_QUAD_POINTS: usize = 51;
pub const MAX_QUAD_POINTS: usize = 100_001;

#[derive(Debug, Clone)]
pub struct MonotoneWarp {
    coeffs: Vec<f64>,
    basis: BasisSpec,
    beta0: f64,
    beta1: f64,
    nodes: Vec<f64>,
    /// exp(W) at the nodes (after clamping).
    rate: Vec<f64>,
    /// Normalized running integral: h at the nodes.
    cum: Vec<f64>,
    clamped: bool,
}

impl MonotoneWarp {
    /// Builds the normalized warp for coefficients `coeffs` over `basis`,
    /// integrating with the composite trapezoid rule on `quad_points` nodes.
    pub fn from_coeffs(coeffs: &[f64], basis: &BasisSpec, quad_points: usize) -> Result<Self> {
        WarpTemplate::new(basis, quad_points)?.build(coeffs)
    }

    /// The identity warp `h(t) = t`.
    pub fn identity(basis: &BasisSpec, quad_points: usize) -> Result<Self> {
        MonotoneWarp::from_coeffs(&vec![0.0; basis.size()], basis, quad_points)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn basis(&self) -> &BasisSpec {
        &self.basis
    }

    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    pub fn beta1(&self) -> f64 {
        self.beta1
    }

    pub fn quad_points(&self) -> usize {
        self.nodes.len()
    }

    /// True when `W` had to be clamped somewhere on the quadrature grid.
    pub fn clamped(&self) -> bool {
        self.clamped
    }

    /// Coefficients shifted along the gauge direction so that `β1 = 1`.
    /// The warp they define is the same as this one.
    pub fn canonical_coeffs(&self) -> Vec<f64> {
        canonicalize(&self.coeffs, &self.basis, self.beta1)
    }

    /// `W(t) = cᵀB(t)` (unclamped).
    pub fn log_rate(&self, t: f64) -> Result<f64> {
        check_domain(t)?;
        Ok(self.basis.dot(&self.coeffs, t, false))
    }

    /// h(t).
    pub fn eval(&self, t: f64) -> Result<f64> {
        check_domain(t)?;
        Ok(self.eval_unchecked(t))
    }

    pub fn eval_many(&self, ts: &[f64]) -> Result<Vec<f64>> {
        ts.iter().map(|&t| self.eval(t)).collect()
    }

    /// Cumulative trapezoid integral up to `t`; within a panel the integrand
    /// is interpolated linearly, which makes `h` quadratic between nodes.
    pub(crate) fn eval_unchecked(&self, t: f64) -> f64 {
        let k = self.panel(t);
        let dt = self.nodes[k + 1] - self.nodes[k];
        let s = ((t - self.nodes[k]) / dt).clamp(0.0, 1.0);
        if s == 0.0 {
            return self.cum[k];
        }
        if s == 1.0 {
            return self.cum[k + 1];
        }
        let (e0, e1) = (self.rate[k], self.rate[k + 1]);
        let partial = self.beta1 * dt * s * (e0 + 0.5 * s * (e1 - e0));
        (self.cum[k] + partial).min(self.cum[k + 1])
    }

    /// h'(t) = β1 exp(W(t)) > 0.
    pub fn deriv(&self, t: f64) -> Result<f64> {
        check_domain(t)?;
        Ok(self.deriv_unchecked(t))
    }

    pub(crate) fn deriv_unchecked(&self, t: f64) -> f64 {
        let (w, _) = clamp_w(self.basis.dot(&self.coeffs, t, false));
        self.beta1 * w.exp()
    }

    /// Solves `h(t) = y` by bisection on the monotone warp.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        check_domain(y)?;
        let k = quad::locate(&self.cum, y);
        let (mut lo, mut hi) = (self.nodes[k], self.nodes[k + 1]);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.eval_unchecked(mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (hl, hh) = (self.eval_unchecked(lo), self.eval_unchecked(hi));
        Ok(if (y - hl).abs() <= (hh - y).abs() { lo } else { hi })
    }

    fn panel(&self, t: f64) -> usize {
        let m = self.nodes.len() - 1;
        ((t * m as f64).floor() as usize).min(m - 1)
    }
}

/// Basis values at the quadrature nodes, reusable across many coefficient
/// vectors over the same basis.
#[derive(Debug, Clone)]
pub struct WarpTemplate {
    basis: BasisSpec,
    nodes: Vec<f64>,
    rows: Vec<f64>,
}

impl WarpTemplate {
    pub fn new(basis: &BasisSpec, quad_points: usize) -> Result<Self> {
        if !(MIN_QUAD_POINTS..=MAX_QUAD_POINTS).contains(&quad_points) {
            return Err(Error::config(
                "quad_points",
                format!("must be in {MIN_QUAD_POINTS}..={MAX_QUAD_POINTS}, got {quad_points}"),
            ));
        }
        let nodes = quad::uniform_grid(quad_points);
        let rows = basis.design_rows(&nodes);
        Ok(WarpTemplate {
            basis: basis.clone(),
            nodes,
            rows,
        })
    }

    pub fn basis(&self) -> &BasisSpec {
        &self.basis
    }

    pub fn build(&self, coeffs: &[f64]) -> Result<MonotoneWarp> {
        let size = self.basis.size();
        if coeffs.len() != size {
            return Err(Error::InvalidBasis(format!(
                "warp basis has {size} functions but {} coefficients were given",
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("warp coefficients".into()));
        }
        let mut clamped = false;
        let rate: Vec<f64> = self
            .rows
            .chunks_exact(size)
            .map(|row| {
                let w: f64 = row.iter().zip(coeffs).map(|(b, c)| b * c).sum();
                let (w, c) = clamp_w(w);
                clamped |= c;
                w.exp()
            })
            .collect();
        let raw = quad::cumtrapz(&self.nodes, &rate);
        let total = raw[raw.len() - 1];
        let cum = raw.iter().map(|v| v / total).collect();
        Ok(MonotoneWarp {
            coeffs: coeffs.to_vec(),
            basis: self.basis.clone(),
            beta0: 0.0,
            beta1: 1.0 / total,
            nodes: self.nodes.clone(),
            rate,
            cum,
            clamped,
        })
    }
}

pub(crate) fn clamp_w(w: f64) -> (f64, bool) {
    if w > W_CLAMP {
        (W_CLAMP, true)
    } else if w < -W_CLAMP {
        (-W_CLAMP, true)
    } else {
        (w, false)
    }
}

pub(crate) fn canonicalize(coeffs: &[f64], basis: &BasisSpec, beta1: f64) -> Vec<f64> {
    let shift = beta1.ln();
    coeffs
        .iter()
        .zip(basis.constant_coeffs())
        .map(|(c, g)| c + shift * g)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cubic10() -> BasisSpec {
        BasisSpec::bspline(10, 3).unwrap()
    }

    fn wavy() -> Vec<f64> {
        vec![0.3, -0.8, 1.2, 0.1, -0.5, 0.9, -1.1, 0.4, 0.0, 0.7]
    }

    #[test]
    fn zero_coeffs_is_identity() {
        let w = MonotoneWarp::identity(&cubic10(), DEFAULT_QUAD_POINTS).unwrap();
        assert_eq!(w.beta1(), 1.0);
        for t in [0.0, 0.1, 0.42, 0.999, 1.0] {
            assert!((w.eval(t).unwrap() - t).abs() < 1e-15);
            assert!((w.deriv(t).unwrap() - 1.0).abs() < 1e-15);
        }
        assert!((w.inverse(0.3).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn constant_coeffs_normalize_away() {
        let k = 1.7;
        let w = MonotoneWarp::from_coeffs(&[k; 10], &cubic10(), DEFAULT_QUAD_POINTS).unwrap();
        assert!((w.beta1() - (-k).exp()).abs() < 1e-12);
        for t in [0.0, 0.2, 0.65, 1.0] {
            assert!((w.eval(t).unwrap() - t).abs() < 1e-12);
            assert!((w.deriv(t).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn endpoints_and_monotonicity() {
        let w = MonotoneWarp::from_coeffs(&wavy(), &cubic10(), DEFAULT_QUAD_POINTS).unwrap();
        assert_eq!(w.eval(0.0).unwrap(), 0.0);
        assert!((w.eval(1.0).unwrap() - 1.0).abs() < 1e-9);
        let mut prev = -1.0;
        for i in 0..=3000 {
            let v = w.eval(i as f64 / 3000.0).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn matches_high_resolution_quadrature() {
        let b = cubic10();
        let c = wavy();
        let coarse = MonotoneWarp::from_coeffs(&c, &b, DEFAULT_QUAD_POINTS).unwrap();
        // independent oracle: trapezoid on 10^5 + 1 nodes, direct summation
        let m = 100_000;
        let vals: Vec<f64> = (0..=m)
            .map(|i| b.eval(i as f64 / m as f64).unwrap().iter().zip(&c).map(|(p, q)| p * q).sum::<f64>().exp())
            .collect();
        let mut run = vec![0.0; m + 1];
        for i in 1..=m {
            run[i] = run[i - 1] + 0.5 * (vals[i] + vals[i - 1]) / m as f64;
        }
        let total = run[m];
        for i in (0..=m).step_by(997) {
            let t = i as f64 / m as f64;
            let oracle = run[i] / total;
            assert!((coarse.eval(t).unwrap() - oracle).abs() < 5e-6, "t={t}");
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        // fine nodes: the interpolated rate is O(dt²) off the exact one
        let w = MonotoneWarp::from_coeffs(&wavy(), &cubic10(), 20001).unwrap();
        let h = 1e-4;
        for i in 0..100 {
            let t = h + (1.0 - 2.0 * h) * ((i as f64 * 0.7548776662).fract());
            let fd = (w.eval(t + h).unwrap() - w.eval(t - h).unwrap()) / (2.0 * h);
            assert!((fd - w.deriv(t).unwrap()).abs() < 1e-5, "t={t}");
        }
    }

    #[test]
    fn inverse_round_trip() {
        let w = MonotoneWarp::from_coeffs(&wavy(), &cubic10(), DEFAULT_QUAD_POINTS).unwrap();
        for i in 0..=200 {
            let t = i as f64 / 200.0;
            let y = w.eval(t).unwrap();
            let back = w.inverse(y).unwrap();
            assert!((back - t).abs() < 1e-8, "t={t} back={back}");
            assert!((w.eval(back).unwrap() - y).abs() <= 1e-9);
        }
        assert!(w.inverse(1.2).is_err());
    }

    #[test]
    fn gauge_shift_leaves_warp_unchanged() {
        let b = cubic10();
        let c = wavy();
        let w = MonotoneWarp::from_coeffs(&c, &b, DEFAULT_QUAD_POINTS).unwrap();
        let shifted: Vec<f64> = c.iter().map(|v| v + 2.5).collect();
        let ws = MonotoneWarp::from_coeffs(&shifted, &b, DEFAULT_QUAD_POINTS).unwrap();
        for i in 0..=100 {
            let t = i as f64 / 100.0;
            assert!((w.eval(t).unwrap() - ws.eval(t).unwrap()).abs() < 1e-10);
        }
        let canon = MonotoneWarp::from_coeffs(&w.canonical_coeffs(), &b, DEFAULT_QUAD_POINTS).unwrap();
        assert!((canon.beta1() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let b = cubic10();
        assert!(MonotoneWarp::from_coeffs(&[0.0; 9], &b, 1001).is_err());
        let mut c = vec![0.0; 10];
        c[3] = f64::NAN;
        assert!(matches!(MonotoneWarp::from_coeffs(&c, &b, 1001), Err(Error::NonFinite(_))));
        assert!(MonotoneWarp::from_coeffs(&[0.0; 10], &b, 50).is_err());
        let w = MonotoneWarp::identity(&b, 1001).unwrap();
        assert!(matches!(w.eval(-0.01), Err(Error::Domain { .. })));
    }

    #[test]
    fn huge_coefficients_are_clamped() {
        let mut c = vec![0.0; 10];
        c[5] = 500.0;
        let w = MonotoneWarp::from_coeffs(&c, &cubic10(), 1001).unwrap();
        assert!(w.clamped());
        assert!(w.eval(0.5).unwrap().is_finite());
        assert!((w.eval(1.0).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn quadrature_converges_quadratically() {
        let b = cubic10();
        let c = wavy();
        let m = 101;
        let a = MonotoneWarp::from_coeffs(&c, &b, m).unwrap();
        let fine = MonotoneWarp::from_coeffs(&c, &b, 10 * (m - 1) + 1).unwrap();
        let a2 = MonotoneWarp::from_coeffs(&c, &b, 2 * (m - 1) + 1).unwrap();
        let err = |w: &MonotoneWarp| {
            (0..=20)
                .map(|i| (w.eval(i as f64 / 20.0).unwrap() - fine.eval(i as f64 / 20.0).unwrap()).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(&a), err(&a2));
        // halving the step should cut the error by about 4
        assert!(e2 < e1 / 3.0, "{e1} {e2}");
    }
}
