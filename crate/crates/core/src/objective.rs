//! Residual of the warping differential equation and the penalized
//! least-squares criterion minimized over the warp coefficients.
//!
//! For reference expansion `p`, target expansion `q` and warp `h`:
//!
//! ```text
//! ρ(t) = qᵀΨ(t) / qᵀΦ(t) − h'(t) · pᵀΨ(h(t)) / pᵀΦ(h(t))
//! σ²   = ∫ ρ(t)² dt + λ ∫ (1 − h'(t))² dt
//! ```
//!
//! Both sides are log-derivatives, so a constant amplitude factor on either
//! curve cancels. Points where a denominator is tiny relative to the curve's
//! peak magnitude are masked and contribute zero.

use serde::{Deserialize, Serialize};

use crate::basis::{check_domain, BasisExpansion};
use crate::error::{Error, Result};
use crate::quad;
use crate::warp::{canonicalize, MonotoneWarp, WarpTemplate};

/// Grid used to find the peak magnitude `max_s |xᵀΦ(s)|` for masking.
const SCALE_GRID: usize = 1001;

/// Mantissa bits dropped from the target ratio.
const SNAP_BITS: u32 = 26;

/// Rounds to `52 - SNAP_BITS` mantissa bits. Fitting `a·y` and `y` round
/// differently at the last few bits; snapping keeps that from steering the
/// solver onto a different path.
fn snap(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    let half = 1u64 << (SNAP_BITS - 1);
    let mask = !((1u64 << SNAP_BITS) - 1);
    f64::from_bits((x.to_bits() + half) & mask)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveConfig {
    /// Number of uniform evaluation points on `[0, 1]`.
    pub grid_size: usize,
    /// Penalty weight λ pulling the warp toward the identity.
    pub lambda: f64,
    /// Relative denominator floor ε.
    pub denom_floor: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            grid_size: 201,
            lambda: 1e-2,
            denom_floor: 1e-6,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(21..=1_000_000).contains(&self.grid_size) {
            return Err(Error::config("objective.grid_size", "must be in 21..=1000000"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("objective.lambda", "must be finite and nonnegative"));
        }
        if !(self.denom_floor >= 0.0 && self.denom_floor.is_finite()) {
            return Err(Error::config("objective.denom_floor", "must be finite and nonnegative"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        quad::uniform_grid(self.grid_size)
    }
}

/// Log-derivative `xᵀΨ(t) / xᵀΦ(t)` of an expansion with a relative
/// denominator guard.
#[derive(Debug, Clone)]
pub struct LogDerivative {
    expansion: BasisExpansion,
    threshold: f64,
}

impl LogDerivative {
    pub fn new(expansion: BasisExpansion, floor: f64) -> Self {
        let peak = quad::uniform_grid(SCALE_GRID)
            .into_iter()
            .map(|s| expansion.value_unchecked(s).abs())
            .fold(0.0, f64::max);
        LogDerivative {
            expansion,
            threshold: floor * peak,
        }
    }

    pub fn expansion(&self) -> &BasisExpansion {
        &self.expansion
    }

    /// `None` when the point is masked.
    pub fn at(&self, t: f64) -> Result<Option<f64>> {
        check_domain(t)?;
        Ok(self.at_unchecked(t))
    }

    fn at_unchecked(&self, t: f64) -> Option<f64> {
        let (v, d) = self.expansion.spec().dot_pair(self.expansion.coeffs(), t);
        if v.abs() < self.threshold || v == 0.0 {
            None
        } else {
            Some(d / v)
        }
    }
}

/// `qᵀΨ(t) / qᵀΦ(t)`, or `None` if `|qᵀΦ(t)| < floor · max_s |qᵀΦ(s)|`.
pub fn log_deriv_ratio(expansion: &BasisExpansion, t: f64, floor: f64) -> Result<Option<f64>> {
    LogDerivative::new(expansion.clone(), floor).at(t)
}

/// Residual components for one warp.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualEval {
    /// ρ(t_j), zero at masked points.
    pub data: Vec<f64>,
    /// `sqrt(λ) · (1 − h'(t_j))`.
    pub penalty: Vec<f64>,
    pub masked: usize,
    pub clamped: bool,
}

/// The penalized criterion for a fixed reference/target pair, with all
/// warp-independent quantities precomputed.
#[derive(Debug, Clone)]
pub struct Objective {
    reference: LogDerivative,
    config: ObjectiveConfig,
    grid: Vec<f64>,
    sqrt_weights: Vec<f64>,
    target_ratio: Vec<Option<f64>>,
    template: WarpTemplate,
}

impl Objective {
    pub fn new(
        reference: &BasisExpansion,
        target: &BasisExpansion,
        template: WarpTemplate,
        config: &ObjectiveConfig,
    ) -> Result<Self> {
        config.validate()?;
        let grid = config.grid();
        let sqrt_weights = quad::trapezoid_weights(&grid).into_iter().map(f64::sqrt).collect();
        let target = LogDerivative::new(target.clone(), config.denom_floor);
        let target_ratio = grid
            .iter()
            .map(|&t| target.at_unchecked(t).map(snap))
            .collect();
        Ok(Objective {
            reference: LogDerivative::new(reference.clone(), config.denom_floor),
            config: config.clone(),
            grid,
            sqrt_weights,
            target_ratio,
            template,
        })
    }

    pub fn config(&self) -> &ObjectiveConfig {
        &self.config
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn template(&self) -> &WarpTemplate {
        &self.template
    }

    pub fn num_params(&self) -> usize {
        self.template.basis().size()
    }

    pub fn warp(&self, coeffs: &[f64]) -> Result<MonotoneWarp> {
        self.template.build(coeffs)
    }

    pub fn evaluate(&self, warp: &MonotoneWarp) -> ResidualEval {
        let n = self.grid.len();
        let mut data = Vec::with_capacity(n);
        let mut penalty = Vec::with_capacity(n);
        let mut masked = 0;
        let root_lambda = self.config.lambda.sqrt();
        for (j, &t) in self.grid.iter().enumerate() {
            let slope = warp.deriv_unchecked(t);
            let h = warp.eval_unchecked(t);
            let rho = match (self.target_ratio[j], self.reference.at_unchecked(h)) {
                (Some(lhs), Some(rhs)) => lhs - slope * rhs,
                _ => {
                    masked += 1;
                    0.0
                }
            };
            data.push(rho);
            penalty.push(root_lambda * (1.0 - slope));
        }
        ResidualEval {
            data,
            penalty,
            masked,
            clamped: warp.clamped(),
        }
    }

    /// Residuals scaled by square-root trapezoid weights, so that their
    /// squared norm equals the criterion.
    pub fn weighted_residuals(&self, warp: &MonotoneWarp) -> Vec<f64> {
        let eval = self.evaluate(warp);
        eval.data
            .iter()
            .chain(&eval.penalty)
            .zip(self.sqrt_weights.iter().chain(&self.sqrt_weights))
            .map(|(r, w)| r * w)
            .collect()
    }

    pub fn criterion(&self, warp: &MonotoneWarp) -> f64 {
        self.weighted_residuals(warp).iter().map(|r| r * r).sum()
    }

    /// Fraction of evaluation points masked for this warp.
    pub fn masked_fraction(&self, warp: &MonotoneWarp) -> f64 {
        self.evaluate(warp).masked as f64 / self.grid.len() as f64
    }
}

impl crate::solver::LeastSquaresProblem for Objective {
    fn residuals(&self, params: &[f64]) -> Option<Vec<f64>> {
        let warp = self.warp(params).ok()?;
        Some(self.weighted_residuals(&warp))
    }

    fn canonicalize(&self, params: &mut [f64]) {
        if let Ok(w) = self.warp(params) {
            let c = canonicalize(params, self.template.basis(), w.beta1());
            params.copy_from_slice(&c);
        }
    }
}

fn objective_for(
    p: &BasisExpansion,
    q: &BasisExpansion,
    w: &MonotoneWarp,
    cfg: &ObjectiveConfig,
) -> Result<Objective> {
    let template = WarpTemplate::new(w.basis(), w.quad_points())?;
    Objective::new(p, q, template, cfg)
}

/// `[ρ(t_j)…, sqrt(λ)(1 − h'(t_j))…]` on the evaluation grid (unweighted).
pub fn residual_vector(
    p: &BasisExpansion,
    q: &BasisExpansion,
    w: &MonotoneWarp,
    cfg: &ObjectiveConfig,
) -> Result<Vec<f64>> {
    let obj = objective_for(p, q, w, cfg)?;
    let eval = obj.evaluate(w);
    Ok(eval.data.into_iter().chain(eval.penalty).collect())
}

/// σ² for the given expansions and warp.
pub fn criterion(
    p: &BasisExpansion,
    q: &BasisExpansion,
    w: &MonotoneWarp,
    cfg: &ObjectiveConfig,
) -> Result<f64> {
    Ok(objective_for(p, q, w, cfg)?.criterion(w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{fit_expansion, BasisSpec, SampledCurve};
    use crate::warp::DEFAULT_QUAD_POINTS;

    #[test]
    fn snap_rounds_to_nearest() {
        for x in [1.0, -3.25, 0.1, -7.3e-5, 123456.789] {
            let s = snap(x);
            assert!(((s - x) / x).abs() <= 2f64.powi(-26));
            assert_eq!(snap(s), s);
            assert_eq!(snap(-x), -s);
        }
        assert_eq!(snap(0.0), 0.0);
        let x = 0.3;
        assert_eq!(snap(x), snap(x * (1.0 + 4.0 * f64::EPSILON)));
    }

    fn bump(t: f64) -> f64 {
        5.0 * (-(t - 0.35f64).powi(2) / 0.02).exp() + 3.0 * (-(t - 0.7f64).powi(2) / 0.01).exp() + 0.5
    }

    fn fit(f: impl Fn(f64) -> f64, n: usize) -> BasisExpansion {
        let c = SampledCurve::from_fn(1000, f).unwrap();
        fit_expansion(&c, &BasisSpec::fourier(n).unwrap()).unwrap()
    }

    fn identity() -> MonotoneWarp {
        MonotoneWarp::identity(&BasisSpec::bspline(10, 3).unwrap(), DEFAULT_QUAD_POINTS).unwrap()
    }

    #[test]
    fn ratio_of_exponential_is_one() {
        // e^t is not periodic, so a Fourier fit rings across the whole interval
        let c = SampledCurve::from_fn(1000, f64::exp).unwrap();
        let e = fit_expansion(&c, &BasisSpec::bspline(15, 3).unwrap()).unwrap();
        for i in 0..=50 {
            let t = 0.05 + 0.9 * i as f64 / 50.0;
            let r = log_deriv_ratio(&e, t, 1e-6).unwrap().unwrap();
            assert!((r - 1.0).abs() < 1e-2, "t={t} r={r}");
        }
    }

    #[test]
    fn ratio_of_constant_is_zero_and_scale_free() {
        let e = BasisExpansion::new(BasisSpec::fourier(5).unwrap(), vec![4.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(log_deriv_ratio(&e, 0.3, 1e-6).unwrap(), Some(0.0));
        let b = fit(bump, 21);
        let b7 = b.scaled(7.3).unwrap();
        for t in [0.1, 0.4, 0.8] {
            let r = log_deriv_ratio(&b, t, 1e-6).unwrap().unwrap();
            let r7 = log_deriv_ratio(&b7, t, 1e-6).unwrap().unwrap();
            assert!((r - r7).abs() <= 1e-12 * r.abs().max(1.0));
        }
    }

    #[test]
    fn zero_crossings_are_masked() {
        let e = BasisExpansion::new(BasisSpec::fourier(3).unwrap(), vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(log_deriv_ratio(&e, 0.5, 1e-6).unwrap(), None);
        assert!(log_deriv_ratio(&e, 0.25, 1e-6).unwrap().is_some());
    }

    #[test]
    fn identical_pair_identity_warp_is_zero() {
        let p = fit(bump, 21);
        let cfg = ObjectiveConfig {
            lambda: 0.0,
            ..Default::default()
        };
        let r = residual_vector(&p, &p, &identity(), &cfg).unwrap();
        assert_eq!(r.len(), 2 * cfg.grid_size);
        // only the snapping of the target ratio separates the two sides
        assert!(r.iter().all(|v| v.abs() < 1e-6));
        let cfg = ObjectiveConfig::default();
        assert!(criterion(&p, &p, &identity(), &cfg).unwrap() < 1e-14);
    }

    #[test]
    fn residual_unchanged_by_amplitude() {
        let p = fit(bump, 21);
        let q = fit(|t| bump(t + 0.03 * (std::f64::consts::PI * t).sin()), 21);
        let w = MonotoneWarp::from_coeffs(
            &[0.1, -0.2, 0.3, 0.0, 0.1, -0.1, 0.2, 0.0, 0.05, 0.1],
            &BasisSpec::bspline(10, 3).unwrap(),
            DEFAULT_QUAD_POINTS,
        )
        .unwrap();
        let cfg = ObjectiveConfig::default();
        let a = residual_vector(&p, &q, &w, &cfg).unwrap();
        let b = residual_vector(&p, &q.scaled(7.3).unwrap(), &w, &cfg).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn refinement_changes_criterion_little() {
        let p = fit(bump, 21);
        let q = fit(|t| bump(t + 0.05 * t * (1.0 - t)), 21);
        let w = identity();
        let coarse = criterion(&p, &q, &w, &ObjectiveConfig::default()).unwrap();
        let fine = criterion(
            &p,
            &q,
            &w,
            &ObjectiveConfig {
                grid_size: 2001,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(coarse > 0.0);
        assert!(((coarse - fine) / fine).abs() < 0.01, "{coarse} vs {fine}");
    }

    #[test]
    fn zero_floor_positive_curve_masks_nothing() {
        let p = fit(bump, 21);
        let cfg = ObjectiveConfig {
            denom_floor: 0.0,
            ..Default::default()
        };
        let obj = objective_for(&p, &p, &identity(), &cfg).unwrap();
        assert_eq!(obj.evaluate(&identity()).masked, 0);
    }

    #[test]
    fn config_validation() {
        assert!(ObjectiveConfig { grid_size: 20, ..Default::default() }.validate().is_err());
        assert!(ObjectiveConfig { lambda: -1.0, ..Default::default() }.validate().is_err());
        assert!(ObjectiveConfig { denom_floor: f64::NAN, ..Default::default() }.validate().is_err());
        let c: ObjectiveConfig = serde_json::from_str(r#"{"lambda": 0.5}"#).unwrap();
        assert_eq!(c.grid_size, 201);
        assert!(serde_json::from_str::<ObjectiveConfig>(r#"{"lamda": 0.5}"#).is_err());
    }
}
