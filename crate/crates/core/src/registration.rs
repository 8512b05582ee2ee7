//! Pairwise and set registration.
//!
//! Both curves are expanded over the configured basis, the warp coefficients
//! are found by minimizing the penalized log-derivative criterion from the
//! identity warp, and the amplitude follows in closed form. Curves observed on
//! an interval other than `[0, 1]` are mapped affinely onto it; estimated warps
//! live on the unit interval.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{fit_expansion, BasisExpansion, BasisSpec, SampledCurve};
use crate::error::{Error, Result};
use crate::metrics;
use crate::objective::{Objective, ObjectiveConfig};
use crate::quad;
use crate::solver::{minimize, SolverOptions, SolverReport};
use crate::warp::{MonotoneWarp, WarpTemplate, DEFAULT_QUAD_POINTS, MAX_QUAD_POINTS, MIN_QUAD_POINTS};

/// Masked fraction above which a result carries a warning.
pub const MASKED_WARNING_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrationConfig {
    /// Basis for the curve expansions.
    pub basis: BasisSpec,
    /// Basis for `W` in the monotone warp.
    pub warp_basis: BasisSpec,
    /// Quadrature nodes for the warp integral.
    pub quad_points: usize,
    pub objective: ObjectiveConfig,
    pub solver: SolverOptions,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        RegistrationConfig {
            basis: BasisSpec::fourier(30).expect("valid default basis"),
            warp_basis: BasisSpec::bspline(10, 3).expect("valid default warp basis"),
            quad_points: DEFAULT_QUAD_POINTS,
            objective: ObjectiveConfig::default(),
            solver: SolverOptions::default(),
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(MIN_QUAD_POINTS..=MAX_QUAD_POINTS).contains(&self.quad_points) {
            return Err(Error::config(
                "quad_points",
                format!("must be in {MIN_QUAD_POINTS}..={MAX_QUAD_POINTS}"),
            ));
        }
        self.objective.validate()?;
        self.solver.validate()
    }
}

#[derive(Debug, Clone)]
pub struct RegistrationResult {
    /// Estimated warp ĥ, with `ŷ(t) ≈ â · x̂(ĥ(t))`.
    pub warp: MonotoneWarp,
    pub amplitude: f64,
    /// PRD (%) between ŷ and `â · x̂ ∘ ĥ`.
    pub prd: f64,
    pub criterion: f64,
    pub report: SolverReport,
    /// `y(ĥ⁻¹(t)) / â` on the reference grid.
    pub aligned: SampledCurve,
    /// Constant added to both expansions before forming log-derivatives.
    pub offset: f64,
    /// The amplitude estimate is numerically zero.
    pub degenerate_amplitude: bool,
    /// More than [`MASKED_WARNING_FRACTION`] of the evaluation points were masked.
    pub masked_warning: bool,
}

/// `∫ y(t) x̂(h(t)) dt / ∫ x̂(h(t))² dt`, trapezoid on the samples of `y`.
/// Registration passes ŷ sampled on the objective grid.
pub fn estimate_amplitude(y: &SampledCurve, x_exp: &BasisExpansion, w: &MonotoneWarp) -> Result<f64> {
    let grid = y.grid();
    let mut warped = Vec::with_capacity(grid.len());
    for &t in grid {
        warped.push(x_exp.eval(w.eval(t)?)?);
    }
    let num: Vec<f64> = y.values().iter().zip(&warped).map(|(a, b)| a * b).collect();
    let den: Vec<f64> = warped.iter().map(|v| v * v).collect();
    let den = quad::trapz(grid, &den);
    if !(den > 0.0) {
        return Err(Error::DegenerateReference(
            "the warped reference expansion is identically zero".into(),
        ));
    }
    Ok(quad::trapz(grid, &num) / den)
}

/// Offset that lifts crossing curves so their minimum is at least a tenth of
/// their range; zero when no curve touches or crosses zero.
fn positivity_offset(curves: &[&SampledCurve]) -> f64 {
    let crosses = curves.iter().any(|c| {
        let (lo, hi) = c.min_max();
        lo <= 0.0 && hi >= 0.0
    });
    if !crosses {
        return 0.0;
    }
    curves
        .iter()
        .map(|c| {
            let (lo, hi) = c.min_max();
            (0.1 * (hi - lo) - lo).max(0.0)
        })
        .fold(0.0, f64::max)
}

/// A reference curve prepared for registering many targets against it.
#[derive(Debug, Clone)]
pub struct Registrar {
    config: RegistrationConfig,
    reference: SampledCurve,
    reference_unit: SampledCurve,
    reference_exp: BasisExpansion,
    /// The reference expansion on the dense check grid.
    reference_dense: SampledCurve,
    template: WarpTemplate,
}

/// Grid on which expansions are checked for zero crossings.
fn dense_grid() -> Vec<f64> {
    quad::uniform_grid(1001)
}

impl Registrar {
    pub fn new(reference: &SampledCurve, config: &RegistrationConfig) -> Result<Self> {
        config.validate()?;
        let reference_unit = reference.to_unit_domain();
        let reference_exp = fit_expansion(&reference_unit, &config.basis)?;
        let reference_dense = reference_exp.sample(&dense_grid())?;
        Ok(Registrar {
            config: config.clone(),
            reference: reference.clone(),
            reference_unit,
            reference_exp,
            reference_dense,
            template: WarpTemplate::new(&config.warp_basis, config.quad_points)?,
        })
    }

    pub fn reference_expansion(&self) -> &BasisExpansion {
        &self.reference_exp
    }

    pub fn register(&self, target: &SampledCurve) -> Result<RegistrationResult> {
        let target_unit = target.to_unit_domain();
        let target_exp = fit_expansion(&target_unit, &self.config.basis)?;

        // a fit can dip below zero even when the samples do not
        let target_dense = target_exp.sample(&dense_grid())?;
        let offset = positivity_offset(&[
            &self.reference_unit,
            &target_unit,
            &self.reference_dense,
            &target_dense,
        ]);
        let (p, q) = if offset > 0.0 {
            (self.reference_exp.shifted(offset)?, target_exp.shifted(offset)?)
        } else {
            (self.reference_exp.clone(), target_exp.clone())
        };
        let objective = Objective::new(&p, &q, self.template.clone(), &self.config.objective)?;
        let c0 = vec![0.0; objective.num_params()];
        let (coeffs, mut report) = minimize(&objective, &c0, &self.config.solver)?;
        let warp = objective.warp(&coeffs)?;
        let eval = objective.evaluate(&warp);
        report.masked_fraction = eval.masked as f64 / objective.grid().len() as f64;
        report.clamped_exp = warp.clamped();
        let criterion = report.final_criterion;

        // amplitude and PRD compare the two expansions on the objective grid
        let grid = objective.grid();
        let yhat = target_exp.sample(grid)?;
        let amplitude = estimate_amplitude(&yhat, &self.reference_exp, &warp)?;
        let y_norm = yhat.values().iter().map(|v| v * v).sum::<f64>().sqrt();
        let degenerate_amplitude = !(amplitude.abs() > 1e-12 * y_norm.max(f64::MIN_POSITIVE));

        let model_values = grid
            .iter()
            .map(|&t| Ok(amplitude * self.reference_exp.eval(warp.eval(t)?)?))
            .collect::<Result<Vec<_>>>()?;
        let model = SampledCurve::new(grid.to_vec(), model_values)?;
        let prd = metrics::prd(&yhat, &model)?;

        // a degenerate amplitude leaves the aligned curve unscaled
        let divisor = if degenerate_amplitude { 1.0 } else { amplitude };
        let aligned_values = self
            .reference_unit
            .grid()
            .iter()
            .map(|&t| Ok(target_unit.interp(warp.inverse(t)?) / divisor))
            .collect::<Result<Vec<_>>>()?;
        let aligned = SampledCurve::new(self.reference.grid().to_vec(), aligned_values)?;

        Ok(RegistrationResult {
            warp,
            amplitude,
            prd,
            criterion,
            report: report.clone(),
            aligned,
            offset,
            degenerate_amplitude,
            masked_warning: report.masked_fraction > MASKED_WARNING_FRACTION,
        })
    }
}

/// Registers `target` (y) against `reference` (x).
pub fn register_pair(
    reference: &SampledCurve,
    target: &SampledCurve,
    config: &RegistrationConfig,
) -> Result<RegistrationResult> {
    Registrar::new(reference, config)?.register(target)
}

/// Registers every curve, the reference included, against `curves[ref_index]`.
/// Per-curve failures are returned in place without aborting the batch.
pub fn register_set(
    curves: &[SampledCurve],
    ref_index: usize,
    config: &RegistrationConfig,
) -> Result<Vec<Result<RegistrationResult>>> {
    let reference = curves.get(ref_index).ok_or_else(|| {
        Error::config(
            "ref",
            format!("reference index {ref_index} out of range for {} curves", curves.len()),
        )
    })?;
    let registrar = Registrar::new(reference, config)?;
    Ok(curves.par_iter().map(|c| registrar.register(c)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{gaussian_mixture, TrueWarp};

    fn mixture(t: f64) -> f64 {
        gaussian_mixture(&[5.0, 4.0], &[0.25, 0.75], &[0.1, 0.1], t).unwrap()
    }

    fn sampled(f: impl Fn(f64) -> f64) -> SampledCurve {
        SampledCurve::from_fn(1000, f).unwrap()
    }

    #[test]
    fn self_registration_is_identity() {
        let x = sampled(mixture);
        let r = register_pair(&x, &x, &RegistrationConfig::default()).unwrap();
        for i in 0..=100 {
            let t = i as f64 / 100.0;
            assert!((r.warp.eval(t).unwrap() - t).abs() <= 1e-3);
        }
        assert!((r.amplitude - 1.0).abs() < 1e-6);
        assert!(r.prd <= 0.1);
        assert!(r.report.converged);
    }

    #[test]
    fn pure_amplitude() {
        let x = sampled(mixture);
        let y = x.scaled(2.0).unwrap();
        let r = register_pair(&x, &y, &RegistrationConfig::default()).unwrap();
        assert!((r.amplitude - 2.0).abs() < 1e-6, "{}", r.amplitude);
        for i in 0..=100 {
            let t = i as f64 / 100.0;
            assert!((r.warp.eval(t).unwrap() - t).abs() <= 1e-3);
        }
    }

    #[test]
    fn recovers_f1_warp() {
        let truth = TrueWarp::F1 { b: 0.5 };
        let x = sampled(mixture);
        let y = sampled(|t| mixture(truth.eval(t)));
        let r = register_pair(&x, &y, &RegistrationConfig::default()).unwrap();
        let worst = (0..=200)
            .map(|i| {
                let t = i as f64 / 200.0;
                (r.warp.inverse(truth.eval(t)).unwrap() - t).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst <= 0.02, "sup error {worst}");
        assert!(r.report.criterion_history.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn amplitude_closed_form() {
        let x = sampled(mixture);
        let p = fit_expansion(&x, &BasisSpec::fourier(30).unwrap()).unwrap();
        let w = MonotoneWarp::from_coeffs(
            &[0.2, 0.1, -0.1, 0.0, 0.3, -0.2, 0.1, 0.0, 0.1, -0.1],
            &BasisSpec::bspline(10, 3).unwrap(),
            1001,
        )
        .unwrap();
        let y = sampled(|t| 3.0 * p.eval(w.eval(t).unwrap()).unwrap());
        assert!((estimate_amplitude(&y, &p, &w).unwrap() - 3.0).abs() < 1e-10);
    }

    #[test]
    fn amplitude_of_orthogonal_curve_is_zero() {
        let spec = BasisSpec::fourier(3).unwrap();
        let cos = BasisExpansion::new(spec, vec![0.0, 0.0, 1.0]).unwrap();
        let id = MonotoneWarp::identity(&BasisSpec::bspline(10, 3).unwrap(), 1001).unwrap();
        let y = sampled(|t| (2.0 * std::f64::consts::PI * t).sin());
        assert!(estimate_amplitude(&y, &cos, &id).unwrap().abs() < 1e-12);
        let zero = BasisExpansion::new(BasisSpec::fourier(3).unwrap(), vec![0.0; 3]).unwrap();
        assert!(matches!(
            estimate_amplitude(&y, &zero, &id),
            Err(Error::DegenerateReference(_))
        ));
    }

    #[test]
    fn crossing_curves_get_an_offset() {
        let x = sampled(|t| mixture(t) - 2.0);
        let r = register_pair(&x, &x, &RegistrationConfig::default()).unwrap();
        assert!(r.offset > 0.0);
        assert!((r.amplitude - 1.0).abs() < 1e-6);
        let pos = sampled(mixture);
        assert_eq!(positivity_offset(&[&pos, &pos]), 0.0);
    }

    #[test]
    fn set_reports_bad_reference() {
        let x = sampled(mixture);
        assert!(register_set(&[x.clone(), x], 2, &RegistrationConfig::default()).is_err());
    }

    #[test]
    fn general_interval() {
        let x = SampledCurve::new(
            (0..500).map(|i| 2.0 + 3.0 * i as f64 / 499.0).collect(),
            (0..500).map(|i| mixture(i as f64 / 499.0)).collect(),
        )
        .unwrap();
        let r = register_pair(&x, &x, &RegistrationConfig::default()).unwrap();
        assert_eq!(r.aligned.grid(), x.grid());
        assert!((r.amplitude - 1.0).abs() < 1e-6);
    }
}
