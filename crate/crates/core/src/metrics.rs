//! Evaluation measures: percentage root-mean-square difference, recovery error
//! against a known warp, and cross-sectional variance.

use serde::{Deserialize, Serialize};

use crate::basis::SampledCurve;
use crate::error::{Error, Result};
use crate::quad;
use crate::warp::MonotoneWarp;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub prd_per_curve: Vec<f64>,
    pub warp_rmse_per_curve: Vec<f64>,
    pub variance_before: f64,
    pub variance_after: f64,
    pub model_order: usize,
}

/// `100 · sqrt(∫(ŷ − m)² / ∫ŷ²)`, trapezoid on the common grid.
pub fn prd(yhat: &SampledCurve, model: &SampledCurve) -> Result<f64> {
    if yhat.grid() != model.grid() {
        return Err(Error::InvalidCurve("PRD requires curves on the same grid".into()));
    }
    let grid = yhat.grid();
    let energy = quad::trapz(grid, &yhat.values().iter().map(|v| v * v).collect::<Vec<_>>());
    if !(energy > 0.0) {
        return Err(Error::UndefinedPrd);
    }
    let diff: Vec<f64> = yhat
        .values()
        .iter()
        .zip(model.values())
        .map(|(a, b)| (a - b) * (a - b))
        .collect();
    Ok(100.0 * (quad::trapz(grid, &diff) / energy).sqrt())
}

/// Root-mean-square of `ĥ⁻¹(g(t)) − t` over `grid`, where `g` is the warp the
/// registration should have recovered. Zero exactly when `ĥ = g` on the grid.
pub fn warp_recovery_rmse(
    estimated: &MonotoneWarp,
    truth: impl Fn(f64) -> f64,
    grid: &[f64],
) -> Result<f64> {
    if grid.is_empty() {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for &t in grid {
        let g = truth(t).clamp(0.0, 1.0);
        let back = estimated.inverse(g)?;
        acc += (back - t) * (back - t);
    }
    Ok((acc / grid.len() as f64).sqrt())
}

/// Grid-averaged cross-sectional (population) variance of each list.
pub fn variance_reduction(before: &[SampledCurve], after: &[SampledCurve]) -> Result<(f64, f64)> {
    Ok((mean_cross_variance(before)?, mean_cross_variance(after)?))
}

/// Pointwise mean of curves sharing a grid.
pub fn cross_sectional_mean(curves: &[SampledCurve]) -> Result<SampledCurve> {
    let first = curves
        .first()
        .ok_or_else(|| Error::InvalidCurve("no curves".into()))?;
    check_common_grid(curves)?;
    let n = curves.len() as f64;
    let values = (0..first.len())
        .map(|j| curves.iter().map(|c| c.values()[j]).sum::<f64>() / n)
        .collect();
    SampledCurve::new(first.grid().to_vec(), values)
}

pub fn mean_cross_variance(curves: &[SampledCurve]) -> Result<f64> {
    if curves.is_empty() {
        return Ok(0.0);
    }
    let mean = cross_sectional_mean(curves)?;
    let n = curves.len() as f64;
    let m = mean.len();
    let total: f64 = (0..m)
        .map(|j| {
            curves
                .iter()
                .map(|c| (c.values()[j] - mean.values()[j]).powi(2))
                .sum::<f64>()
                / n
        })
        .sum();
    Ok(total / m as f64)
}

fn check_common_grid(curves: &[SampledCurve]) -> Result<()> {
    let g = curves[0].grid();
    if curves.iter().any(|c| c.grid() != g) {
        return Err(Error::InvalidCurve("curves do not share a common grid".into()));
    }
    Ok(())
}

/// Lower median (element `(n − 1) / 2` of the sorted values).
pub fn lower_median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(v[(v.len() - 1) / 2])
}

/// Conventional median (mean of the two middle values for even counts).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}
