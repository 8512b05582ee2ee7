//! Choosing a reference curve from an observed set.
//!
//! Two selectors are provided. The warp criterion registers every curve
//! against each candidate and keeps the candidate whose warps stay closest to
//! the identity. The half-interval power selector picks the curve whose energy
//! on `[0, 1/2]` is the (lower) median of the set.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::SampledCurve;
use crate::error::{Error, Result};
use crate::quad;
use crate::registration::{RegistrationConfig, RegistrationResult, Registrar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMethod {
    JCriterion,
    HalfPowerMedian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceChoice {
    pub index: usize,
    pub method: ReferenceMethod,
    /// `J_j` per candidate (infinite when excluded), or half-interval power per curve.
    pub scores: Vec<f64>,
}

/// `∫_0^{1/2} y(t)² dt` on the curve's unit-interval grid; the endpoint `1/2`
/// is linearly interpolated when it is not a sample.
pub fn half_interval_power(curve: &SampledCurve) -> f64 {
    let unit = curve.to_unit_domain();
    let grid = unit.grid();
    let values = unit.values();
    let mut g = Vec::new();
    let mut v2 = Vec::new();
    for (&t, &v) in grid.iter().zip(values) {
        if t > 0.5 {
            break;
        }
        g.push(t);
        v2.push(v * v);
    }
    if g.last() != Some(&0.5) {
        let mid = unit.interp(0.5);
        g.push(0.5);
        v2.push(mid * mid);
    }
    quad::trapz(&g, &v2)
}

/// Curve whose half-interval power is the lower median; ties in power resolve
/// to the lowest index.
pub fn select_reference_power(curves: &[SampledCurve]) -> Result<ReferenceChoice> {
    if curves.is_empty() {
        return Err(Error::ReferenceSelection("no curves".into()));
    }
    let scores: Vec<f64> = curves.iter().map(half_interval_power).collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    Ok(ReferenceChoice {
        index: order[(order.len() - 1) / 2],
        method: ReferenceMethod::HalfPowerMedian,
        scores,
    })
}

/// Warp criterion with the default registration routine.
pub fn select_reference_j(curves: &[SampledCurve], config: &RegistrationConfig) -> Result<ReferenceChoice> {
    if curves.len() < 2 {
        return Err(Error::ReferenceSelection("at least two curves are required".into()));
    }
    let registrars: Vec<Option<Registrar>> = curves
        .iter()
        .map(|c| Registrar::new(c, config).ok())
        .collect();
    let grid = config.objective.grid();
    select_reference_j_with(curves.len(), &grid, |j, i| match &registrars[j] {
        Some(r) => r.register(&curves[i]),
        None => Err(Error::ReferenceSelection(format!("candidate {j} cannot be fitted"))),
    })
}

/// Warp criterion with a caller-supplied routine `register(j, i)` that
/// registers curve `i` against candidate `j`. It is called exactly `n²` times.
///
/// `J_j` is the grid mean of `Σ_i (ĥ_i(t) − t)² / n` over the successful
/// registrations. Candidates with more than half of their registrations
/// failing are excluded.
pub fn select_reference_j_with<F>(n: usize, grid: &[f64], register: F) -> Result<ReferenceChoice>
where
    F: Fn(usize, usize) -> Result<RegistrationResult> + Sync,
{
    if n < 2 {
        return Err(Error::ReferenceSelection("at least two curves are required".into()));
    }
    let scores: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut failures = 0;
            let mut sum = 0.0;
            for i in 0..n {
                match register(j, i) {
                    Ok(res) => {
                        let dev: f64 = grid
                            .iter()
                            .map(|&t| {
                                let h = res.warp.eval(t).unwrap_or(t);
                                (h - t) * (h - t)
                            })
                            .sum();
                        sum += dev / grid.len() as f64;
                    }
                    Err(_) => failures += 1,
                }
            }
            if 2 * failures > n {
                f64::INFINITY
            } else {
                sum / n as f64
            }
        })
        .collect();
    let mut best: Option<usize> = None;
    for (j, s) in scores.iter().enumerate() {
        if s.is_finite() && best.is_none_or(|b| *s < scores[b]) {
            best = Some(j);
        }
    }
    let index = best.ok_or_else(|| {
        Error::ReferenceSelection("every candidate had a majority of failed registrations".into())
    })?;
    Ok(ReferenceChoice {
        index,
        method: ReferenceMethod::JCriterion,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn shape(t: f64) -> f64 {
        (-(t - 0.3f64).powi(2) / 0.02).exp() + 0.5
    }

    #[test]
    fn power_picks_middle_scale() {
        let base = SampledCurve::from_fn(300, shape).unwrap();
        let curves = vec![base.clone(), base.scaled(3.0).unwrap(), base.scaled(2.0).unwrap()];
        let choice = select_reference_power(&curves).unwrap();
        assert_eq!(choice.index, 2);
        assert!((choice.scores[1] / choice.scores[0] - 9.0).abs() < 1e-9);
        assert_eq!(select_reference_power(&curves[..1]).unwrap().index, 0);
        assert!(select_reference_power(&[]).is_err());
    }

    #[test]
    fn power_even_count_uses_lower_median() {
        let base = SampledCurve::from_fn(300, shape).unwrap();
        let curves: Vec<_> = [4.0, 1.0, 3.0, 2.0].iter().map(|a| base.scaled(*a).unwrap()).collect();
        assert_eq!(select_reference_power(&curves).unwrap().index, 3);
    }

    #[test]
    fn half_power_of_constant() {
        let c = SampledCurve::from_fn(1000, |_| 2.0).unwrap();
        assert!((half_interval_power(&c) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn j_criterion_counts_and_ties() {
        let x = SampledCurve::from_fn(400, shape).unwrap();
        let curves = vec![x.clone(), x.clone(), x.clone()];
        let cfg = RegistrationConfig::default();
        let registrars: Vec<_> = curves.iter().map(|c| Registrar::new(c, &cfg).unwrap()).collect();
        let calls = AtomicUsize::new(0);
        let choice = select_reference_j_with(3, &cfg.objective.grid(), |j, i| {
            calls.fetch_add(1, Ordering::SeqCst);
            registrars[j].register(&curves[i])
        })
        .unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 9);
        assert_eq!(choice.index, 0);
        assert!(choice.scores.iter().all(|s| *s <= 1e-5));
    }

    #[test]
    fn j_criterion_all_failing() {
        let r = select_reference_j_with(3, &[0.0, 0.5, 1.0], |_, _| {
            Err(Error::Solver("boom".into()))
        });
        assert!(matches!(r, Err(Error::ReferenceSelection(_))));
    }
}
