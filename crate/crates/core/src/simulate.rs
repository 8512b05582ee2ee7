//! Synthetic curve sets: Gaussian mixtures composed with known warps.
//!
//! Curve `i` is `y_i(t) = Σ_k z_ik exp(−(h_i(t) − t_k)² / (2 b_k²))`, with
//! `z_ik ~ N(z_mean, z_std²)` drawn from a ChaCha8 stream seeded by
//! `seed`, and `h_i` from one of two closed-form families:
//!
//! * F1: `h(t) = t + b t (1 − t)`, `b` equally spaced over `f1_b_range`;
//! * F2: `h(t) = t + b sin(2πct)`, `c` cycling through `f2_c_set` and `b`
//!   uniform on `[−f2_b_max, f2_b_max]`, redrawn until `|2πcb| < 1`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::basis::SampledCurve;
use crate::error::{Error, Result};
use crate::quad;

/// Upper bound on the total number of generated samples.
pub const MAX_SAMPLES: usize = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WarpFamily {
    F1,
    F2,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub n_curves: usize,
    pub n_terms: usize,
    /// Gaussian centers `t_k`; defaults depend on `n_terms`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub centers: Option<Vec<f64>>,
    /// Gaussian widths `b_k`; defaults depend on `n_terms`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub widths: Option<Vec<f64>>,
    pub z_mean: f64,
    pub z_std: f64,
    pub warp_family: WarpFamily,
    pub f1_b_range: [f64; 2],
    pub f2_c_set: Vec<u32>,
    pub f2_b_max: f64,
    pub grid_size: usize,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_curves: 21,
            n_terms: 2,
            centers: None,
            widths: None,
            z_mean: 5.0,
            z_std: 1.5,
            warp_family: WarpFamily::F1,
            f1_b_range: [-1.0, 1.0],
            f2_c_set: vec![0, 1, 2, 3],
            f2_b_max: 0.09,
            grid_size: 1000,
            seed: 0,
        }
    }
}

/// Standard centers and widths for one- and two-term mixtures.
fn standard_terms(n_terms: usize) -> Option<(Vec<f64>, Vec<f64>)> {
    match n_terms {
        1 => Some((vec![0.5], vec![0.1581])),
        2 => Some((vec![0.25, 0.75], vec![0.1, 0.1])),
        _ => None,
    }
}

impl DatasetConfig {
    /// One of the four standard sets: warp family × one or two mixture terms.
    pub fn preset(family: WarpFamily, n_terms: usize, seed: u64) -> Self {
        DatasetConfig {
            n_terms,
            warp_family: family,
            seed,
            ..Default::default()
        }
    }

    /// Centers and widths after applying the per-`n_terms` defaults.
    pub fn terms(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let standard = standard_terms(self.n_terms);
        let centers = match (&self.centers, &standard) {
            (Some(c), _) => c.clone(),
            (None, Some((c, _))) => c.clone(),
            (None, None) => {
                return Err(Error::config("centers", "required when n_terms is not 1 or 2"))
            }
        };
        let widths = match (&self.widths, &standard) {
            (Some(w), _) => w.clone(),
            (None, Some((_, w))) => w.clone(),
            (None, None) => {
                return Err(Error::config("widths", "required when n_terms is not 1 or 2"))
            }
        };
        Ok((centers, widths))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_curves == 0 {
            return Err(Error::config("n_curves", "must be at least 1"));
        }
        if self.n_terms == 0 {
            return Err(Error::config("n_terms", "must be at least 1"));
        }
        let (centers, widths) = self.terms()?;
        if centers.len() != self.n_terms {
            return Err(Error::config("centers", format!("expected {} values", self.n_terms)));
        }
        if widths.len() != self.n_terms {
            return Err(Error::config("widths", format!("expected {} values", self.n_terms)));
        }
        if centers.iter().any(|c| !c.is_finite()) {
            return Err(Error::config("centers", "must be finite"));
        }
        if widths.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::config("widths", "must be positive and finite"));
        }
        if !self.z_mean.is_finite() {
            return Err(Error::config("z_mean", "must be finite"));
        }
        if !(self.z_std >= 0.0 && self.z_std.is_finite()) {
            return Err(Error::config("z_std", "must be finite and nonnegative"));
        }
        let [lo, hi] = self.f1_b_range;
        if !(-1.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::config("f1_b_range", "must satisfy -1 <= lo <= hi <= 1"));
        }
        if self.f2_c_set.is_empty() {
            return Err(Error::config("f2_c_set", "must not be empty"));
        }
        if !(self.f2_b_max >= 0.0 && self.f2_b_max.is_finite()) {
            return Err(Error::config("f2_b_max", "must be finite and nonnegative"));
        }
        if self.grid_size < 2 {
            return Err(Error::config("grid_size", "must be at least 2"));
        }
        if self.n_curves.checked_mul(self.grid_size).is_none_or(|n| n > MAX_SAMPLES) {
            return Err(Error::config(
                "grid_size",
                format!("n_curves × grid_size must not exceed {MAX_SAMPLES}"),
            ));
        }
        Ok(())
    }
}

/// Closed-form ground-truth warp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum TrueWarp {
    Identity,
    F1 { b: f64 },
    F2 { b: f64, c: u32 },
}

impl TrueWarp {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            TrueWarp::Identity => t,
            TrueWarp::F1 { b } => t + b * t * (1.0 - t),
            TrueWarp::F2 { b, c } => t + b * (2.0 * PI * c as f64 * t).sin(),
        }
    }

    pub fn deriv(&self, t: f64) -> f64 {
        match *self {
            TrueWarp::Identity => 1.0,
            TrueWarp::F1 { b } => 1.0 + b * (1.0 - 2.0 * t),
            TrueWarp::F2 { b, c } => {
                let w = 2.0 * PI * c as f64;
                1.0 + b * w * (w * t).cos()
            }
        }
    }

    /// `h⁻¹(y)` for `y` in `[0, 1]`.
    pub fn inverse(&self, y: f64) -> f64 {
        match *self {
            TrueWarp::Identity => y,
            TrueWarp::F1 { b } => {
                // root of b t² − (1 + b) t + y = 0 in [0, 1], cancellation-free form
                let disc = ((1.0 + b) * (1.0 + b) - 4.0 * b * y).max(0.0);
                let denom = (1.0 + b) + disc.sqrt();
                if denom == 0.0 {
                    y
                } else {
                    (2.0 * y / denom).clamp(0.0, 1.0)
                }
            }
            TrueWarp::F2 { .. } => {
                let (mut lo, mut hi) = (0.0f64, 1.0f64);
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if self.eval(mid) < y {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }
}

/// `Σ_k z_k exp(−(t − t_k)² / (2 b_k²))`.
pub fn gaussian_mixture(z: &[f64], centers: &[f64], widths: &[f64], t: f64) -> Result<f64> {
    if z.len() != centers.len() || z.len() != widths.len() {
        return Err(Error::config("n_terms", "z, centers and widths must have equal lengths"));
    }
    if let Some(w) = widths.iter().find(|w| !(**w > 0.0)) {
        return Err(Error::config("widths", format!("nonpositive width {w}")));
    }
    Ok(mixture_unchecked(z, centers, widths, t))
}

fn mixture_unchecked(z: &[f64], centers: &[f64], widths: &[f64], t: f64) -> f64 {
    z.iter()
        .zip(centers.iter().zip(widths))
        .map(|(z, (c, b))| z * (-(t - c) * (t - c) / (2.0 * b * b)).exp())
        .sum()
}

/// `t + b t (1 − t)`; monotone on `[0, 1]` for `|b| ≤ 1`.
pub fn warp_f1(b: f64, t: f64) -> Result<f64> {
    if !(b.abs() <= 1.0) {
        return Err(Error::NonMonotone(format!("F1 requires |b| <= 1, got {b}")));
    }
    Ok(TrueWarp::F1 { b }.eval(t))
}

/// `t + b sin(2πct)`; strictly monotone for `|2πcb| < 1`.
pub fn warp_f2(b: f64, c: u32, t: f64) -> Result<f64> {
    if !f2_is_monotone(b, c) {
        return Err(Error::NonMonotone(format!(
            "F2 requires |2*pi*c*b| < 1, got b={b}, c={c}"
        )));
    }
    Ok(TrueWarp::F2 { b, c }.eval(t))
}

fn f2_is_monotone(b: f64, c: u32) -> bool {
    (2.0 * PI * c as f64 * b).abs() < 1.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub curves: Vec<SampledCurve>,
    pub true_warps: Vec<TrueWarp>,
    /// Mixture coefficients `z_ik`, one row per curve.
    pub coeffs: Vec<Vec<f64>>,
    pub config: DatasetConfig,
}

impl SyntheticDataset {
    /// True when some sample is not strictly positive.
    pub fn has_nonpositive(&self) -> bool {
        self.curves.iter().any(|c| c.values().iter().any(|v| *v <= 0.0))
    }

    pub fn grid(&self) -> &[f64] {
        self.curves[0].grid()
    }
}

pub fn generate(config: &DatasetConfig) -> Result<SyntheticDataset> {
    config.validate()?;
    let (centers, widths) = config.terms()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(config.z_mean, config.z_std)
        .map_err(|e| Error::config("z_std", e.to_string()))?;
    let grid = quad::uniform_grid(config.grid_size);
    let n = config.n_curves;

    let mut curves = Vec::with_capacity(n);
    let mut true_warps = Vec::with_capacity(n);
    let mut coeffs = Vec::with_capacity(n);
    for i in 0..n {
        let z: Vec<f64> = (0..config.n_terms).map(|_| normal.sample(&mut rng)).collect();
        let warp = match config.warp_family {
            WarpFamily::None => TrueWarp::Identity,
            WarpFamily::F1 => {
                let [lo, hi] = config.f1_b_range;
                let b = if n == 1 {
                    0.5 * (lo + hi)
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                };
                TrueWarp::F1 { b }
            }
            WarpFamily::F2 => {
                let c = config.f2_c_set[i % config.f2_c_set.len()];
                let b = loop {
                    let b = if config.f2_b_max > 0.0 {
                        rng.random_range(-config.f2_b_max..=config.f2_b_max)
                    } else {
                        0.0
                    };
                    if f2_is_monotone(b, c) {
                        break b;
                    }
                };
                TrueWarp::F2 { b, c }
            }
        };
        let values = grid
            .iter()
            .map(|&t| mixture_unchecked(&z, &centers, &widths, warp.eval(t)))
            .collect();
        curves.push(SampledCurve::new(grid.clone(), values)?);
        true_warps.push(warp);
        coeffs.push(z);
    }
    Ok(SyntheticDataset {
        curves,
        true_warps,
        coeffs,
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixture_values() {
        let v = gaussian_mixture(&[5.0], &[0.5], &[0.1581], 0.5).unwrap();
        assert_eq!(v, 5.0);
        let v = gaussian_mixture(&[5.0, 5.0], &[0.25, 0.75], &[0.1, 0.1], 0.25).unwrap();
        assert!((v - (5.0 + 5.0 * (-12.5f64).exp())).abs() < 1e-12);
        assert!((v - 5.0000186).abs() < 1e-7);
        assert_eq!(gaussian_mixture(&[0.0, 0.0], &[0.25, 0.75], &[0.1, 0.1], 0.4).unwrap(), 0.0);
        assert!(gaussian_mixture(&[1.0], &[0.5], &[0.0], 0.5).is_err());
        assert!(gaussian_mixture(&[1.0, 2.0], &[0.5], &[0.1], 0.5).is_err());
    }

    #[test]
    fn f1_cases() {
        assert_eq!(warp_f1(0.0, 0.3).unwrap(), 0.3);
        assert_eq!(warp_f1(1.0, 0.5).unwrap(), 0.75);
        assert_eq!(TrueWarp::F1 { b: -1.0 }.deriv(0.0), 0.0);
        assert!(matches!(warp_f1(1.01, 0.5), Err(Error::NonMonotone(_))));
    }

    #[test]
    fn f2_cases() {
        assert_eq!(warp_f2(0.4, 0, 0.3).unwrap(), 0.3);
        assert!((warp_f2(0.05, 1, 0.25).unwrap() - 0.30).abs() < 1e-15);
        assert!(warp_f2(0.2, 1, 0.5).is_err());
        let w = TrueWarp::F2 { b: 0.05, c: 3 };
        assert_eq!(w.eval(0.0), 0.0);
        assert!((w.eval(1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn f2_monotone_on_dense_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let c = rng.random_range(0..4u32);
            let b: f64 = rng.random_range(-0.09..0.09);
            if !f2_is_monotone(b, c) {
                continue;
            }
            let w = TrueWarp::F2 { b, c };
            for i in 0..1000 {
                assert!(w.deriv(i as f64 / 999.0) > 0.0);
            }
        }
    }

    #[test]
    fn inverses() {
        for w in [
            TrueWarp::Identity,
            TrueWarp::F1 { b: 0.5 },
            TrueWarp::F1 { b: -1.0 },
            TrueWarp::F1 { b: 1.0 },
            TrueWarp::F2 { b: 0.04, c: 3 },
        ] {
            for i in 0..=100 {
                let t = i as f64 / 100.0;
                assert!((w.inverse(w.eval(t)) - t).abs() < 1e-7, "{w:?} t={t}");
            }
        }
        assert!((TrueWarp::F1 { b: 0.5 }.inverse(0.625) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = DatasetConfig {
            seed: 11,
            ..Default::default()
        };
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = generate(&DatasetConfig { seed: 12, ..cfg.clone() }).unwrap();
        assert_ne!(other.coeffs, generate(&cfg).unwrap().coeffs);
    }

    #[test]
    fn f1_b_values_equally_spaced() {
        let ds = generate(&DatasetConfig::default()).unwrap();
        assert_eq!(ds.curves.len(), 21);
        assert_eq!(ds.curves[0].len(), 1000);
        for (i, w) in ds.true_warps.iter().enumerate() {
            let TrueWarp::F1 { b } = w else { panic!() };
            assert!((b - (-1.0 + 0.1 * i as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn unwarped_fixed_z_is_the_base_mixture() {
        let cfg = DatasetConfig {
            warp_family: WarpFamily::None,
            z_std: 0.0,
            n_curves: 4,
            ..Default::default()
        };
        let ds = generate(&cfg).unwrap();
        for c in &ds.curves {
            for (&t, &v) in c.grid().iter().zip(c.values()) {
                let base = gaussian_mixture(&[5.0, 5.0], &[0.25, 0.75], &[0.1, 0.1], t).unwrap();
                assert_eq!(v, base);
            }
        }
    }

    #[test]
    fn generated_warps_are_monotone_with_fixed_endpoints() {
        for family in [WarpFamily::F1, WarpFamily::F2] {
            let ds = generate(&DatasetConfig::preset(family, 2, 5)).unwrap();
            for w in &ds.true_warps {
                assert_eq!(w.eval(0.0), 0.0);
                assert!((w.eval(1.0) - 1.0).abs() < 1e-14);
                let vals: Vec<f64> = (0..1000).map(|i| w.eval(i as f64 / 999.0)).collect();
                assert!(vals.windows(2).all(|p| p[1] >= p[0]));
            }
        }
    }

    #[test]
    fn config_validation_names_fields() {
        let bad = DatasetConfig {
            widths: Some(vec![0.1, -0.1]),
            ..Default::default()
        };
        match bad.validate() {
            Err(Error::InvalidConfig { field, .. }) => assert_eq!(field, "widths"),
            other => panic!("{other:?}"),
        }
        let bad = DatasetConfig { n_terms: 3, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = DatasetConfig { f1_b_range: [-1.5, 1.0], ..Default::default() };
        assert!(bad.validate().is_err());
        let parsed: DatasetConfig = serde_json::from_str(r#"{"n_terms":1,"seed":4}"#).unwrap();
        assert_eq!(parsed.terms().unwrap(), (vec![0.5], vec![0.1581]));
        assert!(serde_json::from_str::<DatasetConfig>(r#"{"ncurves":3}"#).is_err());
    }
}
