//! Basis systems on `[0, 1]` and least-squares basis expansions of sampled curves.
//!
//! Two families are supported:
//!
//! * Fourier: `φ_0 = 1`, `φ_{2j-1} = sin(2πjt)`, `φ_{2j} = cos(2πjt)`. When the
//!   size is even the final term is an unpaired sine, i.e. the index formula is
//!   applied verbatim and nothing is dropped.
//! * B-spline: clamped knot vector with uniformly spaced interior knots, Cox–de
//!   Boor evaluation of the nonzero functions on the knot span.
//!
//! Both families contain the constant function in their span, so a constant
//! shift of a curve is a shift along [`BasisSpec::constant_coeffs`].

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// Largest supported B-spline degree; keeps span evaluation on the stack.
pub const MAX_DEGREE: usize = 10;
pub const MAX_BASIS_SIZE: usize = 1000;

const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Fourier,
    Bspline,
}

/// A basis system on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BasisSpecRepr", into = "BasisSpecRepr")]
pub struct BasisSpec {
    kind: BasisKind,
    size: usize,
    degree: usize,
    knots: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct BasisSpecRepr {
    kind: BasisKind,
    size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    degree: Option<usize>,
}

impl TryFrom<BasisSpecRepr> for BasisSpec {
    type Error = Error;

    fn try_from(r: BasisSpecRepr) -> Result<Self> {
        match r.kind {
            BasisKind::Fourier => {
                if r.degree.is_some() {
                    return Err(Error::config("degree", "only meaningful for bspline bases"));
                }
                BasisSpec::fourier(r.size)
            }
            BasisKind::Bspline => BasisSpec::bspline(r.size, r.degree.unwrap_or(3)),
        }
    }
}

impl From<BasisSpec> for BasisSpecRepr {
    fn from(s: BasisSpec) -> Self {
        BasisSpecRepr {
            kind: s.kind,
            size: s.size,
            degree: (s.kind == BasisKind::Bspline).then_some(s.degree),
        }
    }
}

impl BasisSpec {
    pub fn fourier(size: usize) -> Result<Self> {
        if size == 0 || size > MAX_BASIS_SIZE {
            return Err(Error::InvalidBasis(format!(
                "size must be in 1..={MAX_BASIS_SIZE}, got {size}"
            )));
        }
        Ok(BasisSpec {
            kind: BasisKind::Fourier,
            size,
            degree: 0,
            knots: Vec::new(),
        })
    }

    /// Clamped B-spline basis with `size` functions and uniformly spaced interior knots.
    pub fn bspline(size: usize, degree: usize) -> Result<Self> {
        if degree == 0 || degree > MAX_DEGREE {
            return Err(Error::InvalidBasis(format!(
                "bspline degree must be in 1..={MAX_DEGREE}, got {degree}"
            )));
        }
        if size > MAX_BASIS_SIZE {
            return Err(Error::InvalidBasis(format!(
                "size must be at most {MAX_BASIS_SIZE}, got {size}"
            )));
        }
        if size < degree + 1 {
            return Err(Error::InvalidBasis(format!(
                "bspline of degree {degree} needs at least {} functions, got {size}",
                degree + 1
            )));
        }
        let interior = size - degree - 1;
        let mut knots = Vec::with_capacity(size + degree + 1);
        knots.extend(std::iter::repeat_n(0.0, degree + 1));
        for i in 1..=interior {
            knots.push(i as f64 / (interior + 1) as f64);
        }
        knots.extend(std::iter::repeat_n(1.0, degree + 1));
        Ok(BasisSpec {
            kind: BasisKind::Bspline,
            size,
            degree,
            knots,
        })
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Polynomial degree; zero for Fourier bases.
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Same family with a different number of functions.
    pub fn with_size(&self, size: usize) -> Result<Self> {
        match self.kind {
            BasisKind::Fourier => BasisSpec::fourier(size),
            BasisKind::Bspline => BasisSpec::bspline(size, self.degree),
        }
    }

    /// Coefficients whose expansion is the constant function 1.
    pub fn constant_coeffs(&self) -> Vec<f64> {
        match self.kind {
            BasisKind::Fourier => {
                let mut g = vec![0.0; self.size];
                g[0] = 1.0;
                g
            }
            BasisKind::Bspline => vec![1.0; self.size],
        }
    }

    /// Φ(t).
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        check_domain(t)?;
        let mut out = vec![0.0; self.size];
        self.fill(t, &mut out, false);
        Ok(out)
    }

    /// Ψ(t) = dΦ/dt.
    pub fn eval_deriv(&self, t: f64) -> Result<Vec<f64>> {
        check_domain(t)?;
        let mut out = vec![0.0; self.size];
        self.fill(t, &mut out, true);
        Ok(out)
    }

    /// Dot product of `coeffs` with Φ(t) (or Ψ(t) when `deriv`), without
    /// domain checking. `t` must already lie in `[0, 1]`.
    pub(crate) fn dot(&self, coeffs: &[f64], t: f64, deriv: bool) -> f64 {
        debug_assert_eq!(coeffs.len(), self.size);
        match self.kind {
            BasisKind::Fourier => fourier_dot(coeffs, t, deriv),
            BasisKind::Bspline => {
                let span = self.find_span(t);
                let vals = self.span_values(span, t, deriv);
                let first = span - self.degree;
                vals[..=self.degree]
                    .iter()
                    .zip(&coeffs[first..=span])
                    .map(|(v, c)| v * c)
                    .sum()
            }
        }
    }

    /// Value and derivative of the expansion with `coeffs` at `t`, sharing
    /// the span search (B-spline) or trigonometric recurrence (Fourier).
    pub(crate) fn dot_pair(&self, coeffs: &[f64], t: f64) -> (f64, f64) {
        match self.kind {
            BasisKind::Fourier => fourier_dot_pair(coeffs, t),
            BasisKind::Bspline => {
                let span = self.find_span(t);
                let vals = self.span_values(span, t, false);
                let ders = self.span_values(span, t, true);
                let first = span - self.degree;
                let mut v = 0.0;
                let mut d = 0.0;
                for (r, c) in coeffs[first..=span].iter().enumerate() {
                    v += vals[r] * c;
                    d += ders[r] * c;
                }
                (v, d)
            }
        }
    }

    fn fill(&self, t: f64, out: &mut [f64], deriv: bool) {
        out.iter_mut().for_each(|v| *v = 0.0);
        match self.kind {
            BasisKind::Fourier => {
                out[0] = if deriv { 0.0 } else { 1.0 };
                let (s1, c1) = (TWO_PI * t).sin_cos();
                let (mut s, mut c) = (s1, c1);
                let mut k = 1;
                let mut j = 1.0;
                while k < self.size {
                    let w = TWO_PI * j;
                    out[k] = if deriv { w * c } else { s };
                    if k + 1 < self.size {
                        out[k + 1] = if deriv { -w * s } else { c };
                    }
                    (s, c) = (s * c1 + c * s1, c * c1 - s * s1);
                    k += 2;
                    j += 1.0;
                }
            }
            BasisKind::Bspline => {
                let span = self.find_span(t);
                let vals = self.span_values(span, t, deriv);
                let first = span - self.degree;
                out[first..=span].copy_from_slice(&vals[..=self.degree]);
            }
        }
    }

    /// Knot span index `k` with `knots[k] <= t < knots[k+1]`; the right
    /// endpoint belongs to the last nonempty span.
    fn find_span(&self, t: f64) -> usize {
        let n = self.size;
        let p = self.degree;
        if t >= self.knots[n] {
            return n - 1;
        }
        if t <= self.knots[p] {
            return p;
        }
        let (mut lo, mut hi) = (p, n);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if t < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// Nonzero basis functions `N_{span-p..=span, p}` at `t`, or their derivatives.
    fn span_values(&self, span: usize, t: f64, deriv: bool) -> [f64; MAX_DEGREE + 1] {
        let p = self.degree;
        if !deriv {
            return cox_de_boor(&self.knots, span, t, p);
        }
        let lower = cox_de_boor(&self.knots, span, t, p - 1);
        let mut out = [0.0; MAX_DEGREE + 1];
        let pf = p as f64;
        // lower[m] holds N_{span-p+1+m, p-1}
        for (r, slot) in out.iter_mut().enumerate().take(p + 1) {
            let i = span - p + r;
            let left = if r >= 1 { lower[r - 1] } else { 0.0 };
            let right = if r < p { lower[r] } else { 0.0 };
            let d1 = self.knots[i + p] - self.knots[i];
            let d2 = self.knots[i + p + 1] - self.knots[i + 1];
            let a = if d1 > 0.0 { pf * left / d1 } else { 0.0 };
            let b = if d2 > 0.0 { pf * right / d2 } else { 0.0 };
            *slot = a - b;
        }
        out
    }

    /// Row-major `grid.len() × size` table of Φ(t_i).
    pub(crate) fn design_rows(&self, grid: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; grid.len() * self.size];
        for (row, &t) in out.chunks_exact_mut(self.size).zip(grid) {
            self.fill(t.clamp(0.0, 1.0), row, false);
        }
        out
    }

    /// Design matrix with rows Φ(t_i).
    pub(crate) fn design_matrix(&self, grid: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(grid.len(), self.size);
        let mut row = vec![0.0; self.size];
        for (i, &t) in grid.iter().enumerate() {
            self.fill(t.clamp(0.0, 1.0), &mut row, false);
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }
}

/// Triangular Cox–de Boor scheme for the `p + 1` functions nonzero on `span`.
fn cox_de_boor(knots: &[f64], span: usize, t: f64, p: usize) -> [f64; MAX_DEGREE + 1] {
    let mut n = [0.0; MAX_DEGREE + 1];
    let mut left = [0.0; MAX_DEGREE + 1];
    let mut right = [0.0; MAX_DEGREE + 1];
    n[0] = 1.0;
    for j in 1..=p {
        left[j] = t - knots[span + 1 - j];
        right[j] = knots[span + j] - t;
        let mut saved = 0.0;
        for r in 0..j {
            let denom = right[r + 1] + left[j - r];
            let temp = if denom != 0.0 { n[r] / denom } else { 0.0 };
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }
    n
}

fn fourier_dot(coeffs: &[f64], t: f64, deriv: bool) -> f64 {
    let size = coeffs.len();
    let mut acc = if deriv { 0.0 } else { coeffs[0] };
    let (s1, c1) = (TWO_PI * t).sin_cos();
    let (mut s, mut c) = (s1, c1);
    let mut k = 1;
    let mut j = 1.0;
    while k < size {
        if deriv {
            let w = TWO_PI * j;
            acc += coeffs[k] * w * c;
            if k + 1 < size {
                acc -= coeffs[k + 1] * w * s;
            }
        } else {
            acc += coeffs[k] * s;
            if k + 1 < size {
                acc += coeffs[k + 1] * c;
            }
        }
        (s, c) = (s * c1 + c * s1, c * c1 - s * s1);
        k += 2;
        j += 1.0;
    }
    acc
}

fn fourier_dot_pair(coeffs: &[f64], t: f64) -> (f64, f64) {
    let size = coeffs.len();
    let mut v = coeffs[0];
    let mut d = 0.0;
    let (s1, c1) = (TWO_PI * t).sin_cos();
    let (mut s, mut c) = (s1, c1);
    let mut k = 1;
    let mut j = 1.0;
    while k < size {
        let w = TWO_PI * j;
        v += coeffs[k] * s;
        d += coeffs[k] * w * c;
        if k + 1 < size {
            v += coeffs[k + 1] * c;
            d -= coeffs[k + 1] * w * s;
        }
        (s, c) = (s * c1 + c * s1, c * c1 - s * s1);
        k += 2;
        j += 1.0;
    }
    (v, d)
}

pub(crate) fn check_domain(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::Domain { value: t })
    }
}

/// Coefficients over a basis: the curve model `Σ_k coeffs[k] φ_k(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisExpansion {
    spec: BasisSpec,
    coeffs: Vec<f64>,
}

impl BasisExpansion {
    pub fn new(spec: BasisSpec, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != spec.size() {
            return Err(Error::InvalidBasis(format!(
                "expected {} coefficients, got {}",
                spec.size(),
                coeffs.len()
            )));
        }
        if let Some(bad) = coeffs.iter().find(|c| !c.is_finite()) {
            return Err(Error::NonFinite(format!("expansion coefficient {bad}")));
        }
        Ok(BasisExpansion { spec, coeffs })
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        check_domain(t)?;
        Ok(self.spec.dot(&self.coeffs, t, false))
    }

    pub fn eval_deriv(&self, t: f64) -> Result<f64> {
        check_domain(t)?;
        Ok(self.spec.dot(&self.coeffs, t, true))
    }

    pub(crate) fn value_unchecked(&self, t: f64) -> f64 {
        self.spec.dot(&self.coeffs, t, false)
    }

    /// The expansion multiplied by `a`.
    pub fn scaled(&self, a: f64) -> Result<Self> {
        BasisExpansion::new(self.spec.clone(), self.coeffs.iter().map(|c| a * c).collect())
    }

    /// The expansion plus the constant `offset`.
    pub fn shifted(&self, offset: f64) -> Result<Self> {
        let g = self.spec.constant_coeffs();
        let coeffs = self.coeffs.iter().zip(&g).map(|(c, g)| c + offset * g).collect();
        BasisExpansion::new(self.spec.clone(), coeffs)
    }

    /// Samples the expansion on `grid` (which must lie in `[0, 1]`).
    pub fn sample(&self, grid: &[f64]) -> Result<SampledCurve> {
        let values = grid
            .iter()
            .map(|&t| self.eval(t))
            .collect::<Result<Vec<_>>>()?;
        SampledCurve::new(grid.to_vec(), values)
    }
}

/// Least-squares fit of `spec` to the samples of `curve`.
///
/// The design matrix is factored with Householder QR; a numerically
/// rank-deficient design is reported as [`Error::IllPosedFit`].
pub fn fit_expansion(curve: &SampledCurve, spec: &BasisSpec) -> Result<BasisExpansion> {
    let n = curve.len();
    let k = spec.size();
    if n < k {
        return Err(Error::IllPosedFit(format!(
            "{k} basis functions but only {n} samples"
        )));
    }
    if curve.grid()[0] < 0.0 || curve.grid()[n - 1] > 1.0 {
        return Err(Error::IllPosedFit("curve grid must lie in [0, 1]".into()));
    }
    let design = spec.design_matrix(curve.grid());
    let qr = design.qr();
    let r = qr.r();
    let diag_max = (0..k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    for i in 0..k {
        if !(r[(i, i)].abs() > 1e-10 * diag_max) {
            return Err(Error::IllPosedFit(format!(
                "design matrix is rank deficient (column {i})"
            )));
        }
    }
    let mut rhs = DVector::from_column_slice(curve.values());
    qr.q_tr_mul(&mut rhs);
    let top = rhs.rows(0, k).into_owned();
    let sol = r
        .solve_upper_triangular(&top)
        .ok_or_else(|| Error::IllPosedFit("triangular solve failed".into()))?;
    BasisExpansion::new(spec.clone(), sol.iter().copied().collect())
}

/// A curve observed on a strictly increasing grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCurve {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl SampledCurve {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::InvalidCurve(format!(
                "grid has {} points but there are {} values",
                grid.len(),
                values.len()
            )));
        }
        if grid.len() < 2 {
            return Err(Error::InvalidCurve("at least two samples are required".into()));
        }
        if grid.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidCurve("non-finite sample".into()));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidCurve("grid must be strictly increasing".into()));
        }
        Ok(SampledCurve { grid, values })
    }

    /// `f` sampled on `n` uniform points of `[0, 1]`.
    pub fn from_fn(n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let grid = quad::uniform_grid(n);
        let values = grid.iter().map(|&t| f(t)).collect();
        SampledCurve::new(grid, values)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// True when the grid starts at 0 and ends at 1.
    pub fn is_canonical(&self) -> bool {
        self.grid[0] == 0.0 && self.grid[self.grid.len() - 1] == 1.0
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.grid[0], self.grid[self.grid.len() - 1])
    }

    /// Affinely maps the grid onto `[0, 1]`.
    pub fn to_unit_domain(&self) -> Self {
        let (t0, t1) = self.domain();
        let span = t1 - t0;
        let n = self.grid.len();
        let grid = self
            .grid
            .iter()
            .enumerate()
            .map(|(i, &t)| match i {
                0 => 0.0,
                _ if i == n - 1 => 1.0,
                _ => ((t - t0) / span).clamp(0.0, 1.0),
            })
            .collect();
        SampledCurve {
            grid,
            values: self.values.clone(),
        }
    }

    pub fn scaled(&self, a: f64) -> Result<Self> {
        SampledCurve::new(self.grid.clone(), self.values.iter().map(|v| a * v).collect())
    }

    /// Linear interpolation of the samples at `t`.
    pub fn interp(&self, t: f64) -> f64 {
        quad::interp_linear(&self.grid, &self.values, t)
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}
