//! Curve registration by monotone time warping.
//!
//! A target curve `y` is modelled as `y(t) = a · x(h(t))` for a reference `x`,
//! a constant amplitude `a` and a smooth strictly increasing warp `h` of
//! `[0, 1]`. Differentiating the logarithm of both sides removes `a`:
//!
//! ```text
//! y'(t) / y(t) = h'(t) · x'(h(t)) / x(h(t))
//! ```
//!
//! The warp is parameterized as `h' ∝ exp(cᵀB(t))` and `c` is estimated by
//! penalized nonlinear least squares on this equation, with both curves
//! replaced by basis expansions.
//!
//! Module map:
//!
//! * [`basis`]: Fourier and B-spline bases, least-squares expansions.
//! * [`warp`]: the monotone warp family.
//! * [`objective`]: residuals and the penalized criterion.
//! * [`solver`]: Levenberg–Marquardt with a finite-difference Jacobian.
//! * [`registration`]: pairwise and batch registration, amplitude estimation.
//! * [`reference`]: choosing a reference curve from a set.
//! * [`simulate`]: synthetic Gaussian-mixture data with known warps.
//! * [`metrics`]: PRD, warp recovery error, variance reduction.
//! * [`io`]: CSV and JSON formats.

pub mod basis;
pub mod error;
pub mod io;
pub mod metrics;
pub mod objective;
pub mod quad;
pub mod reference;
pub mod registration;
pub mod simulate;
pub mod solver;
pub mod warp;

pub use basis::{fit_expansion, BasisExpansion, BasisKind, BasisSpec, SampledCurve};
pub use error::{Error, Result};
pub use objective::{Objective, ObjectiveConfig};
pub use reference::{select_reference_j, select_reference_power, ReferenceChoice, ReferenceMethod};
pub use registration::{register_pair, register_set, RegistrationConfig, RegistrationResult};
pub use simulate::{generate, DatasetConfig, SyntheticDataset, TrueWarp, WarpFamily};
pub use solver::{minimize, SolverOptions, SolverReport};
pub use warp::MonotoneWarp;
