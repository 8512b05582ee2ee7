//! Levenberg–Marquardt minimization of `‖r(c)‖²` with a central-difference
//! Jacobian.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Damping above this multiple of the Jacobian scale means no descent step
/// exists at working precision.
const MAX_DAMPING: f64 = 1e16;
const MIN_DAMPING: f64 = 1e-15;

/// A vector-valued residual function of the parameters.
pub trait LeastSquaresProblem {
    /// Residuals at `params`; `None` if they cannot be evaluated.
    fn residuals(&self, params: &[f64]) -> Option<Vec<f64>>;

    /// Moves `params` to a canonical representative of its equivalence class
    /// without changing the residuals. The default does nothing.
    fn canonicalize(&self, _params: &mut [f64]) {}
}

impl<F> LeastSquaresProblem for F
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    fn residuals(&self, params: &[f64]) -> Option<Vec<f64>> {
        Some(self(params))
    }
}

/// Optional restarts from seeded random perturbations of the initial point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiStart {
    pub starts: usize,
    pub seed: u64,
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Relative criterion decrease below which an accepted step ends the run.
    pub ftol: f64,
    /// Step norm tolerance, relative to the parameter norm.
    pub xtol: f64,
    /// Gradient infinity-norm tolerance, relative to `max(1, criterion)`.
    pub gtol: f64,
    pub initial_damping: f64,
    pub damping_up: f64,
    pub damping_down: f64,
    /// Relative finite-difference step.
    pub fd_step: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub multistart: Option<MultiStart>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iters: 100,
            ftol: 1e-10,
            xtol: 1e-8,
            gtol: 1e-10,
            initial_damping: 1e-3,
            damping_up: 10.0,
            damping_down: 0.1,
            fd_step: 1e-6,
            multistart: None,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("solver.ftol", self.ftol),
            ("solver.xtol", self.xtol),
            ("solver.gtol", self.gtol),
            ("solver.initial_damping", self.initial_damping),
            ("solver.damping_down", self.damping_down),
            ("solver.fd_step", self.fd_step),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(field, "must be positive and finite"));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::config("solver.max_iters", "must be at least 1"));
        }
        if !(self.damping_up > 1.0 && self.damping_up.is_finite()) {
            return Err(Error::config("solver.damping_up", "must be greater than 1"));
        }
        if self.damping_down >= 1.0 {
            return Err(Error::config("solver.damping_down", "must be less than 1"));
        }
        if let Some(ms) = &self.multistart {
            if !(ms.spread >= 0.0 && ms.spread.is_finite()) {
                return Err(Error::config("solver.multistart.spread", "must be finite and nonnegative"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub converged: bool,
    /// Number of accepted steps.
    pub iterations: usize,
    pub final_criterion: f64,
    /// Criterion at the start and after every accepted step.
    pub criterion_history: Vec<f64>,
    pub masked_fraction: f64,
    pub clamped_exp: bool,
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

fn finite_residuals<P: LeastSquaresProblem + ?Sized>(problem: &P, params: &[f64]) -> Option<Vec<f64>> {
    problem
        .residuals(params)
        .filter(|r| r.iter().all(|v| v.is_finite()))
}

/// Central-difference Jacobian. Column `k` perturbs `params[k]` by
/// `step · max(1, |params[k]|)`; a non-finite evaluation shrinks that step
/// tenfold once before giving up.
pub fn fd_jacobian<P: LeastSquaresProblem + ?Sized>(
    problem: &P,
    params: &[f64],
    step: f64,
) -> Result<DMatrix<f64>> {
    let mut jac: Option<DMatrix<f64>> = None;
    let mut work = params.to_vec();
    for k in 0..params.len() {
        let mut h = step * params[k].abs().max(1.0);
        let mut column = None;
        for _attempt in 0..2 {
            work[k] = params[k] + h;
            let plus = finite_residuals(problem, &work);
            work[k] = params[k] - h;
            let minus = finite_residuals(problem, &work);
            work[k] = params[k];
            if let (Some(p), Some(m)) = (plus, minus) {
                if p.len() == m.len() {
                    column = Some(
                        p.iter()
                            .zip(&m)
                            .map(|(a, b)| (a - b) / (2.0 * h))
                            .collect::<Vec<_>>(),
                    );
                    break;
                }
            }
            h *= 0.1;
        }
        let column = column.ok_or_else(|| {
            Error::Solver(format!("non-finite residual while differencing parameter {k}"))
        })?;
        let j = jac.get_or_insert_with(|| DMatrix::zeros(column.len(), params.len()));
        if j.nrows() != column.len() {
            return Err(Error::Solver("residual length changed between evaluations".into()));
        }
        j.set_column(k, &DVector::from_vec(column));
    }
    jac.ok_or_else(|| Error::Solver("no parameters to differentiate".into()))
}

/// Minimizes `‖r(c)‖²` from `c0`.
///
/// Accepted steps strictly decrease the criterion; the returned point is never
/// worse than `c0`. Failure to converge is reported in the returned report,
/// not as an error. The only error is a non-finite residual at `c0`.
pub fn minimize<P: LeastSquaresProblem + ?Sized>(
    problem: &P,
    c0: &[f64],
    opts: &SolverOptions,
) -> Result<(Vec<f64>, SolverReport)> {
    opts.validate()?;
    let best = run_lm(problem, c0, opts)?;
    let Some(ms) = &opts.multistart else {
        return Ok(best);
    };
    let mut best = best;
    let mut rng = ChaCha8Rng::seed_from_u64(ms.seed);
    let normal = Normal::new(0.0, ms.spread.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::config("solver.multistart.spread", e.to_string()))?;
    for _ in 0..ms.starts {
        let start: Vec<f64> = c0.iter().map(|c| c + normal.sample(&mut rng)).collect();
        if let Ok(candidate) = run_lm(problem, &start, opts) {
            if candidate.1.final_criterion < best.1.final_criterion {
                best = candidate;
            }
        }
    }
    Ok(best)
}

fn run_lm<P: LeastSquaresProblem + ?Sized>(
    problem: &P,
    c0: &[f64],
    opts: &SolverOptions,
) -> Result<(Vec<f64>, SolverReport)> {
    let mut c = c0.to_vec();
    problem.canonicalize(&mut c);
    let mut r = finite_residuals(problem, &c)
        .ok_or_else(|| Error::Solver("non-finite residual at the initial point".into()))?;
    let mut cost = sum_sq(&r);
    let mut history = vec![cost];
    let mut converged = false;
    let mut iterations = 0;
    let mut damping = opts.initial_damping;
    let n = c.len();

    'outer: while iterations < opts.max_iters {
        if cost == 0.0 {
            converged = true;
            break;
        }
        let jac = match fd_jacobian(problem, &c, opts.fd_step) {
            Ok(j) => j,
            Err(_) => break,
        };
        let resid = DVector::from_column_slice(&r);
        let grad = jac.tr_mul(&resid);
        if grad.amax() <= opts.gtol * cost.max(1.0) {
            converged = true;
            break;
        }
        let normal = jac.tr_mul(&jac);
        let diag_max = normal.diagonal().amax();
        if diag_max == 0.0 {
            converged = true;
            break;
        }
        let scale: Vec<f64> = (0..n)
            .map(|i| normal[(i, i)].max(1e-12 * diag_max))
            .collect();

        loop {
            let mut lhs = normal.clone();
            for (i, s) in scale.iter().enumerate() {
                lhs[(i, i)] += damping * s;
            }
            let step = match lhs.cholesky() {
                Some(ch) => -ch.solve(&grad),
                None => {
                    damping *= opts.damping_up;
                    if damping > MAX_DAMPING {
                        converged = true;
                        break 'outer;
                    }
                    continue;
                }
            };
            let mut trial: Vec<f64> = c.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            problem.canonicalize(&mut trial);
            let accepted = finite_residuals(problem, &trial)
                .map(|tr| (sum_sq(&tr), tr))
                .filter(|(tc, _)| *tc < cost);
            match accepted {
                Some((trial_cost, trial_r)) => {
                    let decrease = (cost - trial_cost) / cost;
                    let c_norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
                    c = trial;
                    r = trial_r;
                    cost = trial_cost;
                    history.push(cost);
                    iterations += 1;
                    damping = (damping * opts.damping_down).max(MIN_DAMPING);
                    if decrease <= opts.ftol || step.norm() <= opts.xtol * (c_norm + opts.xtol) {
                        converged = true;
                        break 'outer;
                    }
                    break;
                }
                None => {
                    damping *= opts.damping_up;
                    if damping > MAX_DAMPING {
                        // no decrease available at working precision
                        converged = true;
                        break 'outer;
                    }
                }
            }
        }
    }

    Ok((
        c,
        SolverReport {
            converged,
            iterations,
            final_criterion: cost,
            criterion_history: history,
            masked_fraction: 0.0,
            clamped_exp: false,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobian_of_identity_map() {
        let f = |c: &[f64]| c.to_vec();
        let j = fd_jacobian(&f, &[0.3, -2.0, 5.0], 1e-6).unwrap();
        for r in 0..3 {
            for k in 0..3 {
                let want = if r == k { 1.0 } else { 0.0 };
                assert!((j[(r, k)] - want).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn jacobian_of_products() {
        let f = |c: &[f64]| vec![c[0] * c[0], c[0] * c[1]];
        let j = fd_jacobian(&f, &[2.0, 3.0], 1e-6).unwrap();
        let want = [[4.0, 0.0], [3.0, 2.0]];
        for r in 0..2 {
            for k in 0..2 {
                assert!((j[(r, k)] - want[r][k]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn jacobian_fails_on_persistent_nan() {
        let f = |c: &[f64]| vec![if c[0] != 1.0 { f64::NAN } else { 0.0 }];
        assert!(fd_jacobian(&f, &[1.0], 1e-6).is_err());
    }

    #[test]
    fn scalar_linear_residual() {
        let f = |c: &[f64]| vec![c[0] - 3.0];
        let (c, rep) = minimize(&f, &[0.0], &SolverOptions::default()).unwrap();
        assert!((c[0] - 3.0).abs() < 1e-8);
        assert!(rep.converged);
        assert!(rep.iterations <= 3, "{}", rep.iterations);
    }

    #[test]
    fn nonfinite_start_is_an_error() {
        let f = |_: &[f64]| vec![f64::INFINITY];
        assert!(matches!(minimize(&f, &[0.0], &SolverOptions::default()), Err(Error::Solver(_))));
    }

    #[test]
    fn rosenbrock() {
        let f = |c: &[f64]| vec![10.0 * (c[1] - c[0] * c[0]), 1.0 - c[0]];
        let (c, rep) = minimize(&f, &[-1.2, 1.0], &SolverOptions::default()).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-6 && (c[1] - 1.0).abs() < 1e-6, "{c:?}");
        assert!(rep.criterion_history.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn determinism() {
        let f = |c: &[f64]| vec![c[0].sin() + c[1] * c[1] - 0.3, c[0] * c[1] - 0.1, c[0] - c[1]];
        let a = minimize(&f, &[0.5, 0.5], &SolverOptions::default()).unwrap();
        let b = minimize(&f, &[0.5, 0.5], &SolverOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn multistart_is_seeded() {
        let f = |c: &[f64]| vec![(3.0 * c[0]).sin() + 0.1 * c[0]];
        let opts = SolverOptions {
            multistart: Some(MultiStart { starts: 4, seed: 7, spread: 2.0 }),
            ..Default::default()
        };
        let a = minimize(&f, &[1.0], &opts).unwrap();
        let b = minimize(&f, &[1.0], &opts).unwrap();
        assert_eq!(a, b);
        let single = minimize(&f, &[1.0], &SolverOptions::default()).unwrap();
        assert!(a.1.final_criterion <= single.1.final_criterion);
    }

    #[test]
    fn options_validation() {
        assert!(SolverOptions { max_iters: 0, ..Default::default() }.validate().is_err());
        assert!(SolverOptions { damping_up: 0.5, ..Default::default() }.validate().is_err());
        assert!(SolverOptions { fd_step: 0.0, ..Default::default() }.validate().is_err());
        assert!(SolverOptions::default().validate().is_ok());
    }
}
