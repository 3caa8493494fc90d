use num_complex::Complex64;

use super::{Recorder, SolveOutput, SolverConfig};
use crate::error::{Error, Result};
use crate::linalg::{all_finite, frob, frob_sq, re_inner, CMatrix};
use crate::linesearch::{combine_line_coeffs, mm_step, LineQuadratic};
use crate::llr::{LocalLowRank, Reduction};
use crate::model::{LinearOperator, ReconstructionProblem};

/// Fletcher–Reeves coefficient `|G_new|^2 / |G_old|^2`.
pub fn fletcher_reeves(g_new: &CMatrix, g_old: &CMatrix) -> f64 {
    let den = frob_sq(g_old);
    if den == 0.0 {
        0.0
    } else {
        frob_sq(g_new) / den
    }
}

/// A regularization weight that balances the two gradient terms at `x0`:
/// `0.1 |grad f(x0)| / |grad llr(x0)|`.
pub fn default_lambda<A: LinearOperator>(
    problem: &ReconstructionProblem<A>,
    llr: &LocalLowRank,
    x0: &CMatrix,
) -> Result<f64> {
    let gf = frob(&problem.f_grad(x0)?);
    let gr = frob(&llr.grad(x0)?);
    if gr == 0.0 || gf == 0.0 {
        return Err(Error::InvalidParameter("cannot balance a zero gradient".into()));
    }
    Ok(0.1 * gf / gr)
}

struct Cost<'a, A: LinearOperator> {
    problem: &'a ReconstructionProblem<A>,
    llr: &'a LocalLowRank,
    lambda: f64,
}

impl<A: LinearOperator> Cost<'_, A> {
    fn value_and_grad(&self, x: &CMatrix) -> Result<(f64, CMatrix)> {
        let (fv, mut g) = self.problem.f_value_and_grad(x)?;
        if self.lambda == 0.0 {
            return Ok((fv, g));
        }
        let (rv, rg) = self.llr.value_and_grad(x)?;
        g += rg * Complex64::new(self.lambda, 0.0);
        Ok((fv + self.lambda * rv, g))
    }
}

/// Nonlinear conjugate gradient (Fletcher–Reeves) on
/// `1/2 |A(X) - Y|^2 + lambda * llr(X)`, with step sizes from
/// majorize-minimize iterations on quadratic majorizers of the line function.
///
/// When the new direction is not a descent direction it is reset to the
/// negative gradient.
pub fn ncg_solve<A: LinearOperator>(
    problem: &ReconstructionProblem<A>,
    llr: &LocalLowRank,
    cfg: &SolverConfig,
    x0: &CMatrix,
) -> Result<SolveOutput> {
    cfg.validate()?;
    if x0.shape() != problem.shape() {
        return Err(Error::DimensionMismatch(format!("X0 is {:?}, expected {:?}", x0.shape(), problem.shape())));
    }
    let reduction = if cfg.deterministic_reduce { Reduction::Ordered } else { Reduction::Tree };
    let llr = llr.clone().with_reduction(reduction);
    let cost = Cost { problem, llr: &llr, lambda: cfg.lambda };

    let mut rec = Recorder::new(problem.truth.as_ref(), cfg.store_every);
    let mut x = x0.clone();
    let (mut value, mut grad) = cost.value_and_grad(&x)?;
    let mut gnorm = frob(&grad);
    rec.record(0, &x, value, 0.0, gnorm)?;
    let mut dir = -&grad;
    let mut converged = gnorm < cfg.grad_tol;

    for iter in 1..=cfg.max_iter {
        if converged {
            break;
        }
        let line = problem.data_line(&x, &dir)?;
        let coeffs = |a: f64| -> Result<LineQuadratic> {
            let qf = line.coeffs(a);
            if cfg.lambda == 0.0 {
                return Ok(qf);
            }
            let qr = if cfg.fast_step {
                llr.line_coeffs_fast(&x, &dir, a, cfg.curvature, cfg.sbar)?
            } else {
                llr.line_coeffs(&x, &dir, a, cfg.curvature)?
            };
            combine_line_coeffs(&qf, &qr, cfg.lambda)
        };
        let alpha = mm_step(coeffs, cfg.alpha0, cfg.n_alpha)?;
        x += &dir * Complex64::new(alpha, 0.0);
        if !all_finite(&x) {
            return Err(Error::NonFinite(format!("iterate {iter}")));
        }
        let (new_value, new_grad) = cost.value_and_grad(&x)?;
        if new_value > value {
            log::warn!("iteration {iter}: cost increased from {value:e} to {new_value:e}");
        }
        let beta = fletcher_reeves(&new_grad, &grad);
        dir *= Complex64::new(beta, 0.0);
        dir -= &new_grad;
        if re_inner(&new_grad, &dir) >= 0.0 {
            log::debug!("iteration {iter}: direction reset");
            dir = -&new_grad;
        }
        value = new_value;
        grad = new_grad;
        gnorm = frob(&grad);
        rec.record(iter, &x, value, alpha, gnorm)?;
        converged = gnorm < cfg.grad_tol;
    }
    Ok(rec.finish(x, converged))
}
