//! Reconstruction solvers: nonlinear conjugate gradient with
//! majorize-minimize step sizes for the smooth cost, and proximal-average
//! FISTA / POGM baselines for the nuclear-norm cost.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::llr::Shift;
use crate::spectral::Curvature;

mod metrics;
mod ncg;
mod prox;

pub use metrics::{dist_to_limit, nrmse};
pub use ncg::{default_lambda, fletcher_reeves, ncg_solve};
pub use prox::{
    fista_pa_solve, matched_nuclear_weight, nuclear_llr_value, operator_norm_sq, pogm_pa_solve, prox_average_llr, svt,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Ncg,
    FistaPa,
    PogmPa,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ncg => "ncg",
            Method::FistaPa => "fista_pa",
            Method::PogmPa => "pogm_pa",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ncg" => Ok(Method::Ncg),
            "fista" | "fista_pa" => Ok(Method::FistaPa),
            "pogm" | "pogm_pa" => Ok(Method::PogmPa),
            other => Err(Error::InvalidParameter(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub method: Method,
    pub max_iter: usize,
    /// Regularization weight. For the proximal baselines this multiplies the
    /// sum of patch nuclear norms.
    pub lambda: f64,
    /// MM iterations per line search.
    pub n_alpha: usize,
    /// Initial step of each line search.
    pub alpha0: f64,
    pub curvature: Curvature,
    /// Use single-shift line coefficients.
    pub fast_step: bool,
    pub sbar: Shift,
    /// Stop once the gradient norm falls below this.
    pub grad_tol: f64,
    pub deterministic_reduce: bool,
    /// Keep every k-th iterate (and the last one); 0 keeps none.
    pub store_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::Ncg,
            max_iter: 100,
            lambda: 0.0,
            n_alpha: 1,
            alpha0: 0.0,
            curvature: Curvature::GR,
            fast_step: false,
            sbar: [0, 0],
            grad_tol: 0.0,
            deterministic_reduce: true,
            store_every: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be >= 1".into()));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(Error::InvalidParameter("grad_tol must be >= 0".into()));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidParameter("lambda must be finite and >= 0".into()));
        }
        if self.n_alpha == 0 {
            return Err(Error::InvalidParameter("n_alpha must be >= 1".into()));
        }
        Ok(())
    }
}

/// One row of the iteration log. Row 0 describes the initial point.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub cost: f64,
    pub alpha: f64,
    pub grad_norm: f64,
    pub nrmse: Option<f64>,
    /// Wall time since the solver started, including line searches.
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct SolveOutput {
    pub x: CMatrix,
    pub log: Vec<IterationRecord>,
    /// `(iteration, iterate)` pairs kept according to `store_every`.
    pub iterates: Vec<(usize, CMatrix)>,
    /// Iterations whose cost went up by more than rounding (only possible with fast steps,
    /// non-majorizing settings, or the heuristic proximal baselines).
    pub cost_increases: usize,
    pub converged: bool,
}

impl SolveOutput {
    pub fn final_record(&self) -> &IterationRecord {
        self.log.last().expect("log always has the initial row")
    }

    /// Mean wall time per iteration.
    pub fn seconds_per_iter(&self) -> f64 {
        let last = self.final_record();
        if last.iter == 0 {
            0.0
        } else {
            (last.seconds - self.log[0].seconds) / last.iter as f64
        }
    }
}

pub const LOG_HEADER: &str = "iter,cost,alpha,gradnorm,nrmse,seconds";

/// Writes the log as CSV; a missing NRMSE is an empty field.
pub fn write_log_csv<W: Write>(mut w: W, log: &[IterationRecord]) -> std::io::Result<()> {
    writeln!(w, "{LOG_HEADER}")?;
    for r in log {
        let nrmse = r.nrmse.map(|v| format!("{v:e}")).unwrap_or_default();
        writeln!(
            w,
            "{},{:e},{:e},{:e},{},{:e}",
            r.iter, r.cost, r.alpha, r.grad_norm, nrmse, r.seconds
        )?;
    }
    Ok(())
}

pub fn read_log_csv(text: &str) -> Result<Vec<IterationRecord>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(LOG_HEADER) {
        return Err(Error::Format(format!("log does not start with '{LOG_HEADER}'")));
    }
    let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| Error::Format(format!("bad number '{s}'"))) };
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(Error::Format(format!("log row '{line}' has {} fields", f.len())));
            }
            Ok(IterationRecord {
                iter: f[0].parse().map_err(|_| Error::Format(format!("bad iteration '{}'", f[0])))?,
                cost: num(f[1])?,
                alpha: num(f[2])?,
                grad_norm: num(f[3])?,
                nrmse: if f[4].is_empty() { None } else { Some(num(f[4])?) },
                seconds: num(f[5])?,
            })
        })
        .collect()
}

/// Relative increase below which a cost change counts as rounding noise.
const COST_SLACK: f64 = 1e-10;

/// Shared bookkeeping for the solver loops.
pub(crate) struct Recorder<'a> {
    start: Instant,
    truth: Option<&'a CMatrix>,
    store_every: usize,
    pub log: Vec<IterationRecord>,
    pub iterates: Vec<(usize, CMatrix)>,
    pub cost_increases: usize,
}

impl<'a> Recorder<'a> {
    pub fn new(truth: Option<&'a CMatrix>, store_every: usize) -> Self {
        Self {
            start: Instant::now(),
            truth,
            store_every,
            log: Vec::new(),
            iterates: Vec::new(),
            cost_increases: 0,
        }
    }

    pub fn record(&mut self, iter: usize, x: &CMatrix, cost: f64, alpha: f64, grad_norm: f64) -> Result<()> {
        let seconds = self.start.elapsed().as_secs_f64();
        if !cost.is_finite() || !grad_norm.is_finite() {
            return Err(Error::NonFinite(format!("iteration {iter}: cost {cost}, gradient norm {grad_norm}")));
        }
        if let Some(prev) = self.log.last() {
            if cost > prev.cost + COST_SLACK * prev.cost.abs() {
                self.cost_increases += 1;
            }
        }
        let nrmse = match self.truth {
            Some(t) => Some(nrmse(x, t)?),
            None => None,
        };
        self.log.push(IterationRecord { iter, cost, alpha, grad_norm, nrmse, seconds });
        if self.store_every > 0 && iter.is_multiple_of(self.store_every) {
            self.iterates.push((iter, x.clone()));
        }
        Ok(())
    }

    pub fn finish(mut self, x: CMatrix, converged: bool) -> SolveOutput {
        let last = self.log.last().map_or(0, |r| r.iter);
        if self.store_every > 0 && self.iterates.last().is_none_or(|(k, _)| *k != last) {
            self.iterates.push((last, x.clone()));
        }
        SolveOutput {
            x,
            log: self.log,
            iterates: self.iterates,
            cost_increases: self.cost_increases,
            converged,
        }
    }
}
