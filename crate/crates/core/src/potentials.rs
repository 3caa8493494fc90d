//! Scalar Huber potentials.
//!
//! A Huber potential `phi` is even, differentiable, and its weighting
//! function `omega(t) = phi'(t) / t` is bounded, nonnegative and
//! nonincreasing on `t > 0`. The weighting function gives the curvature of
//! the tightest quadratic majorizer of `phi`, and `omega(0)` is the Lipschitz
//! constant of `phi'`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PotentialKind {
    /// `delta^2 sqrt(1 + (t/delta)^2)`, convex; a smooth stand-in for `delta |t|`.
    Hyperbola,
    /// `delta^2/2 log(1 + (t/delta)^2)`, non-convex.
    Cauchy,
    /// `t^2`.
    Parabola,
}

impl fmt::Display for PotentialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PotentialKind::Hyperbola => "hyperbola",
            PotentialKind::Cauchy => "cauchy",
            PotentialKind::Parabola => "parabola",
        })
    }
}

impl FromStr for PotentialKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hyperbola" => Ok(PotentialKind::Hyperbola),
            "cauchy" => Ok(PotentialKind::Cauchy),
            "parabola" => Ok(PotentialKind::Parabola),
            other => Err(Error::InvalidParameter(format!("unknown potential '{other}'"))),
        }
    }
}

/// A Huber potential with its scale parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Potential {
    kind: PotentialKind,
    delta: f64,
}

impl Potential {
    pub fn new(kind: PotentialKind, delta: f64) -> Result<Self> {
        if kind != PotentialKind::Parabola && !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "{kind} potential needs a finite delta > 0, got {delta}"
            )));
        }
        Ok(Self { kind, delta })
    }

    pub fn hyperbola(delta: f64) -> Result<Self> {
        Self::new(PotentialKind::Hyperbola, delta)
    }

    pub fn cauchy(delta: f64) -> Result<Self> {
        Self::new(PotentialKind::Cauchy, delta)
    }

    pub fn parabola() -> Self {
        Self { kind: PotentialKind::Parabola, delta: 1.0 }
    }

    pub fn kind(&self) -> PotentialKind {
        self.kind
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn is_convex(&self) -> bool {
        !matches!(self.kind, PotentialKind::Cauchy)
    }

    pub fn eval(&self, t: f64) -> f64 {
        let d = self.delta;
        match self.kind {
            PotentialKind::Hyperbola => d * d * (1.0 + (t / d).powi(2)).sqrt(),
            PotentialKind::Cauchy => 0.5 * d * d * (t / d).powi(2).ln_1p(),
            PotentialKind::Parabola => t * t,
        }
    }

    pub fn deriv(&self, t: f64) -> f64 {
        t * self.weight(t)
    }

    /// `phi'(t)/t`, with its limit at `t = 0`. Written in closed form so no
    /// division by `t` ever happens.
    pub fn weight(&self, t: f64) -> f64 {
        let d = self.delta;
        match self.kind {
            PotentialKind::Hyperbola => 1.0 / (1.0 + (t / d).powi(2)).sqrt(),
            PotentialKind::Cauchy => 1.0 / (1.0 + (t / d).powi(2)),
            PotentialKind::Parabola => 2.0,
        }
    }

    /// `omega(0)`: the Lipschitz constant of `phi'`.
    pub fn weight_at_zero(&self) -> f64 {
        match self.kind {
            PotentialKind::Hyperbola | PotentialKind::Cauchy => 1.0,
            PotentialKind::Parabola => 2.0,
        }
    }

    /// Tightest quadratic majorizer of `phi` at `s`.
    pub fn quad_majorizer(&self, s: f64) -> QuadCoeffs1D {
        QuadCoeffs1D {
            c0: self.eval(s),
            c1: self.deriv(s),
            c2: self.weight(s),
            center: s,
        }
    }
}

/// `q(t) = c0 + c1 (t - center) + c2/2 (t - center)^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadCoeffs1D {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub center: f64,
}

impl QuadCoeffs1D {
    pub fn eval(&self, t: f64) -> f64 {
        let d = t - self.center;
        self.c0 + self.c1 * d + 0.5 * self.c2 * d * d
    }
}
