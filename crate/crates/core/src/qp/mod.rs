//! Convex QP solver for banded problems:
//!
//! ```text
//! minimize    0.5 x' P x + q' x
//! subject to  l <= A x <= u
//! ```
//!
//! Operator splitting (ADMM) in the OSQP form with over-relaxation and
//! adaptive step size, followed by a polish step that solves the KKT system
//! on the detected active set. `P` and `A' A` must be banded.

mod admm;
pub mod banded;
mod polish;

use serde::{Deserialize, Serialize};

pub use admm::solve;
pub use banded::{BandCholesky, BandRow, RowMatrix, SymBand};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct QpProblem {
    pub p: SymBand,
    pub q: Vec<f64>,
    pub a: RowMatrix,
    pub l: Vec<f64>,
    pub u: Vec<f64>,
}

impl QpProblem {
    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn m(&self) -> usize {
        self.l.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.p.dim() != n || self.a.ncols() != n {
            return Err(Error::InvalidInput(format!(
                "dimension mismatch: P is {}, A has {} columns, q has {n}",
                self.p.dim(),
                self.a.ncols()
            )));
        }
        if self.a.nrows() != self.l.len() || self.l.len() != self.u.len() {
            return Err(Error::InvalidInput(format!(
                "A has {} rows but bounds have {} / {}",
                self.a.nrows(),
                self.l.len(),
                self.u.len()
            )));
        }
        if let Some(i) = (0..self.m()).find(|&i| {
            !(self.l[i] <= self.u[i])
                || self.l[i] == f64::INFINITY
                || self.u[i] == f64::NEG_INFINITY
        }) {
            return Err(Error::InvalidInput(format!(
                "row {i} has empty bounds [{}, {}]",
                self.l[i], self.u[i]
            )));
        }
        if self.q.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("q must be finite".into()));
        }
        Ok(())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.p.half_quadratic(x) + self.q.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }

    /// `max_i dist(A_i x, [l_i, u_i])`
    pub fn constraint_violation(&self, x: &[f64]) -> f64 {
        self.a
            .mul(x)
            .iter()
            .zip(self.l.iter().zip(&self.u))
            .map(|(&ax, (&l, &u))| (l - ax).max(ax - u).max(0.0))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QpSettings {
    /// Initial ADMM step size.
    pub rho: f64,
    pub sigma: f64,
    /// Over-relaxation factor in (0, 2).
    pub alpha: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub eps_prim_inf: f64,
    pub max_iter: usize,
    /// Residuals are evaluated every `check_interval` iterations.
    pub check_interval: usize,
    pub adaptive_rho: bool,
    pub adaptive_rho_interval: usize,
    /// Refactor only when rho changes by more than this factor.
    pub adaptive_rho_tolerance: f64,
    pub polish: bool,
    pub polish_delta: f64,
    pub polish_refine_iter: usize,
    /// Feasibility and multiplier-sign tolerance for accepting a polished point.
    pub polish_tol: f64,
    pub polish_max_rounds: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            eps_abs: 1e-6,
            eps_rel: 0.0,
            eps_prim_inf: 1e-7,
            max_iter: 50_000,
            check_interval: 10,
            adaptive_rho: true,
            adaptive_rho_interval: 50,
            adaptive_rho_tolerance: 5.0,
            polish: true,
            polish_delta: 1e-7,
            polish_refine_iter: 12,
            polish_tol: 1e-9,
            polish_max_rounds: 25,
        }
    }
}

impl QpSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.rho > 0.0) {
            return bad(format!("rho must be positive, got {}", self.rho));
        }
        if !(self.sigma > 0.0) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return bad(format!("alpha must lie in (0, 2), got {}", self.alpha));
        }
        if !(self.eps_abs >= 0.0 && self.eps_rel >= 0.0)
            || (self.eps_abs == 0.0 && self.eps_rel == 0.0)
        {
            return bad("eps_abs and eps_rel must be >= 0 and not both zero".into());
        }
        if self.max_iter == 0 || self.check_interval == 0 || self.adaptive_rho_interval == 0 {
            return bad("iteration counts must be positive".into());
        }
        if !(self.polish_delta > 0.0) {
            return bad("polish_delta must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    MaxIterations,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpResult {
    pub x: Vec<f64>,
    /// Constraint multipliers; positive on active upper bounds, negative on
    /// active lower bounds.
    pub y: Vec<f64>,
    pub status: QpStatus,
    pub iterations: usize,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub polished: bool,
}
