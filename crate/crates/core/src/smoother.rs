//! Counterfactual smoothing of a reference trajectory.
//!
//! Given a non-decreasing reference `x_ref` sampled every `dt`, the benchmark
//! trajectory solves
//!
//! ```text
//! minimize    |D1 x - vbar 1|^2 + lambda |D2 x|^2
//! subject to  x_0 = x_ref,0            x_N = x_ref,N
//!             (D1 x)_0 = v_start       (D1 x)_{N-1} = v_end
//!             (D2 x)_0 = a_start       (D2 x)_{N-2} = a_end
//!             x_ref - gap <= x <= x_ref
//!             D1 x >= 0
//! ```
//!
//! with `vbar = (x_ref,N - x_ref,0) / (N dt)` and the boundary data taken
//! from the reference's own differences, so the reference is always feasible.
//! The QP is solved in shifted and scaled coordinates
//! `(x - x_ref,0) / max(1, x_ref,N - x_ref,0)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qp::{self, BandRow, QpProblem, QpSettings, QpStatus, RowMatrix, SymBand};
use crate::trajectory::{
    accelerations, preprocess_reference, velocities, SourceTag, Trajectory, MIN_INTERVALS,
};

pub const DEFAULT_LAMBDA: f64 = 10.0;

/// Number of boundary equalities.
pub const EQUALITY_ROWS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingProblem {
    pub x_ref: Vec<f64>,
    pub dt: f64,
    pub lambda: f64,
    pub gap_budget: f64,
    pub v_bar: f64,
    pub v_start: f64,
    pub v_end: f64,
    pub a_start: f64,
    pub a_end: f64,
}

/// Row counts of the assembled constraint set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstraintCounts {
    pub equalities: usize,
    pub upper_bounds: usize,
    pub lower_bounds: usize,
    pub non_reversing: usize,
}

/// Largest violation of each constraint family, in meters or m/s (m/s^2 for
/// the acceleration equalities). Zero means satisfied.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConstraintAudit {
    pub equality: f64,
    pub no_overpass: f64,
    pub max_gap: f64,
    pub no_reversing: f64,
}

impl ConstraintAudit {
    pub fn worst(&self) -> f64 {
        self.equality
            .max(self.no_overpass)
            .max(self.max_gap)
            .max(self.no_reversing)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    /// Positions in meters.
    pub x: Vec<f64>,
    pub status: QpStatus,
    /// Objective in (m/s)^2.
    pub objective: f64,
    /// Residuals of the scaled problem.
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub polished: bool,
}

/// Assembles the smoothing problem. The reference must already be
/// non-decreasing (see [`preprocess_reference`]).
pub fn build_problem(
    reference: &Trajectory,
    lambda: f64,
    gap_budget: f64,
) -> Result<SmoothingProblem> {
    let n = reference.intervals();
    if n < MIN_INTERVALS {
        return Err(Error::DegenerateProblem(format!(
            "N={n}, need N >= {MIN_INTERVALS}"
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "lambda must be >= 0, got {lambda}"
        )));
    }
    if !(gap_budget >= 0.0 && gap_budget.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "gap budget must be >= 0, got {gap_budget}"
        )));
    }
    if !reference.is_monotone() {
        return Err(Error::InvalidInput(
            "reference trajectory reverses; preprocess it first".into(),
        ));
    }
    let x = &reference.positions;
    let dt = reference.dt;
    let v = velocities(x, dt);
    let a = accelerations(x, dt);
    Ok(SmoothingProblem {
        x_ref: x.clone(),
        dt,
        lambda,
        gap_budget,
        v_bar: (x[n] - x[0]) / (n as f64 * dt),
        v_start: v[0],
        v_end: v[n - 1],
        a_start: a[0],
        a_end: a[n - 2],
    })
}

impl SmoothingProblem {
    /// Number of intervals `N`.
    pub fn intervals(&self) -> usize {
        self.x_ref.len() - 1
    }

    pub fn constraint_counts(&self) -> ConstraintCounts {
        let n = self.intervals();
        ConstraintCounts {
            equalities: EQUALITY_ROWS,
            upper_bounds: n + 1,
            lower_bounds: n + 1,
            non_reversing: n,
        }
    }

    /// Position scale used by the solver.
    pub fn scale(&self) -> f64 {
        (self.x_ref[self.intervals()] - self.x_ref[0]).max(1.0)
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.x_ref.len() {
            return Err(Error::InvalidInput(format!(
                "position sequence has length {}, expected {}",
                x.len(),
                self.x_ref.len()
            )));
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> Result<f64> {
        self.check_len(x)?;
        let speed: f64 = velocities(x, self.dt)
            .iter()
            .map(|v| (v - self.v_bar).powi(2))
            .sum();
        let accel: f64 = accelerations(x, self.dt).iter().map(|a| a * a).sum();
        Ok(speed + self.lambda * accel)
    }

    pub fn audit(&self, x: &[f64]) -> Result<ConstraintAudit> {
        self.check_len(x)?;
        let n = self.intervals();
        let v = velocities(x, self.dt);
        let a = accelerations(x, self.dt);
        let equality = [
            x[0] - self.x_ref[0],
            x[n] - self.x_ref[n],
            v[0] - self.v_start,
            v[n - 1] - self.v_end,
            a[0] - self.a_start,
            a[n - 2] - self.a_end,
        ]
        .iter()
        .fold(0.0f64, |m, e| m.max(e.abs()));
        let mut audit = ConstraintAudit {
            equality,
            ..ConstraintAudit::default()
        };
        for (xk, rk) in x.iter().zip(&self.x_ref) {
            audit.no_overpass = audit.no_overpass.max(xk - rk);
            audit.max_gap = audit.max_gap.max(rk - xk - self.gap_budget);
        }
        audit.no_reversing = v.iter().fold(0.0f64, |m, vk| m.max(-vk));
        Ok(audit)
    }

    /// The QP in scaled coordinates `(x - x_ref,0) / scale`.
    ///
    /// Row order: the six equalities, then one box row per position
    /// (carrying both the no-overpass and the maximum-gap bound), then the
    /// `N` non-reversing rows.
    pub fn to_qp(&self) -> Result<QpProblem> {
        let n = self.intervals();
        let (shift, s) = (self.x_ref[0], self.scale());
        let inv_dt = 1.0 / self.dt;
        let inv_dt2 = inv_dt * inv_dt;
        let d1 = |k: usize| BandRow::new(k, vec![-inv_dt, inv_dt]);
        let d2 = |k: usize| BandRow::new(k, vec![inv_dt2, -2.0 * inv_dt2, inv_dt2]);

        let mut p = SymBand::zeros(n + 1, 2);
        let mut q = vec![0.0; n + 1];
        let vbar = self.v_bar / s;
        for k in 0..n {
            let row = d1(k);
            p.add_outer(&row, 2.0);
            row.axpy_into(-2.0 * vbar, &mut q);
        }
        for k in 0..n - 1 {
            p.add_outer(&d2(k), 2.0 * self.lambda);
        }

        let mut rows = vec![
            BandRow::unit(0),
            BandRow::unit(n),
            d1(0),
            d1(n - 1),
            d2(0),
            d2(n - 2),
        ];
        let eq = [
            0.0,
            (self.x_ref[n] - shift) / s,
            self.v_start / s,
            self.v_end / s,
            self.a_start / s,
            self.a_end / s,
        ];
        let mut l = eq.to_vec();
        let mut u = eq.to_vec();
        for (k, &r) in self.x_ref.iter().enumerate() {
            rows.push(BandRow::unit(k));
            let hi = (r - shift) / s;
            u.push(hi);
            l.push(if self.gap_budget == 0.0 {
                hi
            } else {
                (r - self.gap_budget - shift) / s
            });
        }
        for k in 0..n {
            rows.push(d1(k));
            l.push(0.0);
            u.push(f64::INFINITY);
        }
        Ok(QpProblem {
            p,
            q,
            a: RowMatrix::new(n + 1, rows)?,
            l,
            u,
        })
    }

    /// Solves the problem. Without a warm start the solver starts from the
    /// reference, which is feasible.
    pub fn solve(&self, settings: &QpSettings, warm_start: Option<&[f64]>) -> Result<QpSolution> {
        if let Some(w) = warm_start {
            self.check_len(w)?;
        }
        if self.gap_budget == 0.0 {
            return Ok(QpSolution {
                x: self.x_ref.clone(),
                status: QpStatus::Optimal,
                objective: self.objective_value(&self.x_ref)?,
                primal_residual: 0.0,
                dual_residual: 0.0,
                iterations: 0,
                polished: false,
            });
        }
        let (shift, s) = (self.x_ref[0], self.scale());
        let prob = self.to_qp()?;
        let warm: Vec<f64> = warm_start
            .unwrap_or(&self.x_ref)
            .iter()
            .map(|x| (x - shift) / s)
            .collect();
        let r = qp::solve(&prob, settings, Some(&warm))?;
        let mut x: Vec<f64> = r.x.iter().map(|v| shift + s * v).collect();
        if r.status == QpStatus::Optimal {
            // The six equalities pin positions 0, 1, 2, N-2, N-1 and N to the
            // reference; restore them exactly.
            let n = self.intervals();
            for k in [0, 1, 2, n - 2, n - 1, n] {
                x[k] = self.x_ref[k];
            }
        }
        let mut objective = self.objective_value(&x)?;
        // The reference is feasible; keep it when the solver cannot beat it.
        let f_ref = self.objective_value(&self.x_ref)?;
        if r.status == QpStatus::Optimal && f_ref <= objective {
            x.clone_from(&self.x_ref);
            objective = f_ref;
        }
        Ok(QpSolution {
            objective,
            x,
            status: r.status,
            primal_residual: r.primal_residual,
            dual_residual: r.dual_residual,
            iterations: r.iterations,
            polished: r.polished,
        })
    }
}

pub fn objective_value(problem: &SmoothingProblem, x: &[f64]) -> Result<f64> {
    problem.objective_value(x)
}

/// Result of smoothing one reference at one gap budget.
#[derive(Debug, Clone, PartialEq)]
pub struct Smoothed {
    pub trajectory: Trajectory,
    pub solution: QpSolution,
    /// Largest correction made by reference preprocessing, meters.
    pub preprocess_correction: f64,
}

/// Preprocesses, builds and solves with default settings.
pub fn smooth(reference: &Trajectory, lambda: f64, gap_budget: f64) -> Result<Trajectory> {
    Smoother::new(lambda)
        .smooth(reference, gap_budget)
        .map(|s| s.trajectory)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Smoother {
    pub lambda: f64,
    pub settings: QpSettings,
}

impl Default for Smoother {
    fn default() -> Self {
        Self::new(DEFAULT_LAMBDA)
    }
}

impl Smoother {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            settings: QpSettings::default(),
        }
    }

    pub fn with_settings(mut self, settings: QpSettings) -> Self {
        self.settings = settings;
        self
    }

    /// Smooths one reference. Fails on any non-optimal solve.
    pub fn smooth(&self, reference: &Trajectory, gap_budget: f64) -> Result<Smoothed> {
        let pre = preprocess_reference(reference);
        let problem = build_problem(&pre.trajectory, self.lambda, gap_budget)?;
        let solution = problem.solve(&self.settings, None)?;
        let trajectory = self.finish(&pre.trajectory, &solution, gap_budget)?;
        Ok(Smoothed {
            trajectory,
            solution,
            preprocess_correction: pre.max_correction,
        })
    }

    /// Solves an ascending gap sweep on an already preprocessed reference,
    /// warm-starting each solve from the previous optimum. Statuses are
    /// returned as is; an infeasible status means a solver bug, since the
    /// reference is always feasible, and callers must surface it.
    pub fn sweep(&self, reference: &Trajectory, gap_budgets: &[f64]) -> Result<Vec<QpSolution>> {
        if gap_budgets.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput(
                "gap budgets must be strictly increasing".into(),
            ));
        }
        let mut out: Vec<QpSolution> = Vec::with_capacity(gap_budgets.len());
        for &gap in gap_budgets {
            let problem = build_problem(reference, self.lambda, gap)?;
            let warm = out
                .last()
                .filter(|s| s.status == QpStatus::Optimal)
                .map(|s| s.x.as_slice());
            out.push(problem.solve(&self.settings, warm)?);
        }
        Ok(out)
    }

    /// Wraps an optimal solution as a benchmark trajectory.
    pub fn finish(
        &self,
        reference: &Trajectory,
        solution: &QpSolution,
        gap_budget: f64,
    ) -> Result<Trajectory> {
        match solution.status {
            QpStatus::Optimal => {}
            QpStatus::Infeasible => return Err(infeasible(gap_budget, solution)),
            QpStatus::MaxIterations => {
                return Err(Error::Internal(format!(
                "smoother hit the iteration cap after {} iterations (primal {:.3e}, dual {:.3e})",
                solution.iterations, solution.primal_residual, solution.dual_residual
            )))
            }
        }
        let mut out = Trajectory::new(reference.t_start, reference.dt, solution.x.clone())?;
        out.lane = reference.lane;
        out.source = SourceTag::Benchmark;
        out.gap_budget = Some(gap_budget);
        Ok(out)
    }
}

fn infeasible(gap: f64, solution: &QpSolution) -> Error {
    Error::Internal(format!(
        "smoothing QP reported infeasible at gap {gap} m after {} iterations, but the reference is feasible",
        solution.iterations
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn traj(positions: Vec<f64>) -> Trajectory {
        Trajectory::new(0.0, 1.0, positions).unwrap()
    }

    /// Cruise, brake to a stop, wait, pull away.
    fn stop_and_go(n: usize) -> Trajectory {
        let mut x = vec![0.0];
        for k in 0..n {
            let phase = k as f64 / n as f64;
            let v = if (0.3..0.6).contains(&phase) {
                2.0
            } else {
                15.0 + 3.0 * (k as f64 * 0.4).sin()
            };
            x.push(x[k] + v);
        }
        traj(x)
    }

    #[test]
    fn objective_hand_value() {
        let p = build_problem(&traj(vec![0.0, 10.0, 15.0, 15.0, 25.0]), 0.0, 10.0).unwrap();
        assert_eq!(p.v_bar, 6.25);
        // v = [10, 5, 0, 10] against vbar 6.25.
        assert_eq!(p.objective_value(&p.x_ref).unwrap(), 68.75);
        assert!(p.objective_value(&[0.0; 3]).is_err());
    }

    #[test]
    fn row_counts() {
        let p = build_problem(&traj((0..=10).map(f64::from).collect()), 10.0, 5.0).unwrap();
        let c = p.constraint_counts();
        assert_eq!(
            (
                c.equalities,
                c.upper_bounds,
                c.lower_bounds,
                c.non_reversing
            ),
            (6, 11, 11, 10)
        );
        // Upper and lower position bounds share one two-sided row.
        assert_eq!(p.to_qp().unwrap().m(), 6 + 11 + 10);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(build_problem(&traj(vec![0.0, 1.0, 2.0, 3.0]), 1.0, 1.0).is_ok());
        let mut short = traj(vec![0.0, 1.0, 2.0, 3.0]);
        short.positions.pop();
        assert!(matches!(
            build_problem(&short, 1.0, 1.0),
            Err(Error::DegenerateProblem(_))
        ));
        assert!(build_problem(&traj(vec![0.0, 2.0, 1.0, 3.0]), 1.0, 1.0).is_err());
        assert!(build_problem(&traj(vec![0.0, 1.0, 2.0, 3.0]), -1.0, 1.0).is_err());
        assert!(build_problem(&traj(vec![0.0, 1.0, 2.0, 3.0]), 1.0, -1.0).is_err());
    }

    #[test]
    fn constant_speed_reference_is_optimal() {
        let r = traj((0..=40).map(|k| 100.0 + 12.5 * k as f64).collect());
        let p = build_problem(&r, 10.0, 50.0).unwrap();
        assert_eq!(p.objective_value(&p.x_ref).unwrap(), 0.0);
        let s = p.solve(&QpSettings::default(), None).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        for (a, b) in s.x.iter().zip(&r.positions) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!(s.objective < 1e-10);
    }

    #[test]
    fn zero_gap_returns_reference() {
        let r = stop_and_go(30);
        let out = smooth(&r, 10.0, 0.0).unwrap();
        assert_eq!(out.positions, r.positions);
        assert_eq!(out.source, SourceTag::Benchmark);
        assert_eq!(out.gap_budget, Some(0.0));
    }

    #[test]
    fn smoothing_respects_constraints_and_improves() {
        let r = stop_and_go(120);
        let gap = 160.9344;
        let s = Smoother::default().smooth(&r, gap).unwrap();
        let p = build_problem(&r, DEFAULT_LAMBDA, gap).unwrap();
        let audit = p.audit(&s.trajectory.positions).unwrap();
        assert!(audit.worst() <= 1e-6, "{audit:?}");
        assert!(s.solution.objective < p.objective_value(&p.x_ref).unwrap());
        assert_eq!(s.trajectory.positions[0], r.positions[0]);
        assert_eq!(s.trajectory.positions[120], r.positions[120]);
    }

    #[test]
    fn sweep_is_monotone_and_matches_cold_starts() {
        let r = stop_and_go(90);
        let gaps = [5.0, 10.0, 30.0, 80.0, 200.0];
        let sm = Smoother::default();
        let warm = sm.sweep(&r, &gaps).unwrap();
        for w in warm.windows(2) {
            assert!(w[1].objective <= w[0].objective + 1e-9);
        }
        for (&gap, ws) in gaps.iter().zip(&warm) {
            let cold = build_problem(&r, sm.lambda, gap)
                .unwrap()
                .solve(&sm.settings, None)
                .unwrap();
            for (a, b) in ws.x.iter().zip(&cold.x) {
                assert!((a - b).abs() < 1e-6, "gap {gap}: {a} vs {b}");
            }
        }
        assert!(sm.sweep(&r, &[2.0, 1.0]).is_err());
    }

    #[test]
    fn non_monotone_input_is_preprocessed() {
        let mut x: Vec<f64> = (0..=30).map(|k| 10.0 * k as f64).collect();
        x[10] -= 15.0;
        let s = Smoother::default().smooth(&traj(x), 20.0).unwrap();
        assert!(s.preprocess_correction > 1.0);
        assert!(s.trajectory.is_monotone());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn acceleration_energy_falls_with_lambda(steps in proptest::collection::vec(0.0f64..20.0, 12..40), gap in 1.0f64..60.0) {
            let mut x = vec![0.0];
            for s in &steps {
                x.push(x.last().unwrap() + s);
            }
            let r = traj(x);
            let energy = |lambda: f64| {
                let s = build_problem(&r, lambda, gap).unwrap().solve(&QpSettings::default(), None).unwrap();
                prop_assert_eq!(s.status, QpStatus::Optimal);
                Ok(accelerations(&s.x, 1.0).iter().map(|a| a * a).sum::<f64>())
            };
            let (lo, hi) = (energy(1.0)?, energy(10.0)?);
            prop_assert!(hi <= lo + 1e-6 * (1.0 + lo), "{hi} > {lo}");
        }
    }
}
