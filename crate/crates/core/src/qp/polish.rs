//! Active-set polish.
//!
//! The ADMM iterate identifies which constraints are tight. Treating those
//! as equalities leaves an equality-constrained QP whose KKT system
//!
//! ```text
//! [ P  A_s' ] [x]   [-q ]
//! [ A_s  0  ] [y] = [b_s]
//! ```
//!
//! is solved through the quasi-definite regularization
//! `[P + dI, A_s'; A_s, -dI]` plus iterative refinement. Eliminating `y`
//! keeps the system banded. If the result has a wrong-signed multiplier or
//! violates an inactive row, the guess is repaired and the solve repeated.

use super::admm::Working;
use super::{QpSettings, SymBand};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Activity {
    Inactive,
    Lower,
    Upper,
    Equality,
}

pub(super) struct Polished {
    pub x: Vec<f64>,
    /// Working-unit multipliers, zero on inactive rows.
    pub y: Vec<f64>,
    pub violation: f64,
}

pub(super) fn polish(
    work: &Working,
    z: &[f64],
    y: &[f64],
    settings: &QpSettings,
) -> Option<Polished> {
    let prob = work.prob;
    let m = prob.m();
    let mut activity: Vec<Activity> = (0..m)
        .map(|i| {
            let (l, u) = (prob.l[i], prob.u[i]);
            if l == u {
                Activity::Equality
            } else if z[i] - l < -y[i] {
                Activity::Lower
            } else if u - z[i] < y[i] {
                Activity::Upper
            } else {
                Activity::Inactive
            }
        })
        .collect();

    let tol = settings.polish_tol;
    for _ in 0..settings.polish_max_rounds {
        let active: Vec<usize> = (0..m)
            .filter(|&i| activity[i] != Activity::Inactive)
            .collect();
        let (x, y_act) = solve_equality_qp(work, &active, &activity, settings)?;
        if x.iter().any(|v| !v.is_finite()) {
            return None;
        }

        let y_scale = y_act.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
        let mut changed = false;
        for (&i, &yi) in active.iter().zip(&y_act) {
            let wrong = match activity[i] {
                Activity::Lower => yi > tol * y_scale,
                Activity::Upper => yi < -tol * y_scale,
                _ => false,
            };
            if wrong {
                activity[i] = Activity::Inactive;
                changed = true;
            }
        }
        if changed {
            continue;
        }

        let ax = prob.a.mul(&x);
        let mut violation: f64 = 0.0;
        for i in 0..m {
            let below = prob.l[i] - ax[i];
            let above = ax[i] - prob.u[i];
            violation = violation.max(below).max(above);
            if activity[i] == Activity::Inactive {
                if below > tol {
                    activity[i] = Activity::Lower;
                    changed = true;
                } else if above > tol {
                    activity[i] = Activity::Upper;
                    changed = true;
                }
            }
        }
        if changed {
            continue;
        }

        let mut y_full = vec![0.0; m];
        for (&i, &yi) in active.iter().zip(&y_act) {
            y_full[i] = yi;
        }
        return Some(Polished {
            x,
            y: y_full,
            violation: violation.max(0.0),
        });
    }
    None
}

fn solve_equality_qp(
    work: &Working,
    active: &[usize],
    activity: &[Activity],
    settings: &QpSettings,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let prob = work.prob;
    let n = prob.n();
    let delta = settings.polish_delta;
    let rows: Vec<_> = active.iter().map(|&i| prob.a.row(i)).collect();
    let target: Vec<f64> = active
        .iter()
        .map(|&i| match activity[i] {
            Activity::Lower => prob.l[i],
            _ => prob.u[i],
        })
        .collect();

    let bw = work.p.bandwidth().max(prob.a.gram_bandwidth());
    let mut k: SymBand = work.p.widened(bw);
    k.add_diagonal(delta);
    for r in &rows {
        k.add_outer(r, 1.0 / delta);
    }
    let chol = k.cholesky().ok()?;

    let mut x = vec![0.0; n];
    let mut y = vec![0.0; rows.len()];
    let mut r1 = vec![0.0; n];
    let mut r2 = vec![0.0; rows.len()];
    let scale = work
        .q
        .iter()
        .chain(&target)
        .fold(1.0f64, |a, v| a.max(v.abs()));
    let mut last_res = f64::INFINITY;
    for pass in 0..=settings.polish_refine_iter {
        // Residual of the unregularized KKT system.
        work.p.mul_into(&x, &mut r1);
        for (r, q) in r1.iter_mut().zip(&work.q) {
            *r = -q - *r;
        }
        for ((r, yi), (t, r2i)) in rows.iter().zip(&y).zip(target.iter().zip(r2.iter_mut())) {
            r.axpy_into(-yi, &mut r1);
            *r2i = t - r.dot(&x);
        }
        let res = r1.iter().chain(&r2).fold(0.0f64, |a, v| a.max(v.abs()));
        // Stop at round-off level or once refinement stalls.
        if pass > 0 && (res <= 1e-15 * scale || res > 0.5 * last_res) {
            break;
        }
        last_res = res;
        let mut dx = r1.clone();
        for (r, r2i) in rows.iter().zip(&r2) {
            r.axpy_into(r2i / delta, &mut dx);
        }
        chol.solve_in_place(&mut dx);
        for ((r, yi), r2i) in rows.iter().zip(y.iter_mut()).zip(&r2) {
            *yi += (r.dot(&dx) - r2i) / delta;
        }
        for (xj, d) in x.iter_mut().zip(&dx) {
            *xj += d;
        }
    }
    Some((x, y))
}
