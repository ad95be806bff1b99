use super::polish::polish;
use super::{QpProblem, QpResult, QpSettings, QpStatus, SymBand};
use crate::error::{Error, Result};

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
/// Equality rows get a stiffer step, as in OSQP.
const RHO_EQ_FACTOR: f64 = 1e3;

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Internal working copy: the cost is scaled by `c` so that `P` has unit
/// average diagonal. Multipliers in the working problem are `c` times the
/// multipliers of the caller's problem.
pub(super) struct Working<'a> {
    pub prob: &'a QpProblem,
    pub p: SymBand,
    pub q: Vec<f64>,
    pub c: f64,
}

impl<'a> Working<'a> {
    fn new(prob: &'a QpProblem) -> Self {
        let n = prob.n().max(1) as f64;
        let mean_diag = prob.p.diagonal().map(f64::abs).sum::<f64>() / n;
        let scale = mean_diag.max(norm_inf(&prob.q));
        let c = if scale > 0.0 {
            1.0 / scale.clamp(1e-4, 1e4)
        } else {
            1.0
        };
        let mut p = prob.p.clone();
        p.scale(c);
        let q = prob.q.iter().map(|v| v * c).collect();
        Self { prob, p, q, c }
    }

    /// Primal and dual residuals in the caller's units.
    pub fn residuals(&self, x: &[f64], z: &[f64], y: &[f64]) -> Residuals {
        let a = &self.prob.a;
        let ax = a.mul(x);
        let px = self.p.mul(x);
        let aty = a.mul_transpose(y);
        let r_prim = ax
            .iter()
            .zip(z)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let r_dual_w = px
            .iter()
            .zip(&self.q)
            .zip(&aty)
            .fold(0.0f64, |m, ((p, q), t)| m.max((p + q + t).abs()));
        Residuals {
            r_prim,
            r_dual: r_dual_w / self.c,
            ax_norm: norm_inf(&ax),
            z_norm: norm_inf(z),
            px_norm: norm_inf(&px) / self.c,
            aty_norm: norm_inf(&aty) / self.c,
            q_norm: norm_inf(&self.prob.q),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(super) struct Residuals {
    pub r_prim: f64,
    pub r_dual: f64,
    ax_norm: f64,
    z_norm: f64,
    px_norm: f64,
    aty_norm: f64,
    q_norm: f64,
}

impl Residuals {
    fn eps_prim(&self, s: &QpSettings) -> f64 {
        s.eps_abs + s.eps_rel * self.ax_norm.max(self.z_norm)
    }

    fn eps_dual(&self, s: &QpSettings) -> f64 {
        s.eps_abs + s.eps_rel * self.px_norm.max(self.aty_norm).max(self.q_norm)
    }

    /// How far from the stopping criterion; <= 1 means converged.
    fn progress(&self, s: &QpSettings) -> f64 {
        (self.r_prim / self.eps_prim(s)).max(self.r_dual / self.eps_dual(s))
    }

    /// OSQP step-size update. Both residuals are normalised, so the cost
    /// scale cancels.
    fn rho_ratio(&self) -> f64 {
        let tiny = 1e-30;
        let prim = self.r_prim / self.ax_norm.max(self.z_norm).max(tiny);
        let dual = self.r_dual / (self.px_norm.max(self.aty_norm).max(self.q_norm)).max(tiny);
        (prim / dual.max(tiny)).sqrt()
    }
}

fn row_rhos(prob: &QpProblem, rho: f64) -> Vec<f64> {
    prob.l
        .iter()
        .zip(&prob.u)
        .map(|(&l, &u)| {
            if l == u {
                RHO_EQ_FACTOR * rho
            } else if l == f64::NEG_INFINITY && u == f64::INFINITY {
                RHO_MIN
            } else {
                rho
            }
        })
        .collect()
}

fn factor_kkt(work: &Working, sigma: f64, rhos: &[f64]) -> Result<super::BandCholesky> {
    let bw = work.p.bandwidth().max(work.prob.a.gram_bandwidth());
    let mut k = work.p.widened(bw);
    k.add_diagonal(sigma);
    for (row, &r) in work.prob.a.rows().iter().zip(rhos) {
        k.add_outer(row, r);
    }
    k.cholesky()
}

fn is_primal_infeasible(prob: &QpProblem, dy: &[f64], eps: f64) -> bool {
    let norm = norm_inf(dy);
    if norm < 1e-30 {
        return false;
    }
    let cutoff = 1e-12 * norm;
    let mut support = 0.0;
    for ((&d, &l), &u) in dy.iter().zip(&prob.l).zip(&prob.u) {
        if d > cutoff {
            if u == f64::INFINITY {
                return false;
            }
            support += u * d;
        } else if d < -cutoff {
            if l == f64::NEG_INFINITY {
                return false;
            }
            support += l * d;
        }
    }
    if support > -eps * norm {
        return false;
    }
    norm_inf(&prob.a.mul_transpose(dy)) <= eps * norm
}

fn finish(
    work: &Working,
    x: Vec<f64>,
    y_w: &[f64],
    status: QpStatus,
    iterations: usize,
    res: Residuals,
    polished: bool,
) -> QpResult {
    let objective = work.prob.objective(&x);
    QpResult {
        y: y_w.iter().map(|v| v / work.c).collect(),
        x,
        status,
        iterations,
        objective,
        primal_residual: res.r_prim,
        dual_residual: res.r_dual,
        polished,
    }
}

/// Solves the QP. `warm_x` seeds the primal iterate; the slack starts at
/// its projection and the multipliers at zero.
pub fn solve(prob: &QpProblem, settings: &QpSettings, warm_x: Option<&[f64]>) -> Result<QpResult> {
    prob.validate()?;
    settings.validate()?;
    let (n, m) = (prob.n(), prob.m());
    if let Some(w) = warm_x {
        if w.len() != n {
            return Err(Error::InvalidInput(format!(
                "warm start has length {}, expected {n}",
                w.len()
            )));
        }
    }
    let work = Working::new(prob);
    let a = &prob.a;
    let (alpha, sigma) = (settings.alpha, settings.sigma);

    let mut rho = settings.rho;
    let mut rhos = row_rhos(prob, rho);
    let mut chol = factor_kkt(&work, sigma, &rhos)?;

    let mut x = warm_x.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut z: Vec<f64> = a
        .mul(&x)
        .into_iter()
        .zip(prob.l.iter().zip(&prob.u))
        .map(|(v, (&l, &u))| v.clamp(l, u))
        .collect();
    let mut y = vec![0.0; m];
    let mut y_prev = vec![0.0; m];
    let mut tmp_m = vec![0.0; m];
    let mut xt = vec![0.0; n];
    let mut zt = vec![0.0; m];
    let mut polish_level = 1e3;

    for iter in 1..=settings.max_iter {
        let check = iter % settings.check_interval == 0 || iter == settings.max_iter;
        if check {
            y_prev.copy_from_slice(&y);
        }

        for i in 0..m {
            tmp_m[i] = rhos[i] * z[i] - y[i];
        }
        a.mul_transpose_into(&tmp_m, &mut xt);
        for j in 0..n {
            xt[j] += sigma * x[j] - work.q[j];
        }
        chol.solve_in_place(&mut xt);
        a.mul_into(&xt, &mut zt);

        for j in 0..n {
            x[j] = alpha * xt[j] + (1.0 - alpha) * x[j];
        }
        for i in 0..m {
            let relaxed = alpha * zt[i] + (1.0 - alpha) * z[i];
            let z_new = (relaxed + y[i] / rhos[i]).clamp(prob.l[i], prob.u[i]);
            y[i] += rhos[i] * (relaxed - z_new);
            z[i] = z_new;
        }

        if !check {
            continue;
        }
        let res = work.residuals(&x, &z, &y);
        let progress = res.progress(settings);

        if settings.polish && (progress <= 1.0 || progress <= polish_level) {
            if let Some(p) = polish(&work, &z, &y, settings) {
                let res = work.residuals(&p.x, &a.mul(&p.x), &p.y);
                let res = Residuals {
                    r_prim: p.violation,
                    ..res
                };
                return Ok(finish(&work, p.x, &p.y, QpStatus::Optimal, iter, res, true));
            }
            while polish_level >= progress && polish_level > 1.0 {
                polish_level /= 10.0;
            }
        }
        if progress <= 1.0 {
            return Ok(finish(&work, x, &y, QpStatus::Optimal, iter, res, false));
        }

        for i in 0..m {
            tmp_m[i] = y[i] - y_prev[i];
        }
        if is_primal_infeasible(prob, &tmp_m, settings.eps_prim_inf) {
            return Ok(finish(&work, x, &y, QpStatus::Infeasible, iter, res, false));
        }

        if iter == settings.max_iter {
            return Ok(finish(
                &work,
                x,
                &y,
                QpStatus::MaxIterations,
                iter,
                res,
                false,
            ));
        }

        if settings.adaptive_rho && iter % settings.adaptive_rho_interval == 0 {
            let new_rho = (rho * res.rho_ratio()).clamp(RHO_MIN, RHO_MAX);
            if new_rho.is_finite()
                && (new_rho > rho * settings.adaptive_rho_tolerance
                    || new_rho < rho / settings.adaptive_rho_tolerance)
            {
                rho = new_rho;
                rhos = row_rhos(prob, rho);
                chol = factor_kkt(&work, sigma, &rhos)?;
            }
        }
    }
    unreachable!("loop returns on the final iteration")
}
