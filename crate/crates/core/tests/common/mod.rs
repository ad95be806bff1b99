//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exact minimizer of the smoothing QP by enumerating active sets.
///
/// The six boundary equalities determine positions 0, 1, 2, N-2, N-1 and N,
/// so only the interior positions are free. Every combination of
/// lower/upper/inactive position bounds and active/inactive non-reversing
/// rows on the free block is solved as a dense equality-constrained KKT
/// system; the feasible candidate with the lowest objective wins.
pub fn kkt_oracle(x_ref: &[f64], dt: f64, lambda: f64, gap: f64) -> Vec<f64> {
    let n = x_ref.len() - 1;
    assert!(n >= 3);
    let v = |k: usize| (x_ref[k + 1] - x_ref[k]) / dt;
    let a = |k: usize| (x_ref[k + 2] - 2.0 * x_ref[k + 1] + x_ref[k]) / (dt * dt);
    let vbar = (x_ref[n] - x_ref[0]) / (n as f64 * dt);

    let mut fixed = vec![None; n + 1];
    fixed[0] = Some(x_ref[0]);
    fixed[1] = Some(x_ref[0] + dt * v(0));
    fixed[2] = Some(2.0 * fixed[1].unwrap() - x_ref[0] + dt * dt * a(0));
    fixed[n] = Some(x_ref[n]);
    fixed[n - 1] = Some(x_ref[n] - dt * v(n - 1));
    fixed[n - 2] = Some(2.0 * fixed[n - 1].unwrap() - x_ref[n] + dt * dt * a(n - 2));
    let free: Vec<usize> = (0..=n).filter(|&k| fixed[k].is_none()).collect();
    let base: Vec<f64> = fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
    if free.is_empty() {
        return base;
    }
    let nf = free.len();

    // Dense difference operators split into fixed and free columns.
    let mut d1 = DMatrix::<f64>::zeros(n, n + 1);
    for k in 0..n {
        d1[(k, k)] = -1.0 / dt;
        d1[(k, k + 1)] = 1.0 / dt;
    }
    let mut d2 = DMatrix::<f64>::zeros(n - 1, n + 1);
    for k in 0..n - 1 {
        d2[(k, k)] = 1.0 / (dt * dt);
        d2[(k, k + 1)] = -2.0 / (dt * dt);
        d2[(k, k + 2)] = 1.0 / (dt * dt);
    }
    let select = |m: &DMatrix<f64>| DMatrix::from_fn(m.nrows(), nf, |i, j| m[(i, free[j])]);
    let xb = DVector::from_vec(base.clone());
    let (d1f, d2f) = (select(&d1), select(&d2));
    let c1 = &d1 * &xb - DVector::from_element(n, vbar);
    let c2 = &d2 * &xb;
    let h = (d1f.transpose() * &d1f + lambda * d2f.transpose() * &d2f) * 2.0;
    let g = (d1f.transpose() * &c1 + lambda * d2f.transpose() * &c2) * 2.0;
    let objective = |z: &DVector<f64>| {
        let r1 = &d1f * z + &c1;
        let r2 = &d2f * z + &c2;
        r1.norm_squared() + lambda * r2.norm_squared()
    };

    // Inequalities as (row over free vars, bound): row . z <= bound.
    let mut box_rows = Vec::new();
    for (j, &k) in free.iter().enumerate() {
        let mut e = DVector::zeros(nf);
        e[j] = 1.0;
        box_rows.push([(e.clone(), x_ref[k]), (-e, -(x_ref[k] - gap))]);
    }
    let mut rev_rows = Vec::new();
    for k in 0..n {
        if fixed[k].is_some() && fixed[k + 1].is_some() {
            continue;
        }
        // -(x_{k+1} - x_k) <= 0
        let row = -d1f.row(k).transpose();
        let bound = (d1.row(k) * &xb)[0];
        rev_rows.push((row, bound));
    }
    let all: Vec<(DVector<f64>, f64)> = box_rows
        .iter()
        .flat_map(|b| b.iter().cloned())
        .chain(rev_rows.iter().cloned())
        .collect();

    let scale = x_ref[n].abs().max(x_ref[0].abs()).max(1.0);
    let feasible = |z: &DVector<f64>| all.iter().all(|(r, b)| r.dot(z) <= b + 1e-9 * scale);

    let mut best: Option<(f64, DVector<f64>)> = None;
    let combos = 3usize.pow(box_rows.len() as u32) << rev_rows.len();
    for code in 0..combos {
        let mut c = code;
        let mut active: Vec<&(DVector<f64>, f64)> = Vec::new();
        for b in &box_rows {
            match c % 3 {
                1 => active.push(&b[0]),
                2 => active.push(&b[1]),
                _ => {}
            }
            c /= 3;
        }
        for r in &rev_rows {
            if c & 1 == 1 {
                active.push(r);
            }
            c >>= 1;
        }
        let m = active.len();
        let mut k = DMatrix::zeros(nf + m, nf + m);
        let mut rhs = DVector::zeros(nf + m);
        k.view_mut((0, 0), (nf, nf)).copy_from(&h);
        rhs.rows_mut(0, nf).copy_from(&(-&g));
        for (i, (row, b)) in active.iter().enumerate() {
            for j in 0..nf {
                k[(nf + i, j)] = row[j];
                k[(j, nf + i)] = row[j];
            }
            rhs[nf + i] = *b;
        }
        let Some(sol) = k.lu().solve(&rhs) else {
            continue;
        };
        if sol.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let z = sol.rows(0, nf).into_owned();
        if !feasible(&z) {
            continue;
        }
        let f = objective(&z);
        if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
            best = Some((f, z));
        }
    }
    let (_, z) = best.expect("reference is feasible, so some active set is");
    let mut x = base;
    for (j, &k) in free.iter().enumerate() {
        x[k] = z[j];
    }
    x
}

/// Random non-decreasing reference with stop-and-go character.
pub fn random_reference(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut x = vec![rng.random_range(0.0..500.0)];
    let mut v: f64 = rng.random_range(0.0..30.0);
    for _ in 0..n {
        v = (v + rng.random_range(-6.0..6.0)).clamp(0.0, 35.0);
        if rng.random_bool(0.1) {
            v = 0.0;
        }
        let last = *x.last().unwrap();
        x.push(last + v);
    }
    x
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Type-7 quantile by sorting.
pub fn sorted_quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}
