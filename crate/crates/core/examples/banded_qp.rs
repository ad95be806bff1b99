//! The QP solver on its own: a small banded problem with box and coupling
//! rows.

use wavesmooth::qp::{solve, BandRow, QpProblem, QpSettings, RowMatrix, SymBand};

pub fn run_example() -> wavesmooth::Result<()> {
    // minimize sum (x_i - i)^2 + sum (x_{i+1} - x_i)^2, 0 <= x <= 5, x_{i+1} - x_i <= 0.8
    let n = 10;
    let mut p = SymBand::zeros(n, 1);
    p.add_diagonal(2.0);
    let mut rows = Vec::new();
    for i in 0..n - 1 {
        let d = BandRow::new(i, vec![-1.0, 1.0]);
        p.add_outer(&d, 2.0);
        rows.push(d);
    }
    rows.extend((0..n).map(BandRow::unit));
    let m = rows.len();
    let prob = QpProblem {
        p,
        q: (0..n).map(|i| -2.0 * i as f64).collect(),
        a: RowMatrix::new(n, rows)?,
        l: [vec![f64::NEG_INFINITY; n - 1], vec![0.0; n]].concat(),
        u: [vec![0.8; n - 1], vec![5.0; n]].concat(),
    };
    assert_eq!(prob.m(), m);
    let r = solve(&prob, &QpSettings::default(), None)?;
    println!(
        "{:?} in {} iterations (polished: {})",
        r.status, r.iterations, r.polished
    );
    println!(
        "x = {:?}",
        r.x.iter()
            .map(|v| (v * 1e4).round() / 1e4)
            .collect::<Vec<_>>()
    );
    println!("violation {:.1e}", prob.constraint_violation(&r.x));
    Ok(())
}

#[allow(dead_code)]
fn main() -> wavesmooth::Result<()> {
    run_example()
}
