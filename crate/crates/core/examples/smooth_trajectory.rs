//! Smooth one stop-and-go trajectory under increasing gap budgets and check
//! every constraint of the result.

use wavesmooth::smoother::{build_problem, Smoother, DEFAULT_LAMBDA};
use wavesmooth::trajectory::Trajectory;
use wavesmooth::units::miles_to_meters;

/// Cruise at 20 m/s, slow to 4 m/s over ~20 s, hold, then recover.
fn stop_and_go() -> Trajectory {
    let speed = |k: usize| match k {
        0..30 => 20.0,
        30..50 => 20.0 - 0.8 * (k - 30) as f64,
        50..70 => 4.0,
        70..95 => 4.0 + 0.64 * (k - 70) as f64,
        _ => 20.0,
    };
    let mut x = vec![0.0];
    for k in 0..150 {
        x.push(x[k] + speed(k));
    }
    Trajectory::new(0.0, 1.0, x).expect("valid trajectory")
}

pub fn run_example() -> wavesmooth::Result<()> {
    let reference = stop_and_go();
    let gaps: Vec<f64> = [0.01, 0.05, 0.1, 0.2]
        .iter()
        .map(|&g| miles_to_meters(g))
        .collect();
    let smoother = Smoother::new(DEFAULT_LAMBDA);
    let f_ref =
        build_problem(&reference, DEFAULT_LAMBDA, 0.0)?.objective_value(&reference.positions)?;
    println!("reference objective {f_ref:.1}");
    for (gap, sol) in gaps.iter().zip(smoother.sweep(&reference, &gaps)?) {
        let problem = build_problem(&reference, DEFAULT_LAMBDA, *gap)?;
        let audit = problem.audit(&sol.x)?;
        let lag = sol
            .x
            .iter()
            .zip(&reference.positions)
            .map(|(a, b)| b - a)
            .fold(0.0, f64::max);
        println!(
            "gap {gap:6.1} m: {:?} after {:4} iterations, objective {:8.1}, max lag {lag:6.1} m, worst violation {:.1e}",
            sol.status,
            sol.iterations,
            sol.objective,
            audit.worst()
        );
    }
    let smoothed = smoother.smooth(&reference, miles_to_meters(0.1))?;
    println!(
        "benchmark trajectory tagged {:?}",
        smoothed.trajectory.source
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> wavesmooth::Result<()> {
    run_example()
}
