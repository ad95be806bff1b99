//! Operating-mode histogram and emission totals for an empirical trajectory
//! and its smoothed counterpart. The smoother minimizes speed deviation and
//! jerkiness, not grams, so individual pollutants can move either way.

use wavesmooth::emissions::{
    emission_delta, estimate_emissions, OpModeRateTable, Pollutant, VspParams,
};
use wavesmooth::smoother::smooth;
use wavesmooth::trajectory::Trajectory;
use wavesmooth::units::miles_to_meters;

pub fn run_example() -> wavesmooth::Result<()> {
    // Two oscillations of +-6 m/s around 15 m/s.
    let x: Vec<f64> = (0..=240)
        .map(|k| {
            let t = k as f64;
            15.0 * t
                + 6.0 * 60.0 / std::f64::consts::TAU
                    * (1.0 - (std::f64::consts::TAU * t / 60.0).cos())
        })
        .collect();
    let empirical = Trajectory::new(0.0, 1.0, x)?;
    let benchmark = smooth(&empirical, 10.0, miles_to_meters(0.1))?;

    let params = VspParams::default();
    let table = OpModeRateTable::synthetic();
    let e = estimate_emissions(&empirical, &params, &table)?;
    let b = estimate_emissions(&benchmark, &params, &table)?;
    println!("opmode   empirical  benchmark");
    let ops: std::collections::BTreeSet<_> = e
        .opmode_histogram
        .keys()
        .chain(b.opmode_histogram.keys())
        .collect();
    for op in ops {
        let count = |r: &wavesmooth::emissions::EmissionResult| {
            r.opmode_histogram.get(op).copied().unwrap_or(0)
        };
        println!("{op:>6} {:>11} {:>10}", count(&e), count(&b));
    }
    let delta = emission_delta(&e, &b);
    for p in Pollutant::ALL {
        println!(
            "{p:>4}: {:8.2} g -> {:8.2} g ({:+.2}%)",
            e.totals.get(p),
            b.totals.get(p),
            delta.get(p).unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> wavesmooth::Result<()> {
    run_example()
}
