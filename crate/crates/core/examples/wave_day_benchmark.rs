//! Full benchmark on one synthetic congested day: trade-off curve per
//! pollutant and the CO2 reduction grid over (mean speed, speed std).
//!
//! Run with `cargo run --release --example wave_day_benchmark`.

use wavesmooth::benchmark::{run_benchmark, BenchmarkConfig};
use wavesmooth::emissions::{OpModeRateTable, VspParams};
use wavesmooth::speed_field::{synthesize_field, WaveScenario};
use wavesmooth::units::{meters_to_miles, miles_to_meters, mps_to_mph};

pub fn run_example() -> wavesmooth::Result<()> {
    let scenario = WaveScenario {
        base_speed: 25.0,
        wave_count: 6,
        wave_amplitude: 20.0,
        wave_width_t: 90.0,
        wave_width_x: 500.0,
        wave_propagation_speed: -4.5,
        free_flow_noise: 1.5,
        seed: 2,
    };
    let field = synthesize_field(&scenario, 4.0 * 3600.0, miles_to_meters(4.2))?
        .with_metadata(1, "synthetic-day");
    let config = BenchmarkConfig::default();
    let (report, fragments) = run_benchmark(
        &[field],
        &config,
        &VspParams::default(),
        &OpModeRateTable::synthetic(),
    )?;

    let day = &report.days[0];
    println!(
        "seeds {}  degenerate {}  filtered {}  eligible {}",
        day.seeds, day.degenerate, day.filtered, day.eligible
    );
    for curve in &report.tradeoff {
        let pts: Vec<String> = curve
            .points
            .iter()
            .map(|p| {
                format!(
                    "{:.2} mi: {:6.2}%",
                    meters_to_miles(p.gap_budget),
                    p.mean_reduction
                )
            })
            .collect();
        println!("{:>4}  {}", curve.pollutant.as_str(), pts.join("  "));
    }
    println!(
        "CO2 reduction at {:.2} mi by (mean speed, speed std) in mph:",
        meters_to_miles(report.cell_gap_budget)
    );
    for c in &report.cells {
        println!(
            "  [{:4.1}, {:4.1})  [{:4.1}, {:4.1})  n={:4}  {:6.2}%",
            mps_to_mph(c.mean_speed_lo),
            mps_to_mph(c.mean_speed_lo + config.cell_mean_speed_width),
            mps_to_mph(c.speed_std_lo),
            mps_to_mph(c.speed_std_lo + config.cell_speed_std_width),
            c.count,
            c.mean_reduction
        );
    }
    let iters: usize = fragments
        .iter()
        .flat_map(|f| &f.records)
        .flat_map(|r| &r.gaps)
        .map(|g| g.iterations)
        .sum();
    println!(
        "total solver iterations {iters}, infeasible {}",
        report.infeasible
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> wavesmooth::Result<()> {
    run_example()
}
