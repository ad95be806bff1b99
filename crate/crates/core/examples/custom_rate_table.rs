//! Load a rate table from CSV, inspect its metadata, and see the error for
//! an incomplete one.

use wavesmooth::emissions::{
    estimate_emissions, OpModeRateTable, Pollutant, VspParams, ALL_OPMODES,
};
use wavesmooth::trajectory::Trajectory;
use wavesmooth::Error;

pub fn run_example() -> wavesmooth::Result<()> {
    let mut csv = String::from("#fuel_type=diesel\npollutant,opModeID,rate_g_per_hr\n");
    for p in Pollutant::ALL {
        for op in ALL_OPMODES {
            // Rates rising with the mode ID stand in for real data.
            csv.push_str(&format!("{p},{op},{}\n", 100.0 + f64::from(op)));
        }
    }
    let table = OpModeRateTable::read_from(csv.as_bytes())?;
    println!("metadata {:?}", table.metadata);

    let cruise = Trajectory::new(0.0, 1.0, (0..=600).map(|k| 13.0 * k as f64).collect())?;
    let r = estimate_emissions(&cruise, &VspParams::default(), &table)?;
    println!(
        "10 min at 13 m/s: {:.3} g CO2 over modes {:?}",
        r.totals.co2, r.opmode_histogram
    );

    let truncated: String = csv.lines().take(10).map(|l| format!("{l}\n")).collect();
    match OpModeRateTable::read_from(truncated.as_bytes()) {
        Err(Error::IncompleteRateTable { missing }) => {
            println!("incomplete table: {} rows missing", missing.len())
        }
        other => panic!("expected an incomplete-table error, got {other:?}"),
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> wavesmooth::Result<()> {
    run_example()
}
