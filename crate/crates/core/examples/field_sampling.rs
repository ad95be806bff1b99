//! Synthesize a wave field, sample it between grid nodes, and round-trip it
//! through the text grid format.

use wavesmooth::speed_field::{synthesize_field, SpeedField, WaveScenario};
use wavesmooth::units::{mps_to_mph, Unit};

pub fn run_example() -> wavesmooth::Result<()> {
    let scenario = WaveScenario {
        base_speed: 28.0,
        wave_count: 2,
        wave_amplitude: 20.0,
        wave_width_t: 60.0,
        wave_width_x: 400.0,
        seed: 11,
        ..WaveScenario::default()
    };
    let field = synthesize_field(&scenario, 1200.0, 3000.0)?.with_metadata(1, "example");
    let (n_t, n_x) = field.extent();
    println!(
        "grid {n_t} x {n_x}, slowest node {:.1} mph",
        mps_to_mph(field.min_speed())
    );

    let (t_lo, t_hi) = field.time_range();
    let x_mid = 0.5 * (field.space_range().0 + field.space_range().1);
    for k in 0..5 {
        let t = t_lo + (t_hi - t_lo) * k as f64 / 4.0;
        println!(
            "  v({t:6.1} s, {x_mid:6.1} m) = {:5.2} m/s",
            field.sample_speed(t, x_mid)?
        );
    }
    // Queries on the outer border cell are rejected, not extrapolated.
    assert!(field.sample_speed(0.0, x_mid).is_err());

    let text = field.to_text();
    let back = SpeedField::read_from(text.as_bytes(), Unit::MetersPerSecond)?;
    assert_eq!(back.to_text(), text);
    println!("round trip: {} bytes, identical", text.len());
    Ok(())
}

#[allow(dead_code)]
fn main() -> wavesmooth::Result<()> {
    run_example()
}
