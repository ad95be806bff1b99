//! Seed virtual vehicles at the upstream edge, integrate them through the
//! speed field, and summarize their 1 Hz kinematics.

use wavesmooth::speed_field::{synthesize_field, WaveScenario};
use wavesmooth::trajectory::{kinematics, resample_1hz, seed_schedule, Integrator};
use wavesmooth::units::mps_to_mph;

pub fn run_example() -> wavesmooth::Result<()> {
    let scenario = WaveScenario {
        base_speed: 25.0,
        wave_count: 1,
        wave_amplitude: 18.0,
        wave_width_t: 90.0,
        wave_width_x: 500.0,
        seed: 3,
        ..WaveScenario::default()
    };
    let field = synthesize_field(&scenario, 900.0, 3000.0)?;
    let integrator = Integrator::default();
    for (t, x) in seed_schedule(&field, 120.0)? {
        let fine = integrator.integrate(&field, t, x)?;
        let traj = resample_1hz(&fine)?;
        let kin = kinematics(&traj)?;
        println!(
            "seed {t:5.0} s: {:4} s on segment, mean {:4.1} mph, std {:4.1} mph, min {:4.1} mph",
            traj.intervals(),
            mps_to_mph(kin.mean_speed),
            mps_to_mph(kin.speed_std),
            mps_to_mph(kin.velocities.iter().copied().fold(f64::INFINITY, f64::min)),
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> wavesmooth::Result<()> {
    run_example()
}
