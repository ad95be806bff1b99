//! Operating-mode emission estimates.
//!
//! Each velocity sample `v_k` gets a VSP from `(v_k, a_k)`, an operating mode
//! from its speed band and VSP range, and an emission rate from the table.
//! Totals are `sum_k rate(mode_k) * dt` with `dt` in hours. The last velocity
//! sample has no forward acceleration of its own and reuses `a_{N-2}`.

mod opmode;
mod rates;
mod vsp;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use opmode::{
    classify_opmode, classify_opmode_with, OpModeClassifier, OpModeId, OpModeThresholds,
    ALL_OPMODES, BRAKING, IDLE,
};
pub use rates::{OpModeRateTable, PerPollutant, Pollutant};
pub use vsp::{vsp, VspParams};

use crate::error::Result;
use crate::trajectory::{kinematics, Trajectory};
use crate::units::seconds_to_hours;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionResult {
    /// Grams.
    pub totals: PerPollutant<f64>,
    pub opmode_histogram: BTreeMap<OpModeId, usize>,
    pub sample_count: usize,
}

impl EmissionResult {
    /// Totals for a sequence of per-sample modes, each lasting `dt` seconds.
    pub fn from_opmodes(opmodes: &[OpModeId], dt: f64, table: &OpModeRateTable) -> Self {
        let mut hist = BTreeMap::new();
        for &op in opmodes {
            *hist.entry(op).or_insert(0) += 1;
        }
        Self::from_histogram(hist, dt, table)
    }

    fn from_histogram(
        opmode_histogram: BTreeMap<OpModeId, usize>,
        dt: f64,
        table: &OpModeRateTable,
    ) -> Self {
        let hours = seconds_to_hours(dt);
        let totals = PerPollutant::from_fn(|p| {
            opmode_histogram
                .iter()
                .map(|(&op, &count)| table.rate(p, op) * (count as f64 * hours))
                .sum()
        });
        Self {
            totals,
            sample_count: opmode_histogram.values().sum(),
            opmode_histogram,
        }
    }

    /// Emissions of two consecutive pieces of one trajectory.
    pub fn merge(&self, other: &Self, dt: f64, table: &OpModeRateTable) -> Self {
        let mut hist = self.opmode_histogram.clone();
        for (&op, &c) in &other.opmode_histogram {
            *hist.entry(op).or_insert(0) += c;
        }
        Self::from_histogram(hist, dt, table)
    }
}

/// Operating mode of every velocity sample of `traj`.
pub fn opmode_sequence(
    traj: &Trajectory,
    params: &VspParams,
    thresholds: &OpModeThresholds,
) -> Result<Vec<OpModeId>> {
    let kin = kinematics(traj)?;
    let last = kin.accelerations.len() - 1;
    let mut classifier = OpModeClassifier::new(*thresholds);
    Ok(kin
        .velocities
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let a = kin.accelerations[k.min(last)];
            classifier.push(v, a, vsp(v, a, params))
        })
        .collect())
}

pub fn estimate_emissions(
    traj: &Trajectory,
    params: &VspParams,
    table: &OpModeRateTable,
) -> Result<EmissionResult> {
    params.validate()?;
    let modes = opmode_sequence(traj, params, &OpModeThresholds::default())?;
    Ok(EmissionResult::from_opmodes(&modes, traj.dt, table))
}

/// Percentage reduction `100 (empirical - benchmark) / empirical`; `None`
/// where the empirical total is zero.
pub fn emission_delta(
    empirical: &EmissionResult,
    benchmark: &EmissionResult,
) -> PerPollutant<Option<f64>> {
    PerPollutant::from_fn(|p| {
        let e = *empirical.totals.get(p);
        let b = *benchmark.totals.get(p);
        (e > 0.0).then(|| 100.0 * (e - b) / e)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{mps_to_mph, SECONDS_PER_HOUR};

    fn cruise(v: f64, seconds: usize) -> Trajectory {
        Trajectory::new(0.0, 1.0, (0..=seconds).map(|k| v * k as f64).collect()).unwrap()
    }

    #[test]
    fn steady_cruise_uses_one_mode() {
        let table = OpModeRateTable::synthetic();
        let params = VspParams::default();
        let r = estimate_emissions(&cruise(25.0, 100), &params, &table).unwrap();
        assert!(mps_to_mph(25.0) > 50.0);
        let op = classify_opmode(25.0, 0.0, None, None, vsp(25.0, 0.0, &params));
        assert_eq!(r.opmode_histogram, BTreeMap::from([(op, 100)]));
        for p in Pollutant::ALL {
            let want = 100.0 / SECONDS_PER_HOUR * table.rate(p, op);
            assert!((r.totals.get(p) - want).abs() <= 1e-12 * want);
        }
    }

    #[test]
    fn parked_vehicle_idles() {
        let table = OpModeRateTable::synthetic();
        let r = estimate_emissions(&cruise(0.0, 30), &VspParams::default(), &table).unwrap();
        assert_eq!(r.opmode_histogram, BTreeMap::from([(IDLE, 30)]));
        assert_eq!(r.sample_count, 30);
        assert!((r.totals.co2 - 30.0 / 3600.0 * table.rate(Pollutant::Co2, IDLE)).abs() < 1e-12);
    }

    #[test]
    fn delta_conventions() {
        let table = OpModeRateTable::synthetic();
        let mk = |co2: f64| EmissionResult {
            totals: PerPollutant {
                co2,
                co: 0.0,
                hc: 1.0,
                nox: 1.0,
            },
            ..EmissionResult::from_opmodes(&[], 1.0, &table)
        };
        let d = emission_delta(&mk(100.0), &mk(90.24));
        assert!((d.co2.unwrap() - 9.76).abs() < 1e-12);
        assert_eq!(d.co, None);
        assert_eq!(d.hc, Some(0.0));
        assert!(emission_delta(&mk(100.0), &mk(110.0)).co2.unwrap() < 0.0);
    }

    #[test]
    fn split_trajectories_add_up() {
        let table = OpModeRateTable::synthetic();
        let x: Vec<f64> = (0..=80)
            .map(|k| 12.0 * k as f64 + 40.0 * (k as f64 / 7.0).sin())
            .collect();
        let traj = Trajectory::new(0.0, 1.0, x).unwrap();
        let modes =
            opmode_sequence(&traj, &VspParams::default(), &OpModeThresholds::default()).unwrap();
        let whole = EmissionResult::from_opmodes(&modes, 1.0, &table);
        let (a, b) = modes.split_at(33);
        let parts = EmissionResult::from_opmodes(a, 1.0, &table).merge(
            &EmissionResult::from_opmodes(b, 1.0, &table),
            1.0,
            &table,
        );
        assert_eq!(whole.opmode_histogram, parts.opmode_histogram);
        for p in Pollutant::ALL {
            assert!(
                (whole.totals.get(p) - parts.totals.get(p)).abs() <= 1e-12 * whole.totals.get(p)
            );
        }
    }
}
