//! Virtual vehicle trajectories through a speed field.
//!
//! A vehicle seeded at `(t, x)` follows `dx/dt = v(t, x)`. The raw fine-step
//! path is resampled to 1 Hz for the emission model, and the discrete
//! kinematics use forward differences:
//! `v_k = (x_{k+1} - x_k) / dt`, `a_k = (x_{k+2} - 2 x_{k+1} + x_k) / dt^2`.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io_util::write_atomic;
use crate::speed_field::SpeedField;

/// Shortest usable trajectory, in intervals.
pub const MIN_INTERVALS: usize = 3;
/// Default internal RK4 step.
pub const DEFAULT_STEP: f64 = 0.1;
/// Corrections larger than this are flagged by [`preprocess_reference`].
pub const CORRECTION_FLAG_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceTag {
    Empirical,
    Benchmark,
}

impl SourceTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceTag::Empirical => "empirical",
            SourceTag::Benchmark => "benchmark",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub t_start: f64,
    pub dt: f64,
    /// `x_0 ..= x_N`, meters.
    pub positions: Vec<f64>,
    pub lane: i64,
    pub source: SourceTag,
    /// Maximum gap used to build a benchmark, meters.
    pub gap_budget: Option<f64>,
}

impl Trajectory {
    pub fn new(t_start: f64, dt: f64, positions: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "dt must be positive, got {dt}"
            )));
        }
        if positions.len() < MIN_INTERVALS + 1 {
            return Err(Error::DegenerateTrajectory(format!(
                "{} samples, need at least {}",
                positions.len(),
                MIN_INTERVALS + 1
            )));
        }
        if let Some(k) = positions.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidInput(format!("position {k} is not finite")));
        }
        Ok(Self {
            t_start,
            dt,
            positions,
            lane: 1,
            source: SourceTag::Empirical,
            gap_budget: None,
        })
    }

    pub fn with_lane(mut self, lane: i64) -> Self {
        self.lane = lane;
        self
    }

    /// Number of intervals `N`.
    pub fn intervals(&self) -> usize {
        self.positions.len() - 1
    }

    pub fn duration(&self) -> f64 {
        self.intervals() as f64 * self.dt
    }

    pub fn time_at(&self, k: usize) -> f64 {
        self.t_start + k as f64 * self.dt
    }

    pub fn is_monotone(&self) -> bool {
        self.positions.windows(2).all(|w| w[1] >= w[0])
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.positions.len() * 12 + 64);
        let _ = write!(
            out,
            "#dt={},#t_start={},#lane={},#source={}",
            self.dt,
            self.t_start,
            self.lane,
            self.source.as_str()
        );
        if let Some(g) = self.gap_budget {
            let _ = write!(out, ",#gap_budget_m={g}");
        }
        out.push('\n');
        for p in &self.positions {
            let _ = writeln!(out, "{p}");
        }
        out
    }

    pub fn read_from(reader: impl Read) -> Result<Self> {
        let mut dt = None;
        let mut t_start = 0.0;
        let mut lane = 1;
        let mut source = SourceTag::Empirical;
        let mut gap_budget = None;
        let mut positions = Vec::new();
        for (idx, line) in BufReader::new(reader).lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|e| fmt_err(lineno, e.to_string()))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('#') {
                for token in line.split(',') {
                    let token = token.trim().trim_start_matches('#');
                    let (key, value) = token.split_once('=').ok_or_else(|| {
                        fmt_err(lineno, format!("header token '{token}' is not key=value"))
                    })?;
                    let num = || {
                        value.trim().parse::<f64>().map_err(|_| {
                            fmt_err(lineno, format!("invalid number '{value}' for {key}"))
                        })
                    };
                    match key.trim() {
                        "dt" => dt = Some(num()?),
                        "t_start" => t_start = num()?,
                        "lane" => {
                            lane = value
                                .trim()
                                .parse()
                                .map_err(|_| fmt_err(lineno, format!("invalid lane '{value}'")))?
                        }
                        "source" => {
                            source = match value.trim() {
                                "empirical" => SourceTag::Empirical,
                                "benchmark" => SourceTag::Benchmark,
                                other => {
                                    return Err(fmt_err(
                                        lineno,
                                        format!("unknown source '{other}'"),
                                    ))
                                }
                            }
                        }
                        "gap_budget_m" => gap_budget = Some(num()?),
                        other => {
                            return Err(fmt_err(lineno, format!("unknown header key '{other}'")))
                        }
                    }
                }
                continue;
            }
            let p: f64 = line
                .parse()
                .map_err(|_| fmt_err(lineno, format!("invalid position '{line}'")))?;
            positions.push(p);
        }
        let dt = dt.ok_or_else(|| fmt_err(1, "missing #dt header"))?;
        let mut traj = Trajectory::new(t_start, dt, positions)?;
        traj.lane = lane;
        traj.source = source;
        traj.gap_budget = gap_budget;
        Ok(traj)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_text().as_bytes())
    }
}

fn fmt_err(line: usize, message: impl Into<String>) -> Error {
    Error::Format {
        line,
        column: 0,
        message: message.into(),
    }
}

/// Fixed-step RK4 integrator for `dx/dt = v(t, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Integrator {
    pub step: f64,
    /// Optional cap on the integrated duration, seconds.
    pub max_duration: Option<f64>,
}

impl Default for Integrator {
    fn default() -> Self {
        Self {
            step: DEFAULT_STEP,
            max_duration: None,
        }
    }
}

impl Integrator {
    /// Integrates from the seed until the vehicle leaves the usable space
    /// window or time runs out. The step that would cross the boundary is
    /// dropped, never extrapolated.
    pub fn integrate(&self, field: &SpeedField, t_seed: f64, x_seed: f64) -> Result<Trajectory> {
        let h = self.step;
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "step must be positive, got {h}"
            )));
        }
        // Surfaces the out-of-domain error with the valid range.
        field.sample_speed(t_seed, x_seed)?;
        let (_, mut t_end) = field.time_range();
        if let Some(d) = self.max_duration {
            t_end = t_end.min(t_seed + d);
        }
        let (_, x_end) = field.space_range();
        let slack = 1e-9 * h;

        let speed = |t: f64, x: f64| -> Option<f64> {
            if x > x_end {
                return None;
            }
            field.sample_speed(t, x).ok()
        };

        let mut positions = vec![x_seed];
        let mut x = x_seed;
        let mut k = 0usize;
        loop {
            let t = t_seed + k as f64 * h;
            let t_next = t_seed + (k + 1) as f64 * h;
            if t_next > t_end + slack {
                break;
            }
            let t_mid = t + 0.5 * h;
            let t_next = t_next.min(t_end);
            let Some(k1) = speed(t, x) else { break };
            let Some(k2) = speed(t_mid, x + 0.5 * h * k1) else {
                break;
            };
            let Some(k3) = speed(t_mid, x + 0.5 * h * k2) else {
                break;
            };
            let Some(k4) = speed(t_next, x + h * k3) else {
                break;
            };
            let x_new = x + h * ((k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0);
            if x_new > x_end {
                break;
            }
            x = x_new;
            positions.push(x);
            k += 1;
        }
        if positions.len() < MIN_INTERVALS + 1 {
            return Err(Error::DegenerateTrajectory(format!(
                "only {} integration steps fit inside the field from seed ({t_seed}, {x_seed})",
                positions.len() - 1
            )));
        }
        let mut traj = Trajectory::new(t_seed, h, positions)?;
        traj.lane = field.lane;
        Ok(traj)
    }
}

pub fn integrate_trajectory(
    field: &SpeedField,
    t_seed: f64,
    x_seed: f64,
    step: f64,
) -> Result<Trajectory> {
    Integrator {
        step,
        max_duration: None,
    }
    .integrate(field, t_seed, x_seed)
}

/// Seeds at the upstream edge of the usable window, every `interval`
/// seconds from the start of the usable time window, for as long as a
/// 3-second (three 1 Hz intervals) trajectory still fits.
pub fn seed_schedule(field: &SpeedField, interval: f64) -> Result<Vec<(f64, f64)>> {
    if !(interval > 0.0 && interval.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "seed interval must be positive, got {interval}"
        )));
    }
    let (t_lo, t_hi) = field.time_range();
    let (x_lo, _) = field.space_range();
    let last = t_hi - MIN_INTERVALS as f64;
    let mut seeds = Vec::new();
    let mut k = 0usize;
    loop {
        let t = t_lo + k as f64 * interval;
        if t > last {
            break;
        }
        seeds.push((t, x_lo));
        k += 1;
    }
    Ok(seeds)
}

/// Resamples onto a 1 s grid starting at `t_start`. The trailing partial
/// second is truncated.
pub fn resample_1hz(traj: &Trajectory) -> Result<Trajectory> {
    if traj.dt > 1.0 {
        return Err(Error::InvalidInput(format!(
            "cannot resample dt={} to 1 Hz (upsampling not supported)",
            traj.dt
        )));
    }
    let n_fine = traj.intervals();
    let n_out = (traj.duration() + 1e-9).floor() as usize;
    if n_out < MIN_INTERVALS {
        return Err(Error::DegenerateTrajectory(format!(
            "{:.3} s long, need at least {MIN_INTERVALS} s",
            traj.duration()
        )));
    }
    let ratio = 1.0 / traj.dt;
    let stride = ratio.round();
    let positions: Vec<f64> = if (ratio - stride).abs() < 1e-9 {
        let stride = stride as usize;
        (0..=n_out).map(|k| traj.positions[k * stride]).collect()
    } else {
        (0..=n_out)
            .map(|k| {
                let u = k as f64 / traj.dt;
                let i = (u.floor() as usize).min(n_fine - 1);
                let f = (u - i as f64).min(1.0);
                let (a, b) = (traj.positions[i], traj.positions[i + 1]);
                a + f * (b - a)
            })
            .collect()
    };
    let mut out = Trajectory::new(traj.t_start, 1.0, positions)?;
    out.lane = traj.lane;
    out.source = traj.source;
    out.gap_budget = traj.gap_budget;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kinematics {
    pub velocities: Vec<f64>,
    pub accelerations: Vec<f64>,
    pub mean_speed: f64,
    /// Population standard deviation of `velocities`.
    pub speed_std: f64,
}

pub fn velocities(positions: &[f64], dt: f64) -> Vec<f64> {
    positions.windows(2).map(|w| (w[1] - w[0]) / dt).collect()
}

pub fn accelerations(positions: &[f64], dt: f64) -> Vec<f64> {
    let dt2 = dt * dt;
    positions
        .windows(3)
        .map(|w| (w[2] - 2.0 * w[1] + w[0]) / dt2)
        .collect()
}

pub fn kinematics(traj: &Trajectory) -> Result<Kinematics> {
    let n = traj.intervals();
    if n < MIN_INTERVALS {
        return Err(Error::DegenerateTrajectory(format!(
            "N={n}, need N >= {MIN_INTERVALS}"
        )));
    }
    let velocities = velocities(&traj.positions, traj.dt);
    let accelerations = accelerations(&traj.positions, traj.dt);
    let mean_speed = (traj.positions[n] - traj.positions[0]) / (n as f64 * traj.dt);
    let sample_mean = velocities.iter().sum::<f64>() / n as f64;
    let var = velocities
        .iter()
        .map(|v| (v - sample_mean).powi(2))
        .sum::<f64>()
        / n as f64;
    Ok(Kinematics {
        velocities,
        accelerations,
        mean_speed,
        speed_std: var.sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessed {
    pub trajectory: Trajectory,
    /// Largest upward correction applied to any position, meters.
    pub max_correction: f64,
}

impl Preprocessed {
    pub fn corrected(&self) -> bool {
        self.max_correction > CORRECTION_FLAG_THRESHOLD
    }
}

/// Replaces positions by their running maximum so the reference never reverses.
pub fn preprocess_reference(traj: &Trajectory) -> Preprocessed {
    let mut out = traj.clone();
    let mut running = f64::NEG_INFINITY;
    let mut max_correction: f64 = 0.0;
    for p in &mut out.positions {
        if *p < running {
            max_correction = max_correction.max(running - *p);
            *p = running;
        } else {
            running = *p;
        }
    }
    Preprocessed {
        trajectory: out,
        max_correction,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::speed_field::GridSpec;
    use proptest::prelude::*;

    fn field(
        dt: f64,
        dx: f64,
        n_t: usize,
        n_x: usize,
        f: impl FnMut(f64, f64) -> f64,
    ) -> SpeedField {
        SpeedField::from_fn(
            GridSpec {
                t0: -dt,
                dt_grid: dt,
                x0: 0.0,
                dx_grid: dx,
            },
            n_t,
            n_x,
            f,
        )
        .unwrap()
    }

    #[test]
    fn constant_field_is_exact() {
        let f = field(4.0, 30.0, 10, 40, |_, _| 20.0);
        let traj = Integrator {
            step: 0.1,
            max_duration: Some(10.0),
        }
        .integrate(&f, 0.0, 100.0)
        .unwrap();
        assert_eq!(traj.intervals(), 100);
        assert_eq!(*traj.positions.last().unwrap(), 300.0);
    }

    #[test]
    fn exponential_field_matches_closed_form() {
        let c = 0.01;
        let f = field(1.0, 10.0, 20, 60, |_, x| c * x);
        let traj = Integrator {
            step: 0.1,
            max_duration: Some(10.0),
        }
        .integrate(&f, 0.0, 100.0)
        .unwrap();
        let exact = 100.0 * (c * 10.0f64).exp();
        let got = *traj.positions.last().unwrap();
        assert!(((got - exact) / exact).abs() < 1e-6, "{got} vs {exact}");
    }

    #[test]
    fn zero_field_is_stationary() {
        let f = field(4.0, 30.0, 8, 8, |_, _| 0.0);
        let traj = integrate_trajectory(&f, 0.0, 50.0, 0.1).unwrap();
        assert!(traj.positions.iter().all(|&p| p == 50.0));
        // Runs until the usable window ends at t = 20.
        assert!((traj.t_start + traj.duration() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn terminates_at_space_boundary() {
        let f = field(4.0, 30.0, 40, 8, |_, _| 25.0);
        let traj = integrate_trajectory(&f, 0.0, 30.0, 0.1).unwrap();
        let last = *traj.positions.last().unwrap();
        assert!(last <= 180.0 && last > 180.0 - 2.5 - 1e-9, "last {last}");
    }

    #[test]
    fn seed_outside_rejected() {
        let f = field(4.0, 30.0, 8, 8, |_, _| 10.0);
        assert!(matches!(
            integrate_trajectory(&f, -3.0, 50.0, 0.1),
            Err(Error::OutOfDomain { .. })
        ));
        assert!(matches!(
            integrate_trajectory(&f, 0.0, 10.0, 0.1),
            Err(Error::OutOfDomain { .. })
        ));
    }

    #[test]
    fn too_short_is_degenerate() {
        // Usable window t in [0, 0.2]: only two 0.1 s steps fit.
        let f = SpeedField::from_fn(
            GridSpec {
                t0: -0.1,
                dt_grid: 0.1,
                x0: 0.0,
                dx_grid: 30.0,
            },
            5,
            8,
            |_, _| 10.0,
        )
        .unwrap();
        assert!(matches!(
            integrate_trajectory(&f, 0.0, 40.0, 0.1),
            Err(Error::DegenerateTrajectory(_))
        ));
    }

    #[test]
    fn seed_counts() {
        // Usable window of exactly four hours: nodes at -4, 0, ..., 14404.
        let four_hours = field(4.0, 32.0, 3603, 5, |_, _| 20.0);
        assert_eq!(four_hours.time_range(), (0.0, 14400.0));
        let seeds = seed_schedule(&four_hours, 4.0).unwrap();
        assert_eq!(seeds.len(), 3600);
        assert!(seeds.iter().all(|s| s.1 == 32.0));

        let short = field(4.0, 32.0, 6, 5, |_, _| 20.0);
        assert_eq!(seed_schedule(&short, 1000.0).unwrap().len(), 1);

        let tiny = SpeedField::from_fn(
            GridSpec {
                t0: 0.0,
                dt_grid: 1.0,
                x0: 0.0,
                dx_grid: 32.0,
            },
            4,
            4,
            |_, _| 20.0,
        )
        .unwrap();
        assert!(seed_schedule(&tiny, 4.0).unwrap().is_empty());
        assert!(seed_schedule(&short, 0.0).is_err());
    }

    #[test]
    fn resample_identity_on_1hz() {
        let t = Trajectory::new(5.0, 1.0, vec![0.0, 3.0, 7.5, 9.0, 20.0]).unwrap();
        assert_eq!(resample_1hz(&t).unwrap(), t);
    }

    #[test]
    fn resample_linear_motion() {
        let positions: Vec<f64> = (0..=53).map(|k| 20.0 * k as f64 * 0.1).collect();
        let t = Trajectory::new(0.0, 0.1, positions).unwrap();
        let r = resample_1hz(&t).unwrap();
        assert_eq!(r.intervals(), 5);
        for (k, p) in r.positions.iter().enumerate() {
            assert!((p - 20.0 * k as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn resample_non_integer_ratio() {
        let positions: Vec<f64> = (0..=40).map(|k| (k as f64 * 0.3).powi(2)).collect();
        let t = Trajectory::new(0.0, 0.3, positions).unwrap();
        let r = resample_1hz(&t).unwrap();
        assert_eq!(r.intervals(), 12);
        assert_eq!(r.positions[0], 0.0);
        // Piecewise-linear interpolation of t^2 at t = 3 s (node 10).
        assert!((r.positions[3] - 9.0).abs() < 1e-9);
    }

    #[test]
    fn resample_rejects_short_and_coarse() {
        let t = Trajectory::new(0.0, 0.5, vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(matches!(
            resample_1hz(&t),
            Err(Error::DegenerateTrajectory(_))
        ));
        let coarse = Trajectory::new(0.0, 2.0, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert!(resample_1hz(&coarse).is_err());
    }

    #[test]
    fn kinematics_examples() {
        let t = Trajectory::new(0.0, 1.0, vec![0.0, 10.0, 20.0, 30.0]).unwrap();
        let k = kinematics(&t).unwrap();
        assert_eq!(k.velocities, vec![10.0, 10.0, 10.0]);
        assert_eq!(k.accelerations, vec![0.0, 0.0]);
        assert_eq!(k.speed_std, 0.0);

        let t = Trajectory::new(0.0, 1.0, vec![0.0, 10.0, 15.0, 15.0]).unwrap();
        let k = kinematics(&t).unwrap();
        assert_eq!(k.velocities, vec![10.0, 5.0, 0.0]);
        assert_eq!(k.accelerations, vec![-5.0, -5.0]);
        assert_eq!(k.mean_speed, 5.0);
    }

    #[test]
    fn preprocess_examples() {
        let t = Trajectory::new(0.0, 1.0, vec![0.0, 5.0, 4.0, 8.0]).unwrap();
        let p = preprocess_reference(&t);
        assert_eq!(p.trajectory.positions, vec![0.0, 5.0, 5.0, 8.0]);
        assert!(p.corrected());
        assert_eq!(p.max_correction, 1.0);

        let mono = Trajectory::new(0.0, 1.0, vec![0.0, 1.0, 1.0, 8.0]).unwrap();
        let p = preprocess_reference(&mono);
        assert_eq!(p.trajectory, mono);
        assert!(!p.corrected());
    }

    #[test]
    fn file_round_trip() {
        let mut t = Trajectory::new(12.0, 1.0, vec![0.0, 1.5, 3.25, 7.0])
            .unwrap()
            .with_lane(3);
        t.source = SourceTag::Benchmark;
        t.gap_budget = Some(160.9344);
        let text = t.to_text();
        assert!(text
            .starts_with("#dt=1,#t_start=12,#lane=3,#source=benchmark,#gap_budget_m=160.9344\n"));
        assert_eq!(Trajectory::read_from(text.as_bytes()).unwrap(), t);
        assert!(Trajectory::read_from("1\n2\n3\n4\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn preprocessing_removes_reversals(steps in prop::collection::vec(-3.0f64..10.0, 3..200)) {
            let mut positions = vec![0.0];
            for s in &steps {
                positions.push(positions.last().unwrap() + s);
            }
            let t = Trajectory::new(0.0, 1.0, positions).unwrap();
            let p = preprocess_reference(&t);
            prop_assert!(velocities(&p.trajectory.positions, 1.0).iter().all(|&v| v >= 0.0));
            prop_assert!(p.trajectory.positions.iter().zip(&t.positions).all(|(a, b)| a >= b));
        }

        #[test]
        fn telescoping_and_mean_speed(steps in prop::collection::vec(0.0f64..30.0, 3..300), dt in 0.1f64..2.0) {
            let mut positions = vec![100.0];
            for s in &steps {
                positions.push(positions.last().unwrap() + s);
            }
            let t = Trajectory::new(0.0, dt, positions.clone()).unwrap();
            let k = kinematics(&t).unwrap();
            let travelled: f64 = k.velocities.iter().map(|v| v * dt).sum();
            let span = positions.last().unwrap() - positions[0];
            prop_assert!((travelled - span).abs() <= 1e-9 * span.max(1.0));
            let n = steps.len() as f64;
            prop_assert_eq!(k.mean_speed, span / (n * dt));
        }

        #[test]
        fn resample_stays_within_one_fine_step(steps in prop::collection::vec(0.0f64..3.0, 40..400)) {
            let mut positions = vec![0.0];
            for s in &steps {
                positions.push(positions.last().unwrap() + s);
            }
            let t = Trajectory::new(0.0, 0.1, positions.clone()).unwrap();
            let r = resample_1hz(&t).unwrap();
            let max_step = steps.iter().cloned().fold(0.0, f64::max);
            for (k, p) in r.positions.iter().enumerate() {
                let i = (k * 10).min(positions.len() - 1);
                prop_assert!((p - positions[i]).abs() <= max_step + 1e-9);
            }
            prop_assert_eq!(r.positions[0], positions[0]);
        }
    }
}
