//! Gridded mean speed fields `v(t, x)`.
//!
//! A [`SpeedField`] stores speeds on a regular (time, position) grid and is
//! sampled with a separable cubic convolution kernel. Queries must stay one
//! cell away from every border so that the full 4x4 stencil exists; the
//! usable window is reported by [`SpeedField::time_range`] and
//! [`SpeedField::space_range`].

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io_util::write_atomic;
use crate::units::{self, Unit};

/// Grid resolution used by the reference data: 4 s.
pub const DEFAULT_DT_GRID: f64 = 4.0;
/// Grid resolution used by the reference data: 0.02 mi.
pub const DEFAULT_DX_GRID_MILES: f64 = 0.02;

pub fn default_dx_grid() -> f64 {
    units::miles_to_meters(DEFAULT_DX_GRID_MILES)
}

/// Keys cubic convolution kernel with free parameter `a`.
///
/// Every member of the family is interpolating (exact on nodes) and C1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicKernel {
    pub a: f64,
}

/// Catmull-Rom spline (tension 0.5), the default kernel.
pub const CATMULL_ROM: CubicKernel = CubicKernel { a: -0.5 };

impl Default for CubicKernel {
    fn default() -> Self {
        CATMULL_ROM
    }
}

impl CubicKernel {
    fn eval(self, s: f64) -> f64 {
        let a = self.a;
        let s = s.abs();
        if s <= 1.0 {
            ((a + 2.0) * s - (a + 3.0)) * s * s + 1.0
        } else if s < 2.0 {
            ((a * s - 5.0 * a) * s + 8.0 * a) * s - 4.0 * a
        } else {
            0.0
        }
    }

    /// Weights for stencil offsets -1, 0, 1, 2 at fractional position `f` in [0, 1].
    pub fn weights(self, f: f64) -> [f64; 4] {
        [
            self.eval(1.0 + f),
            self.eval(f),
            self.eval(1.0 - f),
            self.eval(2.0 - f),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub t0: f64,
    pub dt_grid: f64,
    pub x0: f64,
    pub dx_grid: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            t0: 0.0,
            dt_grid: DEFAULT_DT_GRID,
            x0: 0.0,
            dx_grid: default_dx_grid(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedField {
    grid: GridSpec,
    n_t: usize,
    n_x: usize,
    /// Row-major, `values[i * n_x + j]` is the speed at time row `i`, space column `j`.
    values: Vec<f64>,
    pub lane: i64,
    pub date_label: String,
}

impl SpeedField {
    pub fn new(grid: GridSpec, n_t: usize, n_x: usize, values: Vec<f64>) -> Result<Self> {
        if !(grid.dt_grid > 0.0 && grid.dt_grid.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "dt_grid must be positive, got {}",
                grid.dt_grid
            )));
        }
        if !(grid.dx_grid > 0.0 && grid.dx_grid.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "dx_grid must be positive, got {}",
                grid.dx_grid
            )));
        }
        if !grid.t0.is_finite() || !grid.x0.is_finite() {
            return Err(Error::InvalidInput("grid origin must be finite".into()));
        }
        if n_t < 4 || n_x < 4 {
            return Err(Error::InvalidInput(format!(
                "field must be at least 4x4 for bicubic sampling, got {n_t}x{n_x}"
            )));
        }
        if values.len() != n_t * n_x {
            return Err(Error::InvalidInput(format!(
                "expected {} values for a {n_t}x{n_x} grid, got {}",
                n_t * n_x,
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "speed at row {}, column {} is {} (must be finite and >= 0)",
                k / n_x,
                k % n_x,
                values[k]
            )));
        }
        Ok(Self {
            grid,
            n_t,
            n_x,
            values,
            lane: 1,
            date_label: String::new(),
        })
    }

    /// Builds a field by evaluating `f(t, x)` on every node.
    pub fn from_fn(
        grid: GridSpec,
        n_t: usize,
        n_x: usize,
        mut f: impl FnMut(f64, f64) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(n_t * n_x);
        for i in 0..n_t {
            for j in 0..n_x {
                values.push(f(
                    grid.t0 + i as f64 * grid.dt_grid,
                    grid.x0 + j as f64 * grid.dx_grid,
                ));
            }
        }
        Self::new(grid, n_t, n_x, values)
    }

    pub fn with_metadata(mut self, lane: i64, date_label: impl Into<String>) -> Self {
        self.lane = lane;
        self.date_label = date_label.into();
        self
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn extent(&self) -> (usize, usize) {
        (self.n_t, self.n_x)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn node(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_x + j]
    }

    pub fn node_time(&self, i: usize) -> f64 {
        self.grid.t0 + i as f64 * self.grid.dt_grid
    }

    pub fn node_position(&self, j: usize) -> f64 {
        self.grid.x0 + j as f64 * self.grid.dx_grid
    }

    /// Time window where the 4x4 stencil is available.
    pub fn time_range(&self) -> (f64, f64) {
        (self.node_time(1), self.node_time(self.n_t - 2))
    }

    /// Space window where the 4x4 stencil is available.
    pub fn space_range(&self) -> (f64, f64) {
        (self.node_position(1), self.node_position(self.n_x - 2))
    }

    pub fn contains(&self, t: f64, x: f64) -> bool {
        let (t_lo, t_hi) = self.time_range();
        let (x_lo, x_hi) = self.space_range();
        t >= t_lo && t <= t_hi && x >= x_lo && x <= x_hi
    }

    pub fn min_speed(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Bicubic (Catmull-Rom) sample, clamped below at zero.
    pub fn sample_speed(&self, t: f64, x: f64) -> Result<f64> {
        self.sample_speed_with(CATMULL_ROM, t, x)
    }

    pub fn sample_speed_with(&self, kernel: CubicKernel, t: f64, x: f64) -> Result<f64> {
        let (t_lo, t_hi) = self.time_range();
        if !(t >= t_lo && t <= t_hi) {
            return Err(Error::OutOfDomain {
                axis: "t",
                value: t,
                min: t_lo,
                max: t_hi,
            });
        }
        let (x_lo, x_hi) = self.space_range();
        if !(x >= x_lo && x <= x_hi) {
            return Err(Error::OutOfDomain {
                axis: "x",
                value: x,
                min: x_lo,
                max: x_hi,
            });
        }
        let (i, fi) = stencil_base((t - self.grid.t0) / self.grid.dt_grid, self.n_t);
        let (j, fj) = stencil_base((x - self.grid.x0) / self.grid.dx_grid, self.n_x);
        let wt = kernel.weights(fi);
        let wx = kernel.weights(fj);
        let mut acc = 0.0;
        for (di, w_t) in wt.iter().enumerate() {
            let row = &self.values[(i + di - 1) * self.n_x..];
            let mut inner = 0.0;
            for (dj, w_x) in wx.iter().enumerate() {
                inner += w_x * row[j + dj - 1];
            }
            acc += w_t * inner;
        }
        Ok(acc.max(0.0))
    }

    /// Parses the text grid format; `units` is the unit of the speed cells.
    pub fn read_from(reader: impl Read, units: Unit) -> Result<Self> {
        if units.dimension() != units::Dimension::Speed {
            return Err(Error::InvalidInput(format!(
                "'{units}' is not a speed unit"
            )));
        }
        let mut grid = GridSpec::default();
        let mut lane = 1;
        let mut date = String::new();
        let mut values = Vec::new();
        let mut n_x = None;
        let mut n_t = 0;
        for (idx, line) in BufReader::new(reader).lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|e| Error::Format {
                line: lineno,
                column: 0,
                message: e.to_string(),
            })?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('#') {
                if n_t > 0 {
                    return Err(format_err(lineno, 0, "header line after data rows"));
                }
                let (key, value) = header
                    .split_once('=')
                    .ok_or_else(|| format_err(lineno, 0, "header must be #key=value"))?;
                let value = value.trim();
                let num = || {
                    value.parse::<f64>().map_err(|_| {
                        format_err(lineno, 0, format!("invalid number '{value}' for {key}"))
                    })
                };
                match key.trim() {
                    "dt_grid_s" => grid.dt_grid = num()?,
                    "dx_grid_m" => grid.dx_grid = num()?,
                    "t0_s" => grid.t0 = num()?,
                    "x0_m" => grid.x0 = num()?,
                    "lane" => {
                        lane = value
                            .parse()
                            .map_err(|_| format_err(lineno, 0, format!("invalid lane '{value}'")))?
                    }
                    "date" => date = value.to_string(),
                    other => {
                        return Err(format_err(
                            lineno,
                            0,
                            format!("unknown header key '{other}'"),
                        ))
                    }
                }
                continue;
            }
            let mut count = 0;
            for (col, cell) in line.split(',').enumerate() {
                let cell = cell.trim();
                let v: f64 = cell
                    .parse()
                    .map_err(|_| format_err(lineno, col + 1, format!("invalid speed '{cell}'")))?;
                if !v.is_finite() || v < 0.0 {
                    return Err(format_err(
                        lineno,
                        col + 1,
                        format!("speed {cell} must be finite and >= 0"),
                    ));
                }
                values.push(units::convert(v, units, Unit::MetersPerSecond)?);
                count += 1;
            }
            match n_x {
                None => n_x = Some(count),
                Some(expected) if expected != count => {
                    return Err(format_err(
                        lineno,
                        0,
                        format!("row has {count} columns, expected {expected}"),
                    ))
                }
                _ => {}
            }
            n_t += 1;
        }
        let n_x = n_x.unwrap_or(0);
        let field =
            Self::new(grid, n_t, n_x, values).map_err(|e| format_err(0, 0, e.to_string()))?;
        Ok(field.with_metadata(lane, date))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 6 + 128);
        let g = &self.grid;
        let _ = writeln!(out, "#dt_grid_s={}", g.dt_grid);
        let _ = writeln!(out, "#dx_grid_m={}", g.dx_grid);
        let _ = writeln!(out, "#t0_s={}", g.t0);
        let _ = writeln!(out, "#x0_m={}", g.x0);
        let _ = writeln!(out, "#lane={}", self.lane);
        let _ = writeln!(out, "#date={}", self.date_label);
        for row in self.values.chunks(self.n_x) {
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_text().as_bytes())
    }
}

fn format_err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Format {
        line,
        column,
        message: message.into(),
    }
}

/// Lower stencil node and fractional offset for grid coordinate `u`, which
/// the caller has already bounded to `[1, n - 2]`.
fn stencil_base(u: f64, n: usize) -> (usize, f64) {
    let u = u.clamp(1.0, (n - 2) as f64);
    let mut i = u.floor() as usize;
    if i > n - 3 {
        i = n - 3;
    }
    (i, u - i as f64)
}

/// Loads a grid file with speeds in m/s.
pub fn load_field(path: impl AsRef<Path>) -> Result<SpeedField> {
    load_field_with_units(path, Unit::MetersPerSecond)
}

pub fn load_field_with_units(path: impl AsRef<Path>, units: Unit) -> Result<SpeedField> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    SpeedField::read_from(file, units)
}

/// Parameters of a synthetic stop-and-go day.
///
/// Each wave is a Gaussian speed dip centred on the line
/// `x = x_c + wave_propagation_speed * (t - t_c)`. The dip has full depth
/// along that line; its cross-section is Gaussian in the distance to the line
/// measured in `(t / wave_width_t, x / wave_width_x)` coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveScenario {
    pub base_speed: f64,
    pub wave_count: usize,
    pub wave_amplitude: f64,
    pub wave_width_t: f64,
    pub wave_width_x: f64,
    /// Negative values propagate upstream.
    pub wave_propagation_speed: f64,
    /// Std of per-node speed noise in free flow, m/s; scaled down by
    /// `v / base_speed` inside waves.
    pub free_flow_noise: f64,
    pub seed: u64,
}

impl Default for WaveScenario {
    fn default() -> Self {
        Self {
            base_speed: 28.0,
            wave_count: 0,
            wave_amplitude: 0.0,
            wave_width_t: 60.0,
            wave_width_x: 400.0,
            wave_propagation_speed: -4.5,
            free_flow_noise: 0.0,
            seed: 0,
        }
    }
}

/// One placed wave: its centre node and shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaveLine {
    pub t_center: f64,
    pub x_center: f64,
    pub speed: f64,
}

impl WaveScenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if !(self.base_speed.is_finite() && self.base_speed >= 0.0) {
            return bad(format!("base_speed must be >= 0, got {}", self.base_speed));
        }
        if !(self.wave_amplitude >= 0.0 && self.wave_amplitude <= self.base_speed) {
            return bad(format!(
                "wave_amplitude must lie in [0, base_speed={}], got {}",
                self.base_speed, self.wave_amplitude
            ));
        }
        if !(self.wave_width_t > 0.0 && self.wave_width_t.is_finite()) {
            return bad(format!(
                "wave_width_t must be positive, got {}",
                self.wave_width_t
            ));
        }
        if !(self.wave_width_x > 0.0 && self.wave_width_x.is_finite()) {
            return bad(format!(
                "wave_width_x must be positive, got {}",
                self.wave_width_x
            ));
        }
        if !self.wave_propagation_speed.is_finite() {
            return bad("wave_propagation_speed must be finite".into());
        }
        if !(self.free_flow_noise >= 0.0 && self.free_flow_noise.is_finite()) {
            return bad(format!(
                "free_flow_noise must be >= 0, got {}",
                self.free_flow_noise
            ));
        }
        Ok(())
    }

    /// Wave centres snap to grid nodes; wave `k` is centred inside the
    /// `k`-th of `wave_count` equal time slots.
    pub fn place_waves(&self, grid: &GridSpec, n_t: usize, n_x: usize) -> Vec<WaveLine> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.wave_count)
            .map(|k| {
                let lo = k * n_t / self.wave_count;
                let hi = ((k + 1) * n_t / self.wave_count).max(lo + 1);
                let i = rng.random_range(lo..hi);
                let j = rng.random_range(0..n_x);
                WaveLine {
                    t_center: grid.t0 + i as f64 * grid.dt_grid,
                    x_center: grid.x0 + j as f64 * grid.dx_grid,
                    speed: self.wave_propagation_speed,
                }
            })
            .collect()
    }

    fn dip(&self, wave: &WaveLine, t: f64, x: f64) -> f64 {
        let offset = x - wave.x_center - wave.speed * (t - wave.t_center);
        let slope = wave.speed * self.wave_width_t / self.wave_width_x;
        let d = offset / self.wave_width_x / (1.0 + slope * slope).sqrt();
        self.wave_amplitude * (-0.5 * d * d).exp()
    }
}

/// Synthesizes a field covering `[0, duration] x [0, length]` at the default
/// 4 s x 0.02 mi resolution.
pub fn synthesize_field(scenario: &WaveScenario, duration: f64, length: f64) -> Result<SpeedField> {
    synthesize_field_on(scenario, duration, length, GridSpec::default())
}

pub fn synthesize_field_on(
    scenario: &WaveScenario,
    duration: f64,
    length: f64,
    grid: GridSpec,
) -> Result<SpeedField> {
    scenario.validate()?;
    if !(duration > 0.0 && length > 0.0 && duration.is_finite() && length.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "extent must be positive, got duration={duration}, length={length}"
        )));
    }
    let n_t = (duration / grid.dt_grid + 1e-9).floor() as usize + 1;
    let n_x = (length / grid.dx_grid + 1e-9).floor() as usize + 1;
    if n_t < 4 || n_x < 4 {
        return Err(Error::InvalidInput(format!(
            "extent {duration} s x {length} m gives a {n_t}x{n_x} grid, need at least 4x4"
        )));
    }
    let waves = scenario.place_waves(&grid, n_t, n_x);
    let noise = if scenario.free_flow_noise > 0.0 {
        Some(
            Normal::new(0.0, scenario.free_flow_noise)
                .map_err(|e| Error::InvalidInput(e.to_string()))?,
        )
    } else {
        None
    };
    // Separate stream so noise does not perturb wave placement.
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed ^ 0x9e37_79b9_7f4a_7c15);
    SpeedField::from_fn(grid, n_t, n_x, |t, x| {
        let mut v = scenario.base_speed;
        for w in &waves {
            v -= scenario.dip(w, t, x);
        }
        if let Some(n) = &noise {
            // Noise fades inside waves: full strength only in free flow.
            let free = if scenario.base_speed > 0.0 {
                v.max(0.0) / scenario.base_speed
            } else {
                0.0
            };
            v += free * n.sample(&mut rng);
        }
        v.max(0.0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(dt: f64, dx: f64) -> GridSpec {
        GridSpec {
            t0: 0.0,
            dt_grid: dt,
            x0: 0.0,
            dx_grid: dx,
        }
    }

    /// Catmull-Rom through the matrix form 0.5 * [p(-1), p0, p1, p2] * M * [1, f, f^2, f^3].
    fn catmull_rom_1d(p: [f64; 4], f: f64) -> f64 {
        let [pm, p0, p1, p2] = p;
        0.5 * (2.0 * p0
            + (-pm + p1) * f
            + (2.0 * pm - 5.0 * p0 + 4.0 * p1 - p2) * f * f
            + (-pm + 3.0 * p0 - 3.0 * p1 + p2) * f * f * f)
    }

    fn reference_bicubic(field: &SpeedField, t: f64, x: f64) -> f64 {
        let g = field.grid();
        let u = (t - g.t0) / g.dt_grid;
        let w = (x - g.x0) / g.dx_grid;
        let i = u.floor() as usize;
        let j = w.floor() as usize;
        let mut cols = [0.0; 4];
        for (k, c) in cols.iter_mut().enumerate() {
            let row = i + k - 1;
            *c = catmull_rom_1d(
                [
                    field.node(row, j - 1),
                    field.node(row, j),
                    field.node(row, j + 1),
                    field.node(row, j + 2),
                ],
                w - j as f64,
            );
        }
        catmull_rom_1d(cols, u - i as f64)
    }

    #[test]
    fn constant_field_is_reproduced() {
        let f = SpeedField::from_fn(grid(4.0, 30.0), 8, 8, |_, _| 20.0).unwrap();
        for &(t, x) in &[(4.0, 30.0), (7.3, 55.5), (15.9, 170.0), (24.0, 180.0)] {
            assert!((f.sample_speed(t, x).unwrap() - 20.0).abs() < 1e-12);
        }
    }

    #[test]
    fn nodal_exactness() {
        let f = SpeedField::from_fn(grid(4.0, 30.0), 7, 9, |t, x| {
            (t * 0.37 + x * 0.011).sin().abs() * 20.0
        })
        .unwrap();
        for i in 1..6 {
            for j in 1..8 {
                let v = f.sample_speed(f.node_time(i), f.node_position(j)).unwrap();
                assert_eq!(v, f.node(i, j), "node ({i},{j})");
            }
        }
    }

    #[test]
    fn linear_field_matches_reference_at_cell_centre() {
        let f = SpeedField::from_fn(grid(1.0, 1.0), 6, 6, |t, x| 5.0 + 0.1 * t + 0.2 * x).unwrap();
        let (t, x) = (2.5, 2.5);
        let reference = reference_bicubic(&f, t, x);
        // Catmull-Rom reproduces linear data: 5 + 0.25 + 0.5.
        assert!((reference - 5.75).abs() < 1e-12);
        assert!((f.sample_speed(t, x).unwrap() - reference).abs() < 1e-12);
    }

    #[test]
    fn matches_reference_on_rough_field() {
        let f = SpeedField::from_fn(grid(4.0, 32.0), 9, 9, |t, x| {
            ((t * 13.0 + x * 7.0) % 17.0) + 3.0
        })
        .unwrap();
        for &(t, x) in &[(5.0, 40.0), (13.7, 100.1), (20.2, 150.0), (27.9, 223.9)] {
            let v = f.sample_speed(t, x).unwrap();
            assert!((v - reference_bicubic(&f, t, x).max(0.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_extent_reports_range() {
        let f = SpeedField::from_fn(grid(4.0, 30.0), 6, 6, |_, _| 10.0).unwrap();
        match f.sample_speed(2.0, 60.0) {
            Err(Error::OutOfDomain { axis, min, max, .. }) => {
                assert_eq!(axis, "t");
                assert_eq!((min, max), (4.0, 16.0));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            f.sample_speed(8.0, 121.0),
            Err(Error::OutOfDomain { axis: "x", .. })
        ));
        // Upper inset border itself is usable.
        assert_eq!(f.sample_speed(16.0, 120.0).unwrap(), 10.0);
    }

    #[test]
    fn overshoot_is_clamped() {
        // A two-node trough at zero makes Catmull-Rom undershoot between them.
        let f = SpeedField::from_fn(grid(1.0, 1.0), 8, 8, |_, x| {
            if (x - 4.5).abs() < 0.6 {
                0.0
            } else {
                30.0
            }
        })
        .unwrap();
        let mut min = f64::INFINITY;
        for k in 0..=500 {
            let x = 1.0 + 5.0 * k as f64 / 500.0;
            min = min.min(f.sample_speed(3.0, x).unwrap());
        }
        assert_eq!(min, 0.0);
        let raw = reference_bicubic(&f, 3.0, 4.5);
        assert!(
            raw < 0.0,
            "expected undershoot in the unclamped kernel, got {raw}"
        );
    }

    #[test]
    fn continuity_sweep() {
        let s = WaveScenario {
            wave_count: 3,
            wave_amplitude: 20.0,
            seed: 3,
            ..WaveScenario::default()
        };
        let f = synthesize_field(&s, 600.0, 1200.0).unwrap();
        let eps = 1e-9;
        let (t_lo, t_hi) = f.time_range();
        let (x_lo, x_hi) = f.space_range();
        let mut max_jump: f64 = 0.0;
        for a in 0..60 {
            for b in 0..40 {
                let t = t_lo + (t_hi - t_lo - 1.0) * a as f64 / 59.0;
                let x = x_lo + (x_hi - x_lo) * b as f64 / 39.0;
                let jump =
                    (f.sample_speed(t, x).unwrap() - f.sample_speed(t + eps, x).unwrap()).abs();
                max_jump = max_jump.max(jump);
            }
        }
        assert!(max_jump < 1e-6, "max jump {max_jump}");
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(SpeedField::from_fn(grid(4.0, 30.0), 3, 6, |_, _| 1.0).is_err());
        assert!(SpeedField::from_fn(grid(0.0, 30.0), 6, 6, |_, _| 1.0).is_err());
        assert!(SpeedField::from_fn(grid(4.0, 30.0), 6, 6, |_, _| -1.0).is_err());
        assert!(SpeedField::from_fn(grid(4.0, 30.0), 6, 6, |_, _| f64::NAN).is_err());
    }

    #[test]
    fn parse_minimal_constant_grid() {
        let text = "#dt_grid_s=4\n#dx_grid_m=32\n20.0,20.0,20.0,20.0\n20,20,20,20\n20,20,20,20\n20,20,20,20\n";
        let f = SpeedField::read_from(text.as_bytes(), Unit::MetersPerSecond).unwrap();
        assert_eq!(f.extent(), (4, 4));
        assert!(f.values().iter().all(|&v| v == 20.0));
        assert_eq!(f.grid().dx_grid, 32.0);
    }

    #[test]
    fn negative_cell_names_location() {
        let text = "1,2,3,4\n1,2,3,4\n1,2,-3.0,4\n1,2,3,4\n";
        match SpeedField::read_from(text.as_bytes(), Unit::MetersPerSecond) {
            Err(Error::Format { line, column, .. }) => assert_eq!((line, column), (3, 3)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_rows_rejected() {
        let text = "1,2,3,4\n1,2,3\n1,2,3,4\n1,2,3,4\n";
        assert!(matches!(
            SpeedField::read_from(text.as_bytes(), Unit::MetersPerSecond),
            Err(Error::Format { line: 2, .. })
        ));
        assert!(SpeedField::read_from("#bogus=1\n".as_bytes(), Unit::MetersPerSecond).is_err());
    }

    #[test]
    fn mph_ingest_converts() {
        let text = "50,50,50,50\n50,50,50,50\n50,50,50,50\n50,50,50,50\n";
        let f = SpeedField::read_from(text.as_bytes(), Unit::Mph).unwrap();
        assert!(f.values().iter().all(|&v| (v - 22.352).abs() < 1e-12));
    }

    #[test]
    fn no_waves_gives_constant_field() {
        let s = WaveScenario {
            base_speed: 25.0,
            ..WaveScenario::default()
        };
        let f = synthesize_field(&s, 400.0, 500.0).unwrap();
        assert!(f.values().iter().all(|&v| v == 25.0));
        assert_eq!(f.grid().dt_grid, 4.0);
        assert!((f.grid().dx_grid - 32.18688).abs() < 1e-12);
    }

    #[test]
    fn single_wave_minimum_lies_on_propagation_line() {
        let s = WaveScenario {
            base_speed: 25.0,
            wave_count: 1,
            wave_amplitude: 20.0,
            wave_propagation_speed: -4.5,
            seed: 11,
            ..WaveScenario::default()
        };
        let f = synthesize_field(&s, 3600.0, 6000.0).unwrap();
        assert!((f.min_speed() - 5.0).abs() < 1e-12, "min {}", f.min_speed());

        // Per time row, the slowest column traces the wave; fit its slope.
        let (n_t, n_x) = f.extent();
        let mut pts = Vec::new();
        for i in 0..n_t {
            let (j, v) = (0..n_x)
                .map(|j| (j, f.node(i, j)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            if v < 6.0 && j > 0 && j < n_x - 1 {
                pts.push((f.node_time(i), f.node_position(j)));
            }
        }
        assert!(pts.len() > 50);
        let n = pts.len() as f64;
        let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let mx = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let slope = pts.iter().map(|p| (p.0 - mt) * (p.1 - mx)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mt).powi(2)).sum::<f64>();
        assert!((slope + 4.5).abs() < 0.05, "slope {slope}");
    }

    #[test]
    fn synthesis_is_deterministic_and_bounded() {
        let s = WaveScenario {
            base_speed: 28.0,
            wave_count: 4,
            wave_amplitude: 9.0,
            free_flow_noise: 0.0,
            seed: 7,
            ..WaveScenario::default()
        };
        let a = synthesize_field(&s, 2000.0, 3000.0).unwrap();
        let b = synthesize_field(&s, 2000.0, 3000.0).unwrap();
        assert_eq!(a.values(), b.values());
        assert!(a.min_speed() >= (28.0 - 4.0 * 9.0f64).max(0.0));
        let noisy = WaveScenario {
            free_flow_noise: 0.5,
            ..s.clone()
        };
        let c = synthesize_field(&noisy, 2000.0, 3000.0).unwrap();
        let d = synthesize_field(&noisy, 2000.0, 3000.0).unwrap();
        assert_eq!(c.values(), d.values());
        assert_ne!(c.values(), a.values());
    }

    #[test]
    fn invalid_scenarios_rejected() {
        let too_deep = WaveScenario {
            base_speed: 10.0,
            wave_amplitude: 12.0,
            wave_count: 1,
            ..WaveScenario::default()
        };
        assert!(synthesize_field(&too_deep, 100.0, 200.0).is_err());
        assert!(synthesize_field(&WaveScenario::default(), -1.0, 200.0).is_err());
        assert!(synthesize_field(&WaveScenario::default(), 8.0, 200.0).is_err());
    }
}
