use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Road-load and mass parameters for vehicle specific power.
///
/// Defaults are published light-duty passenger car coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VspParams {
    /// Rolling term, kW s/m.
    pub a: f64,
    /// Rotating term, kW s^2/m^2.
    pub b: f64,
    /// Aerodynamic term, kW s^3/m^3.
    pub c: f64,
    /// Source mass, tonnes.
    pub source_mass: f64,
    /// Fixed mass factor, tonnes.
    pub fixed_mass: f64,
    /// m/s^2
    pub gravity: f64,
    /// Road grade, radians.
    pub grade: f64,
}

impl Default for VspParams {
    fn default() -> Self {
        Self {
            a: 0.156461,
            b: 0.00200193,
            c: 0.000492646,
            source_mass: 1.4788,
            fixed_mass: 1.4788,
            gravity: 9.8,
            grade: 0.0,
        }
    }
}

impl VspParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.a,
            self.b,
            self.c,
            self.source_mass,
            self.fixed_mass,
            self.gravity,
            self.grade,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("vsp parameters must be finite".into()));
        }
        if !(self.fixed_mass > 0.0) {
            return Err(Error::Config(format!(
                "fixed_mass must be positive, got {}",
                self.fixed_mass
            )));
        }
        if self.a < 0.0 || self.b < 0.0 || self.c < 0.0 {
            return Err(Error::Config(
                "road-load coefficients a, b, c must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Vehicle specific power in kW/tonne for speed `v` (m/s) and acceleration
/// `a` (m/s^2).
pub fn vsp(v: f64, a: f64, p: &VspParams) -> f64 {
    let load = p.a * v + p.b * v * v + p.c * v * v * v;
    let inertia = p.source_mass * (a + p.gravity * p.grade.sin()) * v;
    (load + inertia) / p.fixed_mass
}
