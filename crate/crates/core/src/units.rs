//! Physical units and conversions.
//!
//! Everything inside the library works in SI: meters, seconds, m/s, m/s².
//! Miles and mph only appear at I/O boundaries and in the operating-mode
//! classifier, which bins on mph. Every unit factor in the crate lives here.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Meters in one international mile.
pub const METERS_PER_MILE: f64 = 1609.344;
/// m/s in one mile per hour.
pub const MPS_PER_MPH: f64 = 0.44704;
pub const SECONDS_PER_HOUR: f64 = 3600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dimension {
    Length,
    Time,
    Speed,
    Acceleration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Meter,
    Mile,
    Second,
    Hour,
    MetersPerSecond,
    Mph,
    MetersPerSecondSquared,
    MphPerSecond,
}

impl Unit {
    pub const ALL: [Unit; 8] = [
        Unit::Meter,
        Unit::Mile,
        Unit::Second,
        Unit::Hour,
        Unit::MetersPerSecond,
        Unit::Mph,
        Unit::MetersPerSecondSquared,
        Unit::MphPerSecond,
    ];

    pub fn dimension(self) -> Dimension {
        match self {
            Unit::Meter | Unit::Mile => Dimension::Length,
            Unit::Second | Unit::Hour => Dimension::Time,
            Unit::MetersPerSecond | Unit::Mph => Dimension::Speed,
            Unit::MetersPerSecondSquared | Unit::MphPerSecond => Dimension::Acceleration,
        }
    }

    /// Multiplier taking a value in this unit to the SI unit of its dimension.
    pub fn si_factor(self) -> f64 {
        match self {
            Unit::Meter | Unit::Second | Unit::MetersPerSecond | Unit::MetersPerSecondSquared => {
                1.0
            }
            Unit::Mile => METERS_PER_MILE,
            Unit::Hour => SECONDS_PER_HOUR,
            Unit::Mph | Unit::MphPerSecond => MPS_PER_MPH,
        }
    }

    pub fn is_si(self) -> bool {
        self.si_factor() == 1.0
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Unit::Meter => "m",
            Unit::Mile => "mi",
            Unit::Second => "s",
            Unit::Hour => "h",
            Unit::MetersPerSecond => "m/s",
            Unit::Mph => "mph",
            Unit::MetersPerSecondSquared => "m/s2",
            Unit::MphPerSecond => "mph/s",
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for Unit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Unit::ALL
            .into_iter()
            .find(|u| u.symbol().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidInput(format!("unknown unit '{s}'")))
    }
}

/// Converts `value` between two units of the same dimension.
///
/// Every supported dimension has exactly one non-SI unit, so a conversion is
/// either the identity or a single multiplication/division by the unit's SI
/// factor. That keeps results bit-reproducible and round trips within one ulp.
pub fn convert(value: f64, from: Unit, to: Unit) -> Result<f64> {
    if from.dimension() != to.dimension() {
        return Err(Error::DimensionMismatch {
            from: from.symbol(),
            to: to.symbol(),
        });
    }
    Ok(if from == to {
        value
    } else if to.is_si() {
        value * from.si_factor()
    } else if from.is_si() {
        value / to.si_factor()
    } else {
        value * from.si_factor() / to.si_factor()
    })
}

#[inline]
pub fn miles_to_meters(miles: f64) -> f64 {
    miles * METERS_PER_MILE
}

#[inline]
pub fn meters_to_miles(meters: f64) -> f64 {
    meters / METERS_PER_MILE
}

#[inline]
pub fn mph_to_mps(mph: f64) -> f64 {
    mph * MPS_PER_MPH
}

#[inline]
pub fn mps_to_mph(mps: f64) -> f64 {
    mps / MPS_PER_MPH
}

/// mph/s to m/s². Same factor as speed; kept separate for readability at call sites.
#[inline]
pub fn mph_per_s_to_mps2(mph_per_s: f64) -> f64 {
    mph_per_s * MPS_PER_MPH
}

#[inline]
pub fn seconds_to_hours(seconds: f64) -> f64 {
    seconds / SECONDS_PER_HOUR
}
