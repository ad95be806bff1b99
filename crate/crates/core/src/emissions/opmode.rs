//! Operating-mode bins: braking, idling, then speed band by VSP range.

use serde::{Deserialize, Serialize};

use crate::units::{mph_per_s_to_mps2, mph_to_mps, mps_to_mph};

pub type OpModeId = u16;

pub const BRAKING: OpModeId = 0;
pub const IDLE: OpModeId = 1;

/// Every operating mode, ascending.
pub const ALL_OPMODES: [OpModeId; 23] = [
    0, 1, 11, 12, 13, 14, 15, 16, 21, 22, 23, 24, 25, 27, 28, 29, 30, 33, 35, 37, 38, 39, 40,
];

/// Speed band edges, mph.
const LOW_BAND: f64 = 25.0;
const HIGH_BAND: f64 = 50.0;

/// VSP upper edges (kW/tonne) and IDs per band; the last ID is open above.
const LOW: (&[f64], &[OpModeId]) = (&[0.0, 3.0, 6.0, 9.0, 12.0], &[11, 12, 13, 14, 15, 16]);
const MID: (&[f64], &[OpModeId]) = (
    &[0.0, 3.0, 6.0, 9.0, 12.0, 18.0, 24.0, 30.0],
    &[21, 22, 23, 24, 25, 27, 28, 29, 30],
);
const HIGH: (&[f64], &[OpModeId]) = (&[6.0, 12.0, 18.0, 24.0, 30.0], &[33, 35, 37, 38, 39, 40]);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpModeThresholds {
    /// Any acceleration at or below this is braking, m/s^2.
    pub hard_braking: f64,
    /// Three consecutive accelerations below this are braking, m/s^2.
    pub sustained_braking: f64,
    /// Speeds below this idle, m/s.
    pub idle_speed: f64,
}

impl Default for OpModeThresholds {
    fn default() -> Self {
        Self {
            hard_braking: mph_per_s_to_mps2(-2.0),
            sustained_braking: mph_per_s_to_mps2(-1.0),
            idle_speed: mph_to_mps(1.0),
        }
    }
}

/// Classifies one sample. `a_prev` and `a_prev2` are the accelerations of
/// the two preceding samples, if any.
pub fn classify_opmode(
    v: f64,
    a: f64,
    a_prev: Option<f64>,
    a_prev2: Option<f64>,
    vsp: f64,
) -> OpModeId {
    classify_opmode_with(&OpModeThresholds::default(), v, a, a_prev, a_prev2, vsp)
}

pub fn classify_opmode_with(
    th: &OpModeThresholds,
    v: f64,
    a: f64,
    a_prev: Option<f64>,
    a_prev2: Option<f64>,
    vsp: f64,
) -> OpModeId {
    let slowing = |x: Option<f64>| x.is_some_and(|x| x < th.sustained_braking);
    if a <= th.hard_braking || (slowing(Some(a)) && slowing(a_prev) && slowing(a_prev2)) {
        return BRAKING;
    }
    if v < th.idle_speed {
        return IDLE;
    }
    let mph = mps_to_mph(v);
    let (edges, ids) = if mph < LOW_BAND {
        LOW
    } else if mph < HIGH_BAND {
        MID
    } else {
        HIGH
    };
    ids[edges.partition_point(|&e| e <= vsp)]
}

/// Classifier that carries the braking history between samples.
#[derive(Debug, Clone, Default)]
pub struct OpModeClassifier {
    pub thresholds: OpModeThresholds,
    prev: Option<f64>,
    prev2: Option<f64>,
}

impl OpModeClassifier {
    pub fn new(thresholds: OpModeThresholds) -> Self {
        Self {
            thresholds,
            prev: None,
            prev2: None,
        }
    }

    pub fn push(&mut self, v: f64, a: f64, vsp: f64) -> OpModeId {
        let id = classify_opmode_with(&self.thresholds, v, a, self.prev, self.prev2, vsp);
        self.prev2 = self.prev;
        self.prev = Some(a);
        id
    }
}
