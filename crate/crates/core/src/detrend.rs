//! Power scaling, the per-slot mean daily profile, and the deviation series
//! the regression models are fitted to.

use serde::{Deserialize, Serialize};

use crate::data_ingest::{AlignedSample, SLOTS_PER_DAY};
use crate::error::{Error, Result};

/// Divides raw power by the training maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerScale {
    pub y_max: f64,
}

impl PowerScale {
    pub fn scaled(&self, power_kw: f64) -> f64 {
        power_kw / self.y_max
    }

    pub fn kw(&self, scaled: f64) -> f64 {
        scaled * self.y_max
    }
}

pub fn compute_scale(train: &[AlignedSample]) -> Result<PowerScale> {
    if train.is_empty() {
        return Err(Error::Empty("training split".into()));
    }
    let y_max = train.iter().map(|s| s.power_kw).fold(0.0, f64::max);
    if y_max <= 0.0 {
        return Err(Error::Empty("training split has no positive power".into()));
    }
    Ok(PowerScale { y_max })
}

/// Mean scaled power per 15-minute time-of-day slot over the training days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanDailyProfile {
    pub values: Vec<f64>,
    pub support: Vec<u32>,
}

impl MeanDailyProfile {
    pub fn value(&self, slot: usize) -> f64 {
        self.values[slot % SLOTS_PER_DAY]
    }

    pub fn is_daytime(&self, slot: usize) -> bool {
        self.value(slot) > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != SLOTS_PER_DAY || self.support.len() != SLOTS_PER_DAY {
            return Err(Error::Model(format!("profile must have {SLOTS_PER_DAY} slots")));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Model("profile has non-finite values".into()));
        }
        Ok(())
    }
}

pub fn compute_mean_profile(train: &[AlignedSample], scale: &PowerScale) -> Result<MeanDailyProfile> {
    if train.is_empty() {
        return Err(Error::Empty("training split".into()));
    }
    let mut sums = vec![0.0; SLOTS_PER_DAY];
    let mut support = vec![0u32; SLOTS_PER_DAY];
    for s in train {
        let slot = s.slot();
        sums[slot] += scale.scaled(s.power_kw);
        support[slot] += 1;
    }
    let values = sums
        .iter()
        .zip(&support)
        .map(|(&sum, &n)| if n == 0 { 0.0 } else { sum / n as f64 })
        .collect();
    Ok(MeanDailyProfile { values, support })
}

/// Deviation of scaled power from the slot mean.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationSeries {
    /// Deviations clamped to `[-1, 1]`; these feed the regressor.
    pub values: Vec<f64>,
    /// Unclamped deviations; these are what predictions are scored against.
    pub raw: Vec<f64>,
    pub clamp_count: usize,
}

pub fn detrend(samples: &[AlignedSample], scale: &PowerScale, profile: &MeanDailyProfile) -> DeviationSeries {
    let raw: Vec<f64> = samples
        .iter()
        .map(|s| scale.scaled(s.power_kw) - profile.value(s.slot()))
        .collect();
    let mut clamp_count = 0;
    let values = raw
        .iter()
        .map(|&v| {
            if v.abs() > 1.0 {
                clamp_count += 1;
                v.clamp(-1.0, 1.0)
            } else {
                v
            }
        })
        .collect();
    DeviationSeries {
        values,
        raw,
        clamp_count,
    }
}

/// Converts a scaled deviation at `slot` back to kW.
pub fn retrend(yprime: f64, slot: usize, scale: &PowerScale, profile: &MeanDailyProfile) -> f64 {
    scale.kw(yprime + profile.value(slot))
}

/// Keeps samples whose slot has a strictly positive training mean.
pub fn daytime_filter(samples: &[AlignedSample], profile: &MeanDailyProfile) -> Vec<AlignedSample> {
    samples
        .iter()
        .filter(|s| profile.is_daytime(s.slot()))
        .cloned()
        .collect()
}
