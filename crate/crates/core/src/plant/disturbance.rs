use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Time shape of a disturbance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DisturbanceKind {
    #[default]
    None,
    Step,
    Ramp,
    /// Material lots alternate every `period` cycles between the reference
    /// lot and a shifted one.
    BatchChange,
}

/// Which uncontrolled quantity the disturbance moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceTarget {
    /// Realized melt temperature minus set-point, °C.
    #[default]
    MeltTempOffset,
    /// Multiplicative material viscosity factor (added to 1.0).
    ViscosityFactor,
    /// Fraction of holding pressure lost through a worn check ring.
    CheckringLeak,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceProfile {
    #[serde(default)]
    pub kind: DisturbanceKind,
    #[serde(default)]
    pub target: DisturbanceTarget,
    /// Step size, saturation limit of a ramp (0 = unbounded), or lot shift.
    #[serde(default)]
    pub magnitude: f64,
    #[serde(default)]
    pub onset_cycle: usize,
    /// Ramp slope per cycle.
    #[serde(default)]
    pub slope: f64,
    /// Lot length for batch changes.
    #[serde(default)]
    pub period: Option<usize>,
}

impl Default for DisturbanceProfile {
    fn default() -> Self {
        Self::none()
    }
}

/// Concrete disturbance values in effect for one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceState {
    pub melt_temp_offset: f64,
    pub viscosity_factor: f64,
    pub checkring_leak: f64,
}

impl Default for DisturbanceState {
    fn default() -> Self {
        Self::NONE
    }
}

impl DisturbanceState {
    pub const NONE: DisturbanceState = DisturbanceState {
        melt_temp_offset: 0.0,
        viscosity_factor: 1.0,
        checkring_leak: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        if !self.melt_temp_offset.is_finite() || self.melt_temp_offset.abs() > 60.0 {
            return Err(Error::range("melt_temp_offset", self.melt_temp_offset, -60.0, 60.0));
        }
        if !(self.viscosity_factor > 0.1 && self.viscosity_factor <= 10.0) {
            return Err(Error::range("viscosity_factor", self.viscosity_factor, 0.1, 10.0));
        }
        if !(0.0..=0.5).contains(&self.checkring_leak) {
            return Err(Error::range("checkring_leak", self.checkring_leak, 0.0, 0.5));
        }
        Ok(())
    }

    fn with_target(mut self, target: DisturbanceTarget, value: f64) -> Self {
        match target {
            DisturbanceTarget::MeltTempOffset => self.melt_temp_offset += value,
            DisturbanceTarget::ViscosityFactor => self.viscosity_factor += value,
            DisturbanceTarget::CheckringLeak => self.checkring_leak += value,
        }
        self
    }
}

impl DisturbanceProfile {
    pub fn none() -> Self {
        DisturbanceProfile {
            kind: DisturbanceKind::None,
            target: DisturbanceTarget::MeltTempOffset,
            magnitude: 0.0,
            onset_cycle: 0,
            slope: 0.0,
            period: None,
        }
    }

    pub fn step(target: DisturbanceTarget, magnitude: f64, onset_cycle: usize) -> Self {
        DisturbanceProfile {
            kind: DisturbanceKind::Step,
            target,
            magnitude,
            onset_cycle,
            ..Self::none()
        }
    }

    pub fn ramp(target: DisturbanceTarget, slope: f64, limit: f64, onset_cycle: usize) -> Self {
        DisturbanceProfile {
            kind: DisturbanceKind::Ramp,
            target,
            magnitude: limit,
            onset_cycle,
            slope,
            period: None,
        }
    }

    pub fn batch_change(target: DisturbanceTarget, magnitude: f64, onset_cycle: usize, period: usize) -> Self {
        DisturbanceProfile {
            kind: DisturbanceKind::BatchChange,
            target,
            magnitude,
            onset_cycle,
            slope: 0.0,
            period: Some(period),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.magnitude.is_finite() || !self.slope.is_finite() {
            return Err(Error::Invalid("disturbance magnitude/slope must be finite".into()));
        }
        match self.kind {
            DisturbanceKind::None if self.magnitude != 0.0 => {
                Err(Error::Invalid("disturbance kind `none` requires magnitude = 0".into()))
            }
            DisturbanceKind::Ramp if self.slope == 0.0 => {
                Err(Error::Invalid("ramp disturbance requires a non-zero slope".into()))
            }
            DisturbanceKind::BatchChange if self.period.unwrap_or(0) == 0 => {
                Err(Error::Invalid("batch-change disturbance requires period >= 1".into()))
            }
            _ => Ok(()),
        }
    }

    /// Value added to the target quantity at `cycle`.
    pub fn value_at(&self, cycle: usize) -> f64 {
        if cycle < self.onset_cycle {
            return 0.0;
        }
        let k = (cycle - self.onset_cycle) as f64;
        match self.kind {
            DisturbanceKind::None => 0.0,
            DisturbanceKind::Step => self.magnitude,
            DisturbanceKind::Ramp => {
                let v = self.slope * (k + 1.0);
                if self.magnitude != 0.0 {
                    let lim = self.magnitude.abs();
                    v.clamp(-lim, lim)
                } else {
                    v
                }
            }
            DisturbanceKind::BatchChange => {
                let period = self.period.unwrap_or(1).max(1);
                if ((cycle - self.onset_cycle) / period) % 2 == 0 {
                    self.magnitude
                } else {
                    0.0
                }
            }
        }
    }

    /// Resolve the profile to concrete values for `cycle`.
    pub fn state_at(&self, cycle: usize) -> DisturbanceState {
        DisturbanceState::NONE.with_target(self.target, self.value_at(cycle))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_starts_at_onset() {
        let d = DisturbanceProfile::step(DisturbanceTarget::MeltTempOffset, 20.0, 3);
        assert_eq!(d.state_at(2).melt_temp_offset, 0.0);
        assert_eq!(d.state_at(3).melt_temp_offset, 20.0);
        assert_eq!(d.state_at(100).melt_temp_offset, 20.0);
    }

    #[test]
    fn ramp_grows_and_saturates() {
        let d = DisturbanceProfile::ramp(DisturbanceTarget::ViscosityFactor, 0.01, 0.05, 0);
        assert!((d.state_at(0).viscosity_factor - 1.01).abs() < 1e-12);
        assert!((d.state_at(2).viscosity_factor - 1.03).abs() < 1e-12);
        assert!((d.state_at(50).viscosity_factor - 1.05).abs() < 1e-12);
    }

    #[test]
    fn batch_change_alternates() {
        let d = DisturbanceProfile::batch_change(DisturbanceTarget::CheckringLeak, 0.1, 2, 3);
        let v: Vec<f64> = (0..10).map(|c| d.value_at(c)).collect();
        assert_eq!(v, vec![0.0, 0.0, 0.1, 0.1, 0.1, 0.0, 0.0, 0.0, 0.1, 0.1]);
    }

    #[test]
    fn invariants() {
        let mut d = DisturbanceProfile::none();
        d.magnitude = 1.0;
        assert!(d.validate().is_err());
        let mut r = DisturbanceProfile::ramp(DisturbanceTarget::MeltTempOffset, 1.0, 0.0, 0);
        r.validate().unwrap();
        r.slope = 0.0;
        assert!(r.validate().is_err());
        let mut b = DisturbanceProfile::batch_change(DisturbanceTarget::MeltTempOffset, 5.0, 0, 4);
        b.validate().unwrap();
        b.period = Some(0);
        assert!(b.validate().is_err());
    }
}
