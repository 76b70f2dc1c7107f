use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Settable machine parameters for one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessParams {
    /// Melt temperature set-point, °C.
    pub melt_temp: f64,
    /// Holding pressure, bar.
    pub hold_pressure: f64,
    /// Injection speed, mm/s.
    pub inject_speed: f64,
    /// Holding time, s.
    pub hold_time: f64,
    /// Cooling time, s.
    pub cool_time: f64,
    /// Mold temperature, °C.
    pub mold_temp: f64,
}

/// Identifies one field of [`ProcessParams`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    MeltTemp,
    HoldPressure,
    InjectSpeed,
    HoldTime,
    CoolTime,
    MoldTemp,
}

impl ParamKind {
    pub const ALL: [ParamKind; 6] = [
        ParamKind::MeltTemp,
        ParamKind::HoldPressure,
        ParamKind::InjectSpeed,
        ParamKind::HoldTime,
        ParamKind::CoolTime,
        ParamKind::MoldTemp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamKind::MeltTemp => "melt_temp",
            ParamKind::HoldPressure => "hold_pressure",
            ParamKind::InjectSpeed => "inject_speed",
            ParamKind::HoldTime => "hold_time",
            ParamKind::CoolTime => "cool_time",
            ParamKind::MoldTemp => "mold_temp",
        }
    }

    /// Machine range `(min, max)`.
    pub fn range(self) -> (f64, f64) {
        match self {
            ParamKind::MeltTemp => (200.0, 280.0),
            ParamKind::HoldPressure => (200.0, 600.0),
            ParamKind::InjectSpeed => (10.0, 120.0),
            ParamKind::HoldTime => (1.0, 10.0),
            ParamKind::CoolTime => (5.0, 25.0),
            ParamKind::MoldTemp => (20.0, 80.0),
        }
    }

    pub fn span(self) -> f64 {
        let (lo, hi) = self.range();
        hi - lo
    }

    pub fn clamp(self, value: f64) -> f64 {
        let (lo, hi) = self.range();
        value.clamp(lo, hi)
    }
}

impl std::str::FromStr for ParamKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ParamKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown process parameter `{s}`")))
    }
}

impl std::fmt::Display for ParamKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl ProcessParams {
    /// The declared nominal operating point.
    pub const NOMINAL: ProcessParams = ProcessParams {
        melt_temp: 230.0,
        hold_pressure: 400.0,
        inject_speed: 50.0,
        hold_time: 5.0,
        cool_time: 15.0,
        mold_temp: 40.0,
    };

    /// Validated constructor.
    pub fn new(
        melt_temp: f64,
        hold_pressure: f64,
        inject_speed: f64,
        hold_time: f64,
        cool_time: f64,
        mold_temp: f64,
    ) -> Result<Self> {
        let p = ProcessParams {
            melt_temp,
            hold_pressure,
            inject_speed,
            hold_time,
            cool_time,
            mold_temp,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn nominal() -> Self {
        Self::NOMINAL
    }

    pub fn get(&self, kind: ParamKind) -> f64 {
        match kind {
            ParamKind::MeltTemp => self.melt_temp,
            ParamKind::HoldPressure => self.hold_pressure,
            ParamKind::InjectSpeed => self.inject_speed,
            ParamKind::HoldTime => self.hold_time,
            ParamKind::CoolTime => self.cool_time,
            ParamKind::MoldTemp => self.mold_temp,
        }
    }

    pub fn set(&mut self, kind: ParamKind, value: f64) {
        match kind {
            ParamKind::MeltTemp => self.melt_temp = value,
            ParamKind::HoldPressure => self.hold_pressure = value,
            ParamKind::InjectSpeed => self.inject_speed = value,
            ParamKind::HoldTime => self.hold_time = value,
            ParamKind::CoolTime => self.cool_time = value,
            ParamKind::MoldTemp => self.mold_temp = value,
        }
    }

    /// Copy with one field replaced, validated.
    pub fn with(&self, kind: ParamKind, value: f64) -> Result<Self> {
        let mut p = *self;
        p.set(kind, value);
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for kind in ParamKind::ALL {
            let v = self.get(kind);
            let (lo, hi) = kind.range();
            if !v.is_finite() || v <= 0.0 || v < lo || v > hi {
                return Err(Error::range(kind.name(), v, lo, hi));
            }
        }
        Ok(())
    }

    /// Clamp every field into its machine range. Returns the clamped copy and
    /// whether any field moved.
    pub fn clamped(&self) -> (Self, bool) {
        let mut p = *self;
        let mut moved = false;
        for kind in ParamKind::ALL {
            let v = self.get(kind);
            let c = if v.is_nan() { kind.range().0 } else { kind.clamp(v) };
            if c != v {
                moved = true;
            }
            p.set(kind, c);
        }
        (p, moved)
    }
}

impl Default for ProcessParams {
    fn default() -> Self {
        Self::NOMINAL
    }
}
