use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SAMPLE_RATE_HZ: f64 = 100.0;

/// Number of samples covering `duration` seconds at the fixed rate.
pub fn samples_for(duration: f64) -> usize {
    // Guard against 21.2 * 100 = 2120.0000000000005.
    (duration * SAMPLE_RATE_HZ - 1e-9).ceil().max(0.0) as usize
}

pub(crate) fn index_at(time: f64) -> usize {
    (time * SAMPLE_RATE_HZ).round() as usize
}

/// In-cycle sensor traces sampled at 100 Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleTrace {
    pub sample_rate: f64,
    /// Cavity pressure, bar.
    pub mold_pressure: Vec<f64>,
    /// Mold wall temperature, °C.
    pub mold_temperature: Vec<f64>,
    /// Sample indices where injection, holding, cooling and ejection begin.
    pub phase_marks: [usize; 4],
}

impl CycleTrace {
    pub fn len(&self) -> usize {
        self.mold_pressure.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mold_pressure.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.sample_rate
    }

    pub fn peak_pressure(&self) -> f64 {
        self.mold_pressure.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mold_pressure.len() != self.mold_temperature.len() {
            return Err(Error::Shape(format!(
                "trace channels differ in length: {} vs {}",
                self.mold_pressure.len(),
                self.mold_temperature.len()
            )));
        }
        let n = self.len();
        let m = self.phase_marks;
        if !(m.windows(2).all(|w| w[0] < w[1]) && m[3] < n) {
            return Err(Error::Shape(format!("phase marks {m:?} invalid for {n} samples")));
        }
        Ok(())
    }
}
