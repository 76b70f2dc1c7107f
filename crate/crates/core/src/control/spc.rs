use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SIGMA_FLOOR: f64 = 1e-12;
pub const MIN_BASELINE: usize = 20;
/// d2 constant for moving ranges of two.
const D2: f64 = 1.128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpcPoint {
    pub value: f64,
    pub z: f64,
    pub out_of_control: bool,
}

/// Individuals chart with ±3σ limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpcChart {
    pub center: f64,
    pub sigma: f64,
    pub ucl: f64,
    pub lcl: f64,
    pub points: Vec<SpcPoint>,
}

impl SpcChart {
    pub fn z(&self, value: f64) -> f64 {
        (value - self.center) / self.sigma
    }

    pub fn out_of_control(&self, value: f64) -> bool {
        value > self.ucl || value < self.lcl
    }

    pub fn point(&self, value: f64) -> SpcPoint {
        SpcPoint {
            value,
            z: self.z(value),
            out_of_control: self.out_of_control(value),
        }
    }

    pub fn n_out_of_control(&self) -> usize {
        self.points.iter().filter(|p| p.out_of_control).count()
    }
}

/// Chart whose center and σ (average moving range / 1.128) come from the
/// first `baseline_n` values; every value is then classified.
pub fn spc_chart(series: &[f64], baseline_n: usize) -> Result<SpcChart> {
    if baseline_n < MIN_BASELINE {
        return Err(Error::range("baseline_n", baseline_n as f64, MIN_BASELINE as f64, f64::INFINITY));
    }
    if series.len() < baseline_n {
        return Err(Error::range("series length", series.len() as f64, baseline_n as f64, f64::INFINITY));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFault("non-finite SPC value"));
    }
    let base = &series[..baseline_n];
    let center = base.iter().sum::<f64>() / baseline_n as f64;
    let mr = base.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (baseline_n - 1) as f64;
    let sigma = (mr / D2).max(SIGMA_FLOOR);
    let mut chart = SpcChart {
        center,
        sigma,
        ucl: center + 3.0 * sigma,
        lcl: center - 3.0 * sigma,
        points: Vec::new(),
    };
    chart.points = series.iter().map(|&v| chart.point(v)).collect();
    Ok(chart)
}
