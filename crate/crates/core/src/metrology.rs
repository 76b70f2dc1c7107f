//! Simulated measurement station at the press outlet.
//!
//! Instruments quantize to their resolution grid (round half away from
//! zero) after additive Gaussian noise. Measurement tasks must fit between
//! a part's ejection and the end of the cycle.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{ChronoEvent, CycleRecord, CycleTrace, PartQuality, QualityComponent, ThermalSnapshot};
use crate::rng::rng_from_seed;

/// Slack used when comparing accumulated task durations with the window.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstrumentKind {
    Balance,
    DimensionScanner,
    ThermalCamera,
    AspectInspector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instrument {
    pub name: String,
    pub kind: InstrumentKind,
    /// Output grid in the instrument's unit.
    pub resolution: f64,
    pub noise_sigma: f64,
    /// Task duration, s.
    pub duration: f64,
}

impl Instrument {
    pub fn new(name: &str, kind: InstrumentKind, resolution: f64, noise_sigma: f64, duration: f64) -> Result<Self> {
        let i = Instrument {
            name: name.to_string(),
            kind,
            resolution,
            noise_sigma,
            duration,
        };
        i.validate()?;
        Ok(i)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(Error::range(format!("{}.resolution", self.name), self.resolution, 0.0, f64::INFINITY));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::range(format!("{}.noise_sigma", self.name), self.noise_sigma, 0.0, f64::INFINITY));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::range(format!("{}.duration", self.name), self.duration, 0.0, f64::INFINITY));
        }
        Ok(())
    }
}

/// The embedded default catalog: 2 + 6 + 3 + 0.5 = 11.5 s of tasks.
pub fn default_catalog() -> Vec<Instrument> {
    vec![
        Instrument {
            name: "balance".into(),
            kind: InstrumentKind::Balance,
            resolution: 0.001,
            noise_sigma: 0.0005,
            duration: 2.0,
        },
        Instrument {
            name: "laser_scanner".into(),
            kind: InstrumentKind::DimensionScanner,
            resolution: 0.050,
            noise_sigma: 0.015,
            duration: 6.0,
        },
        Instrument {
            name: "thermal_camera".into(),
            kind: InstrumentKind::ThermalCamera,
            resolution: 0.1,
            noise_sigma: 0.3,
            duration: 3.0,
        },
        Instrument {
            name: "aspect_inspector".into(),
            kind: InstrumentKind::AspectInspector,
            resolution: 0.001,
            noise_sigma: 0.02,
            duration: 0.5,
        },
    ]
}

/// Round half away from zero onto a grid of step `resolution`.
pub fn quantize(value: f64, resolution: f64) -> f64 {
    let steps = (value / resolution).round();
    let inv = 1.0 / resolution;
    // Dividing by an integral inverse (1000, 20) lands on the nearest
    // representable grid value.
    if (inv - inv.round()).abs() < 1e-9 {
        steps / inv.round()
    } else {
        steps * resolution
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledTask {
    pub instrument: Instrument,
    /// Seconds from injection start.
    pub start: f64,
}

impl ScheduledTask {
    pub fn end(&self) -> f64 {
        self.start + self.instrument.duration
    }
}

/// Measurement tasks packed into the cycle's idle window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChronogramPlan {
    pub tasks: Vec<ScheduledTask>,
    /// `(ejection, cycle end)`, seconds.
    pub idle_window: (f64, f64),
}

impl ChronogramPlan {
    pub fn total_duration(&self) -> f64 {
        self.tasks.iter().map(|t| t.instrument.duration).sum()
    }

    pub fn last_end(&self) -> f64 {
        self.tasks.last().map_or(self.idle_window.0, |t| t.end())
    }

    pub fn window_length(&self) -> f64 {
        self.idle_window.1 - self.idle_window.0
    }

    pub fn instrument(&self, kind: InstrumentKind) -> Option<&Instrument> {
        self.tasks.iter().map(|t| &t.instrument).find(|i| i.kind == kind)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.idle_window;
        let mut cursor = lo;
        for t in &self.tasks {
            if t.start + TIME_EPS < cursor {
                return Err(Error::Invalid(format!("task `{}` overlaps its predecessor", t.instrument.name)));
            }
            cursor = t.end();
        }
        if cursor > hi + TIME_EPS {
            return Err(Error::Infeasible { overflow: cursor - hi });
        }
        Ok(())
    }
}

/// Greedy packing of `tasks`, in order, from the ejection instant.
pub fn schedule(tasks: &[Instrument], cycle_time: f64, ejection_offset: f64) -> Result<ChronogramPlan> {
    if !(ejection_offset >= 0.0 && cycle_time > ejection_offset) {
        return Err(Error::Invalid(format!(
            "need cycle_time > ejection_offset >= 0, got {cycle_time} and {ejection_offset}"
        )));
    }
    for t in tasks {
        t.validate()?;
    }
    let window = cycle_time - ejection_offset;
    let total: f64 = tasks.iter().map(|t| t.duration).sum();
    if total > window + TIME_EPS {
        return Err(Error::Infeasible { overflow: total - window });
    }
    let mut start = ejection_offset;
    let planned = tasks
        .iter()
        .map(|i| {
            let t = ScheduledTask {
                instrument: i.clone(),
                start,
            };
            start += i.duration;
            t
        })
        .collect();
    Ok(ChronogramPlan {
        tasks: planned,
        idle_window: (ejection_offset, cycle_time),
    })
}

/// Down-sampled trace: means over consecutive windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedTrace {
    pub window: usize,
    pub mold_pressure: Vec<f64>,
    pub mold_temperature: Vec<f64>,
}

impl AveragedTrace {
    /// Pressure points followed by temperature points.
    pub fn features(&self) -> Vec<f64> {
        self.mold_pressure.iter().chain(&self.mold_temperature).copied().collect()
    }
}

/// Means over consecutive windows; a trailing partial window is dropped.
pub fn average_series(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window < 1 {
        return Err(Error::range("window", window as f64, 1.0, f64::INFINITY));
    }
    Ok(series
        .chunks_exact(window)
        .map(|c| c.iter().sum::<f64>() / window as f64)
        .collect())
}

pub fn average_trace(trace: &CycleTrace, window: usize) -> Result<AveragedTrace> {
    Ok(AveragedTrace {
        window,
        mold_pressure: average_series(&trace.mold_pressure, window)?,
        mold_temperature: average_series(&trace.mold_temperature, window)?,
    })
}

/// Upper bound on drift rate for the cavity pressure sensor, bar/s.
pub const MAX_DRIFT_RATE: f64 = 1.0;

/// Add a bounded random-walk offset to the pressure channel. Each sample
/// moves the offset by at most `drift_rate / sample_rate`, so the offset
/// changes by no more than `drift_rate` over any second.
pub fn drift_trace(trace: &CycleTrace, drift_rate: f64, seed: u64) -> Result<CycleTrace> {
    if !(drift_rate.abs() <= MAX_DRIFT_RATE) {
        return Err(Error::range("drift_rate", drift_rate, -MAX_DRIFT_RATE, MAX_DRIFT_RATE));
    }
    let mut out = trace.clone();
    if drift_rate == 0.0 {
        return Ok(out);
    }
    let step = drift_rate.abs() / trace.sample_rate;
    let mut rng = rng_from_seed(seed);
    let mut offset = 0.0;
    for p in out.mold_pressure.iter_mut() {
        offset += step * (2.0 * rng.random::<f64>() - 1.0);
        *p += offset;
    }
    Ok(out)
}

/// The station: an instrument catalog plus a global noise switch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Station {
    pub catalog: Vec<Instrument>,
    pub noise: bool,
    /// Ambient temperature for part cooling after ejection, °C.
    pub ambient: f64,
    /// Air-cooling time constant of the ejected part, s.
    pub air_cooling_tau: f64,
}

impl Default for Station {
    fn default() -> Self {
        Station::new(default_catalog(), true)
    }
}

impl Station {
    pub fn new(catalog: Vec<Instrument>, noise: bool) -> Self {
        Station {
            catalog,
            noise,
            ambient: 25.0,
            air_cooling_tau: 60.0,
        }
    }

    pub fn noiseless() -> Self {
        Station::new(default_catalog(), false)
    }

    pub fn instrument(&self, kind: InstrumentKind) -> Option<&Instrument> {
        self.catalog.iter().find(|i| i.kind == kind)
    }

    fn sigma(&self, inst: &Instrument) -> f64 {
        if self.noise {
            inst.noise_sigma
        } else {
            0.0
        }
    }

    fn read<R: Rng>(&self, inst: &Instrument, value: f64, rng: &mut R) -> f64 {
        let sigma = self.sigma(inst);
        let noisy = if sigma > 0.0 {
            value + Normal::new(0.0, sigma).expect("sigma checked").sample(rng)
        } else {
            value
        };
        quantize(noisy, inst.resolution)
    }

    fn balance(&self) -> Instrument {
        self.instrument(InstrumentKind::Balance)
            .cloned()
            .unwrap_or_else(|| default_catalog().swap_remove(0))
    }

    fn scanner(&self) -> Instrument {
        self.instrument(InstrumentKind::DimensionScanner)
            .cloned()
            .unwrap_or_else(|| default_catalog().swap_remove(1))
    }

    /// Weigh a part on the catalog balance.
    pub fn weigh(&self, true_mass: f64, seed: u64) -> Result<f64> {
        self.weigh_with(&self.balance(), true_mass, &mut rng_from_seed(seed))
    }

    fn weigh_with<R: Rng>(&self, inst: &Instrument, true_mass: f64, rng: &mut R) -> Result<f64> {
        if !(true_mass > 0.0 && true_mass.is_finite()) {
            return Err(Error::range("true_mass", true_mass, f64::MIN_POSITIVE, f64::INFINITY));
        }
        Ok(self.read(inst, true_mass, rng))
    }

    /// Laser scan of the four dimensions. Mass and defect score pass through.
    pub fn scan_dimensions(&self, quality: &PartQuality, seed: u64) -> Result<PartQuality> {
        self.scan_with(&self.scanner(), quality, &mut rng_from_seed(seed))
    }

    fn scan_with<R: Rng>(&self, inst: &Instrument, quality: &PartQuality, rng: &mut R) -> Result<PartQuality> {
        let mut out = *quality;
        for c in QualityComponent::DIMENSIONS {
            let v = quality.get(c);
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::range(c.name(), v, f64::MIN_POSITIVE, f64::INFINITY));
            }
            out.set(c, self.read(inst, v, rng));
        }
        Ok(out)
    }

    /// Thermal snapshot of the part at `elapsed` seconds after ejection.
    fn thermal_with<R: Rng>(&self, inst: &Instrument, eject_temp: f64, elapsed: f64, rng: &mut R) -> ThermalSnapshot {
        let max = self.ambient + (eject_temp - self.ambient) * (-elapsed / self.air_cooling_tau).exp();
        let mean = self.ambient + 0.85 * (max - self.ambient);
        ThermalSnapshot {
            mean: self.read(inst, mean, rng),
            max: self.read(inst, max, rng),
        }
    }

    /// Run every task of `plan` on `record`, filling measured quality and
    /// stamping task start times.
    pub fn measure_cycle(&self, record: &CycleRecord, plan: &ChronogramPlan, seed: u64) -> Result<CycleRecord> {
        plan.validate()?;
        if plan.last_end() > record.cycle_time + TIME_EPS {
            return Err(Error::Infeasible {
                overflow: plan.last_end() - record.cycle_time,
            });
        }
        let mut rng = rng_from_seed(seed);
        let mut out = record.clone();
        let mut measured = record.true_quality;
        let eject = record.ejection_time();
        for task in &plan.tasks {
            let inst = &task.instrument;
            match inst.kind {
                InstrumentKind::Balance => {
                    measured.mass = self.weigh_with(inst, record.true_quality.mass, &mut rng)?;
                }
                InstrumentKind::DimensionScanner => {
                    measured = self.scan_with(inst, &measured, &mut rng)?;
                }
                InstrumentKind::ThermalCamera => {
                    let eject_temp = record.trace.mold_temperature[record.trace.phase_marks[3]];
                    let elapsed = (task.start - eject).max(0.0);
                    out.thermal = Some(self.thermal_with(inst, eject_temp, elapsed, &mut rng));
                }
                InstrumentKind::AspectInspector => {
                    let v = self.read(inst, record.true_quality.defect_score, &mut rng);
                    measured.defect_score = v.clamp(0.0, 1.0);
                }
            }
            out.events.push(ChronoEvent {
                label: format!("measure:{}", inst.name),
                time: task.start,
            });
        }
        out.measured_quality = Some(measured);
        Ok(out)
    }
}
