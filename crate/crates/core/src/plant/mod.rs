//! Reference injection-molding plant.
//!
//! A cycle is evaluated as a chain of phases (plastication, injection,
//! holding, cooling, ejection), each consuming the state produced by the
//! previous one. With noise off the plant is an exact, smooth, interacting
//! map from set-points and disturbances to part quality and sensor traces.

mod disturbance;
mod params;
mod quality;
mod trace;

pub use disturbance::{DisturbanceKind, DisturbanceProfile, DisturbanceState, DisturbanceTarget};
pub use params::{ParamKind, ProcessParams};
pub use quality::{PartQuality, QualityComponent};
pub use trace::{samples_for, CycleTrace, SAMPLE_RATE_HZ};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, SeedTree, SimRng, Stream};

/// Plant coefficients. Defaults are the documented reference plant; any
/// field may be overridden from a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantConfig {
    /// Process and trace noise switch.
    pub noise: bool,

    pub mass_nominal: f64,
    pub length_mold: f64,
    pub width_a_mold: f64,
    pub width_b_mold: f64,
    pub thickness_mold: f64,

    pub hold_mass_gain: f64,
    pub hold_scale: f64,
    /// Linear melt-temperature mass coefficient, per °C.
    pub melt_mass_coeff: f64,
    pub interaction_mass_gain: f64,
    pub speed_scale: f64,
    pub melt_mass_curvature: f64,
    pub melt_scale: f64,

    pub shrink_nominal: f64,
    pub shrink_hold: f64,
    pub shrink_melt: f64,
    pub shrink_speed_width_a: f64,
    pub shrink_speed_width_b: f64,
    pub thickness_shrink_nominal: f64,
    pub thickness_shrink_hold: f64,

    pub viscosity_temp_scale: f64,
    /// Packing pressure lost per unit of excess viscosity factor, bar.
    pub viscosity_pressure_loss: f64,

    pub defect_bias: f64,
    pub defect_melt_scale: f64,
    pub defect_speed_floor: f64,
    pub defect_speed_scale: f64,

    pub peak_hold_ratio: f64,
    pub peak_viscous_gain: f64,
    /// Fill stroke, mm (fill time = stroke / speed).
    pub fill_stroke: f64,
    /// Fractional pressure decay per second during holding.
    pub hold_decay: f64,
    pub cooling_tau: f64,
    pub mold_heat_fraction: f64,
    pub mold_cool_tau: f64,
    pub ejection_time: f64,
    pub cycle_time_min: f64,

    pub trace_noise_bar: f64,
    pub trace_noise_celsius: f64,
    /// g
    pub mass_jitter: f64,
    /// mm
    pub length_jitter: f64,

    pub post_shrink: f64,
    /// s
    pub post_tau: f64,
}

/// Linear melt coefficient such that +20 °C gives exactly −1.27 % mass once
/// the quadratic curvature term is included.
pub const MELT_MASS_COEFF: f64 = (-0.0127 + 0.008 * (20.0 / 50.0) * (20.0 / 50.0)) / 20.0;

impl Default for PlantConfig {
    fn default() -> Self {
        PlantConfig {
            noise: true,
            mass_nominal: 5.0,
            length_mold: 100.0,
            width_a_mold: 50.0,
            width_b_mold: 40.0,
            thickness_mold: 2.0,
            hold_mass_gain: 0.05,
            hold_scale: 200.0,
            melt_mass_coeff: MELT_MASS_COEFF,
            interaction_mass_gain: 0.01,
            speed_scale: 50.0,
            melt_mass_curvature: 0.008,
            melt_scale: 50.0,
            shrink_nominal: 0.015,
            shrink_hold: 0.006,
            shrink_melt: 0.004,
            shrink_speed_width_a: 0.002,
            shrink_speed_width_b: -0.001,
            thickness_shrink_nominal: 0.02,
            thickness_shrink_hold: 0.01,
            viscosity_temp_scale: 60.0,
            viscosity_pressure_loss: 100.0,
            defect_bias: -6.0,
            defect_melt_scale: 5.0,
            defect_speed_floor: 40.0,
            defect_speed_scale: 5.0,
            peak_hold_ratio: 0.9,
            peak_viscous_gain: 80.0,
            fill_stroke: 60.0,
            hold_decay: 0.02,
            cooling_tau: 4.0,
            mold_heat_fraction: 0.3,
            mold_cool_tau: 6.0,
            ejection_time: 2.0,
            cycle_time_min: 30.0,
            trace_noise_bar: 1.0,
            trace_noise_celsius: 0.2,
            mass_jitter: 0.002,
            length_jitter: 0.010,
            post_shrink: 0.004,
            post_tau: 5400.0,
        }
    }
}

/// One chronogram event inside a cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChronoEvent {
    pub label: String,
    /// Seconds from injection start.
    pub time: f64,
}

/// Thermal snapshot of the ejected part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalSnapshot {
    pub mean: f64,
    pub max: f64,
}

/// Everything known about one molding cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle_index: usize,
    pub params: ProcessParams,
    pub disturbance: DisturbanceState,
    /// Realized melt temperature (set-point plus disturbance), °C.
    pub melt_temp_realized: f64,
    pub cycle_time: f64,
    pub trace: CycleTrace,
    pub true_quality: PartQuality,
    pub measured_quality: Option<PartQuality>,
    pub thermal: Option<ThermalSnapshot>,
    pub events: Vec<ChronoEvent>,
}

impl CycleRecord {
    /// Measured quality when available, otherwise the true quality.
    pub fn quality(&self) -> &PartQuality {
        self.measured_quality.as_ref().unwrap_or(&self.true_quality)
    }

    pub fn ejection_time(&self) -> f64 {
        self.trace.phase_marks[3] as f64 / self.trace.sample_rate
    }
}

// Phase states. Each phase consumes the one before it.

#[derive(Debug, Clone, Copy)]
struct Melt {
    temp: f64,
    viscosity: f64,
    viscosity_factor: f64,
}

#[derive(Debug, Clone, Copy)]
struct Fill {
    melt: Melt,
    fill_time: f64,
    peak_pressure: f64,
    /// Pressure the machine delivers after check-ring losses.
    delivered_hold: f64,
}

#[derive(Debug, Clone, Copy)]
struct Packed {
    fill: Fill,
    /// Effective packing pressure seen by the part.
    packing_pressure: f64,
    mass: f64,
}

#[derive(Debug, Clone, Copy)]
struct Cooled {
    packed: Packed,
    shrink: f64,
    shrink_width_a: f64,
    shrink_width_b: f64,
    shrink_thickness: f64,
}

/// Timing and amplitude of a synthesized trace.
#[derive(Debug, Clone, Copy)]
pub(crate) struct TraceShape {
    pub fill_time: f64,
    pub hold_time: f64,
    pub cool_time: f64,
    pub cycle_time: f64,
    pub peak_pressure: f64,
    pub mold_temp: f64,
    pub mold_peak_temp: f64,
}

/// The reference plant.
#[derive(Debug, Clone, Default)]
pub struct Plant {
    pub config: PlantConfig,
}

impl Plant {
    pub fn new(config: PlantConfig) -> Self {
        Plant { config }
    }

    /// Reference plant with noise switched off.
    pub fn noiseless() -> Self {
        Plant::new(PlantConfig {
            noise: false,
            ..PlantConfig::default()
        })
    }

    pub fn with_noise(mut self, noise: bool) -> Self {
        self.config.noise = noise;
        self
    }

    fn plasticize(&self, params: &ProcessParams, d: &DisturbanceState) -> Melt {
        let c = &self.config;
        let temp = params.melt_temp + d.melt_temp_offset;
        let viscosity = (-(temp - 230.0) / c.viscosity_temp_scale).exp() * d.viscosity_factor;
        Melt {
            temp,
            viscosity,
            viscosity_factor: d.viscosity_factor,
        }
    }

    fn inject(&self, params: &ProcessParams, melt: Melt, d: &DisturbanceState) -> Fill {
        let c = &self.config;
        let delivered_hold = params.hold_pressure * (1.0 - d.checkring_leak);
        let peak_pressure = c.peak_hold_ratio * delivered_hold
            + c.peak_viscous_gain * melt.viscosity * (params.inject_speed / 50.0);
        Fill {
            melt,
            fill_time: c.fill_stroke / params.inject_speed,
            peak_pressure,
            delivered_hold,
        }
    }

    fn pack(&self, params: &ProcessParams, fill: Fill) -> Packed {
        let c = &self.config;
        let packing_pressure =
            fill.delivered_hold - c.viscosity_pressure_loss * (fill.melt.viscosity_factor - 1.0);
        let dp = (packing_pressure - 400.0) / c.hold_scale;
        let dt = fill.melt.temp - 230.0;
        let dv = (params.inject_speed - 50.0) / c.speed_scale;
        let rel = 1.0
            + c.hold_mass_gain * dp.tanh()
            + c.melt_mass_coeff * dt
            + c.interaction_mass_gain * dp * dv
            - c.melt_mass_curvature * (dt / c.melt_scale).powi(2);
        Packed {
            fill,
            packing_pressure,
            mass: c.mass_nominal * rel,
        }
    }

    fn cool(&self, params: &ProcessParams, packed: Packed) -> Cooled {
        let c = &self.config;
        let hp = ((packed.packing_pressure - 400.0) / c.hold_scale).tanh();
        let mt = (packed.fill.melt.temp - 230.0) / c.melt_scale;
        let dv = (params.inject_speed - 50.0) / c.speed_scale;
        let shrink = c.shrink_nominal - c.shrink_hold * hp + c.shrink_melt * mt;
        Cooled {
            packed,
            shrink,
            shrink_width_a: shrink + c.shrink_speed_width_a * dv,
            shrink_width_b: shrink + c.shrink_speed_width_b * dv,
            shrink_thickness: c.thickness_shrink_nominal - c.thickness_shrink_hold * hp + c.shrink_melt * mt,
        }
    }

    fn eject(&self, params: &ProcessParams, cooled: Cooled) -> PartQuality {
        let c = &self.config;
        let melt_dev = (cooled.packed.fill.melt.temp - 230.0).abs();
        let speed_deficit = (c.defect_speed_floor - params.inject_speed).max(0.0);
        let z = c.defect_bias + melt_dev / c.defect_melt_scale + speed_deficit / c.defect_speed_scale;
        PartQuality {
            mass: cooled.packed.mass,
            length: c.length_mold * (1.0 - cooled.shrink),
            width_a: c.width_a_mold * (1.0 - cooled.shrink_width_a),
            width_b: c.width_b_mold * (1.0 - cooled.shrink_width_b),
            thickness: c.thickness_mold * (1.0 - cooled.shrink_thickness),
            defect_score: 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Cycle duration for a parameter set.
    pub fn cycle_time(&self, params: &ProcessParams) -> f64 {
        let c = &self.config;
        let busy = c.fill_stroke / params.inject_speed + params.hold_time + params.cool_time + c.ejection_time;
        busy.max(c.cycle_time_min)
    }

    /// Noise-free quality, skipping the trace.
    pub fn quality(&self, params: &ProcessParams, d: &DisturbanceState) -> Result<PartQuality> {
        params.validate()?;
        d.validate()?;
        let melt = self.plasticize(params, d);
        let fill = self.inject(params, melt, d);
        let packed = self.pack(params, fill);
        let cooled = self.cool(params, packed);
        let q = self.eject(params, cooled);
        check_finite(&q)?;
        Ok(q)
    }

    pub(crate) fn synthesize_trace(&self, shape: &TraceShape, rng: Option<&mut SimRng>) -> Result<CycleTrace> {
        let c = &self.config;
        let n = samples_for(shape.cycle_time);
        let hold_start = shape.fill_time;
        let cool_start = hold_start + shape.hold_time;
        let eject_start = cool_start + shape.cool_time;
        let hold_end_pressure = shape.peak_pressure * (1.0 - c.hold_decay).powf(shape.hold_time);

        let mut pressure = Vec::with_capacity(n);
        let mut temperature = Vec::with_capacity(n);
        for k in 0..n {
            let t = k as f64 / SAMPLE_RATE_HZ;
            let p = if t < hold_start {
                shape.peak_pressure * t / shape.fill_time
            } else if t < cool_start {
                shape.peak_pressure * (1.0 - c.hold_decay).powf(t - hold_start)
            } else {
                hold_end_pressure * (-(t - cool_start) / c.cooling_tau).exp()
            };
            let temp = if t < hold_start {
                shape.mold_temp + (shape.mold_peak_temp - shape.mold_temp) * t / shape.fill_time
            } else {
                shape.mold_temp
                    + (shape.mold_peak_temp - shape.mold_temp) * (-(t - hold_start) / c.mold_cool_tau).exp()
            };
            pressure.push(p);
            temperature.push(temp);
        }
        if let Some(rng) = rng {
            let pn = Normal::new(0.0, c.trace_noise_bar).map_err(|_| Error::NumericalFault("trace noise"))?;
            for p in pressure.iter_mut() {
                *p += pn.sample(rng);
            }
            let tn = Normal::new(0.0, c.trace_noise_celsius).map_err(|_| Error::NumericalFault("trace noise"))?;
            for t in temperature.iter_mut() {
                *t += tn.sample(rng);
            }
        }
        if pressure.iter().chain(&temperature).any(|v| !v.is_finite()) {
            return Err(Error::NumericalFault("trace synthesis"));
        }
        Ok(CycleTrace {
            sample_rate: SAMPLE_RATE_HZ,
            mold_pressure: pressure,
            mold_temperature: temperature,
            phase_marks: [
                0,
                trace::index_at(hold_start),
                trace::index_at(cool_start),
                trace::index_at(eject_start),
            ],
        })
    }

    /// Run one cycle. The record's measured quality is left empty.
    pub fn run_cycle(
        &self,
        cycle_index: usize,
        params: &ProcessParams,
        disturbance: &DisturbanceState,
        seed: u64,
    ) -> Result<CycleRecord> {
        params.validate()?;
        disturbance.validate()?;
        let c = &self.config;

        let melt = self.plasticize(params, disturbance);
        let fill = self.inject(params, melt, disturbance);
        let packed = self.pack(params, fill);
        let cooled = self.cool(params, packed);
        let mut quality = self.eject(params, cooled);

        let mut rng = self.config.noise.then(|| rng_from_seed(seed));
        if let Some(rng) = rng.as_mut() {
            let m = Normal::new(0.0, c.mass_jitter).map_err(|_| Error::NumericalFault("mass jitter"))?;
            let l = Normal::new(0.0, c.length_jitter).map_err(|_| Error::NumericalFault("length jitter"))?;
            quality.mass += m.sample(rng);
            quality.length += l.sample(rng);
        }
        check_finite(&quality)?;
        quality.validate()?;

        let cycle_time = self.cycle_time(params);
        let shape = TraceShape {
            fill_time: fill.fill_time,
            hold_time: params.hold_time,
            cool_time: params.cool_time,
            cycle_time,
            peak_pressure: fill.peak_pressure,
            mold_temp: params.mold_temp,
            mold_peak_temp: params.mold_temp + c.mold_heat_fraction * (melt.temp - params.mold_temp),
        };
        let trace = self.synthesize_trace(&shape, rng.as_mut())?;
        trace.validate()?;

        let hold_start = fill.fill_time;
        let events = vec![
            ChronoEvent { label: "injection".into(), time: 0.0 },
            ChronoEvent { label: "holding".into(), time: hold_start },
            ChronoEvent { label: "cooling".into(), time: hold_start + params.hold_time },
            ChronoEvent { label: "ejection".into(), time: hold_start + params.hold_time + params.cool_time },
        ];

        Ok(CycleRecord {
            cycle_index,
            params: *params,
            disturbance: *disturbance,
            melt_temp_realized: melt.temp,
            cycle_time,
            trace,
            true_quality: quality,
            measured_quality: None,
            thermal: None,
            events,
        })
    }

    /// Run `n_cycles` consecutive cycles.
    ///
    /// `measure` is applied to every fresh record. `hook`, when present, sees
    /// the full history after each measurement and may return parameters for
    /// the next cycle.
    pub fn run_sequence<M, H>(
        &self,
        initial: &ProcessParams,
        n_cycles: usize,
        disturbance: &DisturbanceProfile,
        mut measure: M,
        mut hook: Option<H>,
        seeds: &SeedTree,
    ) -> Result<Vec<CycleRecord>>
    where
        M: FnMut(&mut CycleRecord) -> Result<()>,
        H: FnMut(&[CycleRecord]) -> Result<Option<ProcessParams>>,
    {
        if n_cycles < 1 {
            return Err(Error::Invalid("n_cycles must be at least 1".into()));
        }
        initial.validate()?;
        disturbance.validate()?;
        let mut params = *initial;
        let mut history = Vec::with_capacity(n_cycles);
        for i in 0..n_cycles {
            let state = disturbance.state_at(i);
            let mut rec = self.run_cycle(i, &params, &state, seeds.seed(Stream::Plant, i as u64))?;
            measure(&mut rec)?;
            history.push(rec);
            if let Some(h) = hook.as_mut() {
                if let Some(next) = h(&history)? {
                    next.validate().map_err(|e| Error::HookRange {
                        cycle: i,
                        source: Box::new(e),
                    })?;
                    params = next;
                }
            }
        }
        Ok(history)
    }

    /// Post-molding shrinkage after `elapsed` seconds.
    pub fn age_part(&self, quality: &PartQuality, elapsed: f64) -> Result<PartQuality> {
        if !(elapsed >= 0.0) {
            return Err(Error::range("elapsed", elapsed, 0.0, f64::INFINITY));
        }
        let c = &self.config;
        let factor = 1.0 - c.post_shrink * (1.0 - (-elapsed / c.post_tau).exp());
        Ok(PartQuality {
            length: quality.length * factor,
            width_a: quality.width_a * factor,
            width_b: quality.width_b * factor,
            thickness: quality.thickness * factor,
            ..*quality
        })
    }
}

/// Noise-free quality at the nominal operating point.
pub fn nominal_quality(plant: &Plant) -> PartQuality {
    plant
        .quality(&ProcessParams::NOMINAL, &DisturbanceState::NONE)
        .expect("nominal point is in range")
}

fn check_finite(q: &PartQuality) -> Result<()> {
    if QualityComponent::ALL.iter().all(|&c| q.get(c).is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalFault("quality evaluation"))
    }
}

#[cfg(test)]
mod tests;
