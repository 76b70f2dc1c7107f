use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{normalized_errors, rms, ActionTag, ControlAction, ControlLog, InverseModel, LogEntry, Tolerances};
use crate::error::{Error, Result};
use crate::metrology::{default_catalog, schedule, ChronogramPlan, Station};
use crate::plant::{CycleRecord, DisturbanceState, ParamKind, PartQuality, Plant, ProcessParams, QualityComponent};
use crate::rng::{SeedTree, Stream};

/// Default idle window: ejection at 18 s, next ejection at 30 s.
pub const DEFAULT_WINDOW: (f64, f64) = (18.0, 30.0);

/// Measurement station plus the chronogram it runs in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub station: Station,
    pub plan: ChronogramPlan,
}

impl Measurement {
    pub fn new(station: Station, window: (f64, f64)) -> Result<Self> {
        let plan = schedule(&station.catalog, window.1, window.0)?;
        Ok(Measurement { station, plan })
    }

    /// Default catalog in the default window, noise as requested.
    pub fn default_station(noise: bool) -> Result<Self> {
        Measurement::new(Station::new(default_catalog(), noise), DEFAULT_WINDOW)
    }

    pub fn measure(&self, rec: &CycleRecord, seed: u64) -> Result<CycleRecord> {
        self.station.measure_cycle(rec, &self.plan, seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    pub max_iters: usize,
    pub gain: f64,
    /// The loop stops once RMS falls below this.
    pub rms_threshold: f64,
    /// Parts produced and averaged per adjustment.
    pub parts_per_iteration: usize,
    pub components: Vec<QualityComponent>,
    pub tolerances: Tolerances,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            max_iters: 3,
            gain: 0.7,
            rms_threshold: 0.07,
            parts_per_iteration: 3,
            components: vec![QualityComponent::Mass, QualityComponent::Length],
            tolerances: Tolerances::default(),
        }
    }
}

fn check_gain(gain: f64) -> Result<()> {
    if gain > 0.0 && gain <= 1.0 {
        Ok(())
    } else {
        Err(Error::range("gain", gain, 0.0, 1.0))
    }
}

/// `new = current − gain · (inverse(measured) − inverse(target))`, clamped.
pub fn inverse_adjust(
    inverse: &InverseModel,
    measured: &PartQuality,
    target: &PartQuality,
    current: &ProcessParams,
    gain: f64,
) -> Result<ControlAction> {
    check_gain(gain)?;
    let implied = inverse.infer(measured)?;
    let wanted = inverse.infer(target)?;
    adjust_from(inverse, &implied, &wanted, current, gain)
}

fn adjust_from(
    inverse: &InverseModel,
    implied: &[f64],
    wanted: &[f64],
    current: &ProcessParams,
    gain: f64,
) -> Result<ControlAction> {
    let step = implied.iter().zip(wanted).map(|(i, w)| -gain * (i - w)).collect();
    ControlAction::stepped(0, *current, inverse.params.clone(), step, ActionTag::InverseStep)
}

/// Wall-clock compute spent on one adjustment, seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepTiming {
    pub iteration: usize,
    pub infer_s: f64,
    pub adjust_s: f64,
}

fn mean_quality(qs: &[PartQuality]) -> PartQuality {
    let mut out = qs[0];
    for c in QualityComponent::ALL {
        out.set(c, qs.iter().map(|q| q.get(c)).sum::<f64>() / qs.len() as f64);
    }
    out
}

/// Measure, adjust, repeat: at most `max_iters` adjustments, stopping early
/// once RMS drops below the threshold.
#[allow(clippy::too_many_arguments)]
pub fn run_inverse_loop(
    plant: &Plant,
    measurement: &Measurement,
    inverse: &InverseModel,
    target: &PartQuality,
    start: &ProcessParams,
    disturbance: &DisturbanceState,
    cfg: &LoopConfig,
    seeds: &SeedTree,
) -> Result<ControlLog> {
    run_inverse_loop_timed(plant, measurement, inverse, target, start, disturbance, cfg, seeds, &mut Vec::new())
}

/// [`run_inverse_loop`] that also records inference and adjustment time
/// for every step taken.
#[allow(clippy::too_many_arguments)]
pub fn run_inverse_loop_timed(
    plant: &Plant,
    measurement: &Measurement,
    inverse: &InverseModel,
    target: &PartQuality,
    start: &ProcessParams,
    disturbance: &DisturbanceState,
    cfg: &LoopConfig,
    seeds: &SeedTree,
    timing: &mut Vec<StepTiming>,
) -> Result<ControlLog> {
    check_gain(cfg.gain)?;
    if cfg.parts_per_iteration < 1 {
        return Err(Error::range("parts_per_iteration", 0.0, 1.0, f64::INFINITY));
    }
    start.validate()?;
    let mut log = ControlLog::new(cfg.components.clone(), cfg.tolerances);
    let mut params = *start;
    let mut cycle = 0usize;
    for iteration in 0..=cfg.max_iters {
        let mut parts = Vec::with_capacity(cfg.parts_per_iteration);
        for _ in 0..cfg.parts_per_iteration {
            let rec = plant.run_cycle(cycle, &params, disturbance, seeds.seed(Stream::Plant, cycle as u64))?;
            let rec = measurement.measure(&rec, seeds.seed(Stream::Metrology, cycle as u64))?;
            parts.push(rec.measured_quality.expect("station fills measured quality"));
            cycle += 1;
        }
        let measured = mean_quality(&parts);
        let errors = normalized_errors(&measured, target, &cfg.components, &cfg.tolerances);
        let r = rms(&errors);
        let traj = log.rms_trajectory();
        let warning = match traj.as_slice() {
            [.., a] if r > *a => Some(format!("divergence: RMS rose from {a:.4} to {r:.4} at iteration {iteration}")),
            _ => None,
        };
        let done = r < cfg.rms_threshold || iteration == cfg.max_iters;
        let action = if done {
            ControlAction::hold(cycle - 1, params)
        } else {
            let t0 = Instant::now();
            let implied = inverse.infer(&measured)?;
            let wanted = inverse.infer(target)?;
            let t1 = Instant::now();
            let mut a = adjust_from(inverse, &implied, &wanted, &params, cfg.gain)?;
            timing.push(StepTiming {
                iteration,
                infer_s: (t1 - t0).as_secs_f64(),
                adjust_s: t1.elapsed().as_secs_f64(),
            });
            a.cycle_index = cycle - 1;
            a
        };
        log.entries.push(LogEntry {
            cycle_index: iteration,
            params,
            measured,
            target: *target,
            errors,
            rms: r,
            action: action.clone(),
            warning,
        });
        if done {
            break;
        }
        params = action.new;
    }
    Ok(log)
}

/// Best noise-free RMS over a hold-pressure × melt-temperature grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOracle {
    pub best: ProcessParams,
    pub best_rms: f64,
    pub evaluated: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn grid_search_oracle(
    plant: &Plant,
    target: &PartQuality,
    base: &ProcessParams,
    components: &[QualityComponent],
    tol: &Tolerances,
    hold: (f64, f64),
    melt: (f64, f64),
    steps: usize,
) -> Result<GridOracle> {
    if steps < 2 {
        return Err(Error::range("grid steps", steps as f64, 2.0, f64::INFINITY));
    }
    let at = |(lo, hi): (f64, f64), i: usize| lo + (hi - lo) * i as f64 / (steps - 1) as f64;
    let mut best: Option<(f64, ProcessParams)> = None;
    for i in 0..steps {
        for j in 0..steps {
            let p = base.with(ParamKind::HoldPressure, at(hold, i))?.with(ParamKind::MeltTemp, at(melt, j))?;
            let q = plant.quality(&p, &DisturbanceState::NONE)?;
            let r = rms(&normalized_errors(&q, target, components, tol));
            if best.as_ref().is_none_or(|(b, _)| r < *b) {
                best = Some((r, p));
            }
        }
    }
    let (best_rms, best) = best.expect("non-empty grid");
    Ok(GridOracle {
        best,
        best_rms,
        evaluated: steps * steps,
    })
}
