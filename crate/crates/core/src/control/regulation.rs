use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{normalized_errors, rms, ActionTag, ControlAction, ControlLog, LogEntry, Tolerances};
use crate::error::{Error, Result};
use crate::metrology::{average_trace, AveragedTrace};
use crate::nnet::{train, Dataset, Network, Topology, TrainConfig};
use crate::plant::{CycleRecord, DisturbanceProfile, DisturbanceState, ParamKind, Plant, ProcessParams, QualityComponent};
use crate::rng::{SeedTree, Stream};

/// Averaged-profile deviations from the reference:
/// `[mean Δp, Δ peak p, mean ΔT, Δ peak T]`.
pub fn profile_features(measured: &AveragedTrace, reference: &AveragedTrace) -> Result<Vec<f64>> {
    if measured.mold_pressure.len() != reference.mold_pressure.len()
        || measured.mold_temperature.len() != reference.mold_temperature.len()
    {
        return Err(Error::Shape(format!(
            "averaged profile has {} points, reference has {}",
            measured.mold_pressure.len(),
            reference.mold_pressure.len()
        )));
    }
    if reference.mold_pressure.is_empty() {
        return Err(Error::Shape("empty averaged profile".into()));
    }
    let mean_diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).sum::<f64>() / a.len() as f64;
    let peak = |a: &[f64]| a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(vec![
        mean_diff(&measured.mold_pressure, &reference.mold_pressure),
        peak(&measured.mold_pressure) - peak(&reference.mold_pressure),
        mean_diff(&measured.mold_temperature, &reference.mold_temperature),
        peak(&measured.mold_temperature) - peak(&reference.mold_temperature),
    ])
}

/// Network regulator: estimates the effective (hold pressure, melt
/// temperature) deviation behind a profile and steps against it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRegulator {
    pub network: Network,
    pub window: usize,
    pub gain: f64,
}

/// Proportional law on the pressure-profile integral error, split between
/// hold pressure and melt temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FallbackLaw {
    pub gain: f64,
    pub hold_share: f64,
    pub melt_share: f64,
    /// Hold-pressure change per bar of peak shortfall.
    pub hold_per_bar: f64,
    /// Melt-temperature change per bar of peak shortfall (applied negative).
    pub melt_per_bar: f64,
    pub window: usize,
}

impl Default for FallbackLaw {
    fn default() -> Self {
        FallbackLaw {
            gain: 0.8,
            hold_share: 0.8,
            melt_share: 0.2,
            hold_per_bar: 1.0 / 0.9,
            melt_per_bar: 60.0 / 80.0,
            window: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regulator {
    Trained(ProfileRegulator),
    Fallback(FallbackLaw),
}

impl Regulator {
    pub fn window(&self) -> usize {
        match self {
            Regulator::Trained(r) => r.window,
            Regulator::Fallback(f) => f.window,
        }
    }

    /// Requested (hold pressure, melt temperature) step.
    fn step(&self, measured: &AveragedTrace, reference: &AveragedTrace) -> Result<Vec<f64>> {
        match self {
            Regulator::Trained(r) => {
                let f = profile_features(measured, reference)?;
                let est = r.network.forward(&f)?;
                Ok(est.iter().map(|e| -r.gain * e).collect())
            }
            Regulator::Fallback(law) => {
                profile_features(measured, reference)?;
                let ref_sum: f64 = reference.mold_pressure.iter().sum();
                let err: f64 = reference.mold_pressure.iter().zip(&measured.mold_pressure).map(|(r, m)| r - m).sum();
                let ref_peak = reference.mold_pressure.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                // Integral error expressed as an equivalent peak shortfall.
                let shortfall = err / ref_sum * ref_peak;
                Ok(vec![
                    law.gain * law.hold_share * shortfall * law.hold_per_bar,
                    -law.gain * law.melt_share * shortfall * law.melt_per_bar,
                ])
            }
        }
    }
}

const REGULATED: [ParamKind; 2] = [ParamKind::HoldPressure, ParamKind::MeltTemp];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegulatorTraining {
    /// Training cycles with random set-point offsets.
    pub n_cycles: usize,
    pub hold_span: f64,
    pub melt_span: f64,
    pub window: usize,
    pub hidden: Vec<usize>,
    pub gain: f64,
    pub train: TrainConfig,
}

impl Default for RegulatorTraining {
    fn default() -> Self {
        RegulatorTraining {
            n_cycles: 40,
            hold_span: 40.0,
            melt_span: 25.0,
            window: 100,
            hidden: vec![6],
            gain: 0.8,
            train: TrainConfig {
                epochs: 4000,
                validation_fraction: 0.0,
                ..TrainConfig::default()
            },
        }
    }
}

/// Trains a regulator around `reference_params` from plant cycles run at
/// random hold-pressure and melt-temperature offsets.
pub fn train_regulator(
    plant: &Plant,
    reference_params: &ProcessParams,
    cfg: &RegulatorTraining,
    seeds: &SeedTree,
) -> Result<ProfileRegulator> {
    let reference = plant.run_cycle(0, reference_params, &DisturbanceState::NONE, seeds.seed(Stream::Plant, 0))?;
    let ref_avg = average_trace(&reference.trace, cfg.window)?;
    let mut data = Dataset::default();
    for i in 0..cfg.n_cycles {
        let mut rng = seeds.rng(Stream::Control, i as u64);
        let dh = rng.random_range(-cfg.hold_span..=cfg.hold_span);
        let dm = rng.random_range(-cfg.melt_span..=cfg.melt_span);
        let p = reference_params
            .with(ParamKind::HoldPressure, reference_params.hold_pressure + dh)?
            .with(ParamKind::MeltTemp, reference_params.melt_temp + dm)?;
        let rec = plant.run_cycle(i + 1, &p, &DisturbanceState::NONE, seeds.seed(Stream::Plant, i as u64 + 1))?;
        let f = profile_features(&average_trace(&rec.trace, cfg.window)?, &ref_avg)?;
        data.push(f, vec![dh, dm]);
    }
    let mut sizes = vec![4];
    sizes.extend_from_slice(&cfg.hidden);
    sizes.push(2);
    let init = Network::init(&Topology::feed_forward(&sizes), seeds.seed(Stream::Nnet, 0))?;
    let (network, _) = train(&init, &data, &cfg.train)?;
    Ok(ProfileRegulator {
        network,
        window: cfg.window,
        gain: cfg.gain,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegulationConfig {
    pub components: Vec<QualityComponent>,
    pub tolerances: Tolerances,
}

impl Default for RegulationConfig {
    fn default() -> Self {
        RegulationConfig {
            components: vec![QualityComponent::Mass],
            tolerances: Tolerances::default(),
        }
    }
}

/// Runs `n_cycles` with the regulator correcting hold pressure and melt
/// temperature after every cycle so the next profile tracks the reference.
/// Logged quality is the plant's ground truth.
#[allow(clippy::too_many_arguments)]
pub fn regulate_profile(
    plant: &Plant,
    reference: &CycleRecord,
    start: &ProcessParams,
    n_cycles: usize,
    disturbance: &DisturbanceProfile,
    regulator: &Regulator,
    cfg: &RegulationConfig,
    seeds: &SeedTree,
) -> Result<ControlLog> {
    let ref_avg = average_trace(&reference.trace, regulator.window())?;
    let target = reference.true_quality;
    let mut log = ControlLog::new(cfg.components.clone(), cfg.tolerances);
    let hook = |history: &[CycleRecord]| -> Result<Option<ProcessParams>> {
        let rec = history.last().expect("hook sees at least one cycle");
        let avg = average_trace(&rec.trace, regulator.window())?;
        let step = regulator.step(&avg, &ref_avg)?;
        let mut action = ControlAction::stepped(rec.cycle_index, rec.params, REGULATED.to_vec(), step, ActionTag::Regulation)?;
        action.cycle_index = rec.cycle_index;
        let errors = normalized_errors(&rec.true_quality, &target, &cfg.components, &cfg.tolerances);
        log.entries.push(LogEntry {
            cycle_index: rec.cycle_index,
            params: rec.params,
            measured: rec.true_quality,
            target,
            rms: rms(&errors),
            errors,
            action: action.clone(),
            warning: None,
        });
        Ok(Some(action.new))
    };
    plant.run_sequence(start, n_cycles, disturbance, |_| Ok(()), Some(hook), seeds)?;
    Ok(log)
}
