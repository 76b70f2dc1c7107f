//! One-step prediction of averaged mold-pressure profiles with a
//! Jordan-Elman network.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::ProfileConfig;
use crate::error::{Error, Result};
use crate::metrology::average_trace;
use crate::nnet::{je_train, JeSequence, Network, Topology};
use crate::plant::{DisturbanceState, ParamKind, Plant, ProcessParams};
use crate::rng::{SeedTree, Stream};

/// Sliding windows over each profile: `history` conditioning points, null
/// query, the next point as target.
pub fn profile_sequences(profiles: &[Vec<f64>], history: usize) -> Result<Vec<JeSequence>> {
    if history < 1 {
        return Err(Error::range("history", 0.0, 1.0, f64::INFINITY));
    }
    let mut out = Vec::new();
    for p in profiles {
        for t in history..p.len() {
            out.push(JeSequence {
                conditioning: p[t - history..t].iter().map(|&x| vec![x]).collect(),
                query: None,
                target: vec![p[t]],
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePrediction {
    pub cycle: usize,
    pub step: usize,
    pub target: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileResult {
    pub points_per_profile: usize,
    pub train_sequences: usize,
    pub held_out_sequences: usize,
    pub rmse: f64,
    pub target_std: f64,
    /// RMSE over the standard deviation of the held-out targets.
    pub nrmse: f64,
    pub epochs_run: usize,
}

/// Root-mean-square error over the population standard deviation of the
/// targets.
pub fn nrmse(predictions: &[ProfilePrediction]) -> (f64, f64, f64) {
    let n = predictions.len() as f64;
    let rmse = (predictions.iter().map(|p| (p.predicted - p.target).powi(2)).sum::<f64>() / n).sqrt();
    let mean = predictions.iter().map(|p| p.target).sum::<f64>() / n;
    let sd = (predictions.iter().map(|p| (p.target - mean).powi(2)).sum::<f64>() / n).sqrt();
    (rmse, sd, rmse / sd)
}

/// Plant profiles at random hold pressure and melt temperature, averaged.
pub fn collect_profiles(plant: &Plant, n: usize, window: usize, seeds: &SeedTree) -> Result<Vec<Vec<f64>>> {
    (0..n)
        .map(|i| {
            let mut rng = seeds.rng(Stream::Control, i as u64);
            let p = ProcessParams::NOMINAL
                .with(ParamKind::HoldPressure, rng.random_range(340.0..460.0))?
                .with(ParamKind::MeltTemp, rng.random_range(215.0..245.0))?;
            let r = plant.run_cycle(i, &p, &DisturbanceState::NONE, seeds.seed(Stream::Plant, i as u64))?;
            Ok(average_trace(&r.trace, window)?.mold_pressure)
        })
        .collect()
}

/// Trains on the first `cfg.train_cycles` profiles and predicts every
/// held-out step.
pub fn fit_profile_model(
    profiles: &[Vec<f64>],
    cfg: &ProfileConfig,
    seeds: &SeedTree,
) -> Result<(Network, ProfileResult, Vec<ProfilePrediction>)> {
    if cfg.train_cycles == 0 || cfg.train_cycles >= profiles.len() {
        return Err(Error::range(
            "train_cycles",
            cfg.train_cycles as f64,
            1.0,
            profiles.len() as f64 - 1.0,
        ));
    }
    let (train_p, test_p) = profiles.split_at(cfg.train_cycles);
    let train_s = profile_sequences(train_p, cfg.history)?;
    let topo = Topology::jordan_elman(&[1, cfg.hidden, 1], cfg.context_decay);
    let init = Network::init(&topo, seeds.seed(Stream::Nnet, 0))?;
    let mut tc = cfg.train.clone();
    tc.seed = seeds.seed(Stream::Nnet, 1);
    let (net, history) = je_train(&init, &train_s, &tc)?;

    let mut predictions = Vec::new();
    for (k, p) in test_p.iter().enumerate() {
        for t in cfg.history..p.len() {
            let cond: Vec<Vec<f64>> = p[t - cfg.history..t].iter().map(|&x| vec![x]).collect();
            predictions.push(ProfilePrediction {
                cycle: cfg.train_cycles + k,
                step: t,
                target: p[t],
                predicted: net.je_predict(&cond, None)?[0],
            });
        }
    }
    if predictions.is_empty() {
        return Err(Error::Shape(format!("profiles shorter than history {}", cfg.history)));
    }
    let (rmse, target_std, nrmse) = nrmse(&predictions);
    let result = ProfileResult {
        points_per_profile: profiles[0].len(),
        train_sequences: train_s.len(),
        held_out_sequences: predictions.len(),
        rmse,
        target_std,
        nrmse,
        epochs_run: history.epochs.len(),
    };
    Ok((net, result, predictions))
}
