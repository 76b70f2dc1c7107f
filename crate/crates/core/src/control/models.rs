use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Measurement;
use crate::error::{Error, Result};
use crate::nnet::{train, Dataset, Network, Topology, TrainConfig};
use crate::plant::{CycleRecord, DisturbanceState, ParamKind, PartQuality, Plant, ProcessParams, QualityComponent};
use crate::rng::{rng_from_seed, SeedTree, Stream};
use crate::stats::pearson;

pub const MIN_CYCLES: usize = 30;

/// Network shape and training settings for a quality model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub params: Vec<ParamKind>,
    pub quality: Vec<QualityComponent>,
    pub hidden: Vec<usize>,
    /// Fraction of cycles held out to report correlation.
    pub test_fraction: f64,
    pub train: TrainConfig,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            params: vec![ParamKind::HoldPressure, ParamKind::MeltTemp, ParamKind::InjectSpeed],
            quality: vec![QualityComponent::Mass, QualityComponent::Length],
            hidden: vec![8],
            test_fraction: 0.2,
            train: TrainConfig {
                epochs: 3000,
                ..TrainConfig::default()
            },
        }
    }
}

impl ModelSpec {
    /// Defaults for the inverse model: (mass, length) → (hold, melt).
    pub fn inverse() -> Self {
        ModelSpec {
            params: vec![ParamKind::HoldPressure, ParamKind::MeltTemp],
            ..ModelSpec::default()
        }
    }
}

/// Quality as the station saw it, falling back to ground truth.
fn observed(rec: &CycleRecord) -> &PartQuality {
    rec.measured_quality.as_ref().unwrap_or(&rec.true_quality)
}

fn check_varied(columns: &[Vec<f64>], names: &[&str]) -> Result<()> {
    for (col, name) in columns.iter().zip(names) {
        let first = col[0];
        if col.iter().all(|&v| v == first) {
            return Err(Error::Inference(format!("{name} is constant across the dataset")));
        }
    }
    Ok(())
}

fn transpose(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let w = rows.first().map_or(0, Vec::len);
    (0..w).map(|j| rows.iter().map(|r| r[j]).collect()).collect()
}

/// `(held_out, training)` cycle indices used when fitting with `spec`.
/// The held-out order is the shuffled one; training indices are sorted.
pub fn held_out_split(n: usize, spec: &ModelSpec) -> (Vec<usize>, Vec<usize>) {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng_from_seed(spec.train.seed ^ 0x7465_7374));
    let n_test = (n as f64 * spec.test_fraction).round() as usize;
    let mut train_idx = perm.split_off(n_test);
    train_idx.sort_unstable();
    (perm, train_idx)
}

struct Fitted {
    network: Network,
    correlation: Vec<f64>,
    n_train: usize,
    n_test: usize,
}

fn fit(xs: Vec<Vec<f64>>, ys: Vec<Vec<f64>>, spec: &ModelSpec) -> Result<Fitted> {
    if !(0.0..0.9).contains(&spec.test_fraction) {
        return Err(Error::range("test_fraction", spec.test_fraction, 0.0, 0.9));
    }
    let (test, train_idx) = held_out_split(xs.len(), spec);
    let test = test.as_slice();
    let data = Dataset::new(xs, ys)?;
    let mut sizes = vec![data.input_width()];
    sizes.extend_from_slice(&spec.hidden);
    sizes.push(data.target_width());
    let init = Network::init(&Topology::feed_forward(&sizes), spec.train.seed)?;
    let (network, _) = train(&init, &data.subset(&train_idx), &spec.train)?;
    let correlation = if test.len() >= 2 {
        let pred: Vec<Vec<f64>> = test
            .iter()
            .map(|&i| network.forward(&data.inputs[i]))
            .collect::<Result<_>>()?;
        (0..data.target_width())
            .map(|j| {
                let p: Vec<f64> = pred.iter().map(|r| r[j]).collect();
                let t: Vec<f64> = test.iter().map(|&i| data.targets[i][j]).collect();
                pearson(&p, &t)
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(Fitted {
        network,
        correlation,
        n_train: train_idx.len(),
        n_test: test.len(),
    })
}

fn check_count(cycles: &[CycleRecord]) -> Result<()> {
    if cycles.len() < MIN_CYCLES {
        return Err(Error::range("cycle count", cycles.len() as f64, MIN_CYCLES as f64, f64::INFINITY));
    }
    Ok(())
}

/// Parameters → quality predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardModel {
    pub network: Network,
    pub params: Vec<ParamKind>,
    pub quality: Vec<QualityComponent>,
    /// Pearson correlation on held-out cycles, one per quality output.
    pub held_out_correlation: Vec<f64>,
    pub n_train: usize,
    pub n_test: usize,
}

impl ForwardModel {
    pub fn predict(&self, params: &ProcessParams) -> Result<Vec<f64>> {
        let x: Vec<f64> = self.params.iter().map(|&k| params.get(k)).collect();
        self.network.forward(&x)
    }

    /// Predicted quality with unmodelled components taken from `base`.
    pub fn predict_quality(&self, params: &ProcessParams, base: &PartQuality) -> Result<PartQuality> {
        let y = self.predict(params)?;
        let mut q = *base;
        for (&c, v) in self.quality.iter().zip(y) {
            q.set(c, v);
        }
        Ok(q)
    }
}

pub fn fit_forward(cycles: &[CycleRecord], spec: &ModelSpec) -> Result<ForwardModel> {
    check_count(cycles)?;
    let xs: Vec<Vec<f64>> = cycles.iter().map(|r| spec.params.iter().map(|&k| r.params.get(k)).collect()).collect();
    let ys: Vec<Vec<f64>> = cycles
        .iter()
        .map(|r| spec.quality.iter().map(|&c| observed(r).get(c)).collect())
        .collect();
    let names: Vec<&str> = spec.params.iter().map(|k| k.name()).collect();
    check_varied(&transpose(&xs), &names)?;
    let f = fit(xs, ys, spec)?;
    Ok(ForwardModel {
        network: f.network,
        params: spec.params.clone(),
        quality: spec.quality.clone(),
        held_out_correlation: f.correlation,
        n_train: f.n_train,
        n_test: f.n_test,
    })
}

/// Quality → parameters model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseModel {
    pub network: Network,
    pub quality: Vec<QualityComponent>,
    pub params: Vec<ParamKind>,
    pub held_out_correlation: Vec<f64>,
    pub n_train: usize,
    pub n_test: usize,
}

impl InverseModel {
    /// Raw network output, one value per modelled parameter.
    pub fn infer(&self, q: &PartQuality) -> Result<Vec<f64>> {
        if !self.network.is_trained() {
            return Err(Error::State("inverse model has not been trained".into()));
        }
        let x: Vec<f64> = self.quality.iter().map(|&c| q.get(c)).collect();
        self.network.forward(&x)
    }

    /// Parameters implied by `q`, other parameters from `base`; the flag is
    /// set when the network asked for something outside machine ranges.
    pub fn infer_params(&self, q: &PartQuality, base: &ProcessParams) -> Result<(ProcessParams, bool)> {
        let y = self.infer(q)?;
        let mut p = *base;
        let mut clamped = false;
        for (&k, v) in self.params.iter().zip(y) {
            let c = k.clamp(v);
            clamped |= c != v;
            p.set(k, c);
        }
        Ok((p, clamped))
    }
}

pub fn fit_inverse(cycles: &[CycleRecord], spec: &ModelSpec) -> Result<InverseModel> {
    check_count(cycles)?;
    let xs: Vec<Vec<f64>> = cycles
        .iter()
        .map(|r| spec.quality.iter().map(|&c| observed(r).get(c)).collect())
        .collect();
    let ys: Vec<Vec<f64>> = cycles.iter().map(|r| spec.params.iter().map(|&k| r.params.get(k)).collect()).collect();
    let pnames: Vec<&str> = spec.params.iter().map(|k| k.name()).collect();
    check_varied(&transpose(&ys), &pnames)?;
    let qnames: Vec<&str> = spec.quality.iter().map(|c| c.name()).collect();
    check_varied(&transpose(&xs), &qnames)?;
    let f = fit(xs, ys, spec)?;
    Ok(InverseModel {
        network: f.network,
        quality: spec.quality.clone(),
        params: spec.params.clone(),
        held_out_correlation: f.correlation,
        n_train: f.n_train,
        n_test: f.n_test,
    })
}

/// `n` parameter sets drawn uniformly within `ranges`, others from `base`.
pub fn random_support(
    base: &ProcessParams,
    ranges: &[(ParamKind, f64, f64)],
    n: usize,
    seeds: &SeedTree,
) -> Result<Vec<ProcessParams>> {
    (0..n)
        .map(|i| {
            let mut rng = seeds.rng(Stream::Control, i as u64);
            let mut p = *base;
            for &(k, lo, hi) in ranges {
                p = p.with(k, rng.random_range(lo..=hi))?;
            }
            Ok(p)
        })
        .collect()
}

/// Runs every parameter set `replicates` times (cycle indices from
/// `first`) and measures each part when a station is given.
pub fn collect_cycles(
    plant: &Plant,
    measurement: Option<&Measurement>,
    params: &[ProcessParams],
    replicates: usize,
    first: usize,
    seeds: &SeedTree,
) -> Result<Vec<CycleRecord>> {
    let mut out = Vec::with_capacity(params.len() * replicates);
    let mut i = first;
    for _ in 0..replicates {
        for p in params {
            let rec = plant.run_cycle(i, p, &DisturbanceState::NONE, seeds.seed(Stream::Plant, i as u64))?;
            out.push(match measurement {
                Some(m) => m.measure(&rec, seeds.seed(Stream::Metrology, i as u64))?,
                None => rec,
            });
            i += 1;
        }
    }
    Ok(out)
}
