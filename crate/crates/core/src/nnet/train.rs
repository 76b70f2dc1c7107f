use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::network::{Layer, Network, Normalizer};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Full batch below this many training samples.
pub const FULL_BATCH_LIMIT: usize = 500;
pub const MIN_DATASET: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub validation_fraction: f64,
    pub seed: u64,
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            momentum: 0.9,
            epochs: 2000,
            batch_size: 32,
            validation_fraction: 0.2,
            seed: 0,
            patience: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::range("learning_rate", self.learning_rate, 0.0, f64::INFINITY));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::range("momentum", self.momentum, 0.0, 1.0));
        }
        if !(0.0..=0.5).contains(&self.validation_fraction) {
            return Err(Error::range("validation_fraction", self.validation_fraction, 0.0, 0.5));
        }
        if self.batch_size == 0 {
            return Err(Error::range("batch_size", 0.0, 1.0, f64::INFINITY));
        }
        Ok(())
    }
}

/// Paired inputs and targets.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Result<Self> {
        let d = Dataset { inputs, targets };
        d.validate()?;
        Ok(d)
    }

    pub fn push(&mut self, input: Vec<f64>, target: Vec<f64>) {
        self.inputs.push(input);
        self.targets.push(target);
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_width(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn target_width(&self) -> usize {
        self.targets.first().map_or(0, Vec::len)
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            inputs: idx.iter().map(|&i| self.inputs[i].clone()).collect(),
            targets: idx.iter().map(|&i| self.targets[i].clone()).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.len() != self.targets.len() {
            return Err(Error::Shape(format!(
                "{} inputs but {} targets",
                self.inputs.len(),
                self.targets.len()
            )));
        }
        let (wi, wt) = (self.input_width(), self.target_width());
        for (x, t) in self.inputs.iter().zip(&self.targets) {
            if x.len() != wi || t.len() != wt {
                return Err(Error::Shape("ragged dataset rows".into()));
            }
            if x.iter().chain(t).any(|v| !v.is_finite()) {
                return Err(Error::NumericalFault("non-finite value in dataset"));
            }
        }
        Ok(())
    }

    fn check_against(&self, net: &Network) -> Result<()> {
        self.validate()?;
        if self.input_width() != net.n_inputs() || self.target_width() != net.n_outputs() {
            return Err(Error::Shape(format!(
                "dataset is {}→{}, network is {}",
                self.input_width(),
                self.target_width(),
                net.topology.describe()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_mse: f64,
    pub validation_mse: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    /// Epoch whose weights were returned.
    pub best_epoch: Option<usize>,
}

impl TrainHistory {
    pub fn final_train_mse(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_mse)
    }
}

/// Gradient with the same shapes as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
    pub context: Option<Layer>,
}

impl Gradients {
    pub fn from_flat(net: &Network, flat: &[f64]) -> Self {
        let mut shaped = net.clone();
        shaped.set_params(flat);
        Gradients {
            layers: shaped.layers,
            context: shaped.context_weights,
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        if let Some(c) = &self.context {
            out.extend_from_slice(&c.weights);
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.flatten().iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Offsets of each layer's weights and bias in the flat parameter vector.
pub(crate) struct Offsets {
    layers: Vec<(usize, usize)>,
    context: usize,
}

impl Offsets {
    pub(crate) fn of(net: &Network) -> Self {
        let mut k = 0;
        let layers = net
            .layers
            .iter()
            .map(|l| {
                let w = k;
                k += l.weights.len();
                let b = k;
                k += l.bias.len();
                (w, b)
            })
            .collect();
        Offsets { layers, context: k }
    }
}

/// Back-propagates `dy` (gradient at the linear output) through one step.
/// `dh1_extra` is an additional gradient on the first hidden activation.
/// Returns the gradient with respect to the context input, if any.
pub(crate) fn backward_step(
    net: &Network,
    acts: &[Vec<f64>],
    context: Option<&[f64]>,
    dy: &[f64],
    dh1_extra: Option<&[f64]>,
    grad: &mut [f64],
    off: &Offsets,
) -> Option<Vec<f64>> {
    let act = net.topology.activation;
    let mut delta = dy.to_vec();
    for l in (0..net.layers.len()).rev() {
        let layer = &net.layers[l];
        let (wo, bo) = off.layers[l];
        let a_in = &acts[l];
        for (r, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let row = &mut grad[wo + r * layer.cols..wo + (r + 1) * layer.cols];
            for (g, a) in row.iter_mut().zip(a_in) {
                *g += d * a;
            }
            grad[bo + r] += d;
        }
        if l == 0 {
            return match (&net.context_weights, context) {
                (Some(u), Some(c)) => {
                    for (r, &d) in delta.iter().enumerate() {
                        let row = &mut grad[off.context + r * u.cols..off.context + (r + 1) * u.cols];
                        for (g, cv) in row.iter_mut().zip(c) {
                            *g += d * cv;
                        }
                    }
                    Some(u.transpose_product(&delta))
                }
                _ => None,
            };
        }
        let mut dprev = layer.transpose_product(&delta);
        if l == 1 {
            if let Some(extra) = dh1_extra {
                dprev.iter_mut().zip(extra).for_each(|(d, e)| *d += e);
            }
        }
        delta = dprev
            .iter()
            .zip(&acts[l])
            .map(|(d, a)| d * act.derivative(*a))
            .collect();
    }
    None
}

/// Squared error averaged over outputs, and its gradient at the output.
#[inline]
pub(crate) fn output_error(y: &[f64], t: &[f64], scale: f64) -> (f64, Vec<f64>) {
    let n = y.len() as f64;
    let mut loss = 0.0;
    let dy = y
        .iter()
        .zip(t)
        .map(|(y, t)| {
            let e = y - t;
            loss += e * e;
            2.0 * e / n * scale
        })
        .collect();
    (loss / n, dy)
}

/// Feed-forward loss over normalized rows `idx`; accumulates the gradient
/// of the batch-mean loss when `grad` is given.
pub(crate) fn ff_loss(
    net: &Network,
    xs: &[Vec<f64>],
    ts: &[Vec<f64>],
    idx: &[usize],
    grad: Option<&mut [f64]>,
) -> f64 {
    let scale = 1.0 / idx.len() as f64;
    let mut total = 0.0;
    match grad {
        None => {
            for &i in idx {
                let acts = net.forward_normalized(&xs[i], None);
                total += output_error(acts.last().expect("output"), &ts[i], scale).0;
            }
        }
        Some(g) => {
            let off = Offsets::of(net);
            for &i in idx {
                let acts = net.forward_normalized(&xs[i], None);
                let (l, dy) = output_error(acts.last().expect("output"), &ts[i], scale);
                total += l;
                backward_step(net, &acts, None, &dy, None, g, &off);
            }
        }
    }
    total * scale
}

/// Gradient of the batch-mean squared error (outputs averaged) with
/// respect to every weight and bias, in the network's normalized space.
pub fn backprop_gradients(net: &Network, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<Gradients> {
    if inputs.is_empty() {
        return Err(Error::range("batch size", 0.0, 1.0, f64::INFINITY));
    }
    let ds = Dataset {
        inputs: inputs.to_vec(),
        targets: targets.to_vec(),
    };
    ds.check_against(net)?;
    let xs: Vec<Vec<f64>> = inputs.iter().map(|x| net.normalize_input(x)).collect();
    let ts: Vec<Vec<f64>> = targets.iter().map(|t| net.normalize_output(t)).collect();
    let idx: Vec<usize> = (0..xs.len()).collect();
    let mut g = vec![0.0; net.n_params()];
    ff_loss(net, &xs, &ts, &idx, Some(&mut g));
    Ok(Gradients::from_flat(net, &g))
}

/// Batch-mean squared error in normalized space, matching
/// [`backprop_gradients`].
pub fn batch_mse(net: &Network, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    let ds = Dataset {
        inputs: inputs.to_vec(),
        targets: targets.to_vec(),
    };
    ds.check_against(net)?;
    if ds.is_empty() {
        return Err(Error::range("batch size", 0.0, 1.0, f64::INFINITY));
    }
    let xs: Vec<Vec<f64>> = inputs.iter().map(|x| net.normalize_input(x)).collect();
    let ts: Vec<Vec<f64>> = targets.iter().map(|t| net.normalize_output(t)).collect();
    let idx: Vec<usize> = (0..xs.len()).collect();
    Ok(ff_loss(net, &xs, &ts, &idx, None))
}

/// Seeded train/validation split: `(train, validation)` index lists.
pub(crate) fn split(n: usize, cfg: &TrainConfig) -> (Vec<usize>, Vec<usize>) {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng_from_seed(cfg.seed));
    let n_val = (n as f64 * cfg.validation_fraction).floor() as usize;
    let val = perm[..n_val].to_vec();
    let mut train = perm[n_val..].to_vec();
    train.sort_unstable();
    (train, val)
}

/// Gradient descent with momentum over a generic objective. `eval`
/// returns the mean loss over the given rows and accumulates its gradient.
pub(crate) fn optimize<F>(
    net: &mut Network,
    train: &[usize],
    val: &[usize],
    cfg: &TrainConfig,
    mut eval: F,
) -> Result<TrainHistory>
where
    F: FnMut(&Network, &[usize], Option<&mut [f64]>) -> f64,
{
    let mut history = TrainHistory::default();
    if cfg.epochs == 0 {
        return Ok(history);
    }
    let mut rng = rng_from_seed(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut params = net.params();
    let mut velocity = vec![0.0; params.len()];
    let mut grad = vec![0.0; params.len()];
    let mut best = (f64::INFINITY, params.clone(), None);
    let mut stale = 0usize;
    let mut order = train.to_vec();
    for epoch in 0..cfg.epochs {
        let batches: Vec<Vec<usize>> = if order.len() < FULL_BATCH_LIMIT {
            vec![order.clone()]
        } else {
            order.shuffle(&mut rng);
            order.chunks(cfg.batch_size).map(<[usize]>::to_vec).collect()
        };
        for batch in &batches {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let loss = eval(net, batch, Some(&mut grad));
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { epoch });
            }
            for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = cfg.momentum * *v - cfg.learning_rate * g;
                *p += *v;
            }
            net.set_params(&params);
        }
        let train_mse = eval(net, train, None);
        let validation_mse = (!val.is_empty()).then(|| eval(net, val, None));
        let score = validation_mse.unwrap_or(train_mse);
        if !score.is_finite() || !train_mse.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        history.epochs.push(EpochStats {
            epoch,
            train_mse,
            validation_mse,
        });
        if score < best.0 {
            best = (score, params.clone(), Some(epoch));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    net.set_params(&best.1);
    history.best_epoch = best.2;
    Ok(history)
}

/// Trains a feed-forward (or NARX core) network. Normalization is fitted
/// on the training split only.
pub fn train(net: &Network, data: &Dataset, cfg: &TrainConfig) -> Result<(Network, TrainHistory)> {
    cfg.validate()?;
    data.check_against(net)?;
    if data.len() < MIN_DATASET {
        return Err(Error::range("dataset size", data.len() as f64, MIN_DATASET as f64, f64::INFINITY));
    }
    let mut net = net.clone();
    if cfg.epochs == 0 {
        return Ok((net, TrainHistory::default()));
    }
    let (tr, val) = split(data.len(), cfg);
    let inorm = Normalizer::fit(tr.iter().map(|&i| data.inputs[i].as_slice()), net.n_inputs());
    let onorm = Normalizer::fit(tr.iter().map(|&i| data.targets[i].as_slice()), net.n_outputs());
    let xs: Vec<Vec<f64>> = data.inputs.iter().map(|x| inorm.normalize(x)).collect();
    let ts: Vec<Vec<f64>> = data.targets.iter().map(|t| onorm.normalize(t)).collect();
    net.input_norm = Some(inorm);
    net.output_norm = Some(onorm);
    let history = optimize(&mut net, &tr, &val, cfg, |n, idx, g| ff_loss(n, &xs, &ts, idx, g))?;
    Ok((net, history))
}
