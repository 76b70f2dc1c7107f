use serde::{Deserialize, Serialize};

use super::network::{Activation, Network, Topology};
use super::train::{ff_loss, optimize, split, train, Dataset, TrainConfig};
use crate::error::{Error, Result};
use crate::stats::f_sf;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub train: TrainConfig,
    /// Consecutive validation-MSE increases that stop the growth phase.
    pub patience: usize,
    /// Significance level of the per-unit Fisher test.
    pub alpha: f64,
    pub activation: Activation,
    /// Epochs used to refit a network after a unit is removed.
    pub refit_epochs: usize,
    /// Also train 2- and 3-hidden-layer variants for the report.
    pub compare_depth: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            train: TrainConfig::default(),
            patience: 2,
            alpha: 0.05,
            activation: Activation::Tanh,
            refit_epochs: 300,
            compare_depth: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeResult {
    pub hidden: usize,
    pub train_mse: f64,
    pub validation_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitTest {
    pub unit: usize,
    pub rss_without: f64,
    pub f: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneRound {
    pub hidden: usize,
    pub rss_full: f64,
    pub tests: Vec<UnitTest>,
    /// Unit removed in this round, if any was non-significant.
    pub pruned: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthResult {
    pub topology: String,
    pub validation_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub sizes: Vec<SizeResult>,
    pub selected_hidden: usize,
    pub rounds: Vec<PruneRound>,
    pub final_hidden: usize,
    pub depth_comparison: Vec<DepthResult>,
    pub network: Network,
}

fn best_validation(h: &super::train::TrainHistory) -> (f64, f64) {
    let best = h.best_epoch.and_then(|b| h.epochs.iter().find(|e| e.epoch == b));
    best.map_or((f64::NAN, f64::NAN), |e| (e.train_mse, e.validation_mse.unwrap_or(e.train_mse)))
}

/// Drops hidden unit `u` of a single-hidden-layer network, folding its mean
/// activation into the output bias.
fn remove_unit(net: &Network, u: usize, mean_act: f64) -> Network {
    let mut out = net.clone();
    let (l0, l1) = (&net.layers[0], &net.layers[1]);
    let h = l0.rows;
    let mut topo = net.topology.clone();
    topo.layer_sizes[1] = h - 1;
    out.topology = topo;
    let keep: Vec<usize> = (0..h).filter(|&i| i != u).collect();
    let n0 = &mut out.layers[0];
    n0.rows = h - 1;
    n0.weights = keep.iter().flat_map(|&i| l0.weights[i * l0.cols..(i + 1) * l0.cols].to_vec()).collect();
    n0.bias = keep.iter().map(|&i| l0.bias[i]).collect();
    let n1 = &mut out.layers[1];
    n1.cols = h - 1;
    n1.weights = (0..l1.rows)
        .flat_map(|r| keep.iter().map(move |&i| l1.w(r, i)))
        .collect();
    for (r, b) in n1.bias.iter_mut().enumerate() {
        *b += l1.w(r, u) * mean_act;
    }
    out
}

/// Grows a single hidden layer until validation error rises for
/// `patience` consecutive sizes, keeps the size with the lowest validation
/// error, then removes hidden units that fail a Fisher test one at a time.
pub fn topology_search(data: &Dataset, max_hidden: usize, cfg: &SearchConfig) -> Result<(Topology, SearchReport)> {
    if max_hidden < 1 {
        return Err(Error::range("max_hidden_per_layer", max_hidden as f64, 1.0, f64::INFINITY));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::range("alpha", cfg.alpha, 0.0, 1.0));
    }
    cfg.train.validate()?;
    data.validate()?;
    let (tr, val) = split(data.len(), &cfg.train);
    if val.is_empty() || tr.len() < 2 {
        return Err(Error::Invalid("dataset cannot be split into training and validation sets".into()));
    }
    let (ni, no) = (data.input_width(), data.target_width());
    let topo_for = |hidden: &[usize]| {
        let mut sizes = vec![ni];
        sizes.extend_from_slice(hidden);
        sizes.push(no);
        Topology::feed_forward(&sizes).with_activation(cfg.activation)
    };
    let fit = |hidden: &[usize]| -> Result<(Network, f64, f64)> {
        let topo = topo_for(hidden);
        let init = Network::init(&topo, cfg.train.seed.wrapping_add(hidden.iter().sum::<usize>() as u64))?;
        let (net, hist) = train(&init, data, &cfg.train)?;
        let (t, v) = best_validation(&hist);
        Ok((net, t, v))
    };

    // Growth.
    let mut sizes = Vec::new();
    let mut nets = Vec::new();
    let mut rises = 0;
    for h in 1..=max_hidden {
        let (net, t, v) = fit(&[h])?;
        if let Some(prev) = sizes.last().map(|s: &SizeResult| s.validation_mse) {
            rises = if v > prev { rises + 1 } else { 0 };
        }
        sizes.push(SizeResult {
            hidden: h,
            train_mse: t,
            validation_mse: v,
        });
        nets.push(net);
        if rises >= cfg.patience.max(1) {
            break;
        }
    }
    let best = sizes
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.validation_mse.total_cmp(&b.1.validation_mse))
        .map(|(i, _)| i)
        .expect("at least one size");
    let selected_hidden = sizes[best].hidden;
    let mut net = nets.swap_remove(best);

    // Fisher pruning on the training split, in normalized space.
    let inorm = net.input_norm.clone().expect("trained");
    let onorm = net.output_norm.clone().expect("trained");
    let xs: Vec<Vec<f64>> = data.inputs.iter().map(|x| inorm.normalize(x)).collect();
    let ts: Vec<Vec<f64>> = data.targets.iter().map(|t| onorm.normalize(t)).collect();
    let n_obs = (tr.len() * no) as f64;
    let rss = |n: &Network| ff_loss(n, &xs, &ts, &tr, None) * n_obs;
    let refit_cfg = TrainConfig {
        epochs: cfg.refit_epochs,
        ..cfg.train.clone()
    };
    let q = (ni + 1 + no) as f64;
    let mut rounds = Vec::new();
    while net.topology.layer_sizes[1] > 1 {
        let h = net.topology.layer_sizes[1];
        let rss_full = rss(&net);
        let df2 = n_obs - net.n_params() as f64;
        if df2 < 1.0 {
            return Err(Error::Inference(format!(
                "{} training observations cannot support a Fisher test on {} parameters",
                n_obs,
                net.n_params()
            )));
        }
        let mut means = vec![0.0; h];
        for &i in &tr {
            let acts = net.forward_normalized(&xs[i], None);
            means.iter_mut().zip(&acts[1]).for_each(|(m, a)| *m += a / tr.len() as f64);
        }
        let mut tests = Vec::with_capacity(h);
        let mut candidates = Vec::with_capacity(h);
        for (u, &m) in means.iter().enumerate() {
            let mut reduced = remove_unit(&net, u, m);
            optimize(&mut reduced, &tr, &[], &refit_cfg, |n, idx, g| ff_loss(n, &xs, &ts, idx, g))?;
            let rss_without = rss(&reduced);
            let f = ((rss_without - rss_full) / q).max(0.0) / (rss_full / df2);
            let p_value = if f.is_finite() { f_sf(f, q, df2) } else { 0.0 };
            tests.push(UnitTest {
                unit: u,
                rss_without,
                f,
                p_value,
            });
            candidates.push(reduced);
        }
        let weakest = tests
            .iter()
            .max_by(|a, b| a.p_value.total_cmp(&b.p_value))
            .map(|t| t.unit)
            .expect("h > 1");
        let prune = tests[weakest].p_value >= cfg.alpha;
        rounds.push(PruneRound {
            hidden: h,
            rss_full,
            tests,
            pruned: prune.then_some(weakest),
        });
        if !prune {
            break;
        }
        net = candidates.swap_remove(weakest);
    }
    let final_hidden = net.topology.layer_sizes[1];

    let mut depth_comparison = Vec::new();
    if cfg.compare_depth {
        for depth in 1..=3 {
            let hidden = vec![final_hidden; depth];
            let (_, _, v) = fit(&hidden)?;
            depth_comparison.push(DepthResult {
                topology: topo_for(&hidden).describe(),
                validation_mse: v,
            });
        }
    }
    let topology = net.topology.clone();
    Ok((
        topology,
        SearchReport {
            sizes,
            selected_hidden,
            rounds,
            final_hidden,
            depth_comparison,
            network: net,
        },
    ))
}
