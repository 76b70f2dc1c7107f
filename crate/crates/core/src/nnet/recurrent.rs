use serde::{Deserialize, Serialize};

use super::network::{Network, Normalizer, Recurrence};
use super::train::{backward_step, optimize, output_error, split, Offsets, TrainConfig, TrainHistory, MIN_DATASET};
use crate::error::{Error, Result};

/// One training example for a Jordan-Elman network: conditioning inputs
/// feed the context, then the output step runs on `query` (or a null
/// input) and is compared to `target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JeSequence {
    pub conditioning: Vec<Vec<f64>>,
    pub query: Option<Vec<f64>>,
    pub target: Vec<f64>,
}

/// Caller-owned recurrent state.
#[derive(Debug, Clone, PartialEq)]
pub struct JeSession {
    pub context: Vec<f64>,
}

fn je_params(net: &Network) -> Result<(f64, f64)> {
    match net.topology.recurrence {
        Recurrence::JordanElman { context_decay, mix } => Ok((context_decay, mix)),
        other => Err(Error::Mode(format!("expected a Jordan-Elman network, found {other:?}"))),
    }
}

/// `c ← decay·c + [mix·h1 ; (1 − mix)·y]`, all in normalized space.
fn update_context(ctx: &mut [f64], h1: &[f64], y: &[f64], decay: f64, mix: f64) {
    let (ch, cy) = ctx.split_at_mut(h1.len());
    for (c, h) in ch.iter_mut().zip(h1) {
        *c = decay * *c + mix * h;
    }
    for (c, v) in cy.iter_mut().zip(y) {
        *c = decay * *c + (1.0 - mix) * v;
    }
}

impl Network {
    pub fn session(&self) -> Result<JeSession> {
        je_params(self)?;
        Ok(JeSession {
            context: vec![0.0; self.topology.context_len()],
        })
    }

    /// One recurrent step; `None` is the null external input.
    pub fn step(&self, session: &mut JeSession, input: Option<&[f64]>) -> Result<Vec<f64>> {
        let (decay, mix) = je_params(self)?;
        if session.context.len() != self.topology.context_len() {
            return Err(Error::Shape("session does not belong to this network".into()));
        }
        let x = match input {
            Some(x) if x.len() != self.n_inputs() => {
                return Err(Error::Shape(format!("input has {} values, network expects {}", x.len(), self.n_inputs())))
            }
            Some(x) => self.normalize_input(x),
            None => vec![0.0; self.n_inputs()],
        };
        let acts = self.forward_normalized(&x, Some(&session.context));
        let y = acts.last().expect("output");
        update_context(&mut session.context, &acts[1], y, decay, mix);
        Ok(self.denormalize_output(y))
    }

    /// Runs the two-phase procedure on a fresh session.
    pub fn je_predict(&self, conditioning: &[Vec<f64>], query: Option<&[f64]>) -> Result<Vec<f64>> {
        let mut s = self.session()?;
        for x in conditioning {
            self.step(&mut s, Some(x))?;
        }
        self.step(&mut s, query)
    }
}

/// Normalized copy of a sequence set.
struct Prepared {
    steps: Vec<Vec<Vec<f64>>>,
    targets: Vec<Vec<f64>>,
}

fn sequence_loss(net: &Network, data: &Prepared, idx: &[usize], grad: Option<&mut [f64]>, decay: f64, mix: f64) -> f64 {
    let scale = 1.0 / idx.len() as f64;
    let ctx_len = net.topology.context_len();
    let h1 = net.topology.layer_sizes[1];
    let off = Offsets::of(net);
    let mut grad = grad;
    let mut total = 0.0;
    for &i in idx {
        let steps = &data.steps[i];
        let mut contexts = Vec::with_capacity(steps.len());
        let mut traces = Vec::with_capacity(steps.len());
        let mut ctx = vec![0.0; ctx_len];
        for (s, x) in steps.iter().enumerate() {
            let acts = net.forward_normalized(x, Some(&ctx));
            contexts.push(ctx.clone());
            if s + 1 < steps.len() {
                update_context(&mut ctx, &acts[1], acts.last().expect("output"), decay, mix);
            }
            traces.push(acts);
        }
        let last = steps.len() - 1;
        let (l, dy) = output_error(traces[last].last().expect("output"), &data.targets[i], scale);
        total += l;
        let Some(g) = grad.as_deref_mut() else { continue };
        let mut dctx = backward_step(net, &traces[last], Some(&contexts[last]), &dy, None, g, &off)
            .expect("context gradient");
        for s in (0..last).rev() {
            // dctx is the gradient on the context produced by step s.
            let dh1: Vec<f64> = dctx[..h1].iter().map(|d| mix * d).collect();
            let dys: Vec<f64> = dctx[h1..].iter().map(|d| (1.0 - mix) * d).collect();
            let from_net = backward_step(net, &traces[s], Some(&contexts[s]), &dys, Some(&dh1), g, &off)
                .expect("context gradient");
            dctx = dctx.iter().zip(&from_net).map(|(d, f)| decay * d + f).collect();
        }
    }
    total * scale
}

/// Two-phase Jordan-Elman training with back-propagation through time.
pub fn je_train(net: &Network, sequences: &[JeSequence], cfg: &TrainConfig) -> Result<(Network, TrainHistory)> {
    let (decay, mix) = je_params(net)?;
    cfg.validate()?;
    if sequences.len() < MIN_DATASET {
        return Err(Error::range("sequence count", sequences.len() as f64, MIN_DATASET as f64, f64::INFINITY));
    }
    let (ni, no) = (net.n_inputs(), net.n_outputs());
    for s in sequences {
        let bad_width = s.conditioning.iter().chain(s.query.as_ref()).any(|x| x.len() != ni) || s.target.len() != no;
        if bad_width {
            return Err(Error::Shape("sequence width does not match the network".into()));
        }
        if s.conditioning.iter().chain(s.query.as_ref()).chain(std::iter::once(&s.target)).flatten().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFault("non-finite value in sequence"));
        }
    }
    let mut net = net.clone();
    if cfg.epochs == 0 {
        return Ok((net, TrainHistory::default()));
    }
    let (tr, val) = split(sequences.len(), cfg);
    let inorm = Normalizer::fit(
        tr.iter().flat_map(|&i| sequences[i].conditioning.iter().chain(sequences[i].query.as_ref()).map(Vec::as_slice)),
        ni,
    );
    let onorm = Normalizer::fit(tr.iter().map(|&i| sequences[i].target.as_slice()), no);
    let data = Prepared {
        steps: sequences
            .iter()
            .map(|s| {
                let mut v: Vec<Vec<f64>> = s.conditioning.iter().map(|x| inorm.normalize(x)).collect();
                v.push(s.query.as_ref().map_or_else(|| vec![0.0; ni], |q| inorm.normalize(q)));
                v
            })
            .collect(),
        targets: sequences.iter().map(|s| onorm.normalize(&s.target)).collect(),
    };
    net.input_norm = Some(inorm);
    net.output_norm = Some(onorm);
    let history = optimize(&mut net, &tr, &val, cfg, |n, idx, g| sequence_loss(n, &data, idx, g, decay, mix))?;
    Ok((net, history))
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;
    use crate::nnet::Topology;
    use crate::rng::rng_from_seed;

    #[test]
    fn bptt_matches_finite_differences() {
        let mut rng = rng_from_seed(41);
        for case in 0..30u64 {
            let decay = rng.random_range(0.0..0.9);
            let mut topo = Topology::jordan_elman(&[2, rng.random_range(1..=4), 3, 2], decay);
            if let Recurrence::JordanElman { mix, .. } = &mut topo.recurrence {
                *mix = rng.random_range(0.0..=1.0);
            }
            let (decay, mix) = match topo.recurrence {
                Recurrence::JordanElman { context_decay, mix } => (context_decay, mix),
                _ => unreachable!(),
            };
            let net = Network::init(&topo, case).unwrap();
            let data = Prepared {
                steps: (0..4)
                    .map(|i| (0..=i + 1).map(|_| vec![rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)]).collect())
                    .collect(),
                targets: (0..4).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect(),
            };
            let idx = [0, 1, 2, 3];
            let mut g = vec![0.0; net.n_params()];
            sequence_loss(&net, &data, &idx, Some(&mut g), decay, mix);
            let p = net.params();
            let mut probe = net.clone();
            let h = 1e-5;
            let fd: Vec<f64> = (0..p.len())
                .map(|k| {
                    let mut q = p.clone();
                    q[k] += h;
                    probe.set_params(&q);
                    let up = sequence_loss(&probe, &data, &idx, None, decay, mix);
                    q[k] -= 2.0 * h;
                    probe.set_params(&q);
                    let down = sequence_loss(&probe, &data, &idx, None, decay, mix);
                    (up - down) / (2.0 * h)
                })
                .collect();
            let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let dev = g.iter().zip(&fd).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(dev / scale < 1e-6, "case {case}: {}", dev / scale);
        }
    }
}
