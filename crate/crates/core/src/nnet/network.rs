use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Hidden-layer activation. Output layers are always linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Logistic,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Logistic => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative expressed through the activation value.
    #[inline]
    pub fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Logistic => a * (1.0 - a),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Recurrence {
    #[default]
    None,
    /// One context layer fed by the first hidden layer (Elman part, weight
    /// `mix`) and by the output (Jordan part, weight `1 - mix`).
    JordanElman { context_decay: f64, mix: f64 },
    /// Tapped delay lines on the exogenous inputs and past outputs.
    Narx { input_lags: usize, output_lags: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub layer_sizes: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub recurrence: Recurrence,
}

impl Topology {
    pub fn feed_forward(layer_sizes: &[usize]) -> Self {
        Topology {
            layer_sizes: layer_sizes.to_vec(),
            activation: Activation::Tanh,
            recurrence: Recurrence::None,
        }
    }

    pub fn jordan_elman(layer_sizes: &[usize], context_decay: f64) -> Self {
        Topology {
            layer_sizes: layer_sizes.to_vec(),
            activation: Activation::Tanh,
            recurrence: Recurrence::JordanElman { context_decay, mix: 0.5 },
        }
    }

    pub fn narx(layer_sizes: &[usize], input_lags: usize, output_lags: usize) -> Self {
        Topology {
            layer_sizes: layer_sizes.to_vec(),
            activation: Activation::Tanh,
            recurrence: Recurrence::Narx { input_lags, output_lags },
        }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn n_inputs(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.layer_sizes.last().expect("validated topology")
    }

    /// Length of the Jordan-Elman context vector (0 otherwise).
    pub fn context_len(&self) -> usize {
        match self.recurrence {
            Recurrence::JordanElman { .. } => self.layer_sizes[1] + self.n_outputs(),
            _ => 0,
        }
    }

    /// Number of exogenous signals of a NARX topology.
    pub fn narx_exogenous(&self) -> Option<usize> {
        match self.recurrence {
            Recurrence::Narx { input_lags, output_lags } => {
                let from_outputs = self.n_outputs() * output_lags;
                let rest = self.n_inputs().checked_sub(from_outputs)?;
                (rest > 0 && rest % input_lags == 0).then_some(rest / input_lags)
            }
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::Shape("a topology needs at least an input and an output layer".into()));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::Shape(format!("zero-width layer in {:?}", self.layer_sizes)));
        }
        match self.recurrence {
            Recurrence::None => Ok(()),
            Recurrence::JordanElman { context_decay, mix } => {
                if !(0.0..1.0).contains(&context_decay) {
                    return Err(Error::Shape(format!("context_decay {context_decay} not in [0, 1)")));
                }
                if !(0.0..=1.0).contains(&mix) {
                    return Err(Error::Shape(format!("context mix {mix} not in [0, 1]")));
                }
                if self.layer_sizes.len() < 3 {
                    return Err(Error::Shape("a Jordan-Elman network needs a hidden layer".into()));
                }
                Ok(())
            }
            Recurrence::Narx { input_lags, output_lags } => {
                if input_lags < 1 || output_lags < 1 {
                    return Err(Error::Shape("NARX lags must be at least 1".into()));
                }
                if self.narx_exogenous().is_none() {
                    return Err(Error::Shape(format!(
                        "input width {} is not n_exo * {input_lags} + {} * {output_lags}",
                        self.n_inputs(),
                        self.n_outputs()
                    )));
                }
                Ok(())
            }
        }
    }

    /// Human-readable form such as `4-6-6-2`.
    pub fn describe(&self) -> String {
        self.layer_sizes
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join("-")
    }
}

/// Dense affine layer, weights stored row-major as `rows × cols`
/// (outputs × inputs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Layer {
            rows,
            cols,
            weights: vec![0.0; rows * cols],
            bias: vec![0.0; rows],
        }
    }

    #[inline]
    pub fn w(&self, r: usize, c: usize) -> f64 {
        self.weights[r * self.cols + c]
    }

    /// `W x + b`
    pub fn affine(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        self.weights
            .chunks_exact(self.cols)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect()
    }

    /// `W x` without bias, added into `out`.
    pub fn add_product(&self, x: &[f64], out: &mut [f64]) {
        for (row, o) in self.weights.chunks_exact(self.cols).zip(out.iter_mut()) {
            *o += row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
        }
    }

    /// `Wᵀ d`
    pub fn transpose_product(&self, d: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (row, &di) in self.weights.chunks_exact(self.cols).zip(d) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * di;
            }
        }
        out
    }
}

/// Per-feature affine normalization `(x − mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalizer {
    pub fn identity(n: usize) -> Self {
        Normalizer {
            mean: vec![0.0; n],
            scale: vec![1.0; n],
        }
    }

    /// Z-score statistics; features with (near) zero spread keep scale 1.
    pub fn fit<'a, I>(rows: I, n: usize) -> Self
    where
        I: IntoIterator<Item = &'a [f64]> + Clone,
    {
        let mut mean = vec![0.0; n];
        let mut count = 0usize;
        for r in rows.clone() {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x;
            }
            count += 1;
        }
        let count = count.max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= count);
        let mut var = vec![0.0; n];
        for r in rows {
            for ((v, x), m) in var.iter_mut().zip(r).zip(&mean) {
                *v += (x - m).powi(2);
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let s = (v / count).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Normalizer { mean, scale }
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    pub fn denormalize(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(y, (m, s))| y * s + m)
            .collect()
    }
}

/// Layered network with optional recurrent structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub topology: Topology,
    pub layers: Vec<Layer>,
    /// Context-to-first-hidden weights, Jordan-Elman only (no bias).
    pub context_weights: Option<Layer>,
    /// Present once the network has been trained.
    pub input_norm: Option<Normalizer>,
    pub output_norm: Option<Normalizer>,
}

impl Network {
    /// Weights uniform in ±1/√fan_in, deterministic per seed.
    pub fn init(topology: &Topology, seed: u64) -> Result<Self> {
        topology.validate()?;
        let mut rng = rng_from_seed(seed);
        let mut draw_layer = |rows: usize, cols: usize, with_bias: bool| {
            let bound = 1.0 / (cols as f64).sqrt();
            let mut l = Layer::zeros(rows, cols);
            for w in l.weights.iter_mut() {
                *w = rng.random_range(-bound..=bound);
            }
            if with_bias {
                for b in l.bias.iter_mut() {
                    *b = rng.random_range(-bound..=bound);
                }
            } else {
                l.bias.clear();
            }
            l
        };
        let layers = topology
            .layer_sizes
            .windows(2)
            .map(|w| draw_layer(w[1], w[0], true))
            .collect();
        // Drawn after the feed-forward weights so the two share a prefix.
        let context_weights = match topology.recurrence {
            Recurrence::JordanElman { .. } => Some(draw_layer(topology.layer_sizes[1], topology.context_len(), false)),
            _ => None,
        };
        Ok(Network {
            topology: topology.clone(),
            layers,
            context_weights,
            input_norm: None,
            output_norm: None,
        })
    }

    /// Every weight and bias set to zero.
    pub fn zeroed(topology: &Topology) -> Result<Self> {
        let mut n = Network::init(topology, 0)?;
        n.set_params(&vec![0.0; n.n_params()]);
        Ok(n)
    }

    pub fn is_trained(&self) -> bool {
        self.input_norm.is_some() && self.output_norm.is_some()
    }

    pub fn n_inputs(&self) -> usize {
        self.topology.n_inputs()
    }

    pub fn n_outputs(&self) -> usize {
        self.topology.n_outputs()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum::<usize>()
            + self.context_weights.as_ref().map_or(0, |c| c.weights.len())
    }

    /// Flattened parameters: per layer weights then bias, context weights last.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        if let Some(c) = &self.context_weights {
            out.extend_from_slice(&c.weights);
        }
        out
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.n_params(), "parameter vector length");
        let mut k = 0;
        for l in self.layers.iter_mut() {
            let n = l.weights.len();
            l.weights.copy_from_slice(&p[k..k + n]);
            k += n;
            let n = l.bias.len();
            l.bias.copy_from_slice(&p[k..k + n]);
            k += n;
        }
        if let Some(c) = self.context_weights.as_mut() {
            let n = c.weights.len();
            c.weights.copy_from_slice(&p[k..k + n]);
        }
    }

    pub(crate) fn normalize_input(&self, x: &[f64]) -> Vec<f64> {
        match &self.input_norm {
            Some(n) => n.normalize(x),
            None => x.to_vec(),
        }
    }

    pub(crate) fn normalize_output(&self, y: &[f64]) -> Vec<f64> {
        match &self.output_norm {
            Some(n) => n.normalize(y),
            None => y.to_vec(),
        }
    }

    pub(crate) fn denormalize_output(&self, y: &[f64]) -> Vec<f64> {
        match &self.output_norm {
            Some(n) => n.denormalize(y),
            None => y.to_vec(),
        }
    }

    /// Forward pass in normalized space. `context` feeds the first hidden
    /// layer of a Jordan-Elman network.
    pub(crate) fn forward_normalized(&self, x: &[f64], context: Option<&[f64]>) -> Vec<Vec<f64>> {
        let act = self.topology.activation;
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.affine(acts.last().expect("non-empty"));
            if i == 0 {
                if let (Some(u), Some(c)) = (&self.context_weights, context) {
                    u.add_product(c, &mut z);
                }
            }
            if i < last {
                z.iter_mut().for_each(|v| *v = act.apply(*v));
            }
            acts.push(z);
        }
        acts
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.n_inputs() {
            return Err(Error::Shape(format!(
                "input has {} values, network expects {}",
                input.len(),
                self.n_inputs()
            )));
        }
        Ok(())
    }

    /// Pure inference. Recurrent networks run with a zero context; use a
    /// [`super::JeSession`] to carry state between steps.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let x = self.normalize_input(input);
        let ctx = self.context_weights.as_ref().map(|_| vec![0.0; self.topology.context_len()]);
        let mut acts = self.forward_normalized(&x, ctx.as_deref());
        let y = acts.pop().expect("output layer");
        Ok(self.denormalize_output(&y))
    }
}
