//! Latent-score predictor: a small rectified MLP with a scalar output,
//! trained on pairwise preferences.
//!
//! Parameters live in one flat vector. Layout is layer-major; within a layer
//! the weight matrix comes first (row-major, `outputs × inputs`), then the
//! bias. Stored gradient features depend on this order, so it must not change.

use std::collections::HashMap;
use std::ops::Range;

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::ArmResolver;
use crate::error::{Error, Result};
use crate::history::History;
use crate::kernel::{self, Layer, Workspace};
use crate::math::{log_sigmoid, sigmoid, stream_rng, streams};

pub const DEFAULT_WIDTHS: [usize; 2] = [32, 32];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub l2_lambda: f64,
    pub init_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            l2_lambda: 0.1,
            init_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(self.l2_lambda >= 0.0) {
            return Err(Error::Config("l2 lambda must be non-negative".into()));
        }
        Ok(())
    }
}

fn layout(d: usize, widths: &[usize]) -> (Vec<Layer>, usize) {
    let mut layers = Vec::with_capacity(widths.len() + 1);
    let mut offset = 0;
    let mut inputs = d;
    for &outputs in widths.iter().chain(std::iter::once(&1)) {
        layers.push(Layer {
            inputs,
            outputs,
            offset,
        });
        offset += inputs * outputs + outputs;
        inputs = outputs;
    }
    (layers, offset)
}

/// Number of parameters of a network with input dimension `d`.
pub fn param_count(d: usize, widths: &[usize]) -> usize {
    layout(d, widths).1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Checkpoint", into = "Checkpoint")]
pub struct ScoreNet {
    d: usize,
    widths: Vec<usize>,
    theta: Vec<f64>,
    layers: Vec<Layer>,
}

/// JSON checkpoint form: `{d, widths, theta}`.
#[derive(Serialize, Deserialize)]
struct Checkpoint {
    d: usize,
    widths: Vec<usize>,
    theta: Vec<f64>,
}

impl TryFrom<Checkpoint> for ScoreNet {
    type Error = Error;
    fn try_from(c: Checkpoint) -> Result<Self> {
        ScoreNet::from_parameters(c.d, c.widths, c.theta)
    }
}

impl From<ScoreNet> for Checkpoint {
    fn from(n: ScoreNet) -> Self {
        Checkpoint {
            d: n.d,
            widths: n.widths,
            theta: n.theta,
        }
    }
}

impl ScoreNet {
    /// Fresh network with the default hidden widths.
    pub fn init(d: usize, seed: u64) -> Result<Self> {
        Self::init_with_widths(d, &DEFAULT_WIDTHS, seed)
    }

    /// Weights uniform in ±1/√fan_in, biases zero.
    pub fn init_with_widths(d: usize, widths: &[usize], seed: u64) -> Result<Self> {
        let mut net = Self::zeros(d, widths)?;
        let mut rng = stream_rng(seed, &[streams::NET_INIT]);
        for layer in net.layers.clone() {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            for w in &mut net.theta[layer.weights()] {
                *w = rng.random_range(-bound..=bound);
            }
        }
        Ok(net)
    }

    pub fn zeros(d: usize, widths: &[usize]) -> Result<Self> {
        if d < 1 {
            return Err(Error::Config("input dimension must be at least 1".into()));
        }
        if widths.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        let (layers, p) = layout(d, widths);
        Ok(Self {
            d,
            widths: widths.to_vec(),
            theta: vec![0.0; p],
            layers,
        })
    }

    pub fn from_parameters(d: usize, widths: Vec<usize>, theta: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(d, &widths)?;
        if theta.len() != net.theta.len() {
            return Err(Error::LengthMismatch {
                expected: net.theta.len(),
                found: theta.len(),
            });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("parameters must be finite".into()));
        }
        net.theta = theta;
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.d
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn param_count(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    /// Parameter ranges `(weights, bias)` of every layer, input side first.
    pub fn layer_ranges(&self) -> Vec<(Range<usize>, Range<usize>)> {
        self.layers
            .iter()
            .map(|l| (l.weights(), l.bias()))
            .collect()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::InputDimension {
                expected: self.d,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Scores and workspace for `rows` row-major inputs.
    fn run_forward(&self, x: &[f64], rows: usize) -> Workspace {
        let mut ws = Workspace::new(&self.layers, rows);
        kernel::forward(&self.layers, &self.theta, x, &mut ws);
        ws
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.run_forward(x, 1).scores()[0])
    }

    /// Scores for every row of `x` (`n × d`).
    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.d {
            return Err(Error::InputDimension {
                expected: self.d,
                found: x.ncols(),
            });
        }
        let x = x.as_standard_layout();
        let ws = self.run_forward(x.as_slice().expect("standard layout"), x.nrows());
        Ok(Array1::from(ws.scores().to_vec()))
    }

    /// Gradient of the scalar output with respect to every parameter, in the
    /// flat layout. The rectifier derivative at exactly zero is taken as zero.
    pub fn param_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut ws = self.run_forward(x, 1);
        let mut grad = vec![0.0; self.theta.len()];
        kernel::backward(&self.layers, &self.theta, x, &[1.0], &mut ws, &mut grad);
        Ok(grad)
    }

    /// Parameter gradients for every row of `x`, as an `n × p` matrix.
    pub fn param_gradients(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let p = self.theta.len();
        let mut out = Array2::zeros((x.nrows(), p));
        for (i, row) in x.rows().into_iter().enumerate() {
            let g = self.param_gradient(row.as_standard_layout().as_slice().expect("row"))?;
            out.row_mut(i).assign(&Array1::from(g));
        }
        Ok(out)
    }

    fn l2(&self) -> f64 {
        self.theta.iter().map(|v| v * v).sum()
    }

    /// Preference loss over a batch plus `λ‖θ‖²`.
    pub fn batch_loss(&self, batch: &PairBatch, l2_lambda: f64) -> f64 {
        let mut loss = l2_lambda * self.l2();
        if !batch.pairs.is_empty() {
            let ws = self.run_forward(batch.row_slice(), batch.inputs.nrows());
            loss += pair_nll(ws.scores(), &batch.pairs);
        }
        loss
    }

    /// Loss and its gradient with respect to θ.
    pub fn loss_and_gradient(&self, batch: &PairBatch, l2_lambda: f64) -> (f64, Vec<f64>) {
        let mut ws = Workspace::new(&self.layers, batch.inputs.nrows());
        let mut grad = vec![0.0; self.theta.len()];
        let loss = self.loss_and_gradient_into(batch, l2_lambda, &mut ws, &mut grad);
        (loss, grad)
    }

    fn loss_and_gradient_into(
        &self,
        batch: &PairBatch,
        l2_lambda: f64,
        ws: &mut Workspace,
        grad: &mut [f64],
    ) -> f64 {
        let mut loss = l2_lambda * self.l2();
        if batch.pairs.is_empty() {
            grad.iter_mut().for_each(|g| *g = 0.0);
        } else {
            let x = batch.row_slice();
            kernel::forward(&self.layers, &self.theta, x, ws);
            let scores = ws.scores();
            loss += pair_nll(scores, &batch.pairs);
            let mut c = vec![0.0; scores.len()];
            for p in &batch.pairs {
                // d/dz of -[y ln σ(z) + (1-y) ln σ(-z)] is σ(z) - y.
                let s = sigmoid(scores[p.first] - scores[p.second]) - p.outcome;
                c[p.first] += s;
                c[p.second] -= s;
            }
            kernel::backward(&self.layers, &self.theta, x, &c, ws, grad);
        }
        for (g, t) in grad.iter_mut().zip(&self.theta) {
            *g += 2.0 * l2_lambda * t;
        }
        loss
    }

    /// Re-initializes from `config.init_seed` and runs `config.epochs`
    /// full-batch Adam steps on the batch.
    pub fn train(
        d: usize,
        widths: &[usize],
        batch: &PairBatch,
        config: &TrainConfig,
    ) -> Result<Self> {
        config.validate()?;
        let mut net = Self::init_with_widths(d, widths, config.init_seed)?;
        net.fit(batch, config)?;
        Ok(net)
    }

    /// Adam steps from the current parameters.
    pub fn fit(&mut self, batch: &PairBatch, config: &TrainConfig) -> Result<()> {
        if batch.inputs.ncols() != self.d && !batch.pairs.is_empty() {
            return Err(Error::InputDimension {
                expected: self.d,
                found: batch.inputs.ncols(),
            });
        }
        let p = self.theta.len();
        let mut m = vec![0.0; p];
        let mut v = vec![0.0; p];
        let (mut b1t, mut b2t) = (1.0, 1.0);
        let mut ws = Workspace::new(&self.layers, batch.inputs.nrows());
        let mut grad = vec![0.0; p];
        for epoch in 0..config.epochs {
            let loss = self.loss_and_gradient_into(batch, config.l2_lambda, &mut ws, &mut grad);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch });
            }
            b1t *= config.beta1;
            b2t *= config.beta2;
            let lr = config.learning_rate;
            for i in 0..p {
                m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * grad[i];
                v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * grad[i] * grad[i];
                let m_hat = m[i] / (1.0 - b1t);
                let v_hat = v[i] / (1.0 - b2t);
                self.theta[i] -= lr * m_hat / (v_hat.sqrt() + config.epsilon);
            }
        }
        Ok(())
    }
}

fn pair_nll(scores: &[f64], pairs: &[IndexedPair]) -> f64 {
    pairs
        .iter()
        .map(|p| {
            let z = scores[p.first] - scores[p.second];
            -(p.outcome * log_sigmoid(z) + (1.0 - p.outcome) * log_sigmoid(-z))
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexedPair {
    pub first: usize,
    pub second: usize,
    pub outcome: f64,
}

/// Training data in deduplicated form: each distinct arm appears once as a
/// row of `inputs`, and duels reference rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    pub inputs: Array2<f64>,
    pub pairs: Vec<IndexedPair>,
}

impl PairBatch {
    pub fn empty(d: usize) -> Self {
        Self {
            inputs: Array2::zeros((0, d)),
            pairs: Vec::new(),
        }
    }

    pub fn from_history<R: ArmResolver + ?Sized>(
        history: &History,
        resolver: &R,
        d: usize,
    ) -> Result<Self> {
        let mut rows: HashMap<(Option<&str>, usize), usize> = HashMap::new();
        let mut flat: Vec<f64> = Vec::new();
        let mut pairs = Vec::with_capacity(history.len());
        for rec in history.records() {
            let ctx = rec.context_id.as_deref();
            let domain = resolver.domain_for(ctx)?;
            if domain.dim() != d {
                return Err(Error::InputDimension {
                    expected: d,
                    found: domain.dim(),
                });
            }
            let mut row_of = |arm: usize| -> Result<usize> {
                if arm >= domain.len() {
                    return Err(Error::ArmOutOfRange {
                        iteration: rec.iteration,
                        index: arm,
                        size: domain.len(),
                    });
                }
                let next = rows.len();
                Ok(*rows.entry((ctx, arm)).or_insert_with(|| {
                    flat.extend_from_slice(domain.embedding(arm));
                    next
                }))
            };
            let first = row_of(rec.first)?;
            let second = row_of(rec.second)?;
            pairs.push(IndexedPair {
                first,
                second,
                outcome: f64::from(rec.outcome),
            });
        }
        let n = rows.len();
        Ok(Self {
            inputs: Array2::from_shape_vec((n, d), flat).expect("row-major rows"),
            pairs,
        })
    }

    /// Resamples duels with replacement; rows are shared.
    fn row_slice(&self) -> &[f64] {
        self.inputs.as_slice().expect("inputs are standard layout")
    }

    pub fn bootstrap<R: Rng>(&self, rng: &mut R) -> Self {
        let n = self.pairs.len();
        let pairs = (0..n).map(|_| self.pairs[rng.random_range(0..n)]).collect();
        Self {
            inputs: self.inputs.clone(),
            pairs,
        }
    }
}

/// Preference loss of `net` on a history, as a function of the history's
/// resolved embeddings.
pub fn preference_loss<R: ArmResolver + ?Sized>(
    net: &ScoreNet,
    history: &History,
    resolver: &R,
    l2_lambda: f64,
) -> Result<f64> {
    let batch = PairBatch::from_history(history, resolver, net.input_dim())?;
    Ok(net.batch_loss(&batch, l2_lambda))
}

/// Trains a fresh network on the full history.
pub fn train_on_history<R: ArmResolver + ?Sized>(
    d: usize,
    history: &History,
    resolver: &R,
    config: &TrainConfig,
) -> Result<ScoreNet> {
    let batch = PairBatch::from_history(history, resolver, d)?;
    ScoreNet::train(d, &DEFAULT_WIDTHS, &batch, config)
}
