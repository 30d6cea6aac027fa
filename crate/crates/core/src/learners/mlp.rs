//! Feed-forward regression network (default 20 x 20 hidden units).
//!
//! Inputs and target are z-scored with statistics stored in the model.
//! Hidden layers use tanh or sigmoid, the output is linear, and training
//! minimises mean squared error by mini-batch gradient descent (Adam or
//! momentum SGD). Parameters live in one flat vector: for each layer the
//! `out x in` weight matrix row-major, then the `out` biases.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_arity, LearnError, Matrix};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => super::sigmoid(z),
        }
    }

    /// Derivative expressed through the activation output `a`.
    #[inline]
    fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Optimizer {
    Sgd { momentum: f64 },
    Adam { beta1: f64, beta2: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: vec![20, 20],
            activation: Activation::Tanh,
            epochs: 200,
            learning_rate: 1e-3,
            batch_size: 32,
            optimizer: Optimizer::Adam { beta1: 0.9, beta2: 0.999 },
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub params: Vec<f64>,
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub target_mean: f64,
    pub target_scale: f64,
    pub config: MlpConfig,
    /// Mean squared error (standardised target) after each epoch.
    pub loss_history: Vec<f64>,
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl MlpModel {
    /// Network with all parameters zero and identity scaling.
    pub fn zeros(n_inputs: usize, config: &MlpConfig) -> Self {
        let mut sizes = vec![n_inputs];
        sizes.extend(&config.hidden);
        sizes.push(1);
        MlpModel {
            params: vec![0.0; param_count(&sizes)],
            layer_sizes: sizes,
            activation: config.activation,
            input_mean: vec![0.0; n_inputs],
            input_scale: vec![1.0; n_inputs],
            target_mean: 0.0,
            target_scale: 1.0,
            config: config.clone(),
            loss_history: Vec::new(),
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.layer_sizes[0]
    }

    /// Bias of the output unit.
    pub fn output_bias(&self) -> f64 {
        *self.params.last().expect("at least one layer")
    }

    pub fn output_bias_mut(&mut self) -> &mut f64 {
        self.params.last_mut().expect("at least one layer")
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.input_mean.iter().zip(&self.input_scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    /// Forward pass on standardised input; returns the activations of every layer.
    fn forward(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![input.to_vec()];
        let mut offset = 0;
        let last = self.layer_sizes.len() - 2;
        for (l, w) in self.layer_sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let biases = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let prev = &acts[l];
            let out: Vec<f64> = (0..n_out)
                .map(|o| {
                    let z = biases[o] + weights[o * n_in..(o + 1) * n_in].iter().zip(prev).map(|(a, b)| a * b).sum::<f64>();
                    if l == last {
                        z
                    } else {
                        self.activation.apply(z)
                    }
                })
                .collect();
            acts.push(out);
            offset += n_in * n_out + n_out;
        }
        acts
    }

    /// Prediction on the standardised target scale for standardised input.
    fn predict_standardized(&self, input: &[f64]) -> f64 {
        self.forward(input).last().expect("output layer")[0]
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64, LearnError> {
        check_arity(self.n_inputs(), x)?;
        let z = self.standardize(x);
        Ok(self.predict_standardized(&z) * self.target_scale + self.target_mean)
    }

    /// Adds the squared-error gradient of one sample into `grad`; returns the squared error.
    fn accumulate_gradient(&self, input: &[f64], target: f64, grad: &mut [f64], weight: f64) -> f64 {
        let acts = self.forward(input);
        let n_layers = self.layer_sizes.len() - 1;
        let err = acts[n_layers][0] - target;
        // dL/d(pre-activation) of the current layer
        let mut delta = vec![2.0 * err * weight];
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for w in self.layer_sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let base = offsets[l];
            let prev = &acts[l];
            for o in 0..n_out {
                let d = delta[o];
                let row = &mut grad[base + o * n_in..base + (o + 1) * n_in];
                for (g, a) in row.iter_mut().zip(prev) {
                    *g += d * a;
                }
                grad[base + n_in * n_out + o] += d;
            }
            if l > 0 {
                let weights = &self.params[base..base + n_in * n_out];
                delta = (0..n_in)
                    .map(|i| {
                        let s: f64 = (0..n_out).map(|o| delta[o] * weights[o * n_in + i]).sum();
                        s * self.activation.derivative(prev[i])
                    })
                    .collect();
            }
        }
        err * err
    }

    /// Mean squared error and its gradient over standardised rows.
    pub fn loss_and_gradient(&self, inputs: &Matrix, targets: &[f64]) -> (f64, Vec<f64>) {
        let n = inputs.rows().max(1) as f64;
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        for i in 0..inputs.rows() {
            loss += self.accumulate_gradient(inputs.row(i), targets[i], &mut grad, 1.0 / n);
        }
        (loss / n, grad)
    }

    /// Mean squared error over standardised rows.
    pub fn loss(&self, inputs: &Matrix, targets: &[f64]) -> f64 {
        let n = inputs.rows().max(1) as f64;
        (0..inputs.rows())
            .map(|i| (self.predict_standardized(inputs.row(i)) - targets[i]).powi(2))
            .sum::<f64>()
            / n
    }

    /// Standardises raw rows and targets with the model's stored statistics.
    pub fn standardize_data(&self, x: &Matrix, y: &[f64]) -> (Matrix, Vec<f64>) {
        let mut data = Vec::with_capacity(x.rows() * x.cols());
        for row in x.iter_rows() {
            data.extend(self.standardize(row));
        }
        let ys = y.iter().map(|v| (v - self.target_mean) / self.target_scale).collect();
        (Matrix::new(x.rows(), x.cols(), data).expect("shape"), ys)
    }
}

fn mean_scale(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count().max(1) as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    (mean, if sd > 1e-12 { sd } else { 1.0 })
}

/// Trains a regressor on `x -> y`.
pub fn fit_mlp(x: &Matrix, y: &[f64], config: &MlpConfig) -> Result<MlpModel, LearnError> {
    if x.rows() == 0 || x.cols() == 0 {
        return Err(LearnError::EmptyData);
    }
    if y.len() != x.rows() {
        return Err(LearnError::ArityMismatch {
            what: "targets",
            expected: x.rows(),
            got: y.len(),
        });
    }
    if config.batch_size == 0 || !(config.learning_rate > 0.0) || config.hidden.contains(&0) {
        return Err(LearnError::InvalidParam("batch_size, learning_rate and hidden sizes must be positive".into()));
    }
    let mut model = MlpModel::zeros(x.cols(), config);
    for j in 0..x.cols() {
        let (m, s) = mean_scale((0..x.rows()).map(|i| x.get(i, j)));
        model.input_mean[j] = m;
        model.input_scale[j] = s;
    }
    let (tm, ts) = mean_scale(y.iter().copied());
    model.target_mean = tm;
    model.target_scale = ts;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    // Glorot-uniform weights, zero biases.
    let mut off = 0;
    for w in model.layer_sizes.clone().windows(2) {
        let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
        for p in &mut model.params[off..off + w[0] * w[1]] {
            *p = rng.random_range(-limit..limit);
        }
        off += w[0] * w[1] + w[1];
    }

    let (xs, ys) = model.standardize_data(x, y);
    let n = xs.rows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut m1 = vec![0.0; model.params.len()];
    let mut m2 = vec![0.0; model.params.len()];
    let mut step = 0i32;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grad = vec![0.0; model.params.len()];
            let w = 1.0 / batch.len() as f64;
            for &i in batch {
                epoch_loss += model.accumulate_gradient(xs.row(i), ys[i], &mut grad, w);
            }
            step += 1;
            match config.optimizer {
                Optimizer::Sgd { momentum } => {
                    for ((p, g), v) in model.params.iter_mut().zip(&grad).zip(&mut m1) {
                        *v = momentum * *v - config.learning_rate * g;
                        *p += *v;
                    }
                }
                Optimizer::Adam { beta1, beta2 } => {
                    let c1 = 1.0 - beta1.powi(step);
                    let c2 = 1.0 - beta2.powi(step);
                    for (((p, g), a), b) in model.params.iter_mut().zip(&grad).zip(&mut m1).zip(&mut m2) {
                        *a = beta1 * *a + (1.0 - beta1) * g;
                        *b = beta2 * *b + (1.0 - beta2) * g * g;
                        *p -= config.learning_rate * (*a / c1) / ((*b / c2).sqrt() + 1e-8);
                    }
                }
            }
        }
        let loss = epoch_loss / n as f64;
        if !loss.is_finite() || model.params.iter().any(|p| !p.is_finite()) {
            return Err(LearnError::NonFiniteLoss {
                epoch,
                detail: format!("loss {loss}; lower the learning rate"),
            });
        }
        model.loss_history.push(loss);
    }
    Ok(model)
}
