//! Dense feed-forward networks with a scalar output, trained by
//! mini-batch Adam. Batches are row-major `rows x features` buffers and the
//! dense products go through `matrixmultiply`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Sigmoid,
    Linear,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the activation value `a`.
    fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Linear => 1.0,
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Inverted dropout on the output of dense layer `after_layer`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dropout {
    pub after_layer: usize,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Input width first, output width last.
    pub layer_sizes: Vec<usize>,
    /// One per dense layer.
    pub activations: Vec<Activation>,
    pub dropout: Option<Dropout>,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, activations: Vec<Activation>, dropout: Option<Dropout>) -> Result<Self> {
        let spec = Self {
            layer_sizes,
            activations,
            dropout,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Hidden layers of one activation followed by a single-unit head.
    pub fn stack(input: usize, hidden: &[usize], act: Activation, head: Activation, dropout: Option<f64>) -> Self {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let mut acts = vec![act; hidden.len()];
        acts.push(head);
        Self {
            layer_sizes: sizes,
            activations: acts,
            dropout: dropout.map(|p| Dropout {
                after_layer: hidden.len() - 1,
                probability: p,
            }),
        }
    }

    pub fn stationary_classifier() -> Self {
        Self::stack(4, &[32; 4], Activation::Tanh, Activation::Sigmoid, Some(0.4))
    }

    pub fn stationary_regressor() -> Self {
        Self::stack(4, &[128, 128], Activation::Relu, Activation::Linear, None)
    }

    pub fn maneuvering_classifier() -> Self {
        Self::stack(6, &[128, 1024, 128], Activation::Tanh, Activation::Sigmoid, Some(0.2))
    }

    pub fn maneuvering_regressor() -> Self {
        Self::stack(6, &[64, 1024, 64], Activation::Relu, Activation::Linear, None)
    }

    pub fn num_layers(&self) -> usize {
        self.activations.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::invalid("a network needs at least input and output sizes"));
        }
        if self.activations.len() != self.layer_sizes.len() - 1 {
            return Err(Error::DimensionMismatch {
                expected: self.layer_sizes.len() - 1,
                actual: self.activations.len(),
            });
        }
        if self.layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::invalid("layer sizes must be positive"));
        }
        if *self.layer_sizes.last().unwrap() != 1 {
            return Err(Error::invalid("networks have a single output"));
        }
        if let Some(d) = self.dropout {
            if !(0.0..1.0).contains(&d.probability) {
                return Err(Error::invalid(format!("dropout probability {} not in [0, 1)", d.probability)));
            }
            if d.after_layer + 1 >= self.num_layers() {
                return Err(Error::invalid("dropout must follow a hidden layer"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub outputs: usize,
    pub inputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpWeights {
    pub layers: Vec<DenseLayer>,
}

impl MlpWeights {
    /// Glorot-uniform weights and zero biases.
    pub fn init(spec: &MlpSpec, rng: &mut impl Rng) -> Self {
        let layers = spec
            .layer_sizes
            .windows(2)
            .map(|w| {
                let (inputs, outputs) = (w[0], w[1]);
                let limit = (6.0 / (inputs + outputs) as f64).sqrt();
                DenseLayer {
                    outputs,
                    inputs,
                    weights: (0..inputs * outputs).map(|_| rng.gen_range(-limit..limit)).collect(),
                    bias: vec![0.0; outputs],
                }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(spec: &MlpSpec) -> Self {
        let layers = spec
            .layer_sizes
            .windows(2)
            .map(|w| DenseLayer {
                outputs: w[1],
                inputs: w[0],
                weights: vec![0.0; w[0] * w[1]],
                bias: vec![0.0; w[1]],
            })
            .collect();
        Self { layers }
    }

    pub fn check(&self, spec: &MlpSpec) -> Result<()> {
        if self.layers.len() != spec.num_layers() {
            return Err(Error::DimensionMismatch {
                expected: spec.num_layers(),
                actual: self.layers.len(),
            });
        }
        for (l, w) in self.layers.iter().zip(spec.layer_sizes.windows(2)) {
            if l.inputs != w[0] || l.outputs != w[1] || l.weights.len() != w[0] * w[1] || l.bias.len() != w[1] {
                return Err(Error::ModelFormat(format!(
                    "layer shape {}x{} does not match spec {}x{}",
                    l.outputs, l.inputs, w[1], w[0]
                )));
            }
            if !l.weights.iter().chain(&l.bias).all(|v| v.is_finite()) {
                return Err(Error::ModelFormat("non-finite weight".into()));
            }
        }
        Ok(())
    }

    fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }
}

/// `c ← a · bᵀ + c·beta` with `a: m x k`, `b: n x k` row-major.
fn gemm_abt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    // SAFETY: slice lengths cover the strided extents given.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0, a.as_ptr(), k as isize, 1, b.as_ptr(), 1, k as isize, beta, c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `c ← a · b` with `a: m x k`, `b: k x n` row-major.
fn gemm_ab(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    // SAFETY: as above.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0, a.as_ptr(), k as isize, 1, b.as_ptr(), n as isize, 1, 0.0, c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `c ← aᵀ · b` with `a: m x k`, `b: m x n` row-major, `c: k x n`.
fn gemm_atb(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    // SAFETY: as above.
    unsafe {
        matrixmultiply::dgemm(
            k, m, n, 1.0, a.as_ptr(), 1, k as isize, b.as_ptr(), n as isize, 1, 0.0, c.as_mut_ptr(), n as isize, 1,
        );
    }
}

fn check_input(spec: &MlpSpec, w: &MlpWeights, x: &[f64], rows: usize) -> Result<()> {
    if x.len() != rows * spec.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: rows * spec.input_dim(),
            actual: x.len(),
        });
    }
    if w.layers.len() != spec.num_layers() || w.layers[0].inputs != spec.input_dim() {
        return Err(Error::invalid("weights do not match network spec"));
    }
    Ok(())
}

/// Activations of every layer (input included) and the dropout mask.
struct Tape {
    acts: Vec<Vec<f64>>,
    mask: Option<Vec<f64>>,
}

fn run(spec: &MlpSpec, w: &MlpWeights, x: &[f64], rows: usize, rng: Option<&mut ChaCha8Rng>) -> Tape {
    let mut acts = Vec::with_capacity(w.layers.len() + 1);
    acts.push(x.to_vec());
    let mut mask = None;
    let mut rng = rng;
    for (idx, (layer, act)) in w.layers.iter().zip(&spec.activations).enumerate() {
        let prev = acts.last().unwrap();
        let mut z = Vec::with_capacity(rows * layer.outputs);
        for _ in 0..rows {
            z.extend_from_slice(&layer.bias);
        }
        gemm_abt(rows, layer.inputs, layer.outputs, prev, &layer.weights, 1.0, &mut z);
        z.iter_mut().for_each(|v| *v = act.apply(*v));
        if let (Some(d), Some(rng)) = (spec.dropout, rng.as_deref_mut()) {
            if d.after_layer == idx && d.probability > 0.0 {
                let keep = 1.0 - d.probability;
                let m: Vec<f64> = (0..z.len())
                    .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect();
                z.iter_mut().zip(&m).for_each(|(v, k)| *v *= k);
                mask = Some(m);
            }
        }
        acts.push(z);
    }
    Tape { acts, mask }
}

/// Network output for a single feature vector. With `training` set, dropout
/// masks are drawn from `rng`; otherwise the call is deterministic.
pub fn forward(spec: &MlpSpec, w: &MlpWeights, x: &[f64], training: bool, rng: &mut ChaCha8Rng) -> Result<f64> {
    check_input(spec, w, x, 1)?;
    let tape = run(spec, w, x, 1, training.then_some(rng));
    Ok(tape.acts.last().unwrap()[0])
}

/// Inference-mode outputs for `rows` stacked feature vectors.
pub fn predict(spec: &MlpSpec, w: &MlpWeights, x: &[f64], rows: usize) -> Result<Vec<f64>> {
    check_input(spec, w, x, rows)?;
    Ok(run(spec, w, x, rows, None).acts.pop().unwrap())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    BinaryCrossEntropy,
    MeanSquaredError,
}

impl Loss {
    /// Mean loss over a batch of outputs.
    pub fn value(self, out: &[f64], y: &[f64]) -> f64 {
        let total: f64 = match self {
            Loss::BinaryCrossEntropy => out
                .iter()
                .zip(y)
                .map(|(&a, &t)| {
                    let a = a.clamp(1e-15, 1.0 - 1e-15);
                    -(t * a.ln() + (1.0 - t) * (1.0 - a).ln())
                })
                .sum(),
            Loss::MeanSquaredError => out.iter().zip(y).map(|(a, t)| (a - t) * (a - t)).sum(),
        };
        total / out.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: Loss,
    pub batch_size: usize,
    pub epochs: usize,
    #[serde(default)]
    pub adam: AdamParams,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(self.adam.lr >= 0.0 && self.adam.lr.is_finite()) {
            return Err(Error::invalid("learning rate must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// Mean batch loss and its gradient, laid out like [`MlpWeights`].
pub fn loss_and_gradient(
    spec: &MlpSpec,
    w: &MlpWeights,
    x: &[f64],
    y: &[f64],
    loss: Loss,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<(f64, MlpWeights)> {
    let rows = y.len();
    check_input(spec, w, x, rows)?;
    if rows == 0 {
        return Err(Error::invalid("empty batch"));
    }
    let head = *spec.activations.last().unwrap();
    if loss == Loss::BinaryCrossEntropy && head != Activation::Sigmoid {
        return Err(Error::invalid("binary cross-entropy needs a sigmoid output"));
    }
    let tape = run(spec, w, x, rows, rng);
    let out = tape.acts.last().unwrap();
    let value = loss.value(out, y);
    let scale = 1.0 / rows as f64;

    // dL/dz of the output layer
    let mut delta: Vec<f64> = match loss {
        Loss::BinaryCrossEntropy => out.iter().zip(y).map(|(a, t)| (a - t) * scale).collect(),
        Loss::MeanSquaredError => out
            .iter()
            .zip(y)
            .map(|(a, t)| 2.0 * (a - t) * scale * head.derivative(*a))
            .collect(),
    };
    let mut grad = MlpWeights::zeros(spec);
    for l in (0..w.layers.len()).rev() {
        let layer = &w.layers[l];
        let prev = &tape.acts[l];
        gemm_atb(rows, layer.outputs, layer.inputs, &delta, prev, &mut grad.layers[l].weights);
        let gb = &mut grad.layers[l].bias;
        for r in 0..rows {
            for (g, d) in gb.iter_mut().zip(&delta[r * layer.outputs..(r + 1) * layer.outputs]) {
                *g += d;
            }
        }
        if l == 0 {
            break;
        }
        let mut back = vec![0.0; rows * layer.inputs];
        gemm_ab(rows, layer.outputs, layer.inputs, &delta, &layer.weights, &mut back);
        if let (Some(d), Some(mask)) = (spec.dropout, tape.mask.as_ref()) {
            if d.after_layer == l - 1 {
                back.iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
            }
        }
        // derivative through the pre-dropout activation value
        let act = spec.activations[l - 1];
        let mask = tape.mask.as_ref().filter(|_| spec.dropout.is_some_and(|d| d.after_layer == l - 1));
        for (i, v) in back.iter_mut().enumerate() {
            let a = match mask {
                Some(m) if m[i] > 0.0 => prev[i] / m[i],
                Some(_) => 0.0,
                None => prev[i],
            };
            *v *= act.derivative(a);
        }
        delta = back;
    }
    Ok((value, grad))
}

/// Adam moment estimates for one network.
#[derive(Debug, Clone)]
pub struct Adam {
    params: AdamParams,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(params: AdamParams, w: &MlpWeights) -> Self {
        let n = w.num_params();
        Self {
            params,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn update(&mut self, w: &mut MlpWeights, grad: &MlpWeights) {
        self.t += 1;
        let p = self.params;
        let c1 = 1.0 - p.beta1.powi(self.t as i32);
        let c2 = 1.0 - p.beta2.powi(self.t as i32);
        let grads = grad.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias));
        for (((x, g), m), v) in w.params_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = p.beta1 * *m + (1.0 - p.beta1) * g;
            *v = p.beta2 * *v + (1.0 - p.beta2) * g * g;
            *x -= p.lr * (*m / c1) / ((*v / c2).sqrt() + p.eps);
        }
    }
}

/// One optimiser step on a batch; returns the batch loss before the update.
pub fn backprop_step(
    spec: &MlpSpec,
    w: &mut MlpWeights,
    adam: &mut Adam,
    x: &[f64],
    y: &[f64],
    loss: Loss,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let (value, grad) = loss_and_gradient(spec, w, x, y, loss, Some(rng))?;
    if !value.is_finite() {
        return Err(Error::TrainingDiverged(format!("batch loss became {value} at step {}", adam.t + 1)));
    }
    adam.update(w, &grad);
    Ok(value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    /// Mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Trains from seeded Glorot initial weights over `config.epochs` shuffled
/// passes. `x` holds `y.len()` rows of `spec.input_dim()` features.
pub fn train(spec: &MlpSpec, x: &[f64], y: &[f64], config: &TrainConfig) -> Result<(MlpWeights, TrainingLog)> {
    spec.validate()?;
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut w = MlpWeights::init(spec, &mut rng);
    check_input(spec, &w, x, y.len())?;
    if y.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let dim = spec.input_dim();
    let mut adam = Adam::new(config.adam, &w);
    let mut order: Vec<usize> = (0..y.len()).collect();
    let mut log = TrainingLog {
        epoch_losses: Vec::with_capacity(config.epochs),
    };
    let mut bx = Vec::with_capacity(config.batch_size * dim);
    let mut by = Vec::with_capacity(config.batch_size);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            bx.clear();
            by.clear();
            for &i in chunk {
                bx.extend_from_slice(&x[i * dim..(i + 1) * dim]);
                by.push(y[i]);
            }
            total += backprop_step(spec, &mut w, &mut adam, &bx, &by, config.loss, &mut rng)? * chunk.len() as f64;
        }
        log.epoch_losses.push(total / y.len() as f64);
    }
    Ok((w, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn zero_weights_sigmoid_head_is_half() {
        let spec = MlpSpec::stack(3, &[4], Activation::Tanh, Activation::Sigmoid, None);
        let w = MlpWeights::zeros(&spec);
        assert_eq!(forward(&spec, &w, &[1.0, -2.0, 3.0], false, &mut rng(0)).unwrap(), 0.5);
    }

    #[test]
    fn identity_layer_passes_input() {
        let spec = MlpSpec::new(vec![1, 1], vec![Activation::Linear], None).unwrap();
        let mut w = MlpWeights::zeros(&spec);
        w.layers[0].weights[0] = 1.0;
        assert_eq!(forward(&spec, &w, &[2.5], false, &mut rng(0)).unwrap(), 2.5);
    }

    #[test]
    fn hand_computed_network() {
        // 2 -> 2 (tanh) -> 1 (sigmoid)
        let spec = MlpSpec::stack(2, &[2], Activation::Tanh, Activation::Sigmoid, None);
        let w = MlpWeights {
            layers: vec![
                DenseLayer {
                    outputs: 2,
                    inputs: 2,
                    weights: vec![0.5, -1.0, 0.25, 2.0],
                    bias: vec![0.1, -0.2],
                },
                DenseLayer {
                    outputs: 1,
                    inputs: 2,
                    weights: vec![1.5, -0.5],
                    bias: vec![0.3],
                },
            ],
        };
        let x = [0.4, -0.7];
        let h0 = (0.5 * 0.4 - 1.0 * -0.7 + 0.1f64).tanh();
        let h1 = (0.25 * 0.4 + 2.0 * -0.7 - 0.2f64).tanh();
        let expect = 1.0 / (1.0 + (-(1.5 * h0 - 0.5 * h1 + 0.3f64)).exp());
        let got = forward(&spec, &w, &x, false, &mut rng(0)).unwrap();
        assert!((got - expect).abs() < 1e-15);
        assert!(forward(&spec, &w, &[1.0], false, &mut rng(0)).is_err());
    }

    #[test]
    fn dropout_only_in_training() {
        let spec = MlpSpec::stack(2, &[16, 16], Activation::Tanh, Activation::Linear, Some(0.5));
        let w = MlpWeights::init(&spec, &mut rng(3));
        let x = [0.3, 0.9];
        let a = forward(&spec, &w, &x, false, &mut rng(1)).unwrap();
        let b = forward(&spec, &w, &x, false, &mut rng(2)).unwrap();
        assert_eq!(a, b);
        let c = forward(&spec, &w, &x, true, &mut rng(1)).unwrap();
        let d = forward(&spec, &w, &x, true, &mut rng(2)).unwrap();
        assert_ne!(c, d);
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let spec = MlpSpec::stack(2, &[3], Activation::Relu, Activation::Linear, None);
        let w0 = MlpWeights::init(&spec, &mut rng(5));
        let mut w = w0.clone();
        let mut adam = Adam::new(AdamParams { lr: 0.0, ..AdamParams::default() }, &w);
        backprop_step(&spec, &mut w, &mut adam, &[1.0, 2.0], &[3.0], Loss::MeanSquaredError, &mut rng(0)).unwrap();
        assert_eq!(w, w0);
    }

    /// Central finite-difference check of every parameter.
    pub(crate) fn gradient_error(spec: &MlpSpec, loss: Loss, seed: u64) -> f64 {
        let mut r = rng(seed);
        let mut w = MlpWeights::init(spec, &mut r);
        // nonzero biases keep ReLU units off their kink
        for l in &mut w.layers {
            l.bias.iter_mut().for_each(|b| *b = r.gen_range(-0.5..0.5));
        }
        let rows = 3;
        let x: Vec<f64> = (0..rows * spec.input_dim()).map(|_| r.gen_range(-1.5..1.5)).collect();
        let y: Vec<f64> = (0..rows)
            .map(|_| match loss {
                Loss::BinaryCrossEntropy => f64::from(r.gen_range(0..2u8)),
                Loss::MeanSquaredError => r.gen_range(-1.0..1.0),
            })
            .collect();
        let (_, g) = loss_and_gradient(spec, &w, &x, &y, loss, None).unwrap();
        let f = |w: &MlpWeights| loss.value(&predict(spec, w, &x, rows).unwrap(), &y);
        let mut worst: f64 = 0.0;
        for l in 0..w.layers.len() {
            let n_w = w.layers[l].weights.len();
            for p in 0..n_w + w.layers[l].bias.len() {
                let h = 1e-6;
                let mut wp = w.clone();
                let mut wm = w.clone();
                let (gp, vp, vm) = if p < n_w {
                    wp.layers[l].weights[p] += h;
                    wm.layers[l].weights[p] -= h;
                    (g.layers[l].weights[p], f(&wp), f(&wm))
                } else {
                    wp.layers[l].bias[p - n_w] += h;
                    wm.layers[l].bias[p - n_w] -= h;
                    (g.layers[l].bias[p - n_w], f(&wp), f(&wm))
                };
                let fd = (vp - vm) / (2.0 * h);
                // absolute floor for parameters with vanishing gradient
                worst = worst.max((fd - gp).abs() / (fd.abs() + gp.abs()).max(1e-4));
            }
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        let acts = [Activation::Tanh, Activation::Relu, Activation::Sigmoid, Activation::Linear];
        for (k, act) in acts.into_iter().enumerate() {
            let spec = MlpSpec::stack(2, &[3], act, Activation::Sigmoid, None);
            let e = gradient_error(&spec, Loss::BinaryCrossEntropy, k as u64);
            assert!(e < 1e-4, "bce {act:?} {e}");
            let spec = MlpSpec::stack(2, &[3, 2], act, act, None);
            let e = gradient_error(&spec, Loss::MeanSquaredError, k as u64);
            assert!(e < 1e-4, "mse {act:?} {e}");
        }
    }

    #[test]
    fn learns_xor() {
        let spec = MlpSpec::stack(2, &[8], Activation::Tanh, Activation::Sigmoid, None);
        let x = [0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0];
        let y = [0.0, 1.0, 1.0, 0.0];
        let cfg = TrainConfig {
            loss: Loss::BinaryCrossEntropy,
            batch_size: 4,
            epochs: 200,
            adam: AdamParams {
                lr: 0.05,
                ..AdamParams::default()
            },
            seed: 11,
        };
        let (w, log) = train(&spec, &x, &y, &cfg).unwrap();
        let out = predict(&spec, &w, &x, 4).unwrap();
        for (o, t) in out.iter().zip(y) {
            assert_eq!(*o >= 0.5, t == 1.0, "{out:?}");
        }
        assert!(log.epoch_losses.last() < log.epoch_losses.first());
    }

    #[test]
    fn training_is_deterministic_and_epochs_zero_is_init() {
        let spec = MlpSpec::stack(2, &[5], Activation::Relu, Activation::Linear, Some(0.3));
        let x = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let y = [1.0, 2.0, 3.0];
        let cfg = TrainConfig {
            loss: Loss::MeanSquaredError,
            batch_size: 2,
            epochs: 5,
            adam: AdamParams::default(),
            seed: 9,
        };
        assert_eq!(train(&spec, &x, &y, &cfg).unwrap(), train(&spec, &x, &y, &cfg).unwrap());
        let (w0, _) = train(&spec, &x, &y, &TrainConfig { epochs: 0, ..cfg }).unwrap();
        assert_eq!(w0, MlpWeights::init(&spec, &mut rng(9)));
    }

    #[test]
    fn divergence_is_reported() {
        let spec = MlpSpec::stack(1, &[2], Activation::Linear, Activation::Linear, None);
        let x = [1e200];
        let y = [0.0];
        let cfg = TrainConfig {
            loss: Loss::MeanSquaredError,
            batch_size: 1,
            epochs: 1,
            adam: AdamParams::default(),
            seed: 0,
        };
        assert!(matches!(train(&spec, &x, &y, &cfg), Err(Error::TrainingDiverged(_))));
    }

    #[test]
    fn paper_architectures_validate() {
        for s in [
            MlpSpec::stationary_classifier(),
            MlpSpec::stationary_regressor(),
            MlpSpec::maneuvering_classifier(),
            MlpSpec::maneuvering_regressor(),
        ] {
            s.validate().unwrap();
        }
        assert_eq!(MlpSpec::stationary_classifier().layer_sizes, vec![4, 32, 32, 32, 32, 1]);
    }
}
