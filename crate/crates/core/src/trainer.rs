// SPDX-License-Identifier: Apache-2.0

//! Toy-scale surrogate-gradient training of the float network.
//!
//! The loss is softmax cross-entropy on the output candidate membrane
//! (before reset), summed over timesteps. Gradients flow back through time
//! with the fast-sigmoid derivative standing in for the Heaviside step. The
//! reset branch is a stop-gradient unless [`GradOptions::detach_reset`] is
//! cleared.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::derive_seed;
use crate::encoding::{rate_encode, EncodingError, IntensityGrid, SpikeTrain};
use crate::hwmodel::{hw_forward, HwError, HwOptions};
use crate::network::{
    active_indices, check_input, forward, LayerWeights, Network, NetworkConfig, NetworkError,
    QuantizedNetwork,
};
use crate::neuron::{NeuronParams, ResetMode};

/// Side length of toy images.
pub const TOY_SIDE: usize = 8;

const TAG_INIT: u64 = 1;
const TAG_EPOCH: u64 = 2;
const TAG_SPIKES: u64 = 3;
const TAG_EVAL: u64 = 4;
const TAG_DATA: u64 = 5;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Hw(#[from] HwError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub timesteps: usize,
    pub surrogate_slope: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 200,
            batch_size: 16,
            timesteps: 25,
            surrogate_slope: 25.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// A zero learning rate is accepted; it freezes the weights.
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and >= 0");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be > 0");
        }
        if self.epochs == 0 || self.batch_size == 0 || self.timesteps == 0 {
            return bad("epochs, batch_size and timesteps must be >= 1");
        }
        if !(self.surrogate_slope > 0.0 && self.surrogate_slope.is_finite()) {
            return bad("surrogate_slope must be > 0");
        }
        Ok(())
    }
}

/// Fast-sigmoid derivative `1 / (k|x| + 1)^2`.
pub fn surrogate_grad(x: f64, k: f64) -> f64 {
    let d = k * x.abs() + 1.0;
    1.0 / (d * d)
}

/// Smooth spike whose exact derivative is [`surrogate_grad`].
fn relaxed_spike(x: f64, k: f64) -> f64 {
    x / (1.0 + k * x.abs())
}

/// Cross-entropy of `softmax(logits)` against `label`; writes the
/// probabilities into `probs`.
fn softmax_ce(logits: &[f64], label: usize, probs: &mut [f64]) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (p, &z) in probs.iter_mut().zip(logits) {
        *p = (z - max).exp();
        sum += *p;
    }
    for p in probs.iter_mut() {
        *p /= sum;
    }
    sum.ln() + max - logits[label]
}

/// `sum_t CE(softmax(trace[t]), label)`.
pub fn loss(trace: &[Vec<f64>], label: usize) -> f64 {
    trace
        .iter()
        .map(|z| {
            let mut p = vec![0.0; z.len()];
            softmax_ce(z, label, &mut p)
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToySample {
    pub image: IntensityGrid,
    pub label: usize,
}

/// Two-class 8x8 images: class 0 is bright on the left half, class 1 on
/// the right half.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyDataset {
    pub train: Vec<ToySample>,
    pub test: Vec<ToySample>,
}

impl ToyDataset {
    pub fn samples(&self) -> impl Iterator<Item = &ToySample> {
        self.train.iter().chain(&self.test)
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `n` samples, labels exactly balanced (up to one) then shuffled, 80/20
/// train/test split.
pub fn make_toy_dataset(seed: u64, n: usize) -> Result<ToyDataset, TrainError> {
    if n < 2 {
        return Err(TrainError::Config(
            "toy dataset needs at least 2 samples".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[TAG_DATA]));
    let mut labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    labels.shuffle(&mut rng);
    let mut samples = Vec::with_capacity(n);
    for label in labels {
        let mut values = Vec::with_capacity(TOY_SIDE * TOY_SIDE);
        for _row in 0..TOY_SIDE {
            for col in 0..TOY_SIDE {
                let left = col < TOY_SIDE / 2;
                let base = if left == (label == 0) { 0.7 } else { 0.15 };
                let noise: f64 = rng.gen_range(-0.15..=0.15);
                values.push((base + noise).clamp(0.0, 1.0));
            }
        }
        let image = IntensityGrid::new(TOY_SIDE, TOY_SIDE, values)?;
        samples.push(ToySample { image, label });
    }
    let n_train = (4 * n / 5).clamp(1, n - 1);
    let test = samples.split_off(n_train);
    Ok(ToyDataset {
        train: samples,
        test,
    })
}

/// Uniform weights in `±1/sqrt(fan_in)`, zero biases.
pub fn init_network(config: NetworkConfig, seed: u64) -> Result<Network, TrainError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[TAG_INIT]));
    let mut layer = |rows: usize, cols: usize| {
        let bound = 1.0 / (cols as f64).sqrt();
        let weights = (0..rows * cols)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        LayerWeights {
            rows,
            cols,
            weights,
            bias: vec![0.0; rows],
        }
    };
    let hidden = layer(config.hidden_size, config.input_size);
    let output = layer(config.output_size, config.hidden_size);
    Ok(Network::new(config, hidden, output)?)
}

/// Forward spike nonlinearity used while computing gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpikeFn {
    /// The real step function; the backward pass substitutes the surrogate.
    #[default]
    Heaviside,
    /// `x / (1 + k|x|)`, whose true derivative is the surrogate. Only for
    /// checking the backward pass against finite differences.
    Relaxed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradOptions {
    pub surrogate_slope: f64,
    pub spike_fn: SpikeFn,
    pub detach_reset: bool,
}

impl Default for GradOptions {
    fn default() -> Self {
        GradOptions {
            surrogate_slope: 25.0,
            spike_fn: SpikeFn::Heaviside,
            detach_reset: true,
        }
    }
}

/// Loss gradients, shaped like the network layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub hidden: LayerWeights,
    pub output: LayerWeights,
}

impl Gradients {
    pub fn zeros(config: &NetworkConfig) -> Self {
        let n = Network::zeros(config.clone());
        Gradients {
            hidden: n.hidden,
            output: n.output,
        }
    }

    fn scale(&mut self, k: f64) {
        for layer in [&mut self.hidden, &mut self.output] {
            layer
                .weights
                .iter_mut()
                .chain(&mut layer.bias)
                .for_each(|g| *g *= k);
        }
    }
}

/// One layer's recorded forward pass, flattened `[t * n + j]`.
struct LayerTape {
    n: usize,
    cand: Vec<f64>,
    spike: Vec<f64>,
    open: Vec<bool>,
}

impl LayerTape {
    fn new(timesteps: usize, n: usize) -> Self {
        LayerTape {
            n,
            cand: vec![0.0; timesteps * n],
            spike: vec![0.0; timesteps * n],
            open: vec![false; timesteps * n],
        }
    }

    /// LIF step for every neuron of the layer at time `t`.
    fn step(
        &mut self,
        t: usize,
        current: &[f64],
        u: &mut [f64],
        blocked: &mut [u32],
        p: &NeuronParams,
        opts: &GradOptions,
    ) {
        for j in 0..self.n {
            let idx = t * self.n + j;
            let cand = p.beta * u[j] + current[j];
            self.cand[idx] = cand;
            if blocked[j] > 0 {
                blocked[j] -= 1;
                u[j] = cand;
                continue;
            }
            self.open[idx] = true;
            let x = cand - p.threshold;
            let fired = x >= 0.0;
            let s = match opts.spike_fn {
                SpikeFn::Heaviside => fired as u8 as f64,
                SpikeFn::Relaxed => relaxed_spike(x, opts.surrogate_slope),
            };
            self.spike[idx] = s;
            u[j] = match p.reset_mode {
                ResetMode::Zero => cand * (1.0 - s),
                ResetMode::Subtract => cand - p.threshold * s,
            };
            if fired {
                blocked[j] = p.refractory_steps;
            }
        }
    }

    /// Gradient wrt the candidate at `idx` given the gradient wrt the
    /// post-reset membrane (`du`) and wrt the emitted spike (`ds`).
    fn candidate_grad(
        &self,
        idx: usize,
        du: f64,
        ds: f64,
        p: &NeuronParams,
        opts: &GradOptions,
    ) -> f64 {
        if !self.open[idx] {
            return du;
        }
        let (c, s) = (self.cand[idx], self.spike[idx]);
        let (dr_dc, dr_ds) = match p.reset_mode {
            ResetMode::Zero => (1.0 - s, -c),
            ResetMode::Subtract => (1.0, -p.threshold),
        };
        let ds = if opts.detach_reset {
            ds
        } else {
            ds + du * dr_ds
        };
        du * dr_dc + ds * surrogate_grad(c - p.threshold, opts.surrogate_slope)
    }
}

/// Loss of one sample and its gradients accumulated into `grads`.
/// `dropout` draws a fresh hidden-spike mask per timestep.
fn accumulate_sample(
    net: &Network,
    spikes: &SpikeTrain,
    label: usize,
    opts: &GradOptions,
    mut dropout: Option<&mut ChaCha8Rng>,
    grads: &mut Gradients,
) -> f64 {
    let c = &net.config;
    let (tt, h, o) = (c.timesteps, c.hidden_size, c.output_size);
    let keep_scale = 1.0 / (1.0 - c.dropout_rate);

    let mut hidden = LayerTape::new(tt, h);
    let mut output = LayerTape::new(tt, o);
    let mut mask = vec![1.0; tt * h];
    let mut dlogits = vec![0.0; tt * o];
    let (mut u1, mut u2) = (vec![0.0; h], vec![0.0; o]);
    let (mut r1, mut r2) = (vec![0u32; h], vec![0u32; o]);
    let (mut cur1, mut cur2) = (vec![0.0; h], vec![0.0; o]);
    let mut active = Vec::new();
    let mut total = 0.0;

    for t in 0..tt {
        active_indices(spikes.row(t), &mut active);
        net.hidden.binary_matvec(&active, &mut cur1);
        hidden.step(t, &cur1, &mut u1, &mut r1, &c.hidden, opts);
        if let Some(rng) = dropout.as_deref_mut() {
            for m in &mut mask[t * h..(t + 1) * h] {
                *m = if rng.gen::<f64>() < c.dropout_rate {
                    0.0
                } else {
                    keep_scale
                };
            }
        }
        for (k, cur) in cur2.iter_mut().enumerate() {
            let row = net.output.row(k);
            let mut acc = net.output.bias[k];
            for j in 0..h {
                let z = hidden.spike[t * h + j] * mask[t * h + j];
                if z != 0.0 {
                    acc += row[j] * z;
                }
            }
            *cur = acc;
        }
        output.step(t, &cur2, &mut u2, &mut r2, &c.output, opts);
        let logits = &output.cand[t * o..(t + 1) * o];
        let probs = &mut dlogits[t * o..(t + 1) * o];
        total += softmax_ce(logits, label, probs);
        probs[label] -= 1.0;
    }

    let (mut du1, mut du2) = (vec![0.0; h], vec![0.0; o]);
    let mut dz = vec![0.0; h];
    for t in (0..tt).rev() {
        dz.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..o {
            let idx = t * o + k;
            let dc = output.candidate_grad(idx, du2[k], 0.0, &c.output, opts) + dlogits[idx];
            du2[k] = c.output.beta * dc;
            grads.output.bias[k] += dc;
            let row = net.output.row(k);
            let grow = &mut grads.output.weights[k * h..(k + 1) * h];
            for j in 0..h {
                let z = hidden.spike[t * h + j] * mask[t * h + j];
                grow[j] += dc * z;
                dz[j] += row[j] * dc;
            }
        }
        active_indices(spikes.row(t), &mut active);
        for j in 0..h {
            let idx = t * h + j;
            let dc = hidden.candidate_grad(idx, du1[j], dz[j] * mask[idx], &c.hidden, opts);
            du1[j] = c.hidden.beta * dc;
            if dc != 0.0 {
                grads.hidden.bias[j] += dc;
                let grow = &mut grads.hidden.weights[j * c.input_size..(j + 1) * c.input_size];
                for &i in &active {
                    grow[i] += dc;
                }
            }
        }
    }
    total
}

/// Loss of a single sample and its exact-or-surrogate gradients (no dropout).
pub fn loss_and_grad(
    net: &Network,
    spikes: &SpikeTrain,
    label: usize,
    opts: &GradOptions,
) -> Result<(f64, Gradients), TrainError> {
    net.validate()?;
    check_input(&net.config, spikes)?;
    if label >= net.config.output_size {
        return Err(TrainError::Config(format!("label {label} out of range")));
    }
    let mut grads = Gradients::zeros(&net.config);
    let l = accumulate_sample(net, spikes, label, opts, None, &mut grads);
    Ok((l, grads))
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], cfg: &TrainConfig, t: i32) {
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(&mut self.v))
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= cfg.learning_rate * (*m / bc1) / ((*v / bc2).sqrt() + cfg.epsilon);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub network: Network,
    pub history: Vec<EpochStats>,
}

/// Rate-encode each sample with a per-sample seed derived from `seed`.
pub fn encode_samples(
    samples: &[ToySample],
    timesteps: usize,
    seed: u64,
) -> Result<Vec<SpikeTrain>, TrainError> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            Ok(rate_encode(
                &s.image,
                timesteps,
                derive_seed(seed, &[TAG_EVAL, i as u64]),
            )?)
        })
        .collect()
}

fn fraction(hits: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        hits as f64 / n as f64
    }
}

/// Float-network accuracy on pre-encoded samples.
pub fn accuracy(
    net: &Network,
    samples: &[ToySample],
    trains: &[SpikeTrain],
) -> Result<f64, TrainError> {
    let mut hits = 0;
    for (s, x) in samples.iter().zip(trains) {
        hits += (forward(net, x, false)?.prediction == s.label) as usize;
    }
    Ok(fraction(hits, samples.len()))
}

/// Hardware-model accuracy on pre-encoded samples.
pub fn hw_accuracy(
    qnet: &QuantizedNetwork,
    samples: &[ToySample],
    trains: &[SpikeTrain],
) -> Result<f64, TrainError> {
    let opts = HwOptions::default();
    let mut hits = 0;
    for (s, x) in samples.iter().zip(trains) {
        hits += (hw_forward(qnet, x, &opts)?.prediction == s.label) as usize;
    }
    Ok(fraction(hits, samples.len()))
}

/// Seed for the fixed evaluation encodings of a training run.
pub fn eval_seed(cfg: &TrainConfig) -> u64 {
    derive_seed(cfg.seed, &[TAG_EVAL])
}

/// Train `net` on `data.train` with Adam, re-sampling spike trains every
/// epoch. Accuracies are measured each epoch on fixed encodings.
pub fn train(
    net: Network,
    data: &ToyDataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    train_with_progress(net, data, cfg, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with_progress(
    mut net: Network,
    data: &ToyDataset,
    cfg: &TrainConfig,
    mut progress: impl FnMut(&EpochStats),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    net.validate()?;
    let c = net.config.clone();
    if c.timesteps != cfg.timesteps {
        return Err(TrainError::Config(format!(
            "network runs {} timesteps but training config has {}",
            c.timesteps, cfg.timesteps
        )));
    }
    if data.train.is_empty() {
        return Err(TrainError::Config("empty training set".into()));
    }
    if let Some(s) = data
        .samples()
        .find(|s| s.label >= c.output_size || s.image.len() != c.input_size)
    {
        return Err(TrainError::Config(format!(
            "sample (label {}, {} pixels) does not fit a {}-input {}-class network",
            s.label,
            s.image.len(),
            c.input_size,
            c.output_size
        )));
    }
    let opts = GradOptions {
        surrogate_slope: cfg.surrogate_slope,
        ..GradOptions::default()
    };
    let eval = eval_seed(cfg);
    let train_x = encode_samples(&data.train, c.timesteps, eval)?;
    let test_x = encode_samples(&data.test, c.timesteps, derive_seed(eval, &[1]))?;

    let mut adam = [
        Adam::new(net.hidden.weights.len()),
        Adam::new(net.hidden.bias.len()),
        Adam::new(net.output.weights.len()),
        Adam::new(net.output.bias.len()),
    ];
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step = 0i32;

    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[TAG_EPOCH, epoch as u64]));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = Gradients::zeros(&c);
            for &i in batch {
                let seed = derive_seed(cfg.seed, &[TAG_SPIKES, epoch as u64, i as u64]);
                let x = rate_encode(&data.train[i].image, c.timesteps, seed)?;
                let dropout = (c.dropout_rate > 0.0).then_some(&mut rng);
                total +=
                    accumulate_sample(&net, &x, data.train[i].label, &opts, dropout, &mut grads);
            }
            grads.scale(1.0 / batch.len() as f64);
            step += 1;
            let [a, b, d, e] = &mut adam;
            a.step(&mut net.hidden.weights, &grads.hidden.weights, cfg, step);
            b.step(&mut net.hidden.bias, &grads.hidden.bias, cfg, step);
            d.step(&mut net.output.weights, &grads.output.weights, cfg, step);
            e.step(&mut net.output.bias, &grads.output.bias, cfg, step);
        }
        let loss = total / data.train.len() as f64;
        let finite = net
            .hidden
            .weights
            .iter()
            .chain(&net.output.weights)
            .all(|w| w.is_finite());
        if !loss.is_finite() || !finite {
            return Err(TrainError::Diverged { epoch });
        }
        let stats = EpochStats {
            epoch,
            loss,
            train_acc: accuracy(&net, &data.train, &train_x)?,
            test_acc: accuracy(&net, &data.test, &test_x)?,
        };
        progress(&stats);
        history.push(stats);
    }
    Ok(TrainOutcome {
        network: net,
        history,
    })
}

/// CSV with header `epoch,loss,train_acc,test_acc`.
pub fn write_history_csv<W: Write>(history: &[EpochStats], mut w: W) -> std::io::Result<()> {
    writeln!(w, "epoch,loss,train_acc,test_acc")?;
    for s in history {
        writeln!(
            w,
            "{},{:.6},{:.4},{:.4}",
            s.epoch, s.loss, s.train_acc, s.test_acc
        )?;
    }
    Ok(())
}

/// Network shape used for the toy task.
pub fn toy_config(hidden: usize, timesteps: usize) -> NetworkConfig {
    NetworkConfig::with_sizes(TOY_SIDE * TOY_SIDE, hidden, 2).with_timesteps(timesteps)
}
