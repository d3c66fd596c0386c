// SPDX-License-Identifier: Apache-2.0

//! Floating-point reference network: input spikes -> dense -> LIF hidden ->
//! dense -> LIF output, run for `timesteps` steps, classified by output
//! spike count (ties go to the lowest class index).

mod quantize;
mod weights_file;

pub use quantize::{quantize_network, QuantizedLayer, QuantizedNetwork, SaturationReport};
pub use weights_file::{read_snnw, write_snnw, SNNW_MAGIC, SNNW_VERSION};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::SpikeTrain;
use crate::fixedpoint::FixedPointError;
use crate::neuron::{apply_refractory, Lif, NeuronError, NeuronParams, NeuronState};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("shape mismatch: {what} expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: String,
        got: String,
    },
    #[error("invalid network config: {0}")]
    Config(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("weight file: {0}")]
    Format(String),
    #[error(transparent)]
    Neuron(#[from] NeuronError),
    #[error(transparent)]
    FixedPoint(#[from] FixedPointError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn shape_err(
    what: &'static str,
    expected: impl ToString,
    got: impl ToString,
) -> NetworkError {
    NetworkError::Shape {
        what,
        expected: expected.to_string(),
        got: got.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub input_size: usize,
    pub hidden_size: usize,
    pub output_size: usize,
    pub timesteps: usize,
    pub hidden: NeuronParams,
    pub output: NeuronParams,
    /// Applied to hidden spikes during training only.
    pub dropout_rate: f64,
}

impl Default for NetworkConfig {
    /// 4096-512-2 over 25 steps. Thresholds sit at 0.5 so they are
    /// representable in Q1.15.
    fn default() -> Self {
        let neuron = NeuronParams::default().with_threshold(0.5);
        NetworkConfig {
            input_size: 4096,
            hidden_size: 512,
            output_size: 2,
            timesteps: 25,
            hidden: neuron,
            output: neuron,
            dropout_rate: 0.25,
        }
    }
}

impl NetworkConfig {
    pub fn with_sizes(input: usize, hidden: usize, output: usize) -> Self {
        NetworkConfig {
            input_size: input,
            hidden_size: hidden,
            output_size: output,
            ..Self::default()
        }
    }

    pub fn with_timesteps(mut self, timesteps: usize) -> Self {
        self.timesteps = timesteps;
        self
    }

    /// Same refractory window on both layers.
    pub fn with_refractory(mut self, steps: u32) -> Self {
        self.hidden.refractory_steps = steps;
        self.output.refractory_steps = steps;
        self
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.input_size == 0 || self.hidden_size == 0 || self.output_size == 0 {
            return Err(NetworkError::Config("layer sizes must be >= 1".into()));
        }
        if self.timesteps == 0 {
            return Err(NetworkError::Config("timesteps must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(NetworkError::Config(
                "dropout_rate must lie in [0, 1)".into(),
            ));
        }
        self.hidden.validate()?;
        self.output.validate()?;
        Ok(())
    }
}

/// Dense layer: `rows` outputs by `cols` inputs, row-major, plus bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerWeights {
    pub fn new(
        rows: usize,
        cols: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self, NetworkError> {
        let layer = LayerWeights {
            rows,
            cols,
            weights,
            bias,
        };
        layer.validate()?;
        Ok(layer)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        LayerWeights {
            rows,
            cols,
            weights: vec![0.0; rows * cols],
            bias: vec![0.0; rows],
        }
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.weights.len() != self.rows * self.cols {
            return Err(shape_err(
                "weight matrix",
                format!("{}x{}", self.rows, self.cols),
                self.weights.len(),
            ));
        }
        if self.bias.len() != self.rows {
            return Err(shape_err("bias vector", self.rows, self.bias.len()));
        }
        if !self.weights.iter().chain(&self.bias).all(|v| v.is_finite()) {
            return Err(NetworkError::NonFinite("layer weights"));
        }
        Ok(())
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.weights[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.weights[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.weights[r * self.cols + c] = v;
    }

    /// `bias + sum of the columns selected by active input indices`.
    pub fn binary_matvec(&self, active: &[usize], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let row = self.row(r);
            *o = active.iter().fold(self.bias[r], |acc, &c| acc + row[c]);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub config: NetworkConfig,
    pub hidden: LayerWeights,
    pub output: LayerWeights,
}

impl Network {
    pub fn new(
        config: NetworkConfig,
        hidden: LayerWeights,
        output: LayerWeights,
    ) -> Result<Self, NetworkError> {
        let net = Network {
            config,
            hidden,
            output,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn zeros(config: NetworkConfig) -> Self {
        let hidden = LayerWeights::zeros(config.hidden_size, config.input_size);
        let output = LayerWeights::zeros(config.output_size, config.hidden_size);
        Network {
            config,
            hidden,
            output,
        }
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        self.config.validate()?;
        self.hidden.validate()?;
        self.output.validate()?;
        let c = &self.config;
        if (self.hidden.rows, self.hidden.cols) != (c.hidden_size, c.input_size) {
            return Err(shape_err(
                "hidden layer",
                format!("{}x{}", c.hidden_size, c.input_size),
                format!("{}x{}", self.hidden.rows, self.hidden.cols),
            ));
        }
        if (self.output.rows, self.output.cols) != (c.output_size, c.hidden_size) {
            return Err(shape_err(
                "output layer",
                format!("{}x{}", c.output_size, c.hidden_size),
                format!("{}x{}", self.output.rows, self.output.cols),
            ));
        }
        Ok(())
    }
}

/// Membranes and spikes of both layers after one timestep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub t: usize,
    pub hidden_membrane: Vec<f64>,
    pub hidden_spikes: Vec<bool>,
    pub output_membrane: Vec<f64>,
    pub output_spikes: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForwardOutput {
    pub spike_counts: Vec<u32>,
    pub prediction: usize,
    pub trace: Option<Vec<StepRecord>>,
}

/// Index of the largest count; ties resolve to the lowest index.
pub fn argmax_lowest(counts: &[u32]) -> usize {
    let mut best = 0;
    for (k, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = k;
        }
    }
    best
}

pub(crate) fn check_input(config: &NetworkConfig, spikes: &SpikeTrain) -> Result<(), NetworkError> {
    if spikes.neurons() != config.input_size {
        return Err(shape_err(
            "input neurons",
            config.input_size,
            spikes.neurons(),
        ));
    }
    if spikes.timesteps() != config.timesteps {
        return Err(shape_err("timesteps", config.timesteps, spikes.timesteps()));
    }
    Ok(())
}

pub(crate) fn active_indices(bits: &[bool], out: &mut Vec<usize>) {
    out.clear();
    out.extend(bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i));
}

/// Run the float reference network over a spike train.
pub fn forward(
    net: &Network,
    spikes: &SpikeTrain,
    record_trace: bool,
) -> Result<ForwardOutput, NetworkError> {
    net.validate()?;
    check_input(&net.config, spikes)?;
    let c = &net.config;
    let mut hidden_state = vec![NeuronState::default(); c.hidden_size];
    let mut output_state = vec![NeuronState::default(); c.output_size];
    let mut hidden_current = vec![0.0; c.hidden_size];
    let mut output_current = vec![0.0; c.output_size];
    let mut hidden_spikes = vec![false; c.hidden_size];
    let mut output_spikes = vec![false; c.output_size];
    let mut counts = vec![0u32; c.output_size];
    let mut active = Vec::new();
    let mut trace = record_trace.then(Vec::new);

    for t in 0..c.timesteps {
        active_indices(spikes.row(t), &mut active);
        net.hidden.binary_matvec(&active, &mut hidden_current);
        for ((s, &i), out) in hidden_state
            .iter_mut()
            .zip(&hidden_current)
            .zip(&mut hidden_spikes)
        {
            let (next, spike) = apply_refractory(&Lif, *s, i, &c.hidden);
            *s = next;
            *out = spike;
        }
        active_indices(&hidden_spikes, &mut active);
        net.output.binary_matvec(&active, &mut output_current);
        for (k, (s, &i)) in output_state.iter_mut().zip(&output_current).enumerate() {
            let (next, spike) = apply_refractory(&Lif, *s, i, &c.output);
            *s = next;
            output_spikes[k] = spike;
            counts[k] += spike as u32;
        }
        if let Some(tr) = trace.as_mut() {
            tr.push(StepRecord {
                t,
                hidden_membrane: hidden_state.iter().map(|s| s.u).collect(),
                hidden_spikes: hidden_spikes.clone(),
                output_membrane: output_state.iter().map(|s| s.u).collect(),
                output_spikes: output_spikes.clone(),
            });
        }
    }
    Ok(ForwardOutput {
        prediction: argmax_lowest(&counts),
        spike_counts: counts,
        trace,
    })
}

/// Operation counts under the convention one synaptic accumulate = 1 op and
/// one neuron update = 1 op.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub synaptic_per_step: u64,
    pub neuron_updates_per_step: u64,
    pub timesteps: u64,
}

impl OpCounts {
    pub fn per_step(&self) -> u64 {
        self.synaptic_per_step + self.neuron_updates_per_step
    }

    pub fn synaptic_total(&self) -> u64 {
        self.synaptic_per_step * self.timesteps
    }

    pub fn neuron_updates_total(&self) -> u64 {
        self.neuron_updates_per_step * self.timesteps
    }

    pub fn total(&self) -> u64 {
        self.per_step() * self.timesteps
    }
}

pub fn count_ops(config: &NetworkConfig) -> OpCounts {
    let (i, h, o) = (
        config.input_size as u64,
        config.hidden_size as u64,
        config.output_size as u64,
    );
    OpCounts {
        synaptic_per_step: i * h + h * o,
        neuron_updates_per_step: h + o,
        timesteps: config.timesteps as u64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuron::ResetMode;
    use proptest::prelude::*;

    fn toy_config(t: usize) -> NetworkConfig {
        let p = NeuronParams::default().with_beta(0.5).with_threshold(1.0);
        NetworkConfig {
            hidden: p,
            output: p,
            ..NetworkConfig::with_sizes(2, 2, 2)
        }
        .with_timesteps(t)
    }

    #[test]
    fn zero_input_predicts_class_zero() {
        let net = Network::zeros(NetworkConfig::with_sizes(8, 4, 2).with_timesteps(5));
        let out = forward(&net, &SpikeTrain::zeros(5, 8), false).unwrap();
        assert_eq!(out.spike_counts, vec![0, 0]);
        assert_eq!(out.prediction, 0);
    }

    #[test]
    fn only_driven_output_can_win() {
        let cfg = NetworkConfig::with_sizes(3, 2, 2).with_timesteps(6);
        let mut net = Network::zeros(cfg);
        net.hidden.weights.fill(0.6);
        net.output.weights = vec![0.9, 0.9, 0.0, 0.0];
        let spikes = SpikeTrain::from_fn(6, 3, |_, _| true);
        let out = forward(&net, &spikes, false).unwrap();
        assert!(out.spike_counts[0] > 0);
        assert_eq!(out.spike_counts[1], 0);
        assert_eq!(out.prediction, 0);

        // Mirror the output weights: class 1 wins.
        net.output.weights = vec![0.0, 0.0, 0.9, 0.9];
        assert_eq!(forward(&net, &spikes, false).unwrap().prediction, 1);
    }

    /// Independent step-by-step simulation of a 2-2-2 net with all state in
    /// plain locals. beta = 0.5, threshold = 1.0, reset to zero.
    fn toy_oracle(
        w1: [[f64; 2]; 2],
        b1: [f64; 2],
        w2: [[f64; 2]; 2],
        b2: [f64; 2],
        x: &[[bool; 2]],
    ) -> [u32; 2] {
        let (mut u1, mut u2) = ([0.0f64; 2], [0.0f64; 2]);
        let mut counts = [0u32; 2];
        for row in x {
            let mut h = [false; 2];
            for j in 0..2 {
                let mut i = b1[j];
                for k in 0..2 {
                    if row[k] {
                        i += w1[j][k];
                    }
                }
                let c = 0.5 * u1[j] + i;
                h[j] = c >= 1.0;
                u1[j] = if h[j] { 0.0 } else { c };
            }
            for j in 0..2 {
                let mut i = b2[j];
                for k in 0..2 {
                    if h[k] {
                        i += w2[j][k];
                    }
                }
                let c = 0.5 * u2[j] + i;
                if c >= 1.0 {
                    counts[j] += 1;
                    u2[j] = 0.0;
                } else {
                    u2[j] = c;
                }
            }
        }
        counts
    }

    #[test]
    fn toy_2_2_2_matches_oracle() {
        let w1 = [[0.75, 0.25], [0.5, 0.5]];
        let b1 = [0.125, -0.25];
        let w2 = [[0.625, 0.5], [-0.25, 1.0]];
        let b2 = [0.0, 0.125];
        let x = [[true, false], [true, true], [false, true], [true, true]];
        let expected = toy_oracle(w1, b1, w2, b2, &x);
        // By hand: n0 fires at t=1 and t=3, n1 at t=3; output 0 crosses
        // once at t=3 (0.15625 + 1.125), output 1 peaks at 0.921875.
        assert_eq!(expected, [1, 0]);

        let cfg = toy_config(4);
        let hidden = LayerWeights::new(2, 2, w1.concat(), b1.to_vec()).unwrap();
        let output = LayerWeights::new(2, 2, w2.concat(), b2.to_vec()).unwrap();
        let net = Network::new(cfg, hidden, output).unwrap();
        let spikes = SpikeTrain::from_fn(4, 2, |t, i| x[t][i]);
        let out = forward(&net, &spikes, true).unwrap();
        assert_eq!(out.spike_counts, expected.to_vec());
        assert_eq!(out.prediction, 0);
        assert_eq!(out.trace.unwrap().len(), 4);
    }

    #[test]
    fn shape_errors() {
        let net = Network::zeros(NetworkConfig::with_sizes(4, 3, 2).with_timesteps(5));
        assert!(matches!(
            forward(&net, &SpikeTrain::zeros(5, 3), false),
            Err(NetworkError::Shape { .. })
        ));
        assert!(matches!(
            forward(&net, &SpikeTrain::zeros(4, 4), false),
            Err(NetworkError::Shape { .. })
        ));
        let mut bad = net.clone();
        bad.hidden.bias.pop();
        assert!(bad.validate().is_err());
        assert!(LayerWeights::new(1, 1, vec![f64::NAN], vec![0.0]).is_err());
    }

    #[test]
    fn op_counts() {
        let ops = count_ops(&NetworkConfig::default());
        assert_eq!(ops.synaptic_per_step, 2_098_176);
        assert_eq!(ops.neuron_updates_per_step, 514);
        assert_eq!(ops.total(), 25 * (2_098_176 + 514));
        let tiny = count_ops(&NetworkConfig::with_sizes(1, 1, 1).with_timesteps(1));
        assert_eq!(tiny.synaptic_per_step, 2);
        let one = count_ops(&NetworkConfig::default().with_timesteps(1));
        assert_eq!(ops.synaptic_total(), 25 * one.synaptic_total());
    }

    #[test]
    fn argmax_ties() {
        assert_eq!(argmax_lowest(&[3, 3]), 0);
        assert_eq!(argmax_lowest(&[1, 4, 4]), 1);
        assert_eq!(argmax_lowest(&[0]), 0);
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = NetworkConfig::default().with_refractory(5);
        let text = serde_json::to_string(&cfg).unwrap();
        let back: NetworkConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let partial: NetworkConfig =
            serde_json::from_str(r#"{"hidden_size": 16, "hidden": {"reset_mode": "subtract"}}"#)
                .unwrap();
        assert_eq!(partial.hidden_size, 16);
        assert_eq!(partial.input_size, 4096);
        assert_eq!(partial.hidden.reset_mode, ResetMode::Subtract);
    }

    /// Weights on a 1/64 grid so every partial sum is exact in f64.
    fn dyadic_net(seed: u64, i: usize, h: usize, o: usize, t: usize) -> Network {
        let mut x = seed | 1;
        let mut next = move || {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            ((x % 97) as f64 - 48.0) / 64.0
        };
        let cfg = NetworkConfig::with_sizes(i, h, o).with_timesteps(t);
        let mut net = Network::zeros(cfg);
        net.hidden.weights.iter_mut().for_each(|w| *w = next());
        net.hidden.bias.iter_mut().for_each(|w| *w = next() / 4.0);
        net.output.weights.iter_mut().for_each(|w| *w = next());
        net.output.bias.iter_mut().for_each(|w| *w = next() / 4.0);
        net
    }

    proptest! {
        #[test]
        fn deterministic(seed in any::<u64>(), bits in proptest::collection::vec(any::<bool>(), 6 * 5)) {
            let net = dyadic_net(seed, 5, 4, 2, 6);
            let spikes = SpikeTrain::new(6, 5, bits).unwrap();
            prop_assert_eq!(forward(&net, &spikes, false).unwrap(), forward(&net, &spikes, false).unwrap());
        }

        #[test]
        fn hidden_permutation_equivariance(seed in any::<u64>(), rot in 1usize..6, bits in proptest::collection::vec(any::<bool>(), 8 * 6)) {
            let net = dyadic_net(seed, 6, 6, 3, 8);
            let perm: Vec<usize> = (0..6).map(|j| (j + rot) % 6).collect();
            let mut p = net.clone();
            for (new, &old) in perm.iter().enumerate() {
                for c in 0..6 {
                    p.hidden.set(new, c, net.hidden.get(old, c));
                }
                p.hidden.bias[new] = net.hidden.bias[old];
                for k in 0..3 {
                    p.output.set(k, new, net.output.get(k, old));
                }
            }
            let spikes = SpikeTrain::new(8, 6, bits).unwrap();
            prop_assert_eq!(forward(&net, &spikes, false).unwrap().spike_counts, forward(&p, &spikes, false).unwrap().spike_counts);
        }

        #[test]
        fn monotone_drive_single_output(
            weights in proptest::collection::vec(0u8..64, 4),
            bits in proptest::collection::vec(any::<bool>(), 10 * 4),
            flip in 0usize..40,
        ) {
            // No hidden dynamics to speak of: one hidden neuron per input
            // relaying spikes (weight 1 >= threshold), one output neuron.
            let p = NeuronParams::default().with_beta(0.9).with_threshold(0.5);
            let cfg = NetworkConfig { hidden: p, output: p, ..NetworkConfig::with_sizes(4, 4, 1).with_timesteps(10) };
            let mut hidden = LayerWeights::zeros(4, 4);
            for j in 0..4 { hidden.set(j, j, 1.0); }
            let output = LayerWeights::new(1, 4, weights.iter().map(|&w| w as f64 / 64.0).collect(), vec![0.0]).unwrap();
            let net = Network::new(cfg, hidden, output).unwrap();
            let base = SpikeTrain::new(10, 4, bits).unwrap();
            let mut more = base.clone();
            more.set(flip / 4, flip % 4, true);
            let a = forward(&net, &base, false).unwrap().spike_counts[0];
            let b = forward(&net, &more, false).unwrap().spike_counts[0];
            prop_assert!(b >= a, "{} < {}", b, a);
        }
    }
}
