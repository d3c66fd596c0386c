// SPDX-License-Identifier: Apache-2.0

//! Bit-accurate model of the spiking accelerator datapath.
//!
//! Per neuron and timestep the datapath is:
//!
//! 1. **Adder tree.** Input spikes are binary, so each weight is gated by its
//!    spike bit and the gated Q1.15 values are summed pairwise in a 28-bit
//!    (Q12.15) tree. No multiplier is involved.
//! 2. **Bias.** The Q1.15 bias is widened and added after the tree.
//! 3. **Narrowing.** The 28-bit sum saturates into Q1.15.
//! 4. **Neuron unit.** `u' = beta*u + i - u_rest` in saturating Q1.15, then
//!    threshold compare, reset and refractory gate.
//!
//! Output spikes are shifted into one shift register per output neuron; the
//! final comparator picks the neuron with most ones (lowest index on ties).

mod compare;
mod cycles;

pub use compare::{compare_models, Comparison, Divergence, LayerKind};
pub use cycles::{
    cycle_model, metrics, tree_depth, CycleParams, CycleReport, LayerCycles, Metrics, PhaseCycles,
};

use std::collections::VecDeque;

use serde::Serialize;
use thiserror::Error;

use crate::encoding::SpikeTrain;
use crate::fixedpoint::{FixedPointError, QFormat, QValue};
use crate::network::{
    argmax_lowest, check_input, NetworkError, QuantizedLayer, QuantizedNetwork, StepRecord,
};
use crate::neuron::{NeuronParams, ResetMode};

/// Neuron-side format.
pub const NEURON_FORMAT: QFormat = QFormat::Q1_15;
/// Adder-tree accumulator format (28 bits).
pub const ACC_FORMAT: QFormat = QFormat::Q12_15;

#[derive(Debug, Error)]
pub enum HwError {
    #[error("spike vector has {spikes} entries but weight vector has {weights}")]
    LengthMismatch { spikes: usize, weights: usize },
    #[error("adder tree needs at least one input")]
    EmptyTree,
    #[error("adder tree node at level {level} holds {value}, outside the 28-bit accumulator")]
    AccumulatorOverflow { level: u32, value: i64 },
    #[error("weight in {0} instead of Q1.15")]
    WeightFormat(QFormat),
    #[error("invalid metric input: {0}")]
    InvalidMetric(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    FixedPoint(#[from] FixedPointError),
}

/// Sum of the spike-selected weights, exact in the 28-bit accumulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdderTreeResult {
    pub acc: QValue,
    /// Number of adder levels, `ceil(log2 n)`.
    pub depth: u32,
    /// Largest |value| held by any tree node, leaves included.
    pub peak_magnitude: u64,
    /// Two-input adders in the tree (`n - 1`).
    pub additions: u64,
}

/// Pairwise adder tree with a reusable level buffer.
#[derive(Debug, Default)]
pub struct AdderTree {
    nodes: Vec<i64>,
}

impl AdderTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reduce(
        &mut self,
        spikes: &[bool],
        weights: &[QValue],
    ) -> Result<AdderTreeResult, HwError> {
        if spikes.len() != weights.len() {
            return Err(HwError::LengthMismatch {
                spikes: spikes.len(),
                weights: weights.len(),
            });
        }
        if spikes.is_empty() {
            return Err(HwError::EmptyTree);
        }
        self.nodes.clear();
        for (&s, w) in spikes.iter().zip(weights) {
            if w.format() != NEURON_FORMAT {
                return Err(HwError::WeightFormat(w.format()));
            }
            // AND-gate, not a multiply.
            self.nodes.push(if s { w.raw() } else { 0 });
        }
        let mut peak = self
            .nodes
            .iter()
            .map(|v| v.unsigned_abs())
            .max()
            .unwrap_or(0);
        let mut len = self.nodes.len();
        let mut level = 0;
        while len > 1 {
            level += 1;
            let half = len / 2;
            for k in 0..half {
                let sum = self.nodes[2 * k] + self.nodes[2 * k + 1];
                if !ACC_FORMAT.contains_raw(sum as i128) {
                    return Err(HwError::AccumulatorOverflow { level, value: sum });
                }
                peak = peak.max(sum.unsigned_abs());
                self.nodes[k] = sum;
            }
            if len % 2 == 1 {
                self.nodes[half] = self.nodes[len - 1];
            }
            len = len.div_ceil(2);
        }
        Ok(AdderTreeResult {
            acc: QValue::from_raw(self.nodes[0], ACC_FORMAT)?,
            depth: level,
            peak_magnitude: peak,
            additions: spikes.len() as u64 - 1,
        })
    }
}

pub fn adder_tree(spikes: &[bool], weights: &[QValue]) -> Result<AdderTreeResult, HwError> {
    AdderTree::new().reduce(spikes, weights)
}

/// Neuron-unit parameters in Q1.15.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HwNeuronParams {
    pub beta: QValue,
    pub threshold: QValue,
    pub u_rest: QValue,
    pub reset_mode: ResetMode,
    pub refractory_steps: u32,
}

impl HwNeuronParams {
    /// Quantize float parameters; the count is how many of beta, threshold
    /// and u_rest saturated.
    pub fn from_float(p: &NeuronParams) -> Result<(Self, usize), FixedPointError> {
        let (beta, b) = QValue::quantize_reporting(p.beta, NEURON_FORMAT)?;
        let (threshold, t) = QValue::quantize_reporting(p.threshold, NEURON_FORMAT)?;
        let (u_rest, r) = QValue::quantize_reporting(p.u_rest, NEURON_FORMAT)?;
        let params = HwNeuronParams {
            beta,
            threshold,
            u_rest,
            reset_mode: p.reset_mode,
            refractory_steps: p.refractory_steps,
        };
        Ok((params, b as usize + t as usize + r as usize))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HwNeuronState {
    pub u: QValue,
    pub refractory_remaining: u32,
}

impl Default for HwNeuronState {
    fn default() -> Self {
        HwNeuronState {
            u: QValue::zero(NEURON_FORMAT),
            refractory_remaining: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NhuOutput {
    pub state: HwNeuronState,
    pub spike: bool,
    /// The accumulator plus bias did not fit Q1.15 and was clamped.
    pub input_saturated: bool,
}

/// One neuron-unit update from an adder-tree sum.
pub fn nhu_step(
    acc: QValue,
    bias: QValue,
    state: HwNeuronState,
    p: &HwNeuronParams,
) -> Result<NhuOutput, FixedPointError> {
    let summed = acc.sat_add(bias.widen(acc.format())?)?;
    let (input, input_saturated) = summed.narrow_reporting(NEURON_FORMAT)?;
    let candidate = p.beta.sat_mul(state.u)?.sat_add(input)?.sat_sub(p.u_rest)?;
    if state.refractory_remaining > 0 {
        let state = HwNeuronState {
            u: candidate,
            refractory_remaining: state.refractory_remaining - 1,
        };
        return Ok(NhuOutput {
            state,
            spike: false,
            input_saturated,
        });
    }
    if candidate.raw() >= p.threshold.raw() {
        let u = match p.reset_mode {
            ResetMode::Zero => QValue::zero(NEURON_FORMAT),
            ResetMode::Subtract => candidate.sat_sub(p.threshold)?,
        };
        let state = HwNeuronState {
            u,
            refractory_remaining: p.refractory_steps,
        };
        Ok(NhuOutput {
            state,
            spike: true,
            input_saturated,
        })
    } else {
        let state = HwNeuronState {
            u: candidate,
            ..state
        };
        Ok(NhuOutput {
            state,
            spike: false,
            input_saturated,
        })
    }
}

/// Fixed-length shift register; the oldest bit falls out when full.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ShiftRegister {
    depth: usize,
    bits: VecDeque<bool>,
}

impl ShiftRegister {
    pub fn new(depth: usize) -> Self {
        ShiftRegister {
            depth,
            bits: VecDeque::with_capacity(depth),
        }
    }

    pub fn shift_in(&mut self, bit: bool) {
        if self.bits.len() == self.depth {
            self.bits.pop_front();
        }
        if self.depth > 0 {
            self.bits.push_back(bit);
        }
    }

    pub fn count_ones(&self) -> u32 {
        self.bits.iter().filter(|&&b| b).count() as u32
    }

    /// Oldest first.
    pub fn bits(&self) -> impl Iterator<Item = bool> + '_ {
        self.bits.iter().copied()
    }
}

/// Datapath operation tally, by operator kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DatapathCounters {
    /// Adder-tree additions (the synaptic path).
    pub tree_additions: u64,
    /// Post-tree bias additions.
    pub bias_additions: u64,
    /// General multiplications. Only `beta * u` uses one.
    pub multiplications: u64,
    pub threshold_compares: u64,
    /// Times the accumulator+bias clamped into Q1.15.
    pub input_saturations: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HwOptions {
    pub record_trace: bool,
    pub cycles: CycleParams,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HwForwardOutput {
    pub spike_counts: Vec<u32>,
    pub prediction: usize,
    pub cycle_report: CycleReport,
    pub counters: DatapathCounters,
    pub output_memory: Vec<ShiftRegister>,
    pub trace: Option<Vec<StepRecord>>,
}

struct LayerUnit<'a> {
    weights: &'a QuantizedLayer,
    params: &'a HwNeuronParams,
    state: Vec<HwNeuronState>,
    spikes: Vec<bool>,
}

impl LayerUnit<'_> {
    fn step(
        &mut self,
        input: &[bool],
        tree: &mut AdderTree,
        counters: &mut DatapathCounters,
    ) -> Result<(), HwError> {
        for j in 0..self.weights.rows {
            let sum = tree.reduce(input, self.weights.row(j))?;
            let out = nhu_step(sum.acc, self.weights.bias[j], self.state[j], self.params)?;
            counters.tree_additions += sum.additions;
            counters.bias_additions += 1;
            counters.multiplications += 1;
            counters.threshold_compares += (self.state[j].refractory_remaining == 0) as u64;
            counters.input_saturations += out.input_saturated as u64;
            self.state[j] = out.state;
            self.spikes[j] = out.spike;
        }
        Ok(())
    }

    fn membranes(&self) -> Vec<f64> {
        self.state.iter().map(|s| s.u.dequantize()).collect()
    }
}

/// Run a quantized network through the bit-accurate datapath.
///
/// Layers are evaluated strictly in order within a timestep: all hidden
/// neurons update before any output neuron sees the new hidden spikes.
pub fn hw_forward(
    qnet: &QuantizedNetwork,
    spikes: &SpikeTrain,
    opts: &HwOptions,
) -> Result<HwForwardOutput, HwError> {
    let c = &qnet.config;
    check_input(c, spikes)?;
    let mut hidden = LayerUnit {
        weights: &qnet.hidden,
        params: &qnet.hidden_params,
        state: vec![HwNeuronState::default(); c.hidden_size],
        spikes: vec![false; c.hidden_size],
    };
    let mut output = LayerUnit {
        weights: &qnet.output,
        params: &qnet.output_params,
        state: vec![HwNeuronState::default(); c.output_size],
        spikes: vec![false; c.output_size],
    };
    let mut memory = vec![ShiftRegister::new(c.timesteps); c.output_size];
    let mut counters = DatapathCounters::default();
    let mut tree = AdderTree::new();
    let mut trace = opts.record_trace.then(Vec::new);

    for t in 0..c.timesteps {
        hidden.step(spikes.row(t), &mut tree, &mut counters)?;
        output.step(&hidden.spikes, &mut tree, &mut counters)?;
        for (reg, &s) in memory.iter_mut().zip(&output.spikes) {
            reg.shift_in(s);
        }
        if let Some(tr) = trace.as_mut() {
            tr.push(StepRecord {
                t,
                hidden_membrane: hidden.membranes(),
                hidden_spikes: hidden.spikes.clone(),
                output_membrane: output.membranes(),
                output_spikes: output.spikes.clone(),
            });
        }
    }
    let spike_counts: Vec<u32> = memory.iter().map(ShiftRegister::count_ones).collect();
    Ok(HwForwardOutput {
        prediction: argmax_lowest(&spike_counts),
        spike_counts,
        cycle_report: cycle_model(c, &opts.cycles),
        counters,
        output_memory: memory,
        trace,
    })
}
