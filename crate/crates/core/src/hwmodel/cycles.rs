// SPDX-License-Identifier: Apache-2.0

//! Parametric cycle model and throughput/efficiency metrics.
//!
//! The model is an estimate, not a measurement. Per timestep:
//!
//! * load: `load_cycles` to latch the input spike row;
//! * accumulate, per layer: a pipelined adder tree of depth
//!   `max(1, ceil(log2 fan_in))` processes `parallel_neurons` neurons per
//!   cycle, so it takes `depth + ceil(neurons / P) - 1` cycles;
//! * neuron update: `neuron_update_cycles` per layer to drain the NHU stage;
//! * readout: `readout_cycles` to shift output spikes into output memory.
//!
//! Layers run strictly one after the other.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::HwError;
use crate::network::{count_ops, NetworkConfig, OpCounts};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CycleParams {
    /// Neurons evaluated in parallel per layer (adder trees instantiated).
    pub parallel_neurons: usize,
    pub load_cycles: u64,
    pub neuron_update_cycles: u64,
    pub readout_cycles: u64,
}

impl Default for CycleParams {
    fn default() -> Self {
        CycleParams {
            parallel_neurons: 1,
            load_cycles: 1,
            neuron_update_cycles: 1,
            readout_cycles: 1,
        }
    }
}

/// `ceil(log2 n)`; 0 for `n <= 1`.
pub fn tree_depth(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PhaseCycles {
    pub load: u64,
    pub accumulate: u64,
    pub neuron_update: u64,
    pub readout: u64,
}

impl PhaseCycles {
    pub fn total(&self) -> u64 {
        self.load + self.accumulate + self.neuron_update + self.readout
    }

    fn scaled(&self, k: u64) -> PhaseCycles {
        PhaseCycles {
            load: self.load * k,
            accumulate: self.accumulate * k,
            neuron_update: self.neuron_update * k,
            readout: self.readout * k,
        }
    }
}

/// Per-timestep cycle budget of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LayerCycles {
    pub fan_in: usize,
    pub neurons: usize,
    pub tree_depth: u32,
    /// Sequential neuron groups, `ceil(neurons / P)`.
    pub groups: u64,
    pub accumulate: u64,
    pub neuron_update: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleReport {
    pub timesteps: u64,
    pub params: CycleParams,
    pub layers: Vec<LayerCycles>,
    pub per_timestep: PhaseCycles,
    /// Whole-inference phase totals.
    pub phases: PhaseCycles,
    pub cycles_per_inference: u64,
    pub ops: OpCounts,
    pub ops_total: u64,
}

pub fn cycle_model(config: &NetworkConfig, params: &CycleParams) -> CycleReport {
    let p = params.parallel_neurons.max(1);
    let layer = |fan_in: usize, neurons: usize| {
        let depth = tree_depth(fan_in);
        let groups = neurons.div_ceil(p) as u64;
        LayerCycles {
            fan_in,
            neurons,
            tree_depth: depth,
            groups,
            accumulate: depth.max(1) as u64 + groups.saturating_sub(1),
            neuron_update: params.neuron_update_cycles,
        }
    };
    let layers = vec![
        layer(config.input_size, config.hidden_size),
        layer(config.hidden_size, config.output_size),
    ];
    let per_timestep = PhaseCycles {
        load: params.load_cycles,
        accumulate: layers.iter().map(|l| l.accumulate).sum(),
        neuron_update: layers.iter().map(|l| l.neuron_update).sum(),
        readout: params.readout_cycles,
    };
    let timesteps = config.timesteps as u64;
    let phases = per_timestep.scaled(timesteps);
    let ops = count_ops(config);
    CycleReport {
        timesteps,
        params: *params,
        layers,
        per_timestep,
        cycles_per_inference: phases.total(),
        phases,
        ops,
        ops_total: ops.total(),
    }
}

/// Throughput and energy efficiency at a given clock and power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub frequency_hz: Option<f64>,
    pub power_w: f64,
    pub gops: f64,
    pub gops_per_watt: f64,
    pub latency_s: Option<f64>,
}

fn positive(name: &str, v: f64) -> Result<f64, HwError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(HwError::InvalidMetric(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

impl Metrics {
    /// Metrics from a known throughput; clock and latency are unknown.
    pub fn from_gops(gops: f64, power_w: f64) -> Result<Self, HwError> {
        let gops = positive("GOPS", gops)?;
        let power_w = positive("power", power_w)?;
        Ok(Metrics {
            frequency_hz: None,
            power_w,
            gops,
            gops_per_watt: gops / power_w,
            latency_s: None,
        })
    }
}

/// `gops = ops / (cycles / f) / 1e9`, `gops_per_watt = gops / power`.
pub fn metrics(report: &CycleReport, frequency_hz: f64, power_w: f64) -> Result<Metrics, HwError> {
    let frequency_hz = positive("frequency", frequency_hz)?;
    let power_w = positive("power", power_w)?;
    if report.cycles_per_inference == 0 {
        return Err(HwError::InvalidMetric(
            "cycle report has zero cycles".into(),
        ));
    }
    let latency = report.cycles_per_inference as f64 / frequency_hz;
    let gops = report.ops_total as f64 / latency / 1e9;
    Ok(Metrics {
        frequency_hz: Some(frequency_hz),
        power_w,
        gops,
        gops_per_watt: gops / power_w,
        latency_s: Some(latency),
    })
}

fn fmt_quantity(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

impl fmt::Display for Metrics {
    /// Aligned table: Power, Performance, Frequency, Energy Efficiency.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let freq = self
            .frequency_hz
            .map_or("-".to_string(), |hz| fmt_quantity(hz / 1e6));
        let rows = [
            ("Power (mW)", fmt_quantity(self.power_w * 1e3)),
            ("Performance (GOPS)", fmt_quantity(self.gops)),
            ("Frequency (MHz)", freq),
            (
                "Energy Efficiency (GOPS/W)",
                fmt_quantity(self.gops_per_watt),
            ),
        ];
        writeln!(f, "{:<28}{:>12}", "Metric", "Value")?;
        for (label, value) in rows {
            writeln!(f, "{label:<28}{value:>12}")?;
        }
        if let Some(l) = self.latency_s {
            writeln!(f, "{:<28}{:>12.3}", "Latency (us)", l * 1e6)?;
        }
        Ok(())
    }
}

impl fmt::Display for CycleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<28}{:>12}", "Phase", "Cycles")?;
        for (label, v) in [
            ("load", self.phases.load),
            ("accumulate", self.phases.accumulate),
            ("neuron update", self.phases.neuron_update),
            ("readout", self.phases.readout),
            ("total", self.cycles_per_inference),
        ] {
            writeln!(f, "{label:<28}{v:>12}")?;
        }
        writeln!(f, "{:<28}{:>12}", "ops per inference", self.ops_total)
    }
}
