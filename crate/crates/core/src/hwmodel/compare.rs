// SPDX-License-Identifier: Apache-2.0

//! Side-by-side run of the float network (on dequantized values) and the
//! hardware model, with per-step divergence reporting.

use serde::Serialize;

use super::{hw_forward, HwError, HwForwardOutput, HwOptions};
use crate::encoding::SpikeTrain;
use crate::network::{forward, ForwardOutput, QuantizedNetwork, StepRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Hidden,
    Output,
}

/// One neuron at one step where the two models disagree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Divergence {
    pub t: usize,
    pub layer: LayerKind,
    pub neuron: usize,
    pub float_membrane: f64,
    pub hw_membrane: f64,
    pub float_spike: bool,
    pub hw_spike: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub tolerance: f64,
    pub float: ForwardOutput,
    pub hw: HwForwardOutput,
    pub prediction_match: bool,
    pub first_divergence: Option<Divergence>,
    /// Neuron-steps whose membrane differs by more than `tolerance` or whose
    /// spike differs.
    pub divergences: usize,
    pub input_saturations: u64,
}

/// Run both models with traces and locate the first disagreement.
pub fn compare_models(
    qnet: &QuantizedNetwork,
    spikes: &SpikeTrain,
    tolerance: f64,
) -> Result<Comparison, HwError> {
    if !(tolerance >= 0.0) {
        return Err(HwError::InvalidMetric(format!(
            "tolerance must be >= 0, got {tolerance}"
        )));
    }
    let float = forward(&qnet.dequantize(), spikes, true)?;
    let hw = hw_forward(
        qnet,
        spikes,
        &HwOptions {
            record_trace: true,
            ..HwOptions::default()
        },
    )?;
    let mut first = None;
    let mut divergences = 0;
    let (ft, ht) = (
        float.trace.as_deref().unwrap_or(&[]),
        hw.trace.as_deref().unwrap_or(&[]),
    );
    for (f, h) in ft.iter().zip(ht) {
        let layers: [(LayerKind, fn(&StepRecord) -> (&[f64], &[bool])); 2] = [
            (LayerKind::Hidden, |r| {
                (&r.hidden_membrane, &r.hidden_spikes)
            }),
            (LayerKind::Output, |r| {
                (&r.output_membrane, &r.output_spikes)
            }),
        ];
        for (layer, get) in layers {
            let ((fu, fs), (hu, hs)) = (get(f), get(h));
            for n in 0..fu.len() {
                if (fu[n] - hu[n]).abs() > tolerance || fs[n] != hs[n] {
                    divergences += 1;
                    first.get_or_insert(Divergence {
                        t: f.t,
                        layer,
                        neuron: n,
                        float_membrane: fu[n],
                        hw_membrane: hu[n],
                        float_spike: fs[n],
                        hw_spike: hs[n],
                    });
                }
            }
        }
    }
    Ok(Comparison {
        tolerance,
        prediction_match: float.prediction == hw.prediction,
        input_saturations: hw.counters.input_saturations,
        float,
        hw,
        first_divergence: first,
        divergences,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{quantize_network, Network, NetworkConfig};

    fn net(w: f64) -> Network {
        let mut n = Network::zeros(NetworkConfig::with_sizes(3, 2, 2).with_timesteps(6));
        // Dyadic beta keeps every product exact in Q1.15.
        n.config.hidden.beta = 0.5;
        n.config.output.beta = 0.5;
        n.hidden.weights = vec![0.25, 0.125, w, -0.5, 0.375, 0.25];
        n.output.weights = vec![0.75, -0.25, 0.5, 0.5];
        n
    }

    #[test]
    fn representable_net_has_no_divergence() {
        let (q, report) = quantize_network(&net(0.5)).unwrap();
        assert_eq!(report.total(), 0);
        let x = SpikeTrain::from_fn(6, 3, |t, i| (t + i) % 2 == 0);
        let c = compare_models(&q, &x, 0.0).unwrap();
        assert!(c.prediction_match);
        assert_eq!(c.divergences, 0, "{:?}", c.first_divergence);
        assert_eq!(c.float.trace.as_ref().unwrap().len(), 6);
    }

    #[test]
    fn saturated_weight_is_reported() {
        let (q, report) = quantize_network(&net(1.3)).unwrap();
        assert_eq!(report.weights, 1);
        let x = SpikeTrain::from_fn(6, 3, |_, _| true);
        let c = compare_models(&q, &x, 1e-9).unwrap();
        // 0.25 + 0.125 + 32767/32768 clamps to the Q1.15 maximum.
        assert_eq!(c.input_saturations, 6);

        // Dequantized weight is -1.0 in both models; the membrane of neuron 0
        // walks -0.625, -0.9375, -1.09375 and the hardware clamps the last.
        let (q, _) = quantize_network(&net(-1.3)).unwrap();
        let c = compare_models(&q, &x, 1e-9).unwrap();
        let d = c.first_divergence.unwrap();
        assert_eq!((d.t, d.layer, d.neuron), (2, LayerKind::Hidden, 0));
        assert_eq!((d.float_membrane, d.hw_membrane), (-1.09375, -1.0));
    }

    #[test]
    fn zero_tolerance_sees_rounding() {
        let mut n = net(0.5);
        n.config.hidden.beta = 0.9;
        n.hidden.weights[0] = 0.3;
        let (q, _) = quantize_network(&n).unwrap();
        let x = SpikeTrain::from_fn(6, 3, |t, _| t == 0);
        let strict = compare_models(&q, &x, 0.0).unwrap();
        let loose = compare_models(&q, &x, 1e-3).unwrap();
        assert!(strict.divergences > 0);
        assert_eq!(loose.divergences, 0);
        assert!(compare_models(&q, &x, -1.0).is_err());
    }
}
