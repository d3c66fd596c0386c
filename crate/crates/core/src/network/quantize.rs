// SPDX-License-Identifier: Apache-2.0

use serde::Serialize;

use super::{shape_err, LayerWeights, Network, NetworkConfig, NetworkError};
use crate::fixedpoint::{QFormat, QValue};
use crate::hwmodel::HwNeuronParams;

/// Dense layer in Q1.15, row-major like [`LayerWeights`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedLayer {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<QValue>,
    pub bias: Vec<QValue>,
}

impl QuantizedLayer {
    pub fn new(
        rows: usize,
        cols: usize,
        weights: Vec<QValue>,
        bias: Vec<QValue>,
    ) -> Result<Self, NetworkError> {
        if weights.len() != rows * cols {
            return Err(shape_err(
                "weight matrix",
                format!("{rows}x{cols}"),
                weights.len(),
            ));
        }
        if bias.len() != rows {
            return Err(shape_err("bias vector", rows, bias.len()));
        }
        if let Some(q) = weights
            .iter()
            .chain(&bias)
            .find(|q| q.format() != QFormat::Q1_15)
        {
            return Err(NetworkError::Format(format!(
                "layer value in {} instead of Q1.15",
                q.format()
            )));
        }
        Ok(QuantizedLayer {
            rows,
            cols,
            weights,
            bias,
        })
    }

    pub fn row(&self, r: usize) -> &[QValue] {
        &self.weights[r * self.cols..(r + 1) * self.cols]
    }

    pub fn dequantize(&self) -> LayerWeights {
        LayerWeights {
            rows: self.rows,
            cols: self.cols,
            weights: self.weights.iter().map(|q| q.dequantize()).collect(),
            bias: self.bias.iter().map(|q| q.dequantize()).collect(),
        }
    }

    fn quantize(layer: &LayerWeights, report: &mut SaturationReport) -> Result<Self, NetworkError> {
        let q = |v: f64, counter: &mut usize| -> Result<QValue, NetworkError> {
            let (q, clipped) = QValue::quantize_reporting(v, QFormat::Q1_15)?;
            *counter += clipped as usize;
            Ok(q)
        };
        let weights = layer
            .weights
            .iter()
            .map(|&v| q(v, &mut report.weights))
            .collect::<Result<_, _>>()?;
        let bias = layer
            .bias
            .iter()
            .map(|&v| q(v, &mut report.biases))
            .collect::<Result<_, _>>()?;
        Ok(QuantizedLayer {
            rows: layer.rows,
            cols: layer.cols,
            weights,
            bias,
        })
    }
}

/// How many values clipped to the Q1.15 range during quantization.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SaturationReport {
    pub weights: usize,
    pub biases: usize,
    pub neuron_params: usize,
}

impl SaturationReport {
    pub fn total(&self) -> usize {
        self.weights + self.biases + self.neuron_params
    }
}

/// Q1.15 network ready for the hardware model.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedNetwork {
    pub config: NetworkConfig,
    pub hidden: QuantizedLayer,
    pub output: QuantizedLayer,
    pub hidden_params: HwNeuronParams,
    pub output_params: HwNeuronParams,
}

impl QuantizedNetwork {
    /// Assemble from already-quantized layers (e.g. a weight file); neuron
    /// parameters are quantized from `config`.
    pub fn from_layers(
        config: NetworkConfig,
        hidden: QuantizedLayer,
        output: QuantizedLayer,
    ) -> Result<(Self, SaturationReport), NetworkError> {
        config.validate()?;
        let expect = |what, layer: &QuantizedLayer, rows: usize, cols: usize| {
            if (layer.rows, layer.cols) == (rows, cols) {
                Ok(())
            } else {
                Err(shape_err(
                    what,
                    format!("{rows}x{cols}"),
                    format!("{}x{}", layer.rows, layer.cols),
                ))
            }
        };
        expect(
            "hidden layer",
            &hidden,
            config.hidden_size,
            config.input_size,
        )?;
        expect(
            "output layer",
            &output,
            config.output_size,
            config.hidden_size,
        )?;
        let mut report = SaturationReport::default();
        let (hidden_params, n1) = HwNeuronParams::from_float(&config.hidden)?;
        let (output_params, n2) = HwNeuronParams::from_float(&config.output)?;
        report.neuron_params = n1 + n2;
        Ok((
            QuantizedNetwork {
                config,
                hidden,
                output,
                hidden_params,
                output_params,
            },
            report,
        ))
    }

    /// Float network carrying the exact dequantized values.
    pub fn dequantize(&self) -> Network {
        let mut config = self.config.clone();
        for (p, hw) in [
            (&mut config.hidden, &self.hidden_params),
            (&mut config.output, &self.output_params),
        ] {
            p.beta = hw.beta.dequantize();
            p.threshold = hw.threshold.dequantize();
            p.u_rest = hw.u_rest.dequantize();
        }
        Network {
            config,
            hidden: self.hidden.dequantize(),
            output: self.output.dequantize(),
        }
    }
}

/// Quantize every weight, bias and neuron parameter to Q1.15, saturating
/// out-of-range values and counting them.
pub fn quantize_network(
    net: &Network,
) -> Result<(QuantizedNetwork, SaturationReport), NetworkError> {
    net.validate()?;
    let mut report = SaturationReport::default();
    let hidden = QuantizedLayer::quantize(&net.hidden, &mut report)?;
    let output = QuantizedLayer::quantize(&net.output, &mut report)?;
    let (qnet, params_report) = QuantizedNetwork::from_layers(net.config.clone(), hidden, output)?;
    report.neuron_params = params_report.neuron_params;
    Ok((qnet, report))
}
