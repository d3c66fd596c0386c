// SPDX-License-Identifier: Apache-2.0

use lifsnn::encoding::{
    normalize_image, rate_encode, read_spkt, write_spkt, GrayImage, SpikeTrain,
};
use lifsnn::hwmodel::{hw_forward, HwOptions};
use lifsnn::network::{
    forward, quantize_network, read_snnw, write_snnw, Network, NetworkConfig, QuantizedNetwork,
};
use proptest::prelude::*;

fn gradient_image(side: usize) -> GrayImage {
    let pixels = (0..side * side).map(|i| ((i * 37) % 256) as u8).collect();
    GrayImage::new(side, side, pixels).unwrap()
}

#[test]
fn pgm_to_prediction_is_reproducible() {
    let bytes = gradient_image(8).to_pgm_bytes();
    let image = GrayImage::parse_pgm(&bytes).unwrap();
    let grid = normalize_image(&image).unwrap();

    let mut files = Vec::new();
    for _ in 0..2 {
        let mut buf = Vec::new();
        write_spkt(&rate_encode(&grid, 25, 11).unwrap(), &mut buf).unwrap();
        files.push(buf);
    }
    assert_eq!(files[0], files[1]);
    let spikes = read_spkt(&files[0][..]).unwrap();

    let mut net = Network::zeros(NetworkConfig::with_sizes(64, 16, 2));
    for (k, w) in net.hidden.weights.iter_mut().enumerate() {
        *w = ((k * 7919) % 64) as f64 / 256.0 - 0.125;
    }
    for (k, w) in net.output.weights.iter_mut().enumerate() {
        *w = ((k * 104729) % 32) as f64 / 64.0 - 0.25;
    }
    let (q, _) = quantize_network(&net).unwrap();
    let mut weights = Vec::new();
    write_snnw(&[&q.hidden, &q.output], &mut weights).unwrap();
    let layers = read_snnw(&weights[..]).unwrap();
    let (q2, _) =
        QuantizedNetwork::from_layers(net.config.clone(), layers[0].clone(), layers[1].clone())
            .unwrap();
    assert_eq!(q, q2);

    let a = hw_forward(&q, &spikes, &HwOptions::default()).unwrap();
    let b = hw_forward(&q2, &spikes, &HwOptions::default()).unwrap();
    assert_eq!(a, b);
}

/// Weights k/128 with |k| < 32 and beta 0.5: over 8 steps the membrane
/// needs at most 7 + 8 fractional bits and the current stays below 1, so the
/// float model is exact in Q1.15 whenever its membranes stay in range.
fn representable_net(raw: &[i8]) -> Network {
    let mut cfg = NetworkConfig::with_sizes(4, 3, 2).with_timesteps(8);
    cfg.hidden.beta = 0.5;
    cfg.output.beta = 0.5;
    let mut net = Network::zeros(cfg);
    let w = |r: &i8| f64::from(*r) / 128.0;
    net.hidden.weights = raw[..12].iter().map(w).collect();
    net.output.weights = raw[12..18].iter().map(w).collect();
    net
}

proptest! {
    #[test]
    fn hw_equals_float_when_nothing_rounds_or_saturates(
        raw in proptest::collection::vec(-31i8..=31, 18),
        bits in proptest::collection::vec(any::<bool>(), 32),
    ) {
        let net = representable_net(&raw);
        let x = SpikeTrain::new(8, 4, bits).unwrap();
        let f = forward(&net, &x, true).unwrap();
        let in_range = f.trace.as_ref().unwrap().iter().all(|r| {
            r.hidden_membrane.iter().chain(&r.output_membrane).all(|u| (-1.0..1.0).contains(u))
        });
        prop_assume!(in_range);
        let (q, report) = quantize_network(&net).unwrap();
        prop_assert_eq!(report.total(), 0);
        let h = hw_forward(&q, &x, &HwOptions { record_trace: true, ..HwOptions::default() }).unwrap();
        prop_assert_eq!(&f.spike_counts, &h.spike_counts);
        prop_assert_eq!(f.trace, h.trace);
    }
}
