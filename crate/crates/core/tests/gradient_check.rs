// SPDX-License-Identifier: Apache-2.0

use lifsnn::encoding::SpikeTrain;
use lifsnn::network::{LayerWeights, Network, NetworkConfig};
use lifsnn::neuron::ResetMode;
use lifsnn::trainer::{loss_and_grad, GradOptions, Gradients, SpikeFn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;

fn random_net(seed: u64, reset: ResetMode) -> (Network, SpikeTrain) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cfg = NetworkConfig::with_sizes(4, 4, 2).with_timesteps(3);
    cfg.hidden.reset_mode = reset;
    cfg.output.reset_mode = reset;
    let mut layer = |rows, cols| {
        let mut l = LayerWeights::zeros(rows, cols);
        l.weights
            .iter_mut()
            .chain(&mut l.bias)
            .for_each(|w| *w = rng.gen_range(-0.8..0.8));
        l
    };
    let (hidden, output) = (layer(4, 4), layer(2, 4));
    let net = Network::new(cfg, hidden, output).unwrap();
    let spikes = SpikeTrain::from_fn(3, 4, |t, i| (seed as usize + 3 * t + i) % 3 != 0);
    (net, spikes)
}

/// Parameter slots as (layer, is_bias, flat index).
fn slots(net: &Network) -> Vec<(usize, bool, usize)> {
    let mut v = Vec::new();
    for (l, layer) in [&net.hidden, &net.output].into_iter().enumerate() {
        v.extend((0..layer.weights.len()).map(|i| (l, false, i)));
        v.extend((0..layer.bias.len()).map(|i| (l, true, i)));
    }
    v
}

fn param(net: &mut Network, (l, bias, i): (usize, bool, usize)) -> &mut f64 {
    let layer = if l == 0 {
        &mut net.hidden
    } else {
        &mut net.output
    };
    if bias {
        &mut layer.bias[i]
    } else {
        &mut layer.weights[i]
    }
}

fn grad(g: &Gradients, (l, bias, i): (usize, bool, usize)) -> f64 {
    let layer = if l == 0 { &g.hidden } else { &g.output };
    if bias {
        layer.bias[i]
    } else {
        layer.weights[i]
    }
}

/// Largest relative error between analytic and central-difference gradients
/// over the selected slots.
fn max_rel_error(net: &Network, x: &SpikeTrain, opts: &GradOptions, only_output: bool) -> f64 {
    let (_, g) = loss_and_grad(net, x, 1, opts).unwrap();
    let mut worst: f64 = 0.0;
    for s in slots(net).into_iter().filter(|s| !only_output || s.0 == 1) {
        let mut plus = net.clone();
        *param(&mut plus, s) += H;
        let mut minus = net.clone();
        *param(&mut minus, s) -= H;
        let fd = (loss_and_grad(&plus, x, 1, opts).unwrap().0
            - loss_and_grad(&minus, x, 1, opts).unwrap().0)
            / (2.0 * H);
        let a = grad(&g, s);
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}

#[test]
fn relaxed_forward_matches_finite_differences_on_every_parameter() {
    let opts = GradOptions {
        spike_fn: SpikeFn::Relaxed,
        detach_reset: false,
        ..GradOptions::default()
    };
    for seed in 0..5 {
        for reset in [ResetMode::Zero, ResetMode::Subtract] {
            let (net, x) = random_net(seed, reset);
            let err = max_rel_error(&net, &x, &opts, false);
            assert!(err <= 1e-3, "seed {seed} {reset:?}: rel error {err}");
        }
    }
}

#[test]
fn heaviside_output_layer_gradients_are_exact() {
    let opts = GradOptions::default();
    for seed in 0..5 {
        let (net, x) = random_net(seed, ResetMode::Zero);
        let err = max_rel_error(&net, &x, &opts, true);
        assert!(err <= 1e-3, "seed {seed}: rel error {err}");
    }
}

#[test]
fn surrogate_gives_nonzero_hidden_gradient() {
    let (net, x) = random_net(2, ResetMode::Zero);
    let (_, g) = loss_and_grad(&net, &x, 1, &GradOptions::default()).unwrap();
    assert!(g.hidden.weights.iter().any(|&v| v != 0.0));
}

#[test]
fn check_detects_a_dropped_reset_gradient() {
    // Detaching the reset makes the analytic gradient approximate; the
    // finite-difference comparison must notice.
    let opts = GradOptions {
        spike_fn: SpikeFn::Relaxed,
        detach_reset: true,
        ..GradOptions::default()
    };
    let (net, x) = random_net(0, ResetMode::Zero);
    assert!(max_rel_error(&net, &x, &opts, false) > 1e-2);
}
