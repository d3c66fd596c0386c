// SPDX-License-Identifier: Apache-2.0

use lifsnn::network::quantize_network;
use lifsnn::trainer::{
    accuracy, encode_samples, hw_accuracy, init_network, make_toy_dataset, toy_config, train,
    TrainConfig,
};

#[test]
fn toy_task_trains_and_survives_quantization() {
    let data = make_toy_dataset(7, 200).unwrap();
    let cfg = TrainConfig {
        seed: 7,
        ..TrainConfig::default()
    };
    let net = init_network(toy_config(32, cfg.timesteps), cfg.seed).unwrap();
    let out = train(net, &data, &cfg).unwrap();
    assert_eq!(out.history.len(), 200);

    let best = out.history.iter().map(|s| s.train_acc).fold(0.0, f64::max);
    assert!(best >= 0.95, "best train accuracy {best}");

    // Loss falls in aggregate: means over consecutive 20-epoch blocks
    // strictly decrease. (Epoch-to-epoch noise from re-sampled spikes and
    // dropout makes a 10-epoch moving average wobble late in the run.)
    let blocks: Vec<f64> = out
        .history
        .chunks(20)
        .map(|c| c.iter().map(|s| s.loss).sum::<f64>() / 20.0)
        .collect();
    assert!(
        blocks.windows(2).all(|w| w[1] < w[0]),
        "block means {blocks:?}"
    );

    let (q, report) = quantize_network(&out.network).unwrap();
    let x = encode_samples(&data.test, cfg.timesteps, 1234).unwrap();
    let float = accuracy(&out.network, &data.test, &x).unwrap();
    let hw = hw_accuracy(&q, &data.test, &x).unwrap();
    assert!(
        float - hw <= 0.05,
        "float {float} hw {hw} saturation {report:?}"
    );
}

#[test]
fn same_seed_same_trajectory() {
    let data = make_toy_dataset(3, 40).unwrap();
    let cfg = TrainConfig {
        seed: 3,
        epochs: 4,
        timesteps: 10,
        ..TrainConfig::default()
    };
    let run = || train(init_network(toy_config(8, 10), 3).unwrap(), &data, &cfg).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.network, b.network);
    let bits = |o: &lifsnn::trainer::TrainOutcome| {
        o.history
            .iter()
            .map(|s| s.loss.to_bits())
            .collect::<Vec<_>>()
    };
    assert_eq!(bits(&a), bits(&b));
}
