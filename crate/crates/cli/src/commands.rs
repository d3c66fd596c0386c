// SPDX-License-Identifier: Apache-2.0

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use lifsnn::encoding::{
    normalize_image, rate_encode, read_spkt, write_spkt, GrayImage, SpikeTrain,
};
use lifsnn::hwmodel::{
    compare_models, cycle_model, hw_forward, metrics, CycleParams, HwOptions, Metrics,
};
use lifsnn::network::{
    forward, quantize_network, read_snnw, write_snnw, Network, NetworkConfig, QuantizedNetwork,
    SaturationReport, SNNW_MAGIC,
};
use lifsnn::trainer::{
    accuracy, encode_samples, eval_seed, hw_accuracy, init_network, make_toy_dataset, toy_config,
    train, write_history_csv, TrainConfig,
};

use crate::error::CliError;
use crate::manifest::{sidecar, RunManifest};
use crate::{
    BenchArgs, Cli, Command, CompareArgs, EncodeArgs, Format, InferArgs, Mode, NetInput,
    QuantizeArgs, TrainToyArgs,
};

pub fn dispatch(cli: &Cli, argv: &[String], out: &mut dyn Write) -> Result<(), CliError> {
    let manifest = match &cli.command {
        Command::Encode(a) => encode(a, argv, out)?,
        Command::Quantize(a) => quantize(a, argv, out)?,
        Command::Infer(a) => infer(a, argv, out)?,
        Command::Compare(a) => compare(a, argv, out)?,
        Command::Bench(a) => bench(a, argv, out)?,
        Command::TrainToy(a) => train_toy(a, argv, out)?,
    };
    if let Some(path) = &cli.manifest {
        manifest.write(path)?;
    }
    Ok(())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_slice(&read_bytes(path)?).map_err(|e| CliError::data(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn write_json_file(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::data(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

fn emit(out: &mut dyn Write, value: &Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("json value serializes");
    writeln!(out, "{text}").map_err(|e| CliError::Invalid(e.to_string()))
}

fn load_spikes(path: &Path) -> Result<SpikeTrain, CliError> {
    read_spkt(&read_bytes(path)?[..]).map_err(|e| CliError::data(path, e))
}

struct LoadedNet {
    float: Network,
    quantized: QuantizedNetwork,
    saturation: SaturationReport,
}

/// Accepts an SNNW file (neuron parameters from `--config` or defaults,
/// sizes from the file, timesteps from the spike train) or a float JSON.
fn load_net(input: &NetInput, timesteps: usize) -> Result<LoadedNet, CliError> {
    let bytes = read_bytes(&input.net)?;
    let config: Option<NetworkConfig> = input.config.as_deref().map(read_json).transpose()?;
    if bytes.starts_with(&SNNW_MAGIC) {
        let layers = read_snnw(&bytes[..]).map_err(|e| CliError::data(&input.net, e))?;
        let [hidden, output]: [_; 2] = layers.try_into().map_err(|l: Vec<_>| {
            CliError::data(&input.net, format!("expected 2 layers, found {}", l.len()))
        })?;
        let config = config.unwrap_or_else(|| {
            NetworkConfig::with_sizes(hidden.cols, hidden.rows, output.rows)
                .with_timesteps(timesteps)
        });
        let (quantized, saturation) = QuantizedNetwork::from_layers(config, hidden, output)?;
        Ok(LoadedNet {
            float: quantized.dequantize(),
            quantized,
            saturation,
        })
    } else {
        let mut float: Network = read_json(&input.net)?;
        if let Some(c) = config {
            float.config = c;
        }
        let (quantized, saturation) = quantize_network(&float)?;
        Ok(LoadedNet {
            float,
            quantized,
            saturation,
        })
    }
}

fn encode(a: &EncodeArgs, argv: &[String], out: &mut dyn Write) -> Result<RunManifest, CliError> {
    if !a.no_resize && a.size == 0 {
        return Err(CliError::Usage("--size must be >= 1".into()));
    }
    let image = GrayImage::read_pgm(&a.image).map_err(|e| CliError::data(&a.image, e))?;
    let image = if a.no_resize || (image.width(), image.height()) == (a.size, a.size) {
        image
    } else {
        image.resize_nearest(a.size, a.size)
    };
    let grid = normalize_image(&image)?;
    let train =
        rate_encode(&grid, a.timesteps, a.seed).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut w = create(&a.out)?;
    write_spkt(&train, &mut w).map_err(|e| CliError::data(&a.out, e))?;
    w.flush().map_err(|e| CliError::io(&a.out, e))?;

    let manifest = RunManifest::new("encode", argv)
        .seed("encode", a.seed)
        .input(&a.image)
        .output(&a.out);
    manifest.write(&sidecar(&a.out))?;
    emit(
        out,
        &json!({
            "out": a.out,
            "width": image.width(),
            "height": image.height(),
            "timesteps": train.timesteps(),
            "neurons": train.neurons(),
            "spikes": train.count_ones(),
            "manifest": manifest,
        }),
    )?;
    Ok(manifest)
}

fn quantize(
    a: &QuantizeArgs,
    argv: &[String],
    out: &mut dyn Write,
) -> Result<RunManifest, CliError> {
    let net: Network = read_json(&a.net)?;
    let (q, report) = quantize_network(&net)?;
    let mut w = create(&a.out)?;
    write_snnw(&[&q.hidden, &q.output], &mut w).map_err(|e| CliError::data(&a.out, e))?;
    w.flush().map_err(|e| CliError::io(&a.out, e))?;
    let manifest = RunManifest::new("quantize", argv)
        .input(&a.net)
        .output(&a.out);
    manifest.write(&sidecar(&a.out))?;
    emit(
        out,
        &json!({
            "out": a.out,
            "layers": [[q.hidden.rows, q.hidden.cols], [q.output.rows, q.output.cols]],
            "saturation": report,
            "manifest": manifest,
        }),
    )?;
    Ok(manifest)
}

fn net_manifest(
    command: &str,
    argv: &[String],
    input: &NetInput,
    spikes: &SpikeTrain,
) -> RunManifest {
    let mut m = RunManifest::new(command, argv)
        .input(&input.net)
        .input(&input.spikes)
        .config(input.config.as_deref());
    if let Some(seed) = spikes.seed() {
        m = m.seed("encode", seed);
    }
    m
}

fn infer(a: &InferArgs, argv: &[String], out: &mut dyn Write) -> Result<RunManifest, CliError> {
    if a.parallel == 0 {
        return Err(CliError::Usage("--parallel must be >= 1".into()));
    }
    let spikes = load_spikes(&a.input.spikes)?;
    let net = load_net(&a.input, spikes.timesteps())?;
    let manifest = net_manifest("infer", argv, &a.input, &spikes);
    let mut result = match a.mode {
        Mode::Float => {
            let r = forward(&net.float, &spikes, a.input.trace)?;
            json!({ "mode": "float", "prediction": r.prediction, "spike_counts": r.spike_counts, "trace": r.trace })
        }
        Mode::Hw => {
            let opts = HwOptions {
                record_trace: a.input.trace,
                cycles: CycleParams {
                    parallel_neurons: a.parallel,
                    ..CycleParams::default()
                },
            };
            let r = hw_forward(&net.quantized, &spikes, &opts)?;
            json!({
                "mode": "hw",
                "prediction": r.prediction,
                "spike_counts": r.spike_counts,
                "cycle_report": r.cycle_report,
                "counters": r.counters,
                "quantization_saturation": net.saturation,
                "trace": r.trace,
            })
        }
    };
    if !a.input.trace {
        result.as_object_mut().unwrap().remove("trace");
    }
    result["manifest"] = json!(manifest);
    emit(out, &result)?;
    Ok(manifest)
}

fn compare(a: &CompareArgs, argv: &[String], out: &mut dyn Write) -> Result<RunManifest, CliError> {
    if !(a.tolerance >= 0.0) {
        return Err(CliError::Usage("--tolerance must be >= 0".into()));
    }
    let spikes = load_spikes(&a.input.spikes)?;
    let net = load_net(&a.input, spikes.timesteps())?;
    let c = compare_models(&net.quantized, &spikes, a.tolerance)?;
    let manifest = net_manifest("compare", argv, &a.input, &spikes);
    let mut result = json!({
        "prediction_match": c.prediction_match,
        "float": { "prediction": c.float.prediction, "spike_counts": c.float.spike_counts },
        "hw": { "prediction": c.hw.prediction, "spike_counts": c.hw.spike_counts },
        "tolerance": c.tolerance,
        "divergences": c.divergences,
        "first_divergence": c.first_divergence,
        "input_saturations": c.input_saturations,
        "quantization_saturation": net.saturation,
        "manifest": manifest,
    });
    if a.input.trace {
        result["trace"] = json!({ "float": c.float.trace, "hw": c.hw.trace });
    }
    emit(out, &result)?;
    Ok(manifest)
}

fn positive(flag: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Usage(format!("{flag} must be positive, got {v}")))
    }
}

fn bench(a: &BenchArgs, argv: &[String], out: &mut dyn Write) -> Result<RunManifest, CliError> {
    let power_w = positive("--power-mw", a.power_mw)? / 1e3;
    let freq_hz = a
        .freq_mhz
        .map(|f| positive("--freq-mhz", f))
        .transpose()?
        .map(|f| f * 1e6);
    if a.parallel == 0 {
        return Err(CliError::Usage("--parallel must be >= 1".into()));
    }
    let manifest = RunManifest::new("bench", argv).config(a.config.as_deref());
    let (m, report) = match (a.gops, freq_hz) {
        (Some(g), f) => {
            let mut m = Metrics::from_gops(positive("--gops", g)?, power_w)?;
            m.frequency_hz = f;
            (m, None)
        }
        (None, Some(f)) => {
            let config: NetworkConfig = a
                .config
                .as_deref()
                .map(read_json)
                .transpose()?
                .unwrap_or_default();
            config.validate()?;
            let params = CycleParams {
                parallel_neurons: a.parallel,
                ..CycleParams::default()
            };
            let report = cycle_model(&config, &params);
            (metrics(&report, f, power_w)?, Some(report))
        }
        (None, None) => {
            return Err(CliError::Usage(
                "give --gops, or --freq-mhz to use the cycle model".into(),
            ))
        }
    };
    let io = |e: std::io::Error| CliError::Invalid(e.to_string());
    match a.format {
        Format::Table => {
            write!(out, "{m}").map_err(io)?;
            if let Some(r) = &report {
                write!(out, "\n{r}").map_err(io)?;
            }
            let line = serde_json::to_string(&manifest).expect("manifest serializes");
            writeln!(out, "# manifest: {line}").map_err(io)?;
        }
        Format::Json => emit(
            out,
            &json!({ "metrics": m, "cycle_report": report, "manifest": manifest }),
        )?,
    }
    Ok(manifest)
}

fn train_toy(
    a: &TrainToyArgs,
    argv: &[String],
    out: &mut dyn Write,
) -> Result<RunManifest, CliError> {
    let mut cfg: TrainConfig = a
        .config
        .as_deref()
        .map(read_json)
        .transpose()?
        .unwrap_or_default();
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    cfg.epochs = a.epochs.unwrap_or(cfg.epochs);
    cfg.learning_rate = a.lr.unwrap_or(cfg.learning_rate);
    cfg.batch_size = a.batch_size.unwrap_or(cfg.batch_size);
    cfg.timesteps = a.timesteps.unwrap_or(cfg.timesteps);
    cfg.validate()?;
    if a.hidden == 0 {
        return Err(CliError::Usage("--hidden must be >= 1".into()));
    }

    let data = make_toy_dataset(cfg.seed, a.samples)?;
    let net = init_network(toy_config(a.hidden, cfg.timesteps), cfg.seed)?;
    let outcome = train(net, &data, &cfg)?;
    let (q, saturation) = quantize_network(&outcome.network)?;

    let mut w = create(&a.out)?;
    write_snnw(&[&q.hidden, &q.output], &mut w).map_err(|e| CliError::data(&a.out, e))?;
    w.flush().map_err(|e| CliError::io(&a.out, e))?;
    let mut manifest = RunManifest::new("train-toy", argv)
        .config(a.config.as_deref())
        .seed("train", cfg.seed)
        .output(&a.out);
    if let Some(csv) = &a.csv {
        let mut w = create(csv)?;
        write_history_csv(&outcome.history, &mut w).map_err(|e| CliError::io(csv, e))?;
        w.flush().map_err(|e| CliError::io(csv, e))?;
        manifest = manifest.output(csv);
    }
    if let Some(path) = &a.float_out {
        write_json_file(path, &outcome.network)?;
        manifest = manifest.output(path);
    }
    manifest.write(&sidecar(&a.out))?;

    let test_x = encode_samples(&data.test, cfg.timesteps, eval_seed(&cfg))?;
    let float_test = accuracy(&outcome.network, &data.test, &test_x)?;
    let hw_test = hw_accuracy(&q, &data.test, &test_x)?;
    emit(
        out,
        &json!({
            "config": cfg,
            "samples": { "train": data.train.len(), "test": data.test.len() },
            "final": outcome.history.last(),
            "best_train_acc": outcome.history.iter().map(|s| s.train_acc).fold(0.0, f64::max),
            "float_test_acc": float_test,
            "hw_test_acc": hw_test,
            "quantization_saturation": saturation,
            "manifest": manifest,
        }),
    )?;
    Ok(manifest)
}
