// SPDX-License-Identifier: Apache-2.0

//! Rate coding: grayscale images become Bernoulli spike trains.
//!
//! Pixel `i` of a normalized image fires at timestep `t` with probability
//! equal to its intensity. Draws come from a ChaCha8 stream selected by the
//! pixel index, so pixel `i`'s column depends only on `(seed, i)` and never on
//! evaluation order. Images flatten row-major: neuron `row * width + col`.

mod pgm;
mod spkt;

pub use pgm::{GrayImage, PgmError};
pub use spkt::{read_spkt, write_spkt, SPKT_MAGIC, SPKT_VERSION};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Default coding window.
pub const DEFAULT_TIMESTEPS: usize = 25;

#[derive(Debug, Error)]
pub enum EncodingError {
    #[error("image has no pixels")]
    EmptyImage,
    #[error("timestep count must be at least 1")]
    ZeroTimesteps,
    #[error("intensity {value} at pixel {index} is outside [0, 1]")]
    IntensityOutOfRange { index: usize, value: f64 },
    #[error("spike train has {got} bits, expected {timesteps} x {neurons}")]
    ShapeMismatch {
        timesteps: usize,
        neurons: usize,
        got: usize,
    },
    #[error(transparent)]
    Pgm(#[from] PgmError),
    #[error("spike file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-pixel intensities in [0, 1], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityGrid {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl IntensityGrid {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self, EncodingError> {
        if width == 0 || height == 0 || values.is_empty() {
            return Err(EncodingError::EmptyImage);
        }
        if values.len() != width * height {
            return Err(EncodingError::ShapeMismatch {
                timesteps: height,
                neurons: width,
                got: values.len(),
            });
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(EncodingError::IntensityOutOfRange { index, value });
        }
        Ok(IntensityGrid {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }
}

/// `pixel / 255` for every pixel.
pub fn normalize_image(image: &GrayImage) -> Result<IntensityGrid, EncodingError> {
    if image.pixels().is_empty() {
        return Err(EncodingError::EmptyImage);
    }
    let values = image.pixels().iter().map(|&p| p as f64 / 255.0).collect();
    IntensityGrid::new(image.width(), image.height(), values)
}

/// A `timesteps x neurons` binary matrix, row `t` holding every neuron's bit
/// at that step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeTrain {
    timesteps: usize,
    neurons: usize,
    bits: Vec<bool>,
    seed: Option<u64>,
}

impl SpikeTrain {
    pub fn new(timesteps: usize, neurons: usize, bits: Vec<bool>) -> Result<Self, EncodingError> {
        if bits.len() != timesteps * neurons {
            return Err(EncodingError::ShapeMismatch {
                timesteps,
                neurons,
                got: bits.len(),
            });
        }
        Ok(SpikeTrain {
            timesteps,
            neurons,
            bits,
            seed: None,
        })
    }

    pub fn zeros(timesteps: usize, neurons: usize) -> Self {
        SpikeTrain {
            timesteps,
            neurons,
            bits: vec![false; timesteps * neurons],
            seed: None,
        }
    }

    /// Build from a per-step closure; handy for hand-written test stimuli.
    pub fn from_fn(timesteps: usize, neurons: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let bits = (0..timesteps)
            .flat_map(|t| (0..neurons).map(move |i| (t, i)))
            .map(|(t, i)| f(t, i))
            .collect();
        SpikeTrain {
            timesteps,
            neurons,
            bits,
            seed: None,
        }
    }

    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    pub fn neurons(&self) -> usize {
        self.neurons
    }

    /// Seed the train was drawn with, if it came from [`rate_encode`].
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn get(&self, t: usize, neuron: usize) -> bool {
        self.bits[t * self.neurons + neuron]
    }

    pub fn set(&mut self, t: usize, neuron: usize, bit: bool) {
        self.bits[t * self.neurons + neuron] = bit;
    }

    /// All neurons' bits at timestep `t`.
    pub fn row(&self, t: usize) -> &[bool] {
        &self.bits[t * self.neurons..(t + 1) * self.neurons]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Bernoulli rate coding of `grid` over `timesteps` steps.
pub fn rate_encode(
    grid: &IntensityGrid,
    timesteps: usize,
    seed: u64,
) -> Result<SpikeTrain, EncodingError> {
    if timesteps == 0 {
        return Err(EncodingError::ZeroTimesteps);
    }
    let n = grid.len();
    let mut bits = vec![false; timesteps * n];
    for (i, &p) in grid.values().iter().enumerate() {
        for (t, bit) in pixel_column(seed, i, p, timesteps).enumerate() {
            bits[t * n + i] = bit;
        }
    }
    Ok(SpikeTrain {
        timesteps,
        neurons: n,
        bits,
        seed: Some(seed),
    })
}

/// The spike column of one pixel: `timesteps` draws from stream `index`.
fn pixel_column(seed: u64, index: usize, p: f64, timesteps: usize) -> impl Iterator<Item = bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    // gen::<f64>() is uniform on [0, 1): p = 0 never fires, p = 1 always does.
    (0..timesteps).map(move |_| rng.gen::<f64>() < p)
}

/// Fraction of timesteps each neuron fired.
pub fn spike_rate(train: &SpikeTrain) -> Vec<f64> {
    let mut counts = vec![0usize; train.neurons()];
    for t in 0..train.timesteps() {
        for (c, &b) in counts.iter_mut().zip(train.row(t)) {
            *c += b as usize;
        }
    }
    let t = train.timesteps().max(1) as f64;
    counts.into_iter().map(|c| c as f64 / t).collect()
}
