// SPDX-License-Identifier: Apache-2.0

//! Packed spike-train files.
//!
//! Layout, all little-endian:
//!
//! | offset | size | field                     |
//! |--------|------|---------------------------|
//! | 0      | 4    | magic `SPKT`              |
//! | 4      | 2    | version (1)               |
//! | 6      | 2    | reserved, zero            |
//! | 8      | 4    | timesteps T               |
//! | 12     | 4    | neurons N                 |
//! | 16     | ⌈T·N/8⌉ | bits                   |
//!
//! Bit `(t, i)` lives at linear index `t·N + i`, LSB-first within each byte.
//! Unused high bits of the last byte are zero.

use std::io::{Read, Write};

use super::{EncodingError, SpikeTrain};

pub const SPKT_MAGIC: [u8; 4] = *b"SPKT";
pub const SPKT_VERSION: u16 = 1;
const HEADER_LEN: usize = 16;

pub fn write_spkt<W: Write>(train: &SpikeTrain, mut w: W) -> Result<(), EncodingError> {
    let t = u32::try_from(train.timesteps())
        .map_err(|_| EncodingError::Format("timestep count exceeds u32".into()))?;
    let n = u32::try_from(train.neurons())
        .map_err(|_| EncodingError::Format("neuron count exceeds u32".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + train.bits().len().div_ceil(8));
    out.extend_from_slice(&SPKT_MAGIC);
    out.extend_from_slice(&SPKT_VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&t.to_le_bytes());
    out.extend_from_slice(&n.to_le_bytes());
    for chunk in train.bits().chunks(8) {
        let byte = chunk
            .iter()
            .enumerate()
            .fold(0u8, |acc, (k, &b)| acc | ((b as u8) << k));
        out.push(byte);
    }
    w.write_all(&out)?;
    Ok(())
}

pub fn read_spkt<R: Read>(mut r: R) -> Result<SpikeTrain, EncodingError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < HEADER_LEN {
        return Err(EncodingError::Format(format!(
            "file is {} bytes, shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if bytes[0..4] != SPKT_MAGIC {
        return Err(EncodingError::Format("bad magic, expected SPKT".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != SPKT_VERSION {
        return Err(EncodingError::Format(format!(
            "unsupported version {version}"
        )));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let (t, n) = (u32_at(8), u32_at(12));
    let nbits = t
        .checked_mul(n)
        .ok_or_else(|| EncodingError::Format("T x N overflows".into()))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != nbits.div_ceil(8) {
        return Err(EncodingError::Format(format!(
            "payload is {} bytes, expected {} for {t} x {n} bits",
            payload.len(),
            nbits.div_ceil(8)
        )));
    }
    let bits = (0..nbits)
        .map(|k| payload[k / 8] >> (k % 8) & 1 == 1)
        .collect();
    SpikeTrain::new(t, n, bits)
}
