// SPDX-License-Identifier: Apache-2.0

//! SNNW weight files.
//!
//! ```text
//! magic "SNNW" | version u16 | layer count u16
//! per layer: rows u32 | cols u32 | rows*cols i16 weights (row-major) | rows i16 biases
//! ```
//!
//! All integers little-endian; weights and biases are raw Q1.15.

use std::io::{Read, Write};

use super::{NetworkError, QuantizedLayer};
use crate::fixedpoint::{QFormat, QValue};

pub const SNNW_MAGIC: [u8; 4] = *b"SNNW";
pub const SNNW_VERSION: u16 = 1;

pub fn write_snnw<W: Write>(layers: &[&QuantizedLayer], mut w: W) -> Result<(), NetworkError> {
    let count =
        u16::try_from(layers.len()).map_err(|_| NetworkError::Format("too many layers".into()))?;
    let mut out = Vec::new();
    out.extend_from_slice(&SNNW_MAGIC);
    out.extend_from_slice(&SNNW_VERSION.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    for layer in layers {
        for dim in [layer.rows, layer.cols] {
            let d = u32::try_from(dim)
                .map_err(|_| NetworkError::Format("layer dimension exceeds u32".into()))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for q in layer.weights.iter().chain(&layer.bias) {
            if q.format() != QFormat::Q1_15 {
                return Err(NetworkError::Format(format!(
                    "value in {} instead of Q1.15",
                    q.format()
                )));
            }
            out.extend_from_slice(&(q.raw() as i16).to_le_bytes());
        }
    }
    w.write_all(&out)?;
    Ok(())
}

pub fn read_snnw<R: Read>(mut r: R) -> Result<Vec<QuantizedLayer>, NetworkError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut cur = Reader {
        bytes: &bytes,
        pos: 0,
    };
    if cur.take(4)? != SNNW_MAGIC {
        return Err(NetworkError::Format("bad magic, expected SNNW".into()));
    }
    let version = cur.u16()?;
    if version != SNNW_VERSION {
        return Err(NetworkError::Format(format!(
            "unsupported version {version}"
        )));
    }
    let count = cur.u16()? as usize;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let rows = cur.u32()? as usize;
        let cols = cur.u32()? as usize;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| NetworkError::Format("layer size overflows".into()))?;
        let weights = cur.q15_values(n)?;
        let bias = cur.q15_values(rows)?;
        layers.push(QuantizedLayer::new(rows, cols, weights, bias)?);
    }
    if cur.pos != bytes.len() {
        return Err(NetworkError::Format(format!(
            "{} trailing bytes",
            bytes.len() - cur.pos
        )));
    }
    Ok(layers)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NetworkError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                NetworkError::Format(format!("truncated at byte {}: need {n} more", self.pos))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, NetworkError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, NetworkError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn q15_values(&mut self, n: usize) -> Result<Vec<QValue>, NetworkError> {
        let len = n
            .checked_mul(2)
            .ok_or_else(|| NetworkError::Format("layer size overflows".into()))?;
        let raw = self.take(len)?;
        Ok(raw
            .chunks_exact(2)
            .map(|c| {
                QValue::from_raw(i16::from_le_bytes([c[0], c[1]]) as i64, QFormat::Q1_15).unwrap()
            })
            .collect())
    }
}
