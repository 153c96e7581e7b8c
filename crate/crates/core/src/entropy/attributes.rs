//! Quantized attribute coding.
//!
//! Payload: `n: u32`, `c: u16`, then range-coded bins. Values are visited row
//! by row in the geometry decoder's emission order, so no permutation is
//! sent. Each value is quantized to `k = round_half_away(v / step)` and coded
//! as a significance bin, a sign bin and an exp-Golomb order-0 magnitude
//! `|k| - 1`, with separate context banks per channel and bin class.

use serde::{Deserialize, Serialize};

use super::coder::{ContextSet, Decoder, Encoder, ExpGolombContexts};
use super::CodecError;

pub const DEFAULT_STEP: f64 = 0.01;
/// Largest quantized magnitude accepted.
pub const MAX_LEVEL: i64 = 1 << 40;
const HEADER_BYTES: usize = 6;
const EG_CONTEXTS: usize = 16;

/// Mid-tread uniform quantizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantSpec {
    pub step: f64,
}

impl Default for QuantSpec {
    fn default() -> Self {
        Self { step: DEFAULT_STEP }
    }
}

impl QuantSpec {
    pub fn new(step: f64) -> Result<Self, CodecError> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(CodecError::InvalidStep(step));
        }
        Ok(Self { step })
    }

    /// The step as carried in a frame header (f32), widened back to f64.
    pub fn as_transmitted(&self) -> Self {
        Self {
            step: self.step as f32 as f64,
        }
    }

    pub fn quantize(&self, v: f64) -> i64 {
        (v / self.step).round() as i64
    }

    pub fn dequantize(&self, k: i64) -> f64 {
        k as f64 * self.step
    }
}

struct ChannelContexts {
    sig: ContextSet,
    sign: ContextSet,
    mag: ExpGolombContexts,
}

impl ChannelContexts {
    fn new() -> Self {
        Self {
            sig: ContextSet::new(1),
            sign: ContextSet::new(1),
            mag: ExpGolombContexts::new(EG_CONTEXTS, EG_CONTEXTS),
        }
    }
}

pub fn encode_attributes(
    feats: &[f64],
    n: usize,
    c: usize,
    q: QuantSpec,
) -> Result<Vec<u8>, CodecError> {
    let q = QuantSpec::new(q.step)?;
    if feats.len() != n * c {
        return Err(CodecError::ShapeMismatch {
            expected: n * c,
            got: feats.len(),
        });
    }
    if n > u32::MAX as usize || c > u16::MAX as usize {
        return Err(CodecError::TooLarge("attribute matrix"));
    }
    let mut out = Vec::with_capacity(HEADER_BYTES + n * c);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(c as u16).to_le_bytes());
    let mut ctx: Vec<ChannelContexts> = (0..c).map(|_| ChannelContexts::new()).collect();
    let mut enc = Encoder::new();
    for (i, &v) in feats.iter().enumerate() {
        if !v.is_finite() {
            return Err(CodecError::NonFinite { index: i });
        }
        let k = q.quantize(v);
        if k.unsigned_abs() > MAX_LEVEL as u64 {
            return Err(CodecError::ValueOutOfRange { index: i });
        }
        let cc = &mut ctx[i % c.max(1)];
        enc.encode(k != 0, cc.sig.get_mut(0));
        if k != 0 {
            enc.encode(k < 0, cc.sign.get_mut(0));
            cc.mag.encode(&mut enc, k.unsigned_abs() - 1);
        }
    }
    out.extend_from_slice(&enc.finish());
    Ok(out)
}

/// Reads the `(n, c)` declared by a payload.
pub fn attribute_shape(bytes: &[u8]) -> Result<(usize, usize), CodecError> {
    if bytes.len() < HEADER_BYTES {
        return Err(CodecError::Truncated { offset: bytes.len() });
    }
    let n = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let c = u16::from_le_bytes(bytes[4..6].try_into().unwrap()) as usize;
    Ok((n, c))
}

/// Decodes to `(n, c, values)`; each value is exactly `k * step`.
pub fn decode_attributes(bytes: &[u8], q: QuantSpec) -> Result<(usize, usize, Vec<f64>), CodecError> {
    let q = QuantSpec::new(q.step)?;
    let (n, c) = attribute_shape(bytes)?;
    let total = n.checked_mul(c).ok_or(CodecError::TooLarge("attribute matrix"))?;
    if total > 0 && c == 0 {
        return Err(CodecError::Corrupt {
            offset: 4,
            reason: "zero channels",
        });
    }
    let mut dec = Decoder::new(&bytes[HEADER_BYTES..]).map_err(|e| e.shifted(HEADER_BYTES))?;
    let mut ctx: Vec<ChannelContexts> = (0..c).map(|_| ChannelContexts::new()).collect();
    let mut out = Vec::with_capacity(total.min(1 << 24));
    for i in 0..total {
        let cc = &mut ctx[i % c];
        let read = |dec: &mut Decoder, cc: &mut ChannelContexts| -> Result<i64, CodecError> {
            if !dec.decode(cc.sig.get_mut(0))? {
                return Ok(0);
            }
            let neg = dec.decode(cc.sign.get_mut(0))?;
            let mag = cc.mag.decode(dec)?;
            if mag >= MAX_LEVEL as u64 {
                return Err(CodecError::Corrupt {
                    offset: dec.position(),
                    reason: "quantized magnitude out of range",
                });
            }
            let m = mag as i64 + 1;
            Ok(if neg { -m } else { m })
        };
        let k = read(&mut dec, cc).map_err(|e| e.shifted(HEADER_BYTES))?;
        out.push(q.dequantize(k));
    }
    dec.finish().map_err(|e| e.shifted(HEADER_BYTES))?;
    Ok((n, c, out))
}
