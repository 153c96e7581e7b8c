//! Differential coding of flag positions.
//!
//! Payload: `count: u32`, then range-coded gaps. The first position is coded
//! as-is and every later one as `gap - 1` (gaps are at least one), each with
//! exp-Golomb order-0 bins under adaptive contexts; the first value has its
//! own context bank.

use super::coder::{Decoder, Encoder, ExpGolombContexts};
use super::CodecError;

const EG_CONTEXTS: usize = 24;

/// Positions of set flags in a 0/1 flag sequence.
pub fn flags_to_positions(flags: &[bool]) -> Vec<u32> {
    flags
        .iter()
        .enumerate()
        .filter_map(|(i, &f)| f.then_some(i as u32))
        .collect()
}

/// Differential transform: first absolute, then `gap - 1`.
pub fn to_deltas(positions: &[u32]) -> Result<Vec<u64>, CodecError> {
    let mut out = Vec::with_capacity(positions.len());
    let mut prev: Option<u32> = None;
    for (i, &p) in positions.iter().enumerate() {
        out.push(match prev {
            None => p as u64,
            Some(q) if p > q => (p - q - 1) as u64,
            Some(_) => return Err(CodecError::NotIncreasing { index: i }),
        });
        prev = Some(p);
    }
    Ok(out)
}

pub fn from_deltas(deltas: &[u64]) -> Result<Vec<u32>, CodecError> {
    let mut out = Vec::with_capacity(deltas.len());
    let mut prev: Option<u64> = None;
    for &d in deltas {
        let p = match prev {
            None => d,
            Some(q) => q + d + 1,
        };
        if p > u32::MAX as u64 {
            return Err(CodecError::TooLarge("position"));
        }
        out.push(p as u32);
        prev = Some(p);
    }
    Ok(out)
}

pub fn encode_residual(positions: &[u32]) -> Result<Vec<u8>, CodecError> {
    let deltas = to_deltas(positions)?;
    let mut out = Vec::with_capacity(4 + deltas.len() / 2);
    out.extend_from_slice(&(deltas.len() as u32).to_le_bytes());
    let mut first = ExpGolombContexts::new(EG_CONTEXTS, EG_CONTEXTS);
    let mut gaps = ExpGolombContexts::new(EG_CONTEXTS, EG_CONTEXTS);
    let mut enc = Encoder::new();
    for (i, &d) in deltas.iter().enumerate() {
        if i == 0 {
            first.encode(&mut enc, d);
        } else {
            gaps.encode(&mut enc, d);
        }
    }
    out.extend_from_slice(&enc.finish());
    Ok(out)
}

pub fn decode_residual(bytes: &[u8]) -> Result<Vec<u32>, CodecError> {
    if bytes.len() < 4 {
        return Err(CodecError::Truncated { offset: bytes.len() });
    }
    let count = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
    let mut dec = Decoder::new(&bytes[4..]).map_err(|e| e.shifted(4))?;
    let mut first = ExpGolombContexts::new(EG_CONTEXTS, EG_CONTEXTS);
    let mut gaps = ExpGolombContexts::new(EG_CONTEXTS, EG_CONTEXTS);
    let mut deltas = Vec::with_capacity(count.min(1 << 20));
    for i in 0..count {
        let d = if i == 0 {
            first.decode(&mut dec)
        } else {
            gaps.decode(&mut dec)
        }
        .map_err(|e| e.shifted(4))?;
        deltas.push(d);
    }
    dec.finish().map_err(|e| e.shifted(4))?;
    from_deltas(&deltas)
}
