//! Adaptive binary range coder.
//!
//! Register discipline: `low` is a 33-bit accumulator, `range` a 32-bit
//! interval width kept at or above 2^24. A bin splits the interval at
//! `(range >> 16) * p0`, where `p0` is the 16-bit probability of a zero.
//! Whenever `range` drops below 2^24 one byte is shifted out, MSB first, with
//! carries resolved through a cached byte plus a run of pending 0xFF bytes.
//! The encoder flushes five bytes, and the decoder consumes exactly the bytes
//! the encoder produced. All arithmetic is integer-only.

use super::CodecError;

const PROB_BITS: u32 = 16;
const PROB_ONE: u32 = 1 << PROB_BITS;
const TOP: u32 = 1 << 24;
/// Either count reaching this value halves both.
pub const COUNT_LIMIT: u32 = 1 << 15;

/// Adaptive probability from a pair of symbol counts, both starting at one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContextModel {
    c0: u32,
    c1: u32,
}

impl Default for ContextModel {
    fn default() -> Self {
        Self { c0: 1, c1: 1 }
    }
}

impl ContextModel {
    pub fn counts(&self) -> (u32, u32) {
        (self.c0, self.c1)
    }

    /// P(bin = 1) as `c1 / (c0 + c1)`.
    pub fn p1(&self) -> f64 {
        self.c1 as f64 / (self.c0 + self.c1) as f64
    }

    /// P(bin = 0) in 1/65536 units, clamped to [1, 65535].
    #[inline]
    pub fn p0_scaled(&self) -> u32 {
        let p = ((self.c0 as u64) << PROB_BITS) / (self.c0 + self.c1) as u64;
        (p as u32).clamp(1, PROB_ONE - 1)
    }

    #[inline]
    pub fn update(&mut self, bin: bool) {
        if bin {
            self.c1 += 1;
        } else {
            self.c0 += 1;
        }
        if self.c0 >= COUNT_LIMIT || self.c1 >= COUNT_LIMIT {
            self.c0 = self.c0.div_ceil(2);
            self.c1 = self.c1.div_ceil(2);
        }
    }
}

/// A bank of context models addressed by index.
#[derive(Debug, Clone)]
pub struct ContextSet(Vec<ContextModel>);

impl ContextSet {
    pub fn new(n: usize) -> Self {
        Self(vec![ContextModel::default(); n])
    }

    #[inline]
    pub fn get_mut(&mut self, i: usize) -> &mut ContextModel {
        &mut self.0[i]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub struct Encoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
}

impl Default for Encoder {
    fn default() -> Self {
        Self::new()
    }
}

impl Encoder {
    pub fn new() -> Self {
        Self {
            low: 0,
            range: u32::MAX,
            cache: 0,
            cache_size: 1,
            out: Vec::new(),
        }
    }

    #[inline]
    pub fn encode(&mut self, bin: bool, ctx: &mut ContextModel) {
        let bound = (self.range >> PROB_BITS) * ctx.p0_scaled();
        if bin {
            self.low += bound as u64;
            self.range -= bound;
        } else {
            self.range = bound;
        }
        ctx.update(bin);
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    /// Codes `nbits` low bits of `value` MSB-first at probability one half.
    pub fn encode_bypass(&mut self, value: u64, nbits: u32) {
        for i in (0..nbits).rev() {
            let bit = (value >> i) & 1 == 1;
            self.range >>= 1;
            if bit {
                self.low += self.range as u64;
            }
            while self.range < TOP {
                self.range <<= 8;
                self.shift_low();
            }
        }
    }

    fn shift_low(&mut self) {
        if (self.low as u32) < 0xFF00_0000 || (self.low >> 32) != 0 {
            let carry = (self.low >> 32) as u8;
            let mut temp = self.cache;
            loop {
                self.out.push(temp.wrapping_add(carry));
                temp = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = ((self.low >> 24) & 0xFF) as u8;
        }
        self.cache_size += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

pub struct Decoder<'a> {
    code: u32,
    range: u32,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(bytes: &'a [u8]) -> Result<Self, CodecError> {
        let mut d = Self {
            code: 0,
            range: u32::MAX,
            bytes,
            pos: 0,
        };
        for _ in 0..5 {
            let b = d.next_byte()?;
            d.code = (d.code << 8) | b as u32;
        }
        Ok(d)
    }

    #[inline]
    fn next_byte(&mut self) -> Result<u8, CodecError> {
        let b = *self
            .bytes
            .get(self.pos)
            .ok_or(CodecError::Truncated { offset: self.pos })?;
        self.pos += 1;
        Ok(b)
    }

    #[inline]
    pub fn decode(&mut self, ctx: &mut ContextModel) -> Result<bool, CodecError> {
        let bound = (self.range >> PROB_BITS) * ctx.p0_scaled();
        let bin = if self.code < bound {
            self.range = bound;
            false
        } else {
            self.code -= bound;
            self.range -= bound;
            true
        };
        ctx.update(bin);
        self.normalize()?;
        Ok(bin)
    }

    pub fn decode_bypass(&mut self, nbits: u32) -> Result<u64, CodecError> {
        let mut v = 0u64;
        for _ in 0..nbits {
            self.range >>= 1;
            let bit = self.code >= self.range;
            if bit {
                self.code -= self.range;
            }
            v = (v << 1) | bit as u64;
            self.normalize()?;
        }
        Ok(v)
    }

    #[inline]
    fn normalize(&mut self) -> Result<(), CodecError> {
        while self.range < TOP {
            self.range <<= 8;
            self.code = (self.code << 8) | self.next_byte()? as u32;
        }
        Ok(())
    }

    /// Bytes consumed so far.
    pub fn position(&self) -> usize {
        self.pos
    }

    /// Fails unless every input byte was consumed.
    pub fn finish(self) -> Result<(), CodecError> {
        if self.pos != self.bytes.len() {
            return Err(CodecError::TrailingBytes {
                consumed: self.pos,
                len: self.bytes.len(),
            });
        }
        Ok(())
    }
}

/// Largest exp-Golomb prefix the decoders accept.
pub const MAX_EG_PREFIX: usize = 48;

/// Context banks for one exp-Golomb order-0 coded quantity: one context per
/// prefix position and one per suffix bit position, the last shared by all
/// later positions.
#[derive(Debug, Clone)]
pub struct ExpGolombContexts {
    prefix: ContextSet,
    suffix: ContextSet,
}

impl ExpGolombContexts {
    pub fn new(prefix: usize, suffix: usize) -> Self {
        Self {
            prefix: ContextSet::new(prefix.max(1)),
            suffix: ContextSet::new(suffix.max(1)),
        }
    }

    pub fn encode(&mut self, enc: &mut Encoder, v: u64) {
        let n = 63 - (v + 1).leading_zeros() as usize;
        let last_p = self.prefix.len() - 1;
        for i in 0..n {
            enc.encode(true, self.prefix.get_mut(i.min(last_p)));
        }
        enc.encode(false, self.prefix.get_mut(n.min(last_p)));
        let rem = v + 1 - (1u64 << n);
        let last_s = self.suffix.len() - 1;
        for (k, i) in (0..n).rev().enumerate() {
            enc.encode((rem >> i) & 1 == 1, self.suffix.get_mut(k.min(last_s)));
        }
    }

    pub fn decode(&mut self, dec: &mut Decoder) -> Result<u64, CodecError> {
        let last_p = self.prefix.len() - 1;
        let mut n = 0usize;
        while dec.decode(self.prefix.get_mut(n.min(last_p)))? {
            n += 1;
            if n > MAX_EG_PREFIX {
                return Err(CodecError::Corrupt {
                    offset: dec.position(),
                    reason: "exp-Golomb prefix too long",
                });
            }
        }
        let last_s = self.suffix.len() - 1;
        let mut rem = 0u64;
        for k in 0..n {
            rem = (rem << 1) | dec.decode(self.suffix.get_mut(k.min(last_s)))? as u64;
        }
        Ok((1u64 << n) + rem - 1)
    }
}
