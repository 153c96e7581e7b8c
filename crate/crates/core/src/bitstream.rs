//! Framed wire format.
//!
//! | offset | size | field                                  |
//! |-------:|-----:|----------------------------------------|
//! | 0      | 4    | magic `FFC1`                           |
//! | 4      | 1    | version (= 1)                          |
//! | 5      | 1    | mode (0 = T-FFC, 1 = A-FFC)            |
//! | 6      | 1    | pool kernel                            |
//! | 7      | 6    | strides `s_basic`, `s_b3`, `s_b4` (u16)|
//! | 13     | 3    | channel counts basic, b3, b4 (u8)      |
//! | 16     | 4    | quantization step (f32)                |
//! | 20     | 24   | bbox min xyz, max xyz (i32)            |
//! | 44     | 4    | slope threshold (f32, audit only)      |
//! | 48     | 4    | post-processing distance (f32, audit)  |
//! | 52     | 1    | segment count                          |
//! | 53     | 4    | CRC-32 of the frame, this field zeroed |
//!
//! Segments follow in ascending tag order as `tag: u8`, `len: u32`,
//! `payload`. Everything is little-endian.

use std::fmt;

use serde::{Deserialize, Serialize};

pub const MAGIC: [u8; 4] = *b"FFC1";
pub const VERSION: u8 = 1;
pub const HEADER_BYTES: usize = 57;
const CRC_OFFSET: usize = 53;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FrameError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),
    #[error("invalid mode {0}")]
    InvalidMode(u8),
    #[error("header truncated: need {need} bytes, have {available}")]
    TruncatedHeader { need: usize, available: usize },
    #[error("segment {tag} truncated: expected {expected} payload bytes, {available} available")]
    TruncatedSegment {
        tag: u8,
        expected: usize,
        available: usize,
    },
    #[error("segment {tag} declares {declared} bytes but only {remaining} remain")]
    LengthMismatch {
        tag: u8,
        declared: usize,
        remaining: usize,
    },
    #[error("unknown segment tag {0}")]
    UnknownTag(u8),
    #[error("segment tag 3 is reserved")]
    ReservedTag,
    #[error("duplicate segment tag {0}")]
    DuplicateTag(u8),
    #[error("segment tags out of order at tag {0}")]
    OutOfOrder(u8),
    #[error("header declares {declared} segments, frame has {found}")]
    SegmentCount { declared: usize, found: usize },
    #[error("segment {tag} is required in this mode")]
    MissingSegment { tag: u8 },
    #[error("segment {tag} is not allowed in this mode")]
    UnexpectedSegment { tag: u8 },
    #[error("segment {tag} payload exceeds u32 length")]
    SegmentTooLarge { tag: u8 },
    #[error("{0} trailing bytes after the last segment")]
    TrailingBytes(usize),
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("invalid header field: {0}")]
    InvalidField(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Tffc = 0,
    Affc = 1,
}

impl Mode {
    pub fn from_u8(v: u8) -> Result<Self, FrameError> {
        match v {
            0 => Ok(Mode::Tffc),
            1 => Ok(Mode::Affc),
            m => Err(FrameError::InvalidMode(m)),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Tffc => "tffc",
            Mode::Affc => "affc",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum SegmentTag {
    GeomBasic = 1,
    AttrBasic = 2,
    AttrB3 = 4,
    AttrB4 = 5,
    Residual = 6,
}

impl SegmentTag {
    pub fn from_u8(v: u8) -> Result<Self, FrameError> {
        match v {
            1 => Ok(SegmentTag::GeomBasic),
            2 => Ok(SegmentTag::AttrBasic),
            3 => Err(FrameError::ReservedTag),
            4 => Ok(SegmentTag::AttrB3),
            5 => Ok(SegmentTag::AttrB4),
            6 => Ok(SegmentTag::Residual),
            t => Err(FrameError::UnknownTag(t)),
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            SegmentTag::GeomBasic => "geom-basic",
            SegmentTag::AttrBasic => "attr-basic",
            SegmentTag::AttrB3 => "attr-b3",
            SegmentTag::AttrB4 => "attr-b4",
            SegmentTag::Residual => "residual",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FfcHeader {
    pub mode: Mode,
    pub pool_kernel: u8,
    /// `[s_basic, s_b3, s_b4]`; unused branches are zero.
    pub strides: [u16; 3],
    pub channels: [u8; 3],
    pub quant_step: f32,
    /// `[min_x, min_y, min_z, max_x, max_y, max_z]` of the basic geometry.
    pub bbox: [i32; 6],
    pub k_th: f32,
    pub d_p: f32,
    pub segment_count: u8,
}

impl FfcHeader {
    fn validate(&self) -> Result<(), FrameError> {
        if self.pool_kernel == 0 {
            return Err(FrameError::InvalidField("pool kernel must be positive"));
        }
        if !(self.quant_step > 0.0 && self.quant_step.is_finite()) {
            return Err(FrameError::InvalidField("quantization step"));
        }
        if !self.k_th.is_finite() || !self.d_p.is_finite() {
            return Err(FrameError::InvalidField("non-finite selection parameter"));
        }
        Ok(())
    }

    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.mode as u8);
        out.push(self.pool_kernel);
        for s in self.strides {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out.extend_from_slice(&self.channels);
        out.extend_from_slice(&self.quant_step.to_le_bytes());
        for b in self.bbox {
            out.extend_from_slice(&b.to_le_bytes());
        }
        out.extend_from_slice(&self.k_th.to_le_bytes());
        out.extend_from_slice(&self.d_p.to_le_bytes());
        out.push(self.segment_count);
        out.extend_from_slice(&[0; 4]);
    }

    fn read(b: &[u8]) -> Result<Self, FrameError> {
        let u16_at = |o: usize| u16::from_le_bytes([b[o], b[o + 1]]);
        let f32_at = |o: usize| f32::from_le_bytes(b[o..o + 4].try_into().unwrap());
        let i32_at = |o: usize| i32::from_le_bytes(b[o..o + 4].try_into().unwrap());
        let h = FfcHeader {
            mode: Mode::from_u8(b[5])?,
            pool_kernel: b[6],
            strides: [u16_at(7), u16_at(9), u16_at(11)],
            channels: [b[13], b[14], b[15]],
            quant_step: f32_at(16),
            bbox: std::array::from_fn(|i| i32_at(20 + 4 * i)),
            k_th: f32_at(44),
            d_p: f32_at(48),
            segment_count: b[52],
        };
        h.validate()?;
        Ok(h)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub tag: SegmentTag,
    pub payload: Vec<u8>,
}

impl Segment {
    pub fn new(tag: SegmentTag, payload: Vec<u8>) -> Self {
        Self { tag, payload }
    }
}

/// A parsed or to-be-serialized frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FfcBitstream {
    pub header: FfcHeader,
    pub segments: Vec<Segment>,
}

impl FfcBitstream {
    pub fn segment(&self, tag: SegmentTag) -> Option<&[u8]> {
        self.segments
            .iter()
            .find(|s| s.tag == tag)
            .map(|s| s.payload.as_slice())
    }

    /// Serialized size without building the frame.
    pub fn encoded_len(&self) -> usize {
        HEADER_BYTES + self.segments.iter().map(|s| 5 + s.payload.len()).sum::<usize>()
    }
}

fn check_structure(mode: Mode, tags: &[SegmentTag]) -> Result<(), FrameError> {
    let required: &[SegmentTag] = match mode {
        Mode::Tffc => &[SegmentTag::GeomBasic, SegmentTag::AttrBasic],
        Mode::Affc => &[
            SegmentTag::GeomBasic,
            SegmentTag::AttrBasic,
            SegmentTag::AttrB3,
            SegmentTag::AttrB4,
        ],
    };
    for &t in required {
        if !tags.contains(&t) {
            return Err(FrameError::MissingSegment { tag: t.as_u8() });
        }
    }
    for &t in tags {
        if t != SegmentTag::Residual && !required.contains(&t) {
            return Err(FrameError::UnexpectedSegment { tag: t.as_u8() });
        }
    }
    Ok(())
}

fn checksum(frame: &[u8]) -> u32 {
    let mut h = crc32fast::Hasher::new();
    h.update(&frame[..CRC_OFFSET]);
    h.update(&[0; 4]);
    h.update(&frame[CRC_OFFSET + 4..]);
    h.finalize()
}

/// Header, then segments sorted by tag.
pub fn serialize(frame: &FfcBitstream) -> Result<Vec<u8>, FrameError> {
    frame.header.validate()?;
    let mut segs: Vec<&Segment> = frame.segments.iter().collect();
    segs.sort_by_key(|s| s.tag);
    for w in segs.windows(2) {
        if w[0].tag == w[1].tag {
            return Err(FrameError::DuplicateTag(w[0].tag.as_u8()));
        }
    }
    if segs.len() != frame.header.segment_count as usize {
        return Err(FrameError::SegmentCount {
            declared: frame.header.segment_count as usize,
            found: segs.len(),
        });
    }
    check_structure(
        frame.header.mode,
        &segs.iter().map(|s| s.tag).collect::<Vec<_>>(),
    )?;
    let mut out = Vec::with_capacity(frame.encoded_len());
    frame.header.write(&mut out);
    for s in segs {
        let len = u32::try_from(s.payload.len())
            .map_err(|_| FrameError::SegmentTooLarge { tag: s.tag.as_u8() })?;
        out.push(s.tag.as_u8());
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&s.payload);
    }
    let crc = checksum(&out);
    out[CRC_OFFSET..CRC_OFFSET + 4].copy_from_slice(&crc.to_le_bytes());
    Ok(out)
}

/// Exact inverse of [`serialize`]. Structure is checked before the checksum,
/// so malformed framing reports the specific fault.
pub fn parse(bytes: &[u8]) -> Result<FfcBitstream, FrameError> {
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        let mut m = [0u8; 4];
        let k = bytes.len().min(4);
        m[..k].copy_from_slice(&bytes[..k]);
        return Err(FrameError::BadMagic(m));
    }
    if bytes.len() < 5 {
        return Err(FrameError::TruncatedHeader {
            need: HEADER_BYTES,
            available: bytes.len(),
        });
    }
    if bytes[4] != VERSION {
        return Err(FrameError::UnsupportedVersion(bytes[4]));
    }
    if bytes.len() < HEADER_BYTES {
        return Err(FrameError::TruncatedHeader {
            need: HEADER_BYTES,
            available: bytes.len(),
        });
    }
    let header = FfcHeader::read(bytes)?;
    let declared = header.segment_count as usize;
    let mut segments = Vec::with_capacity(declared.min(8));
    let mut pos = HEADER_BYTES;
    for i in 0..declared {
        let remaining = bytes.len() - pos;
        if remaining < 5 {
            return Err(FrameError::SegmentCount {
                declared,
                found: i,
            });
        }
        let raw = bytes[pos];
        let tag = SegmentTag::from_u8(raw)?;
        if let Some(prev) = segments.last().map(|s: &Segment| s.tag) {
            if prev == tag {
                return Err(FrameError::DuplicateTag(raw));
            }
            if prev > tag {
                return Err(FrameError::OutOfOrder(raw));
            }
        }
        let len = u32::from_le_bytes(bytes[pos + 1..pos + 5].try_into().unwrap()) as usize;
        pos += 5;
        let available = bytes.len() - pos;
        if len > available {
            return Err(if i + 1 == declared {
                FrameError::TruncatedSegment {
                    tag: raw,
                    expected: len,
                    available,
                }
            } else {
                FrameError::LengthMismatch {
                    tag: raw,
                    declared: len,
                    remaining: available,
                }
            });
        }
        segments.push(Segment::new(tag, bytes[pos..pos + len].to_vec()));
        pos += len;
    }
    if pos != bytes.len() {
        return Err(FrameError::TrailingBytes(bytes.len() - pos));
    }
    check_structure(
        header.mode,
        &segments.iter().map(|s| s.tag).collect::<Vec<_>>(),
    )?;
    let stored = u32::from_le_bytes(bytes[CRC_OFFSET..CRC_OFFSET + 4].try_into().unwrap());
    let computed = checksum(bytes);
    if stored != computed {
        return Err(FrameError::Checksum { stored, computed });
    }
    Ok(FfcBitstream { header, segments })
}
