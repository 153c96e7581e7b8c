//! Scene files.
//!
//! Binary layout, all little-endian:
//!
//! | field      | type        |
//! |------------|-------------|
//! | magic      | `b"FVSC"`   |
//! | version    | u8 (= 1)    |
//! | origin     | 3 × f64     |
//! | voxel_size | f64         |
//! | n          | u32         |
//! | records    | n × (3 × i32 coord, 8 × f32 attrs) |
//!
//! Raw points can also be imported from text, one `x y z r R G B f` per line.

use std::io::{BufRead, Read, Write};

use super::{RawPoint, VoxelError, VoxelScene, ATTRS};

pub const SCENE_MAGIC: &[u8; 4] = b"FVSC";
pub const SCENE_VERSION: u8 = 1;
const RECORD_BYTES: usize = 12 + 4 * ATTRS;

pub fn write_scene<W: Write>(scene: &VoxelScene, mut w: W) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(41 + scene.len() * RECORD_BYTES);
    buf.extend_from_slice(SCENE_MAGIC);
    buf.push(SCENE_VERSION);
    for v in scene.origin {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&scene.voxel_size.to_le_bytes());
    buf.extend_from_slice(&(scene.len() as u32).to_le_bytes());
    for (c, a) in scene.coords().iter().zip(scene.attrs()) {
        for v in c {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for v in a {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)
}

pub fn scene_to_bytes(scene: &VoxelScene) -> Vec<u8> {
    let mut out = Vec::new();
    write_scene(scene, &mut out).expect("writing to a Vec cannot fail");
    out
}

pub fn read_scene<R: Read>(mut r: R) -> Result<VoxelScene, VoxelError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    scene_from_bytes(&bytes)
}

pub fn scene_from_bytes(bytes: &[u8]) -> Result<VoxelScene, VoxelError> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != SCENE_MAGIC {
        return Err(VoxelError::Format("bad magic".into()));
    }
    let version = cur.take(1)?[0];
    if version != SCENE_VERSION {
        return Err(VoxelError::Format(format!("unsupported version {version}")));
    }
    let origin = [cur.f64()?, cur.f64()?, cur.f64()?];
    let voxel_size = cur.f64()?;
    let n = cur.u32()? as usize;
    if bytes.len() - cur.pos != n * RECORD_BYTES {
        return Err(VoxelError::Format(format!(
            "expected {} record bytes, found {}",
            n * RECORD_BYTES,
            bytes.len() - cur.pos
        )));
    }
    let mut coords = Vec::with_capacity(n);
    let mut attrs = Vec::with_capacity(n);
    for _ in 0..n {
        coords.push([cur.i32()?, cur.i32()?, cur.i32()?]);
        let mut a = [0f32; ATTRS];
        for v in &mut a {
            *v = f32::from_le_bytes(cur.take(4)?.try_into().unwrap());
        }
        attrs.push(a);
    }
    VoxelScene::new(origin, voxel_size, coords, attrs)
}

/// Parses whitespace-separated `x y z r R G B f` lines. Blank lines and
/// lines starting with `#` are skipped.
pub fn read_points_text<R: BufRead>(r: R) -> Result<Vec<RawPoint>, VoxelError> {
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| VoxelError::Format(format!("line {}: {e}", lineno + 1)))?;
        if vals.len() != ATTRS {
            return Err(VoxelError::Format(format!(
                "line {}: expected 8 values, found {}",
                lineno + 1,
                vals.len()
            )));
        }
        let flag = vals[7];
        if flag.fract() != 0.0 || !(0.0..=255.0).contains(&flag) {
            return Err(VoxelError::Format(format!("line {}: bad flag {flag}", lineno + 1)));
        }
        out.push(RawPoint {
            pos: [vals[0], vals[1], vals[2]],
            reflectance: vals[3],
            rgb: [vals[4], vals[5], vals[6]],
            flag: flag as u8,
        });
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], VoxelError> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(VoxelError::Format(format!(
                "truncated at byte {}: need {n} more",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn f64(&mut self) -> Result<f64, VoxelError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, VoxelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i32(&mut self) -> Result<i32, VoxelError> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
