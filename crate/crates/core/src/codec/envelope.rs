//! Multi-section containers: block sketches and multi-tree sketches.
//!
//! Both start with the fixed part of the single-sketch header (with `flags`
//! set and `root_level = 0`), followed by a section table of byte lengths:
//!
//! ```text
//! blocks:     header | m × u64 section length | m single-tree sketches
//! multi-tree: header | eps f64 | k u32 | k × u64 section length
//!             | γ (n × ⌈log₂ k⌉ bits, byte padded) | k single-tree sketches
//! ```

use super::bits::{index_width, BitWriter};
use super::{ByteReader, SketchBytes, FLAG_BLOCKS, FLAG_MULTI_TREE, MAGIC, VERSION};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OuterHeader {
    pub flags: u16,
    pub n: u64,
    pub d: u32,
    pub m: u32,
    pub levels: u16,
    pub lambda: u16,
    pub seed: u64,
}

impl OuterHeader {
    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.flags.to_le_bytes());
        out.extend_from_slice(&self.n.to_le_bytes());
        out.extend_from_slice(&self.d.to_le_bytes());
        out.extend_from_slice(&self.m.to_le_bytes());
        out.extend_from_slice(&self.levels.to_le_bytes());
        out.extend_from_slice(&self.lambda.to_le_bytes());
        out.extend_from_slice(&0i32.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
    }

    fn read(r: &mut ByteReader) -> Result<Self> {
        if r.take(4)? != MAGIC {
            return Err(Error::corrupt(0, "bad magic"));
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: VERSION,
            });
        }
        let flags = r.u16()?;
        let n = r.u64()?;
        let d = r.u32()?;
        let m = r.u32()?;
        let levels = r.u16()?;
        let lambda = r.u16()?;
        let _root_level = r.i32()?;
        let seed = r.u64()?;
        Ok(Self {
            flags,
            n,
            d,
            m,
            levels,
            lambda,
            seed,
        })
    }
}

/// The `flags` field of any sketch file.
pub fn peek_flags(bytes: &[u8]) -> Result<u16> {
    let mut r = ByteReader::new(bytes);
    if r.take(4)? != MAGIC {
        return Err(Error::corrupt(0, "bad magic"));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: VERSION,
        });
    }
    r.u16()
}

fn read_sections(r: &mut ByteReader, count: usize) -> Result<Vec<u64>> {
    if count.saturating_mul(8) > r.remaining() {
        return Err(Error::corrupt(r.pos, "section table truncated"));
    }
    (0..count).map(|_| r.u64()).collect()
}

fn parse_sections(r: &mut ByteReader, lengths: &[u64]) -> Result<Vec<SketchBytes>> {
    let mut out = Vec::with_capacity(lengths.len());
    for &len in lengths {
        if len > r.remaining() as u64 {
            return Err(Error::corrupt(r.pos, "section truncated"));
        }
        let start = r.pos;
        let chunk = r.take(len as usize)?;
        let sk = SketchBytes::from_bytes(chunk).map_err(|e| match e {
            Error::CorruptSketch { offset, reason } => Error::CorruptSketch {
                offset: start + offset,
                reason,
            },
            other => other,
        })?;
        out.push(sk);
    }
    if r.remaining() != 0 {
        return Err(Error::corrupt(r.pos, "trailing bytes"));
    }
    Ok(out)
}

pub fn write_blocks(header: &OuterHeader, sections: &[SketchBytes]) -> Vec<u8> {
    debug_assert_eq!(header.flags, FLAG_BLOCKS);
    let encoded: Vec<Vec<u8>> = sections.iter().map(SketchBytes::to_bytes).collect();
    let mut out = Vec::new();
    header.write(&mut out);
    for e in &encoded {
        out.extend_from_slice(&(e.len() as u64).to_le_bytes());
    }
    for e in encoded {
        out.extend_from_slice(&e);
    }
    out
}

pub fn read_blocks(bytes: &[u8]) -> Result<(OuterHeader, Vec<SketchBytes>)> {
    let mut r = ByteReader::new(bytes);
    let header = OuterHeader::read(&mut r)?;
    if header.flags != FLAG_BLOCKS {
        return Err(Error::corrupt(6, "not a block sketch"));
    }
    if header.m == 0 || header.d == 0 || header.d % header.m != 0 {
        return Err(Error::corrupt(20, "block count does not divide the dimension"));
    }
    let lengths = read_sections(&mut r, header.m as usize)?;
    let sections = parse_sections(&mut r, &lengths)?;
    let width = header.d / header.m;
    for s in &sections {
        if s.header.n != header.n || s.header.d != width {
            return Err(Error::corrupt(0, "block section shape disagrees with the outer header"));
        }
    }
    Ok((header, sections))
}

/// Contents of a multi-tree file.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiTreeFile {
    pub header: OuterHeader,
    pub eps: f64,
    /// 0-based tree index per point.
    pub gamma: Vec<u32>,
    pub trees: Vec<SketchBytes>,
}

pub fn write_multi(file: &MultiTreeFile) -> Vec<u8> {
    debug_assert_eq!(file.header.flags, FLAG_MULTI_TREE);
    let encoded: Vec<Vec<u8>> = file.trees.iter().map(SketchBytes::to_bytes).collect();
    let mut out = Vec::new();
    file.header.write(&mut out);
    out.extend_from_slice(&file.eps.to_le_bytes());
    out.extend_from_slice(&(encoded.len() as u32).to_le_bytes());
    for e in &encoded {
        out.extend_from_slice(&(e.len() as u64).to_le_bytes());
    }
    let width = index_width(encoded.len() as u64);
    let mut w = BitWriter::new();
    for &g in &file.gamma {
        w.push_bits_msb(g as u64, width);
    }
    out.extend_from_slice(&w.into_bits().bytes);
    for e in encoded {
        out.extend_from_slice(&e);
    }
    out
}

pub fn read_multi(bytes: &[u8]) -> Result<MultiTreeFile> {
    let mut r = ByteReader::new(bytes);
    let header = OuterHeader::read(&mut r)?;
    if header.flags != FLAG_MULTI_TREE {
        return Err(Error::corrupt(6, "not a multi-tree sketch"));
    }
    let eps = r.f64()?;
    let k = r.u32()? as usize;
    if k == 0 {
        return Err(Error::corrupt(r.pos - 4, "no trees"));
    }
    let lengths = read_sections(&mut r, k)?;
    let width = index_width(k as u64);
    let gamma_bits = header
        .n
        .checked_mul(width as u64)
        .ok_or_else(|| Error::corrupt(8, "gamma array overflows"))?;
    let gamma_bytes = gamma_bits.div_ceil(8);
    if gamma_bytes > r.remaining() as u64 || (width == 0 && header.n > r.remaining() as u64 * 8) {
        return Err(Error::corrupt(r.pos, "gamma array truncated"));
    }
    let start = r.pos;
    let raw = r.take(gamma_bytes as usize)?;
    let mut reader = super::bits::BitReader::new(raw, gamma_bits as usize);
    let mut gamma = Vec::with_capacity(header.n as usize);
    for _ in 0..header.n {
        let g = reader.read_bits_msb(width)?;
        if g >= k as u64 {
            return Err(Error::corrupt(start + reader.position() / 8, "tree index out of range"));
        }
        gamma.push(g as u32);
    }
    let trees = parse_sections(&mut r, &lengths)?;
    Ok(MultiTreeFile {
        header,
        eps,
        gamma,
        trees,
    })
}
