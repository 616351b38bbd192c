//! Per-dimension uniform scalar quantization.
//!
//! File layout (little-endian):
//!
//! ```text
//! "QSKG" | version u16 | n u64 | d u32 | k u32 | min d×f64 | max d×f64 | codes
//! ```
//!
//! where codes are `n × d` fixed-width `⌈log₂ k⌉`-bit indices, packed LSB-first.

use crate::codec::bits::{index_width, BitReader, BitWriter};
use crate::codec::ByteReader;
use crate::error::{Error, Result};
use crate::pointset::PointSet;

pub const GRID_MAGIC: [u8; 4] = *b"QSKG";
pub const GRID_VERSION: u16 = 1;

/// `k` equally spaced landmarks per dimension spanning `[min_j, max_j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridQuantizer {
    pub k: u32,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl GridQuantizer {
    pub fn fit(ps: &PointSet, k: u32) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidParams(format!("grid needs k >= 2, got {k}")));
        }
        let d = ps.dim();
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for p in ps.points() {
            for j in 0..d {
                min[j] = min[j].min(p[j]);
                max[j] = max[j].max(p[j]);
            }
        }
        Ok(Self { k, min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Bits stored per coordinate.
    pub fn bits_per_coordinate(&self) -> u32 {
        index_width(self.k as u64)
    }

    pub fn landmark(&self, j: usize, idx: u32) -> f64 {
        let (lo, hi) = (self.min[j], self.max[j]);
        if lo == hi || idx == 0 {
            lo
        } else if idx == self.k - 1 {
            hi
        } else {
            lo + (hi - lo) * (idx as f64 / (self.k - 1) as f64)
        }
    }

    /// Index of the landmark nearest to `v` in dimension `j`; midpoints round up.
    pub fn code(&self, j: usize, v: f64) -> u32 {
        let (lo, hi) = (self.min[j], self.max[j]);
        if lo == hi {
            return 0;
        }
        let t = (v - lo) / (hi - lo) * (self.k - 1) as f64;
        let mut idx = (t + 0.5).floor().clamp(0.0, (self.k - 1) as f64) as u32;
        // Correct for rounding in `t` near a midpoint.
        while idx + 1 < self.k && nearer_or_tie(v, self.landmark(j, idx + 1), self.landmark(j, idx)) {
            idx += 1;
        }
        while idx > 0 && !nearer_or_tie(v, self.landmark(j, idx), self.landmark(j, idx - 1)) {
            idx -= 1;
        }
        idx
    }

    pub fn encode(&self, ps: &PointSet) -> Vec<u32> {
        let d = self.dim();
        ps.points()
            .flat_map(|p| (0..d).map(move |j| self.code(j, p[j])))
            .collect()
    }

    pub fn decode(&self, codes: &[u32]) -> Result<PointSet> {
        let d = self.dim();
        let coords = codes
            .iter()
            .enumerate()
            .map(|(i, &c)| self.landmark(i % d, c))
            .collect();
        PointSet::new(codes.len() / d, d, coords)
    }

    pub fn payload_bits(&self, n: usize) -> usize {
        n * self.dim() * self.bits_per_coordinate() as usize
    }
}

/// `up` is at least as close to `v` as `down`, with `up > down`.
fn nearer_or_tie(v: f64, up: f64, down: f64) -> bool {
    (up - v).abs() <= (v - down).abs()
}

/// Fits a grid with `k` landmarks per dimension and rounds every coordinate.
pub fn grid_fit_quantize(ps: &PointSet, k: u32) -> Result<(GridQuantizer, PointSet)> {
    let q = GridQuantizer::fit(ps, k)?;
    let out = q.decode(&q.encode(ps))?;
    Ok((q, out))
}

/// A fitted grid plus the codes of one point set.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSketch {
    pub quantizer: GridQuantizer,
    pub n: usize,
    pub codes: Vec<u32>,
}

impl GridSketch {
    pub fn new(ps: &PointSet, k: u32) -> Result<Self> {
        let quantizer = GridQuantizer::fit(ps, k)?;
        let codes = quantizer.encode(ps);
        Ok(Self {
            quantizer,
            n: ps.len(),
            codes,
        })
    }

    pub fn decompress(&self) -> Result<PointSet> {
        self.quantizer.decode(&self.codes)
    }

    pub fn payload_bits(&self) -> usize {
        self.quantizer.payload_bits(self.n)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let q = &self.quantizer;
        let mut out = Vec::new();
        out.extend_from_slice(&GRID_MAGIC);
        out.extend_from_slice(&GRID_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n as u64).to_le_bytes());
        out.extend_from_slice(&(q.dim() as u32).to_le_bytes());
        out.extend_from_slice(&q.k.to_le_bytes());
        for v in q.min.iter().chain(&q.max) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let width = q.bits_per_coordinate();
        let mut w = BitWriter::new();
        for &c in &self.codes {
            w.push_bits_msb(c as u64, width);
        }
        out.extend_from_slice(&w.into_bits().bytes);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != GRID_MAGIC {
            return Err(Error::corrupt(0, "bad magic"));
        }
        let version = r.u16()?;
        if version != GRID_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: GRID_VERSION,
            });
        }
        let n = r.u64()? as usize;
        let d = r.u32()? as usize;
        let k = r.u32()?;
        if n == 0 || d == 0 || k < 2 {
            return Err(Error::corrupt(6, "invalid grid shape"));
        }
        if d.saturating_mul(16) > r.remaining() {
            return Err(Error::corrupt(r.pos, "grid bounds truncated"));
        }
        let min = (0..d).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let max = (0..d).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        if min.iter().zip(&max).any(|(a, b)| !(a.is_finite() && b.is_finite() && a <= b)) {
            return Err(Error::corrupt(22, "invalid grid bounds"));
        }
        let width = index_width(k as u64);
        let bits = n
            .checked_mul(d)
            .and_then(|c| c.checked_mul(width as usize))
            .ok_or_else(|| Error::corrupt(6, "grid size overflows"))?;
        let start = r.pos;
        if bits.div_ceil(8) != r.remaining() {
            return Err(Error::corrupt(start, "code array has the wrong length"));
        }
        let raw = r.take(bits.div_ceil(8))?;
        let mut reader = BitReader::new(raw, bits);
        let mut codes = Vec::with_capacity(n * d);
        for _ in 0..n * d {
            let c = reader.read_bits_msb(width)? as u32;
            if c >= k {
                return Err(Error::corrupt(start + reader.position() / 8, "code out of range"));
            }
            codes.push(c);
        }
        Ok(Self {
            quantizer: GridQuantizer { k, min, max },
            n,
            codes,
        })
    }
}
