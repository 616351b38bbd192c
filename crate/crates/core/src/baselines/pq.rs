//! Product quantization: an independent k-means codebook per contiguous block.
//!
//! File layout (little-endian):
//!
//! ```text
//! "QSKP" | version u16 | n u64 | d u32 | m u32 | k u32
//!        | centroids m×k×(d/m) f64 | codes
//! ```
//!
//! where codes are `n × m` fixed-width `⌈log₂ k⌉`-bit indices, packed LSB-first.

use rayon::prelude::*;

use super::kmeans::{kmeans, DEFAULT_MAX_ITERS};
use crate::codec::bits::{index_width, BitReader, BitWriter};
use crate::codec::ByteReader;
use crate::error::{Error, Result};
use crate::pointset::PointSet;
use crate::rng::derive_seed;
use crate::sketch::block_range;

pub const PQ_MAGIC: [u8; 4] = *b"QSKP";
pub const PQ_VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct PQCodebook {
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub k: usize,
    /// Block-major: block `b`, centroid `c` starts at `(b·k + c)·(d/m)`.
    pub centroids: Vec<f64>,
    /// `n × m`, row-major.
    pub codes: Vec<u32>,
}

impl PQCodebook {
    pub fn block_dim(&self) -> usize {
        self.d / self.m
    }

    pub fn centroid(&self, block: usize, c: usize) -> &[f64] {
        let w = self.block_dim();
        let start = (block * self.k + c) * w;
        &self.centroids[start..start + w]
    }

    pub fn code_bits(&self) -> usize {
        self.n * self.m * index_width(self.k as u64) as usize
    }

    /// Centroid storage at 64 bits per value.
    pub fn codebook_bits(&self) -> usize {
        self.centroids.len() * 64
    }

    pub fn bits_per_coordinate(&self) -> f64 {
        self.code_bits() as f64 / (self.n * self.d) as f64
    }

    pub fn bits_per_coordinate_with_codebook(&self) -> f64 {
        (self.code_bits() + self.codebook_bits()) as f64 / (self.n * self.d) as f64
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(26 + self.centroids.len() * 8 + self.code_bits() / 8 + 1);
        out.extend_from_slice(&PQ_MAGIC);
        out.extend_from_slice(&PQ_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n as u64).to_le_bytes());
        out.extend_from_slice(&(self.d as u32).to_le_bytes());
        out.extend_from_slice(&(self.m as u32).to_le_bytes());
        out.extend_from_slice(&(self.k as u32).to_le_bytes());
        for v in &self.centroids {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let width = index_width(self.k as u64);
        let mut w = BitWriter::new();
        for &c in &self.codes {
            w.push_bits_msb(c as u64, width);
        }
        out.extend_from_slice(&w.into_bits().bytes);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != PQ_MAGIC {
            return Err(Error::corrupt(0, "bad magic"));
        }
        let version = r.u16()?;
        if version != PQ_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: PQ_VERSION,
            });
        }
        let n = r.u64()? as usize;
        let d = r.u32()? as usize;
        let m = r.u32()? as usize;
        let k = r.u32()? as usize;
        if n == 0 || d == 0 || m == 0 || k == 0 || d % m != 0 {
            return Err(Error::corrupt(6, "invalid codebook shape"));
        }
        let values = k
            .checked_mul(d)
            .filter(|&v| v.saturating_mul(8) <= r.remaining())
            .ok_or_else(|| Error::corrupt(r.pos, "centroids truncated"))?;
        let centroids = (0..values).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let width = index_width(k as u64);
        let bits = n
            .checked_mul(m)
            .and_then(|c| c.checked_mul(width as usize))
            .ok_or_else(|| Error::corrupt(6, "code array overflows"))?;
        let start = r.pos;
        if bits.div_ceil(8) != r.remaining() {
            return Err(Error::corrupt(start, "code array has the wrong length"));
        }
        let raw = r.take(bits.div_ceil(8))?;
        let mut reader = BitReader::new(raw, bits);
        let mut codes = Vec::with_capacity(n * m);
        for _ in 0..n * m {
            let c = reader.read_bits_msb(width)? as usize;
            if c >= k {
                return Err(Error::corrupt(start + reader.position() / 8, "code out of range"));
            }
            codes.push(c as u32);
        }
        Ok(Self {
            n,
            d,
            m,
            k,
            centroids,
            codes,
        })
    }
}

pub fn pq_fit(ps: &PointSet, m: usize, k: usize, seed: u64) -> Result<PQCodebook> {
    pq_fit_with(ps, m, k, seed, DEFAULT_MAX_ITERS)
}

/// Fits `m` block codebooks of `k` centroids each; block `b` uses seed
/// `derive_seed(seed, b)`.
pub fn pq_fit_with(ps: &PointSet, m: usize, k: usize, seed: u64, max_iters: usize) -> Result<PQCodebook> {
    let (n, d) = (ps.len(), ps.dim());
    if m == 0 || d % m != 0 {
        return Err(Error::BlockMismatch { blocks: m, dim: d });
    }
    if k == 0 || k > u32::MAX as usize {
        return Err(Error::InvalidParams(format!("invalid codebook size {k}")));
    }
    let fits = (0..m)
        .into_par_iter()
        .map(|b| {
            let block = ps.project(block_range(d, m, b))?;
            kmeans(block.as_slice(), d / m, k, derive_seed(seed, b as u64), max_iters)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut centroids = Vec::with_capacity(k * d);
    for f in &fits {
        centroids.extend_from_slice(&f.centroids);
    }
    let mut codes = vec![0u32; n * m];
    for (b, f) in fits.iter().enumerate() {
        for (i, &c) in f.assignments.iter().enumerate() {
            codes[i * m + b] = c;
        }
    }
    Ok(PQCodebook {
        n,
        d,
        m,
        k,
        centroids,
        codes,
    })
}

/// Reconstructs every point as its concatenated block centroids.
pub fn pq_decode(cb: &PQCodebook) -> Result<PointSet> {
    let mut coords = Vec::with_capacity(cb.n * cb.d);
    for row in cb.codes.chunks_exact(cb.m) {
        for (b, &c) in row.iter().enumerate() {
            coords.extend_from_slice(cb.centroid(b, c as usize));
        }
    }
    PointSet::new(cb.n, cb.d, coords)
}
