//! Dense point sets and the aspect ratio of a set.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded_rng;

/// `n` points in `d` dimensions, stored row-major.
///
/// Coordinates are always finite. Point indices are 0-based and stable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    n: usize,
    d: usize,
    coords: Vec<f64>,
}

impl PointSet {
    pub fn new(n: usize, d: usize, coords: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::TooFewPoints { needed: 1, got: 0 });
        }
        if d == 0 {
            return Err(Error::InvalidPointSet("dimension must be at least 1".into()));
        }
        if coords.len() != n * d {
            return Err(Error::InvalidPointSet(format!(
                "expected {} coordinates for {n}x{d}, got {}",
                n * d,
                coords.len()
            )));
        }
        if let Some(pos) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidPointSet(format!(
                "non-finite coordinate at point {} dimension {}",
                pos / d,
                pos % d
            )));
        }
        Ok(Self { n, d, coords })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, |r| r.as_ref().len());
        let mut coords = Vec::with_capacity(n * d);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: r.len(),
                    record: i,
                });
            }
            coords.extend_from_slice(r);
        }
        Self::new(n, d, coords)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    /// Always false; a `PointSet` holds at least one point.
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.coords
    }

    /// Points with the given indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut coords = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            if i >= self.n {
                return Err(Error::IndexOutOfRange { index: i, n: self.n });
            }
            coords.extend_from_slice(self.point(i));
        }
        Self::new(indices.len(), self.d, coords)
    }

    /// Projection onto the contiguous coordinate range `dims`.
    pub fn project(&self, dims: std::ops::Range<usize>) -> Result<Self> {
        if dims.end > self.d || dims.is_empty() {
            return Err(Error::InvalidParams(format!(
                "coordinate range {dims:?} invalid for dimension {}",
                self.d
            )));
        }
        let width = dims.len();
        let mut coords = Vec::with_capacity(self.n * width);
        for p in self.points() {
            coords.extend_from_slice(&p[dims.clone()]);
        }
        Self::new(self.n, width, coords)
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &PointSet) -> Result<Self> {
        if self.d != other.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: other.d,
                record: self.n,
            });
        }
        let mut coords = Vec::with_capacity(self.coords.len() + other.coords.len());
        coords.extend_from_slice(&self.coords);
        coords.extend_from_slice(&other.coords);
        Self::new(self.n + other.n, self.d, coords)
    }

    /// Concatenates per-block point sets (same `n`) column-wise.
    pub fn hstack(blocks: &[PointSet]) -> Result<Self> {
        let first = blocks.first().ok_or(Error::EmptyInput)?;
        let n = first.n;
        if let Some(b) = blocks.iter().find(|b| b.n != n) {
            return Err(Error::InvalidPointSet(format!(
                "block row counts differ: {n} vs {}",
                b.n
            )));
        }
        let d: usize = blocks.iter().map(|b| b.d).sum();
        let mut coords = Vec::with_capacity(n * d);
        for i in 0..n {
            for b in blocks {
                coords.extend_from_slice(b.point(i));
            }
        }
        Self::new(n, d, coords)
    }
}

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}

/// How [`aspect_ratio_with`] computes the ratio.
#[derive(Clone, Debug)]
pub struct AspectRatioOptions {
    /// Largest `n` for which all pairs are enumerated.
    pub exact_cap: usize,
    /// Number of random pairs drawn above the cap.
    pub samples: usize,
    pub seed: u64,
}

impl Default for AspectRatioOptions {
    fn default() -> Self {
        Self {
            exact_cap: 5_000,
            samples: 2_000_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AspectRatio {
    pub value: f64,
    pub max_distance: f64,
    pub min_distance: f64,
    /// False when the value comes from sampled pairs. A sampled ratio is a
    /// lower bound on the true one.
    pub exact: bool,
}

/// Ratio of the largest to the smallest pairwise distance, by enumeration.
pub fn aspect_ratio(ps: &PointSet) -> Result<f64> {
    aspect_ratio_with(
        ps,
        &AspectRatioOptions {
            exact_cap: usize::MAX,
            ..Default::default()
        },
    )
    .map(|a| a.value)
}

pub fn aspect_ratio_with(ps: &PointSet, opts: &AspectRatioOptions) -> Result<AspectRatio> {
    let n = ps.len();
    if n < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: n });
    }
    let mut max_sq = 0.0f64;
    let mut min_sq = f64::INFINITY;
    let exact = n <= opts.exact_cap;
    if exact {
        for i in 0..n {
            let a = ps.point(i);
            for j in i + 1..n {
                let s = squared_distance(a, ps.point(j));
                max_sq = max_sq.max(s);
                min_sq = min_sq.min(s);
            }
        }
    } else {
        let mut rng = seeded_rng(opts.seed);
        for _ in 0..opts.samples.max(1) {
            let i = rng.gen_range(0..n);
            let mut j = rng.gen_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            let s = squared_distance(ps.point(i), ps.point(j));
            max_sq = max_sq.max(s);
            min_sq = min_sq.min(s);
        }
    }
    if min_sq == 0.0 {
        return Err(Error::DuplicatePoints);
    }
    let (max_distance, min_distance) = (max_sq.sqrt(), min_sq.sqrt());
    Ok(AspectRatio {
        value: max_distance / min_distance,
        max_distance,
        min_distance,
        exact,
    })
}
