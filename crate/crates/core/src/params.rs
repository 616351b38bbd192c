//! Sketch parameters and the formulas that set them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Failure probability used when only an accuracy target is given.
pub const DEFAULT_DELTA: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SketchParams {
    /// Quadtree depth before pruning (`L`).
    pub levels: u32,
    /// Longest non-branching chain kept by pruning (`Λ`).
    pub lambda: u32,
    /// Number of contiguous coordinate blocks; must divide the dimension.
    pub blocks: usize,
    pub seed: u64,
    pub eps: Option<f64>,
    pub delta: Option<f64>,
}

impl SketchParams {
    pub fn new(levels: u32, lambda: u32) -> Self {
        Self {
            levels,
            lambda,
            blocks: 1,
            seed: 0,
            eps: None,
            delta: None,
        }
    }

    pub fn with_blocks(mut self, blocks: usize) -> Self {
        self.blocks = blocks;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.levels == 0 || self.lambda == 0 {
            return Err(Error::InvalidParams(format!(
                "levels and lambda must be positive (L={}, lambda={})",
                self.levels, self.lambda
            )));
        }
        if self.levels > u16::MAX as u32 || self.lambda > u16::MAX as u32 {
            return Err(Error::InvalidParams("levels and lambda must fit in 16 bits".into()));
        }
        if self.blocks == 0 || dim % self.blocks != 0 {
            return Err(Error::BlockMismatch {
                blocks: self.blocks,
                dim,
            });
        }
        Ok(())
    }
}

/// Smallest `k` with `2^k >= x`, for `x > 0`.
pub fn ceil_log2(x: f64) -> i32 {
    debug_assert!(x > 0.0 && x.is_finite());
    let mut k = x.log2().ceil() as i32;
    while pow2(k) < x {
        k += 1;
    }
    while pow2(k - 1) >= x {
        k -= 1;
    }
    k
}

#[inline]
pub fn pow2(k: i32) -> f64 {
    2f64.powi(k)
}

/// `Λ = ⌈log₂(16·d^1.5·log₂Φ / (εδ))⌉` and `L = ⌈log₂Φ⌉ + Λ`, both clamped to at least 1.
pub fn derive_params(eps: f64, delta: f64, dim: usize, aspect_ratio: f64) -> Result<SketchParams> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidParams(format!("eps must be in (0, 1], got {eps}")));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidParams(format!("delta must be in (0, 1], got {delta}")));
    }
    if !(aspect_ratio > 1.0 && aspect_ratio.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "aspect ratio must be finite and > 1, got {aspect_ratio}"
        )));
    }
    if dim == 0 {
        return Err(Error::InvalidParams("dimension must be positive".into()));
    }
    let log_phi = aspect_ratio.log2();
    let arg = 16.0 * (dim as f64).powf(1.5) * log_phi / (eps * delta);
    let lambda = ceil_log2(arg).max(1);
    let levels = (ceil_log2(aspect_ratio) + lambda).max(1);
    Ok(SketchParams {
        levels: levels as u32,
        lambda: lambda as u32,
        blocks: 1,
        seed: 0,
        eps: Some(eps),
        delta: Some(delta),
    })
}

/// Padding radius at level `level`: `8·ε⁻¹·2^(level−Λ)·√d`.
pub fn rho(level: i32, dim: usize, eps: f64, lambda: u32) -> f64 {
    8.0 / eps * pow2(level - lambda as i32) * (dim as f64).sqrt()
}
