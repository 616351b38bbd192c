//! Comparison quantizers: uniform per-dimension grids and product quantization.

pub mod grid;
pub mod kmeans;
pub mod pq;

pub use grid::{grid_fit_quantize, GridQuantizer, GridSketch};
pub use kmeans::{kmeans, KMeans, DEFAULT_MAX_ITERS};
pub use pq::{pq_decode, pq_fit, pq_fit_with, PQCodebook};
