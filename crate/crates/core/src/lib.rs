//! QuadSketch: distance-preserving compression of point sets with pruned
//! quadtrees over randomly shifted grids.
//!
//! The pipeline is [`cube::enclosing_cube`] → [`quadtree::build`] →
//! [`quadtree::prune`] → [`codec::encode`], wrapped by [`sketch::compress`].
//! [`baselines`] holds the grid and product quantizers it is compared
//! against, and [`eval`] the nearest-neighbor accuracy harness.

pub mod baselines;
pub mod codec;
pub mod cube;
pub mod data;
pub mod error;
pub mod eval;
pub mod params;
pub mod pointset;
pub mod quadtree;
pub mod rng;
pub mod sketch;

pub use codec::{decode, decompress_point, encode, SketchBytes};
pub use cube::{enclosing_cube, ShiftedHypercube};
pub use error::{Error, Result};
pub use params::{derive_params, rho, SketchParams};
pub use pointset::{aspect_ratio, PointSet};
pub use quadtree::{build, is_padded, prune, PrunedTree, RawTree};
pub use sketch::{
    compress, compress_blocks, compress_maxdist, decompress, decompress_blocks, distance_query,
    BlockSketch, MultiTreeSketch,
};
