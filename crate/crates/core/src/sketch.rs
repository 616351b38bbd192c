//! Compression entry points: single-tree sketches, block sketches over
//! contiguous coordinate ranges, and the multi-tree sketch that answers
//! every pairwise distance query.

use log::debug;
use rayon::prelude::*;

use crate::codec::envelope::{self, MultiTreeFile, OuterHeader};
use crate::codec::{
    decode, decompress_leaves, decompress_tree, encode, SketchBytes, FLAG_BLOCKS, FLAG_MULTI_TREE,
};
use crate::cube::{enclosing_cube, enclosing_cube_with_delta, ShiftedHypercube};
use crate::error::{Error, Result};
use crate::params::{derive_params, SketchParams};
use crate::pointset::{aspect_ratio_with, distance, AspectRatioOptions, PointSet};
use crate::quadtree::{build, is_padded, prune, separation_levels, PrunedTree};
use crate::rng::derive_seed;

/// Failure probability per tree in the multi-tree construction.
pub const MAX_DISTORTION_DELTA: f64 = 0.25;

/// Cube for `ps`; all-identical point sets get `Δ = 1`.
pub fn cube_for(ps: &PointSet, seed: u64) -> Result<ShiftedHypercube> {
    match enclosing_cube(ps, seed) {
        Err(Error::DegeneratePointSet) => enclosing_cube_with_delta(ps, 0, seed),
        other => other,
    }
}

/// Runs shift, build and prune, returning the tree and its cube.
pub fn sketch_tree(ps: &PointSet, params: &SketchParams) -> Result<(PrunedTree, ShiftedHypercube)> {
    if params.levels == 0 || params.lambda == 0 {
        return Err(Error::InvalidParams("levels and lambda must be positive".into()));
    }
    let cube = cube_for(ps, params.seed)?;
    let bottom = cube.root_level as i64 - params.levels as i64;
    if bottom < -1074 {
        return Err(Error::InvalidParams(format!(
            "L = {} puts the bottom level below the f64 range",
            params.levels
        )));
    }
    let raw = build(ps, &cube, params.levels);
    Ok((prune(&raw, params.lambda), cube))
}

/// Single-tree sketch of `ps`.
pub fn compress(ps: &PointSet, params: &SketchParams) -> Result<SketchBytes> {
    let (tree, cube) = sketch_tree(ps, params)?;
    Ok(encode(&tree, &cube, params))
}

pub fn decompress(sk: &SketchBytes) -> Result<PointSet> {
    let decoded = decode(sk)?;
    decompress_tree(&decoded.tree, &decoded.cube)
}

/// One single-tree sketch per contiguous block of `d / m` coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockSketch {
    pub header: OuterHeader,
    pub blocks: Vec<SketchBytes>,
}

impl BlockSketch {
    pub fn n(&self) -> usize {
        self.header.n as usize
    }

    pub fn dim(&self) -> usize {
        self.header.d as usize
    }

    /// Tree and leaf-id bits summed over blocks.
    pub fn payload_bits(&self) -> usize {
        self.blocks.iter().map(|b| b.size().payload_bits()).sum()
    }

    pub fn bits_per_coordinate(&self) -> f64 {
        self.payload_bits() as f64 / (self.n() * self.dim()) as f64
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        envelope::write_blocks(&self.header, &self.blocks)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, blocks) = envelope::read_blocks(bytes)?;
        Ok(Self { header, blocks })
    }
}

/// Seed of block `b`; blocks draw independent shifts.
pub fn block_seed(master: u64, block: usize) -> u64 {
    derive_seed(master, block as u64)
}

/// Coordinate range of block `b` out of `m` over `d` dimensions.
pub fn block_range(d: usize, m: usize, b: usize) -> std::ops::Range<usize> {
    let w = d / m;
    b * w..(b + 1) * w
}

pub fn compress_blocks(ps: &PointSet, params: &SketchParams) -> Result<BlockSketch> {
    params.validate(ps.dim())?;
    let (d, m) = (ps.dim(), params.blocks);
    let blocks = (0..m)
        .into_par_iter()
        .map(|b| {
            let sub = ps.project(block_range(d, m, b))?;
            let sub_params = SketchParams {
                blocks: 1,
                seed: block_seed(params.seed, b),
                ..params.clone()
            };
            compress(&sub, &sub_params)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BlockSketch {
        header: OuterHeader {
            flags: FLAG_BLOCKS,
            n: ps.len() as u64,
            d: d as u32,
            m: m as u32,
            levels: params.levels as u16,
            lambda: params.lambda as u16,
            seed: params.seed,
        },
        blocks,
    })
}

pub fn decompress_blocks(bsk: &BlockSketch) -> Result<PointSet> {
    let parts = bsk
        .blocks
        .iter()
        .map(decompress)
        .collect::<Result<Vec<_>>>()?;
    PointSet::hstack(&parts)
}

/// Decompressed leaves of one tree of a [`MultiTreeSketch`].
#[derive(Clone, Debug)]
struct TreeView {
    /// Point index (global) -> position within this tree's members.
    local: Vec<u32>,
    point_to_leaf: Vec<u32>,
    leaf_coords: Vec<f64>,
}

/// Distance oracle built from a sequence of trees over shrinking point sets.
///
/// Tree `t` covers the points with `γ ≥ t`, in increasing index order; every
/// point is padded in tree `γ(i)`.
#[derive(Clone, Debug)]
pub struct MultiTreeSketch {
    file: MultiTreeFile,
    views: Vec<TreeView>,
}

impl MultiTreeSketch {
    fn from_file(file: MultiTreeFile) -> Result<Self> {
        let n = file.gamma.len();
        let d = file.header.d as usize;
        let mut views = Vec::with_capacity(file.trees.len());
        for (t, sk) in file.trees.iter().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&i| file.gamma[i] as usize >= t).collect();
            if sk.header.n as usize != members.len() || sk.header.d as usize != d {
                return Err(Error::corrupt(0, format!("tree {t} does not match its point subset")));
            }
            let decoded = decode(sk)?;
            let mut local = vec![u32::MAX; n];
            for (k, &i) in members.iter().enumerate() {
                local[i] = k as u32;
            }
            views.push(TreeView {
                local,
                leaf_coords: decompress_leaves(&decoded.tree, &decoded.cube),
                point_to_leaf: decoded.tree.point_to_leaf,
            });
        }
        Ok(Self { file, views })
    }

    pub fn len(&self) -> usize {
        self.file.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.file.gamma.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.file.header.d as usize
    }

    pub fn tree_count(&self) -> usize {
        self.file.trees.len()
    }

    /// 0-based tree index in which each point is padded.
    pub fn gamma(&self) -> &[u32] {
        &self.file.gamma
    }

    pub fn trees(&self) -> &[SketchBytes] {
        &self.file.trees
    }

    pub fn levels(&self) -> u32 {
        self.file.header.levels as u32
    }

    pub fn lambda(&self) -> u32 {
        self.file.header.lambda as u32
    }

    /// Tree payloads plus the γ array.
    pub fn payload_bits(&self) -> usize {
        let width = crate::codec::bits::index_width(self.tree_count() as u64) as usize;
        self.file.trees.iter().map(|t| t.size().payload_bits()).sum::<usize>() + width * self.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        envelope::write_multi(&self.file)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_file(envelope::read_multi(bytes)?)
    }

    /// `x̃_i` as seen by tree `t`; `i` must be a member of `t`.
    fn point_in(&self, t: usize, i: usize) -> &[f64] {
        let view = &self.views[t];
        let leaf = view.point_to_leaf[view.local[i] as usize] as usize;
        let d = self.dim();
        &view.leaf_coords[leaf * d..(leaf + 1) * d]
    }
}

/// Amplification cap: retries allowed per tree.
pub fn retry_cap(n: usize) -> usize {
    4 * (n.max(1) as f64).log2().ceil() as usize + 8
}

/// Builds trees until every point is padded in one of them.
///
/// Each round sketches the still-unpadded points with `δ = 0.25`, keeps the
/// padded ones, and recurses on the rest. A round padding fewer than half of
/// its points is redrawn, at most [`retry_cap`] times.
pub fn compress_maxdist(ps: &PointSet, eps: f64, seed: u64) -> Result<MultiTreeSketch> {
    let n = ps.len();
    let d = ps.dim();
    let params = if n >= 2 {
        let phi = aspect_ratio_with(ps, &AspectRatioOptions::default())?;
        derive_params(eps, MAX_DISTORTION_DELTA, d, phi.value.max(2.0))?
    } else {
        derive_params(eps, MAX_DISTORTION_DELTA, d, 2.0)?
    };
    let cap = retry_cap(n);
    let mut gamma = vec![u32::MAX; n];
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut trees = Vec::new();
    while !remaining.is_empty() {
        let t = trees.len();
        let sub = ps.select(&remaining)?;
        let mut accepted = None;
        for attempt in 0..cap {
            let tree_params = SketchParams {
                seed: derive_seed(derive_seed(seed, t as u64), attempt as u64),
                ..params.clone()
            };
            let (tree, cube) = sketch_tree(&sub, &tree_params)?;
            let padded: Vec<bool> = (0..sub.len())
                .map(|k| {
                    let leaf = tree.leaves[tree.point_to_leaf[k] as usize];
                    let levels = separation_levels(&tree, leaf);
                    is_padded(k, &sub, &cube, &levels, eps, params.lambda)
                })
                .collect();
            let count = padded.iter().filter(|&&p| p).count();
            debug!("tree {t} attempt {attempt}: {count}/{} padded", sub.len());
            if 2 * count >= sub.len() {
                accepted = Some((encode(&tree, &cube, &tree_params), padded));
                break;
            }
        }
        let (sk, padded) = accepted.ok_or(Error::AmplificationExhausted {
            retries: cap,
            remaining: remaining.len(),
        })?;
        let mut rest = Vec::with_capacity(remaining.len() / 2);
        for (k, &i) in remaining.iter().enumerate() {
            if padded[k] {
                gamma[i] = t as u32;
            } else {
                rest.push(i);
            }
        }
        trees.push(sk);
        remaining = rest;
    }
    MultiTreeSketch::from_file(MultiTreeFile {
        header: OuterHeader {
            flags: FLAG_MULTI_TREE,
            n: n as u64,
            d: d as u32,
            m: 1,
            levels: params.levels as u16,
            lambda: params.lambda as u16,
            seed,
        },
        eps,
        gamma,
        trees,
    })
}

/// Estimated `‖x_i − x_j‖` from the tree `min(γ(i), γ(j))`.
pub fn distance_query(msk: &MultiTreeSketch, i: usize, j: usize) -> Result<f64> {
    let n = msk.len();
    for idx in [i, j] {
        if idx >= n {
            return Err(Error::IndexOutOfRange { index: idx, n });
        }
    }
    if i == j {
        return Err(Error::InvalidParams("distance query needs two distinct points".into()));
    }
    let g = msk.gamma()[i].min(msk.gamma()[j]) as usize;
    Ok(distance(msk.point_in(g, i), msk.point_in(g, j)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::pow2;

    #[test]
    fn single_point_within_bottom_cell() {
        let ps = PointSet::new(1, 3, vec![1.5, -2.0, 7.25]).unwrap();
        let params = SketchParams::new(6, 6);
        let sk = compress(&ps, &params).unwrap();
        let out = decompress(&sk).unwrap();
        let bound = pow2(sk.header.root_level - 6) * 3f64.sqrt();
        assert!(distance(out.point(0), ps.point(0)) <= bound);
    }

    #[test]
    fn identical_points_share_a_leaf() {
        let ps = PointSet::new(5, 2, vec![0.0; 10]).unwrap();
        let sk = compress(&ps, &SketchParams::new(4, 1)).unwrap();
        assert_eq!(sk.header.leaf_count, 1);
        assert_eq!(sk.header.root_level, 2);
        let out = decompress(&sk).unwrap();
        assert!(out.points().all(|p| p == out.point(0)));
    }

    #[test]
    fn shape_preserved() {
        let coords: Vec<f64> = (0..60).map(|v| (v * 37 % 11) as f64 * 0.3).collect();
        let ps = PointSet::new(12, 5, coords).unwrap();
        let out = decompress(&compress(&ps, &SketchParams::new(8, 3)).unwrap()).unwrap();
        assert_eq!((out.len(), out.dim()), (12, 5));
    }

    #[test]
    fn block_mismatch() {
        let ps = PointSet::new(2, 4, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]).unwrap();
        assert!(matches!(
            compress_blocks(&ps, &SketchParams::new(4, 2).with_blocks(3)),
            Err(Error::BlockMismatch { blocks: 3, dim: 4 })
        ));
    }

    #[test]
    fn single_point_multi_tree() {
        let ps = PointSet::new(1, 2, vec![0.5, 0.5]).unwrap();
        let msk = compress_maxdist(&ps, 0.5, 1).unwrap();
        assert_eq!(msk.tree_count(), 1);
        assert_eq!(msk.gamma(), &[0]);
        assert!(matches!(distance_query(&msk, 0, 1), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn query_rejects_same_point() {
        let ps = PointSet::new(2, 1, vec![0.0, 1.0]).unwrap();
        let msk = compress_maxdist(&ps, 0.5, 1).unwrap();
        assert!(distance_query(&msk, 1, 1).is_err());
        let est = distance_query(&msk, 0, 1).unwrap();
        assert!((est - 1.0).abs() <= 0.5);
    }

    #[test]
    fn retry_cap_values() {
        assert_eq!(retry_cap(1), 8);
        assert_eq!(retry_cap(100), 36);
    }
}
