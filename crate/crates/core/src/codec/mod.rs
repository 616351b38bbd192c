//! Sketch serialization.
//!
//! A single-tree sketch file is laid out as (integers little-endian):
//!
//! ```text
//! "QSK1" | version u16 | flags u16 | n u64 | d u32 | m u32 | L u16 | Λ u16
//!        | root_level i32 | seed u64 | origin d×f64 | leaf_count u64
//!        | tree_bit_len u64 | tree bits | leaf ids (n × ⌈log₂ leaf_count⌉ bits)
//! ```
//!
//! Bit streams are packed LSB-first and padded to a whole byte. The tree is
//! written as a DFS walk: a downward step is `0`, a discriminator bit (`0`
//! short, `1` long), then the edge label (`d` bits for a short edge, the
//! Elias-gamma code of the length for a long one); an upward step is `1`.
//! Leaves are numbered in the order the walk reaches them.

pub mod bits;
pub mod envelope;

use crate::cube::ShiftedHypercube;
use crate::error::{Error, Result};
use crate::params::{pow2, SketchParams};
use crate::pointset::PointSet;
use crate::quadtree::{Edge, Label, NodeId, PrunedNode, PrunedTree, ROOT};

use bits::{index_width, BitReader, BitWriter, Bits};

pub const MAGIC: [u8; 4] = *b"QSK1";
pub const VERSION: u16 = 1;

pub const FLAG_SINGLE: u16 = 0;
pub const FLAG_BLOCKS: u16 = 1;
pub const FLAG_MULTI_TREE: u16 = 2;

/// Fixed header bytes before the origin vector.
pub(crate) const FIXED_HEADER_BYTES: usize = 4 + 2 + 2 + 8 + 4 + 4 + 2 + 2 + 4 + 8;

/// Upper bound on `n` for sketches whose leaf ids take zero bits.
const MAX_IMPLICIT_POINTS: u64 = 1 << 26;

#[derive(Clone, Debug, PartialEq)]
pub struct SketchHeader {
    pub version: u16,
    pub flags: u16,
    pub n: u64,
    pub d: u32,
    pub m: u32,
    pub levels: u16,
    pub lambda: u16,
    pub root_level: i32,
    pub seed: u64,
    pub origin: Vec<f64>,
    pub leaf_count: u64,
}

/// A serialized single-tree sketch.
#[derive(Clone, Debug, PartialEq)]
pub struct SketchBytes {
    pub header: SketchHeader,
    pub tree_bits: Bits,
    pub leaf_ids: Bits,
}

/// Size of a sketch broken down by section, in bits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SizeBreakdown {
    /// Header including the origin, leaf count and tree length prefix.
    pub header_bits: usize,
    pub tree_bits: usize,
    pub leaf_id_bits: usize,
    /// Byte padding at the end of the two bit streams.
    pub padding_bits: usize,
}

impl SizeBreakdown {
    /// Tree plus leaf ids: what bits-per-coordinate figures count.
    pub fn payload_bits(&self) -> usize {
        self.tree_bits + self.leaf_id_bits
    }

    pub fn total_bits(&self) -> usize {
        self.header_bits + self.tree_bits + self.leaf_id_bits + self.padding_bits
    }
}

impl SketchBytes {
    pub fn leaf_id_width(&self) -> u32 {
        index_width(self.header.leaf_count)
    }

    pub fn size(&self) -> SizeBreakdown {
        let header_bits = (FIXED_HEADER_BYTES + 8 * self.header.origin.len() + 8 + 8) * 8;
        SizeBreakdown {
            header_bits,
            tree_bits: self.tree_bits.len,
            leaf_id_bits: self.leaf_ids.len,
            padding_bits: (self.tree_bits.bytes.len() + self.leaf_ids.bytes.len()) * 8
                - self.tree_bits.len
                - self.leaf_ids.len,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let mut out = Vec::with_capacity(self.size().total_bits() / 8);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&h.version.to_le_bytes());
        out.extend_from_slice(&h.flags.to_le_bytes());
        out.extend_from_slice(&h.n.to_le_bytes());
        out.extend_from_slice(&h.d.to_le_bytes());
        out.extend_from_slice(&h.m.to_le_bytes());
        out.extend_from_slice(&h.levels.to_le_bytes());
        out.extend_from_slice(&h.lambda.to_le_bytes());
        out.extend_from_slice(&h.root_level.to_le_bytes());
        out.extend_from_slice(&h.seed.to_le_bytes());
        for o in &h.origin {
            out.extend_from_slice(&o.to_le_bytes());
        }
        out.extend_from_slice(&h.leaf_count.to_le_bytes());
        out.extend_from_slice(&(self.tree_bits.len as u64).to_le_bytes());
        out.extend_from_slice(&self.tree_bits.bytes);
        out.extend_from_slice(&self.leaf_ids.bytes);
        out
    }

    /// Parses one sketch from the front of `bytes`; returns it and the bytes consumed.
    pub fn parse(bytes: &[u8]) -> Result<(Self, usize)> {
        let mut r = ByteReader::new(bytes);
        let magic = r.take(4)?;
        if magic != MAGIC {
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
        if flags != FLAG_SINGLE {
            return Err(Error::corrupt(6, format!("expected a single-tree sketch, flags = {flags}")));
        }
        let n = r.u64()?;
        let d = r.u32()?;
        let m = r.u32()?;
        let levels = r.u16()?;
        let lambda = r.u16()?;
        let root_level = r.i32()?;
        let seed = r.u64()?;
        if d == 0 || n == 0 {
            return Err(Error::corrupt(r.pos, "empty shape"));
        }
        if (d as usize).saturating_mul(8) > r.remaining() {
            return Err(Error::corrupt(r.pos, "origin truncated"));
        }
        let mut origin = Vec::with_capacity(d as usize);
        for _ in 0..d {
            let o = r.f64()?;
            if !o.is_finite() {
                return Err(Error::corrupt(r.pos - 8, "non-finite origin"));
            }
            origin.push(o);
        }
        let leaf_count = r.u64()?;
        let tree_len = r.u64()?;
        let tree_bytes = tree_len.div_ceil(8);
        if tree_bytes > r.remaining() as u64 {
            return Err(Error::corrupt(r.pos, "tree bits truncated"));
        }
        let tree_bits = Bits {
            bytes: r.take(tree_bytes as usize)?.to_vec(),
            len: tree_len as usize,
        };
        let width = index_width(leaf_count);
        if width == 0 && n > MAX_IMPLICIT_POINTS {
            return Err(Error::corrupt(8, "implausible point count"));
        }
        let id_len = n
            .checked_mul(width as u64)
            .ok_or_else(|| Error::corrupt(8, "leaf id section overflows"))?;
        let id_bytes = id_len.div_ceil(8);
        if id_bytes > r.remaining() as u64 {
            return Err(Error::corrupt(r.pos, "leaf ids truncated"));
        }
        let leaf_ids = Bits {
            bytes: r.take(id_bytes as usize)?.to_vec(),
            len: id_len as usize,
        };
        Ok((
            SketchBytes {
                header: SketchHeader {
                    version,
                    flags,
                    n,
                    d,
                    m,
                    levels,
                    lambda,
                    root_level,
                    seed,
                    origin,
                    leaf_count,
                },
                tree_bits,
                leaf_ids,
            },
            r.pos,
        ))
    }

    /// Parses a whole single-tree sketch file; trailing bytes are an error.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (sk, used) = Self::parse(bytes)?;
        if used != bytes.len() {
            return Err(Error::corrupt(used, "trailing bytes"));
        }
        Ok(sk)
    }
}

pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pub(crate) pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        if k > self.remaining() {
            return Err(Error::corrupt(self.pos, "unexpected end of input"));
        }
        let s = &self.bytes[self.pos..self.pos + k];
        self.pos += k;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        self.array().map(u16::from_le_bytes)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        self.array().map(u32::from_le_bytes)
    }

    pub(crate) fn i32(&mut self) -> Result<i32> {
        self.array().map(i32::from_le_bytes)
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        self.array().map(u64::from_le_bytes)
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        self.array().map(f64::from_le_bytes)
    }
}

/// Serializes a pruned tree together with its cube and parameters.
pub fn encode(tree: &PrunedTree, cube: &ShiftedHypercube, params: &SketchParams) -> SketchBytes {
    let mut w = BitWriter::new();
    // Iterative DFS; `None` marks the upward step out of a node.
    let mut stack: Vec<Option<(&Edge, NodeId)>> = tree.nodes[ROOT as usize]
        .children
        .iter()
        .rev()
        .map(|(e, c)| Some((e, *c)))
        .collect();
    while let Some(item) = stack.pop() {
        match item {
            Some((edge, child)) => {
                w.push(false);
                match edge {
                    Edge::Short(label) => {
                        w.push(false);
                        for j in 0..label.dim() {
                            w.push(label.bit(j));
                        }
                    }
                    Edge::Long(m) => {
                        w.push(true);
                        w.push_gamma(*m as u64);
                    }
                }
                stack.push(None);
                stack.extend(
                    tree.nodes[child as usize]
                        .children
                        .iter()
                        .rev()
                        .map(|(e, c)| Some((e, *c))),
                );
            }
            None => w.push(true),
        }
    }

    let leaf_count = tree.leaves.len() as u64;
    let width = index_width(leaf_count);
    let mut ids = BitWriter::new();
    for &leaf in &tree.point_to_leaf {
        ids.push_bits_msb(leaf as u64, width);
    }

    SketchBytes {
        header: SketchHeader {
            version: VERSION,
            flags: FLAG_SINGLE,
            n: tree.point_to_leaf.len() as u64,
            d: tree.dim as u32,
            m: 1,
            levels: tree.levels as u16,
            lambda: params.lambda as u16,
            root_level: tree.root_level,
            seed: params.seed,
            origin: cube.origin.clone(),
            leaf_count,
        },
        tree_bits: w.into_bits(),
        leaf_ids: ids.into_bits(),
    }
}

/// Everything recovered from a sketch.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodedSketch {
    pub tree: PrunedTree,
    /// The shift itself is not stored; `cube.shift` is empty.
    pub cube: ShiftedHypercube,
    pub params: SketchParams,
}

/// Rebuilds the tree, cube frame and parameters from a parsed sketch.
pub fn decode(sk: &SketchBytes) -> Result<DecodedSketch> {
    let h = &sk.header;
    let d = h.d as usize;
    let levels = h.levels as u32;
    let root_level = h.root_level;
    let bottom = root_level as i64 - levels as i64;
    if !(-1074..=1023).contains(&bottom) || !(-1074..=1023).contains(&(root_level as i64)) {
        return Err(Error::corrupt(32, "levels outside the f64 range"));
    }
    let bottom = bottom as i32;
    let tree_start = FIXED_HEADER_BYTES + 8 * d + 16;
    let at = |r: &BitReader| tree_start + r.position() / 8;

    let mut nodes = vec![PrunedNode {
        level: root_level,
        parent: None,
        children: Vec::new(),
    }];
    let mut stack = vec![ROOT];
    let mut r = sk.tree_bits.reader();
    while !r.at_end() {
        let cur = *stack.last().expect("root never popped");
        if r.read()? {
            if stack.len() == 1 {
                return Err(Error::corrupt(at(&r), "upward step above the root"));
            }
            stack.pop();
            continue;
        }
        let edge = if r.read()? {
            let m = r.read_gamma()?;
            if m > levels as u64 {
                return Err(Error::corrupt(at(&r), "long edge longer than the tree"));
            }
            Edge::Long(m as u32)
        } else {
            if r.remaining() < d {
                return Err(Error::corrupt(at(&r), "short edge label truncated"));
            }
            let mut label = Label::zeros(d);
            for j in 0..d {
                if r.read()? {
                    label.set(j);
                }
            }
            Edge::Short(label)
        };
        let level = nodes[cur as usize].level - edge.span() as i32;
        if level < bottom {
            return Err(Error::corrupt(at(&r), "edge descends below the bottom level"));
        }
        if let Some((prev, _)) = nodes[cur as usize].children.last() {
            if *prev >= edge {
                return Err(Error::corrupt(at(&r), "children out of order"));
            }
        }
        let id = nodes.len() as NodeId;
        nodes.push(PrunedNode {
            level,
            parent: Some(cur),
            children: Vec::new(),
        });
        nodes[cur as usize].children.push((edge, id));
        stack.push(id);
    }
    if stack.len() != 1 {
        return Err(Error::corrupt(at(&r), "tree walk does not return to the root"));
    }

    let leaves = crate::quadtree::dfs_leaves(&nodes);
    if leaves.len() as u64 != h.leaf_count {
        return Err(Error::corrupt(
            FIXED_HEADER_BYTES + 8 * d,
            format!("leaf count {} but tree has {} leaves", h.leaf_count, leaves.len()),
        ));
    }
    if nodes.len() > 1 && leaves.iter().any(|&l| nodes[l as usize].level != bottom) {
        return Err(Error::corrupt(tree_start, "leaf above the bottom level"));
    }

    let width = sk.leaf_id_width();
    let mut ids = sk.leaf_ids.reader();
    let mut point_to_leaf = Vec::with_capacity(h.n as usize);
    let ids_start = tree_start + sk.tree_bits.bytes.len();
    for _ in 0..h.n {
        let leaf = ids.read_bits_msb(width)?;
        if leaf >= h.leaf_count {
            return Err(Error::corrupt(ids_start + ids.position() / 8, "leaf id out of range"));
        }
        point_to_leaf.push(leaf as u32);
    }

    let tree = PrunedTree {
        nodes,
        root_level,
        levels,
        dim: d,
        leaves,
        point_to_leaf,
    };
    let cube = ShiftedHypercube {
        origin: h.origin.clone(),
        side: pow2(root_level),
        root_level,
        shift: Vec::new(),
    };
    let params = SketchParams {
        levels,
        lambda: h.lambda as u32,
        blocks: h.m as usize,
        seed: h.seed,
        eps: None,
        delta: None,
    };
    Ok(DecodedSketch { tree, cube, params })
}

/// Reconstructs the corner point `c(v)` of the leaf with ordinal `leaf`.
///
/// Each short edge into a node at level `ℓ` contributes `2^ℓ` along every
/// coordinate whose label bit is set; long edges contribute nothing.
pub fn decompress_point(tree: &PrunedTree, leaf: usize, cube: &ShiftedHypercube) -> Result<Vec<f64>> {
    let &node = tree.leaves.get(leaf).ok_or(Error::LeafOutOfRange {
        leaf,
        leaves: tree.leaves.len(),
    })?;
    let mut acc = vec![0.0f64; tree.dim];
    let mut level = tree.root_level;
    // Most significant level first.
    for edge in tree.path_edges(node) {
        level -= edge.span() as i32;
        if let Edge::Short(label) = edge {
            add_label(&mut acc, label, pow2(level));
        }
    }
    Ok(acc.iter().zip(&cube.origin).map(|(a, o)| o + a).collect())
}

#[inline]
fn add_label(acc: &mut [f64], label: &Label, weight: f64) {
    for (j, a) in acc.iter_mut().enumerate() {
        if label.bit(j) {
            *a += weight;
        }
    }
}

/// `c(v)` for every leaf, in leaf-ordinal order, as a flat `leaves × d` array.
pub fn decompress_leaves(tree: &PrunedTree, cube: &ShiftedHypercube) -> Vec<f64> {
    let d = tree.dim;
    let mut out = vec![0.0; tree.leaves.len() * d];
    let mut leaf_ordinal = 0usize;
    // (node, accumulated offsets of the node); offsets are dyadic, so the
    // running sums are exact.
    let mut stack = vec![(ROOT, vec![0.0f64; d])];
    while let Some((id, acc)) = stack.pop() {
        let node = &tree.nodes[id as usize];
        if node.children.is_empty() {
            let row = &mut out[leaf_ordinal * d..(leaf_ordinal + 1) * d];
            for ((r, a), o) in row.iter_mut().zip(&acc).zip(&cube.origin) {
                *r = o + a;
            }
            leaf_ordinal += 1;
            continue;
        }
        for (edge, child) in node.children.iter().rev() {
            let mut next = acc.clone();
            if let Edge::Short(label) = edge {
                add_label(&mut next, label, pow2(tree.nodes[*child as usize].level));
            }
            stack.push((*child, next));
        }
    }
    out
}

/// Decompressed point set: every point replaced by its leaf's `c(v)`.
pub fn decompress_tree(tree: &PrunedTree, cube: &ShiftedHypercube) -> Result<PointSet> {
    let d = tree.dim;
    let leaves = decompress_leaves(tree, cube);
    let mut coords = Vec::with_capacity(tree.point_to_leaf.len() * d);
    for &leaf in &tree.point_to_leaf {
        let l = leaf as usize;
        coords.extend_from_slice(&leaves[l * d..(l + 1) * d]);
    }
    PointSet::new(tree.point_to_leaf.len(), d, coords)
}
