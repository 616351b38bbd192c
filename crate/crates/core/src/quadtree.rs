//! Quadtree construction over nested shifted grids, pruning of
//! non-branching chains, and the padding test.
//!
//! Levels are signed: a node at level `ℓ` owns a cell of side `2^ℓ`. The root
//! sits at the cube's `root_level` and leaves of an unpruned tree at
//! `root_level − L`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cube::ShiftedHypercube;
use crate::params::{pow2, rho};
use crate::pointset::PointSet;

pub type NodeId = u32;

pub const ROOT: NodeId = 0;

/// A `d`-bit child label. Bit `j` is 1 iff the child is the upper half of its
/// parent along coordinate `j`.
///
/// Bits are packed most-significant first, so the derived ordering is the
/// lexicographic order of the bit string `b_0 b_1 … b_{d-1}`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Label {
    dim: u32,
    words: Box<[u64]>,
}

impl Label {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim: dim as u32,
            words: vec![0; dim.div_ceil(64)].into_boxed_slice(),
        }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut l = Self::zeros(bits.len());
        for (j, &b) in bits.iter().enumerate() {
            if b {
                l.set(j);
            }
        }
        l
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn bit(&self, j: usize) -> bool {
        debug_assert!(j < self.dim());
        self.words[j / 64] >> (63 - j % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, j: usize) {
        self.words[j / 64] |= 1 << (63 - j % 64);
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }
}

impl fmt::Debug for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("\"")?;
        for j in 0..self.dim() {
            f.write_str(if self.bit(j) { "1" } else { "0" })?;
        }
        f.write_str("\"")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawNode {
    pub level: i32,
    /// Occupied children, sorted by label.
    pub children: Vec<(Label, NodeId)>,
    /// Points in this cell; only filled for leaves.
    pub points: Vec<u32>,
}

/// Unpruned quadtree: every leaf at `root_level − levels`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawTree {
    pub nodes: Vec<RawNode>,
    pub root_level: i32,
    pub levels: u32,
    pub dim: usize,
    pub n_points: usize,
}

impl RawTree {
    pub fn bottom_level(&self) -> i32 {
        self.root_level - self.levels as i32
    }

    pub fn leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.children.is_empty())
            .map(|(i, _)| i as NodeId)
    }
}

/// Buckets `ps` into `levels` levels of nested grid cells below `cube`.
///
/// At each level a point goes to the upper half along coordinate `j` iff its
/// offset from the cube origin is at least the cell midpoint.
pub fn build(ps: &PointSet, cube: &ShiftedHypercube, levels: u32) -> RawTree {
    let d = ps.dim();
    let n = ps.len();
    let mut offsets = Vec::with_capacity(n * d);
    let mut buf = Vec::with_capacity(d);
    for p in ps.points() {
        cube.offsets_into(p, &mut buf);
        offsets.extend_from_slice(&buf);
    }

    let mut nodes = vec![RawNode {
        level: cube.root_level,
        children: Vec::new(),
        points: Vec::new(),
    }];
    struct Open {
        id: NodeId,
        corner: Vec<f64>,
        members: Vec<u32>,
    }
    let mut frontier = vec![Open {
        id: ROOT,
        corner: vec![0.0; d],
        members: (0..n as u32).collect(),
    }];

    for step in 0..levels {
        let level = cube.root_level - step as i32;
        let half = pow2(level - 1);
        let mut next = Vec::with_capacity(frontier.len());
        for open in frontier {
            let mut labeled: Vec<(Label, u32)> = open
                .members
                .iter()
                .map(|&i| {
                    let t = &offsets[i as usize * d..(i as usize + 1) * d];
                    let mut label = Label::zeros(d);
                    for j in 0..d {
                        if t[j] >= open.corner[j] + half {
                            label.set(j);
                        }
                    }
                    (label, i)
                })
                .collect();
            labeled.sort_unstable();
            let mut start = 0;
            while start < labeled.len() {
                let mut end = start + 1;
                while end < labeled.len() && labeled[end].0 == labeled[start].0 {
                    end += 1;
                }
                let label = labeled[start].0.clone();
                let corner: Vec<f64> = (0..d)
                    .map(|j| open.corner[j] + if label.bit(j) { half } else { 0.0 })
                    .collect();
                let id = nodes.len() as NodeId;
                nodes.push(RawNode {
                    level: level - 1,
                    children: Vec::new(),
                    points: Vec::new(),
                });
                nodes[open.id as usize].children.push((label, id));
                next.push(Open {
                    id,
                    corner,
                    members: labeled[start..end].iter().map(|&(_, i)| i).collect(),
                });
                start = end;
            }
        }
        frontier = next;
    }
    for open in frontier {
        nodes[open.id as usize].points = open.members;
    }
    RawTree {
        nodes,
        root_level: cube.root_level,
        levels,
        dim: d,
        n_points: n,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Edge {
    Short(Label),
    /// Replaces a chain of this many short edges.
    Long(u32),
}

impl Edge {
    /// Number of levels the edge descends.
    pub fn span(&self) -> u32 {
        match self {
            Edge::Short(_) => 1,
            Edge::Long(m) => *m,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrunedNode {
    pub level: i32,
    pub parent: Option<NodeId>,
    pub children: Vec<(Edge, NodeId)>,
}

/// Quadtree after pruning, with leaves numbered in DFS order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrunedTree {
    pub nodes: Vec<PrunedNode>,
    pub root_level: i32,
    pub levels: u32,
    pub dim: usize,
    /// Leaf node ids in DFS visit order; position = leaf ordinal.
    pub leaves: Vec<NodeId>,
    /// Leaf ordinal of every point.
    pub point_to_leaf: Vec<u32>,
}

impl PrunedTree {
    pub fn bottom_level(&self) -> i32 {
        self.root_level - self.levels as i32
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn long_edge_count(&self) -> usize {
        self.nodes
            .iter()
            .flat_map(|n| &n.children)
            .filter(|(e, _)| matches!(e, Edge::Long(_)))
            .count()
    }

    pub fn short_edge_count(&self) -> usize {
        self.nodes
            .iter()
            .flat_map(|n| &n.children)
            .filter(|(e, _)| matches!(e, Edge::Short(_)))
            .count()
    }

    /// Nodes with two or more children.
    pub fn branching_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.children.len() >= 2).count()
    }

    /// Edges from the root down to `node`, top first.
    pub fn path_edges(&self, node: NodeId) -> Vec<&Edge> {
        let mut path = Vec::new();
        let mut cur = node;
        while let Some(parent) = self.nodes[cur as usize].parent {
            let edge = self.nodes[parent as usize]
                .children
                .iter()
                .find(|(_, c)| *c == cur)
                .map(|(e, _)| e)
                .expect("child listed under its parent");
            path.push(edge);
            cur = parent;
        }
        path.reverse();
        path
    }

    /// Ancestors of `node` (root first), excluding `node` itself.
    pub fn ancestors(&self, node: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut cur = node;
        while let Some(parent) = self.nodes[cur as usize].parent {
            out.push(parent);
            cur = parent;
        }
        out.reverse();
        out
    }

    /// Renumbers nodes in DFS preorder, then fills `parent`, `leaves` and the
    /// leaf ordinal of every point. `leaf_points` lists the points held by
    /// each leaf, keyed by pre-renumbering id.
    pub(crate) fn finish(&mut self, leaf_points: &[(NodeId, Vec<u32>)], n_points: usize) {
        let old = std::mem::take(&mut self.nodes);
        let mut new_id = vec![0 as NodeId; old.len()];
        let mut order = Vec::with_capacity(old.len());
        let mut stack = vec![ROOT];
        while let Some(id) = stack.pop() {
            new_id[id as usize] = order.len() as NodeId;
            order.push(id);
            stack.extend(old[id as usize].children.iter().rev().map(|&(_, c)| c));
        }
        let mut old = old.into_iter().map(Some).collect::<Vec<_>>();
        self.nodes = order
            .iter()
            .map(|&id| {
                let mut node = old[id as usize].take().expect("node visited once");
                node.parent = node.parent.map(|p| new_id[p as usize]);
                for (_, c) in &mut node.children {
                    *c = new_id[*c as usize];
                }
                node
            })
            .collect();
        self.leaves = dfs_leaves(&self.nodes);
        let mut ordinal = vec![u32::MAX; self.nodes.len()];
        for (k, &leaf) in self.leaves.iter().enumerate() {
            ordinal[leaf as usize] = k as u32;
        }
        self.point_to_leaf = vec![0; n_points];
        for (leaf, pts) in leaf_points {
            for &p in pts {
                self.point_to_leaf[p as usize] = ordinal[new_id[*leaf as usize] as usize];
            }
        }
    }
}

pub(crate) fn dfs_leaves(nodes: &[PrunedNode]) -> Vec<NodeId> {
    let mut leaves = Vec::new();
    let mut stack = vec![ROOT];
    while let Some(id) = stack.pop() {
        let node = &nodes[id as usize];
        if node.children.is_empty() {
            leaves.push(id);
        }
        stack.extend(node.children.iter().rev().map(|&(_, c)| c));
    }
    leaves
}

/// Replaces every downward path `u_0 … u_k` whose interior nodes have one
/// child and `k > Λ + 1` by `u_0 … u_Λ` followed by a long edge of label
/// `k − Λ` down to `u_k`. The root always starts a path.
pub fn prune(raw: &RawTree, lambda: u32) -> PrunedTree {
    let lambda = lambda.max(1) as usize;
    let mut nodes: Vec<PrunedNode> = vec![PrunedNode {
        level: raw.root_level,
        parent: None,
        children: Vec::new(),
    }];
    let mut leaf_points = Vec::new();
    // (raw node that starts paths, its id in the pruned tree)
    let mut stack: Vec<(NodeId, NodeId)> = vec![(ROOT, ROOT)];
    let mut chain = Vec::new();
    while let Some((raw_id, new_id)) = stack.pop() {
        let raw_node = &raw.nodes[raw_id as usize];
        if raw_node.children.is_empty() {
            leaf_points.push((new_id, raw_node.points.clone()));
            continue;
        }
        for (label, child) in &raw_node.children {
            // Walk the chain u_1 … u_k.
            chain.clear();
            chain.push((label, *child));
            let mut cur = *child;
            while raw.nodes[cur as usize].children.len() == 1 {
                let (l, c) = &raw.nodes[cur as usize].children[0];
                chain.push((l, *c));
                cur = *c;
            }
            let k = chain.len();
            let keep = if k > lambda + 1 { lambda } else { k };
            let mut parent = new_id;
            for &(l, c) in &chain[..keep] {
                parent = push_child(&mut nodes, parent, Edge::Short(l.clone()), raw.nodes[c as usize].level);
            }
            if keep < k {
                let bottom = chain[k - 1].1;
                parent = push_child(
                    &mut nodes,
                    parent,
                    Edge::Long((k - lambda) as u32),
                    raw.nodes[bottom as usize].level,
                );
            }
            stack.push((cur, parent));
        }
    }
    let mut tree = PrunedTree {
        nodes,
        root_level: raw.root_level,
        levels: raw.levels,
        dim: raw.dim,
        leaves: Vec::new(),
        point_to_leaf: Vec::new(),
    };
    tree.finish(&leaf_points, raw.n_points);
    tree
}

fn push_child(nodes: &mut Vec<PrunedNode>, parent: NodeId, edge: Edge, level: i32) -> NodeId {
    let id = nodes.len() as NodeId;
    nodes.push(PrunedNode {
        level,
        parent: Some(parent),
        children: Vec::new(),
    });
    nodes[parent as usize].children.push((edge, id));
    id
}

/// True iff at every level in `levels`, point `i` is at distance at least
/// `ρ(ℓ)` from every face of its grid cell.
pub fn is_padded(
    i: usize,
    ps: &PointSet,
    cube: &ShiftedHypercube,
    levels: &[i32],
    eps: f64,
    lambda: u32,
) -> bool {
    let p = ps.point(i);
    let d = ps.dim();
    levels.iter().all(|&level| {
        let side = pow2(level);
        let radius = rho(level, d, eps, lambda);
        p.iter().zip(&cube.origin).all(|(x, o)| {
            let t = x - o;
            let low = (t / side).floor() * side;
            let margin = (t - low).min(low + side - t);
            margin >= radius
        })
    })
}

/// Every level spanned by the tree, root first.
pub fn tree_levels(tree: &PrunedTree) -> Vec<i32> {
    (tree.bottom_level()..=tree.root_level).rev().collect()
}

/// Levels at which the point in `leaf` is separated from some other point:
/// `ℓ(w) − 1` for every ancestor `w` with at least two children.
pub fn separation_levels(tree: &PrunedTree, leaf: NodeId) -> Vec<i32> {
    tree.ancestors(leaf)
        .into_iter()
        .map(|a| &tree.nodes[a as usize])
        .filter(|n| n.children.len() >= 2)
        .map(|n| n.level - 1)
        .collect()
}
