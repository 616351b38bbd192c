use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use quadsketch::codec::{decode, decompress_tree};
use quadsketch::params::pow2;
use quadsketch::pointset::distance;
use quadsketch::quadtree::{is_padded, separation_levels, Edge};
use quadsketch::sketch::{
    block_range, block_seed, compress, compress_blocks, compress_maxdist, decompress, decompress_blocks,
    distance_query, retry_cap, sketch_tree,
};
use quadsketch::{aspect_ratio, derive_params, PointSet, SketchParams};

fn uniform(n: usize, d: usize, seed: u64) -> PointSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PointSet::new(n, d, (0..n * d).map(|_| rng.gen::<f64>()).collect()).unwrap()
}

fn point_set() -> impl Strategy<Value = PointSet> {
    (1usize..40, 1usize..6).prop_flat_map(|(n, d)| {
        prop::collection::vec(-1000.0f64..1000.0, n * d).prop_map(move |c| PointSet::new(n, d, c).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn bytes_round_trip_exactly(ps in point_set(), levels in 1u32..14, lam in 1u32..14, seed: u64) {
        let params = SketchParams::new(levels, lam.min(levels)).with_seed(seed);
        let sk = compress(&ps, &params).unwrap();
        let again = quadsketch::SketchBytes::from_bytes(&sk.to_bytes()).unwrap();
        prop_assert_eq!(&again, &sk);
        let a = decompress(&sk).unwrap();
        let b = decompress(&again).unwrap();
        prop_assert_eq!(a.as_slice(), b.as_slice());
    }

    /// Without pruning, every point comes back as the lower corner of its
    /// bottom-level cell.
    #[test]
    fn unpruned_points_land_on_cell_corner(ps in point_set(), levels in 1u32..14, seed: u64) {
        let params = SketchParams::new(levels, levels).with_seed(seed);
        let (tree, cube) = sketch_tree(&ps, &params).unwrap();
        let out = decompress_tree(&tree, &cube).unwrap();
        let side = pow2(cube.root_level - levels as i32);
        for i in 0..ps.len() {
            for ((x, o), got) in ps.point(i).iter().zip(&cube.origin).zip(out.point(i)) {
                let corner = o + ((x - o) / side).floor() * side;
                prop_assert!((corner - got).abs() <= corner.abs().max(got.abs()) * f64::EPSILON);
                prop_assert!(*got <= *x && x - got < side * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn pruned_tree_invariants(ps in point_set(), levels in 1u32..16, lam in 1u32..16, seed: u64) {
        let lambda = lam.min(levels);
        let (tree, _) = sketch_tree(&ps, &SketchParams::new(levels, lambda).with_seed(seed)).unwrap();
        let n = ps.len();
        for &leaf in &tree.leaves {
            let span: u32 = tree.path_edges(leaf).iter().map(|e| e.span()).sum();
            prop_assert_eq!(span, levels);
        }
        for node in &tree.nodes {
            for (edge, child) in &node.children {
                prop_assert_eq!(tree.nodes[*child as usize].level, node.level - edge.span() as i32);
                if let Edge::Long(k) = edge {
                    prop_assert!(*k >= 1);
                    prop_assert_eq!(node.children.len(), 1);
                }
            }
        }
        // a maximal non-branching run holds at most lambda short edges and one long edge
        for &leaf in &tree.leaves {
            let mut run_short = 0;
            let mut v = leaf;
            while let Some(p) = tree.nodes[v as usize].parent {
                let pn = &tree.nodes[p as usize];
                if pn.children.len() > 1 {
                    run_short = 0;
                } else if matches!(pn.children[0].0, Edge::Short(_)) {
                    run_short += 1;
                    prop_assert!(run_short <= lambda + 1);
                }
                v = p;
            }
        }
        prop_assert!(tree.leaves.len() <= n);
        prop_assert!(tree.branching_count() < n.max(1));
        prop_assert!(tree.node_count() <= (2 * n) * (lambda as usize + 2));
    }

    #[test]
    fn blocks_match_independent_single_block_runs(seed: u64, lam in 1u32..8) {
        let ps = uniform(30, 12, seed);
        for m in [1, 2, 3, 4, 6, 12] {
            let params = SketchParams::new(8, lam).with_blocks(m).with_seed(seed);
            let bsk = compress_blocks(&ps, &params).unwrap();
            prop_assert_eq!(bsk.blocks.len(), m);
            let joined = decompress_blocks(&bsk).unwrap();
            for b in 0..m {
                let range = block_range(12, m, b);
                let part = ps.project(range.clone()).unwrap();
                let single = compress(&part, &SketchParams::new(8, lam).with_seed(block_seed(seed, b))).unwrap();
                prop_assert_eq!(&single, &bsk.blocks[b]);
                let out = decompress(&single).unwrap();
                for i in 0..ps.len() {
                    prop_assert_eq!(out.point(i), &joined.point(i)[range.clone()]);
                }
            }
        }
    }
}

#[test]
fn block_extremes() {
    let ps = uniform(50, 8, 11);
    let params = SketchParams::new(10, 4).with_seed(3);
    let one = compress_blocks(&ps, &params.clone().with_blocks(1)).unwrap();
    assert_eq!(one.blocks[0], compress(&ps, &SketchParams::new(10, 4).with_seed(block_seed(3, 0))).unwrap());
    let each = compress_blocks(&ps, &params.with_blocks(8)).unwrap();
    assert!(each.blocks.iter().all(|s| s.header.d == 1));
    let out = decompress_blocks(&each).unwrap();
    assert_eq!((out.len(), out.dim()), (50, 8));
}

#[test]
fn fidelity_never_worse_with_larger_lambda() {
    let ps = uniform(300, 3, 5);
    let mut prev: Option<PointSet> = None;
    for lambda in 1..12 {
        let out = decompress(&compress(&ps, &SketchParams::new(12, lambda).with_seed(8)).unwrap()).unwrap();
        if let Some(p) = &prev {
            for i in 0..ps.len() {
                assert!(distance(out.point(i), ps.point(i)) <= distance(p.point(i), ps.point(i)));
            }
        }
        prev = Some(out);
    }
}

/// Two tight, far-apart clusters: every pair is answered by the first tree.
#[test]
fn maxdist_well_separated_clusters() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut coords = Vec::new();
    for c in [0.0, 1.0e6] {
        for _ in 0..20 {
            coords.extend((0..3).map(|_| c + rng.gen::<f64>()));
        }
    }
    let ps = PointSet::new(40, 3, coords).unwrap();
    let msk = compress_maxdist(&ps, 0.2, 4).unwrap();
    assert!(msk.tree_count() <= retry_cap(40));
    for i in 0..40 {
        for j in i + 1..40 {
            let truth = distance(ps.point(i), ps.point(j));
            let est = distance_query(&msk, i, j).unwrap();
            assert!((est - truth).abs() <= 0.2 * truth, "{i} {j}: {est} vs {truth}");
        }
    }
}

#[test]
fn maxdist_later_trees_are_smaller() {
    let ps = uniform(64, 4, 9);
    let msk = compress_maxdist(&ps, 0.25, 2).unwrap();
    let per_tree: Vec<usize> = msk.trees().iter().map(|t| t.size().payload_bits()).collect();
    assert!(per_tree.iter().sum::<usize>() <= msk.payload_bits());
    // later trees hold only the points still unpadded, so they never grow
    assert!(per_tree.windows(2).all(|w| w[1] <= w[0]));
    assert!(msk.gamma().iter().all(|&g| (g as usize) < msk.tree_count()));
}

/// The fraction of points that are not padded at their separation levels
/// stays below `δ` on average.
#[test]
fn padding_failure_rate_below_delta() {
    let (n, d, eps, delta) = (64, 4, 0.5, 0.2);
    let mut unpadded = 0usize;
    let runs = 60u64;
    for seed in 0..runs {
        let ps = uniform(n, d, 1000 + seed);
        let params = derive_params(eps, delta, d, aspect_ratio(&ps).unwrap()).unwrap().with_seed(seed);
        let (tree, cube) = sketch_tree(&ps, &params).unwrap();
        for i in 0..n {
            let leaf = tree.leaves[tree.point_to_leaf[i] as usize];
            let levels = separation_levels(&tree, leaf);
            if !is_padded(i, &ps, &cube, &levels, eps, params.lambda) {
                unpadded += 1;
            }
        }
    }
    let frac = unpadded as f64 / (n as u64 * runs) as f64;
    assert!(frac <= delta, "unpadded fraction {frac}");
}

#[test]
fn derived_params_monotone() {
    let base = derive_params(0.5, 0.1, 8, 100.0).unwrap();
    let tighter = derive_params(0.25, 0.1, 8, 100.0).unwrap();
    let safer = derive_params(0.5, 0.01, 8, 100.0).unwrap();
    let wider = derive_params(0.5, 0.1, 8, 1.0e6).unwrap();
    let taller = derive_params(0.5, 0.1, 64, 100.0).unwrap();
    for p in [&tighter, &safer, &wider, &taller] {
        assert!(p.lambda >= base.lambda);
        assert!(p.levels >= base.levels);
        assert!(p.levels > p.lambda);
    }
    assert!(wider.levels > base.levels);
}

#[test]
fn aspect_ratio_matches_naive_pairs() {
    for seed in 0..10 {
        let ps = uniform(40, 3, 300 + seed);
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..40 {
            for j in 0..40 {
                if i != j {
                    let dist = distance(ps.point(i), ps.point(j));
                    lo = lo.min(dist);
                    hi = hi.max(dist);
                }
            }
        }
        let got = aspect_ratio(&ps).unwrap();
        assert!((got - hi / lo).abs() <= 1e-9 * got);
    }
}

#[test]
fn decode_reports_structure() {
    let ps = uniform(20, 2, 77);
    let sk = compress(&ps, &SketchParams::new(6, 2).with_seed(1)).unwrap();
    let decoded = decode(&sk).unwrap();
    assert_eq!(decoded.tree.point_to_leaf.len(), 20);
    assert_eq!(decoded.tree.leaves.len() as u64, sk.header.leaf_count);
}
