use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use quadsketch::baselines::{grid_fit_quantize, kmeans, pq_decode, pq_fit, GridQuantizer};
use quadsketch::data::{read_cache, read_fvecs, write_cache, write_fvecs};
use quadsketch::eval::{nn_metrics, true_nn};
use quadsketch::pointset::{distance, squared_distance};
use quadsketch::sketch::{compress, decompress};
use quadsketch::{PointSet, SketchParams};

fn gaussian_ish(n: usize, d: usize, seed: u64) -> PointSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PointSet::new(n, d, (0..n * d).map(|_| (0..4).map(|_| rng.gen::<f64>()).sum::<f64>()).collect()).unwrap()
}

#[test]
fn grid_quantization_is_idempotent() {
    let ps = gaussian_ish(200, 5, 1);
    for k in [2, 3, 16, 1000] {
        let (q, once) = grid_fit_quantize(&ps, k).unwrap();
        let twice = q.decode(&q.encode(&once)).unwrap();
        assert_eq!(once.as_slice(), twice.as_slice(), "k={k}");
        let refit = GridQuantizer::fit(&once, k).unwrap();
        assert_eq!(refit, q);
    }
}

#[test]
fn grid_picks_nearest_landmark() {
    let ps = gaussian_ish(100, 3, 2);
    let (q, out) = grid_fit_quantize(&ps, 7).unwrap();
    for i in 0..ps.len() {
        for j in 0..3 {
            let x = ps.point(i)[j];
            let best = (0..7).map(|c| (q.landmark(j, c) - x).abs()).fold(f64::INFINITY, f64::min);
            assert!(((out.point(i)[j] - x).abs() - best).abs() <= 1e-9);
        }
    }
}

#[test]
fn pq_residual_matches_kmeans_objective() {
    let ps = gaussian_ish(300, 8, 3);
    let cb = pq_fit(&ps, 4, 8, 5).unwrap();
    let out = pq_decode(&cb).unwrap();
    let residual: f64 = (0..ps.len()).map(|i| squared_distance(ps.point(i), out.point(i))).sum();
    let mut per_block = 0.0;
    for b in 0..4 {
        let part = ps.project(b * 2..b * 2 + 2).unwrap();
        let recon = out.project(b * 2..b * 2 + 2).unwrap();
        for i in 0..ps.len() {
            let code = cb.codes[i * 4 + b] as usize;
            assert_eq!(recon.point(i), cb.centroid(b, code));
            per_block += squared_distance(part.point(i), cb.centroid(b, code));
        }
    }
    assert!((residual - per_block).abs() <= 1e-9 * residual.max(1.0));
}

#[test]
fn kmeans_assignments_are_nearest_centroids() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for inst in 0..20 {
        let dim = rng.gen_range(1..5);
        let n = rng.gen_range(10..200);
        let k = rng.gen_range(1..12);
        let data: Vec<f64> = (0..n * dim).map(|_| rng.gen::<f64>()).collect();
        let km = kmeans(&data, dim, k, inst, 30).unwrap();
        for i in 0..n {
            let x = &data[i * dim..(i + 1) * dim];
            let own = squared_distance(x, km.centroid(km.assignments[i] as usize));
            for c in 0..km.k {
                assert!(own <= squared_distance(x, km.centroid(c)));
            }
        }
        let final_obj = *km.objective_history.last().unwrap();
        assert!((km.objective() - final_obj).abs() <= 1e-9 * final_obj.max(1.0));
    }
}

#[test]
fn fvecs_round_trip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let coords: Vec<f64> = (0..50 * 7).map(|_| (rng.gen::<f32>() * 100.0) as f64).collect();
    let ps = PointSet::new(50, 7, coords).unwrap();
    let a = dir.path().join("a.fvecs");
    let b = dir.path().join("b.fvecs");
    write_fvecs(&a, &ps).unwrap();
    let back = read_fvecs(&a).unwrap();
    assert_eq!(back.as_slice(), ps.as_slice());
    write_fvecs(&b, &back).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn cache_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let ps = gaussian_ish(33, 4, 7);
    let path = dir.path().join("p.qskd");
    write_cache(&path, &ps).unwrap();
    assert_eq!(read_cache(&path).unwrap().as_slice(), ps.as_slice());
}

/// If every distance from a query is kept within `1 ± ε`, the nearest
/// reconstructed point is a `(1+ε)/(1−ε)`-approximate nearest neighbor.
#[test]
fn distance_preservation_transfers_to_nn() {
    let base = gaussian_ish(400, 4, 8);
    let queries = gaussian_ish(60, 4, 9);
    let all = base.concat(&queries).unwrap();
    let out = decompress(&compress(&all, &SketchParams::new(14, 8).with_seed(2)).unwrap()).unwrap();
    let idx: Vec<usize> = (0..400).collect();
    let qidx: Vec<usize> = (400..460).collect();
    let approx_base = out.select(&idx).unwrap();
    let approx_queries = out.select(&qidx).unwrap();
    let truth = true_nn(&queries, &base);
    let reported = true_nn(&approx_queries, &approx_base);
    let mut checked = 0;
    for q in 0..queries.len() {
        let eps = (0..base.len())
            .map(|i| {
                let t = distance(queries.point(q), base.point(i));
                (distance(approx_queries.point(q), approx_base.point(i)) - t).abs() / t
            })
            .fold(0.0f64, f64::max);
        if eps >= 1.0 {
            continue;
        }
        checked += 1;
        let ratio = distance(queries.point(q), base.point(reported[q])) / distance(queries.point(q), base.point(truth[q]));
        assert!(ratio <= (1.0 + eps) / (1.0 - eps) + 1e-12, "query {q}: {ratio} with eps {eps}");
    }
    assert!(checked > 50);
    let m = nn_metrics(&base, &queries, &approx_base, &approx_queries);
    assert!(m.accuracy > 0.8 && m.avg_distortion < 1.05, "{m:?}");
}
