//! Lloyd's algorithm with k-means++ seeding.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pointset::squared_distance;
use crate::rng::seeded_rng;

pub const DEFAULT_MAX_ITERS: usize = 25;

/// Rows per parallel assignment chunk.
const CHUNK: usize = 1024;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans {
    pub dim: usize,
    pub k: usize,
    /// `k × dim`, row-major.
    pub centroids: Vec<f64>,
    /// Nearest centroid of every input vector under the final centroids.
    pub assignments: Vec<u32>,
    /// Objective after every assignment step, starting with the seeding.
    pub objective_history: Vec<f64>,
    /// Lloyd updates performed.
    pub iterations: usize,
}

impl KMeans {
    pub fn centroid(&self, c: usize) -> &[f64] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }

    pub fn objective(&self) -> f64 {
        *self.objective_history.last().expect("at least one assignment")
    }
}

/// Index of the nearest centroid (lowest index on ties) and its squared distance.
pub fn nearest(v: &[f64], centroids: &[f64], dim: usize) -> (u32, f64) {
    let mut best = (0u32, f64::INFINITY);
    for (c, row) in centroids.chunks_exact(dim).enumerate() {
        let dist = squared_distance(v, row);
        if dist < best.1 {
            best = (c as u32, dist);
        }
    }
    best
}

fn assign(data: &[f64], dim: usize, centroids: &[f64], out: &mut [u32], dist: &mut [f64]) -> f64 {
    data.par_chunks(dim * CHUNK)
        .zip(out.par_chunks_mut(CHUNK))
        .zip(dist.par_chunks_mut(CHUNK))
        .map(|((rows, codes), ds)| {
            let mut sum = 0.0;
            for ((v, c), d) in rows.chunks_exact(dim).zip(codes).zip(ds) {
                let (idx, sq) = nearest(v, centroids, dim);
                *c = idx;
                *d = sq;
                sum += sq;
            }
            sum
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum()
}

fn seed_plus_plus(data: &[f64], dim: usize, k: usize, seed: u64) -> Vec<f64> {
    let n = data.len() / dim;
    let mut rng = seeded_rng(seed);
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.gen_range(0..n);
    centroids.extend_from_slice(&data[first * dim..(first + 1) * dim]);
    let mut d2: Vec<f64> = data
        .chunks_exact(dim)
        .map(|v| squared_distance(v, &centroids[..dim]))
        .collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            // Never pick a zero-weight point through rounding at the tail.
            while d2[pick] == 0.0 && pick > 0 {
                pick -= 1;
            }
            pick
        } else {
            rng.gen_range(0..n)
        };
        let row = &data[pick * dim..(pick + 1) * dim];
        for (w, v) in d2.iter_mut().zip(data.chunks_exact(dim)) {
            *w = w.min(squared_distance(v, row));
        }
        centroids.extend_from_slice(row);
    }
    centroids
}

/// Clusters the row-major `data` (`dim` columns) into `k` groups.
///
/// Centroids of clusters that become empty move to the point currently
/// farthest from its centroid.
pub fn kmeans(data: &[f64], dim: usize, k: usize, seed: u64, max_iters: usize) -> Result<KMeans> {
    if dim == 0 || data.is_empty() {
        return Err(Error::EmptyInput);
    }
    if data.len() % dim != 0 {
        return Err(Error::InvalidParams("data length is not a multiple of the dimension".into()));
    }
    if k == 0 || max_iters == 0 {
        return Err(Error::InvalidParams("k and max_iters must be at least 1".into()));
    }
    let n = data.len() / dim;
    let mut centroids = seed_plus_plus(data, dim, k, seed);
    let mut assignments = vec![0u32; n];
    let mut dist = vec![0f64; n];
    let mut history = vec![assign(data, dim, &centroids, &mut assignments, &mut dist)];
    let mut iterations = 0;
    let mut previous = assignments.clone();
    while iterations < max_iters {
        // Means are accumulated as offsets from the first member, so a
        // cluster of identical vectors gets that vector back exactly.
        let mut sums = vec![0f64; k * dim];
        let mut counts = vec![0usize; k];
        let mut anchor = vec![usize::MAX; k];
        for (i, (v, &c)) in data.chunks_exact(dim).zip(&assignments).enumerate() {
            let c = c as usize;
            if anchor[c] == usize::MAX {
                anchor[c] = i;
            }
            counts[c] += 1;
            let a = &data[anchor[c] * dim..(anchor[c] + 1) * dim];
            for ((s, x), r) in sums[c * dim..(c + 1) * dim].iter_mut().zip(v).zip(a) {
                *s += x - r;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let count = counts[c] as f64;
                let a = anchor[c] * dim;
                for j in 0..dim {
                    centroids[c * dim + j] = data[a + j] + sums[c * dim + j] / count;
                }
            }
        }
        for c in (0..k).filter(|&c| counts[c] == 0) {
            let far = (0..n)
                .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
                .expect("n >= 1");
            centroids[c * dim..(c + 1) * dim].copy_from_slice(&data[far * dim..(far + 1) * dim]);
            dist[far] = 0.0;
        }
        iterations += 1;
        history.push(assign(data, dim, &centroids, &mut assignments, &mut dist));
        if assignments == previous {
            break;
        }
        previous.copy_from_slice(&assignments);
    }
    Ok(KMeans {
        dim,
        k,
        centroids,
        assignments,
        objective_history: history,
        iterations,
    })
}
