//! Nearest-neighbor accuracy, distortion and size measurements, parameter
//! sweeps and Pareto envelopes.
//!
//! Results are written as CSV or JSON lines, one [`EvalRecord`] per row;
//! [`RESULT_SCHEMA`] is bumped whenever the columns change.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{pq_decode, pq_fit, GridSketch};
use crate::error::{Error, Result};
use crate::params::SketchParams;
use crate::pointset::{distance, squared_distance, PointSet};
use crate::sketch::{compress_blocks, decompress_blocks};

pub const RESULT_SCHEMA: u32 = 1;
pub const DEFAULT_SEEDS: usize = 5;
pub const THREADS_ENV: &str = "QSK_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Qs,
    Pq,
    Grid,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Qs => "qs",
            Method::Pq => "pq",
            Method::Grid => "grid",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qs" => Ok(Method::Qs),
            "pq" => Ok(Method::Pq),
            "grid" => Ok(Method::Grid),
            other => Err(Error::InvalidParams(format!("unknown method {other:?}"))),
        }
    }
}

/// One point of a parameter grid. Fields a method does not use are `None`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Config {
    pub method: Method,
    pub blocks: usize,
    pub levels: Option<u32>,
    pub lambda: Option<u32>,
    pub k: Option<usize>,
}

impl Config {
    pub fn qs(blocks: usize, levels: u32, lambda: u32) -> Self {
        Self {
            method: Method::Qs,
            blocks,
            levels: Some(levels),
            lambda: Some(lambda),
            k: None,
        }
    }

    pub fn pq(blocks: usize, k: usize) -> Self {
        Self {
            method: Method::Pq,
            blocks,
            levels: None,
            lambda: None,
            k: Some(k),
        }
    }

    pub fn grid(k: usize) -> Self {
        Self {
            method: Method::Grid,
            blocks: 1,
            levels: None,
            lambda: None,
            k: Some(k),
        }
    }

    fn need<T: Copy>(v: Option<T>, what: &str) -> Result<T> {
        v.ok_or_else(|| Error::InvalidParams(format!("configuration is missing {what}")))
    }
}

impl std::fmt::Display for Config {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} blocks={}", self.method, self.blocks)?;
        if let (Some(l), Some(lam)) = (self.levels, self.lambda) {
            write!(f, " L={l} lambda={lam}")?;
        }
        if let Some(k) = self.k {
            write!(f, " k={k}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub schema: u32,
    pub dataset: String,
    pub method: Method,
    pub blocks: usize,
    pub levels: Option<u32>,
    pub lambda: Option<u32>,
    pub k: Option<usize>,
    pub seed: u64,
    /// Payload bits (codes, trees, leaf ids) per coordinate.
    pub bits_per_coordinate: f64,
    /// Including stored codebooks and grid bounds, as 64-bit floats.
    pub bits_with_codebook: f64,
    pub accuracy: f64,
    pub avg_distortion: f64,
    pub wall_time_s: f64,
}

impl EvalRecord {
    pub fn config(&self) -> Config {
        Config {
            method: self.method,
            blocks: self.blocks,
            levels: self.levels,
            lambda: self.lambda,
            k: self.k,
        }
    }
}

/// Index of the nearest point of `base` to every query; ties go to the lowest index.
pub fn true_nn(queries: &PointSet, base: &PointSet) -> Vec<usize> {
    queries
        .points()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|q| nearest(q, base))
        .collect()
}

fn nearest(q: &[f64], base: &PointSet) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, p) in base.points().enumerate() {
        let d = squared_distance(q, p);
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NnMetrics {
    pub accuracy: f64,
    pub avg_distortion: f64,
}

/// Compares nearest neighbors found among reconstructed points against the truth.
///
/// Accuracy counts queries whose reconstructed-space neighbor is the true
/// one. Distortion averages `‖q − x_reported‖ / ‖q − x_true‖`, with both
/// distances in the original coordinates.
pub fn nn_metrics(
    base: &PointSet,
    queries: &PointSet,
    approx_base: &PointSet,
    approx_queries: &PointSet,
) -> NnMetrics {
    let truth = true_nn(queries, base);
    let reported = true_nn(approx_queries, approx_base);
    metrics_from(base, queries, &truth, &reported)
}

pub fn metrics_from(base: &PointSet, queries: &PointSet, truth: &[usize], reported: &[usize]) -> NnMetrics {
    let mut hits = 0;
    let mut ratio_sum = 0.0;
    for (qi, (&t, &r)) in truth.iter().zip(reported).enumerate() {
        if t == r {
            hits += 1;
            ratio_sum += 1.0;
            continue;
        }
        let q = queries.point(qi);
        let (dt, dr) = (distance(q, base.point(t)), distance(q, base.point(r)));
        ratio_sum += if dt > 0.0 {
            dr / dt
        } else if dr == 0.0 {
            1.0
        } else {
            f64::INFINITY
        };
    }
    let m = truth.len().max(1) as f64;
    NnMetrics {
        accuracy: hits as f64 / m,
        avg_distortion: ratio_sum / m,
    }
}

/// Compressed and reconstructed points for one configuration.
pub struct Compressed {
    pub points: PointSet,
    pub payload_bits: usize,
    pub side_bits: usize,
}

/// Runs one method over `ps` and reconstructs it.
pub fn compress_with(config: &Config, ps: &PointSet, seed: u64) -> Result<Compressed> {
    match config.method {
        Method::Qs => {
            let params = SketchParams::new(
                Config::need(config.levels, "L")?,
                Config::need(config.lambda, "lambda")?,
            )
            .with_blocks(config.blocks)
            .with_seed(seed);
            let bsk = compress_blocks(ps, &params)?;
            Ok(Compressed {
                points: decompress_blocks(&bsk)?,
                payload_bits: bsk.payload_bits(),
                side_bits: 0,
            })
        }
        Method::Pq => {
            let cb = pq_fit(ps, config.blocks, Config::need(config.k, "k")?, seed)?;
            Ok(Compressed {
                points: pq_decode(&cb)?,
                payload_bits: cb.code_bits(),
                side_bits: cb.codebook_bits(),
            })
        }
        Method::Grid => {
            let k = Config::need(config.k, "k")?;
            let k = u32::try_from(k).map_err(|_| Error::InvalidParams(format!("grid k {k} too large")))?;
            let g = GridSketch::new(ps, k)?;
            Ok(Compressed {
                points: g.decompress()?,
                payload_bits: g.payload_bits(),
                side_bits: 2 * ps.dim() * 64,
            })
        }
    }
}

/// Compresses base and queries together, then measures nearest-neighbor quality.
pub fn evaluate(config: &Config, base: &PointSet, queries: &PointSet, seed: u64) -> Result<EvalRecord> {
    evaluate_named("", config, base, queries, seed)
}

pub fn evaluate_named(
    dataset: &str,
    config: &Config,
    base: &PointSet,
    queries: &PointSet,
    seed: u64,
) -> Result<EvalRecord> {
    let truth = true_nn(queries, base);
    evaluate_with_truth(dataset, config, base, queries, &truth, seed)
}

fn evaluate_with_truth(
    dataset: &str,
    config: &Config,
    base: &PointSet,
    queries: &PointSet,
    truth: &[usize],
    seed: u64,
) -> Result<EvalRecord> {
    let joint = base.concat(queries)?;
    let start = Instant::now();
    let c = compress_with(config, &joint, seed)?;
    let wall = start.elapsed().as_secs_f64();
    let nb = base.len();
    let all: Vec<usize> = (0..joint.len()).collect();
    let approx_base = c.points.select(&all[..nb])?;
    let approx_queries = c.points.select(&all[nb..])?;
    let reported = true_nn(&approx_queries, &approx_base);
    let m = metrics_from(base, queries, truth, &reported);
    let coords = (joint.len() * joint.dim()) as f64;
    Ok(EvalRecord {
        schema: RESULT_SCHEMA,
        dataset: dataset.to_string(),
        method: config.method,
        blocks: config.blocks,
        levels: config.levels,
        lambda: config.lambda,
        k: config.k,
        seed,
        bits_per_coordinate: c.payload_bits as f64 / coords,
        bits_with_codebook: (c.payload_bits + c.side_bits) as f64 / coords,
        accuracy: m.accuracy,
        avg_distortion: m.avg_distortion,
        wall_time_s: wall,
    })
}

pub fn divisors(d: usize) -> Vec<usize> {
    (1..=d).filter(|m| d % m == 0).collect()
}

/// Every block count dividing `d`, every `L` in `levels`, every `Λ` in `1..L`.
pub fn qs_grid(d: usize, levels: std::ops::RangeInclusive<u32>) -> Vec<Config> {
    let mut out = Vec::new();
    for m in divisors(d) {
        for l in levels.clone() {
            for lam in 1..l {
                out.push(Config::qs(m, l, lam));
            }
        }
    }
    out
}

/// `k = 2^e` for every exponent, at every block count.
pub fn pq_grid(blocks: &[usize], exponents: std::ops::RangeInclusive<u32>) -> Vec<Config> {
    blocks
        .iter()
        .flat_map(|&m| exponents.clone().map(move |e| Config::pq(m, 1 << e)))
        .collect()
}

pub fn grid_grid(exponents: std::ops::RangeInclusive<u32>) -> Vec<Config> {
    exponents.map(|e| Config::grid(1 << e)).collect()
}

#[derive(Clone, Debug, Default)]
pub struct SweepOptions {
    pub dataset: String,
    pub seeds: Vec<u64>,
    /// JSON-lines file of finished runs; existing entries are not recomputed.
    pub journal: Option<std::path::PathBuf>,
    /// Worker count; defaults to `QSK_THREADS`, then to rayon's default.
    pub threads: Option<usize>,
}

impl SweepOptions {
    pub fn new(dataset: impl Into<String>, seeds: Vec<u64>) -> Self {
        Self {
            dataset: dataset.into(),
            seeds,
            ..Self::default()
        }
    }
}

/// Worker count from `QSK_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    let raw = std::env::var(THREADS_ENV).ok()?;
    match raw.trim().parse::<usize>() {
        Ok(t) if t > 0 => Some(t),
        _ => {
            warn!("ignoring {THREADS_ENV}={raw:?}");
            None
        }
    }
}

pub fn read_journal(path: &Path) -> Result<Vec<EvalRecord>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<EvalRecord>(&line) {
            Ok(r) if r.schema == RESULT_SCHEMA => out.push(r),
            // A torn final line from an interrupted run is skipped.
            _ => warn!("{}: skipping unreadable journal line {}", path.display(), i + 1),
        }
    }
    Ok(out)
}

/// Evaluates every configuration under every seed.
///
/// Finished runs are appended to the journal as they complete, so an
/// interrupted sweep keeps its results and a rerun only computes what is
/// missing. Output follows the order of `configs`, then `seeds`.
pub fn sweep(
    configs: &[Config],
    base: &PointSet,
    queries: &PointSet,
    opts: &SweepOptions,
) -> Result<Vec<EvalRecord>> {
    if configs.is_empty() || opts.seeds.is_empty() {
        return Err(Error::InvalidParams("empty parameter grid".into()));
    }
    let done = match &opts.journal {
        Some(p) => read_journal(p)?,
        None => Vec::new(),
    };
    let done: Vec<EvalRecord> = done.into_iter().filter(|r| r.dataset == opts.dataset).collect();
    let have: HashSet<(Config, u64)> = done.iter().map(|r| (r.config(), r.seed)).collect();
    let jobs: Vec<(Config, u64)> = configs
        .iter()
        .flat_map(|c| opts.seeds.iter().map(move |&s| (c.clone(), s)))
        .filter(|job| !have.contains(job))
        .collect();
    info!(
        "sweep {}: {} runs, {} already journaled",
        opts.dataset,
        configs.len() * opts.seeds.len(),
        have.len()
    );
    let journal = match &opts.journal {
        Some(p) => Some(Mutex::new(
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .map_err(|e| Error::io(p, e))?,
        )),
        None => None,
    };
    let truth = true_nn(queries, base);
    let run = |(config, seed): &(Config, u64)| -> Result<EvalRecord> {
        let rec = evaluate_with_truth(&opts.dataset, config, base, queries, &truth, *seed)?;
        info!(
            "{config} seed={seed}: {:.3} bits/coord, accuracy {:.3}, distortion {:.4}",
            rec.bits_per_coordinate, rec.accuracy, rec.avg_distortion
        );
        if let Some(j) = &journal {
            let mut line = serde_json::to_string(&rec)?;
            line.push('\n');
            let mut f = j.lock().expect("journal lock");
            f.write_all(line.as_bytes())
                .and_then(|_| f.flush())
                .map_err(|e| Error::io(opts.journal.as_ref().unwrap(), e))?;
        }
        Ok(rec)
    };
    let threads = opts.threads.or_else(threads_from_env);
    let fresh: Vec<EvalRecord> = match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidParams(e.to_string()))?
            .install(|| jobs.par_iter().map(run).collect::<Result<_>>())?,
        None => jobs.par_iter().map(run).collect::<Result<_>>()?,
    };
    let mut all = done;
    all.extend(fresh);
    let order: std::collections::HashMap<(Config, u64), usize> = configs
        .iter()
        .flat_map(|c| opts.seeds.iter().map(move |&s| (c.clone(), s)))
        .enumerate()
        .map(|(i, key)| (key, i))
        .collect();
    let mut out: Vec<(usize, EvalRecord)> = all
        .into_iter()
        .filter_map(|r| order.get(&(r.config(), r.seed)).map(|&i| (i, r)))
        .collect();
    out.sort_by_key(|(i, _)| *i);
    out.dedup_by_key(|(i, _)| *i);
    Ok(out.into_iter().map(|(_, r)| r).collect())
}

/// Mean and spread of one configuration over its seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    /// Means; `seed` is the count of seeds averaged.
    pub mean: EvalRecord,
    pub accuracy_std: f64,
    pub distortion_std: f64,
    pub bits_std: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Groups records by configuration, in first-seen order.
pub fn aggregate(records: &[EvalRecord]) -> Vec<Aggregate> {
    let mut keys: Vec<Config> = Vec::new();
    for r in records {
        if !keys.contains(&r.config()) {
            keys.push(r.config());
        }
    }
    keys.into_iter()
        .map(|key| {
            let group: Vec<&EvalRecord> = records.iter().filter(|r| r.config() == key).collect();
            let col = |f: fn(&EvalRecord) -> f64| mean_std(&group.iter().map(|r| f(r)).collect::<Vec<_>>());
            let (acc, acc_sd) = col(|r| r.accuracy);
            let (dist, dist_sd) = col(|r| r.avg_distortion);
            let (bits, bits_sd) = col(|r| r.bits_per_coordinate);
            let mut mean = group[0].clone();
            mean.seed = group.len() as u64;
            mean.accuracy = acc;
            mean.avg_distortion = dist;
            mean.bits_per_coordinate = bits;
            mean.bits_with_codebook = col(|r| r.bits_with_codebook).0;
            mean.wall_time_s = col(|r| r.wall_time_s).0;
            Aggregate {
                mean,
                accuracy_std: acc_sd,
                distortion_std: dist_sd,
                bits_std: bits_sd,
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    /// Higher accuracy is better.
    Accuracy,
    /// Lower average distortion is better.
    Distortion,
}

/// Records not dominated in (fewer bits, better objective), sorted by size.
pub fn pareto_envelope(records: &[EvalRecord], objective: Objective) -> Vec<EvalRecord> {
    let score = |r: &EvalRecord| match objective {
        Objective::Accuracy => r.accuracy,
        Objective::Distortion => -r.avg_distortion,
    };
    let mut sorted: Vec<&EvalRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        a.bits_per_coordinate
            .total_cmp(&b.bits_per_coordinate)
            .then(score(b).total_cmp(&score(a)))
    });
    let mut out: Vec<EvalRecord> = Vec::new();
    let mut best = f64::NEG_INFINITY;
    for r in sorted {
        if score(r) > best {
            best = score(r);
            out.push(r.clone());
        }
    }
    out
}

/// Best envelope score reachable within `bits` per coordinate, if any.
pub fn envelope_at(envelope: &[EvalRecord], bits: f64, objective: Objective) -> Option<f64> {
    envelope
        .iter()
        .filter(|r| r.bits_per_coordinate <= bits)
        .last()
        .map(|r| match objective {
            Objective::Accuracy => r.accuracy,
            Objective::Distortion => r.avg_distortion,
        })
}

pub fn write_csv(path: impl AsRef<Path>, records: &[EvalRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::InvalidParams(e.to_string()))?;
    for r in records {
        w.serialize(r).map_err(|e| Error::InvalidParams(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_jsonl(path: impl AsRef<Path>, records: &[EvalRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
