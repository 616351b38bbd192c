//! `qsk`: compress point sets, inspect sketches, and run evaluation sweeps.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use quadsketch::baselines::{grid::GRID_MAGIC, pq::PQ_MAGIC, pq_decode, pq_fit, GridSketch, PQCodebook};
use quadsketch::codec::envelope::peek_flags;
use quadsketch::codec::{decode, FLAG_BLOCKS, FLAG_MULTI_TREE, FLAG_SINGLE, MAGIC};
use quadsketch::data::{self, Columns, DatasetSpec, Format, DEFAULT_QUERIES};
use quadsketch::eval::{self, Config, EvalRecord, Method, Objective, SweepOptions};
use quadsketch::params::{derive_params, DEFAULT_DELTA};
use quadsketch::pointset::{aspect_ratio_with, AspectRatioOptions};
use quadsketch::sketch::{
    compress_blocks, compress_maxdist, decompress_blocks, distance_query, BlockSketch, MultiTreeSketch,
};
use quadsketch::{Error, PointSet, SketchBytes, SketchParams};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "qsk", version, about = "Quadtree sketches for point sets")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compress a dataset into a sketch file.
    Compress(CompressArgs),
    /// Reconstruct points from a sketch file.
    Decompress(DecompressArgs),
    /// Print header, tree statistics and size breakdown of a sketch file.
    Info(InfoArgs),
    /// Estimated distance between two points of a multi-tree sketch.
    Query(QueryArgs),
    /// Evaluate one configuration (nearest-neighbor accuracy and distortion).
    Eval(EvalArgs),
    /// Evaluate a grid of configurations and report Pareto envelopes.
    Sweep(SweepArgs),
    /// Write the synthetic diagonal dataset as fvecs.
    GenDiagonal(GenDiagonalArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum MethodArg {
    Qs,
    Pq,
    Grid,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Qs => Method::Qs,
            MethodArg::Pq => Method::Pq,
            MethodArg::Grid => Method::Grid,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum FormatArg {
    Fvecs,
    Bvecs,
    Idx,
    Csv,
    Cache,
    Diagonal,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Fvecs => Format::Fvecs,
            FormatArg::Bvecs => Format::Bvecs,
            FormatArg::Idx => Format::Idx,
            FormatArg::Csv => Format::Csv,
            FormatArg::Cache => Format::Cache,
            FormatArg::Diagonal => Format::Diagonal,
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
struct DatasetArgs {
    /// Input file, or `diagonal` for the synthetic dataset.
    #[arg(long)]
    dataset: String,
    /// Input format; guessed from the extension when omitted.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Only the first N vectors (fvecs/bvecs).
    #[arg(long)]
    limit: Option<usize>,
    /// Scale every vector to unit length.
    #[arg(long)]
    normalize: bool,
    /// CSV columns to use, by name (comma separated).
    #[arg(long, value_delimiter = ',')]
    columns: Vec<String>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct MethodArgs {
    #[arg(long, value_enum, default_value = "qs")]
    method: MethodArg,
    /// Contiguous coordinate blocks (qs, pq).
    #[arg(long, default_value_t = 1)]
    blocks: usize,
    /// Quadtree depth.
    #[arg(short = 'L', long = "levels")]
    levels: Option<u32>,
    /// Longest non-branching chain kept.
    #[arg(long)]
    lambda: Option<u32>,
    /// Landmarks per dimension (grid) or centroids per block (pq).
    #[arg(short = 'k')]
    k: Option<usize>,
    /// Accuracy target; derives L and lambda when they are not given.
    #[arg(long)]
    eps: Option<f64>,
    /// Failure probability used with --eps.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Serialize)]
struct CompressArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    #[command(flatten)]
    method: MethodArgs,
    /// Build the multi-tree distance oracle (needs --eps).
    #[arg(long)]
    maxdist: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct DecompressArgs {
    /// Sketch file.
    input: PathBuf,
    /// Output file; `.qskd` writes the native cache, anything else fvecs.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct InfoArgs {
    input: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct QueryArgs {
    input: PathBuf,
    i: usize,
    j: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
struct QueryOpts {
    /// Number of queries to sample, or a file of query vectors.
    #[arg(long, default_value_t = DEFAULT_QUERIES.to_string())]
    queries: String,
}

#[derive(Args, Debug, Serialize)]
struct EvalArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    #[command(flatten)]
    method: MethodArgs,
    #[command(flatten)]
    queries: QueryOpts,
    /// Also write the record as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct SweepArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    #[command(flatten)]
    queries: QueryOpts,
    /// Methods to sweep.
    #[arg(long = "method", value_enum, value_delimiter = ',', default_value = "qs,pq,grid")]
    methods: Vec<MethodArg>,
    /// Block counts for qs and pq; defaults to every divisor of d.
    #[arg(long, value_delimiter = ',')]
    blocks: Vec<usize>,
    /// Quadtree depths for qs; each is swept with lambda in 1..L.
    #[arg(short = 'L', long = "levels", value_delimiter = ',', default_value = "2,3,4,5,6,7,8,9,10,11,12,13,14,15,16,17,18,19,20")]
    levels: Vec<u32>,
    /// Fixed lambda for qs instead of 1..L.
    #[arg(long)]
    lambda: Option<u32>,
    /// log2 of k for pq.
    #[arg(long, value_delimiter = ',', default_value = "5,6,7,8,9,10,11,12")]
    pq_bits: Vec<u32>,
    /// log2 of k for grid.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8,9,10,11,12,13,14,15,16")]
    grid_bits: Vec<u32>,
    /// Seeds per configuration.
    #[arg(long, default_value_t = eval::DEFAULT_SEEDS)]
    seeds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Results CSV.
    #[arg(long)]
    out: PathBuf,
    /// Results as JSON lines.
    #[arg(long)]
    jsonl: Option<PathBuf>,
    /// Journal of finished runs; reruns skip them.
    #[arg(long)]
    journal: Option<PathBuf>,
    /// Write only the per-method envelopes (seed means) to --out.
    #[arg(long)]
    envelope_only: bool,
}

#[derive(Args, Debug, Serialize)]
struct GenDiagonalArgs {
    #[arg(long, default_value_t = data::DIAGONAL_N)]
    n: usize,
    #[arg(long, default_value_t = data::DIAGONAL_D)]
    d: usize,
    #[arg(long, default_value_t = data::DIAGONAL_HI)]
    hi: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(e) => match e {
                Error::InvalidParams(_)
                | Error::BlockMismatch { .. }
                | Error::CountTooLarge { .. }
                | Error::IndexOutOfRange { .. }
                | Error::LeafOutOfRange { .. } => EXIT_USAGE,
                Error::AmplificationExhausted { .. } | Error::Json(_) => EXIT_INTERNAL,
                _ => EXIT_DATA,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn print_config(command: &str, args: &impl Serialize) {
    let json = serde_json::to_string(args).unwrap_or_default();
    println!("config {command} {json}");
}

fn dataset_spec(a: &DatasetArgs, seed: u64) -> CliResult<DatasetSpec> {
    let format = match a.format {
        Some(f) => Format::from(f),
        None if a.dataset == "diagonal" => Format::Diagonal,
        None => Format::from_path(Path::new(&a.dataset))
            .ok_or_else(|| usage(format!("cannot tell the format of {}; pass --format", a.dataset)))?,
    };
    let mut spec = if format == Format::Diagonal {
        DatasetSpec::diagonal(seed)
    } else {
        DatasetSpec::file(&a.dataset, format)
    };
    spec.limit = a.limit;
    spec.normalize = a.normalize;
    if !a.columns.is_empty() {
        spec.columns = Columns::Names(a.columns.clone());
    }
    Ok(spec)
}

fn load(a: &DatasetArgs, seed: u64) -> CliResult<PointSet> {
    let ps = dataset_spec(a, seed)?.load()?;
    println!("loaded {} points in {} dimensions", ps.len(), ps.dim());
    Ok(ps)
}

/// `L` and `Λ` given directly, or derived from `--eps`.
fn qs_params(m: &MethodArgs, ps: &PointSet) -> CliResult<SketchParams> {
    let params = match (m.levels, m.lambda, m.eps) {
        (Some(l), Some(lam), _) => SketchParams::new(l, lam),
        (None, None, Some(eps)) => {
            let delta = m.delta.unwrap_or(DEFAULT_DELTA);
            let phi = aspect_ratio_with(ps, &AspectRatioOptions::default())?;
            let mut p = derive_params(eps, delta, ps.dim(), phi.value)?;
            println!(
                "aspect ratio {:.6} ({}), derived L={} lambda={}",
                phi.value,
                if phi.exact { "exact" } else { "sampled lower bound" },
                p.levels,
                p.lambda
            );
            p.eps = Some(eps);
            p.delta = Some(delta);
            p
        }
        _ => return Err(usage("qs needs both -L and --lambda, or --eps")),
    };
    let params = params.with_blocks(m.blocks).with_seed(m.seed);
    params.validate(ps.dim()).map_err(|e| usage(e.to_string()))?;
    Ok(params)
}

fn method_config(m: &MethodArgs, ps: &PointSet) -> CliResult<Config> {
    Ok(match m.method {
        MethodArg::Qs => {
            let p = qs_params(m, ps)?;
            Config::qs(p.blocks, p.levels, p.lambda)
        }
        MethodArg::Pq => {
            if m.blocks == 0 || ps.dim() % m.blocks != 0 {
                return Err(usage(format!("block count {} does not divide dimension {}", m.blocks, ps.dim())));
            }
            Config::pq(m.blocks, m.k.ok_or_else(|| usage("pq needs -k"))?)
        }
        MethodArg::Grid => Config::grid(m.k.ok_or_else(|| usage("grid needs -k"))?),
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult {
    std::fs::write(path, bytes).map_err(|e| {
        CliError::Core(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| {
        CliError::Core(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn cmd_compress(a: &CompressArgs) -> CliResult {
    print_config("compress", a);
    let ps = load(&a.dataset, a.method.seed)?;
    let coords = (ps.len() * ps.dim()) as f64;
    let start = Instant::now();
    let (bytes, payload_bits, extra) = match a.method.method {
        MethodArg::Qs if a.maxdist => {
            let eps = a.method.eps.ok_or_else(|| usage("--maxdist needs --eps"))?;
            let msk = compress_maxdist(&ps, eps, a.method.seed)?;
            let note = format!(", {} trees", msk.tree_count());
            (msk.to_bytes(), msk.payload_bits(), note)
        }
        MethodArg::Qs => {
            let params = qs_params(&a.method, &ps)?;
            let bsk = compress_blocks(&ps, &params)?;
            let note = format!(", L={} lambda={} blocks={}", params.levels, params.lambda, params.blocks);
            if params.blocks == 1 {
                (bsk.blocks[0].to_bytes(), bsk.payload_bits(), note)
            } else {
                (bsk.to_bytes(), bsk.payload_bits(), note)
            }
        }
        MethodArg::Pq => {
            let config = method_config(&a.method, &ps)?;
            let cb = pq_fit(&ps, config.blocks, config.k.unwrap(), a.method.seed)?;
            let note = format!(
                ", {:.4} bits/coordinate with codebook",
                cb.bits_per_coordinate_with_codebook()
            );
            (cb.to_bytes(), cb.code_bits(), note)
        }
        MethodArg::Grid => {
            let k = a.method.k.ok_or_else(|| usage("grid needs -k"))?;
            let k = u32::try_from(k).map_err(|_| usage(format!("-k {k} is too large")))?;
            let g = GridSketch::new(&ps, k)?;
            (g.to_bytes(), g.payload_bits(), String::new())
        }
    };
    let secs = start.elapsed().as_secs_f64();
    write_file(&a.out, &bytes)?;
    println!(
        "wrote {} ({} bytes): {:.4} bits/coordinate{extra}, {secs:.3}s",
        a.out.display(),
        bytes.len(),
        payload_bits as f64 / coords
    );
    Ok(())
}

enum AnySketch {
    Single(SketchBytes),
    Blocks(BlockSketch),
    Multi(MultiTreeSketch),
    Pq(PQCodebook),
    Grid(GridSketch),
}

fn read_sketch(path: &Path) -> CliResult<(AnySketch, usize)> {
    let bytes = read_file(path)?;
    let magic: [u8; 4] = bytes
        .get(..4)
        .and_then(|m| m.try_into().ok())
        .ok_or(Error::CorruptSketch {
            offset: 0,
            reason: "file too short".into(),
        })?;
    let sk = if magic == MAGIC {
        match peek_flags(&bytes)? {
            FLAG_SINGLE => AnySketch::Single(SketchBytes::from_bytes(&bytes)?),
            FLAG_BLOCKS => AnySketch::Blocks(BlockSketch::from_bytes(&bytes)?),
            FLAG_MULTI_TREE => AnySketch::Multi(MultiTreeSketch::from_bytes(&bytes)?),
            other => {
                return Err(Error::CorruptSketch {
                    offset: 6,
                    reason: format!("unknown flags {other}"),
                }
                .into())
            }
        }
    } else if magic == PQ_MAGIC {
        AnySketch::Pq(PQCodebook::from_bytes(&bytes)?)
    } else if magic == GRID_MAGIC {
        AnySketch::Grid(GridSketch::from_bytes(&bytes)?)
    } else {
        return Err(Error::CorruptSketch {
            offset: 0,
            reason: "unrecognized magic".into(),
        }
        .into());
    };
    Ok((sk, bytes.len()))
}

fn cmd_decompress(a: &DecompressArgs) -> CliResult {
    print_config("decompress", a);
    let (sk, _) = read_sketch(&a.input)?;
    let ps = match sk {
        AnySketch::Single(s) => quadsketch::decompress(&s)?,
        AnySketch::Blocks(b) => decompress_blocks(&b)?,
        AnySketch::Multi(_) => {
            return Err(usage(
                "multi-tree sketches only answer distance queries; use `qsk query`",
            ))
        }
        AnySketch::Pq(cb) => pq_decode(&cb)?,
        AnySketch::Grid(g) => g.decompress()?,
    };
    if a.out.extension().is_some_and(|e| e == "qskd") {
        data::write_cache(&a.out, &ps)?;
    } else {
        data::write_fvecs(&a.out, &ps)?;
    }
    println!("wrote {} points in {} dimensions to {}", ps.len(), ps.dim(), a.out.display());
    Ok(())
}

fn print_single(prefix: &str, sk: &SketchBytes) -> CliResult {
    let h = &sk.header;
    let decoded = decode(sk)?;
    let t = &decoded.tree;
    let s = sk.size();
    println!(
        "{prefix}n={} d={} L={} lambda={} root_level={} seed={}",
        h.n, h.d, h.levels, h.lambda, h.root_level, h.seed
    );
    println!(
        "{prefix}nodes={} leaves={} branching={} short_edges={} long_edges={}",
        t.node_count(),
        t.leaves.len(),
        t.branching_count(),
        t.short_edge_count(),
        t.long_edge_count()
    );
    println!(
        "{prefix}bits: header={} tree={} leaf_ids={} padding={} total={} ({:.4} payload bits/coordinate)",
        s.header_bits,
        s.tree_bits,
        s.leaf_id_bits,
        s.padding_bits,
        s.total_bits(),
        s.payload_bits() as f64 / (h.n as f64 * h.d as f64)
    );
    Ok(())
}

fn cmd_info(a: &InfoArgs) -> CliResult {
    print_config("info", a);
    let (sk, file_bytes) = read_sketch(&a.input)?;
    match sk {
        AnySketch::Single(s) => {
            println!("single-tree sketch");
            print_single("", &s)?;
        }
        AnySketch::Blocks(b) => {
            let h = &b.header;
            println!(
                "block sketch: n={} d={} blocks={} L={} lambda={} seed={}",
                h.n, h.d, h.m, h.levels, h.lambda, h.seed
            );
            let mut section_bits = 0;
            for (i, s) in b.blocks.iter().enumerate() {
                print_single(&format!("block {i}: "), s)?;
                section_bits += s.size().total_bits();
            }
            let outer = file_bytes * 8 - section_bits;
            println!(
                "bits: outer header and section table={outer} sections={section_bits} total={} ({:.4} payload bits/coordinate)",
                file_bytes * 8,
                b.bits_per_coordinate()
            );
        }
        AnySketch::Multi(m) => {
            println!(
                "multi-tree sketch: n={} d={} trees={} L={} lambda={}",
                m.len(),
                m.dim(),
                m.tree_count(),
                m.levels(),
                m.lambda()
            );
            for (i, t) in m.trees().iter().enumerate() {
                print_single(&format!("tree {i}: "), t)?;
            }
            println!(
                "bits: payload={} file={} ({:.4} payload bits/coordinate)",
                m.payload_bits(),
                file_bytes * 8,
                m.payload_bits() as f64 / (m.len() * m.dim()) as f64
            );
        }
        AnySketch::Pq(cb) => {
            println!("product quantizer: n={} d={} blocks={} k={}", cb.n, cb.d, cb.m, cb.k);
            println!(
                "bits: codes={} codebook={} file={} ({:.4} bits/coordinate, {:.4} with codebook)",
                cb.code_bits(),
                cb.codebook_bits(),
                file_bytes * 8,
                cb.bits_per_coordinate(),
                cb.bits_per_coordinate_with_codebook()
            );
        }
        AnySketch::Grid(g) => {
            let q = &g.quantizer;
            println!("grid quantizer: n={} d={} k={}", g.n, q.dim(), q.k);
            println!(
                "bits: codes={} file={} ({} bits/coordinate)",
                g.payload_bits(),
                file_bytes * 8,
                q.bits_per_coordinate()
            );
        }
    }
    Ok(())
}

fn cmd_query(a: &QueryArgs) -> CliResult {
    print_config("query", a);
    let (sk, _) = read_sketch(&a.input)?;
    let AnySketch::Multi(m) = sk else {
        return Err(usage("distance queries need a multi-tree sketch (compress --maxdist)"));
    };
    println!("{}", distance_query(&m, a.i, a.j)?);
    Ok(())
}

/// Base points and queries: a sampled split, or a separate query file.
fn split_queries(ps: PointSet, q: &QueryOpts, format: Option<FormatArg>, seed: u64) -> CliResult<(PointSet, PointSet)> {
    if let Ok(count) = q.queries.parse::<usize>() {
        if count == 0 {
            return Err(usage("--queries must be positive"));
        }
        let (queries, base) = data::sample_queries(&ps, count, seed)?;
        let base = base.ok_or_else(|| usage("no base points left after sampling queries"))?;
        return Ok((base, queries.expect("count > 0")));
    }
    let path = PathBuf::from(&q.queries);
    let format = match format {
        Some(f) => Format::from(f),
        None => Format::from_path(&path).ok_or_else(|| usage(format!("cannot tell the format of {}", path.display())))?,
    };
    let queries = DatasetSpec::file(path, format).load()?;
    if queries.dim() != ps.dim() {
        return Err(usage(format!("queries have {} dimensions, data has {}", queries.dim(), ps.dim())));
    }
    Ok((ps, queries))
}

fn print_record(r: &EvalRecord) {
    println!(
        "{}: {:.4} bits/coordinate ({:.4} with side data), accuracy {:.4}, distortion {:.5}, {:.3}s",
        r.config(),
        r.bits_per_coordinate,
        r.bits_with_codebook,
        r.accuracy,
        r.avg_distortion,
        r.wall_time_s
    );
}

fn cmd_eval(a: &EvalArgs) -> CliResult {
    print_config("eval", a);
    let ps = load(&a.dataset, a.method.seed)?;
    let (base, queries) = split_queries(ps, &a.queries, a.dataset.format, a.method.seed)?;
    let config = method_config(&a.method, &base)?;
    let rec = eval::evaluate_named(&a.dataset.dataset, &config, &base, &queries, a.method.seed)?;
    print_record(&rec);
    if let Some(out) = &a.out {
        eval::write_csv(out, std::slice::from_ref(&rec))?;
    }
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> CliResult {
    print_config("sweep", a);
    let ps = load(&a.dataset, a.seed)?;
    let (base, queries) = split_queries(ps, &a.queries, a.dataset.format, a.seed)?;
    let d = base.dim();
    let blocks = if a.blocks.is_empty() { eval::divisors(d) } else { a.blocks.clone() };
    if let Some(&bad) = blocks.iter().find(|&&m| m == 0 || d % m != 0) {
        return Err(usage(format!("block count {bad} does not divide dimension {d}")));
    }
    let mut configs = Vec::new();
    for &method in &a.methods {
        match method {
            MethodArg::Qs => {
                for &m in &blocks {
                    for &l in &a.levels {
                        match a.lambda {
                            Some(lam) => configs.push(Config::qs(m, l, lam)),
                            None => configs.extend((1..l).map(|lam| Config::qs(m, l, lam))),
                        }
                    }
                }
            }
            MethodArg::Pq => {
                for &m in &blocks {
                    configs.extend(a.pq_bits.iter().map(|&b| Config::pq(m, 1 << b)));
                }
            }
            MethodArg::Grid => configs.extend(a.grid_bits.iter().map(|&b| Config::grid(1 << b))),
        }
    }
    if configs.is_empty() || a.seeds == 0 {
        return Err(usage("empty parameter grid"));
    }
    let seeds: Vec<u64> = (0..a.seeds as u64).map(|s| a.seed + s).collect();
    println!("{} configurations x {} seeds", configs.len(), seeds.len());
    let opts = SweepOptions {
        dataset: a.dataset.dataset.clone(),
        seeds,
        journal: a.journal.clone(),
        threads: None,
    };
    let records = eval::sweep(&configs, &base, &queries, &opts)?;
    let means: Vec<EvalRecord> = eval::aggregate(&records).into_iter().map(|g| g.mean).collect();
    let mut envelopes = Vec::new();
    for &method in &a.methods {
        let method = Method::from(method);
        let of: Vec<EvalRecord> = means.iter().filter(|r| r.method == method).cloned().collect();
        let env = eval::pareto_envelope(&of, Objective::Accuracy);
        println!("{method} accuracy envelope:");
        for r in &env {
            print_record(r);
        }
        envelopes.extend(env);
    }
    let rows = if a.envelope_only { &envelopes } else { &records };
    eval::write_csv(&a.out, rows)?;
    if let Some(p) = &a.jsonl {
        eval::write_jsonl(p, rows)?;
    }
    println!("wrote {} rows to {}", rows.len(), a.out.display());
    Ok(())
}

fn cmd_gen_diagonal(a: &GenDiagonalArgs) -> CliResult {
    print_config("gen-diagonal", a);
    if a.n == 0 || a.d == 0 {
        return Err(usage("--n and --d must be positive"));
    }
    let ps = data::gen_diagonal(a.n, a.d, a.hi, a.seed)?;
    data::write_fvecs(&a.out, &ps)?;
    println!("wrote {} points in {} dimensions to {}", ps.len(), ps.dim(), a.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match &cli.command {
        Command::Compress(a) => cmd_compress(a),
        Command::Decompress(a) => cmd_decompress(a),
        Command::Info(a) => cmd_info(a),
        Command::Query(a) => cmd_query(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::GenDiagonal(a) => cmd_gen_diagonal(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
