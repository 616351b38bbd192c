//! Dataset loaders, the synthetic diagonal generator and query sampling.
//!
//! Supported inputs are `.fvecs`/`.bvecs`/`.ivecs`, MNIST-style IDX files,
//! CSV with a header row, and a native cache:
//!
//! ```text
//! "QSKD" | version u16 | n u64 | d u32 | n×d f64 (row-major, little-endian)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};

use log::warn;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointset::PointSet;
use crate::rng::seeded_rng;

pub const CACHE_MAGIC: [u8; 4] = *b"QSKD";
pub const CACHE_VERSION: u16 = 1;
pub const IDX_UBYTE_MAGIC: u32 = 0x0000_0803;

pub const DIAGONAL_N: usize = 10_000;
pub const DIAGONAL_D: usize = 128;
pub const DIAGONAL_HI: f64 = 40_000.0;
/// Half-hour slots per day in the taxi featurization.
pub const TAXI_WINDOW: usize = 48;
pub const DEFAULT_QUERIES: usize = 500;

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

/// Fills `buf`, returning `false` on a clean end of file before any byte.
fn read_exact_or_eof(r: &mut impl Read, buf: &mut [u8], path: &Path, offset: u64) -> Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) if filled == 0 => return Ok(false),
            Ok(0) => {
                return Err(Error::MalformedRecord {
                    offset: offset + filled as u64,
                    reason: "file ends inside a record".into(),
                })
            }
            Ok(k) => filled += k,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(Error::io(path, e)),
        }
    }
    Ok(true)
}

/// Reads `dim`-prefixed records whose components are `width` bytes each.
fn read_vecs(
    path: &Path,
    width: usize,
    limit: Option<usize>,
    convert: impl Fn(&[u8]) -> f64,
) -> Result<PointSet> {
    let mut r = open(path)?;
    let mut coords = Vec::new();
    let mut dim = None;
    let mut offset = 0u64;
    let mut n = 0usize;
    let mut head = [0u8; 4];
    let mut body = Vec::new();
    while limit.is_none_or(|l| n < l) {
        if !read_exact_or_eof(&mut r, &mut head, path, offset)? {
            break;
        }
        let d = i32::from_le_bytes(head);
        if d <= 0 {
            return Err(Error::MalformedRecord {
                offset,
                reason: format!("non-positive dimension {d}"),
            });
        }
        let d = d as usize;
        match dim {
            None => dim = Some(d),
            Some(e) if e != d => {
                return Err(Error::DimensionMismatch {
                    expected: e,
                    found: d,
                    record: n,
                })
            }
            _ => {}
        }
        body.resize(d * width, 0);
        if !read_exact_or_eof(&mut r, &mut body, path, offset + 4)? {
            return Err(Error::MalformedRecord {
                offset: offset + 4,
                reason: "file ends inside a record".into(),
            });
        }
        coords.extend(body.chunks_exact(width).map(&convert));
        offset += 4 + (d * width) as u64;
        n += 1;
    }
    let Some(d) = dim else {
        return Err(Error::EmptyInput);
    };
    PointSet::new(n, d, coords).map_err(|e| match e {
        Error::InvalidPointSet(reason) => Error::MalformedRecord { offset: 0, reason },
        other => other,
    })
}

pub fn read_fvecs(path: impl AsRef<Path>) -> Result<PointSet> {
    read_fvecs_limit(path, None)
}

/// The first `limit` records of an `.fvecs` file.
pub fn read_fvecs_limit(path: impl AsRef<Path>, limit: Option<usize>) -> Result<PointSet> {
    read_vecs(path.as_ref(), 4, limit, |b| {
        f32::from_le_bytes(b.try_into().unwrap()) as f64
    })
}

pub fn read_bvecs(path: impl AsRef<Path>) -> Result<PointSet> {
    read_bvecs_limit(path, None)
}

pub fn read_bvecs_limit(path: impl AsRef<Path>, limit: Option<usize>) -> Result<PointSet> {
    read_vecs(path.as_ref(), 1, limit, |b| b[0] as f64)
}

/// Integer vectors, e.g. ground-truth neighbor lists.
pub fn read_ivecs(path: impl AsRef<Path>) -> Result<Vec<Vec<i32>>> {
    let ps = read_vecs(path.as_ref(), 4, None, |b| {
        i32::from_le_bytes(b.try_into().unwrap()) as f64
    })?;
    Ok(ps.points().map(|p| p.iter().map(|&v| v as i32).collect()).collect())
}

/// Writes coordinates as `f32`; files produced by [`read_fvecs`] round-trip byte for byte.
pub fn write_fvecs(path: impl AsRef<Path>, ps: &PointSet) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let d = (ps.dim() as i32).to_le_bytes();
    let mut write = || -> std::io::Result<()> {
        for p in ps.points() {
            w.write_all(&d)?;
            for &v in p {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

/// Reads an unsigned-byte IDX tensor, flattening everything after the first axis.
///
/// With `normalize`, each vector is scaled to unit norm; all-zero vectors
/// are dropped with a warning.
pub fn read_idx(path: impl AsRef<Path>, normalize: bool) -> Result<PointSet> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    open(path)?
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    parse_idx(&bytes, normalize)
}

pub fn parse_idx(bytes: &[u8], normalize: bool) -> Result<PointSet> {
    let be = |off: usize| -> Result<u32> {
        bytes
            .get(off..off + 4)
            .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
            .ok_or_else(|| Error::MalformedRecord {
                offset: off as u64,
                reason: "IDX header truncated".into(),
            })
    };
    let magic = be(0)?;
    let rank = (magic & 0xff) as usize;
    if magic >> 8 != 0x08 || rank == 0 {
        return Err(Error::BadMagic {
            found: magic,
            expected: IDX_UBYTE_MAGIC,
        });
    }
    let dims = (0..rank)
        .map(|a| be(4 + 4 * a).map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let n = dims[0];
    let d: usize = dims[1..].iter().product();
    let start = 4 + 4 * rank;
    let body = &bytes[start..];
    if Some(body.len()) != n.checked_mul(d) {
        return Err(Error::MalformedRecord {
            offset: start as u64,
            reason: format!("expected {n}x{d} bytes of data, found {}", body.len()),
        });
    }
    let coords: Vec<f64> = body.iter().map(|&b| b as f64).collect();
    let ps = PointSet::new(n, d, coords)?;
    if !normalize {
        return Ok(ps);
    }
    let (out, dropped) = normalize_rows(&ps)?;
    for index in dropped {
        warn!("{}; dropping it", Error::NormZero { index });
    }
    Ok(out)
}

/// Scales each vector to unit Euclidean norm, skipping zero vectors.
///
/// Returns the kept vectors and the indices of those dropped.
pub fn normalize_rows(ps: &PointSet) -> Result<(PointSet, Vec<usize>)> {
    let mut coords = Vec::with_capacity(ps.as_slice().len());
    let mut dropped = Vec::new();
    for (i, p) in ps.points().enumerate() {
        let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            dropped.push(i);
            continue;
        }
        coords.extend(p.iter().map(|v| v / norm));
    }
    let n = ps.len() - dropped.len();
    if n == 0 {
        return Err(Error::NormZero { index: 0 });
    }
    Ok((PointSet::new(n, ps.dim(), coords)?, dropped))
}

/// Strict variant of [`normalize_rows`]: any zero vector is an error.
pub fn normalize_strict(ps: &PointSet) -> Result<PointSet> {
    let (out, dropped) = normalize_rows(ps)?;
    match dropped.first() {
        Some(&index) => Err(Error::NormZero { index }),
        None => Ok(out),
    }
}

/// Which CSV columns become coordinates.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Columns {
    #[default]
    All,
    Indices(Vec<usize>),
    Names(Vec<String>),
}

impl Columns {
    fn resolve(&self, headers: &csv::StringRecord) -> Result<Vec<usize>> {
        let width = headers.len();
        let out = match self {
            Columns::All => (0..width).collect(),
            Columns::Indices(ix) => ix.clone(),
            Columns::Names(names) => names
                .iter()
                .map(|name| {
                    headers
                        .iter()
                        .position(|h| h.trim() == name)
                        .ok_or_else(|| Error::ParseError {
                            line: 1,
                            reason: format!("no column named {name:?}"),
                        })
                })
                .collect::<Result<_>>()?,
        };
        if out.is_empty() {
            return Err(Error::ParseError {
                line: 1,
                reason: "no columns selected".into(),
            });
        }
        if let Some(&bad) = out.iter().find(|&&c| c >= width) {
            return Err(Error::ParseError {
                line: 1,
                reason: format!("column {bad} out of range ({width} columns)"),
            });
        }
        Ok(out)
    }
}

/// One point per data row; the first row is a header.
pub fn read_csv(path: impl AsRef<Path>, columns: &Columns) -> Result<PointSet> {
    let path = path.as_ref();
    read_csv_from(open(path)?, columns)
}

pub fn read_csv_from(input: impl Read, columns: &Columns) -> Result<PointSet> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = rdr
        .headers()
        .map_err(|e| Error::ParseError {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    let cols = columns.resolve(&headers)?;
    let mut coords = Vec::new();
    let mut n = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::ParseError {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        for &c in &cols {
            let cell = rec.get(c).ok_or_else(|| Error::ParseError {
                line,
                reason: format!("missing column {c}"),
            })?;
            let v: f64 = cell.trim().parse().map_err(|_| Error::ParseError {
                line,
                reason: format!("non-numeric value {cell:?} in column {c}"),
            })?;
            if !v.is_finite() {
                return Err(Error::ParseError {
                    line,
                    reason: format!("non-finite value {cell:?} in column {c}"),
                });
            }
            coords.push(v);
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    PointSet::new(n, cols.len(), coords)
}

/// Cuts a series into consecutive non-overlapping windows of `width` values;
/// a trailing partial window is discarded.
///
/// With `width = 48` on half-hourly counts this gives one point per day.
pub fn window_series(values: &[f64], width: usize) -> Result<PointSet> {
    if width == 0 {
        return Err(Error::InvalidParams("window width must be positive".into()));
    }
    let n = values.len() / width;
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    PointSet::new(n, width, values[..n * width].to_vec())
}

/// Half-hourly counts in `column` of a CSV, grouped into daily 48-vectors.
pub fn read_taxi(path: impl AsRef<Path>, column: &str) -> Result<PointSet> {
    let series = read_csv(path, &Columns::Names(vec![column.to_string()]))?;
    window_series(series.as_slice(), TAXI_WINDOW)
}

/// `n` points `(x, …, x)` in `d` dimensions with `x` uniform on `[0, hi]`.
pub fn gen_diagonal(n: usize, d: usize, hi: f64, seed: u64) -> Result<PointSet> {
    if !(hi.is_finite() && hi > 0.0) {
        return Err(Error::InvalidParams(format!("diagonal upper bound must be positive, got {hi}")));
    }
    let mut rng = seeded_rng(seed);
    let mut coords = Vec::with_capacity(n * d);
    for _ in 0..n {
        let x = rng.gen_range(0.0..=hi);
        coords.extend(std::iter::repeat_n(x, d));
    }
    PointSet::new(n, d, coords)
}

/// Splits off `count` uniformly chosen points as queries.
///
/// Queries come out in increasing index order, as does the remainder.
/// Taking every point leaves no remainder and yields `None`.
pub fn sample_queries(ps: &PointSet, count: usize, seed: u64) -> Result<(Option<PointSet>, Option<PointSet>)> {
    let n = ps.len();
    if count > n {
        return Err(Error::CountTooLarge { count, n });
    }
    let mut picked = sample(&mut seeded_rng(seed), n, count).into_vec();
    picked.sort_unstable();
    let mut is_query = vec![false; n];
    for &i in &picked {
        is_query[i] = true;
    }
    let rest: Vec<usize> = (0..n).filter(|&i| !is_query[i]).collect();
    let queries = (!picked.is_empty()).then(|| ps.select(&picked)).transpose()?;
    let rest = (!rest.is_empty()).then(|| ps.select(&rest)).transpose()?;
    Ok((queries, rest))
}

pub fn write_cache(path: impl AsRef<Path>, ps: &PointSet) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(18 + ps.as_slice().len() * 8);
    out.extend_from_slice(&CACHE_MAGIC);
    out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    out.extend_from_slice(&(ps.len() as u64).to_le_bytes());
    out.extend_from_slice(&(ps.dim() as u32).to_le_bytes());
    for v in ps.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_cache(path: impl AsRef<Path>) -> Result<PointSet> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_cache(&bytes)
}

pub fn parse_cache(bytes: &[u8]) -> Result<PointSet> {
    let malformed = |offset: usize, reason: &str| Error::MalformedRecord {
        offset: offset as u64,
        reason: reason.into(),
    };
    if bytes.len() < 18 {
        return Err(malformed(0, "cache header truncated"));
    }
    if bytes[..4] != CACHE_MAGIC {
        return Err(Error::BadMagic {
            found: u32::from_be_bytes(bytes[..4].try_into().unwrap()),
            expected: u32::from_be_bytes(CACHE_MAGIC),
        });
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != CACHE_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: CACHE_VERSION,
        });
    }
    let n = u64::from_le_bytes(bytes[6..14].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[14..18].try_into().unwrap()) as usize;
    let body = &bytes[18..];
    if n.checked_mul(d).and_then(|c| c.checked_mul(8)) != Some(body.len()) {
        return Err(malformed(18, "cache body does not match its header"));
    }
    let coords = body
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    PointSet::new(n, d, coords).map_err(|e| malformed(18, &e.to_string()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Fvecs,
    Bvecs,
    Idx,
    Csv,
    Cache,
    Diagonal,
}

impl Format {
    /// Guess from the file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        Some(match ext.as_str() {
            "fvecs" => Format::Fvecs,
            "bvecs" => Format::Bvecs,
            "idx" | "idx3-ubyte" | "ubyte" => Format::Idx,
            "csv" => Format::Csv,
            "qskd" => Format::Cache,
            _ => return None,
        })
    }
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "fvecs" => Format::Fvecs,
            "bvecs" => Format::Bvecs,
            "idx" => Format::Idx,
            "csv" => Format::Csv,
            "cache" => Format::Cache,
            "diagonal" => Format::Diagonal,
            other => return Err(Error::InvalidParams(format!("unknown format {other:?}"))),
        })
    }
}

/// How to load one dataset, and what shape it must have.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    pub format: Format,
    pub path: Option<PathBuf>,
    pub expected: Option<(usize, usize)>,
    pub normalize: bool,
    pub columns: Columns,
    /// Only the first `limit` records (vector formats).
    pub limit: Option<usize>,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn file(path: impl Into<PathBuf>, format: Format) -> Self {
        let path = path.into();
        Self {
            name: path.display().to_string(),
            format,
            path: Some(path),
            expected: None,
            normalize: false,
            columns: Columns::All,
            limit: None,
            seed: 0,
        }
    }

    pub fn diagonal(seed: u64) -> Self {
        Self {
            name: "diagonal".into(),
            format: Format::Diagonal,
            path: None,
            expected: Some((DIAGONAL_N, DIAGONAL_D)),
            normalize: false,
            columns: Columns::All,
            limit: None,
            seed,
        }
    }

    pub fn load(&self) -> Result<PointSet> {
        let path = || {
            self.path
                .as_deref()
                .ok_or_else(|| Error::InvalidParams(format!("dataset {} needs a path", self.name)))
        };
        let ps = match self.format {
            Format::Fvecs => read_fvecs_limit(path()?, self.limit)?,
            Format::Bvecs => read_bvecs_limit(path()?, self.limit)?,
            Format::Idx => read_idx(path()?, self.normalize)?,
            Format::Csv => read_csv(path()?, &self.columns)?,
            Format::Cache => read_cache(path()?)?,
            Format::Diagonal => {
                let (n, d) = self.expected.unwrap_or((DIAGONAL_N, DIAGONAL_D));
                gen_diagonal(n, d, DIAGONAL_HI, self.seed)?
            }
        };
        let ps = if self.normalize && self.format != Format::Idx {
            let (out, dropped) = normalize_rows(&ps)?;
            for index in dropped {
                warn!("{}; dropping it", Error::NormZero { index });
            }
            out
        } else {
            ps
        };
        if let Some((n, d)) = self.expected {
            if (ps.len(), ps.dim()) != (n, d) {
                return Err(Error::ShapeMismatch {
                    name: self.name.clone(),
                    expected_n: n,
                    expected_d: d,
                    n: ps.len(),
                    d: ps.dim(),
                });
            }
        }
        Ok(ps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_points_lie_on_the_line() {
        let ps = gen_diagonal(50, 7, 10.0, 3).unwrap();
        assert_eq!((ps.len(), ps.dim()), (50, 7));
        for p in ps.points() {
            assert!(p.iter().all(|&v| v == p[0] && (0.0..=10.0).contains(&v)));
        }
    }

    #[test]
    fn query_split() {
        let ps = gen_diagonal(20, 2, 1.0, 0).unwrap();
        let (q, rest) = sample_queries(&ps, 5, 1).unwrap();
        let (q, rest) = (q.unwrap(), rest.unwrap());
        assert_eq!((q.len(), rest.len()), (5, 15));
        assert_eq!(sample_queries(&ps, 5, 1).unwrap().0.unwrap(), q);
        let (none, all) = sample_queries(&ps, 0, 1).unwrap();
        assert!(none.is_none());
        assert_eq!(all.unwrap(), ps);
        assert!(sample_queries(&ps, 20, 1).unwrap().1.is_none());
        assert!(matches!(
            sample_queries(&ps, 21, 1),
            Err(Error::CountTooLarge { count: 21, n: 20 })
        ));
    }

    #[test]
    fn windows() {
        let v: Vec<f64> = (0..100).map(|x| x as f64).collect();
        let ps = window_series(&v, 48).unwrap();
        assert_eq!((ps.len(), ps.dim()), (2, 48));
        assert_eq!(ps.point(1)[0], 48.0);
    }

    #[test]
    fn csv_header_and_errors() {
        let text = "a,b,c\n1,2,3\n4,5,6\n";
        let ps = read_csv_from(text.as_bytes(), &Columns::Indices(vec![2, 0])).unwrap();
        assert_eq!(ps.as_slice(), &[3.0, 1.0, 6.0, 4.0]);
        let ps = read_csv_from(text.as_bytes(), &Columns::Names(vec!["b".into()])).unwrap();
        assert_eq!(ps.as_slice(), &[2.0, 5.0]);
        let bad = "a,b\n1,2\n3,x\n";
        assert!(matches!(
            read_csv_from(bad.as_bytes(), &Columns::All),
            Err(Error::ParseError { line: 3, .. })
        ));
    }

    #[test]
    fn idx_parse() {
        let mut bytes = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 2];
        bytes.extend_from_slice(&[3, 4, 0, 0]);
        let ps = parse_idx(&bytes, false).unwrap();
        assert_eq!(ps.as_slice(), &[3.0, 4.0, 0.0, 0.0]);
        let ps = parse_idx(&bytes, true).unwrap();
        assert_eq!(ps.len(), 1);
        assert_eq!(ps.as_slice(), &[0.6, 0.8]);
        bytes[2] = 9;
        assert!(matches!(parse_idx(&bytes, false), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn strict_normalization() {
        let ps = PointSet::new(2, 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(normalize_strict(&ps), Err(Error::NormZero { index: 1 })));
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.qskd");
        let ps = PointSet::new(2, 3, vec![0.1, -2.0, 3.5, 1e300, 0.0, -0.0]).unwrap();
        write_cache(&path, &ps).unwrap();
        assert_eq!(read_cache(&path).unwrap(), ps);
    }
}
