//! Vector datasets: fvecs/ivecs interchange, the internal `NVDS` file, a
//! seeded synthetic generator, and brute-force ground truth.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use pagegraph_core::model::{rank_cmp, squared_l2};
use pagegraph_core::VertexId;

use crate::error::{Error, Result};

const NVDS_MAGIC: &[u8; 4] = b"NVDS";
const NVDS_VERSION: u32 = 1;

/// Row-major float vectors of one dimensionality.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dim: usize,
    pub data: Vec<f32>,
}

impl Dataset {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::Config(format!("{} floats do not form {dim}-d rows", data.len())));
        }
        Ok(Self { dim, data })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn to_rows(&self) -> Vec<Vec<f32>> {
        self.rows().map(<[f32]>::to_vec).collect()
    }

    /// Rows `range`, as a new dataset.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Dataset {
        Dataset { dim: self.dim, data: self.data[range.start * self.dim..range.end * self.dim].to_vec() }
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|source| Error::File { path: path.to_path_buf(), source })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|source| Error::File { path: path.to_path_buf(), source })
}

fn format_err(path: &Path, offset: usize, msg: impl Into<String>) -> Error {
    Error::Format { path: path.to_path_buf(), offset: offset as u64, msg: msg.into() }
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    open(path)?.read_to_end(&mut bytes).map_err(|source| Error::File { path: path.to_path_buf(), source })?;
    Ok(bytes)
}

/// Parses `*vecs` records: little-endian i32 dim, then dim 4-byte values.
fn parse_vecs(path: &Path, bytes: &[u8]) -> Result<(usize, Vec<[u8; 4]>)> {
    let mut at = 0;
    let mut dim = None;
    let mut out = Vec::new();
    while at < bytes.len() {
        let head = bytes.get(at..at + 4).ok_or_else(|| format_err(path, at, "truncated dimension header"))?;
        let d = i32::from_le_bytes(head.try_into().expect("4 bytes"));
        if d <= 0 {
            return Err(format_err(path, at, format!("non-positive dimension {d}")));
        }
        let d = d as usize;
        match dim {
            None => dim = Some(d),
            Some(prev) if prev != d => {
                return Err(format_err(path, at, format!("dimension changes from {prev} to {d}")));
            }
            _ => {}
        }
        let body = bytes
            .get(at + 4..at + 4 + 4 * d)
            .ok_or_else(|| format_err(path, at + 4, format!("truncated record: {d} values announced")))?;
        out.extend(body.chunks_exact(4).map(|c| <[u8; 4]>::try_from(c).expect("4 bytes")));
        at += 4 + 4 * d;
    }
    Ok((dim.unwrap_or(0), out))
}

pub fn read_fvecs(path: &Path) -> Result<Dataset> {
    let (dim, words) = parse_vecs(path, &read_all(path)?)?;
    if dim == 0 {
        return Err(format_err(path, 0, "no records"));
    }
    Dataset::new(dim, words.into_iter().map(f32::from_le_bytes).collect())
}

pub fn write_fvecs(path: &Path, ds: &Dataset) -> Result<()> {
    let mut w = create(path)?;
    for row in ds.rows() {
        w.write_all(&(ds.dim as i32).to_le_bytes())?;
        for x in row {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads ivecs rows (ids are stored as i32 and must be non-negative).
pub fn read_ivecs(path: &Path) -> Result<Vec<Vec<u32>>> {
    let bytes = read_all(path)?;
    let (dim, words) = parse_vecs(path, &bytes)?;
    if dim == 0 {
        return Ok(Vec::new());
    }
    let vals: Vec<i32> = words.into_iter().map(i32::from_le_bytes).collect();
    if let Some(p) = vals.iter().position(|&v| v < 0) {
        return Err(format_err(path, (p / dim) * (4 + 4 * dim) + 4 + 4 * (p % dim), "negative id"));
    }
    Ok(vals.chunks_exact(dim).map(|r| r.iter().map(|&v| v as u32).collect()).collect())
}

pub fn write_ivecs(path: &Path, rows: &[Vec<u32>]) -> Result<()> {
    let mut w = create(path)?;
    for r in rows {
        w.write_all(&(r.len() as i32).to_le_bytes())?;
        for &v in r {
            w.write_all(&(v as i32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Internal dataset file: `NVDS`, version u32, dim u32, count u64, then
/// `count * dim` little-endian f32.
pub fn write_nvds(path: &Path, ds: &Dataset) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(NVDS_MAGIC)?;
    w.write_all(&NVDS_VERSION.to_le_bytes())?;
    w.write_all(&(ds.dim as u32).to_le_bytes())?;
    w.write_all(&(ds.len() as u64).to_le_bytes())?;
    for x in &ds.data {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_nvds(path: &Path) -> Result<Dataset> {
    let bytes = read_all(path)?;
    if bytes.get(..4) != Some(NVDS_MAGIC.as_slice()) {
        return Err(format_err(path, 0, "not an NVDS file"));
    }
    let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    if bytes.len() < 20 {
        return Err(format_err(path, bytes.len(), "truncated header"));
    }
    if u32_at(4) != NVDS_VERSION {
        return Err(format_err(path, 4, "unsupported version"));
    }
    let dim = u32_at(8) as usize;
    let count = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let want = 20 + count * dim * 4;
    if bytes.len() != want {
        return Err(format_err(path, bytes.len().min(want), format!("expected {want} bytes for {count} x {dim}")));
    }
    let data = bytes[20..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
    Dataset::new(dim, data)
}

/// Reads a dataset by extension: `.fvecs`, otherwise NVDS.
pub fn load(path: &Path) -> Result<Dataset> {
    if path.extension().is_some_and(|e| e == "fvecs") {
        read_fvecs(path)
    } else {
        read_nvds(path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub dim: usize,
    pub clusters: usize,
    /// Dimensionality of each cluster's local subspace.
    pub intrinsic_dim: usize,
    /// Spread of cluster centers.
    pub center_scale: f32,
    /// Spread within a cluster's subspace.
    pub spread: f32,
    /// Isotropic noise added in the full space.
    pub noise: f32,
    /// How far cluster centers move over one stream of `drift_span` points,
    /// in units of `center_scale`. Zero gives a stationary mixture.
    pub drift: f32,
    pub drift_span: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self {
            dim,
            clusters: 256,
            intrinsic_dim: 8,
            center_scale: 1.0,
            spread: 1.0,
            noise: 0.05,
            drift: 0.0,
            drift_span: 1,
            seed,
        }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f32 {
    StandardNormal.sample(rng)
}

struct Mixture {
    centers: Vec<Vec<f32>>,
    bases: Vec<Vec<f32>>,
    directions: Vec<Vec<f32>>,
}

impl Mixture {
    fn new(spec: &SyntheticSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut gauss = |n: usize, scale: f32| -> Vec<f32> {
            (0..n).map(|_| scale * normal(&mut rng)).collect::<Vec<f32>>()
        };
        let d = spec.dim;
        let k = spec.intrinsic_dim.min(d).max(1);
        let centers = (0..spec.clusters).map(|_| gauss(d, spec.center_scale)).collect();
        let bases = (0..spec.clusters).map(|_| gauss(d * k, 1.0 / (k as f32).sqrt())).collect();
        let directions = (0..spec.clusters)
            .map(|_| {
                let v = gauss(d, 1.0);
                let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt().max(1e-12);
                v.into_iter().map(|x| x / norm * spec.center_scale).collect()
            })
            .collect();
        Self { centers, bases, directions }
    }
}

/// Generates rows `start..start + n` of the stream described by `spec`.
/// `stream` selects an independent sample (for example queries vs. base).
pub fn synthetic(spec: &SyntheticSpec, start: usize, n: usize, stream: u64) -> Dataset {
    let mix = Mixture::new(spec);
    let d = spec.dim;
    let k = spec.intrinsic_dim.min(d).max(1);
    let mut data = vec![0.0f32; n * d];
    data.par_chunks_mut(d).enumerate().for_each(|(j, row)| {
        let i = start + j;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (i as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
        let c = rng.gen_range(0..spec.clusters);
        let t = spec.drift * i as f32 / spec.drift_span.max(1) as f32;
        let z: Vec<f32> = (0..k).map(|_| spec.spread * normal(&mut rng)).collect();
        for (x, out) in row.iter_mut().enumerate() {
            let mut v = mix.centers[c][x] + t * mix.directions[c][x];
            for (a, zi) in z.iter().enumerate() {
                v += mix.bases[c][x * k + a] * zi;
            }
            let e = normal(&mut rng);
            *out = v + spec.noise * e;
        }
    });
    Dataset { dim: d, data }
}

/// Exact top-`k` ids for every query (ties: lower id).
pub fn ground_truth(base: &Dataset, queries: &Dataset, k: usize) -> Vec<Vec<u32>> {
    assert_eq!(base.dim, queries.dim, "dimension mismatch");
    let k = k.min(base.len());
    queries
        .rows()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|q| {
            let mut all: Vec<(f32, u32)> = base.rows().enumerate().map(|(i, b)| (squared_l2(q, b), i as u32)).collect();
            let cmp = |a: &(f32, u32), b: &(f32, u32)| rank_cmp(a.0, VertexId(a.1), b.0, VertexId(b.1));
            if k < all.len() && k > 0 {
                all.select_nth_unstable_by(k - 1, cmp);
                all.truncate(k);
            }
            all.sort_by(cmp);
            all.truncate(k);
            all.into_iter().map(|(_, i)| i).collect()
        })
        .collect()
}

/// Fraction of the first `k` truth ids present among the first `k` results.
pub fn recall_at(results: &[u32], truth: &[u32], k: usize) -> f64 {
    let k = k.min(truth.len());
    if k == 0 {
        return 1.0;
    }
    let res = &results[..k.min(results.len())];
    truth[..k].iter().filter(|t| res.contains(t)).count() as f64 / k as f64
}

/// Output path helper: `dir/name`, creating `dir`.
pub fn ensure_dir(dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|source| Error::File { path: dir.to_path_buf(), source })?;
    Ok(dir.to_path_buf())
}
