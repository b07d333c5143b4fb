//! Product quantization: per-subspace k-means codebooks, one-byte codes, and
//! the asymmetric (query table) and symmetric (code-to-code) distance tables
//! used during traversal.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::model::squared_l2;
use crate::{Error, Result};

/// Centroids per subspace; one code byte each.
pub const CENTROIDS: usize = 256;
/// Minimum training sample size.
pub const MIN_TRAIN_SAMPLE: usize = CENTROIDS;

const MAGIC: &[u8; 4] = b"NVPQ";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct PqCodebook {
    dim: usize,
    m: usize,
    sub_dim: usize,
    /// `m` tables of 256 centroids, subspace-major then centroid-major.
    centroids: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PqCode(pub Vec<u8>);

impl PqCodebook {
    pub fn new(dim: usize, m: usize, centroids: Vec<f32>) -> Result<Self> {
        if m == 0 || dim == 0 || dim % m != 0 {
            return Err(Error::InvalidParams("subspace count must divide dim"));
        }
        if centroids.len() != dim * CENTROIDS {
            return Err(Error::InvalidParams("centroid table has the wrong size"));
        }
        if centroids.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { dim, m, sub_dim: dim / m, centroids })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn sub_dim(&self) -> usize {
        self.sub_dim
    }

    #[inline]
    pub fn centroid(&self, subspace: usize, c: usize) -> &[f32] {
        let start = (subspace * CENTROIDS + c) * self.sub_dim;
        &self.centroids[start..start + self.sub_dim]
    }

    fn check_dim(&self, v: &[f32]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: v.len() });
        }
        Ok(())
    }

    /// Nearest centroid per subspace; ties go to the lowest centroid index.
    pub fn encode_into(&self, v: &[f32], out: &mut [u8]) -> Result<()> {
        self.check_dim(v)?;
        debug_assert_eq!(out.len(), self.m);
        for (s, slot) in out.iter_mut().enumerate() {
            let sub = &v[s * self.sub_dim..(s + 1) * self.sub_dim];
            *slot = nearest(&self.centroids[s * CENTROIDS * self.sub_dim..], self.sub_dim, sub).0 as u8;
        }
        Ok(())
    }

    pub fn encode(&self, v: &[f32]) -> Result<PqCode> {
        let mut code = vec![0u8; self.m];
        self.encode_into(v, &mut code)?;
        Ok(PqCode(code))
    }

    pub fn decode(&self, code: &[u8]) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.dim);
        for (s, &c) in code.iter().enumerate() {
            out.extend_from_slice(self.centroid(s, c as usize));
        }
        out
    }

    pub fn distance_table(&self, q: &[f32]) -> Result<DistanceTable> {
        self.check_dim(q)?;
        let mut table = Vec::with_capacity(self.m * CENTROIDS);
        for s in 0..self.m {
            let sub = &q[s * self.sub_dim..(s + 1) * self.sub_dim];
            for c in 0..CENTROIDS {
                table.push(squared_l2(sub, self.centroid(s, c)));
            }
        }
        Ok(DistanceTable { m: self.m, table })
    }

    /// Centroid-to-centroid distances for code-to-code comparisons.
    pub fn symmetric_table(&self) -> SymmetricTable {
        let mut table = vec![0.0f32; self.m * CENTROIDS * CENTROIDS];
        for s in 0..self.m {
            for a in 0..CENTROIDS {
                for b in a..CENTROIDS {
                    let d = squared_l2(self.centroid(s, a), self.centroid(s, b));
                    table[(s * CENTROIDS + a) * CENTROIDS + b] = d;
                    table[(s * CENTROIDS + b) * CENTROIDS + a] = d;
                }
            }
        }
        SymmetricTable { m: self.m, table }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.centroids.len() * 4);
        out.extend_from_slice(MAGIC);
        for v in [VERSION, self.dim as u32, self.m as u32, CENTROIDS as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for c in &self.centroids {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..4] != MAGIC {
            return Err(Error::Corrupt("bad codebook header"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
        if word(0) != VERSION {
            return Err(Error::Corrupt("unsupported codebook version"));
        }
        let (dim, m, k) = (word(1) as usize, word(2) as usize, word(3) as usize);
        if k != CENTROIDS {
            return Err(Error::Corrupt("codebook must have 256 centroids per subspace"));
        }
        let body = &bytes[20..];
        if body.len() != dim * CENTROIDS * 4 {
            return Err(Error::Corrupt("codebook length does not match header"));
        }
        let centroids = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(dim, m, centroids)
    }
}

/// Per-query lookup: `m x 256` squared distances from the query's sub-vectors
/// to every centroid.
#[derive(Debug, Clone)]
pub struct DistanceTable {
    m: usize,
    table: Vec<f32>,
}

impl DistanceTable {
    #[inline]
    pub fn entry(&self, subspace: usize, centroid: usize) -> f32 {
        self.table[subspace * CENTROIDS + centroid]
    }

    #[inline]
    pub fn distance(&self, code: &[u8]) -> f32 {
        debug_assert_eq!(code.len(), self.m);
        let mut acc = 0.0f32;
        for (s, &c) in code.iter().enumerate() {
            acc += self.table[s * CENTROIDS + c as usize];
        }
        acc
    }

    pub fn m(&self) -> usize {
        self.m
    }
}

/// Pairwise centroid distances per subspace (`m x 256 x 256`).
#[derive(Debug, Clone)]
pub struct SymmetricTable {
    m: usize,
    table: Vec<f32>,
}

impl SymmetricTable {
    #[inline]
    pub fn distance(&self, a: &[u8], b: &[u8]) -> f32 {
        debug_assert_eq!(a.len(), self.m);
        let mut acc = 0.0f32;
        for s in 0..self.m {
            acc += self.table[(s * CENTROIDS + a[s] as usize) * CENTROIDS + b[s] as usize];
        }
        acc
    }
}

#[inline]
fn nearest(table: &[f32], sub_dim: usize, sub: &[f32]) -> (usize, f32) {
    let mut best = (0usize, f32::INFINITY);
    for c in 0..CENTROIDS {
        let d = squared_l2(sub, &table[c * sub_dim..(c + 1) * sub_dim]);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub m: usize,
    /// Lloyd iterations (upper bound; training stops early on convergence).
    pub iters: usize,
    pub seed: u64,
    /// Relative change in quantization error treated as converged.
    pub tolerance: f64,
}

impl TrainConfig {
    pub fn new(m: usize, seed: u64) -> Self {
        Self { m, iters: 25, seed, tolerance: 1e-5 }
    }
}

fn validate_training(data: &[f32], dim: usize, m: usize) -> Result<usize> {
    if dim == 0 || m == 0 || dim % m != 0 {
        return Err(Error::InvalidParams("subspace count must divide dim"));
    }
    if data.len() % dim != 0 {
        return Err(Error::DimensionMismatch { expected: dim, found: data.len() % dim });
    }
    let n = data.len() / dim;
    if n < MIN_TRAIN_SAMPLE {
        return Err(Error::SampleTooSmall { needed: MIN_TRAIN_SAMPLE, found: n });
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(n)
}

/// Trains every subspace sequentially. `data` is row-major with `dim` columns.
pub fn train(data: &[f32], dim: usize, cfg: &TrainConfig) -> Result<PqCodebook> {
    validate_training(data, dim, cfg.m)?;
    let mut centroids = Vec::with_capacity(dim * CENTROIDS);
    for s in 0..cfg.m {
        centroids.extend(train_subspace(data, dim, s, cfg, None)?);
    }
    PqCodebook::new(dim, cfg.m, centroids)
}

/// Assembles a codebook from independently trained subspace tables (for
/// callers that train subspaces in parallel).
pub fn assemble(dim: usize, m: usize, tables: Vec<Vec<f32>>) -> Result<PqCodebook> {
    let centroids = tables.into_iter().flatten().collect();
    PqCodebook::new(dim, m, centroids)
}

/// k-means (k = 256) over one subspace: k-means++ seeding from a seeded RNG,
/// Lloyd iterations, empty clusters re-seeded to the farthest points.
/// When `trace` is given, the quantization error observed at each assignment
/// step is appended to it.
pub fn train_subspace(
    data: &[f32],
    dim: usize,
    subspace: usize,
    cfg: &TrainConfig,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<Vec<f32>> {
    let n = validate_training(data, dim, cfg.m)?;
    let sub_dim = dim / cfg.m;
    let offset = subspace * sub_dim;
    let points: Vec<f32> = (0..n)
        .flat_map(|i| data[i * dim + offset..i * dim + offset + sub_dim].iter().copied())
        .collect();
    let point = |i: usize| &points[i * sub_dim..(i + 1) * sub_dim];

    let mut rng = ChaCha8Rng::seed_from_u64(
        cfg.seed ^ (subspace as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15),
    );
    let mut centroids = vec![0.0f32; CENTROIDS * sub_dim];

    // k-means++ seeding.
    let first = (rng.next_u64() % n as u64) as usize;
    centroids[..sub_dim].copy_from_slice(point(first));
    let mut d2: Vec<f32> = (0..n).map(|i| squared_l2(point(i), point(first))).collect();
    for c in 1..CENTROIDS {
        let total: f64 = d2.iter().map(|&d| d as f64).sum();
        let pick = if total > 0.0 {
            let target = unit_f64(&mut rng) * total;
            let mut acc = 0.0f64;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d as f64;
                if acc > target && d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            if d2[chosen] == 0.0 {
                // Rounding pushed past the end; take the last positive weight.
                chosen = d2.iter().rposition(|&d| d > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            (rng.next_u64() % n as u64) as usize
        };
        centroids[c * sub_dim..(c + 1) * sub_dim].copy_from_slice(point(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            let nd = squared_l2(point(i), point(pick));
            if nd < *d {
                *d = nd;
            }
        }
    }

    let mut assign = vec![0usize; n];
    let mut dist = vec![0.0f32; n];
    let mut prev_err: Option<f64> = None;
    for _ in 0..cfg.iters.max(1) {
        let mut err = 0.0f64;
        for i in 0..n {
            let (c, d) = nearest(&centroids, sub_dim, point(i));
            assign[i] = c;
            dist[i] = d;
            err += d as f64;
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(err);
        }
        if err == 0.0 {
            break;
        }
        if let Some(prev) = prev_err {
            if (prev - err).abs() <= cfg.tolerance * prev {
                break;
            }
        }
        prev_err = Some(err);

        let mut sums = vec![0.0f64; CENTROIDS * sub_dim];
        let mut counts = vec![0usize; CENTROIDS];
        for i in 0..n {
            let c = assign[i];
            counts[c] += 1;
            for (acc, &x) in sums[c * sub_dim..(c + 1) * sub_dim].iter_mut().zip(point(i)) {
                *acc += x as f64;
            }
        }
        for c in 0..CENTROIDS {
            if counts[c] == 0 {
                continue;
            }
            for j in 0..sub_dim {
                centroids[c * sub_dim + j] = (sums[c * sub_dim + j] / counts[c] as f64) as f32;
            }
        }
        for c in 0..CENTROIDS {
            if counts[c] != 0 {
                continue;
            }
            let far = (0..n)
                .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
                .unwrap_or(0);
            if dist[far] == 0.0 {
                break;
            }
            centroids[c * sub_dim..(c + 1) * sub_dim].copy_from_slice(point(far));
            dist[far] = 0.0;
        }
    }
    Ok(centroids)
}

#[inline]
fn unit_f64(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Builds a codebook whose centroids are exactly the distinct sub-vectors of
/// `data`, so PQ distances equal exact distances for every dataset vector.
/// Fails when a subspace has more than 256 distinct sub-vectors.
pub fn identity_codebook(data: &[f32], dim: usize, m: usize) -> Result<PqCodebook> {
    if dim == 0 || m == 0 || dim % m != 0 {
        return Err(Error::InvalidParams("subspace count must divide dim"));
    }
    if data.is_empty() || data.len() % dim != 0 {
        return Err(Error::InvalidParams("dataset must hold at least one full vector"));
    }
    let sub_dim = dim / m;
    let n = data.len() / dim;
    let mut centroids = Vec::with_capacity(dim * CENTROIDS);
    for s in 0..m {
        let mut seen: BTreeMap<Vec<u32>, usize> = BTreeMap::new();
        let mut table: Vec<f32> = Vec::new();
        for i in 0..n {
            let sub = &data[i * dim + s * sub_dim..i * dim + (s + 1) * sub_dim];
            let key: Vec<u32> = sub.iter().map(|x| x.to_bits()).collect();
            if !seen.contains_key(&key) {
                seen.insert(key, seen.len());
                table.extend_from_slice(sub);
            }
        }
        let distinct = seen.len();
        if distinct > CENTROIDS {
            return Err(Error::Unrepresentable { subspace: s, distinct });
        }
        let first: Vec<f32> = table[..sub_dim].to_vec();
        for _ in distinct..CENTROIDS {
            table.extend_from_slice(&first);
        }
        centroids.extend(table);
    }
    PqCodebook::new(dim, m, centroids)
}

/// Deterministic sample of at most `max` row indices out of `n`.
pub fn sample_rows(n: usize, max: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    if n <= max {
        return idx;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..max {
        let j = i + (rng.next_u64() % (n - i) as u64) as usize;
        idx.swap(i, j);
    }
    idx.truncate(max);
    idx.sort_unstable();
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::l2_distance;

    fn lcg(seed: &mut u64) -> f32 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 40) as f32 / (1u64 << 24) as f32) * 2.0 - 1.0
    }

    fn gaussianish(n: usize, dim: usize, seed: u64) -> Vec<f32> {
        let mut s = seed;
        (0..n * dim).map(|_| (0..4).map(|_| lcg(&mut s)).sum::<f32>()).collect()
    }

    #[test]
    fn distinct_sample_of_256_is_quantized_exactly() {
        let dim = 3;
        let data: Vec<f32> = (0..256).flat_map(|i| [i as f32, (i * 7 % 13) as f32, -(i as f32) / 2.0]).collect();
        let cb = train(&data, dim, &TrainConfig::new(1, 11)).unwrap();
        for row in data.chunks(dim) {
            let code = cb.encode(row).unwrap();
            assert_eq!(cb.decode(&code.0), row);
        }
    }

    #[test]
    fn identical_vectors_share_one_code() {
        let dim = 4;
        let data: Vec<f32> = (0..300).flat_map(|_| [1.5f32, -2.0, 0.25, 8.0]).collect();
        for m in [1, 2, 4] {
            let cb = train(&data, dim, &TrainConfig::new(m, 3)).unwrap();
            let first = cb.encode(&data[..dim]).unwrap();
            for row in data.chunks(dim) {
                let code = cb.encode(row).unwrap();
                assert_eq!(code, first);
                assert_eq!(l2_distance(&cb.decode(&code.0), row).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn lloyd_error_is_non_increasing() {
        let data = gaussianish(2000, 2, 99);
        let cfg = TrainConfig { m: 1, iters: 25, seed: 5, tolerance: 0.0 };
        let mut trace = Vec::new();
        train_subspace(&data, 2, 0, &cfg, Some(&mut trace)).unwrap();
        assert!(trace.len() >= 2, "expected several Lloyd iterations, got {trace:?}");
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9), "error increased: {w:?}");
        }
    }

    #[test]
    fn training_rejects_small_sample_and_bad_m() {
        let data = gaussianish(100, 4, 1);
        assert!(matches!(
            train(&data, 4, &TrainConfig::new(2, 0)),
            Err(Error::SampleTooSmall { needed: 256, found: 100 })
        ));
        let data = gaussianish(300, 4, 1);
        assert!(matches!(train(&data, 4, &TrainConfig::new(3, 0)), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn training_is_deterministic() {
        let data = gaussianish(600, 4, 8);
        let a = train(&data, 4, &TrainConfig::new(2, 42)).unwrap();
        let b = train(&data, 4, &TrainConfig::new(2, 42)).unwrap();
        assert_eq!(a, b);
    }

    fn scalar_codebook(values: &[f32]) -> PqCodebook {
        let mut c = Vec::with_capacity(CENTROIDS);
        for i in 0..CENTROIDS {
            c.push(*values.get(i).unwrap_or(values.last().unwrap()));
        }
        PqCodebook::new(1, 1, c).unwrap()
    }

    #[test]
    fn encode_picks_nearest_centroid() {
        let values: Vec<f32> = (0..256).map(|i| i as f32).collect();
        let cb = scalar_codebook(&values);
        assert_eq!(cb.encode(&[0.4]).unwrap().0, vec![0]);
        assert_eq!(cb.encode(&[0.6]).unwrap().0, vec![1]);
        // Equidistant: the lower index wins.
        assert_eq!(cb.encode(&[2.5]).unwrap().0, vec![2]);
        assert!(matches!(cb.encode(&[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn encode_is_optimal_over_all_codes() {
        // Tiny codebook, m = 2: brute force over all 256^2 codes.
        let dim = 2;
        let data = gaussianish(400, dim, 17);
        let cb = train(&data, dim, &TrainConfig { m: 2, iters: 3, seed: 1, tolerance: 0.0 }).unwrap();
        let mut s = 1234u64;
        for _ in 0..5 {
            let v = [lcg(&mut s) * 3.0, lcg(&mut s) * 3.0];
            let code = cb.encode(&v).unwrap();
            let err = l2_distance(&cb.decode(&code.0), &v).unwrap();
            for a in 0..256u32 {
                for b in 0..256u32 {
                    let alt = cb.decode(&[a as u8, b as u8]);
                    assert!(err <= l2_distance(&alt, &v).unwrap());
                }
            }
            assert_eq!(cb.encode(&cb.decode(&code.0)).unwrap(), code);
        }
    }

    #[test]
    fn distance_table_examples() {
        let cb = PqCodebook::new(2, 1, vec![0.0; 2 * CENTROIDS]).unwrap();
        let t = cb.distance_table(&[3.0, 4.0]).unwrap();
        for c in 0..CENTROIDS {
            assert_eq!(t.entry(0, c), 25.0);
        }

        let values: Vec<f32> = (0..256).map(|i| i as f32 * 0.5).collect();
        let cb = scalar_codebook(&values);
        let t = cb.distance_table(&[3.0]).unwrap();
        assert_eq!(t.entry(0, 6), 0.0);
        assert_eq!(t.distance(&[6]), 0.0);
    }

    #[test]
    fn pq_distance_sums_table_entries() {
        let mut centroids = vec![0.0f32; 2 * CENTROIDS];
        centroids[3] = 1.5f32.sqrt();
        centroids[CENTROIDS + 9] = 2.5f32.sqrt();
        let cb = PqCodebook::new(2, 2, centroids).unwrap();
        let t = cb.distance_table(&[0.0, 0.0]).unwrap();
        let d = t.distance(&[3, 9]);
        assert!((d - 4.0).abs() < 1e-6);
        assert_eq!(t.entry(0, 3) + t.entry(1, 9), d);
    }

    #[test]
    fn table_distance_equals_reconstruction_distance() {
        // Integer-valued data keeps every partial sum exact, so the identity
        // holds bit-for-bit regardless of summation grouping.
        let dim = 4;
        let data: Vec<f32> = (0..300).flat_map(|i| [(i % 7) as f32, (i % 5) as f32, (i % 3) as f32, (i % 11) as f32]).collect();
        let cb = train(&data, dim, &TrainConfig::new(2, 9)).unwrap();
        let q = [1.0, -2.0, 3.0, 0.0];
        let t = cb.distance_table(&q).unwrap();
        for row in data.chunks(dim) {
            let code = cb.encode(row).unwrap();
            let recon = cb.decode(&code.0);
            assert_eq!(t.distance(&code.0), l2_distance(&q, &recon).unwrap());
        }
        // Random floats: equal up to summation-order rounding.
        let data = gaussianish(500, 8, 21);
        let cb = train(&data, 8, &TrainConfig::new(4, 2)).unwrap();
        let mut s = 77u64;
        for _ in 0..20 {
            let q: Vec<f32> = (0..8).map(|_| lcg(&mut s)).collect();
            let t = cb.distance_table(&q).unwrap();
            let row = &data[..8];
            let code = cb.encode(row).unwrap();
            let exact = l2_distance(&q, &cb.decode(&code.0)).unwrap();
            assert!((t.distance(&code.0) - exact).abs() <= 1e-4 * exact.max(1.0));
        }
    }

    #[test]
    fn symmetric_table_matches_decoded_distance() {
        let data = gaussianish(400, 4, 3);
        let cb = train(&data, 4, &TrainConfig { m: 2, iters: 2, seed: 3, tolerance: 0.0 }).unwrap();
        let sdc = cb.symmetric_table();
        let a = cb.encode(&data[..4]).unwrap();
        let b = cb.encode(&data[4..8]).unwrap();
        let exact = l2_distance(&cb.decode(&a.0), &cb.decode(&b.0)).unwrap();
        assert!((sdc.distance(&a.0, &b.0) - exact).abs() < 1e-4);
        assert_eq!(sdc.distance(&a.0, &a.0), 0.0);
    }

    #[test]
    fn identity_codebook_is_lossless() {
        let dim = 3;
        let data: Vec<f32> = (0..100).flat_map(|i| [i as f32 * 0.37, (i * i % 17) as f32, -1.0 * i as f32]).collect();
        let cb = identity_codebook(&data, dim, 1).unwrap();
        for q in data.chunks(dim) {
            let t = cb.distance_table(q).unwrap();
            for v in data.chunks(dim) {
                let code = cb.encode(v).unwrap();
                assert_eq!(t.distance(&code.0), l2_distance(q, v).unwrap());
            }
        }
        // A query outside the dataset is still exact for dataset vectors.
        let q = [0.5, 0.25, 9.0];
        let t = cb.distance_table(&q).unwrap();
        for v in data.chunks(dim) {
            assert_eq!(t.distance(&cb.encode(v).unwrap().0), l2_distance(&q, v).unwrap());
        }
    }

    #[test]
    fn identity_codebook_capacity_bound() {
        let data: Vec<f32> = (0..300).flat_map(|i| [i as f32, 0.0]).collect();
        assert!(matches!(identity_codebook(&data, 2, 1), Err(Error::Unrepresentable { subspace: 0, distinct: 300 })));
        // Scalar mode still fails on coordinate 0 (300 distinct scalars).
        assert!(identity_codebook(&data, 2, 2).is_err());
        let data: Vec<f32> = (0..300).flat_map(|i| [(i % 200) as f32, (i / 200) as f32]).collect();
        assert!(identity_codebook(&data, 2, 2).is_ok());
    }

    #[test]
    fn codebook_bytes_round_trip() {
        let data = gaussianish(300, 4, 12);
        let cb = train(&data, 4, &TrainConfig { m: 2, iters: 2, seed: 0, tolerance: 0.0 }).unwrap();
        let bytes = cb.to_bytes();
        assert_eq!(&bytes[..4], b"NVPQ");
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 256);
        assert_eq!(bytes.len(), 20 + 4 * 256 * 4);
        assert_eq!(PqCodebook::from_bytes(&bytes).unwrap(), cb);
        assert!(PqCodebook::from_bytes(&bytes[..100]).is_err());
    }

    #[test]
    fn sample_rows_is_bounded_and_deterministic() {
        assert_eq!(sample_rows(5, 10, 1), vec![0, 1, 2, 3, 4]);
        let a = sample_rows(1000, 100, 7);
        assert_eq!(a.len(), 100);
        assert_eq!(a, sample_rows(1000, 100, 7));
        assert!(a.windows(2).all(|w| w[0] < w[1]));
    }
}
