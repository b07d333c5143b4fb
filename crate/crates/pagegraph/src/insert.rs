//! Insertion: position seeking, neighbor selection, reciprocal wiring under
//! page locks, the storage commit, and the entrance-graph update. Also the
//! bulk build, which is the same insert path run with explicit ids.

use std::collections::{HashMap, HashSet};
use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use pagegraph_core::entrance::reciprocal_list;
use pagegraph_core::model::{check_vector, rank_cmp, squared_l2};
use pagegraph_core::pq::{self, PqCodebook, TrainConfig};
use pagegraph_core::prune::alpha_prune;
use pagegraph_core::placement::greedy_placement;
use pagegraph_core::VertexId;

use crate::entrance::{EntranceGraph, NavisOutcome};
use crate::error::{Error, Result};
use crate::index::{Index, IndexParams, RerankMode};
use crate::io::Device;
use crate::search::SearchOptions;
use crate::stats::{CommitStats, TraversalStats};
use crate::storage::Store;

#[derive(Debug, Clone, Default)]
pub struct InsertOptions {
    /// Use this id instead of allocating one (bulk build).
    pub id: Option<VertexId>,
    /// Start the traversal here instead of at entrance-graph entry points.
    pub entries: Option<Vec<VertexId>>,
    /// Override the index's rerank mode.
    pub mode: Option<RerankMode>,
    pub skip_entrance: bool,
}

#[derive(Debug, Clone, Default)]
pub struct InsertStats {
    pub position_seek: Duration,
    pub structural: Duration,
    pub ent_update: Duration,
    pub total: Duration,
    /// Reads made by position seeking, with bytes classified.
    pub seek: TraversalStats,
    /// Edge pages read under the page locks.
    pub structural_reads: TraversalStats,
    pub commit: CommitStats,
    pub degree: usize,
    /// Final neighbors chosen by exact distance.
    pub exact_part: usize,
    pub neighbors_rewritten: usize,
    pub entrance: Option<NavisOutcome>,
    pub commit_seq: u64,
}

#[derive(Debug, Clone)]
pub struct InsertOutcome {
    pub id: VertexId,
    pub stats: InsertStats,
}

impl Index {
    pub fn insert(&self, vector: &[f32]) -> Result<InsertOutcome> {
        self.insert_with(vector, &InsertOptions::default())
    }

    pub fn insert_with(&self, vector: &[f32], opts: &InsertOptions) -> Result<InsertOutcome> {
        let started = Instant::now();
        check_vector(vector, self.params.dim)?;
        let id = match opts.id {
            Some(id) => {
                self.next_id.fetch_max(id.0 + 1, Ordering::AcqRel);
                id
            }
            None => self.allocate_id()?,
        };
        self.quant.assign(id, vector)?;
        let table = self.quant.table(vector)?;
        let mut st = InsertStats::default();
        let r = self.params.max_degree;
        let mode = opts.mode.unwrap_or(self.params.rerank);
        let search_opts = SearchOptions { mode, ..self.pos_options() };

        // Position seeking.
        let (p, seek_ctx) = {
            let _read = self.store.read_lock();
            let mut ctx = self.store.new_ctx();
            let p = self.pipeline(vector, &table, &search_opts, opts.entries.as_deref(), &mut ctx)?;
            (p, ctx)
        };
        st.position_seek = started.elapsed();

        // Neighbor selection: every exact distance first, then the rest of
        // the pool in PQ order.
        let structural_start = Instant::now();
        let mut loaded: HashMap<VertexId, &[f32]> = HashMap::with_capacity(p.rerank.exact.len() + 1);
        for ((v, _), vec) in p.rerank.exact.iter().zip(&p.rerank.vectors) {
            loaded.insert(*v, vec);
        }
        loaded.insert(id, vector);
        let dist = |a: VertexId, b: VertexId| -> f32 {
            match (loaded.get(&a), loaded.get(&b)) {
                (Some(x), Some(y)) => squared_l2(x, y),
                _ if a == id => self.quant.adc(&table, b),
                _ if b == id => self.quant.adc(&table, a),
                _ => self.quant.sdc(a, b),
            }
        };
        let mut exact: Vec<(VertexId, f32)> = p.rerank.exact.clone();
        exact.sort_by(|a, b| rank_cmp(a.1, a.0, b.1, b.0));
        let in_exact: HashSet<VertexId> = exact.iter().map(|e| e.0).collect();
        let mut combined = exact;
        combined.extend(p.pool.iter().filter(|c| !in_exact.contains(&c.id)).map(|c| (c.id, c.dist)));
        let list: Vec<VertexId> = if self.params.self_prune {
            alpha_prune(&combined, r, self.params.alpha, dist)
        } else {
            combined.iter().take(r).map(|c| c.0).collect()
        };
        st.degree = list.len();
        st.exact_part = list.iter().filter(|v| in_exact.contains(v)).count();

        let mut seek_ctx = seek_ctx;
        let useful: HashSet<VertexId> = list.iter().copied().filter(|v| in_exact.contains(v)).collect();
        self.store.classify_reads(&mut seek_ctx, &useful);
        st.seek = seek_ctx.stats;
        drop(seek_ctx);

        // Reciprocal wiring under the page locks.
        let lock = self.store.lock_for_update(&list)?;
        let mut ctx = self.store.new_ctx();
        let mut current = Vec::with_capacity(list.len());
        if !list.is_empty() {
            self.store.read_edgelists(&list, &mut ctx, &mut current)?;
        }
        let mut updates = Vec::new();
        for (&nb, cur) in list.iter().zip(&current) {
            let next = reciprocal_list(cur, id, r, self.params.alpha, |c| dist(nb, c), dist);
            if let Some(next) = next {
                let same = next.len() == cur.len() && next.iter().all(|v| cur.contains(v));
                if !same {
                    updates.push((nb, next));
                }
            }
        }
        st.neighbors_rewritten = updates.len();
        st.commit = self.store.commit_insert(&lock, id, vector, &list, &updates, &mut ctx.io)?;
        let seq = self.commit_seq.fetch_add(1, Ordering::AcqRel) + 1;
        self.seq_of.slot(id.index())[0].store(seq, Ordering::Release);
        self.live.fetch_add(1, Ordering::AcqRel);
        drop(lock);
        st.structural_reads = ctx.stats;
        st.commit_seq = seq;
        drop(ctx);
        st.structural = structural_start.elapsed();

        if !opts.skip_entrance && self.params.entrance_updates {
            let t = Instant::now();
            let pos: Vec<VertexId> = p.pool.iter().map(|c| c.id).collect();
            let ent: Vec<VertexId> = p.ent_pool.iter().map(|c| c.id).collect();
            st.entrance = Some(self.entrance().navis_update(id, &pos, &ent, self.len() as usize, &self.quant));
            st.ent_update = t.elapsed();
        }
        st.total = started.elapsed();
        Ok(InsertOutcome { id, stats: st })
    }

    /// Builds an index over `vectors` (row-major, `params.dim` columns):
    /// trains PQ, inserts the medoid and then every other vector in id order
    /// from the medoid, rewrites the edge pages in traversal-locality order,
    /// and samples the entrance graph. Deterministic for a fixed seed.
    pub fn build(vectors: &[f32], params: IndexParams, device: Arc<dyn Device>, dir: Option<std::path::PathBuf>) -> Result<Self> {
        params.validate()?;
        let dim = params.dim;
        if vectors.is_empty() {
            return Err(Error::EmptyIndex);
        }
        if vectors.len() % dim != 0 {
            return Err(Error::Config(format!("{} floats is not a whole number of {dim}-d vectors", vectors.len())));
        }
        let n = vectors.len() / dim;
        let book = train_codebook(vectors, &params)?;
        let index = Index::create(params, book, device, dir)?;
        let row = |i: usize| &vectors[i * dim..(i + 1) * dim];

        let medoid = medoid(vectors, dim, index.params.seed);
        index.medoid.store(medoid.0, Ordering::Release);
        index.store.set_exclusive(true);
        let entries = vec![medoid];
        let started = Instant::now();
        for i in std::iter::once(medoid.index()).chain((0..n).filter(|&i| i != medoid.index())) {
            let opts = InsertOptions {
                id: Some(VertexId(i as u32)),
                entries: Some(entries.clone()),
                mode: None,
                skip_entrance: true,
            };
            index.insert_with(row(i), &opts)?;
            if (i + 1) % 10_000 == 0 {
                log::info!("built {} / {n} vertices in {:.1?}", i + 1, started.elapsed());
            }
        }

        if let Store::Decoupled(s) = &index.store {
            let mut ctx = index.store.new_ctx();
            let ids: Vec<VertexId> = (0..n as u32).map(VertexId).collect();
            let mut adj = Vec::with_capacity(n);
            for chunk in ids.chunks(256) {
                let mut out = Vec::new();
                index.store.read_edgelists(chunk, &mut ctx, &mut out)?;
                adj.extend(out);
                if ctx.stats.edge_pages_read > 4096 {
                    ctx = index.store.new_ctx();
                }
            }
            drop(ctx);
            let pages = greedy_placement(&adj, medoid, s.edge_geometry().slots_per_page);
            let rows: Vec<Vec<f32>> = (0..n).map(|i| row(i).to_vec()).collect();
            s.relayout(&pages, &adj, &rows)?;
        }
        index.store.set_exclusive(false);

        let ids: Vec<VertexId> = (0..n as u32).map(VertexId).collect();
        let ent = EntranceGraph::build(index.params.entrance, &ids, index.params.seed, &index.quant)?;
        index.set_entrance(ent);
        index.commit_seq.store(0, Ordering::Release);
        for i in 0..n {
            index.seq_of.slot(i)[0].store(0, Ordering::Release);
        }
        index.flush()?;
        log::info!("built {n} vertices in {:.1?}", started.elapsed());
        Ok(index)
    }
}

/// Trains the PQ codebook (subspaces in parallel) or, for `pq_identity` and
/// corpora too small to train on, builds the lossless identity codebook.
pub fn train_codebook(vectors: &[f32], params: &IndexParams) -> Result<PqCodebook> {
    let dim = params.dim;
    let n = vectors.len() / dim;
    if params.pq_identity || n < pq::MIN_TRAIN_SAMPLE {
        return Ok(pq::identity_codebook(vectors, dim, params.pq_m)?);
    }
    let rows = pq::sample_rows(n, params.train_sample.max(pq::MIN_TRAIN_SAMPLE), params.seed);
    let sample: Vec<f32> = rows.iter().flat_map(|&i| vectors[i * dim..(i + 1) * dim].iter().copied()).collect();
    let cfg = TrainConfig::new(params.pq_m, params.seed);
    let tables = (0..params.pq_m)
        .into_par_iter()
        .map(|s| pq::train_subspace(&sample, dim, s, &cfg, None))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(pq::assemble(dim, params.pq_m, tables)?)
}

/// The vector with the smallest summed distance to a seeded sample of at most
/// 1,000 vectors (ties: lower id).
pub fn medoid(vectors: &[f32], dim: usize, seed: u64) -> VertexId {
    let n = vectors.len() / dim;
    let sample = pq::sample_rows(n, 1000, seed ^ 0x6d65_646f_6964);
    let row = |i: usize| &vectors[i * dim..(i + 1) * dim];
    let best = (0..n)
        .into_par_iter()
        .map(|i| {
            let total: f64 = sample.iter().map(|&j| squared_l2(row(i), row(j)) as f64).sum();
            (total, i)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .expect("non-empty input");
    VertexId(best.1 as u32)
}
