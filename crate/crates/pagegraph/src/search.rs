//! Query pipeline: entrance search, on-disk PQ beam traversal, then exact
//! reranking of the pool with full vectors.

use std::collections::HashSet;

use pagegraph_core::beam::{beam_search, GraphAccess};
use pagegraph_core::casr::{casr_rerank, group_size_from_counts, RerankResult};
use pagegraph_core::model::check_vector;
use pagegraph_core::pq::DistanceTable;
use pagegraph_core::{Candidate, VertexId};

use crate::error::{Error, Result};
use crate::index::{Index, RerankMode, RerankPath};
use crate::quant::Quantizer;
use crate::stats::TraversalStats;
use crate::storage::{ReadCtx, Store};

/// Beam-search view of the on-disk graph: PQ distances for live vertices,
/// adjacency through the storage read path.
pub struct DiskGraph<'a> {
    pub store: &'a Store,
    pub quant: &'a Quantizer,
    pub table: &'a DistanceTable,
    pub ctx: &'a mut ReadCtx,
}

impl GraphAccess for DiskGraph<'_> {
    type Error = Error;

    fn distance(&mut self, v: VertexId) -> Option<f32> {
        self.store.is_live(v).then(|| self.quant.adc(self.table, v))
    }

    fn expand(&mut self, batch: &[VertexId], out: &mut Vec<Vec<VertexId>>) -> Result<()> {
        self.store.read_edgelists(batch, self.ctx, out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchOptions {
    pub top_k: usize,
    pub pool: usize,
    pub beam_width: usize,
    pub mode: RerankMode,
    /// Reranking group size; ignored in full mode.
    pub group: usize,
}

/// Everything one pass of the pipeline produced.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub entries: Vec<VertexId>,
    /// Entrance-graph explored pool, ascending by PQ distance.
    pub ent_pool: Vec<Candidate>,
    /// On-disk explored pool, ascending by PQ distance.
    pub pool: Vec<Candidate>,
    pub rerank: RerankResult,
    pub stats: TraversalStats,
    /// Vector pages read before reranking started (always zero).
    pub traversal_vector_pages: u64,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    /// Top-K ids with exact squared distances.
    pub results: Vec<(VertexId, f32)>,
    pub stats: TraversalStats,
    pub vectors_consumed: usize,
}

impl Index {
    pub fn search_options(&self) -> SearchOptions {
        SearchOptions {
            top_k: self.params.top_k,
            pool: self.params.l_search,
            beam_width: self.params.beam_width,
            mode: self.params.rerank,
            group: self.group_size(RerankPath::Search),
        }
    }

    pub fn pos_options(&self) -> SearchOptions {
        SearchOptions {
            top_k: self.params.top_k,
            pool: self.params.l_pos,
            beam_width: self.params.beam_width,
            mode: self.params.rerank,
            group: self.group_size(RerankPath::Pos),
        }
    }

    /// Runs the three stages and leaves byte classification to the caller.
    /// `entries` overrides the entrance graph (bulk build).
    pub(crate) fn pipeline(
        &self,
        q: &[f32],
        table: &DistanceTable,
        opts: &SearchOptions,
        entries: Option<&[VertexId]>,
        ctx: &mut ReadCtx,
    ) -> Result<Pipeline> {
        let (entries, ent_pool) = match entries {
            Some(e) => (e.to_vec(), Vec::new()),
            None => self.entrance().select_entry_points(&self.quant, table),
        };
        let beam = {
            let mut g = DiskGraph { store: &self.store, quant: &self.quant, table, ctx: &mut *ctx };
            beam_search(&mut g, &entries, opts.pool, opts.beam_width)?
        };
        ctx.stats.hops += beam.hops as u64;
        ctx.stats.expanded += beam.expanded as u64;
        let traversal_vector_pages = ctx.stats.vector_pages_read;
        let pool = beam.pool.entries().to_vec();
        let sorted: Vec<VertexId> = pool.iter().map(|c| c.id).collect();
        let group = match opts.mode {
            RerankMode::Casr => opts.group.max(1),
            RerankMode::Full => sorted.len().max(1),
        };
        let rerank = casr_rerank(&mut self.store.loader(ctx), q, &sorted, opts.top_k, group)?;
        ctx.stats.vectors_consumed += rerank.consumed() as u64;
        ctx.stats.groups += rerank.groups_consumed as u64;
        let stats = ctx.stats;
        Ok(Pipeline { entries, ent_pool, pool, rerank, stats, traversal_vector_pages })
    }

    pub fn search(&self, q: &[f32]) -> Result<SearchOutcome> {
        self.search_with(q, &self.search_options())
    }

    pub fn search_with(&self, q: &[f32], opts: &SearchOptions) -> Result<SearchOutcome> {
        check_vector(q, self.params.dim)?;
        if self.is_empty() {
            return Err(Error::EmptyIndex);
        }
        let table = self.quant.table(q)?;
        let _read = self.store.read_lock();
        let mut ctx = self.store.new_ctx();
        let p = self.pipeline(q, &table, opts, None, &mut ctx)?;
        let useful: HashSet<VertexId> = p.rerank.top.iter().map(|t| t.0).collect();
        self.store.classify_reads(&mut ctx, &useful);
        Ok(SearchOutcome { results: p.rerank.top, stats: ctx.stats, vectors_consumed: p.rerank.exact.len() })
    }

    /// The insert path's read-only half: where would `v` go. Vectors in the
    /// converged top-K are counted as useful.
    pub fn position_seek(&self, v: &[f32], mode: RerankMode) -> Result<Pipeline> {
        check_vector(v, self.params.dim)?;
        let table = self.quant.table(v)?;
        let _read = self.store.read_lock();
        let mut ctx = self.store.new_ctx();
        let opts = SearchOptions { mode, ..self.pos_options() };
        let mut p = self.pipeline(v, &table, &opts, None, &mut ctx)?;
        let useful: HashSet<VertexId> = p.rerank.top.iter().map(|t| t.0).collect();
        self.store.classify_reads(&mut ctx, &useful);
        p.stats = ctx.stats;
        Ok(p)
    }

    /// Vectors consumed before the convergence stop fires with `s = 1`, one
    /// count per query (the whole pool when it never fires).
    pub fn convergence_counts(&self, queries: &[Vec<f32>], path: RerankPath) -> Result<Vec<usize>> {
        let base = match path {
            RerankPath::Search => self.search_options(),
            RerankPath::Pos => self.pos_options(),
        };
        let opts = SearchOptions { mode: RerankMode::Casr, group: 1, ..base };
        let mut counts = Vec::with_capacity(queries.len());
        for q in queries {
            check_vector(q, self.params.dim)?;
            let table = self.quant.table(q)?;
            let _read = self.store.read_lock();
            let mut ctx = self.store.new_ctx();
            let p = self.pipeline(q, &table, &opts, None, &mut ctx)?;
            counts.push(p.rerank.consumed());
        }
        Ok(counts)
    }

    /// Measures convergence on warm-up queries and stores the 25th-percentile
    /// count as the group size for `path`.
    pub fn calibrate(&self, queries: &[Vec<f32>], path: RerankPath) -> Result<usize> {
        if queries.is_empty() {
            return Err(Error::Config("calibration needs at least one warm-up query".into()));
        }
        if self.is_empty() {
            return Err(Error::EmptyIndex);
        }
        let counts = self.convergence_counts(queries, path)?;
        let max = match path {
            RerankPath::Search => self.params.l_search,
            RerankPath::Pos => self.params.l_pos,
        };
        let s = group_size_from_counts(&counts, max).expect("non-empty counts");
        self.set_group_size(path, s);
        log::info!("calibrated {path:?} group size to {s} from {} warm-up queries", counts.len());
        Ok(s)
    }
}
