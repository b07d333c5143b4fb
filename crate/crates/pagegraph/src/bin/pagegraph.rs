//! Command-line front end: datasets, index build, calibration, workloads,
//! cache-policy traces and the offline audit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};

use pagegraph::config::{parse_setting, ConfigFile};
use pagegraph::dataset::{self, Dataset, SyntheticSpec};
use pagegraph::io::{Device, FileDevice, IoMode};
use pagegraph::trace::{self, PolicyKind};
use pagegraph::workload::{self, Binning, RecallOracle, WorkloadMode, WorkloadSpec};
use pagegraph::{Error, Index, IndexParams, RerankPath, Result};

static STOP: AtomicBool = AtomicBool::new(false);

#[derive(Parser)]
#[command(name = "pagegraph", version, about = "Disk-resident graph vector index: build, benchmark, audit")]
struct Cli {
    /// Flat key=value file; command-line flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Convert an fvecs file into the internal dataset format.
    Ingest {
        /// fvecs file to read.
        #[arg(long)]
        input: PathBuf,
        /// Dataset file to write.
        #[arg(long)]
        output: PathBuf,
    },
    /// Write a seeded Gaussian-mixture dataset (.fvecs or .nvds by extension).
    GenSynthetic(GenArgs),
    /// Exact top-K for each query over the base set (plus an optional insert set).
    Groundtruth {
        /// Base dataset (.fvecs or internal format).
        #[arg(long)]
        base: PathBuf,
        /// Rows appended after the base; their ids continue the numbering.
        #[arg(long)]
        extra: Option<PathBuf>,
        /// Query dataset.
        #[arg(long)]
        queries: PathBuf,
        /// Neighbors per query.
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// ivecs output.
        #[arg(long)]
        output: PathBuf,
    },
    /// Build an index directory from a dataset.
    Build(BuildArgs),
    /// Measure reranking convergence on warm-up queries and store the group sizes.
    Calibrate {
        /// Index directory.
        #[arg(long)]
        index: PathBuf,
        /// Warm-up query dataset.
        #[arg(long)]
        queries: PathBuf,
        /// How many queries to use (from the front of the file).
        #[arg(long)]
        warmup_queries: Option<usize>,
        #[command(flatten)]
        open: OpenArgs,
    },
    /// Run a search, insert or mixed workload and write per-interval metrics.
    Run(RunArgs),
    /// Recompute a metrics report from a raw event log.
    Aggregate {
        /// Event log written by run.
        #[arg(long)]
        events: PathBuf,
        /// Metrics CSV to write.
        #[arg(long)]
        report: PathBuf,
        /// ivecs over base rows then insert rows.
        #[arg(long)]
        groundtruth: Option<PathBuf>,
        /// Vertices in the index before the run.
        #[arg(long)]
        base_len: Option<usize>,
        /// Recall depth.
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Metrics interval in wall time (default 1000).
        #[arg(long)]
        interval_ms: Option<u64>,
        /// Bin by operation count instead of wall time.
        #[arg(long)]
        interval_ops: Option<usize>,
    },
    /// Replay a page-access trace through cache policies and report hit rates.
    CacheTrace(TraceArgs),
    /// Audit every storage and graph invariant of an index directory.
    Verify {
        /// Index directory.
        #[arg(long)]
        index: PathBuf,
        #[command(flatten)]
        open: OpenArgs,
    },
}

#[derive(Args)]
struct GenArgs {
    /// Output path; .fvecs writes fvecs, anything else the internal format.
    #[arg(long)]
    output: PathBuf,
    /// Rows to generate.
    #[arg(long)]
    n: usize,
    /// Vector dimensionality.
    #[arg(long, default_value_t = 64)]
    dim: usize,
    /// Mixture seed; the same seed gives the same clusters.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// First row index (drifting streams continue where the base stopped).
    #[arg(long, default_value_t = 0)]
    start: usize,
    /// Independent sample of the same mixture (e.g. 1 for queries).
    #[arg(long, default_value_t = 0)]
    stream: u64,
    /// Mixture components.
    #[arg(long)]
    clusters: Option<usize>,
    /// Dimensionality of each cluster's local subspace.
    #[arg(long)]
    intrinsic_dim: Option<usize>,
    /// Spread of cluster centers.
    #[arg(long)]
    center_scale: Option<f32>,
    /// Isotropic noise added in the full space.
    #[arg(long)]
    noise: Option<f32>,
    /// Center displacement over `drift_span` rows, in units of the center scale.
    #[arg(long)]
    drift: Option<f32>,
    /// Rows over which the full drift accrues.
    #[arg(long)]
    drift_span: Option<usize>,
}

#[derive(Args)]
struct BuildArgs {
    /// Dataset to index.
    #[arg(long)]
    data: PathBuf,
    /// Index directory to create.
    #[arg(long)]
    out: PathBuf,
    /// decoupled or packed.
    #[arg(long)]
    layout: Option<String>,
    /// Maximum out-degree R.
    #[arg(long)]
    max_degree: Option<usize>,
    /// PQ subspaces (must divide dim).
    #[arg(long)]
    pq_m: Option<usize>,
    /// Explored-set size for searches.
    #[arg(long)]
    l_search: Option<usize>,
    /// Explored-set size for insert position seeking.
    #[arg(long)]
    l_pos: Option<usize>,
    /// Results per search.
    #[arg(long)]
    top_k: Option<usize>,
    /// Vertices expanded per traversal round.
    #[arg(long)]
    beam_width: Option<usize>,
    /// Pruning slack (at least 1).
    #[arg(long)]
    alpha: Option<f32>,
    /// Edge-page cache capacity in pages.
    #[arg(long)]
    cache_pages: Option<usize>,
    /// Seed for sampling, training and build order.
    #[arg(long)]
    seed: Option<u64>,
    /// Keep the first R candidates of the new vertex's list without pruning.
    #[arg(long)]
    no_self_prune: bool,
    /// Lossless identity codebook (small corpora only).
    #[arg(long)]
    pq_identity: bool,
    /// Any other index setting, as key=value (repeatable).
    #[arg(long = "set", value_parser = parse_setting)]
    settings: Vec<(String, String)>,
    /// direct or buffered.
    #[arg(long)]
    io: Option<String>,
}

#[derive(Args)]
struct OpenArgs {
    /// direct or buffered.
    #[arg(long)]
    io: Option<String>,
    /// Runtime index setting overrides, as key=value (repeatable).
    #[arg(long = "set", value_parser = parse_setting)]
    settings: Vec<(String, String)>,
}

#[derive(Args)]
struct RunArgs {
    /// Index directory.
    #[arg(long)]
    index: PathBuf,
    /// search-only, insert-only or concurrent.
    #[arg(long)]
    mode: Option<String>,
    /// Search workers.
    #[arg(long)]
    search_threads: Option<usize>,
    /// Insert workers.
    #[arg(long)]
    insert_threads: Option<usize>,
    /// Query dataset.
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Vectors to insert, in order.
    #[arg(long)]
    inserts: Option<PathBuf>,
    /// ivecs over base rows then insert rows; recall is omitted without it.
    #[arg(long)]
    groundtruth: Option<PathBuf>,
    /// Stop after this many seconds.
    #[arg(long)]
    duration_s: Option<f64>,
    /// Searches in search-only mode (default: one pass over the queries).
    #[arg(long)]
    search_ops: Option<usize>,
    /// Inserts to perform (default: the whole insert set).
    #[arg(long)]
    insert_ops: Option<usize>,
    /// Metrics CSV; the raw event log goes next to it as <report>.events.csv.
    #[arg(long)]
    report: PathBuf,
    /// Metrics interval in wall time (default 1000).
    #[arg(long)]
    interval_ms: Option<u64>,
    /// Bin by operation count instead of wall time.
    #[arg(long)]
    interval_ops: Option<usize>,
    /// Seed for the query order.
    #[arg(long)]
    workload_seed: Option<u64>,
    #[command(flatten)]
    open: OpenArgs,
}

#[derive(Args)]
struct TraceArgs {
    /// navis, lru, lfu, clock or all.
    #[arg(long, default_value = "all")]
    policy: String,
    /// Cache capacity in pages.
    #[arg(long)]
    capacity: usize,
    /// Text trace, one page number per line. Without it a synthetic trace is generated.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// skewed, scan or repeat.
    #[arg(long, default_value = "skewed")]
    synthetic: String,
    /// Distinct pages in a synthetic trace.
    #[arg(long, default_value_t = 20_000)]
    pages: u64,
    /// Hot-set size for the skewed trace.
    #[arg(long)]
    hot_pages: Option<u64>,
    /// Share of skewed accesses that go to the hot set.
    #[arg(long, default_value_t = 0.8)]
    hot_prob: f64,
    /// Accesses in a synthetic trace.
    #[arg(long, default_value_t = 400_000)]
    len: usize,
    /// Seed for the synthetic trace.
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = ctrlc::set_handler(|| {
        if STOP.swap(true, Ordering::SeqCst) {
            std::process::exit(130);
        }
        eprintln!("stopping: draining in-flight operations (Ctrl-C again to abort)");
    }) {
        log::warn!("cannot install the Ctrl-C handler: {e}");
    }
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    let conf = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    match cli.cmd {
        Cmd::Ingest { input, output } => {
            let ds = dataset::read_fvecs(&input)?;
            save(&output, &ds)?;
            println!("ingested {} vectors of dim {} into {}", ds.len(), ds.dim, output.display());
        }
        Cmd::GenSynthetic(a) => gen_synthetic(a)?,
        Cmd::Groundtruth { base, extra, queries, k, output } => {
            let mut base = dataset::load(&base)?;
            if let Some(extra) = extra {
                let extra = dataset::load(&extra)?;
                if extra.dim != base.dim {
                    return Err(Error::Config("base and extra sets differ in dimension".into()));
                }
                base.data.extend_from_slice(&extra.data);
            }
            let queries = dataset::load(&queries)?;
            if queries.dim != base.dim {
                return Err(Error::Config("queries and base differ in dimension".into()));
            }
            let t = Instant::now();
            let gt = dataset::ground_truth(&base, &queries, k);
            dataset::write_ivecs(&output, &gt)?;
            println!("{} queries x top-{k} over {} vectors in {:.1?}", gt.len(), base.len(), t.elapsed());
        }
        Cmd::Build(a) => build(a, &conf)?,
        Cmd::Calibrate { index, queries, warmup_queries, open } => {
            let idx = open_index(&index, &open, &conf)?;
            let n = conf.layered(warmup_queries, "warmup_queries", 100)?;
            let qs = dataset::load(&queries)?.to_rows();
            let qs = &qs[..n.min(qs.len())];
            let s = idx.calibrate(qs, RerankPath::Search)?;
            let p = idx.calibrate(qs, RerankPath::Pos)?;
            idx.flush()?;
            println!("calibrated on {} queries: s_search={s} s_pos={p}", qs.len());
        }
        Cmd::Run(a) => run(a, &conf)?,
        Cmd::Aggregate { events, report, groundtruth, base_len, k, interval_ms, interval_ops } => {
            let evs = workload::read_events(BufReader::new(open_file(&events)?))?;
            let oracle = match (groundtruth, base_len) {
                (Some(gt), Some(base_len)) => Some(RecallOracle { base_len, k, truth: dataset::read_ivecs(&gt)? }),
                (Some(_), None) => return Err(Error::Config("--groundtruth needs --base-len".into())),
                _ => None,
            };
            let rep = workload::aggregate(&evs, binning(&conf, interval_ms, interval_ops)?, oracle.as_ref());
            rep.write_csv(BufWriter::new(create_file(&report)?))?;
            println!("{}", rep.summary());
        }
        Cmd::CacheTrace(a) => cache_trace(a)?,
        Cmd::Verify { index, open } => {
            let idx = open_index(&index, &open, &conf)?;
            let rep = idx.verify()?;
            println!("{rep}");
            if !rep.passed() {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn open_file(p: &Path) -> Result<File> {
    File::open(p).map_err(|source| Error::File { path: p.to_path_buf(), source })
}

fn create_file(p: &Path) -> Result<File> {
    File::create(p).map_err(|source| Error::File { path: p.to_path_buf(), source })
}

fn save(path: &Path, ds: &Dataset) -> Result<()> {
    if path.extension().is_some_and(|e| e == "fvecs") {
        dataset::write_fvecs(path, ds)
    } else {
        dataset::write_nvds(path, ds)
    }
}

fn io_mode(conf: &ConfigFile, flag: Option<String>) -> Result<IoMode> {
    match conf.layered(flag, "io", "direct".to_string())?.as_str() {
        "direct" => Ok(IoMode::Direct),
        "buffered" => Ok(IoMode::Buffered),
        other => Err(Error::Config(format!("io must be direct or buffered, got {other:?}"))),
    }
}

fn binning(conf: &ConfigFile, ms: Option<u64>, ops: Option<usize>) -> Result<Binning> {
    Ok(match conf.optional(ops, "interval_ops")? {
        Some(n) => Binning::Ops(n),
        None => Binning::Time(Duration::from_millis(conf.layered(ms, "interval_ms", 1000)?)),
    })
}

fn gen_synthetic(a: GenArgs) -> Result<()> {
    let mut spec = SyntheticSpec::new(a.dim, a.seed);
    if let Some(v) = a.clusters {
        spec.clusters = v;
    }
    if let Some(v) = a.intrinsic_dim {
        spec.intrinsic_dim = v;
    }
    if let Some(v) = a.center_scale {
        spec.center_scale = v;
    }
    if let Some(v) = a.noise {
        spec.noise = v;
    }
    if let Some(v) = a.drift {
        spec.drift = v;
    }
    if let Some(v) = a.drift_span {
        spec.drift_span = v;
    }
    if spec.dim == 0 || spec.clusters == 0 {
        return Err(Error::Config("dim and clusters must be positive".into()));
    }
    let ds = dataset::synthetic(&spec, a.start, a.n, a.stream);
    save(&a.output, &ds)?;
    println!("wrote {} x {} to {}", ds.len(), ds.dim, a.output.display());
    Ok(())
}

fn build(a: BuildArgs, conf: &ConfigFile) -> Result<()> {
    let data = dataset::load(&a.data)?;
    let mut params = IndexParams::new(data.dim);
    for (k, v) in conf.index_settings() {
        params.set(&k, &v)?;
    }
    let flags: [(&str, Option<String>); 10] = [
        ("layout", a.layout),
        ("max_degree", a.max_degree.map(|v| v.to_string())),
        ("pq_m", a.pq_m.map(|v| v.to_string())),
        ("l_search", a.l_search.map(|v| v.to_string())),
        ("l_pos", a.l_pos.map(|v| v.to_string())),
        ("top_k", a.top_k.map(|v| v.to_string())),
        ("beam_width", a.beam_width.map(|v| v.to_string())),
        ("alpha", a.alpha.map(|v| v.to_string())),
        ("cache_pages", a.cache_pages.map(|v| v.to_string())),
        ("seed", a.seed.map(|v| v.to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            params.set(k, &v)?;
        }
    }
    if a.no_self_prune {
        params.self_prune = false;
    }
    if a.pq_identity {
        params.pq_identity = true;
    }
    for (k, v) in &a.settings {
        params.set(k, v)?;
    }
    if params.dim != data.dim {
        return Err(Error::Config(format!("dim={} but the dataset has dimension {}", params.dim, data.dim)));
    }
    params.validate()?;
    let dir = dataset::ensure_dir(&a.out)?;
    for f in ["edges.bin", "vectors.bin"] {
        let p = dir.join(f);
        if p.exists() {
            std::fs::remove_file(&p).map_err(|source| Error::File { path: p, source })?;
        }
    }
    let device: Arc<dyn Device> = Arc::new(FileDevice::open(&dir, io_mode(conf, a.io)?)?);
    let t = Instant::now();
    let idx = Index::build(&data.data, params, device, Some(dir.clone()))?;
    println!("built {} vectors into {} in {:.1?}", idx.len(), dir.display(), t.elapsed());
    Ok(())
}

fn open_index(dir: &Path, open: &OpenArgs, conf: &ConfigFile) -> Result<Index> {
    let mut overrides = conf.index_settings();
    overrides.extend(open.settings.iter().cloned());
    Index::open(dir, io_mode(conf, open.io.clone())?, &overrides)
}

fn run(a: RunArgs, conf: &ConfigFile) -> Result<()> {
    let mode = WorkloadMode::parse(&conf.layered(a.mode, "mode", "search-only".to_string())?)?;
    let mut spec = WorkloadSpec::new(mode);
    spec.search_threads = conf.layered(a.search_threads, "search_threads", spec.search_threads)?;
    spec.insert_threads = conf.layered(a.insert_threads, "insert_threads", spec.insert_threads)?;
    spec.duration = conf.optional(a.duration_s, "duration_s")?.map(Duration::from_secs_f64);
    spec.search_ops = conf.optional(a.search_ops, "search_ops")?;
    spec.insert_ops = conf.optional(a.insert_ops, "insert_ops")?;
    spec.seed = conf.layered(a.workload_seed, "workload_seed", spec.seed)?;
    let bins = binning(conf, a.interval_ms, a.interval_ops)?;

    let idx = open_index(&a.index, &a.open, conf)?;
    let queries = a.queries.as_deref().map(dataset::load).transpose()?.map(|d| d.to_rows()).unwrap_or_default();
    let inserts = a.inserts.as_deref().map(dataset::load).transpose()?.map(|d| d.to_rows()).unwrap_or_default();
    let base_len = idx.allocated() as usize;
    let oracle = match &a.groundtruth {
        Some(p) => Some(RecallOracle { base_len, k: idx.params().top_k, truth: dataset::read_ivecs(p)? }),
        None => {
            if spec.mode != WorkloadMode::InsertOnly {
                log::warn!("no ground truth given: the recall column is omitted");
            }
            None
        }
    };
    if !idx.is_calibrated() {
        log::warn!("index is not calibrated: reranking uses group size top_k");
    }

    let t = Instant::now();
    let events = workload::run(&idx, &spec, &queries, &inserts, &STOP)?;
    let elapsed = t.elapsed();
    if STOP.load(Ordering::SeqCst) {
        log::warn!("interrupted after {elapsed:.1?}; keeping the {} completed operations", events.len());
    }
    if events.iter().any(|e| e.kind == workload::EventKind::Insert) {
        idx.flush()?;
    }
    let mut log_path = a.report.clone().into_os_string();
    log_path.push(".events.csv");
    let log_path = PathBuf::from(log_path);
    workload::write_events(BufWriter::new(create_file(&log_path)?), &events)?;
    let rep = workload::aggregate(&events, bins, oracle.as_ref());
    let mut out = BufWriter::new(create_file(&a.report)?);
    rep.write_csv(&mut out)?;
    out.flush()?;
    println!("{}", rep.summary());
    if rep.recall_unknown > 0 {
        println!("{} searches had no determinable recall (ground truth too shallow)", rep.recall_unknown);
    }
    println!("report: {}  events: {}  ({elapsed:.1?})", a.report.display(), log_path.display());
    Ok(())
}

fn cache_trace(a: TraceArgs) -> Result<()> {
    let accesses = match &a.trace {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| Error::File { path: p.clone(), source })?;
            trace::parse_trace(&text)?
        }
        None => match a.synthetic.as_str() {
            "skewed" => {
                let hot = a.hot_pages.unwrap_or(a.pages / 5);
                if hot == 0 || hot >= a.pages {
                    return Err(Error::Config("hot pages must be between 1 and pages - 1".into()));
                }
                trace::skewed_trace(a.pages, hot, a.hot_prob, a.len, a.seed)
            }
            "scan" => trace::scan_trace(0, a.pages, a.len.div_ceil(a.pages.max(1) as usize)),
            "repeat" => vec![0; a.len],
            other => return Err(Error::Config(format!("unknown synthetic trace {other:?}"))),
        },
    };
    let kinds: Vec<PolicyKind> = if a.policy == "all" { PolicyKind::ALL.to_vec() } else { vec![PolicyKind::parse(&a.policy)?] };
    println!("{} accesses, capacity {} pages", accesses.len(), a.capacity);
    for k in kinds {
        if k == PolicyKind::Navis {
            let (r, st) = trace::replay_navis(a.capacity, &accesses)?;
            println!(
                "{:<6} hit rate {:.4}  (frozen evictions {}, window evictions {}, promotions {})",
                k.name(),
                r.hit_rate(),
                st.frozen_evictions,
                st.window_evictions,
                st.promotions
            );
        } else {
            let mut p = trace::make_policy(k, a.capacity)?;
            println!("{:<6} hit rate {:.4}", k.name(), trace::replay(p.as_mut(), &accesses).hit_rate());
        }
    }
    Ok(())
}
