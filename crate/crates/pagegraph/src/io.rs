//! Page-granular storage with batched submission.
//!
//! A [`Device`] is shared by all workers; each worker owns an [`IoQueue`]
//! that groups requests into batches of at most [`QUEUE_DEPTH`]. Requests are
//! executed with positional reads/writes when the batch is submitted, and
//! [`IoQueue::wait`] hands back the completions.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io;
use std::ops::{Deref, DerefMut};
use std::os::unix::fs::{FileExt, OpenOptionsExt};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};

pub use pagegraph_core::layout::PAGE_SIZE;

use crate::error::{Error, Result};

pub const QUEUE_DEPTH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FileRole {
    Edge,
    Vector,
}

impl FileRole {
    fn idx(self) -> usize {
        self as usize
    }

    pub fn file_name(self) -> &'static str {
        match self {
            FileRole::Edge => "edges.bin",
            FileRole::Vector => "vectors.bin",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PageId {
    pub role: FileRole,
    pub page: u64,
}

impl PageId {
    pub fn edge(page: u64) -> Self {
        Self { role: FileRole::Edge, page }
    }

    pub fn vector(page: u64) -> Self {
        Self { role: FileRole::Vector, page }
    }
}

impl fmt::Debug for PageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = match self.role {
            FileRole::Edge => "E",
            FileRole::Vector => "V",
        };
        write!(f, "{r}{}", self.page)
    }
}

#[repr(C, align(4096))]
struct AlignedPage([u8; PAGE_SIZE]);

/// A 4096-byte, 4096-aligned page buffer. Alignment is a property of the
/// type, so every buffer handed to a device is valid for unbuffered IO.
pub struct PageBuf(Box<AlignedPage>);

impl PageBuf {
    pub fn zeroed() -> Self {
        PageBuf(Box::new(AlignedPage([0; PAGE_SIZE])))
    }

    pub fn from_slice(bytes: &[u8]) -> Self {
        let mut p = Self::zeroed();
        p.copy_from_slice(bytes);
        p
    }
}

impl Clone for PageBuf {
    fn clone(&self) -> Self {
        Self::from_slice(self)
    }
}

impl Deref for PageBuf {
    type Target = [u8];
    fn deref(&self) -> &[u8] {
        &self.0 .0
    }
}

impl DerefMut for PageBuf {
    fn deref_mut(&mut self) -> &mut [u8] {
        &mut self.0 .0
    }
}

impl fmt::Debug for PageBuf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PageBuf({:02x?}..)", &self[..8])
    }
}

#[derive(Debug, Default)]
pub struct RoleCounters {
    pub submissions: AtomicU64,
    pub pages_read: AtomicU64,
    pub pages_written: AtomicU64,
}

#[derive(Debug, Default)]
pub struct DeviceCounters {
    roles: [RoleCounters; 2],
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CounterSnapshot {
    pub submissions: u64,
    pub pages_read: u64,
    pub pages_written: u64,
}

impl CounterSnapshot {
    pub fn since(&self, earlier: &CounterSnapshot) -> CounterSnapshot {
        CounterSnapshot {
            submissions: self.submissions - earlier.submissions,
            pages_read: self.pages_read - earlier.pages_read,
            pages_written: self.pages_written - earlier.pages_written,
        }
    }
}

impl DeviceCounters {
    pub fn role(&self, role: FileRole) -> &RoleCounters {
        &self.roles[role.idx()]
    }

    pub fn snapshot(&self, role: FileRole) -> CounterSnapshot {
        let r = self.role(role);
        CounterSnapshot {
            submissions: r.submissions.load(Ordering::Relaxed),
            pages_read: r.pages_read.load(Ordering::Relaxed),
            pages_written: r.pages_written.load(Ordering::Relaxed),
        }
    }
}

pub trait Device: Send + Sync + fmt::Debug {
    fn read_page(&self, page: PageId, buf: &mut PageBuf) -> Result<()>;
    fn write_page(&self, page: PageId, buf: &PageBuf) -> Result<()>;
    fn page_count(&self, role: FileRole) -> u64;
    /// Grows the file by `count` zeroed pages; returns the first new page.
    fn allocate_pages(&self, role: FileRole, count: u64) -> Result<u64>;
    /// Discards every page of `role`.
    fn truncate(&self, role: FileRole) -> Result<()>;
    fn flush(&self, role: FileRole) -> Result<()>;
    fn counters(&self) -> &DeviceCounters;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceOp {
    Read,
    Write,
}

/// In-memory device with fault injection and an optional access trace.
#[derive(Debug, Default)]
pub struct MemDevice {
    files: [RwLock<Vec<PageBuf>>; 2],
    counters: DeviceCounters,
    faults: Mutex<HashSet<PageId>>,
    trace: Mutex<Option<Vec<(TraceOp, PageId)>>>,
}

impl MemDevice {
    pub fn new() -> Self {
        Self::default()
    }

    /// Makes every later access to `page` fail.
    pub fn inject_fault(&self, page: PageId) {
        self.faults.lock().insert(page);
    }

    pub fn clear_faults(&self) {
        self.faults.lock().clear();
    }

    pub fn start_trace(&self) {
        *self.trace.lock() = Some(Vec::new());
    }

    pub fn take_trace(&self) -> Vec<(TraceOp, PageId)> {
        self.trace.lock().take().unwrap_or_default()
    }

    fn record(&self, op: TraceOp, page: PageId) {
        if let Some(t) = self.trace.lock().as_mut() {
            t.push((op, page));
        }
    }

    fn check_fault(&self, page: PageId) -> Result<()> {
        if self.faults.lock().contains(&page) {
            return Err(Error::PageIo { page, source: io::Error::other("injected fault") });
        }
        Ok(())
    }
}

impl Device for MemDevice {
    fn read_page(&self, page: PageId, buf: &mut PageBuf) -> Result<()> {
        self.check_fault(page)?;
        let f = self.files[page.role.idx()].read();
        let src = f
            .get(page.page as usize)
            .ok_or(Error::PageOutOfRange { page, pages: f.len() as u64 })?;
        buf.copy_from_slice(src);
        drop(f);
        self.counters.role(page.role).pages_read.fetch_add(1, Ordering::Relaxed);
        self.record(TraceOp::Read, page);
        Ok(())
    }

    fn write_page(&self, page: PageId, buf: &PageBuf) -> Result<()> {
        self.check_fault(page)?;
        let mut f = self.files[page.role.idx()].write();
        let at = page.page as usize;
        while f.len() <= at {
            f.push(PageBuf::zeroed());
        }
        f[at].copy_from_slice(buf);
        drop(f);
        self.counters.role(page.role).pages_written.fetch_add(1, Ordering::Relaxed);
        self.record(TraceOp::Write, page);
        Ok(())
    }

    fn page_count(&self, role: FileRole) -> u64 {
        self.files[role.idx()].read().len() as u64
    }

    fn allocate_pages(&self, role: FileRole, count: u64) -> Result<u64> {
        let mut f = self.files[role.idx()].write();
        let first = f.len() as u64;
        f.extend((0..count).map(|_| PageBuf::zeroed()));
        Ok(first)
    }

    fn truncate(&self, role: FileRole) -> Result<()> {
        self.files[role.idx()].write().clear();
        Ok(())
    }

    fn flush(&self, _role: FileRole) -> Result<()> {
        Ok(())
    }

    fn counters(&self) -> &DeviceCounters {
        &self.counters
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IoMode {
    /// Unbuffered (`O_DIRECT`) when the filesystem allows it.
    Direct,
    Buffered,
}

#[derive(Debug)]
struct BackingFile {
    path: PathBuf,
    file: File,
    pages: AtomicU64,
    grow: Mutex<()>,
}

/// Edge and vector files in an index directory.
#[derive(Debug)]
pub struct FileDevice {
    files: [BackingFile; 2],
    direct: bool,
    counters: DeviceCounters,
}

impl FileDevice {
    pub fn open(dir: &Path, mode: IoMode) -> Result<Self> {
        let mut direct = mode == IoMode::Direct;
        let mut open = |role: FileRole| -> Result<BackingFile> {
            let path = dir.join(role.file_name());
            let mut file = None;
            if direct {
                match OpenOptions::new()
                    .read(true)
                    .write(true)
                    .create(true)
                    .truncate(false)
                    .custom_flags(libc::O_DIRECT)
                    .open(&path)
                {
                    Ok(f) => file = Some(f),
                    Err(e) => {
                        log::warn!("{}: O_DIRECT unavailable ({e}); falling back to buffered IO", path.display());
                        direct = false;
                    }
                }
            }
            let file = match file {
                Some(f) => f,
                None => OpenOptions::new()
                    .read(true)
                    .write(true)
                    .create(true)
                    .truncate(false)
                    .open(&path)
                    .map_err(|source| Error::File { path: path.clone(), source })?,
            };
            let len = file.metadata()?.len();
            if len % PAGE_SIZE as u64 != 0 {
                return Err(Error::Format { path, offset: len, msg: "file length is not a whole number of pages".into() });
            }
            Ok(BackingFile { path, file, pages: AtomicU64::new(len / PAGE_SIZE as u64), grow: Mutex::new(()) })
        };
        let edge = open(FileRole::Edge)?;
        let vector = open(FileRole::Vector)?;
        Ok(Self { files: [edge, vector], direct, counters: DeviceCounters::default() })
    }

    pub fn is_direct(&self) -> bool {
        self.direct
    }

    fn backing(&self, role: FileRole) -> &BackingFile {
        &self.files[role.idx()]
    }
}

impl Device for FileDevice {
    fn read_page(&self, page: PageId, buf: &mut PageBuf) -> Result<()> {
        let f = self.backing(page.role);
        let pages = f.pages.load(Ordering::Acquire);
        if page.page >= pages {
            return Err(Error::PageOutOfRange { page, pages });
        }
        f.file
            .read_exact_at(buf, page.page * PAGE_SIZE as u64)
            .map_err(|source| Error::PageIo { page, source })?;
        self.counters.role(page.role).pages_read.fetch_add(1, Ordering::Relaxed);
        Ok(())
    }

    fn write_page(&self, page: PageId, buf: &PageBuf) -> Result<()> {
        let f = self.backing(page.role);
        f.file
            .write_all_at(buf, page.page * PAGE_SIZE as u64)
            .map_err(|source| Error::PageIo { page, source })?;
        if page.page >= f.pages.load(Ordering::Acquire) {
            let _g = f.grow.lock();
            f.pages.fetch_max(page.page + 1, Ordering::AcqRel);
        }
        self.counters.role(page.role).pages_written.fetch_add(1, Ordering::Relaxed);
        Ok(())
    }

    fn page_count(&self, role: FileRole) -> u64 {
        self.backing(role).pages.load(Ordering::Acquire)
    }

    fn allocate_pages(&self, role: FileRole, count: u64) -> Result<u64> {
        let f = self.backing(role);
        let _g = f.grow.lock();
        let first = f.pages.load(Ordering::Acquire);
        f.file
            .set_len((first + count) * PAGE_SIZE as u64)
            .map_err(|source| Error::File { path: f.path.clone(), source })?;
        f.pages.store(first + count, Ordering::Release);
        Ok(first)
    }

    fn truncate(&self, role: FileRole) -> Result<()> {
        let f = self.backing(role);
        let _g = f.grow.lock();
        f.file.set_len(0).map_err(|source| Error::File { path: f.path.clone(), source })?;
        f.pages.store(0, Ordering::Release);
        Ok(())
    }

    fn flush(&self, role: FileRole) -> Result<()> {
        let f = self.backing(role);
        f.file.sync_data().map_err(|source| Error::File { path: f.path.clone(), source })
    }

    fn counters(&self) -> &DeviceCounters {
        &self.counters
    }
}

pub enum IoRequest {
    Read(PageId),
    Write(PageId, Arc<PageBuf>),
}

impl IoRequest {
    pub fn page(&self) -> PageId {
        match self {
            IoRequest::Read(p) | IoRequest::Write(p, _) => *p,
        }
    }
}

#[derive(Debug)]
pub struct Completion {
    pub page: PageId,
    /// Filled buffer for reads, `None` for writes.
    pub result: Result<Option<PageBuf>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BatchTicket(u64);

/// A worker's private submission queue.
pub struct IoQueue {
    device: Arc<dyn Device>,
    next: u64,
    done: HashMap<u64, Vec<Completion>>,
}

impl IoQueue {
    pub fn new(device: Arc<dyn Device>) -> Self {
        Self { device, next: 0, done: HashMap::new() }
    }

    pub fn device(&self) -> &Arc<dyn Device> {
        &self.device
    }

    /// Submits one batch. Batches deeper than the queue are split, and each
    /// piece counts as a separate submission.
    pub fn submit(&mut self, batch: Vec<IoRequest>) -> Result<BatchTicket> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let counters = self.device.counters();
        for chunk in batch.chunks(QUEUE_DEPTH) {
            let mut roles = [false; 2];
            for r in chunk {
                roles[r.page().role.idx()] = true;
            }
            // One submission per role file touched by the chunk.
            for (i, used) in roles.iter().enumerate() {
                if *used {
                    let role = if i == 0 { FileRole::Edge } else { FileRole::Vector };
                    counters.role(role).submissions.fetch_add(1, Ordering::Relaxed);
                }
            }
        }
        let mut out = Vec::with_capacity(batch.len());
        for req in batch {
            let c = match req {
                IoRequest::Read(page) => {
                    let mut buf = PageBuf::zeroed();
                    Completion { page, result: self.device.read_page(page, &mut buf).map(|_| Some(buf)) }
                }
                IoRequest::Write(page, buf) => Completion { page, result: self.device.write_page(page, &buf).map(|_| None) },
            };
            out.push(c);
        }
        let t = self.next;
        self.next += 1;
        self.done.insert(t, out);
        Ok(BatchTicket(t))
    }

    pub fn wait(&mut self, ticket: BatchTicket) -> Result<Vec<Completion>> {
        match self.done.remove(&ticket.0) {
            Some(c) => Ok(c),
            None if ticket.0 < self.next => Err(Error::DoubleWait(ticket.0)),
            None => Err(Error::UnknownTicket(ticket.0)),
        }
    }

    /// Submit and wait; fails on the first failed request.
    pub fn run(&mut self, batch: Vec<IoRequest>) -> Result<Vec<Completion>> {
        let t = self.submit(batch)?;
        let done = self.wait(t)?;
        Ok(done)
    }

    pub fn read_pages(&mut self, pages: &[PageId]) -> Result<Vec<PageBuf>> {
        if pages.is_empty() {
            return Ok(Vec::new());
        }
        let done = self.run(pages.iter().map(|&p| IoRequest::Read(p)).collect())?;
        done.into_iter().map(|c| c.result.map(|b| b.expect("read completion carries a buffer"))).collect()
    }

    pub fn write_pages(&mut self, pages: Vec<(PageId, Arc<PageBuf>)>) -> Result<()> {
        if pages.is_empty() {
            return Ok(());
        }
        for c in self.run(pages.into_iter().map(|(p, b)| IoRequest::Write(p, b)).collect())? {
            c.result?;
        }
        Ok(())
    }
}
