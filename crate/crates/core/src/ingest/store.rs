//! Embedded ordered key-value store.
//!
//! Writes land in a memtable; once it grows past a threshold it is frozen
//! into an immutable sorted run. Runs are merged size-tiered, newest value
//! wins. With a directory, every batch is appended to a checksummed
//! write-ahead log before it is applied, and frozen runs are written as
//! files (tmp + rename), so a reopen recovers every acknowledged batch.
//!
//! Readers take a shared lock for the duration of one scan and the writer
//! takes the exclusive lock for one batch, so a scan never observes part of
//! a batch.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::ops::Bound;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store unavailable: {0}")]
    Unavailable(String),
    #[error("corrupt store file {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const MEMTABLE_LIMIT: usize = 8 << 20;
const RUN_MAGIC: &[u8; 8] = b"PWRUN01\n";

/// Ordered puts applied atomically.
#[derive(Debug, Default, Clone)]
pub struct WriteBatch {
    ops: Vec<(Vec<u8>, Vec<u8>)>,
}

impl WriteBatch {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&mut self, key: Vec<u8>, value: Vec<u8>) {
        self.ops.push((key, value));
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for (k, v) in &self.ops {
            put_entry(&mut out, k, v);
        }
        out
    }
}

fn put_entry(out: &mut Vec<u8>, k: &[u8], v: &[u8]) {
    out.extend_from_slice(&(k.len() as u32).to_le_bytes());
    out.extend_from_slice(&(v.len() as u32).to_le_bytes());
    out.extend_from_slice(k);
    out.extend_from_slice(v);
}

fn read_u32(buf: &[u8], at: usize) -> Option<u32> {
    buf.get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
}

/// Iterates `[klen][vlen][key][value]` entries; `None` on truncation.
fn decode_entries(buf: &[u8]) -> Option<Vec<(&[u8], &[u8])>> {
    let mut out = Vec::new();
    let mut at = 0;
    while at < buf.len() {
        let kl = read_u32(buf, at)? as usize;
        let vl = read_u32(buf, at + 4)? as usize;
        let k = buf.get(at + 8..at + 8 + kl)?;
        let v = buf.get(at + 8 + kl..at + 8 + kl + vl)?;
        out.push((k, v));
        at += 8 + kl + vl;
    }
    Some(out)
}

/// Immutable sorted run: entries packed into one buffer, indexed by offset.
struct Run {
    seq: u64,
    data: Vec<u8>,
    offsets: Vec<u32>,
}

impl Run {
    fn from_sorted<'a>(seq: u64, entries: impl Iterator<Item = (&'a [u8], &'a [u8])>) -> Self {
        let mut data = Vec::new();
        let mut offsets = Vec::new();
        for (k, v) in entries {
            offsets.push(u32::try_from(data.len()).expect("run exceeds 4 GiB"));
            put_entry(&mut data, k, v);
        }
        Self { seq, data, offsets }
    }

    fn len(&self) -> usize {
        self.offsets.len()
    }

    fn entry(&self, i: usize) -> (&[u8], &[u8]) {
        let at = self.offsets[i] as usize;
        let kl = read_u32(&self.data, at).expect("valid run") as usize;
        let vl = read_u32(&self.data, at + 4).expect("valid run") as usize;
        let k = &self.data[at + 8..at + 8 + kl];
        (k, &self.data[at + 8 + kl..at + 8 + kl + vl])
    }

    /// First index whose key is `>= key`.
    fn lower_bound(&self, key: &[u8]) -> usize {
        let (mut lo, mut hi) = (0, self.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.entry(mid).0 < key {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        lo
    }

    fn get(&self, key: &[u8]) -> Option<&[u8]> {
        let i = self.lower_bound(key);
        (i < self.len() && self.entry(i).0 == key).then(|| self.entry(i).1)
    }

    fn file_name(seq: u64) -> String {
        format!("run-{seq:012}.dat")
    }

    fn write_file(&self, dir: &Path) -> Result<(), StoreError> {
        let path = dir.join(Self::file_name(self.seq));
        let tmp = path.with_extension("tmp");
        let mut w = BufWriter::new(File::create(&tmp)?);
        let mut hasher = crc32fast::Hasher::new();
        hasher.update(&self.data);
        w.write_all(RUN_MAGIC)?;
        w.write_all(&self.data)?;
        w.write_all(&hasher.finalize().to_le_bytes())?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }

    fn read_file(path: &Path, seq: u64) -> Result<Self, StoreError> {
        let corrupt = |reason: &str| StoreError::Corrupt {
            path: path.to_owned(),
            reason: reason.to_owned(),
        };
        let bytes = fs::read(path)?;
        if bytes.len() < RUN_MAGIC.len() + 4 || &bytes[..RUN_MAGIC.len()] != RUN_MAGIC {
            return Err(corrupt("bad header"));
        }
        let body = &bytes[RUN_MAGIC.len()..bytes.len() - 4];
        let crc = read_u32(&bytes, bytes.len() - 4).expect("length checked");
        if crc32fast::hash(body) != crc {
            return Err(corrupt("checksum mismatch"));
        }
        let entries = decode_entries(body).ok_or_else(|| corrupt("truncated entry"))?;
        Ok(Self::from_sorted(seq, entries.into_iter()))
    }
}

struct Inner {
    memtable: BTreeMap<Vec<u8>, Vec<u8>>,
    mem_bytes: usize,
    /// Oldest first.
    runs: Vec<Arc<Run>>,
    next_seq: u64,
}

pub struct KvStore {
    inner: RwLock<Inner>,
    dir: Option<PathBuf>,
    wal: Mutex<Option<File>>,
}

impl KvStore {
    pub fn in_memory() -> Self {
        Self {
            inner: RwLock::new(Inner {
                memtable: BTreeMap::new(),
                mem_bytes: 0,
                runs: Vec::new(),
                next_seq: 1,
            }),
            dir: None,
            wal: Mutex::new(None),
        }
    }

    /// Opens (creating if needed) a store persisted under `dir`.
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        fs::create_dir_all(dir)?;
        let mut runs = Vec::new();
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            let name = path
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default();
            if name.ends_with(".tmp") {
                fs::remove_file(&path)?;
                continue;
            }
            if let Some(seq) = name
                .strip_prefix("run-")
                .and_then(|s| s.strip_suffix(".dat"))
                .and_then(|s| s.parse::<u64>().ok())
            {
                runs.push(Arc::new(Run::read_file(&path, seq)?));
            }
        }
        runs.sort_by_key(|r| r.seq);
        let next_seq = runs.last().map_or(1, |r| r.seq + 1);
        let store = Self {
            inner: RwLock::new(Inner {
                memtable: BTreeMap::new(),
                mem_bytes: 0,
                runs,
                next_seq,
            }),
            dir: Some(dir.to_owned()),
            wal: Mutex::new(None),
        };
        store.replay_wal()?;
        let wal = OpenOptions::new()
            .create(true)
            .append(true)
            .open(store.wal_path())?;
        *store.wal.lock().map_err(poisoned)? = Some(wal);
        Ok(store)
    }

    fn wal_path(&self) -> PathBuf {
        self.dir.as_ref().expect("persistent store").join("wal.log")
    }

    fn replay_wal(&self) -> Result<(), StoreError> {
        let path = self.wal_path();
        let mut bytes = Vec::new();
        match File::open(&path) {
            Ok(mut f) => {
                f.read_to_end(&mut bytes)?;
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
            Err(e) => return Err(e.into()),
        }
        let mut inner = self.inner.write().map_err(poisoned)?;
        let mut at = 0;
        let mut valid_end = 0;
        // A torn tail (crash mid-append) ends replay; everything before it
        // was acknowledged and is kept.
        while let (Some(len), Some(crc)) = (read_u32(&bytes, at), read_u32(&bytes, at + 4)) {
            let Some(body) = bytes.get(at + 8..at + 8 + len as usize) else {
                break;
            };
            if crc32fast::hash(body) != crc {
                break;
            }
            let Some(entries) = decode_entries(body) else {
                break;
            };
            for (k, v) in entries {
                apply(&mut inner, k.to_vec(), v.to_vec());
            }
            at += 8 + len as usize;
            valid_end = at;
        }
        drop(inner);
        if valid_end < bytes.len() {
            let f = OpenOptions::new().write(true).open(&path)?;
            f.set_len(valid_end as u64)?;
        }
        Ok(())
    }

    /// Applies every put in `batch` atomically.
    pub fn write(&self, batch: WriteBatch) -> Result<(), StoreError> {
        if batch.is_empty() {
            return Ok(());
        }
        let mut inner = self.inner.write().map_err(poisoned)?;
        if self.dir.is_some() {
            let body = batch.encode();
            let mut frame = Vec::with_capacity(body.len() + 8);
            frame.extend_from_slice(&(body.len() as u32).to_le_bytes());
            frame.extend_from_slice(&crc32fast::hash(&body).to_le_bytes());
            frame.extend_from_slice(&body);
            let mut wal = self.wal.lock().map_err(poisoned)?;
            let f = wal
                .as_mut()
                .ok_or_else(|| StoreError::Unavailable("write-ahead log closed".into()))?;
            f.write_all(&frame)?;
            f.flush()?;
        }
        for (k, v) in batch.ops {
            apply(&mut inner, k, v);
        }
        if inner.mem_bytes >= MEMTABLE_LIMIT {
            self.flush_locked(&mut inner)?;
        }
        Ok(())
    }

    /// Freezes the memtable into a run (persisting it when on disk).
    pub fn flush(&self) -> Result<(), StoreError> {
        let mut inner = self.inner.write().map_err(poisoned)?;
        self.flush_locked(&mut inner)
    }

    fn flush_locked(&self, inner: &mut Inner) -> Result<(), StoreError> {
        if inner.memtable.is_empty() {
            return Ok(());
        }
        let seq = inner.next_seq;
        inner.next_seq += 1;
        let memtable = std::mem::take(&mut inner.memtable);
        inner.mem_bytes = 0;
        let run = Run::from_sorted(
            seq,
            memtable.iter().map(|(k, v)| (k.as_slice(), v.as_slice())),
        );
        drop(memtable);
        if let Some(dir) = &self.dir {
            run.write_file(dir)?;
            let mut wal = self.wal.lock().map_err(poisoned)?;
            let f = OpenOptions::new()
                .create(true)
                .write(true)
                .truncate(true)
                .open(self.wal_path())?;
            f.sync_all()?;
            *wal = Some(OpenOptions::new().append(true).open(self.wal_path())?);
        }
        inner.runs.push(Arc::new(run));
        self.compact_locked(inner)
    }

    /// Merges the newest runs while the newer one is at least half the size
    /// of its predecessor.
    fn compact_locked(&self, inner: &mut Inner) -> Result<(), StoreError> {
        while inner.runs.len() >= 2 {
            let n = inner.runs.len();
            let (older, newer) = (&inner.runs[n - 2], &inner.runs[n - 1]);
            if newer.len() * 2 < older.len()
                || older.data.len() + newer.data.len() > u32::MAX as usize
            {
                break;
            }
            let merged = merge_runs(older, newer);
            if let Some(dir) = &self.dir {
                merged.write_file(dir)?;
                fs::remove_file(dir.join(Run::file_name(older.seq)))?;
            }
            inner.runs.truncate(n - 2);
            inner.runs.push(Arc::new(merged));
        }
        Ok(())
    }

    pub fn get(&self, key: &[u8]) -> Result<Option<Vec<u8>>, StoreError> {
        let inner = self.inner.read().map_err(poisoned)?;
        Ok(lookup(&inner, key).map(<[u8]>::to_vec))
    }

    /// Visits keys in `[lo, hi)` in order, stopping early when `visit`
    /// returns `false`. `hi = None` scans to the end.
    pub fn scan(
        &self,
        lo: &[u8],
        hi: Option<&[u8]>,
        mut visit: impl FnMut(&[u8], &[u8]) -> bool,
    ) -> Result<(), StoreError> {
        let inner = self.inner.read().map_err(poisoned)?;
        let upper = match hi {
            Some(h) => Bound::Excluded(h),
            None => Bound::Unbounded,
        };
        let in_range = |k: &[u8]| hi.is_none_or(|h| k < h);

        // Cursor sources: index 0..runs are runs (oldest first), last is the
        // memtable. Higher source index = newer, wins on equal keys.
        let mut mem = inner
            .memtable
            .range::<[u8], _>((Bound::Included(lo), upper))
            .map(|(k, v)| (k.as_slice(), v.as_slice()));
        let mut pos: Vec<usize> = inner.runs.iter().map(|r| r.lower_bound(lo)).collect();
        let mem_src = inner.runs.len();
        let mut heap = BinaryHeap::new();
        for (src, run) in inner.runs.iter().enumerate() {
            if pos[src] < run.len() && in_range(run.entry(pos[src]).0) {
                heap.push(Head(run.entry(pos[src]).0, src, run.entry(pos[src]).1));
            }
        }
        if let Some((k, v)) = mem.next() {
            heap.push(Head(k, mem_src, v));
        }
        while let Some(Head(key, src, val)) = heap.pop() {
            // Drop older duplicates of the same key.
            let mut advance = vec![src];
            while let Some(h) = heap.peek() {
                if h.0 != key {
                    break;
                }
                advance.push(heap.pop().expect("peeked").1);
            }
            if !visit(key, val) {
                return Ok(());
            }
            for s in advance {
                if s == mem_src {
                    if let Some((k, v)) = mem.next() {
                        heap.push(Head(k, mem_src, v));
                    }
                } else {
                    let run = &inner.runs[s];
                    pos[s] += 1;
                    if pos[s] < run.len() && in_range(run.entry(pos[s]).0) {
                        heap.push(Head(run.entry(pos[s]).0, s, run.entry(pos[s]).1));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn is_persistent(&self) -> bool {
        self.dir.is_some()
    }
}

fn poisoned<T>(_: T) -> StoreError {
    StoreError::Unavailable("lock poisoned".into())
}

fn apply(inner: &mut Inner, k: Vec<u8>, v: Vec<u8>) {
    let added = k.len() + v.len() + 32;
    if let Some(old) = inner.memtable.insert(k, v) {
        inner.mem_bytes = inner.mem_bytes.saturating_sub(old.len());
    }
    inner.mem_bytes += added;
}

fn lookup<'a>(inner: &'a Inner, key: &[u8]) -> Option<&'a [u8]> {
    if let Some(v) = inner.memtable.get(key) {
        return Some(v);
    }
    inner.runs.iter().rev().find_map(|r| r.get(key))
}

fn merge_runs(older: &Run, newer: &Run) -> Run {
    let mut merged = Run {
        seq: newer.seq,
        data: Vec::with_capacity(older.data.len() + newer.data.len()),
        offsets: Vec::with_capacity(older.len() + newer.len()),
    };
    let mut push = |(k, v): (&[u8], &[u8])| {
        merged.offsets.push(merged.data.len() as u32);
        put_entry(&mut merged.data, k, v);
    };
    let (mut i, mut j) = (0, 0);
    while i < older.len() && j < newer.len() {
        match older.entry(i).0.cmp(newer.entry(j).0) {
            Ordering::Less => {
                push(older.entry(i));
                i += 1;
            }
            Ordering::Greater => {
                push(newer.entry(j));
                j += 1;
            }
            Ordering::Equal => {
                push(newer.entry(j));
                i += 1;
                j += 1;
            }
        }
    }
    (i..older.len()).for_each(|i| push(older.entry(i)));
    (j..newer.len()).for_each(|j| push(newer.entry(j)));
    merged
}

/// Heap entry ordered so the smallest key pops first and, among equal keys,
/// the newest source pops first.
struct Head<'a>(&'a [u8], usize, &'a [u8]);

impl PartialEq for Head<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Head<'_> {}
impl PartialOrd for Head<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Head<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.cmp(self.0).then(self.1.cmp(&other.1))
    }
}
