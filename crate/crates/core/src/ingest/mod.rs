//! Normalization to triples and the four-table store.
//!
//! `Tedge` holds exploded entries, `TedgeT` its transpose, `Tdeg` the
//! per-column degree of `Tedge`, and `Traw` the numeric fields. All four
//! live in one [`KvStore`] under a one-byte table tag, so an ingest batch
//! updates them in a single atomic write.

pub mod schema;
pub mod store;

use std::collections::HashMap;
use std::path::Path;
use std::time::{Duration, Instant};

use thiserror::Error;

pub use schema::{
    cycle_triples, decode_cycle, is_exploded, node_triples, parse_record_key, reading_triples,
    record_key, DecodedCycle, CYCLE_ID, CYCLE_SOURCE, NODE_SOURCE,
};
pub use store::{KvStore, StoreError, WriteBatch};

use crate::assoc::{AssocArray, AssocError, Collision, KeyRange, Triple};
use crate::records::{NodeRecord, SensorReading};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error(transparent)]
    InvalidTriple(#[from] AssocError),
    #[error("exploded triple ({row:?}, {col:?}) must hold 1, got {val}")]
    ExplodedValue { row: String, col: String, val: f64 },
    #[error("no data for source {0:?}")]
    NoData(String),
    #[error("corrupt value in {table} at {key:?}")]
    CorruptValue { table: Table, key: String },
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Table {
    Tedge,
    TedgeT,
    Tdeg,
    Traw,
}

impl Table {
    pub const ALL: [Table; 4] = [Table::Tedge, Table::TedgeT, Table::Tdeg, Table::Traw];

    fn tag(self) -> u8 {
        match self {
            Table::Tedge => b'E',
            Table::TedgeT => b'T',
            Table::Tdeg => b'D',
            Table::Traw => b'R',
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Table::Tedge => "Tedge",
            Table::TedgeT => "TedgeT",
            Table::Tdeg => "Tdeg",
            Table::Traw => "Traw",
        }
    }
}

impl std::fmt::Display for Table {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Table {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Table::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown table {s:?}"))
    }
}

/// Latest-timestamp bookkeeping per source lives under this tag.
const META_TAG: u8 = b'M';
const DEGREE: &str = "degree";

fn table_key(table: Table, row: &str, col: &str) -> Vec<u8> {
    let mut k = Vec::with_capacity(row.len() + col.len() + 2);
    k.push(table.tag());
    k.extend_from_slice(row.as_bytes());
    k.push(0);
    k.extend_from_slice(col.as_bytes());
    k
}

fn split_key(key: &[u8]) -> Option<(&str, &str)> {
    let body = key.get(1..)?;
    let nul = body.iter().position(|&b| b == 0)?;
    Some((
        std::str::from_utf8(&body[..nul]).ok()?,
        std::str::from_utf8(&body[nul + 1..]).ok()?,
    ))
}

fn encode_value(v: f64) -> Vec<u8> {
    // Display for f64 is the shortest string that parses back exactly.
    v.to_string().into_bytes()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IngestReceipt {
    pub count: usize,
    pub elapsed: Duration,
}

/// Scan bounds in the store's key space for a row range of one table.
fn row_bounds(table: Table, lo: &str, hi_inclusive: Option<&str>) -> (Vec<u8>, Vec<u8>) {
    let mut start = vec![table.tag()];
    start.extend_from_slice(lo.as_bytes());
    let end = match hi_inclusive {
        Some(hi) => {
            let mut e = vec![table.tag()];
            e.extend_from_slice(hi.as_bytes());
            // Rows never contain NUL, so `hi\x01` is past every `hi\0col`.
            e.push(1);
            e
        }
        None => vec![table.tag() + 1],
    };
    (start, end)
}

/// Smallest string greater than every string with this prefix, if any.
fn prefix_end(prefix: &[u8]) -> Option<Vec<u8>> {
    let mut p = prefix.to_vec();
    while let Some(last) = p.pop() {
        if last < 0xFF {
            p.push(last + 1);
            return Some(p);
        }
    }
    None
}

/// The exploded-schema store.
pub struct TripleStore {
    kv: KvStore,
}

impl TripleStore {
    pub fn in_memory() -> Self {
        Self {
            kv: KvStore::in_memory(),
        }
    }

    pub fn open(dir: &Path) -> Result<Self, IngestError> {
        Ok(Self {
            kv: KvStore::open(dir)?,
        })
    }

    pub fn flush(&self) -> Result<(), IngestError> {
        Ok(self.kv.flush()?)
    }

    /// Routes each triple by column shape, updates all four tables and the
    /// per-source latest timestamp in one atomic write. Re-ingesting an
    /// existing exploded entry leaves its degree unchanged.
    pub fn ingest_batch(&self, triples: &[Triple]) -> Result<IngestReceipt, IngestError> {
        let started = Instant::now();
        for t in triples {
            t.validate()?;
            if is_exploded(&t.col) && t.val != 1.0 {
                return Err(IngestError::ExplodedValue {
                    row: t.row.clone(),
                    col: t.col.clone(),
                    val: t.val,
                });
            }
        }
        let mut batch = WriteBatch::new();
        let mut new_edges: HashMap<&str, u64> = HashMap::new();
        let mut fresh = std::collections::HashSet::new();
        let mut latest: HashMap<&str, u64> = HashMap::new();
        for t in triples {
            if let Some((ts, source, _)) = parse_record_key(&t.row) {
                let e = latest.entry(source).or_insert(ts);
                *e = (*e).max(ts);
            }
            if is_exploded(&t.col) {
                let key = table_key(Table::Tedge, &t.row, &t.col);
                if self.kv.get(&key)?.is_none() && fresh.insert(key.clone()) {
                    *new_edges.entry(t.col.as_str()).or_default() += 1;
                }
                batch.put(key, b"1".to_vec());
                batch.put(table_key(Table::TedgeT, &t.col, &t.row), b"1".to_vec());
            } else {
                batch.put(table_key(Table::Traw, &t.row, &t.col), encode_value(t.val));
            }
        }
        for (col, added) in new_edges {
            let key = table_key(Table::Tdeg, col, DEGREE);
            let old = match self.kv.get(&key)? {
                Some(v) => parse_value(Table::Tdeg, &key, &v)? as u64,
                None => 0,
            };
            batch.put(key, (old + added).to_string().into_bytes());
        }
        for (source, ts) in latest {
            let mut key = vec![META_TAG];
            key.extend_from_slice(source.as_bytes());
            let old = self
                .kv
                .get(&key)?
                .and_then(|v| String::from_utf8(v).ok()?.parse::<u64>().ok());
            if old.is_none_or(|o| o < ts) {
                batch.put(key, ts.to_string().into_bytes());
            }
        }
        self.kv.write(batch)?;
        Ok(IngestReceipt {
            count: triples.len(),
            elapsed: started.elapsed(),
        })
    }

    pub fn ingest_readings(
        &self,
        readings: &[SensorReading],
    ) -> Result<IngestReceipt, IngestError> {
        let triples: Vec<Triple> = readings.iter().flat_map(reading_triples).collect();
        self.ingest_batch(&triples)
    }

    pub fn ingest_nodes(&self, nodes: &[NodeRecord]) -> Result<IngestReceipt, IngestError> {
        let triples: Vec<Triple> = nodes.iter().flat_map(node_triples).collect();
        self.ingest_batch(&triples)
    }

    /// Visits stored entries of `table` whose rows fall in `rows`, including
    /// raw zeros, in key order.
    pub fn scan(
        &self,
        table: Table,
        rows: &KeyRange,
        mut visit: impl FnMut(&str, &str, f64),
    ) -> Result<(), IngestError> {
        rows.validate()?;
        let mut bad = None;
        let mut each = |k: &[u8], v: &[u8]| -> bool {
            let Some((row, col)) = split_key(k) else {
                return true;
            };
            if !rows.contains(row) {
                return true;
            }
            match std::str::from_utf8(v)
                .ok()
                .and_then(|s| s.parse::<f64>().ok())
            {
                Some(x) => visit(row, col, x),
                None => {
                    bad = Some(String::from_utf8_lossy(k).into_owned());
                    return false;
                }
            }
            true
        };
        match rows {
            KeyRange::All => {
                let (lo, hi) = row_bounds(table, "", None);
                self.kv.scan(&lo, Some(&hi), &mut each)?;
            }
            KeyRange::Interval { lo, hi } => {
                let (lo, hi) = row_bounds(table, lo, Some(hi));
                self.kv.scan(&lo, Some(&hi), &mut each)?;
            }
            KeyRange::Prefix(p) => {
                let mut lo = vec![table.tag()];
                lo.extend_from_slice(p.as_bytes());
                let hi = prefix_end(&lo).unwrap_or_else(|| vec![table.tag() + 1]);
                self.kv.scan(&lo, Some(&hi), &mut each)?;
            }
            KeyRange::Set(keys) => {
                for r in keys {
                    let (lo, hi) = row_bounds(table, r, Some(r));
                    self.kv.scan(&lo, Some(&hi), &mut each)?;
                }
            }
        }
        match bad {
            Some(key) => Err(IngestError::CorruptValue { table, key }),
            None => Ok(()),
        }
    }

    /// Entries of `table` within both key ranges, as an array.
    pub fn query_range(
        &self,
        table: Table,
        rows: &KeyRange,
        cols: &KeyRange,
    ) -> Result<AssocArray, IngestError> {
        cols.validate()?;
        let mut triples = Vec::new();
        self.scan(table, rows, |r, c, v| {
            if cols.contains(c) {
                triples.push(Triple::new(r, c, v));
            }
        })?;
        Ok(AssocArray::from_triples(triples, Collision::Last)?)
    }

    /// Latest timestamp ingested for `source`.
    pub fn latest_timestamp(&self, source: &str) -> Result<Option<u64>, IngestError> {
        let mut key = vec![META_TAG];
        key.extend_from_slice(source.as_bytes());
        Ok(self
            .kv
            .get(&key)?
            .and_then(|v| String::from_utf8(v).ok()?.parse().ok()))
    }

    /// Raw entries of `source` at its latest timestamp.
    pub fn latest_frame(&self, source: &str) -> Result<AssocArray, IngestError> {
        let ts = self
            .latest_timestamp(source)?
            .ok_or_else(|| IngestError::NoData(source.to_owned()))?;
        self.query_range(
            Table::Traw,
            &KeyRange::prefix(format!("{ts:010}|{source}|")),
            &KeyRange::All,
        )
    }

    /// Distinct timestamps that carry a pipeline cycle marker, within
    /// `[lo, hi]`.
    pub fn cycle_timestamps(&self, lo: u64, hi: u64) -> Result<Vec<u64>, IngestError> {
        let mut out = Vec::new();
        let range = KeyRange::interval(schema::time_prefix(lo), format!("{hi:010}|~"))?;
        self.scan(Table::Traw, &range, |row, col, _| {
            if col == "frame_id" {
                if let Some((ts, CYCLE_SOURCE, CYCLE_ID)) = parse_record_key(row) {
                    out.push(ts);
                }
            }
        })?;
        Ok(out)
    }

    /// Rebuilds every record stored at `timestamp`.
    pub fn decode_at(&self, timestamp: u64) -> Result<DecodedCycle, IngestError> {
        let rows = KeyRange::prefix(schema::time_prefix(timestamp));
        let raw = self.query_range(Table::Traw, &rows, &KeyRange::All)?;
        let edge = self.query_range(Table::Tedge, &rows, &KeyRange::All)?;
        Ok(decode_cycle(timestamp, &raw, &edge))
    }

    /// Canonical dump: `table<TAB>row<TAB>col<TAB>value`, sorted.
    pub fn dump<W: std::io::Write>(&self, mut out: W) -> Result<usize, IngestError> {
        let mut n = 0;
        let mut io_err = None;
        for table in Table::ALL {
            let (lo, hi) = row_bounds(table, "", None);
            self.kv.scan(&lo, Some(&hi), |k, v| {
                let Some((row, col)) = split_key(k) else {
                    return true;
                };
                let line = format!(
                    "{}\t{row}\t{col}\t{}\n",
                    table.name(),
                    String::from_utf8_lossy(v)
                );
                if let Err(e) = out.write_all(line.as_bytes()) {
                    io_err = Some(e);
                    return false;
                }
                n += 1;
                true
            })?;
            if let Some(e) = io_err.take() {
                return Err(StoreError::Io(e).into());
            }
        }
        Ok(n)
    }
}

fn parse_value(table: Table, key: &[u8], v: &[u8]) -> Result<f64, IngestError> {
    std::str::from_utf8(v)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| IngestError::CorruptValue {
            table,
            key: String::from_utf8_lossy(key).into_owned(),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reading(ts: u64, id: &str, v: f64) -> SensorReading {
        SensorReading {
            source: "ecopod".into(),
            point_id: id.into(),
            timestamp: ts,
            value: v,
            unit: "°C".into(),
        }
    }

    #[test]
    fn tables_stay_consistent() {
        let s = TripleStore::in_memory();
        s.ingest_readings(&[reading(10, "a", 1.0), reading(10, "b", 2.0)])
            .unwrap();
        s.ingest_readings(&[reading(20, "a", 3.0), reading(10, "a", 1.0)])
            .unwrap();
        let edge = s
            .query_range(Table::Tedge, &KeyRange::All, &KeyRange::All)
            .unwrap();
        let edge_t = s
            .query_range(Table::TedgeT, &KeyRange::All, &KeyRange::All)
            .unwrap();
        assert_eq!(edge.transpose(), edge_t);
        let deg = s
            .query_range(Table::Tdeg, &KeyRange::All, &KeyRange::All)
            .unwrap();
        assert_eq!(deg.value("unit|°C", "degree"), 3.0);
        for (row, col, v) in deg.iter() {
            assert_eq!(edge.col_sums()[row], v, "{col}");
        }
    }

    #[test]
    fn empty_batch_is_a_no_op() {
        let s = TripleStore::in_memory();
        assert_eq!(s.ingest_batch(&[]).unwrap().count, 0);
        let mut buf = Vec::new();
        assert_eq!(s.dump(&mut buf).unwrap(), 0);
    }

    #[test]
    fn invalid_batch_is_rejected_whole() {
        let s = TripleStore::in_memory();
        let bad = [Triple::new("r", "c", 1.0), Triple::new("r", "x|y", 2.0)];
        assert!(matches!(
            s.ingest_batch(&bad),
            Err(IngestError::ExplodedValue { .. })
        ));
        assert!(s
            .query_range(Table::Traw, &KeyRange::All, &KeyRange::All)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn latest_frame_is_max_timestamp() {
        let s = TripleStore::in_memory();
        assert!(matches!(
            s.latest_frame("ecopod"),
            Err(IngestError::NoData(_))
        ));
        for ts in [100, 115, 130] {
            s.ingest_readings(&[reading(ts, "a", ts as f64)]).unwrap();
        }
        let f = s.latest_frame("ecopod").unwrap();
        assert_eq!(f.nnz(), 1);
        assert_eq!(f.value("0000000130|ecopod|a", "value"), 130.0);
    }

    #[test]
    fn raw_zero_is_stored_but_not_in_arrays() {
        let s = TripleStore::in_memory();
        s.ingest_readings(&[reading(5, "bit", 0.0)]).unwrap();
        let mut seen = 0;
        s.scan(Table::Traw, &KeyRange::All, |_, _, v| {
            assert_eq!(v, 0.0);
            seen += 1;
        })
        .unwrap();
        assert_eq!(seen, 1);
        assert!(s.latest_frame("ecopod").unwrap().is_empty());
        let d = s.decode_at(5).unwrap();
        assert_eq!(d.readings, [reading(5, "bit", 0.0)]);
    }
}
