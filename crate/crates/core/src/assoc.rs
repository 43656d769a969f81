//! Sparse associative arrays keyed by strings.
//!
//! An [`AssocArray`] is a sparse matrix whose rows and columns are named by
//! strings instead of integer indices. It is the data model shared by the
//! ingest schema, store queries and the deviation engine: a table scan comes
//! back as an array, and correlation is expressed as array algebra.
//!
//! Arrays never hold a stored zero. Every constructor and operation drops
//! entries whose value is exactly `0.0`, so `nnz` is always a meaningful count.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AssocError {
    #[error("invalid triple ({row:?}, {col:?}, {val}): {reason}")]
    InvalidTriple {
        row: String,
        col: String,
        val: f64,
        reason: &'static str,
    },
    #[error("invalid key range: {lo:?} > {hi:?}")]
    InvalidRange { lo: String, hi: String },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One `(row, col, value)` entry, the unit of TSV normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Triple {
    pub row: String,
    pub col: String,
    pub val: f64,
}

impl Triple {
    pub fn new(row: impl Into<String>, col: impl Into<String>, val: f64) -> Self {
        Self {
            row: row.into(),
            col: col.into(),
            val,
        }
    }

    /// Keys must be non-empty and must not contain the TSV delimiters or NUL
    /// (the store uses NUL as its row/column separator).
    pub fn validate(&self) -> Result<(), AssocError> {
        let reason = if self.row.is_empty() {
            Some("empty row key")
        } else if self.col.is_empty() {
            Some("empty column key")
        } else if !self.val.is_finite() {
            Some("non-finite value")
        } else if has_reserved(&self.row) || has_reserved(&self.col) {
            Some("key contains tab, newline or NUL")
        } else {
            None
        };
        match reason {
            Some(reason) => Err(AssocError::InvalidTriple {
                row: self.row.clone(),
                col: self.col.clone(),
                val: self.val,
                reason,
            }),
            None => Ok(()),
        }
    }
}

fn has_reserved(key: &str) -> bool {
    key.bytes().any(|b| matches!(b, b'\t' | b'\n' | b'\r' | 0))
}

/// How duplicate `(row, col)` keys are resolved at construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Collision {
    /// Values for the same key are added (degree tables).
    #[default]
    Sum,
    /// The last value seen wins (raw tables).
    Last,
}

/// Element-wise predicate used by [`AssocArray::compare_scalar`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Gt,
    Ne,
}

impl CmpOp {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            CmpOp::Lt => value < threshold,
            CmpOp::Gt => value > threshold,
            CmpOp::Ne => value != threshold,
        }
    }
}

/// Key selector for range queries. Intervals are closed on both ends.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KeyRange {
    All,
    Interval { lo: String, hi: String },
    Set(BTreeSet<String>),
    Prefix(String),
}

impl KeyRange {
    pub fn interval(lo: impl Into<String>, hi: impl Into<String>) -> Result<Self, AssocError> {
        let (lo, hi) = (lo.into(), hi.into());
        if lo > hi {
            return Err(AssocError::InvalidRange { lo, hi });
        }
        Ok(KeyRange::Interval { lo, hi })
    }

    pub fn single(key: impl Into<String>) -> Self {
        let key = key.into();
        KeyRange::Interval {
            lo: key.clone(),
            hi: key,
        }
    }

    pub fn set<I, S>(keys: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        KeyRange::Set(keys.into_iter().map(Into::into).collect())
    }

    pub fn prefix(prefix: impl Into<String>) -> Self {
        KeyRange::Prefix(prefix.into())
    }

    pub fn validate(&self) -> Result<(), AssocError> {
        match self {
            KeyRange::Interval { lo, hi } if lo > hi => Err(AssocError::InvalidRange {
                lo: lo.clone(),
                hi: hi.clone(),
            }),
            _ => Ok(()),
        }
    }

    pub fn contains(&self, key: &str) -> bool {
        match self {
            KeyRange::All => true,
            KeyRange::Interval { lo, hi } => lo.as_str() <= key && key <= hi.as_str(),
            KeyRange::Set(keys) => keys.contains(key),
            KeyRange::Prefix(p) => key.starts_with(p.as_str()),
        }
    }
}

/// Sparse string-keyed matrix of `f64` values, stored row-major.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AssocArray {
    rows: BTreeMap<String, BTreeMap<String, f64>>,
    nnz: usize,
}

impl AssocArray {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_triples<I>(triples: I, collision: Collision) -> Result<Self, AssocError>
    where
        I: IntoIterator<Item = Triple>,
    {
        let mut rows: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        for t in triples {
            t.validate()?;
            let row = rows.entry(t.row).or_default();
            match row.entry(t.col) {
                Entry::Vacant(e) => {
                    e.insert(t.val);
                }
                Entry::Occupied(mut e) => match collision {
                    Collision::Sum => *e.get_mut() += t.val,
                    Collision::Last => *e.get_mut() = t.val,
                },
            }
        }
        Ok(Self::from_rows(rows))
    }

    /// Square identity over `keys`.
    pub fn identity<I, S>(keys: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let rows = keys
            .into_iter()
            .map(|k| {
                let k = k.into();
                (k.clone(), BTreeMap::from([(k, 1.0)]))
            })
            .collect();
        Self::from_rows(rows)
    }

    fn from_rows(mut rows: BTreeMap<String, BTreeMap<String, f64>>) -> Self {
        let mut nnz = 0;
        rows.retain(|_, cols| {
            cols.retain(|_, v| *v != 0.0);
            nnz += cols.len();
            !cols.is_empty()
        });
        Self { rows, nnz }
    }

    pub fn nnz(&self) -> usize {
        self.nnz
    }

    pub fn is_empty(&self) -> bool {
        self.nnz == 0
    }

    pub fn get(&self, row: &str, col: &str) -> Option<f64> {
        self.rows.get(row).and_then(|r| r.get(col)).copied()
    }

    /// Value at `(row, col)`, with absent entries read as zero.
    pub fn value(&self, row: &str, col: &str) -> f64 {
        self.get(row, col).unwrap_or(0.0)
    }

    pub fn row(&self, row: &str) -> Option<&BTreeMap<String, f64>> {
        self.rows.get(row)
    }

    pub fn row_keys(&self) -> impl Iterator<Item = &str> {
        self.rows.keys().map(String::as_str)
    }

    pub fn col_keys(&self) -> BTreeSet<&str> {
        self.rows
            .values()
            .flat_map(|cols| cols.keys().map(String::as_str))
            .collect()
    }

    /// Entries in row-major lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        self.rows
            .iter()
            .flat_map(|(r, cols)| cols.iter().map(move |(c, v)| (r.as_str(), c.as_str(), *v)))
    }

    pub fn to_triples(&self) -> Vec<Triple> {
        self.iter().map(|(r, c, v)| Triple::new(r, c, v)).collect()
    }

    /// Plus-times product. Inner keys that exist on one side only contribute
    /// nothing.
    pub fn multiply(&self, other: &AssocArray) -> AssocArray {
        let mut rows = BTreeMap::new();
        for (r, a_cols) in &self.rows {
            let mut acc: BTreeMap<String, f64> = BTreeMap::new();
            for (k, a) in a_cols {
                let Some(b_cols) = other.rows.get(k) else {
                    continue;
                };
                for (c, b) in b_cols {
                    *acc.entry(c.clone()).or_insert(0.0) += a * b;
                }
            }
            if !acc.is_empty() {
                rows.insert(r.clone(), acc);
            }
        }
        Self::from_rows(rows)
    }

    pub fn transpose(&self) -> AssocArray {
        let mut rows: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        for (r, c, v) in self.iter() {
            rows.entry(c.to_owned())
                .or_default()
                .insert(r.to_owned(), v);
        }
        Self {
            rows,
            nnz: self.nnz,
        }
    }

    /// Entries whose row is in `rows` and column is in `cols`.
    pub fn subsref(&self, rows: &KeyRange, cols: &KeyRange) -> Result<AssocArray, AssocError> {
        rows.validate()?;
        cols.validate()?;
        let mut out = BTreeMap::new();
        let mut select = |r: &String, row: &BTreeMap<String, f64>| {
            let picked: BTreeMap<String, f64> = row
                .iter()
                .filter(|(c, _)| cols.contains(c))
                .map(|(c, v)| (c.clone(), *v))
                .collect();
            if !picked.is_empty() {
                out.insert(r.clone(), picked);
            }
        };
        match rows {
            KeyRange::Interval { lo, hi } => {
                for (r, row) in self.rows.range(lo.clone()..=hi.clone()) {
                    select(r, row);
                }
            }
            KeyRange::Prefix(p) => {
                for (r, row) in self
                    .rows
                    .range(p.clone()..)
                    .take_while(|(r, _)| r.starts_with(p.as_str()))
                {
                    select(r, row);
                }
            }
            KeyRange::Set(keys) => {
                for k in keys {
                    if let Some((r, row)) = self.rows.get_key_value(k) {
                        select(r, row);
                    }
                }
            }
            KeyRange::All => {
                for (r, row) in &self.rows {
                    select(r, row);
                }
            }
        }
        Ok(Self::from_rows(out))
    }

    /// Keeps the entries satisfying `value <op> threshold`.
    pub fn compare_scalar(&self, op: CmpOp, threshold: f64) -> AssocArray {
        self.filter(|_, _, v| op.holds(v, threshold))
    }

    pub fn filter(&self, mut keep: impl FnMut(&str, &str, f64) -> bool) -> AssocArray {
        let rows = self
            .rows
            .iter()
            .map(|(r, cols)| {
                let cols = cols
                    .iter()
                    .filter(|(c, v)| keep(r, c, **v))
                    .map(|(c, v)| (c.clone(), *v))
                    .collect();
                (r.clone(), cols)
            })
            .collect();
        Self::from_rows(rows)
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> AssocArray {
        let rows = self
            .rows
            .iter()
            .map(|(r, cols)| {
                (
                    r.clone(),
                    cols.iter().map(|(c, v)| (c.clone(), f(*v))).collect(),
                )
            })
            .collect();
        Self::from_rows(rows)
    }

    /// Element-wise sum over the union of keys.
    pub fn add(&self, other: &AssocArray) -> AssocArray {
        self.combine(other, 1.0)
    }

    /// Element-wise difference over the union of keys.
    pub fn sub(&self, other: &AssocArray) -> AssocArray {
        self.combine(other, -1.0)
    }

    fn combine(&self, other: &AssocArray, sign: f64) -> AssocArray {
        let mut rows = self.rows.clone();
        for (r, c, v) in other.iter() {
            *rows
                .entry(r.to_owned())
                .or_default()
                .entry(c.to_owned())
                .or_insert(0.0) += sign * v;
        }
        Self::from_rows(rows)
    }

    /// Replaces every stored value by 1.
    pub fn indicator(&self) -> AssocArray {
        self.map_values(|_| 1.0)
    }

    /// Sum of each row, keyed by row.
    pub fn row_sums(&self) -> BTreeMap<String, f64> {
        self.rows
            .iter()
            .map(|(r, cols)| (r.clone(), cols.values().sum()))
            .collect()
    }

    /// Sum of each column, keyed by column.
    pub fn col_sums(&self) -> BTreeMap<String, f64> {
        let mut sums = BTreeMap::new();
        for (_, c, v) in self.iter() {
            *sums.entry(c.to_owned()).or_insert(0.0) += v;
        }
        sums
    }

    /// Writes `row<TAB>col<TAB>value<LF>` lines in row-major order.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (r, c, v) in self.iter() {
            writeln!(out, "{r}\t{c}\t{v}")?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(input: R, collision: Collision) -> Result<AssocArray, AssocError> {
        let triples = read_triples(input)?;
        AssocArray::from_triples(triples, collision)
    }
}

/// Parses `row<TAB>col<TAB>value` lines. Blank lines are skipped.
pub fn read_triples<R: BufRead>(input: R) -> Result<Vec<Triple>, AssocError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let line_no = i + 1;
        let mut fields = line.split('\t');
        let (Some(row), Some(col), Some(val), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(AssocError::Parse {
                line: line_no,
                reason: "expected three tab-separated fields".into(),
            });
        };
        let val: f64 = val.parse().map_err(|e| AssocError::Parse {
            line: line_no,
            reason: format!("bad value {val:?}: {e}"),
        })?;
        let t = Triple::new(row, col, val);
        t.validate().map_err(|e| AssocError::Parse {
            line: line_no,
            reason: e.to_string(),
        })?;
        out.push(t);
    }
    Ok(out)
}

pub fn write_triples<W: Write>(triples: &[Triple], mut out: W) -> std::io::Result<()> {
    for t in triples {
        writeln!(out, "{}\t{}\t{}", t.row, t.col, t.val)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arr(entries: &[(&str, &str, f64)]) -> AssocArray {
        AssocArray::from_triples(
            entries.iter().map(|(r, c, v)| Triple::new(*r, *c, *v)),
            Collision::Sum,
        )
        .unwrap()
    }

    #[test]
    fn single_triple() {
        let a = arr(&[("r1", "c1", 1.0)]);
        assert_eq!(a.nnz(), 1);
        assert_eq!(a.row_keys().collect::<Vec<_>>(), ["r1"]);
        assert_eq!(a.col_keys().into_iter().collect::<Vec<_>>(), ["c1"]);
    }

    #[test]
    fn collisions() {
        let t = || vec![Triple::new("r1", "c1", 2.0), Triple::new("r1", "c1", 3.0)];
        let sum = AssocArray::from_triples(t(), Collision::Sum).unwrap();
        assert_eq!(sum.get("r1", "c1"), Some(5.0));
        let last = AssocArray::from_triples(t(), Collision::Last).unwrap();
        assert_eq!(last.get("r1", "c1"), Some(3.0));
    }

    #[test]
    fn cancelling_duplicates_leave_no_entry() {
        let a = arr(&[("r", "c", 2.0), ("r", "c", -2.0), ("r", "d", 1.0)]);
        assert_eq!(a.nnz(), 1);
        assert_eq!(a.get("r", "c"), None);
        assert_eq!(a.col_keys().len(), 1);
    }

    #[test]
    fn invalid_triples() {
        for t in [
            Triple::new("", "c", 1.0),
            Triple::new("r", "", 1.0),
            Triple::new("r", "c", f64::NAN),
            Triple::new("r", "c", f64::INFINITY),
            Triple::new("r\tx", "c", 1.0),
        ] {
            let err = AssocArray::from_triples([t], Collision::Sum).unwrap_err();
            assert!(matches!(err, AssocError::InvalidTriple { .. }));
        }
    }

    #[test]
    fn identity_is_neutral() {
        let a = arr(&[("a", "x", 2.0), ("b", "y", -1.5), ("b", "x", 4.0)]);
        let i = AssocArray::identity(a.col_keys().into_iter().map(str::to_owned));
        assert_eq!(a.multiply(&i), a);
        assert!(AssocArray::new().multiply(&a).is_empty());
    }

    #[test]
    fn transpose_single_and_involution() {
        let a = arr(&[("a", "b", 2.0)]);
        assert_eq!(a.transpose(), arr(&[("b", "a", 2.0)]));
        let b = arr(&[("a", "x", 1.0), ("b", "y", 2.0), ("c", "x", 3.0)]);
        assert_eq!(b.transpose().transpose(), b);
    }

    #[test]
    fn subsref_ranges() {
        let a = arr(&[
            ("a", "x", 1.0),
            ("b", "x", 2.0),
            ("b", "y", 3.0),
            ("c", "y", 4.0),
        ]);
        assert_eq!(a.subsref(&KeyRange::All, &KeyRange::All).unwrap(), a);
        let b = a.subsref(&KeyRange::single("b"), &KeyRange::All).unwrap();
        assert_eq!(b, arr(&[("b", "x", 2.0), ("b", "y", 3.0)]));
        let by = a
            .subsref(
                &KeyRange::interval("a", "b").unwrap(),
                &KeyRange::set(["y"]),
            )
            .unwrap();
        assert_eq!(by, arr(&[("b", "y", 3.0)]));
        let err = a
            .subsref(
                &KeyRange::Interval {
                    lo: "c".into(),
                    hi: "a".into(),
                },
                &KeyRange::All,
            )
            .unwrap_err();
        assert!(matches!(err, AssocError::InvalidRange { .. }));
        assert!(KeyRange::interval("z", "a").is_err());
    }

    #[test]
    fn compare_scalar_examples() {
        let a = arr(&[("s", "t", 20.0)]);
        assert!(a.compare_scalar(CmpOp::Gt, 25.0).is_empty());
        let b = arr(&[("s", "t", 30.0)]);
        assert_eq!(b.compare_scalar(CmpOp::Gt, 25.0), b);
        assert_eq!(b.compare_scalar(CmpOp::Lt, 25.0).nnz(), 0);
        assert_eq!(b.compare_scalar(CmpOp::Ne, 0.0), b);
    }

    #[test]
    fn add_and_sub_drop_zeros() {
        let a = arr(&[("r", "c", 1.5), ("r", "d", 2.0)]);
        let b = arr(&[("r", "c", 1.5), ("q", "c", 1.0)]);
        assert_eq!(a.sub(&b), arr(&[("r", "d", 2.0), ("q", "c", -1.0)]));
        assert_eq!(a.add(&b).get("r", "c"), Some(3.0));
    }

    #[test]
    fn sums() {
        let a = arr(&[("r", "c", 1.0), ("r", "d", 2.0), ("s", "c", 4.0)]);
        assert_eq!(a.row_sums()["r"], 3.0);
        assert_eq!(a.col_sums()["c"], 5.0);
    }

    #[test]
    fn tsv_round_trip() {
        let a = arr(&[
            ("1700000000|ecopod|zone1.temp", "value", 23.1),
            ("b", "unit|°C", 1.0),
        ]);
        let mut buf = Vec::new();
        a.write_tsv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "1700000000|ecopod|zone1.temp\tvalue\t23.1\nb\tunit|°C\t1\n"
        );
        let back = AssocArray::read_tsv(buf.as_slice(), Collision::Last).unwrap();
        assert_eq!(back, a);
        let err = read_triples("a\tb\n".as_bytes()).unwrap_err();
        assert!(matches!(err, AssocError::Parse { line: 1, .. }));
    }
}
