//! Reference implementations the integration tests compare against. They are
//! deliberately naive: dense matrices, linear scans and explicit rule tables.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use podwatch::assoc::{AssocArray, KeyRange, Triple};
use podwatch::baseline::{BaselineEntry, Color, CueClass, Kind, Severity};
use podwatch::server::{Tier, Verb};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Cells = BTreeMap<(String, String), f64>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cells(a: &AssocArray) -> Cells {
    a.iter()
        .map(|(r, c, v)| ((r.to_owned(), c.to_owned()), v))
        .collect()
}

/// Sums duplicates and drops zeros, the way an array is built.
pub fn cells_of(triples: &[Triple]) -> Cells {
    let mut out = Cells::new();
    for t in triples {
        *out.entry((t.row.clone(), t.col.clone())).or_insert(0.0) += t.val;
    }
    out.retain(|_, v| *v != 0.0);
    out
}

fn keys<'a>(it: impl Iterator<Item = &'a str>) -> Vec<String> {
    let set: BTreeSet<&str> = it.collect();
    set.into_iter().map(str::to_owned).collect()
}

/// `A·B` with both operands expanded to dense matrices over the union of
/// their inner keys.
pub fn dense_multiply(a: &Cells, b: &Cells) -> Cells {
    let rows = keys(a.keys().map(|(r, _)| r.as_str()));
    let inner = keys(
        a.keys()
            .map(|(_, c)| c.as_str())
            .chain(b.keys().map(|(r, _)| r.as_str())),
    );
    let cols = keys(b.keys().map(|(_, c)| c.as_str()));
    let dense = |m: &Cells, rk: &[String], ck: &[String]| -> Vec<Vec<f64>> {
        rk.iter()
            .map(|r| {
                ck.iter()
                    .map(|c| m.get(&(r.clone(), c.clone())).copied().unwrap_or(0.0))
                    .collect()
            })
            .collect()
    };
    let (da, db) = (dense(a, &rows, &inner), dense(b, &inner, &cols));
    let mut out = Cells::new();
    for (i, r) in rows.iter().enumerate() {
        for (j, c) in cols.iter().enumerate() {
            let mut s = 0.0;
            for k in 0..inner.len() {
                s += da[i][k] * db[k][j];
            }
            if s != 0.0 {
                out.insert((r.clone(), c.clone()), s);
            }
        }
    }
    out
}

pub fn dense_transpose(a: &Cells) -> Cells {
    a.iter()
        .map(|((r, c), v)| ((c.clone(), r.clone()), *v))
        .collect()
}

/// Key predicate matching a [`KeyRange`], written out independently.
#[derive(Debug, Clone)]
pub enum Pick {
    All,
    Between(String, String),
    Among(Vec<String>),
    StartsWith(String),
}

impl Pick {
    pub fn matches(&self, key: &str) -> bool {
        match self {
            Pick::All => true,
            Pick::Between(lo, hi) => key.cmp(lo.as_str()).is_ge() && key.cmp(hi.as_str()).is_le(),
            Pick::Among(ks) => ks.iter().any(|k| k == key),
            Pick::StartsWith(p) => key.len() >= p.len() && &key[..p.len()] == p,
        }
    }

    pub fn range(&self) -> KeyRange {
        match self {
            Pick::All => KeyRange::All,
            Pick::Between(lo, hi) => KeyRange::interval(lo.clone(), hi.clone()).unwrap(),
            Pick::Among(ks) => KeyRange::set(ks.iter().cloned()),
            Pick::StartsWith(p) => KeyRange::prefix(p.clone()),
        }
    }
}

pub fn scan_subsref(a: &Cells, rows: &Pick, cols: &Pick) -> Cells {
    let mut out = Cells::new();
    for ((r, c), v) in a {
        if rows.matches(r) && cols.matches(c) {
            out.insert((r.clone(), c.clone()), *v);
        }
    }
    out
}

pub fn key_pool(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i:02}")).collect()
}

/// Up to `max_rows × max_cols` keys, integer values so sums are exact.
pub fn random_triples(
    rng: &mut ChaCha8Rng,
    rows: &[String],
    cols: &[String],
    density: f64,
) -> Vec<Triple> {
    let mut out = Vec::new();
    for r in rows {
        for c in cols {
            if rng.gen_bool(density) {
                let v = loop {
                    let v = rng.gen_range(-9i32..=9);
                    if v != 0 {
                        break v;
                    }
                };
                out.push(Triple::new(r.as_str(), c.as_str(), f64::from(v)));
            }
        }
    }
    out
}

pub fn random_pick(rng: &mut ChaCha8Rng, pool: &[String]) -> Pick {
    match rng.gen_range(0..4) {
        0 => Pick::All,
        1 => {
            let mut a = pool.choose(rng).unwrap().clone();
            let mut b = pool.choose(rng).unwrap().clone();
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            if rng.gen_bool(0.3) {
                b.push('~');
            }
            Pick::Between(a, b)
        }
        2 => {
            let n = rng.gen_range(0..=pool.len().min(6));
            let mut ks: Vec<String> = pool.choose_multiple(rng, n).cloned().collect();
            if rng.gen_bool(0.3) {
                ks.push("absent".into());
            }
            Pick::Among(ks)
        }
        _ => {
            let k = pool.choose(rng).unwrap();
            Pick::StartsWith(k[..k.len() - 1].to_owned())
        }
    }
}

/// One alert per entry whose observed value violates it; points missing
/// from `values` read as 0.
pub fn scalar_deviations(
    values: &BTreeMap<String, f64>,
    entries: &[BaselineEntry],
) -> Vec<(String, Kind, f64, f64)> {
    let mut out = Vec::new();
    for e in entries {
        let v = values.get(&e.point_id).copied().unwrap_or(0.0);
        let bad = match e.kind {
            Kind::Max => v > e.limit,
            Kind::Min => v < e.limit,
            Kind::Binary => v != e.limit,
        };
        if bad {
            out.push((e.point_id.clone(), e.kind, v, e.limit));
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

pub fn random_entry(rng: &mut ChaCha8Rng, point_id: &str) -> BaselineEntry {
    let kind = *[Kind::Min, Kind::Max, Kind::Binary].choose(rng).unwrap();
    let limit = match kind {
        Kind::Binary => f64::from(rng.gen_range(0..=1u8)),
        _ => f64::from(rng.gen_range(-50i32..=50)) / 2.0,
    };
    let severity = *[Severity::Info, Severity::Warning, Severity::Critical]
        .choose(rng)
        .unwrap();
    let cue = *[
        CueClass::Water,
        CueClass::Power,
        CueClass::Temperature,
        CueClass::Fire,
    ]
    .choose(rng)
    .unwrap();
    let zone = format!("zone{:02}", rng.gen_range(0..3));
    BaselineEntry::new(point_id, kind, limit, severity, cue, &zone)
}

/// Observed value near `limit` often enough to land on it exactly.
pub fn random_observation(rng: &mut ChaCha8Rng, limit: f64) -> f64 {
    match rng.gen_range(0..4) {
        0 => limit,
        1 => 0.0,
        2 => f64::from(rng.gen_range(0..=1u8)),
        _ => limit + f64::from(rng.gen_range(-8i32..=8)) / 4.0,
    }
}

/// Expected node color from the written rule table.
pub fn rule_color(scheduled: u32, total: u32, red_triggers: usize) -> Color {
    if red_triggers > 0 {
        Color::Red
    } else if scheduled == 0 {
        Color::Colorless
    } else if scheduled * 2 >= total {
        Color::Blue
    } else {
        Color::Green
    }
}

/// Which tier may issue which verb.
pub fn permitted(tier: Tier, verb: Verb) -> bool {
    const TABLE: [(Verb, [bool; 3]); 5] = [
        //                          Viewer Operator Admin
        (Verb::Reboot, [false, true, true]),
        (Verb::Reimage, [false, false, true]),
        (Verb::RemoveFromScheduler, [false, true, true]),
        (Verb::ReturnToService, [false, true, true]),
        (Verb::Comment, [false, true, true]),
    ];
    let col = match tier {
        Tier::Viewer => 0,
        Tier::Operator => 1,
        Tier::Admin => 2,
    };
    TABLE.iter().find(|(v, _)| *v == verb).unwrap().1[col]
}
