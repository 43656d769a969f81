//! Analytics over the persisted store: replay of past cycles and the usage,
//! hot-spot and failure reports.
//!
//! Periods are inclusive `[from, to]` ranges of UTC seconds.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use chrono::{DateTime, Datelike, Timelike};
use serde::Serialize;
use thiserror::Error;

use crate::assoc::{AssocArray, Collision, KeyRange, Triple};
use crate::baseline::{classify, missing_status, Baseline};
use crate::cycle::{correlate, frame_for};
use crate::ingest::{
    decode_cycle, parse_record_key, IngestError, Table, TripleStore, CYCLE_ID, CYCLE_SOURCE,
    NODE_SOURCE,
};
use crate::podsim::layout::{self, FEEDS};
use crate::vizgen::{serialize_frame, VizFrame};

/// Cycle period assumed when a cycle marker carries none.
const DEFAULT_PERIOD_S: u64 = 15;

#[derive(Debug, Error)]
pub enum HistoryError {
    #[error("no cycles stored between {from} and {to}")]
    WindowOutOfRange { from: u64, to: u64 },
    #[error("no data between {from} and {to}")]
    NoData { from: u64, to: u64 },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Assoc(#[from] crate::assoc::AssocError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplayWindow {
    pub at: u64,
    pub before: u64,
    pub after: u64,
}

impl ReplayWindow {
    pub fn bounds(&self) -> (u64, u64) {
        (
            self.at.saturating_sub(self.before),
            self.at.saturating_add(self.after),
        )
    }
}

/// Rebuilds the frame of one stored cycle through the same path the live
/// pipeline uses.
pub fn rebuild_frame(
    store: &TripleStore,
    baseline: &Baseline,
    timestamp: u64,
) -> Result<VizFrame, HistoryError> {
    let c = store.decode_at(timestamp)?;
    let corr = correlate(timestamp, &c.readings, &c.nodes, baseline);
    Ok(frame_for(c.frame_id.unwrap_or(0), &corr, baseline))
}

/// Serialized frames for every stored cycle in the window, oldest first.
pub fn replay(
    store: &TripleStore,
    baseline: &Baseline,
    window: &ReplayWindow,
) -> Result<Vec<Vec<u8>>, HistoryError> {
    let (from, to) = window.bounds();
    let cycles = store.cycle_timestamps(from, to)?;
    if cycles.is_empty() {
        return Err(HistoryError::WindowOutOfRange { from, to });
    }
    cycles
        .into_iter()
        .map(|ts| rebuild_frame(store, baseline, ts).map(|f| serialize_frame(&f)))
        .collect()
}

fn period_cols(from: u64, to: u64) -> KeyRange {
    KeyRange::interval(format!("{from:010}|"), format!("{to:010}|~")).expect("ordered bounds")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Bucketing {
    DayOfWeek,
    HourOfDay,
    User,
    Rack,
}

impl FromStr for Bucketing {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "dow" | "day" | "dayofweek" => Ok(Bucketing::DayOfWeek),
            "hour" | "hourofday" => Ok(Bucketing::HourOfDay),
            "user" => Ok(Bucketing::User),
            "rack" => Ok(Bucketing::Rack),
            _ => Err(format!("unknown bucketing {s:?} (dow, hour, user, rack)")),
        }
    }
}

impl fmt::Display for Bucketing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

pub const WEEKDAYS: [&str; 7] = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"];

fn weekday(ts: u64) -> &'static str {
    let d = DateTime::from_timestamp(ts as i64, 0).expect("timestamp in range");
    WEEKDAYS[d.weekday().num_days_from_monday() as usize]
}

fn hour(ts: u64) -> String {
    let d = DateTime::from_timestamp(ts as i64, 0).expect("timestamp in range");
    format!("{:02}", d.hour())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct UsageRow {
    pub bucket: String,
    pub jobs_submitted: u64,
    pub core_hours: f64,
    #[serde(rename = "peakKW")]
    pub peak_kw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UsageReport {
    pub bucketing: Bucketing,
    pub from: u64,
    pub to: u64,
    pub rows: Vec<UsageRow>,
}

impl UsageReport {
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "bucket\tjobsSubmitted\tcoreHours\tpeakKW")?;
        for r in &self.rows {
            writeln!(
                out,
                "{}\t{}\t{:.3}\t{:.3}",
                r.bucket, r.jobs_submitted, r.core_hours, r.peak_kw
            )?;
        }
        Ok(())
    }

    pub fn total_jobs(&self) -> u64 {
        self.rows.iter().map(|r| r.jobs_submitted).sum()
    }

    pub fn total_core_hours(&self) -> f64 {
        self.rows.iter().map(|r| r.core_hours).sum()
    }
}

/// Per-cycle quantities pulled from the raw table.
#[derive(Default)]
struct RawScan {
    periods: BTreeMap<u64, u64>,
    it_kw: BTreeMap<u64, f64>,
    rack_kw: BTreeMap<(String, u64), f64>,
    /// `(recordKey, jobId)` -> cores.
    job_cores: BTreeMap<(String, String), f64>,
}

fn scan_raw(store: &TripleStore, from: u64, to: u64) -> Result<RawScan, HistoryError> {
    let mut s = RawScan::default();
    let feeds: BTreeSet<String> = FEEDS.iter().map(|f| layout::feed_point(f)).collect();
    store.scan(Table::Traw, &period_cols(from, to), |row, col, v| {
        let Some((ts, source, id)) = parse_record_key(row) else {
            return;
        };
        if source == CYCLE_SOURCE && id == CYCLE_ID && col == "period_s" {
            s.periods.insert(ts, v as u64);
        } else if source == NODE_SOURCE {
            if let Some(job) = col.strip_prefix("jobcores:") {
                s.job_cores.insert((row.to_owned(), job.to_owned()), v);
            }
        } else if col == "value" {
            if feeds.contains(id) {
                *s.it_kw.entry(ts).or_default() += v;
            } else if let (Some(rack), Some(layout::PointRole::RackPower(_))) =
                (layout::rack_of_point(id), layout::PointRole::of(id))
            {
                s.rack_kw.insert((rack, ts), v);
            }
        }
    })?;
    Ok(s)
}

/// Job submissions, core-hours and peak power per bucket.
///
/// Built from the exploded `jobuser|<job>|<user>` columns: `U` (job ×
/// record) marks where each job ran. A job counts as submitted at its first
/// record in the period (rack: the rack of the first host in key order).
/// Core-hours are `C × B` summed over buckets, where `C` holds
/// `cores × period / 3600` per (record, job) and `B` maps records (or, for
/// user bucketing, jobs) to buckets. Peak power is the largest IT load seen
/// in the bucket's cycles; for racks it is the rack's own meter, for users
/// the IT load while they had jobs running.
pub fn usage_report(
    store: &TripleStore,
    baseline: &Baseline,
    from: u64,
    to: u64,
    bucketing: Bucketing,
) -> Result<UsageReport, HistoryError> {
    if store.cycle_timestamps(from, to)?.is_empty() {
        return Err(HistoryError::NoData { from, to });
    }
    let u = store.query_range(
        Table::TedgeT,
        &KeyRange::prefix("jobuser|"),
        &period_cols(from, to),
    )?;
    let raw = scan_raw(store, from, to)?;
    let rack_of_host: BTreeMap<&str, &str> = baseline
        .hosts()
        .iter()
        .map(|h| (h.hostname.as_str(), h.rack.as_str()))
        .collect();
    let job_user = |jobuser: &str| -> Option<(String, String)> {
        let (job, user) = jobuser.strip_prefix("jobuser|")?.rsplit_once('|')?;
        Some((job.to_owned(), user.to_owned()))
    };
    let record_bucket = |record: &str| -> Option<String> {
        let (ts, _, host) = parse_record_key(record)?;
        Some(match bucketing {
            Bucketing::DayOfWeek => weekday(ts).to_owned(),
            Bucketing::HourOfDay => hour(ts),
            Bucketing::Rack => rack_of_host
                .get(host)
                .copied()
                .unwrap_or("unknown")
                .to_owned(),
            Bucketing::User => unreachable!("user buckets follow jobs"),
        })
    };

    let mut c = Vec::new();
    let mut s = Vec::new();
    let mut b = Vec::new();
    for (jobuser, records) in
        u.iter()
            .fold(BTreeMap::<&str, Vec<&str>>::new(), |mut m, (r, col, _)| {
                m.entry(r).or_default().push(col);
                m
            })
    {
        let Some((job, user)) = job_user(jobuser) else {
            continue;
        };
        for rec in &records {
            let ts = parse_record_key(rec).map_or(0, |(ts, _, _)| ts);
            let period = raw.periods.get(&ts).copied().unwrap_or(DEFAULT_PERIOD_S) as f64;
            let cores = raw
                .job_cores
                .get(&((*rec).to_owned(), job.clone()))
                .copied()
                .unwrap_or(0.0);
            c.push(Triple::new(*rec, jobuser, cores * period / 3600.0));
            if bucketing != Bucketing::User {
                if let Some(bucket) = record_bucket(rec) {
                    b.push(Triple::new(*rec, bucket, 1.0));
                }
            }
        }
        // Records are in key order, so the first is the earliest.
        let first = records[0];
        let bucket = match bucketing {
            Bucketing::User => Some(user.clone()),
            _ => record_bucket(first),
        };
        if let Some(bucket) = bucket {
            s.push(Triple::new(jobuser, bucket, 1.0));
        }
        if bucketing == Bucketing::User {
            b.push(Triple::new(jobuser, user, 1.0));
        }
    }
    let c = AssocArray::from_triples(c, Collision::Sum)?;
    let s = AssocArray::from_triples(s, Collision::Sum)?;
    let b = AssocArray::from_triples(b, Collision::Last)?;
    let core_hours = match bucketing {
        Bucketing::User => c.multiply(&b).col_sums(),
        _ => c.transpose().multiply(&b).col_sums(),
    };
    let submitted = s.col_sums();

    let cycles: Vec<u64> = store.cycle_timestamps(from, to)?;
    let mut peak: BTreeMap<String, f64> = BTreeMap::new();
    let mut bump = |k: String, v: f64| {
        let e = peak.entry(k).or_insert(0.0);
        *e = e.max(v);
    };
    match bucketing {
        Bucketing::DayOfWeek | Bucketing::HourOfDay => {
            for ts in &cycles {
                let k = if bucketing == Bucketing::DayOfWeek {
                    weekday(*ts).to_owned()
                } else {
                    hour(*ts)
                };
                bump(k, raw.it_kw.get(ts).copied().unwrap_or(0.0));
            }
        }
        Bucketing::Rack => {
            for ((rack, _), kw) in &raw.rack_kw {
                bump(rack.clone(), *kw);
            }
        }
        Bucketing::User => {
            let mut active: BTreeSet<(String, u64)> = BTreeSet::new();
            for (jobuser, rec, _) in u.iter() {
                if let (Some((_, user)), Some((ts, _, _))) =
                    (job_user(jobuser), parse_record_key(rec))
                {
                    active.insert((user, ts));
                }
            }
            for (user, ts) in active {
                bump(user, raw.it_kw.get(&ts).copied().unwrap_or(0.0));
            }
        }
    }

    let buckets: Vec<String> = match bucketing {
        Bucketing::DayOfWeek => WEEKDAYS.iter().map(|d| (*d).to_owned()).collect(),
        Bucketing::HourOfDay => (0..24).map(|h| format!("{h:02}")).collect(),
        Bucketing::User => submitted
            .keys()
            .chain(core_hours.keys())
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
        Bucketing::Rack => baseline
            .hosts()
            .iter()
            .map(|h| h.rack.clone())
            .chain(submitted.keys().cloned())
            .chain(core_hours.keys().cloned())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    let rows = buckets
        .into_iter()
        .map(|bucket| UsageRow {
            jobs_submitted: submitted.get(&bucket).copied().unwrap_or(0.0) as u64,
            core_hours: core_hours.get(&bucket).copied().unwrap_or(0.0),
            peak_kw: peak.get(&bucket).copied().unwrap_or(0.0),
            bucket,
        })
        .collect();
    Ok(UsageReport {
        bucketing,
        from,
        to,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Hotspot {
    pub rack: String,
    pub zone: String,
    pub mean_temp_delta: f64,
    pub peak_temp: f64,
}

pub fn write_hotspots_tsv<W: Write>(rows: &[Hotspot], mut out: W) -> std::io::Result<()> {
    writeln!(out, "rack\tzone\tmeanTempDelta\tpeakTemp")?;
    for h in rows {
        writeln!(
            out,
            "{}\t{}\t{:.3}\t{:.3}",
            h.rack, h.zone, h.mean_temp_delta, h.peak_temp
        )?;
    }
    Ok(())
}

/// Mean rack temperature against the pod-wide mean over the period, hottest
/// first. Temperature readings are the records exploded under `unit|°C`;
/// only points belonging to a rack count.
pub fn hotspot_report(
    store: &TripleStore,
    baseline: &Baseline,
    from: u64,
    to: u64,
) -> Result<Vec<Hotspot>, HistoryError> {
    let temps = store.query_range(
        Table::TedgeT,
        &KeyRange::single("unit|°C"),
        &period_cols(from, to),
    )?;
    let records: BTreeSet<&str> = temps.iter().map(|(_, rec, _)| rec).collect();
    let mut groups: BTreeMap<(String, String), (f64, usize, f64)> = BTreeMap::new();
    let (mut sum, mut n) = (0.0, 0usize);
    let rows = KeyRange::set(records.iter().copied());
    store.scan(Table::Traw, &rows, |row, col, v| {
        if col != "value" {
            return;
        }
        let Some((_, _, id)) = parse_record_key(row) else {
            return;
        };
        let Some(rack) = layout::rack_of_point(id) else {
            return;
        };
        let zone = baseline
            .entry(id)
            .map_or_else(|| "-".to_owned(), |e| e.zone.clone());
        let g = groups
            .entry((rack, zone))
            .or_insert((0.0, 0, f64::NEG_INFINITY));
        g.0 += v;
        g.1 += 1;
        g.2 = g.2.max(v);
        sum += v;
        n += 1;
    })?;
    if n == 0 {
        return Err(HistoryError::NoData { from, to });
    }
    let pod_mean = sum / n as f64;
    let mut out: Vec<Hotspot> = groups
        .into_iter()
        .map(|((rack, zone), (s, k, peak))| Hotspot {
            rack,
            zone,
            mean_temp_delta: s / k as f64 - pod_mean,
            peak_temp: peak,
        })
        .collect();
    out.sort_by(|a, b| {
        b.mean_temp_delta
            .total_cmp(&a.mean_temp_delta)
            .then_with(|| a.rack.cmp(&b.rack))
    });
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FailureCount {
    pub component: String,
    pub failure_count: u64,
    pub hostnames: Vec<String>,
}

pub fn write_failures_tsv<W: Write>(rows: &[FailureCount], mut out: W) -> std::io::Result<()> {
    writeln!(out, "component\tfailureCount\thostnames")?;
    for f in rows {
        writeln!(
            out,
            "{}\t{}\t{}",
            f.component,
            f.failure_count,
            f.hostnames.join(",")
        )?;
    }
    Ok(())
}

/// Red reasons by hostname for one cycle.
pub type CycleReasons = BTreeMap<String, BTreeSet<String>>;

/// Per-cycle Red reasons of every inventory host, oldest first.
pub fn red_reasons(
    store: &TripleStore,
    baseline: &Baseline,
    from: u64,
    to: u64,
) -> Result<Vec<(u64, CycleReasons)>, HistoryError> {
    let mut out = Vec::new();
    for ts in store.cycle_timestamps(from, to)? {
        let rows = KeyRange::prefix(format!("{ts:010}|{NODE_SOURCE}|"));
        let raw = store.query_range(Table::Traw, &rows, &KeyRange::All)?;
        let edge = store.query_range(Table::Tedge, &rows, &KeyRange::All)?;
        let nodes = decode_cycle(ts, &raw, &edge).nodes;
        let mut reasons: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for n in &nodes {
            reasons.insert(
                n.hostname.clone(),
                classify(n, baseline).reasons.into_iter().collect(),
            );
        }
        for h in baseline.hosts() {
            reasons
                .entry(h.hostname.clone())
                .or_insert_with(|| missing_status(&h.hostname).reasons.into_iter().collect());
        }
        out.push((ts, reasons));
    }
    Ok(out)
}

/// Counts each Red reason's rising edges per host over the period (a reason
/// already present in the first cycle counts once), most frequent first.
pub fn failure_inventory(
    store: &TripleStore,
    baseline: &Baseline,
    from: u64,
    to: u64,
) -> Result<Vec<FailureCount>, HistoryError> {
    let cycles = red_reasons(store, baseline, from, to)?;
    if cycles.is_empty() {
        return Err(HistoryError::NoData { from, to });
    }
    let mut prev: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut counts: BTreeMap<String, (u64, BTreeSet<String>)> = BTreeMap::new();
    for (_, reasons) in cycles {
        for (host, now) in &reasons {
            let before = prev.get(host);
            for r in now {
                if before.is_none_or(|b| !b.contains(r)) {
                    let e = counts.entry(r.clone()).or_default();
                    e.0 += 1;
                    e.1.insert(host.clone());
                }
            }
        }
        prev = reasons;
    }
    let mut out: Vec<FailureCount> = counts
        .into_iter()
        .map(|(component, (n, hosts))| FailureCount {
            component,
            failure_count: n,
            hostnames: hosts.into_iter().collect(),
        })
        .collect();
    out.sort_by(|a, b| {
        b.failure_count
            .cmp(&a.failure_count)
            .then_with(|| a.component.cmp(&b.component))
    });
    Ok(out)
}
