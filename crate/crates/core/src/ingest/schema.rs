//! Exploded-schema triples for sensor readings, node records and cycle
//! markers, and the inverse mapping used to rebuild them from the store.
//!
//! Record keys are `zeropad10(timestamp)|source|id`, so rows sort by time.
//! Categorical fields become exploded columns `field|value` holding 1;
//! numeric fields become raw columns holding the number. A column name
//! contains `|` exactly when it is exploded.

use std::collections::BTreeMap;

use crate::assoc::{AssocArray, Triple};
use crate::records::{JobSlot, NodeRecord, SensorReading};

pub const NODE_SOURCE: &str = "cluster";
pub const CYCLE_SOURCE: &str = "pipeline";
pub const CYCLE_ID: &str = "cycle";

pub fn record_key(timestamp: u64, source: &str, id: &str) -> String {
    format!("{timestamp:010}|{source}|{id}")
}

/// Splits a record key into `(timestamp, source, id)`. The id may itself
/// contain `|`.
pub fn parse_record_key(key: &str) -> Option<(u64, &str, &str)> {
    let (ts, rest) = key.split_once('|')?;
    let (source, id) = rest.split_once('|')?;
    Some((ts.parse().ok()?, source, id))
}

/// Row prefix covering every record of one timestamp.
pub fn time_prefix(timestamp: u64) -> String {
    format!("{timestamp:010}|")
}

pub fn is_exploded(col: &str) -> bool {
    col.contains('|')
}

fn exploded(row: &str, field: &str, value: &str) -> Triple {
    Triple::new(row, format!("{field}|{value}"), 1.0)
}

pub fn reading_triples(r: &SensorReading) -> Vec<Triple> {
    let row = record_key(r.timestamp, &r.source, &r.point_id);
    vec![
        exploded(&row, "unit", &r.unit),
        Triple::new(row, "value", r.value),
    ]
}

const JOB_CORES: &str = "jobcores:";

pub fn node_triples(n: &NodeRecord) -> Vec<Triple> {
    let row = record_key(n.timestamp, NODE_SOURCE, &n.hostname);
    let mut out = vec![
        exploded(&row, "image", &n.image_version),
        exploded(&row, "kernel", &n.kernel_version),
        exploded(&row, "ip", &n.ip),
        exploded(&row, "mac", &n.mac),
        exploded(&row, "stale", if n.stale { "true" } else { "false" }),
    ];
    for j in &n.jobs {
        out.push(exploded(&row, "user", &j.user));
        out.push(exploded(&row, "job", &j.job_id));
        out.push(exploded(
            &row,
            "jobuser",
            &format!("{}|{}", j.job_id, j.user),
        ));
    }
    for c in &n.failed_components {
        out.push(exploded(&row, "failed", c));
    }
    for (field, v) in [
        ("cpu_load", n.cpu_load),
        ("mem_used_pct", n.mem_used_pct),
        ("disk_used_pct", n.disk_used_pct),
        ("total_cores", f64::from(n.total_cores)),
        ("scheduled_cores", f64::from(n.scheduled_cores)),
    ] {
        out.push(Triple::new(row.clone(), field, v));
    }
    for j in &n.jobs {
        out.push(Triple::new(
            row.clone(),
            format!("{JOB_CORES}{}", j.job_id),
            f64::from(j.cores),
        ));
    }
    dedup(out)
}

/// Two jobs of the same user explode to the same `user|` column; keep one.
fn dedup(mut triples: Vec<Triple>) -> Vec<Triple> {
    let mut seen = std::collections::HashSet::new();
    triples.retain(|t| seen.insert(t.col.clone()));
    triples
}

/// Marker row for one pipeline cycle, carrying its frame id and period.
pub fn cycle_triples(timestamp: u64, frame_id: u64, period_s: u64) -> Vec<Triple> {
    let row = record_key(timestamp, CYCLE_SOURCE, CYCLE_ID);
    vec![
        Triple::new(row.clone(), "frame_id", frame_id as f64),
        Triple::new(row, "period_s", period_s as f64),
    ]
}

/// Everything stored for one timestamp, decoded back into records.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DecodedCycle {
    pub timestamp: u64,
    pub frame_id: Option<u64>,
    pub period_s: Option<u64>,
    /// Ordered by record key.
    pub readings: Vec<SensorReading>,
    /// Ordered by hostname.
    pub nodes: Vec<NodeRecord>,
}

/// Rebuilds records from the raw and exploded entries of a single
/// timestamp. Absent raw fields decode as 0, matching sparse semantics.
pub fn decode_cycle(timestamp: u64, raw: &AssocArray, edge: &AssocArray) -> DecodedCycle {
    let mut out = DecodedCycle {
        timestamp,
        ..Default::default()
    };
    let mut rows: BTreeMap<&str, ()> = BTreeMap::new();
    for r in raw.row_keys().chain(edge.row_keys()) {
        rows.insert(r, ());
    }
    for row in rows.keys() {
        let Some((ts, source, id)) = parse_record_key(row) else {
            continue;
        };
        if ts != timestamp {
            continue;
        }
        let fields = raw.row(row);
        let num = |f: &str| fields.and_then(|m| m.get(f)).copied().unwrap_or(0.0);
        let cats: Vec<(&str, &str)> = edge
            .row(row)
            .map(|m| m.keys().filter_map(|c| c.split_once('|')).collect())
            .unwrap_or_default();
        let cat = |f: &str| {
            cats.iter()
                .find(|(k, _)| *k == f)
                .map(|(_, v)| (*v).to_owned())
        };
        match source {
            CYCLE_SOURCE if id == CYCLE_ID => {
                out.frame_id = Some(num("frame_id") as u64);
                out.period_s = Some(num("period_s") as u64);
            }
            NODE_SOURCE => {
                let mut jobs: Vec<JobSlot> = cats
                    .iter()
                    .filter(|(k, _)| *k == "jobuser")
                    .filter_map(|(_, v)| v.rsplit_once('|'))
                    .map(|(job_id, user)| JobSlot {
                        job_id: job_id.to_owned(),
                        user: user.to_owned(),
                        cores: num(&format!("{JOB_CORES}{job_id}")) as u32,
                    })
                    .collect();
                jobs.sort();
                out.nodes.push(NodeRecord {
                    hostname: id.to_owned(),
                    timestamp: ts,
                    image_version: cat("image").unwrap_or_default(),
                    kernel_version: cat("kernel").unwrap_or_default(),
                    cpu_load: num("cpu_load"),
                    mem_used_pct: num("mem_used_pct"),
                    disk_used_pct: num("disk_used_pct"),
                    total_cores: num("total_cores") as u32,
                    scheduled_cores: num("scheduled_cores") as u32,
                    jobs,
                    ip: cat("ip").unwrap_or_default(),
                    mac: cat("mac").unwrap_or_default(),
                    stale: cat("stale").as_deref() == Some("true"),
                    failed_components: cats
                        .iter()
                        .filter(|(k, _)| *k == "failed")
                        .map(|(_, v)| (*v).to_owned())
                        .collect(),
                });
            }
            _ => out.readings.push(SensorReading {
                source: source.to_owned(),
                point_id: id.to_owned(),
                timestamp: ts,
                value: num("value"),
                unit: cat("unit").unwrap_or_default(),
            }),
        }
    }
    out.nodes.sort_by(|a, b| a.hostname.cmp(&b.hostname));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assoc::Collision;

    #[test]
    fn reading_schema() {
        let r = SensorReading {
            source: "ecopod".into(),
            point_id: "zone1.temp".into(),
            timestamp: 1_700_000_000,
            value: 23.1,
            unit: "°C".into(),
        };
        let t = reading_triples(&r);
        assert_eq!(
            t,
            [
                Triple::new("1700000000|ecopod|zone1.temp", "unit|°C", 1.0),
                Triple::new("1700000000|ecopod|zone1.temp", "value", 23.1)
            ]
        );
        assert_eq!(reading_triples(&r), t);
    }

    fn node() -> NodeRecord {
        NodeRecord {
            hostname: "node0007".into(),
            timestamp: 42,
            image_version: "img".into(),
            kernel_version: "k".into(),
            cpu_load: 12.5,
            mem_used_pct: 40.0,
            disk_used_pct: 0.0,
            total_cores: 32,
            scheduled_cores: 24,
            jobs: vec![
                JobSlot {
                    job_id: "j1".into(),
                    user: "alice".into(),
                    cores: 16,
                },
                JobSlot {
                    job_id: "j2".into(),
                    user: "bob".into(),
                    cores: 8,
                },
            ],
            ip: "10.0.0.7".into(),
            mac: "02:00:00:00:00:07".into(),
            stale: false,
            failed_components: vec!["dimm3".into()],
        }
    }

    #[test]
    fn node_with_two_jobs_explodes_users_and_jobs() {
        let cols: Vec<String> = node_triples(&node()).into_iter().map(|t| t.col).collect();
        for c in ["user|alice", "user|bob", "job|j1", "job|j2"] {
            assert!(cols.iter().any(|x| x == c), "{c}");
        }
    }

    #[test]
    fn decode_inverts_encode() {
        let n = node();
        let r = SensorReading {
            source: "ecopod".into(),
            point_id: "p".into(),
            timestamp: 42,
            value: -1.25,
            unit: String::new(),
        };
        let mut all = node_triples(&n);
        all.extend(reading_triples(&r));
        all.extend(cycle_triples(42, 9, 15));
        let (edge, raw): (Vec<_>, Vec<_>) = all.into_iter().partition(|t| is_exploded(&t.col));
        let edge = AssocArray::from_triples(edge, Collision::Last).unwrap();
        let raw = AssocArray::from_triples(raw, Collision::Last).unwrap();
        let d = decode_cycle(42, &raw, &edge);
        assert_eq!(d.frame_id, Some(9));
        assert_eq!(d.period_s, Some(15));
        assert_eq!(d.readings, [r]);
        assert_eq!(d.nodes, [n]);
    }
}
