//! Per-cycle visualization frames and their canonical JSON form.
//!
//! Canonical bytes: object keys sorted, every float rounded to six
//! significant digits and printed in shortest round-trip form, one trailing
//! newline. Equal frames serialize to identical bytes.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::assoc::AssocArray;
use crate::baseline::{missing_status, Alert, Baseline, Color, CueClass, NodeStatus};
use crate::podsim::layout::{self, FEEDS};
use crate::records::NodeRecord;

pub const FRAME_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("malformed frame: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("frame version {0} is not supported")]
    Version(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PodCue {
    pub zone: String,
    pub cue_class: CueClass,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Entity {
    pub entity_id: String,
    pub rack: String,
    pub slot_index: u32,
    pub color: Color,
    pub height_scale: f64,
    pub badges: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FrameStats {
    pub nodes_total: u32,
    pub nodes_red: u32,
    pub jobs_running: u32,
    #[serde(rename = "totalKW")]
    pub total_kw: f64,
    pub pue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VizFrame {
    pub v: u32,
    pub frame_id: u64,
    pub timestamp: u64,
    pub pod_cues: Vec<PodCue>,
    pub entities: Vec<Entity>,
    pub active_alerts: Vec<Alert>,
    pub stats: FrameStats,
}

/// Facility power and cluster load for one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PodSummary {
    pub it_kw: f64,
    pub cooling_kw: f64,
    pub jobs_running: u32,
}

impl PodSummary {
    /// IT power is the sum of the feed meters; overhead is the cooling meter.
    pub fn from_values(values: &AssocArray, records: &[NodeRecord]) -> Self {
        let it_kw = FEEDS
            .iter()
            .map(|f| values.value(&layout::feed_point(f), "value"))
            .sum();
        let jobs: BTreeSet<&str> = records
            .iter()
            .filter(|r| !r.stale)
            .flat_map(|r| r.jobs.iter().map(|j| j.job_id.as_str()))
            .collect();
        Self {
            it_kw,
            cooling_kw: values.value(layout::COOLING_POWER, "value"),
            jobs_running: jobs.len() as u32,
        }
    }

    pub fn pue(&self) -> f64 {
        if self.it_kw > 0.0 {
            (self.it_kw + self.cooling_kw) / self.it_kw
        } else {
            1.0
        }
    }
}

/// Assembles the frame. Entities follow the baseline inventory, so a host
/// without a status renders Red as missing; each entity carries its status
/// reasons plus the cue of any alert raised against it.
pub fn build_frame(
    frame_id: u64,
    timestamp: u64,
    statuses: &[NodeStatus],
    alerts: &[Alert],
    summary: &PodSummary,
    baseline: &Baseline,
) -> VizFrame {
    let by_host: BTreeMap<&str, &NodeStatus> =
        statuses.iter().map(|s| (s.hostname.as_str(), s)).collect();
    let mut host_cues: BTreeMap<&str, BTreeSet<CueClass>> = BTreeMap::new();
    let mut zone_cues: BTreeSet<(&str, CueClass)> = BTreeSet::new();
    for a in alerts {
        zone_cues.insert((a.zone.as_str(), a.cue_class));
        if by_host.contains_key(a.point_id.as_str())
            || baseline.hosts().iter().any(|h| h.hostname == a.point_id)
        {
            host_cues
                .entry(a.point_id.as_str())
                .or_default()
                .insert(a.cue_class);
        }
    }
    let mut entities = Vec::with_capacity(baseline.hosts().len());
    let mut red = 0;
    for h in baseline.hosts() {
        let missing;
        let status = match by_host.get(h.hostname.as_str()) {
            Some(s) => *s,
            None => {
                missing = missing_status(&h.hostname);
                &missing
            }
        };
        if status.color == Color::Red {
            red += 1;
        }
        let mut badges = status.reasons.clone();
        if let Some(cues) = host_cues.get(h.hostname.as_str()) {
            badges.extend(cues.iter().map(|c| c.to_string()));
        }
        entities.push(Entity {
            entity_id: h.hostname.clone(),
            rack: h.rack.clone(),
            slot_index: h.slot,
            color: status.color,
            height_scale: status.height_scale,
            badges,
        });
    }
    let pod_cues = baseline
        .cue_pairs()
        .into_iter()
        .map(|(zone, cue_class)| PodCue {
            active: zone_cues.contains(&(zone.as_str(), cue_class)),
            zone,
            cue_class,
        })
        .collect();
    let mut active_alerts = alerts.to_vec();
    active_alerts.sort_by(|a, b| a.point_id.cmp(&b.point_id));
    VizFrame {
        v: FRAME_VERSION,
        frame_id,
        timestamp,
        pod_cues,
        entities,
        active_alerts,
        stats: FrameStats {
            nodes_total: baseline.hosts().len() as u32,
            nodes_red: red,
            jobs_running: summary.jobs_running,
            total_kw: summary.it_kw + summary.cooling_kw,
            pue: summary.pue(),
        },
    }
}

fn round_sig6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { 0.0 } else { x };
    }
    format!("{x:.5e}").parse().expect("formatted float parses")
}

fn canonicalize(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round_sig6(n.as_f64().expect("f64 number"));
            serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(canonicalize).collect()),
        // serde_json's default map is ordered by key.
        Value::Object(m) => {
            Value::Object(m.into_iter().map(|(k, v)| (k, canonicalize(v))).collect())
        }
        other => other,
    }
}

/// Canonical bytes of any serializable value (used for frames and
/// protocol messages alike).
pub fn canonical_json<T: Serialize>(value: &T) -> Vec<u8> {
    let v = canonicalize(serde_json::to_value(value).expect("value serializes"));
    let mut out = serde_json::to_vec(&v).expect("value serializes");
    out.push(b'\n');
    out
}

pub fn serialize_frame(frame: &VizFrame) -> Vec<u8> {
    canonical_json(frame)
}

pub fn deserialize_frame(bytes: &[u8]) -> Result<VizFrame, FrameError> {
    let frame: VizFrame = serde_json::from_slice(bytes)?;
    if frame.v != FRAME_VERSION {
        return Err(FrameError::Version(frame.v));
    }
    Ok(frame)
}
