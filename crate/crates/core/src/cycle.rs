//! Evaluation of one collected cycle: detection, classification and the
//! resulting frame. Live pipeline and historical replay both go through
//! here, which is what makes replayed frames byte-identical.

use std::collections::BTreeSet;

use crate::assoc::{AssocArray, Collision};
use crate::baseline::{self, classify, Alert, Baseline, Detection, NodeStatus};
use crate::ingest::reading_triples;
use crate::records::{NodeRecord, SensorReading};
use crate::vizgen::{build_frame, PodSummary, VizFrame};

#[derive(Debug, Clone)]
pub struct Correlation {
    pub timestamp: u64,
    /// `(recordKey, "value")` entries, as the store would return them.
    pub frame: AssocArray,
    /// `(pointId, "value")` entries.
    pub values: AssocArray,
    pub detection: Detection,
    /// Sensor alerts followed by missing-host alerts.
    pub alerts: Vec<Alert>,
    pub statuses: Vec<NodeStatus>,
    pub summary: PodSummary,
}

/// Same shape as `latestFrame` over the raw table.
pub fn readings_frame(readings: &[SensorReading]) -> AssocArray {
    let triples = readings
        .iter()
        .flat_map(reading_triples)
        .filter(|t| t.col == "value");
    AssocArray::from_triples(triples, Collision::Last).expect("readings produce valid triples")
}

pub fn correlate(
    timestamp: u64,
    readings: &[SensorReading],
    nodes: &[NodeRecord],
    baseline: &Baseline,
) -> Correlation {
    let frame = readings_frame(readings);
    let detection = baseline::detect(&frame, baseline);
    let (values, _) = baseline::point_values(&frame);
    let mut alerts = detection.alerts.clone();
    let present: BTreeSet<&str> = nodes.iter().map(|n| n.hostname.as_str()).collect();
    alerts.extend(baseline::missing_assets(
        baseline,
        present.iter().copied(),
        timestamp,
    ));
    let statuses = nodes.iter().map(|n| classify(n, baseline)).collect();
    let summary = PodSummary::from_values(&values, nodes);
    Correlation {
        timestamp,
        frame,
        values,
        detection,
        alerts,
        statuses,
        summary,
    }
}

pub fn frame_for(frame_id: u64, c: &Correlation, baseline: &Baseline) -> VizFrame {
    build_frame(
        frame_id,
        c.timestamp,
        &c.statuses,
        &c.alerts,
        &c.summary,
        baseline,
    )
}
