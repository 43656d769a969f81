use serde::{Deserialize, Serialize};

use super::Baseline;
use crate::records::NodeRecord;

pub const REASON_IMAGE: &str = "image out of sync";
pub const REASON_MEMORY: &str = "memory threshold exhausted";
pub const REASON_STALE: &str = "not responding";
pub const REASON_MISSING: &str = "missing from telemetry";

pub fn failed_reason(component: &str) -> String {
    format!("failed component {component}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Color {
    Colorless,
    Blue,
    Green,
    Red,
}

impl Color {
    pub fn as_str(self) -> &'static str {
        match self {
            Color::Colorless => "Colorless",
            Color::Blue => "Blue",
            Color::Green => "Green",
            Color::Red => "Red",
        }
    }
}

impl std::str::FromStr for Color {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        [Color::Colorless, Color::Blue, Color::Green, Color::Red]
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown color {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NodeStatus {
    pub hostname: String,
    pub color: Color,
    pub height_scale: f64,
    pub reasons: Vec<String>,
}

/// Status of one node against the baseline's node settings.
///
/// Any failed check makes the node Red. Otherwise a node with at least half
/// of its cores scheduled is Blue, one with some but fewer than half is
/// Green, and an idle node is Colorless.
pub fn classify(record: &NodeRecord, baseline: &Baseline) -> NodeStatus {
    let s = &baseline.settings;
    let mut reasons = Vec::new();
    if s.expected_image
        .as_ref()
        .is_some_and(|img| img != &record.image_version)
    {
        reasons.push(REASON_IMAGE.to_owned());
    }
    if record.mem_used_pct > s.mem_threshold_pct {
        reasons.push(REASON_MEMORY.to_owned());
    }
    if record.stale {
        reasons.push(REASON_STALE.to_owned());
    }
    let mut failed: Vec<&String> = record.failed_components.iter().collect();
    failed.sort();
    failed.dedup();
    reasons.extend(failed.into_iter().map(|c| failed_reason(c)));

    let scheduled = u64::from(record.scheduled_cores);
    let total = u64::from(record.total_cores);
    let color = if !reasons.is_empty() {
        Color::Red
    } else if scheduled > 0 && 2 * scheduled >= total {
        Color::Blue
    } else if scheduled > 0 {
        Color::Green
    } else {
        Color::Colorless
    };
    let height_scale = if total > 0 {
        (record.cpu_load / total as f64).clamp(0.0, 2.0)
    } else {
        0.0
    };
    NodeStatus {
        hostname: record.hostname.clone(),
        color,
        height_scale,
        reasons,
    }
}

/// Status for an inventory host that sent no record.
pub fn missing_status(hostname: &str) -> NodeStatus {
    NodeStatus {
        hostname: hostname.to_owned(),
        color: Color::Red,
        height_scale: 0.0,
        reasons: vec![REASON_MISSING.to_owned()],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::NodeSettings;
    use crate::records::JobSlot;

    fn baseline() -> Baseline {
        Baseline::new(
            vec![],
            vec![],
            NodeSettings {
                expected_image: Some("img".into()),
                ..NodeSettings::default()
            },
        )
        .unwrap()
    }

    fn record(cores: u32) -> NodeRecord {
        NodeRecord {
            hostname: "n".into(),
            timestamp: 1,
            image_version: "img".into(),
            kernel_version: "k".into(),
            cpu_load: f64::from(cores),
            mem_used_pct: 30.0,
            disk_used_pct: 10.0,
            total_cores: 32,
            scheduled_cores: cores,
            jobs: if cores > 0 {
                vec![JobSlot {
                    job_id: "j".into(),
                    user: "u".into(),
                    cores,
                }]
            } else {
                vec![]
            },
            ip: String::new(),
            mac: String::new(),
            stale: false,
            failed_components: vec![],
        }
    }

    #[test]
    fn colors() {
        let b = baseline();
        assert_eq!(classify(&record(0), &b).color, Color::Colorless);
        assert_eq!(classify(&record(20), &b).color, Color::Blue);
        assert_eq!(classify(&record(16), &b).color, Color::Blue);
        assert_eq!(classify(&record(8), &b).color, Color::Green);
        let mut drifted = record(8);
        drifted.image_version = "other".into();
        let s = classify(&drifted, &b);
        assert_eq!(s.color, Color::Red);
        assert_eq!(s.reasons, [REASON_IMAGE]);
        assert_eq!(classify(&record(20), &b).height_scale, 20.0 / 32.0);
    }

    #[test]
    fn failed_components_sorted() {
        let mut r = record(0);
        r.failed_components = vec!["psu1".into(), "dimm3".into()];
        assert_eq!(
            classify(&r, &baseline()).reasons,
            ["failed component dimm3", "failed component psu1"]
        );
    }
}
