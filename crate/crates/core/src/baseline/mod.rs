//! Expected system profile and the checks run against it each cycle.
//!
//! A baseline file lists one row per monitored point:
//! `pointId<TAB>kind<TAB>param<TAB>severity<TAB>cueClass<TAB>zone`.
//! Besides the `MIN`, `MAX` and `BINARY` point kinds, two row kinds carry
//! the rest of the profile: `HOST` rows declare inventory hosts (param is
//! `rack/slot`) and `SETTING` rows set node-check parameters
//! (`expected_image`, `mem_threshold_pct`, `stale_cycles`); their severity,
//! cue and zone columns are `-`.

mod classify;
mod detect;
mod route;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use classify::{
    classify, failed_reason, missing_status, Color, NodeStatus, REASON_IMAGE, REASON_MEMORY,
    REASON_MISSING, REASON_STALE,
};
pub use detect::{
    detect, detect_deviations, missing_assets, point_values, AlertTracker, Detection, Transition,
};
pub use route::{route_alert, AlertRouter, Delivery, Sink};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: duplicate point id {point_id:?}")]
    DuplicatePointId { line: usize, point_id: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Severity {
    Info,
    Warning,
    Critical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CueClass {
    MechanicalCooling,
    Economizer,
    Water,
    Power,
    Temperature,
    Fire,
    NodeHealth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Kind {
    Min,
    Max,
    Binary,
}

macro_rules! text_enum {
    ($ty:ty, $($v:ident => $s:literal),+) => {
        impl $ty {
            pub const ALL: &'static [$ty] = &[$(<$ty>::$v),+];

            pub fn as_str(self) -> &'static str {
                match self { $(<$ty>::$v => $s),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($s => Ok(<$ty>::$v),)+
                    _ => Err(format!("unknown {} {s:?}", stringify!($ty))),
                }
            }
        }
    };
}

text_enum!(Severity, Info => "Info", Warning => "Warning", Critical => "Critical");
text_enum!(CueClass,
    MechanicalCooling => "MechanicalCooling",
    Economizer => "Economizer",
    Water => "Water",
    Power => "Power",
    Temperature => "Temperature",
    Fire => "Fire",
    NodeHealth => "NodeHealth");
text_enum!(Kind, Min => "MIN", Max => "MAX", Binary => "BINARY");

impl Kind {
    /// Whether `observed` violates a limit of this kind.
    pub fn violated(self, observed: f64, limit: f64) -> bool {
        match self {
            Kind::Min => observed < limit,
            Kind::Max => observed > limit,
            Kind::Binary => observed != limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BaselineEntry {
    pub point_id: String,
    pub kind: Kind,
    /// Threshold for MIN/MAX, expected value (0 or 1) for BINARY.
    pub limit: f64,
    pub severity: Severity,
    pub cue_class: CueClass,
    pub zone: String,
}

impl BaselineEntry {
    pub fn new(
        point_id: &str,
        kind: Kind,
        limit: f64,
        severity: Severity,
        cue_class: CueClass,
        zone: &str,
    ) -> Self {
        Self {
            point_id: point_id.into(),
            kind,
            limit,
            severity,
            cue_class,
            zone: zone.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Alert {
    pub point_id: String,
    pub kind: Kind,
    pub observed: f64,
    pub limit: f64,
    pub severity: Severity,
    pub cue_class: CueClass,
    pub timestamp: u64,
    pub zone: String,
}

impl Alert {
    pub fn from_entry(e: &BaselineEntry, observed: f64, timestamp: u64) -> Self {
        Self {
            point_id: e.point_id.clone(),
            kind: e.kind,
            observed,
            limit: e.limit,
            severity: e.severity,
            cue_class: e.cue_class,
            timestamp,
            zone: e.zone.clone(),
        }
    }

    /// Re-checks that the observed value really violates the limit.
    pub fn is_valid(&self) -> bool {
        self.kind.violated(self.observed, self.limit)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct InventoryHost {
    pub hostname: String,
    pub rack: String,
    pub slot: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSettings {
    pub expected_image: Option<String>,
    pub mem_threshold_pct: f64,
    pub stale_cycles: u32,
}

impl Default for NodeSettings {
    fn default() -> Self {
        Self {
            expected_image: None,
            mem_threshold_pct: 95.0,
            stale_cycles: 3,
        }
    }
}

/// Parsed baseline: point checks, host inventory and node settings.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Baseline {
    entries: Vec<BaselineEntry>,
    hosts: Vec<InventoryHost>,
    pub settings: NodeSettings,
}

impl Baseline {
    pub fn new(
        entries: Vec<BaselineEntry>,
        hosts: Vec<InventoryHost>,
        settings: NodeSettings,
    ) -> Result<Self, BaselineError> {
        let mut seen = HashSet::new();
        for (i, id) in entries
            .iter()
            .map(|e| &e.point_id)
            .chain(hosts.iter().map(|h| &h.hostname))
            .enumerate()
        {
            if !seen.insert(id.clone()) {
                return Err(BaselineError::DuplicatePointId {
                    line: i + 1,
                    point_id: id.clone(),
                });
            }
        }
        for (i, e) in entries.iter().enumerate() {
            validate_limit(e.kind, e.limit).map_err(|reason| BaselineError::Parse {
                line: i + 1,
                reason,
            })?;
        }
        let mut hosts = hosts;
        hosts.sort();
        Ok(Self {
            entries,
            hosts,
            settings,
        })
    }

    pub fn entries(&self) -> &[BaselineEntry] {
        &self.entries
    }

    pub fn entry(&self, point_id: &str) -> Option<&BaselineEntry> {
        self.entries.iter().find(|e| e.point_id == point_id)
    }

    /// Inventory hosts, sorted by hostname.
    pub fn hosts(&self) -> &[InventoryHost] {
        &self.hosts
    }

    /// Every expected entity id: hosts and monitored points.
    pub fn inventory(&self) -> BTreeSet<&str> {
        self.hosts
            .iter()
            .map(|h| h.hostname.as_str())
            .chain(self.entries.iter().map(|e| e.point_id.as_str()))
            .collect()
    }

    /// All (zone, cue) pairs the baseline can raise, for frame cue lists.
    pub fn cue_pairs(&self) -> BTreeSet<(String, CueClass)> {
        self.entries
            .iter()
            .map(|e| (e.zone.clone(), e.cue_class))
            .collect()
    }

    pub fn read_tsv<R: BufRead>(input: R) -> Result<Self, BaselineError> {
        let mut entries = Vec::new();
        let mut hosts = Vec::new();
        let mut settings = NodeSettings::default();
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let n = i + 1;
            let bad = |reason: String| BaselineError::Parse { line: n, reason };
            if line.trim().is_empty() || line.starts_with('#') || line.starts_with("pointId\t") {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 6 {
                return Err(bad(format!("expected 6 fields, got {}", f.len())));
            }
            if f[0].is_empty() {
                return Err(bad("empty point id".into()));
            }
            if seen.insert(f[0].to_owned(), n).is_some() {
                return Err(BaselineError::DuplicatePointId {
                    line: n,
                    point_id: f[0].to_owned(),
                });
            }
            match f[1] {
                "HOST" => {
                    let (rack, slot) = f[2]
                        .split_once('/')
                        .ok_or_else(|| bad(format!("host param {:?} is not rack/slot", f[2])))?;
                    hosts.push(InventoryHost {
                        hostname: f[0].to_owned(),
                        rack: rack.to_owned(),
                        slot: slot
                            .parse()
                            .map_err(|_| bad(format!("bad slot {slot:?}")))?,
                    });
                }
                "SETTING" => match f[0] {
                    "expected_image" => settings.expected_image = Some(f[2].to_owned()),
                    "mem_threshold_pct" => {
                        settings.mem_threshold_pct = f[2]
                            .parse::<f64>()
                            .ok()
                            .filter(|v| v.is_finite())
                            .ok_or_else(|| bad(format!("bad memory threshold {:?}", f[2])))?
                    }
                    "stale_cycles" => {
                        settings.stale_cycles = f[2]
                            .parse()
                            .map_err(|_| bad(format!("bad stale cycles {:?}", f[2])))?
                    }
                    other => return Err(bad(format!("unknown setting {other:?}"))),
                },
                kind => {
                    let kind: Kind = kind.parse().map_err(bad)?;
                    let limit: f64 = f[2]
                        .parse()
                        .map_err(|_| bad(format!("bad param {:?}", f[2])))?;
                    validate_limit(kind, limit).map_err(bad)?;
                    entries.push(BaselineEntry {
                        point_id: f[0].to_owned(),
                        kind,
                        limit,
                        severity: f[3].parse().map_err(bad)?,
                        cue_class: f[4].parse().map_err(bad)?,
                        zone: f[5].to_owned(),
                    });
                }
            }
        }
        hosts.sort();
        Ok(Self {
            entries,
            hosts,
            settings,
        })
    }

    pub fn load(path: &Path) -> Result<Self, BaselineError> {
        let f = std::fs::File::open(path)?;
        Self::read_tsv(std::io::BufReader::new(f))
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "pointId\tkind\tparam\tseverity\tcueClass\tzone")?;
        let s = &self.settings;
        if let Some(img) = &s.expected_image {
            writeln!(out, "expected_image\tSETTING\t{img}\t-\t-\t-")?;
        }
        writeln!(
            out,
            "mem_threshold_pct\tSETTING\t{}\t-\t-\t-",
            s.mem_threshold_pct
        )?;
        writeln!(out, "stale_cycles\tSETTING\t{}\t-\t-\t-", s.stale_cycles)?;
        for e in &self.entries {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                e.point_id, e.kind, e.limit, e.severity, e.cue_class, e.zone
            )?;
        }
        for h in &self.hosts {
            writeln!(out, "{}\tHOST\t{}/{}\t-\t-\t-", h.hostname, h.rack, h.slot)?;
        }
        Ok(())
    }
}

fn validate_limit(kind: Kind, limit: f64) -> Result<(), String> {
    if !limit.is_finite() {
        return Err(format!("non-finite limit {limit}"));
    }
    if kind == Kind::Binary && limit != 0.0 && limit != 1.0 {
        return Err(format!("BINARY expects 0 or 1, got {limit}"));
    }
    Ok(())
}
