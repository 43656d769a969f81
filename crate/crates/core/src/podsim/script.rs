use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use super::SimError;

/// A scripted disturbance applied to the pod or the cluster.
#[derive(Debug, Clone, PartialEq)]
pub enum Fault {
    /// Leak detected in a zone: water alarm set, humidity climbs.
    WaterEvent {
        zone: String,
    },
    /// Extra load of `kw` on one power feed.
    PowerSpike {
        feed: String,
        kw: f64,
    },
    FireBit,
    /// Forcing term of `rate` °C/s on a zone's temperature.
    TempRamp {
        zone: String,
        rate: f64,
    },
    /// Every node running the job leaks memory until it stops responding.
    MemoryLeak {
        job_id: String,
    },
    /// Host drifts off the common image.
    ImageDrift {
        host: String,
    },
    /// Host reports a failed hardware component.
    ComponentFailure {
        host: String,
        component: String,
    },
}

impl Fault {
    pub fn kind(&self) -> &'static str {
        match self {
            Fault::WaterEvent { .. } => "WaterEvent",
            Fault::PowerSpike { .. } => "PowerSpike",
            Fault::FireBit => "FireBit",
            Fault::TempRamp { .. } => "TempRamp",
            Fault::MemoryLeak { .. } => "MemoryLeak",
            Fault::ImageDrift { .. } => "ImageDrift",
            Fault::ComponentFailure { .. } => "ComponentFailure",
        }
    }

    fn args(&self) -> String {
        match self {
            Fault::WaterEvent { zone } => zone.clone(),
            Fault::PowerSpike { feed, kw } => format!("{feed},{kw}"),
            Fault::FireBit => String::new(),
            Fault::TempRamp { zone, rate } => format!("{zone},{rate}"),
            Fault::MemoryLeak { job_id } => job_id.clone(),
            Fault::ImageDrift { host } => host.clone(),
            Fault::ComponentFailure { host, component } => format!("{host},{component}"),
        }
    }

    pub fn parse(kind: &str, args: &str) -> Result<Fault, String> {
        let parts: Vec<&str> = if args.is_empty() {
            Vec::new()
        } else {
            args.split(',').map(str::trim).collect()
        };
        let want = |n: usize| {
            if parts.len() == n {
                Ok(())
            } else {
                Err(format!("{kind} takes {n} argument(s), got {}", parts.len()))
            }
        };
        let num = |s: &str| f64::from_str(s).map_err(|_| format!("bad number {s:?}"));
        Ok(match kind {
            "WaterEvent" => {
                want(1)?;
                Fault::WaterEvent {
                    zone: parts[0].into(),
                }
            }
            "PowerSpike" => {
                want(2)?;
                Fault::PowerSpike {
                    feed: parts[0].into(),
                    kw: num(parts[1])?,
                }
            }
            "FireBit" => {
                want(0)?;
                Fault::FireBit
            }
            "TempRamp" => {
                want(2)?;
                Fault::TempRamp {
                    zone: parts[0].into(),
                    rate: num(parts[1])?,
                }
            }
            "MemoryLeak" => {
                want(1)?;
                Fault::MemoryLeak {
                    job_id: parts[0].into(),
                }
            }
            "ImageDrift" => {
                want(1)?;
                Fault::ImageDrift {
                    host: parts[0].into(),
                }
            }
            "ComponentFailure" => {
                want(2)?;
                Fault::ComponentFailure {
                    host: parts[0].into(),
                    component: parts[1].into(),
                }
            }
            other => return Err(format!("unknown fault {other:?}")),
        })
    }
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}", self.kind(), self.args())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptEntry {
    /// Simulation seconds at which the fault fires.
    pub at: f64,
    pub fault: Fault,
}

/// Time-ordered list of faults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FaultScript {
    entries: Vec<ScriptEntry>,
}

impl FaultScript {
    pub fn new(entries: Vec<ScriptEntry>) -> Result<Self, SimError> {
        if let Some(w) = entries.windows(2).find(|w| w[1].at < w[0].at) {
            return Err(SimError::InvalidConfig(format!(
                "fault times must be non-decreasing ({} after {})",
                w[1].at, w[0].at
            )));
        }
        if let Some(e) = entries.iter().find(|e| !(e.at.is_finite() && e.at >= 0.0)) {
            return Err(SimError::InvalidConfig(format!("bad fault time {}", e.at)));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ScriptEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses `time<TAB>fault<TAB>args` lines; `#` starts a comment line.
    pub fn read_tsv<R: BufRead>(input: R) -> Result<Self, SimError> {
        let mut entries = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: String| SimError::Parse {
                line: i + 1,
                reason,
            };
            let mut f = line.splitn(3, '\t');
            let at = f.next().unwrap_or_default();
            let kind = f.next().ok_or_else(|| bad("missing fault kind".into()))?;
            let args = f.next().unwrap_or("");
            let at: f64 = at
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad time {at:?}")))?;
            let fault = Fault::parse(kind.trim(), args.trim()).map_err(bad)?;
            entries.push(ScriptEntry { at, fault });
        }
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let f = std::fs::File::open(path)?;
        Self::read_tsv(std::io::BufReader::new(f))
    }

    pub fn to_tsv(&self) -> String {
        self.entries
            .iter()
            .map(|e| format!("{}\t{}\n", e.at, e.fault))
            .collect()
    }
}
