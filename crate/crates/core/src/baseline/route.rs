use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tracing::warn;

use super::{Alert, Severity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Sink {
    Frame,
    EventLog,
    Email,
}

/// Sinks an alert of this severity is delivered to.
pub fn route_alert(severity: Severity) -> &'static [Sink] {
    match severity {
        Severity::Info => &[Sink::Frame],
        Severity::Warning => &[Sink::Frame, Sink::EventLog],
        Severity::Critical => &[Sink::Frame, Sink::EventLog, Sink::Email],
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub sink: Sink,
    pub delivered: bool,
}

#[derive(Serialize)]
struct SpoolMessage<'a> {
    timestamp: u64,
    severity: Severity,
    #[serde(rename = "pointId")]
    point_id: &'a str,
    observed: f64,
    limit: f64,
}

/// Writes routed alerts to the event log and the email spool. Files are
/// opened lazily; a sink that cannot be written is reported as undelivered
/// and logged, never raised.
#[derive(Debug, Default)]
pub struct AlertRouter {
    event_log: Option<PathBuf>,
    spool: Option<PathBuf>,
    event_file: Option<File>,
    spool_file: Option<File>,
}

impl AlertRouter {
    pub fn new(event_log: Option<&Path>, spool: Option<&Path>) -> Self {
        Self {
            event_log: event_log.map(Path::to_owned),
            spool: spool.map(Path::to_owned),
            ..Self::default()
        }
    }

    pub fn route(&mut self, alert: &Alert) -> Vec<Delivery> {
        route_alert(alert.severity)
            .iter()
            .map(|&sink| {
                let delivered = match sink {
                    Sink::Frame => true,
                    Sink::EventLog => {
                        let line = serde_json::to_string(alert).expect("alerts serialize");
                        append(&self.event_log, &mut self.event_file, &line)
                    }
                    Sink::Email => {
                        let msg = SpoolMessage {
                            timestamp: alert.timestamp,
                            severity: alert.severity,
                            point_id: &alert.point_id,
                            observed: alert.observed,
                            limit: alert.limit,
                        };
                        let line = serde_json::to_string(&msg).expect("messages serialize");
                        append(&self.spool, &mut self.spool_file, &line)
                    }
                };
                if !delivered {
                    warn!(sink = ?sink, point = %alert.point_id, "alert sink unavailable");
                }
                Delivery { sink, delivered }
            })
            .collect()
    }
}

fn append(path: &Option<PathBuf>, file: &mut Option<File>, line: &str) -> bool {
    let Some(path) = path else {
        return false;
    };
    if file.is_none() {
        match OpenOptions::new().create(true).append(true).open(path) {
            Ok(f) => *file = Some(f),
            Err(e) => {
                warn!("cannot open {}: {e}", path.display());
                return false;
            }
        }
    }
    let f = file.as_mut().expect("opened above");
    writeln!(f, "{line}").and_then(|_| f.flush()).is_ok()
}
