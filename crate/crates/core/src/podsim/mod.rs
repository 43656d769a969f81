//! Digital twin of the pod and its compute cluster.
//!
//! The simulator evolves a simple first-order environmental model, hosts a
//! statically scheduled cluster, serves its state as Modbus registers and
//! node telemetry, and applies scripted faults covering every alert class
//! the monitoring pipeline handles.

mod host;
pub mod layout;
mod model;
pub mod scenario;
mod script;
mod server;
mod telemetry;

use std::io::BufRead;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use host::SimHost;
pub use model::{
    Forcing, JobSpec, PodState, SimConfig, SimNode, Simulator, ThermalParams, ZoneState,
    DEFAULT_EPOCH,
};
pub use script::{Fault, FaultScript, ScriptEntry};
pub use server::{answer as answer_modbus, ModbusServer, RegisterImage, SharedImage};
pub use telemetry::{SharedTelemetry, TelemetryClient, TelemetryServer};

use crate::kv::{KeyValues, KvError};
use crate::modbus::RegisterMap;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown zone {0}")]
    UnknownZone(String),
    #[error("unknown feed {0}")]
    UnknownFeed(String),
    #[error("unknown host {0}")]
    UnknownHost(String),
    #[error("unknown job {0}")]
    UnknownJob(String),
    #[error("bind failed: {0}")]
    BindFailed(String),
    #[error("invalid simulator config: {0}")]
    InvalidConfig(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Config(#[from] KvError),
    #[error(transparent)]
    Modbus(#[from] crate::modbus::ModbusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Expands `node0001-node0128` or a comma-separated host list.
pub fn parse_hosts(spec: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let split = |s: &str| {
                    let prefix_len =
                        s.len() - s.trim_start_matches(|c: char| !c.is_ascii_digit()).len();
                    let (p, n) = s.split_at(prefix_len);
                    n.parse::<usize>().map(|v| (p.to_owned(), v, n.len()))
                };
                let ((pa, na, width), (pb, nb, _)) = (
                    split(a).map_err(|_| format!("bad host range {part:?}"))?,
                    split(b).map_err(|_| format!("bad host range {part:?}"))?,
                );
                if pa != pb || na > nb {
                    return Err(format!("bad host range {part:?}"));
                }
                out.extend((na..=nb).map(|n| format!("{pa}{n:0width$}")));
            }
            None => out.push(part.to_owned()),
        }
    }
    Ok(out)
}

/// Reads `jobId user coresPerNode start duration hosts` lines; a duration of
/// `-` means open-ended.
pub fn read_jobs<R: BufRead>(input: R) -> Result<Vec<JobSpec>, SimError> {
    let mut jobs = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: String| SimError::Parse {
            line: i + 1,
            reason,
        };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 6 {
            return Err(bad(format!("expected 6 fields, got {}", f.len())));
        }
        let cores = f[2]
            .parse()
            .map_err(|_| bad(format!("bad cores {:?}", f[2])))?;
        let start = f[3]
            .parse()
            .map_err(|_| bad(format!("bad start {:?}", f[3])))?;
        let duration = match f[4] {
            "-" => None,
            d => Some(d.parse().map_err(|_| bad(format!("bad duration {d:?}")))?),
        };
        let hosts = parse_hosts(f[5]).map_err(bad)?;
        jobs.push(JobSpec::new(f[0], f[1], hosts, cores).starting_at(start, duration));
    }
    Ok(jobs)
}

/// Simulator settings file plus the paths it references.
#[derive(Debug, Clone)]
pub struct SimFile {
    pub config: SimConfig,
    pub register_map: Option<PathBuf>,
    pub fault_script: Option<PathBuf>,
}

const SIM_KEYS: &[&str] = &[
    "seed",
    "zones",
    "racks",
    "nodes",
    "nodes_per_rack",
    "cores_per_node",
    "register_points",
    "register_map",
    "fault_script",
    "jobs",
    "ambient_c",
    "setpoint_c",
    "period_s",
    "epoch",
    "stale_after_cycles",
    "golden_image",
    "leak_rate_pct_per_s",
];

impl SimFile {
    pub fn parse(text: &str, base: &Path) -> Result<Self, SimError> {
        let kv = KeyValues::parse(text)?;
        kv.check_keys(SIM_KEYS)?;
        let mut c = SimConfig::default();
        macro_rules! take {
            ($key:literal, $field:expr) => {
                if let Some(v) = kv.get($key)? {
                    $field = v;
                }
            };
        }
        take!("seed", c.seed);
        take!("zones", c.zones);
        take!("racks", c.racks);
        take!("nodes", c.nodes);
        take!("nodes_per_rack", c.nodes_per_rack);
        take!("cores_per_node", c.cores_per_node);
        take!("register_points", c.register_points);
        take!("ambient_c", c.ambient_c);
        take!("setpoint_c", c.setpoint_c);
        take!("period_s", c.period_s);
        take!("epoch", c.epoch);
        take!("stale_after_cycles", c.stale_after_cycles);
        take!("golden_image", c.golden_image);
        take!("leak_rate_pct_per_s", c.leak_rate_pct_per_s);
        let path = |k: &str| kv.get_str(k).map(|p| base.join(p));
        if let Some(jobs) = path("jobs") {
            let f = std::fs::File::open(&jobs)?;
            c.jobs = read_jobs(std::io::BufReader::new(f))?;
        }
        c.validate()?;
        Ok(Self {
            config: c,
            register_map: path("register_map"),
            fault_script: path("fault_script"),
        })
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn build(&self) -> Result<Simulator, SimError> {
        let map = match &self.register_map {
            Some(p) => RegisterMap::load(p)?,
            None => self.config.register_map(),
        };
        let mut sim = Simulator::with_map(self.config.clone(), map)?;
        if let Some(p) = &self.fault_script {
            sim.load_script(&FaultScript::load(p)?);
        }
        Ok(sim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn host_ranges() {
        assert_eq!(
            parse_hosts("node0009-node0011").unwrap(),
            ["node0009", "node0010", "node0011"]
        );
        assert_eq!(parse_hosts("a1,b2").unwrap(), ["a1", "b2"]);
        assert!(parse_hosts("node0003-node0001").is_err());
    }

    #[test]
    fn jobs_file() {
        let text = "job-1\talice\t16\t0\t-\tnode0001-node0004\njob-2\tbob\t8\t60\t600\tnode0002\n";
        let jobs = read_jobs(text.as_bytes()).unwrap();
        assert_eq!(jobs.len(), 2);
        assert_eq!(jobs[0].hosts.len(), 4);
        assert_eq!(jobs[1].duration, Some(600.0));
        assert!(jobs[1].active_at(600.0) && !jobs[1].active_at(660.0));
    }

    #[test]
    fn sim_file() {
        let f = SimFile::parse(
            "seed = 9\nnodes = 64\nregister_points = 200\n",
            Path::new("."),
        )
        .unwrap();
        assert_eq!(f.config.seed, 9);
        assert_eq!(f.config.nodes, 64);
        let sim = f.build().unwrap();
        assert_eq!(sim.map().len(), 200);
        assert!(SimFile::parse("colour = red\n", Path::new(".")).is_err());
    }
}
