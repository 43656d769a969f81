use std::path::{Path, PathBuf};
use std::time::Duration;

use super::collect::PollSettings;
use super::PipelineError;
use crate::kv::KeyValues;
use crate::modbus::Batching;

pub const DEFAULT_PERIOD_S: u64 = 15;

/// Pipeline settings from a `key = value` file plus overrides. Relative
/// paths resolve against the file's directory.
///
/// Without `modbus_endpoint` the pipeline runs its own simulator, built from
/// `sim` (a simulator settings file) or the canned `scenario`.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub modbus_endpoint: Option<String>,
    pub telemetry_endpoint: Option<String>,
    pub register_map: Option<PathBuf>,
    pub unit_id: u8,
    pub baseline: Option<PathBuf>,
    pub store: Option<PathBuf>,
    pub period_s: u64,
    pub cycles: Option<u64>,
    /// Pace cycles to the wall clock instead of running back to back.
    pub realtime: bool,
    pub server_endpoint: Option<String>,
    pub tokens: Option<PathBuf>,
    pub audit_log: Option<PathBuf>,
    pub client_queue: usize,
    pub event_log: Option<PathBuf>,
    pub email_spool: Option<PathBuf>,
    pub frames_dir: Option<PathBuf>,
    pub timing_report: Option<PathBuf>,
    pub sim: Option<PathBuf>,
    pub scenario: Option<String>,
    pub retries: u32,
    pub retry_backoff_ms: u64,
    pub timeout_ms: u64,
    pub max_registers: u16,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            modbus_endpoint: None,
            telemetry_endpoint: None,
            register_map: None,
            unit_id: 1,
            baseline: None,
            store: None,
            period_s: DEFAULT_PERIOD_S,
            cycles: None,
            realtime: false,
            server_endpoint: None,
            tokens: None,
            audit_log: None,
            client_queue: 256,
            event_log: None,
            email_spool: None,
            frames_dir: None,
            timing_report: None,
            sim: None,
            scenario: None,
            retries: 3,
            retry_backoff_ms: 200,
            timeout_ms: 2000,
            max_registers: 125,
        }
    }
}

const KEYS: &[&str] = &[
    "modbus_endpoint",
    "telemetry_endpoint",
    "register_map",
    "unit_id",
    "baseline",
    "store",
    "period_s",
    "cycles",
    "realtime",
    "server_endpoint",
    "tokens",
    "audit_log",
    "client_queue",
    "event_log",
    "email_spool",
    "frames_dir",
    "timing_report",
    "sim",
    "scenario",
    "retries",
    "retry_backoff_ms",
    "timeout_ms",
    "max_registers",
];

impl PipelineConfig {
    /// `overrides` are `key=value` strings applied on top of `text`.
    pub fn parse(text: &str, base: &Path, overrides: &[String]) -> Result<Self, PipelineError> {
        let mut kv = KeyValues::parse(text)?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| PipelineError::Config(format!("override {o:?} is not key=value")))?;
            kv.set(k.trim(), v.trim());
        }
        kv.check_keys(KEYS)?;
        let mut c = Self::default();
        let path = |k: &str| kv.get_str(k).map(|p| base.join(p));
        let text = |k: &str| kv.get_str(k).map(str::to_owned);
        macro_rules! take {
            ($key:literal, $field:expr) => {
                if let Some(v) = kv.get($key)? {
                    $field = v;
                }
            };
        }
        c.modbus_endpoint = text("modbus_endpoint");
        c.telemetry_endpoint = text("telemetry_endpoint");
        c.server_endpoint = text("server_endpoint");
        c.scenario = text("scenario");
        c.register_map = path("register_map");
        c.baseline = path("baseline");
        c.store = path("store");
        c.tokens = path("tokens");
        c.audit_log = path("audit_log");
        c.event_log = path("event_log");
        c.email_spool = path("email_spool");
        c.frames_dir = path("frames_dir");
        c.timing_report = path("timing_report");
        c.sim = path("sim");
        c.cycles = kv.get("cycles")?;
        take!("unit_id", c.unit_id);
        take!("period_s", c.period_s);
        take!("realtime", c.realtime);
        take!("client_queue", c.client_queue);
        take!("retries", c.retries);
        take!("retry_backoff_ms", c.retry_backoff_ms);
        take!("timeout_ms", c.timeout_ms);
        take!("max_registers", c.max_registers);
        Ok(c)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")), overrides)
    }

    /// Checks ranges and that every input file exists.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.period_s == 0 {
            return bad("period_s must be positive".into());
        }
        if self.max_registers == 0 || self.max_registers > 125 {
            return bad(format!(
                "max_registers {} outside 1..=125",
                self.max_registers
            ));
        }
        if self.modbus_endpoint.is_some() != self.telemetry_endpoint.is_some() {
            return bad("modbus_endpoint and telemetry_endpoint go together".into());
        }
        if self.modbus_endpoint.is_some()
            && (self.register_map.is_none() || self.baseline.is_none())
        {
            return bad("remote endpoints need register_map and baseline".into());
        }
        if self.server_endpoint.is_some() && self.tokens.is_none() {
            return bad("server_endpoint needs a tokens file".into());
        }
        for (key, p) in [
            ("register_map", &self.register_map),
            ("baseline", &self.baseline),
            ("tokens", &self.tokens),
            ("sim", &self.sim),
        ] {
            if let Some(p) = p {
                if !p.exists() {
                    return bad(format!("{key}: {} does not exist", p.display()));
                }
            }
        }
        Ok(())
    }

    pub fn poll_settings(&self) -> PollSettings {
        PollSettings {
            unit_id: self.unit_id,
            batching: Batching::Coalesced {
                max_registers: self.max_registers,
            },
            timeout: Duration::from_millis(self.timeout_ms),
            retries: self.retries,
            backoff: Duration::from_millis(self.retry_backoff_ms),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_with_overrides() {
        let c = PipelineConfig::parse(
            "period_s = 30\nstore = data\nscenario = water_event\n",
            Path::new("/etc/pw"),
            &["period_s=5".into(), "cycles = 10".into()],
        )
        .unwrap();
        assert_eq!(c.period_s, 5);
        assert_eq!(c.cycles, Some(10));
        assert_eq!(c.store.as_deref(), Some(Path::new("/etc/pw/data")));
        c.validate().unwrap();
        assert!(PipelineConfig::parse("bogus = 1\n", Path::new("."), &[]).is_err());
        let zero = PipelineConfig::parse("period_s = 0\n", Path::new("."), &[]).unwrap();
        assert!(zero.validate().is_err());
        let missing =
            PipelineConfig::parse("baseline = /no/such/file\n", Path::new("."), &[]).unwrap();
        assert!(missing.validate().is_err());
    }
}
