//! Data collection: one poll of the register map and the node telemetry
//! per cycle, over TCP, with reconnects bounded by a retry budget.

use std::net::SocketAddr;
use std::thread;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use tracing::{debug, warn};

use super::PipelineError;
use crate::modbus::{Batching, ModbusClient, ModbusError, RegisterMap};
use crate::podsim::{SimHost, TelemetryClient};
use crate::records::{NodeRecord, SensorReading};

pub const FACILITY_SOURCE: &str = "ecopod";

/// Everything gathered in one cycle, stamped with the cycle timestamp.
#[derive(Debug, Clone, Default)]
pub struct Collected {
    pub timestamp: u64,
    pub readings: Vec<SensorReading>,
    pub nodes: Vec<NodeRecord>,
}

impl Collected {
    /// Records inherit the cycle timestamp so a cycle is one time slice in
    /// the store whatever the sources' clocks say.
    pub fn restamp(&mut self, timestamp: u64) {
        self.timestamp = timestamp;
        for r in &mut self.readings {
            r.timestamp = timestamp;
        }
        for n in &mut self.nodes {
            n.timestamp = timestamp;
        }
    }
}

pub trait Collector {
    fn collect(&mut self) -> Result<Collected, PipelineError>;
}

#[derive(Debug, Clone)]
pub struct PollSettings {
    pub unit_id: u8,
    pub batching: Batching,
    pub timeout: Duration,
    /// Reconnect attempts after the first failure.
    pub retries: u32,
    pub backoff: Duration,
}

impl Default for PollSettings {
    fn default() -> Self {
        Self {
            unit_id: 1,
            batching: Batching::default(),
            timeout: Duration::from_secs(2),
            retries: 3,
            backoff: Duration::from_millis(200),
        }
    }
}

/// Polls a Modbus endpoint and a telemetry endpoint, keeping connections
/// open between cycles.
pub struct Poller {
    modbus_addr: String,
    telemetry_addr: String,
    map: RegisterMap,
    settings: PollSettings,
    modbus: Option<ModbusClient>,
    telemetry: Option<TelemetryClient>,
}

impl Poller {
    pub fn new(
        modbus_addr: &str,
        telemetry_addr: &str,
        map: RegisterMap,
        settings: PollSettings,
    ) -> Self {
        Self {
            modbus_addr: modbus_addr.to_owned(),
            telemetry_addr: telemetry_addr.to_owned(),
            map,
            settings,
            modbus: None,
            telemetry: None,
        }
    }

    pub fn map(&self) -> &RegisterMap {
        &self.map
    }

    fn with_retries<T>(
        &self,
        endpoint: &str,
        mut attempt: impl FnMut() -> Result<T, String>,
    ) -> Result<T, PipelineError> {
        let mut last = String::new();
        for i in 0..=self.settings.retries {
            if i > 0 {
                thread::sleep(self.settings.backoff * i);
            }
            match attempt() {
                Ok(v) => return Ok(v),
                Err(e) => {
                    warn!(endpoint, attempt = i + 1, "poll failed: {e}");
                    last = e;
                }
            }
        }
        Err(PipelineError::ConnectionFailed {
            endpoint: endpoint.to_owned(),
            attempts: self.settings.retries + 1,
            reason: last,
        })
    }

    fn poll_registers(&mut self, timestamp: u64) -> Result<Vec<SensorReading>, PipelineError> {
        let (addr, unit, timeout, batching) = (
            self.modbus_addr.clone(),
            self.settings.unit_id,
            self.settings.timeout,
            self.settings.batching,
        );
        let map = &self.map;
        let mut conn = self.modbus.take();
        let result = self.with_retries(&addr, || {
            if conn.is_none() {
                conn = Some(
                    ModbusClient::connect(addr.as_str(), unit, timeout)
                        .map_err(|e| e.to_string())?,
                );
            }
            let client = conn.as_mut().expect("connected above");
            match client.poll_map(map, batching, FACILITY_SOURCE, timestamp) {
                Ok(r) => Ok(r),
                Err(ModbusError::PartialPoll { failed, readings }) => {
                    warn!(unreadable = failed.len(), first = %failed[0], "partial register poll");
                    Ok(readings)
                }
                Err(e) => {
                    conn = None;
                    Err(e.to_string())
                }
            }
        });
        self.modbus = conn;
        result
    }

    fn poll_nodes(&mut self) -> Result<Vec<NodeRecord>, PipelineError> {
        let addr = self.telemetry_addr.clone();
        let timeout = self.settings.timeout;
        let mut conn = self.telemetry.take();
        let result = self.with_retries(&addr, || {
            if conn.is_none() {
                conn = Some(
                    TelemetryClient::connect(addr.as_str(), timeout).map_err(|e| e.to_string())?,
                );
            }
            conn.as_mut().expect("connected above").poll().map_err(|e| {
                conn = None;
                e.to_string()
            })
        });
        self.telemetry = conn;
        result
    }

    pub fn poll(&mut self, timestamp: u64) -> Result<Collected, PipelineError> {
        let readings = self.poll_registers(timestamp)?;
        let nodes = self.poll_nodes()?;
        debug!(readings = readings.len(), nodes = nodes.len(), "polled");
        let mut c = Collected {
            timestamp,
            readings,
            nodes,
        };
        c.restamp(timestamp);
        Ok(c)
    }
}

/// Collects from remote endpoints, stamping cycles with the wall clock.
pub struct NetworkCollector {
    poller: Poller,
}

impl NetworkCollector {
    pub fn new(poller: Poller) -> Self {
        Self { poller }
    }
}

impl Collector for NetworkCollector {
    fn collect(&mut self) -> Result<Collected, PipelineError> {
        let now = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        self.poller.poll(now)
    }
}

/// Drives an in-process simulator one period per cycle and polls it over
/// its TCP endpoints, so the protocol path is the same as in production.
/// Cycles are stamped with simulation time.
pub struct SimCollector {
    host: SimHost,
    poller: Poller,
    period_s: u64,
}

impl SimCollector {
    pub fn new(host: SimHost, period_s: u64, settings: PollSettings) -> Self {
        let poller = Poller::new(
            &host.modbus_addr().to_string(),
            &host.telemetry_addr().to_string(),
            host.map().clone(),
            settings,
        );
        Self {
            host,
            poller,
            period_s,
        }
    }

    pub fn host(&self) -> &SimHost {
        &self.host
    }

    pub fn endpoints(&self) -> (SocketAddr, SocketAddr) {
        (self.host.modbus_addr(), self.host.telemetry_addr())
    }
}

impl Collector for SimCollector {
    fn collect(&mut self) -> Result<Collected, PipelineError> {
        let ts = self.host.advance(self.period_s as f64)?;
        self.poller.poll(ts)
    }
}
