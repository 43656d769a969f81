//! The collection cycle: poll → correlate → ingest → frame, timed per
//! stage, and the assembly of a running deployment from a config.

mod collect;
mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;
use tracing::{info, warn};

pub use collect::{
    Collected, Collector, NetworkCollector, PollSettings, Poller, SimCollector, FACILITY_SOURCE,
};
pub use config::{PipelineConfig, DEFAULT_PERIOD_S};

use crate::assoc::{AssocArray, Collision, Triple};
use crate::baseline::{AlertRouter, AlertTracker, Baseline, BaselineError, Transition};
use crate::cycle::{correlate, frame_for, Correlation};
use crate::ingest::{
    cycle_triples, node_triples, reading_triples, IngestError, TripleStore, CYCLE_SOURCE,
};
use crate::kv::KvError;
use crate::modbus::{ModbusError, RegisterMap};
use crate::podsim::{scenario, SimError, SimFile, SimHost, Simulator};
use crate::server::{
    AuthorityHandle, NodeControl, ServerConfig, ServerError, ShellAdapter, SimAdapter, StateServer,
    TokenTable,
};
use crate::vizgen::{serialize_frame, VizFrame};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("connection to {endpoint} failed after {attempts} attempt(s): {reason}")]
    ConnectionFailed {
        endpoint: String,
        attempts: u32,
        reason: String,
    },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    ConfigSyntax(#[from] KvError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Modbus(#[from] ModbusError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Server(#[from] ServerError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub poll: Duration,
    pub correlate: Duration,
    pub ingest: Duration,
    pub frame: Duration,
}

impl StageTimings {
    pub const TSV_HEADER: &'static str =
        "cycle\tframeId\ttimestamp\tpoll_s\tcorrelate_s\tingest_s\tframe_s\ttotal_s";

    pub fn total(&self) -> Duration {
        self.poll + self.correlate + self.ingest + self.frame
    }

    pub fn tsv_row(&self, cycle: u64, frame_id: u64, timestamp: u64) -> String {
        format!(
            "{cycle}\t{frame_id}\t{timestamp}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            self.poll.as_secs_f64(),
            self.correlate.as_secs_f64(),
            self.ingest.as_secs_f64(),
            self.frame.as_secs_f64(),
            self.total().as_secs_f64()
        )
    }
}

#[derive(Debug, Clone)]
pub struct CycleOutput {
    pub frame_id: u64,
    pub timestamp: u64,
    pub frame: VizFrame,
    pub bytes: Vec<u8>,
    pub correlation: Correlation,
    pub transitions: Vec<Transition>,
    pub triples: usize,
    pub timings: StageTimings,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub completed: u64,
    pub failed: u64,
}

/// Per-cycle processing state: alert hysteresis, routing, frame numbering.
pub struct Pipeline {
    baseline: Arc<Baseline>,
    store: Arc<TripleStore>,
    period_s: u64,
    tracker: AlertTracker,
    router: AlertRouter,
    publisher: Option<AuthorityHandle>,
    frames_dir: Option<PathBuf>,
    next_frame_id: u64,
}

impl Pipeline {
    /// Frame numbering continues after the last cycle already in the store.
    pub fn new(
        baseline: Arc<Baseline>,
        store: Arc<TripleStore>,
        period_s: u64,
    ) -> Result<Self, PipelineError> {
        let next_frame_id = match store.latest_timestamp(CYCLE_SOURCE)? {
            Some(ts) => store.decode_at(ts)?.frame_id.unwrap_or(0) + 1,
            None => 1,
        };
        Ok(Self {
            baseline,
            store,
            period_s,
            tracker: AlertTracker::default(),
            router: AlertRouter::default(),
            publisher: None,
            frames_dir: None,
            next_frame_id,
        })
    }

    pub fn with_router(mut self, router: AlertRouter) -> Self {
        self.router = router;
        self
    }

    pub fn with_publisher(mut self, publisher: AuthorityHandle) -> Self {
        self.publisher = Some(publisher);
        self
    }

    /// Writes every frame to `dir/frame-<id>.json`.
    pub fn with_frames_dir(mut self, dir: &Path) -> Self {
        self.frames_dir = Some(dir.to_owned());
        self
    }

    pub fn baseline(&self) -> &Arc<Baseline> {
        &self.baseline
    }

    pub fn store(&self) -> &Arc<TripleStore> {
        &self.store
    }

    pub fn active_alerts(&self) -> impl Iterator<Item = &crate::baseline::Alert> {
        self.tracker.active()
    }

    /// Runs the correlate, ingest and frame stages on collected data.
    pub fn process(
        &mut self,
        collected: Collected,
        poll: Duration,
    ) -> Result<CycleOutput, PipelineError> {
        let ts = collected.timestamp;
        let frame_id = self.next_frame_id;

        let t = Instant::now();
        let correlation = correlate(ts, &collected.readings, &collected.nodes, &self.baseline);
        // Present hosts read 1 so missing-host alerts can clear.
        let presence = collected
            .nodes
            .iter()
            .map(|n| Triple::new(n.hostname.as_str(), "value", 1.0));
        let observed = correlation.values.add(
            &AssocArray::from_triples(presence, Collision::Last).expect("hostnames are valid keys"),
        );
        let transitions = self.tracker.update(&correlation.alerts, &observed, ts);
        for t in &transitions {
            if let Transition::Raised(a) = t {
                self.router.route(a);
            }
        }
        let correlate_time = t.elapsed();

        let t = Instant::now();
        let mut triples: Vec<Triple> = collected
            .readings
            .iter()
            .flat_map(reading_triples)
            .collect();
        triples.extend(collected.nodes.iter().flat_map(node_triples));
        triples.extend(cycle_triples(ts, frame_id, self.period_s));
        self.store.ingest_batch(&triples)?;
        let ingest_time = t.elapsed();

        let t = Instant::now();
        let frame = frame_for(frame_id, &correlation, &self.baseline);
        let bytes = serialize_frame(&frame);
        if let Some(dir) = &self.frames_dir {
            fs::write(dir.join(format!("frame-{frame_id:08}.json")), &bytes)?;
        }
        if let Some(p) = &self.publisher {
            let published = p
                .publish_alerts(&transitions)
                .and_then(|_| p.publish(&frame, bytes.clone(), &collected.nodes));
            if let Err(e) = published {
                warn!("frame {frame_id} not published: {e}");
            }
        }
        let frame_time = t.elapsed();

        self.next_frame_id += 1;
        Ok(CycleOutput {
            frame_id,
            timestamp: ts,
            frame,
            bytes,
            correlation,
            transitions,
            triples: triples.len(),
            timings: StageTimings {
                poll,
                correlate: correlate_time,
                ingest: ingest_time,
                frame: frame_time,
            },
        })
    }

    pub fn run_cycle(
        &mut self,
        collector: &mut dyn Collector,
    ) -> Result<CycleOutput, PipelineError> {
        let t = Instant::now();
        let collected = collector.collect()?;
        self.process(collected, t.elapsed())
    }

    /// Runs `cycles` cycles (forever when `None`). A cycle that fails is
    /// logged and skipped; exhausting a connection's retry budget stops the
    /// run. With `pace`, each cycle starts one period after the previous.
    pub fn run(
        &mut self,
        collector: &mut dyn Collector,
        cycles: Option<u64>,
        pace: bool,
        mut on_cycle: impl FnMut(&CycleOutput),
    ) -> Result<RunSummary, PipelineError> {
        let mut summary = RunSummary::default();
        let period = Duration::from_secs(self.period_s);
        let mut i = 0;
        while cycles.is_none_or(|n| i < n) {
            i += 1;
            let start = Instant::now();
            match self.run_cycle(collector) {
                Ok(out) => {
                    summary.completed += 1;
                    info!(
                        frame = out.frame_id,
                        ts = out.timestamp,
                        total_ms = out.timings.total().as_millis() as u64,
                        "cycle"
                    );
                    on_cycle(&out);
                }
                Err(e @ PipelineError::ConnectionFailed { .. }) => return Err(e),
                Err(e) => {
                    warn!("cycle {i} skipped: {e}");
                    summary.failed += 1;
                }
            }
            if pace {
                if let Some(rest) = period.checked_sub(start.elapsed()) {
                    thread::sleep(rest);
                }
            }
        }
        Ok(summary)
    }
}

/// A pipeline wired to its collector and, optionally, the state server.
pub struct Deployment {
    pub pipeline: Pipeline,
    pub collector: Box<dyn Collector>,
    pub server: Option<StateServer>,
}

impl Deployment {
    /// Runs the configured number of cycles, writing the timing report if one
    /// is configured.
    pub fn run(
        &mut self,
        config: &PipelineConfig,
        mut on_cycle: impl FnMut(&CycleOutput),
    ) -> Result<RunSummary, PipelineError> {
        let mut report = match &config.timing_report {
            Some(p) => {
                let mut f = fs::File::create(p)?;
                writeln!(f, "{}", StageTimings::TSV_HEADER)?;
                Some(f)
            }
            None => None,
        };
        let mut n = 0;
        let summary = self.pipeline.run(
            self.collector.as_mut(),
            config.cycles,
            config.realtime,
            |out| {
                n += 1;
                if let Some(f) = &mut report {
                    if let Err(e) =
                        writeln!(f, "{}", out.timings.tsv_row(n, out.frame_id, out.timestamp))
                    {
                        warn!("timing report: {e}");
                    }
                }
                on_cycle(out);
            },
        )?;
        self.pipeline.store().flush()?;
        Ok(summary)
    }
}

/// The simulator a config without endpoints runs: the `sim` file if given,
/// else the named scenario (`default` when unset).
pub fn configured_simulator(config: &PipelineConfig) -> Result<Simulator, PipelineError> {
    if let Some(path) = &config.sim {
        let mut file = SimFile::load(path)?;
        file.config.period_s = config.period_s;
        return Ok(file.build()?);
    }
    let name = config.scenario.as_deref().unwrap_or("default");
    let (mut cfg, script) = scenario::by_name(name)
        .ok_or_else(|| PipelineError::Config(format!("unknown scenario {name:?}")))?;
    cfg.period_s = config.period_s;
    let map = match &config.register_map {
        Some(p) => RegisterMap::load(p)?,
        None => cfg.register_map(),
    };
    let mut sim = Simulator::with_map(cfg, map)?;
    sim.load_script(&script);
    Ok(sim)
}

/// The `baseline` file, or the default baseline of the configured simulator.
pub fn configured_baseline(config: &PipelineConfig) -> Result<Baseline, PipelineError> {
    match &config.baseline {
        Some(p) => Ok(Baseline::load(p)?),
        None if config.modbus_endpoint.is_some() => Err(PipelineError::Config(
            "remote endpoints need a baseline".into(),
        )),
        None => {
            let sim = configured_simulator(config)?;
            Ok(scenario::default_baseline(sim.config(), sim.map()))
        }
    }
}

/// Builds the store, collector, baseline, alert sinks and server described
/// by `config`.
pub fn deploy(config: &PipelineConfig) -> Result<Deployment, PipelineError> {
    config.validate()?;
    let store = Arc::new(match &config.store {
        Some(dir) => TripleStore::open(dir)?,
        None => TripleStore::in_memory(),
    });
    let settings = config.poll_settings();
    let (collector, baseline, adapter): (Box<dyn Collector>, Baseline, Box<dyn NodeControl>) =
        match (&config.modbus_endpoint, &config.telemetry_endpoint) {
            (Some(modbus), Some(telemetry)) => {
                let map_path = config.register_map.as_ref().expect("validated");
                let map = RegisterMap::load(map_path)?;
                let baseline = Baseline::load(config.baseline.as_ref().expect("validated"))?;
                let poller = Poller::new(modbus, telemetry, map, settings);
                (
                    Box::new(NetworkCollector::new(poller)),
                    baseline,
                    Box::new(ShellAdapter::disabled()),
                )
            }
            _ => {
                let sim = configured_simulator(config)?;
                let baseline = match &config.baseline {
                    Some(p) => Baseline::load(p)?,
                    None => scenario::default_baseline(sim.config(), sim.map()),
                };
                let host = SimHost::start(sim, "127.0.0.1:0", "127.0.0.1:0")?;
                let adapter = Box::new(SimAdapter::new(host.simulator()));
                (
                    Box::new(SimCollector::new(host, config.period_s, settings)),
                    baseline,
                    adapter,
                )
            }
        };
    let baseline = Arc::new(baseline);
    let mut pipeline =
        Pipeline::new(baseline.clone(), store.clone(), config.period_s)?.with_router(
            AlertRouter::new(config.event_log.as_deref(), config.email_spool.as_deref()),
        );
    if let Some(dir) = &config.frames_dir {
        fs::create_dir_all(dir)?;
        pipeline = pipeline.with_frames_dir(dir);
    }
    let server = match &config.server_endpoint {
        Some(addr) => {
            let tokens = TokenTable::load(config.tokens.as_ref().expect("validated"))?;
            let server_config = ServerConfig {
                addr: addr.clone(),
                client_queue: config.client_queue,
                audit_log: config.audit_log.clone(),
            };
            let server =
                StateServer::start(&server_config, tokens, baseline, adapter, Some(store))?;
            info!(addr = %server.local_addr(), "state server listening");
            pipeline = pipeline.with_publisher(server.authority());
            Some(server)
        }
        None => None,
    };
    Ok(Deployment {
        pipeline,
        collector,
        server,
    })
}

/// Simulator settings for the throughput bench: the default pod resized to
/// `points` register points and `nodes` hosts.
pub fn bench_sim_config(points: usize, nodes: usize) -> crate::podsim::SimConfig {
    let base = crate::podsim::SimConfig::default();
    crate::podsim::SimConfig {
        nodes,
        register_points: points,
        nodes_per_rack: base.nodes_per_rack.max(nodes.div_ceil(base.racks)),
        ..base
    }
}

/// Runs `cycles` full cycles against a local simulator over real sockets,
/// with an in-memory store, and returns each cycle's stage timings.
pub fn run_bench(
    points: usize,
    nodes: usize,
    cycles: u64,
) -> Result<Vec<CycleOutput>, PipelineError> {
    let sim = Simulator::new(bench_sim_config(points, nodes))?;
    let baseline = Arc::new(scenario::default_baseline(sim.config(), sim.map()));
    let period_s = sim.config().period_s;
    let host = SimHost::start(sim, "127.0.0.1:0", "127.0.0.1:0")?;
    let mut collector = SimCollector::new(host, period_s, PollSettings::default());
    let mut pipeline = Pipeline::new(baseline, Arc::new(TripleStore::in_memory()), period_s)?;
    (0..cycles)
        .map(|_| pipeline.run_cycle(&mut collector))
        .collect()
}
