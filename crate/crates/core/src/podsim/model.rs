use std::collections::{BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::layout::{self, PointRole};
use super::script::{Fault, FaultScript, ScriptEntry};
use super::server::RegisterImage;
use super::SimError;
use crate::modbus::RegisterMap;
use crate::records::{JobSlot, NodeRecord};

/// Monday 2023-11-13 00:00:00 UTC; default simulation epoch.
pub const DEFAULT_EPOCH: u64 = 1_699_833_600;

/// A job statically placed on a set of hosts for a time window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSpec {
    pub job_id: String,
    pub user: String,
    pub hosts: Vec<String>,
    pub cores_per_node: u32,
    /// Simulation seconds.
    pub start: f64,
    /// `None` runs until the end of the simulation.
    pub duration: Option<f64>,
    /// Load average contributed per scheduled core.
    pub load_per_core: f64,
}

impl JobSpec {
    pub fn new(job_id: &str, user: &str, hosts: Vec<String>, cores_per_node: u32) -> Self {
        Self {
            job_id: job_id.into(),
            user: user.into(),
            hosts,
            cores_per_node,
            start: 0.0,
            duration: None,
            load_per_core: 0.95,
        }
    }

    pub fn starting_at(mut self, start: f64, duration: Option<f64>) -> Self {
        self.start = start;
        self.duration = duration;
        self
    }

    pub fn active_at(&self, t: f64) -> bool {
        t >= self.start && self.duration.is_none_or(|d| t < self.start + d)
    }
}

/// Parameters of the digital twin. Defaults mirror a 44-rack pod hosting a
/// 900-node cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub zones: usize,
    pub racks: usize,
    pub nodes: usize,
    pub nodes_per_rack: usize,
    pub cores_per_node: u32,
    pub register_points: usize,
    pub ambient_c: f64,
    pub setpoint_c: f64,
    pub cooling_hysteresis_c: f64,
    pub economizer_max_ambient_c: f64,
    pub time_constant_s: f64,
    pub humidity_time_constant_s: f64,
    pub heat_c_per_kw: f64,
    pub mechanical_cooling_c: f64,
    pub base_humidity_pct: f64,
    pub leak_humidity_pct: f64,
    pub epoch: u64,
    pub period_s: u64,
    pub stale_after_cycles: u32,
    pub golden_image: String,
    pub kernel_version: String,
    pub leak_rate_pct_per_s: f64,
    pub jobs: Vec<JobSpec>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            zones: 11,
            racks: 44,
            nodes: 900,
            nodes_per_rack: 32,
            cores_per_node: 32,
            register_points: 5325,
            ambient_c: 20.0,
            setpoint_c: 27.0,
            cooling_hysteresis_c: 2.0,
            economizer_max_ambient_c: 24.0,
            time_constant_s: 600.0,
            humidity_time_constant_s: 300.0,
            heat_c_per_kw: 0.15,
            mechanical_cooling_c: 8.0,
            base_humidity_pct: 45.0,
            leak_humidity_pct: 95.0,
            epoch: DEFAULT_EPOCH,
            period_s: 15,
            stale_after_cycles: 3,
            golden_image: "txg-2024.06".into(),
            kernel_version: "5.14.0-427".into(),
            leak_rate_pct_per_s: 0.1,
            jobs: Vec::new(),
        }
    }
}

impl SimConfig {
    /// A smaller pod for quick tests: `nodes` hosts, two zones of two racks.
    pub fn small(nodes: usize, register_points: usize) -> Self {
        Self {
            zones: 2,
            racks: 4,
            nodes,
            nodes_per_rack: nodes.div_ceil(4).max(1),
            register_points,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if self.zones == 0 || self.racks == 0 {
            return bad("need at least one zone and one rack".into());
        }
        if self.nodes > self.racks * self.nodes_per_rack {
            return bad(format!(
                "{} nodes do not fit in {} racks of {}",
                self.nodes, self.racks, self.nodes_per_rack
            ));
        }
        if self.period_s == 0 {
            return bad("period must be positive".into());
        }
        for p in [self.time_constant_s, self.humidity_time_constant_s] {
            if !(p.is_finite() && p > 0.0) {
                return bad("time constants must be positive".into());
            }
        }
        let hosts: HashMap<String, usize> =
            (0..self.nodes).map(|i| (layout::host_name(i), i)).collect();
        let mut cores = vec![0u32; self.nodes];
        let mut ids = BTreeSet::new();
        for j in &self.jobs {
            if !ids.insert(j.job_id.as_str()) {
                return bad(format!("duplicate job {}", j.job_id));
            }
            if j.job_id.contains('|') || j.user.contains('|') {
                return bad(format!("job {} id and user must not contain '|'", j.job_id));
            }
            for h in &j.hosts {
                let Some(&i) = hosts.get(h) else {
                    return Err(SimError::UnknownHost(h.clone()));
                };
                cores[i] += j.cores_per_node;
                if cores[i] > self.cores_per_node {
                    return bad(format!("{h} oversubscribed by job {}", j.job_id));
                }
            }
        }
        Ok(())
    }

    pub fn rack_of_host(&self, host_index: usize) -> (usize, usize) {
        (
            host_index / self.nodes_per_rack,
            host_index % self.nodes_per_rack,
        )
    }

    pub fn zone_of_rack(&self, rack: usize) -> usize {
        layout::zone_of_rack(rack, self.racks, self.zones)
    }

    pub fn register_map(&self) -> RegisterMap {
        layout::representative_map(self.register_points, self.racks, self.zones)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneState {
    pub temp_c: f64,
    pub humidity_pct: f64,
    pub diff_pressure_pa: f64,
    pub airflow_m3h: f64,
}

/// Environmental state of the pod.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PodState {
    pub zones: Vec<ZoneState>,
    pub feed_kw: Vec<f64>,
    pub it_kw: f64,
    pub cooling_kw: f64,
    pub outside_temp_c: f64,
    pub mechanical_cooling: bool,
    pub economizer_mode: bool,
    pub water_alarm: bool,
    pub fire_alarm: bool,
    pub sim_clock: f64,
}

/// Inputs held constant over one integration step.
#[derive(Debug, Clone, PartialEq)]
pub struct Forcing {
    pub ambient_c: f64,
    pub zone_it_kw: Vec<f64>,
    /// °C/s added to each zone.
    pub zone_ramp: Vec<f64>,
    pub zone_humidity_target: Vec<f64>,
    pub feed_extra_kw: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalParams {
    pub setpoint_c: f64,
    pub hysteresis_c: f64,
    pub economizer_max_ambient_c: f64,
    pub time_constant_s: f64,
    pub humidity_time_constant_s: f64,
    pub heat_c_per_kw: f64,
    pub mechanical_cooling_c: f64,
}

impl From<&SimConfig> for ThermalParams {
    fn from(c: &SimConfig) -> Self {
        Self {
            setpoint_c: c.setpoint_c,
            hysteresis_c: c.cooling_hysteresis_c,
            economizer_max_ambient_c: c.economizer_max_ambient_c,
            time_constant_s: c.time_constant_s,
            humidity_time_constant_s: c.humidity_time_constant_s,
            heat_c_per_kw: c.heat_c_per_kw,
            mechanical_cooling_c: c.mechanical_cooling_c,
        }
    }
}

impl PodState {
    pub fn at_ambient(zones: usize, feeds: usize, ambient_c: f64, humidity_pct: f64) -> Self {
        Self {
            zones: vec![
                ZoneState {
                    temp_c: ambient_c,
                    humidity_pct,
                    diff_pressure_pa: 12.0,
                    airflow_m3h: 1500.0,
                };
                zones
            ],
            feed_kw: vec![0.0; feeds],
            it_kw: 0.0,
            cooling_kw: 0.0,
            outside_temp_c: ambient_c,
            mechanical_cooling: false,
            economizer_mode: false,
            water_alarm: false,
            fire_alarm: false,
            sim_clock: 0.0,
        }
    }

    /// Advances the pod by `dt` seconds.
    ///
    /// Each zone relaxes exponentially toward `ambient + heat·kW + ramp·τ`,
    /// minus the mechanical-cooling offset while that mode is engaged. The
    /// solution is exact for constant forcing, so splitting a step in two
    /// gives the same result as long as the cooling mode does not change.
    /// Mechanical cooling engages once any zone exceeds the setpoint and
    /// releases when every zone is below `setpoint - hysteresis`.
    pub fn step(&self, forcing: &Forcing, params: &ThermalParams, dt: f64) -> PodState {
        assert!(dt > 0.0, "step needs a positive dt");
        let mut next = self.clone();
        let decay = (-dt / params.time_constant_s).exp();
        let h_decay = (-dt / params.humidity_time_constant_s).exp();
        let cooling_offset = if self.mechanical_cooling {
            params.mechanical_cooling_c
        } else {
            0.0
        };
        for (i, z) in next.zones.iter_mut().enumerate() {
            let kw = forcing.zone_it_kw.get(i).copied().unwrap_or(0.0);
            let ramp = forcing.zone_ramp.get(i).copied().unwrap_or(0.0);
            let target = forcing.ambient_c + params.heat_c_per_kw * kw - cooling_offset
                + ramp * params.time_constant_s;
            z.temp_c = (target + (z.temp_c - target) * decay).clamp(-20.0, 80.0);
            let h_target = forcing
                .zone_humidity_target
                .get(i)
                .copied()
                .unwrap_or(z.humidity_pct);
            z.humidity_pct = (h_target + (z.humidity_pct - h_target) * h_decay).clamp(0.0, 100.0);
            z.airflow_m3h = 1500.0 + 120.0 * kw;
        }
        let hottest = next
            .zones
            .iter()
            .map(|z| z.temp_c)
            .fold(f64::NEG_INFINITY, f64::max);
        if hottest > params.setpoint_c {
            next.mechanical_cooling = true;
        } else if hottest < params.setpoint_c - params.hysteresis_c {
            next.mechanical_cooling = false;
        }
        next.economizer_mode =
            !next.mechanical_cooling && forcing.ambient_c <= params.economizer_max_ambient_c;
        let pressure = if next.economizer_mode { 15.0 } else { 12.0 };
        for z in &mut next.zones {
            z.diff_pressure_pa = pressure;
        }
        next.outside_temp_c = forcing.ambient_c;
        next.it_kw = forcing.zone_it_kw.iter().sum();
        let feeds = next.feed_kw.len().max(1) as f64;
        for (i, f) in next.feed_kw.iter_mut().enumerate() {
            *f = (next.it_kw / feeds + forcing.feed_extra_kw.get(i).copied().unwrap_or(0.0))
                .max(0.0);
        }
        let overhead = if next.mechanical_cooling { 0.15 } else { 0.03 };
        next.cooling_kw = next.it_kw * overhead;
        next.sim_clock = self.sim_clock + dt;
        next
    }

    /// Facility power over IT power.
    pub fn pue(&self) -> f64 {
        if self.it_kw > 0.0 {
            (self.it_kw + self.cooling_kw) / self.it_kw
        } else {
            1.0
        }
    }
}

/// One simulated compute node.
#[derive(Debug, Clone, PartialEq)]
pub struct SimNode {
    pub hostname: String,
    pub rack: usize,
    pub slot_index: usize,
    pub total_cores: u32,
    pub scheduled_cores: u32,
    pub cpu_load: f64,
    pub mem_used_pct: f64,
    pub disk_used_pct: f64,
    pub image_version: String,
    pub kernel_version: String,
    pub ip: String,
    pub mac: String,
    pub jobs: Vec<JobSlot>,
    pub responding: bool,
    pub in_service: bool,
    pub failed_components: Vec<String>,
    leaked_pct: f64,
    leak_factor: f64,
    silent_since: f64,
    evicted: BTreeSet<String>,
    last_report: Option<NodeRecord>,
}

impl SimNode {
    pub fn power_kw(&self) -> f64 {
        0.1 + 0.01 * self.cpu_load
    }
}

/// The digital twin: pod environment plus cluster, advanced on a simulated
/// clock and disturbed by a fault script.
pub struct Simulator {
    config: SimConfig,
    params: ThermalParams,
    map: RegisterMap,
    point_offsets: Vec<f64>,
    pod: PodState,
    nodes: Vec<SimNode>,
    host_index: HashMap<String, usize>,
    pending: VecDeque<ScriptEntry>,
    zone_ramp: Vec<f64>,
    water_zones: BTreeSet<usize>,
    feed_extra: Vec<f64>,
    leaking_jobs: BTreeSet<String>,
    zone_kw: Vec<f64>,
    rack_kw: Vec<f64>,
}

/// Deterministic hash used for per-entity jitter and offsets; stable across
/// platforms and releases.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn unit_hash(seed: u64, key: &str, salt: u64) -> f64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in key.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    (mix(h ^ mix(seed) ^ salt.wrapping_mul(0x9E37)) >> 11) as f64 / (1u64 << 53) as f64
}

impl Simulator {
    pub fn new(config: SimConfig) -> Result<Self, SimError> {
        let map = config.register_map();
        Self::with_map(config, map)
    }

    pub fn with_map(config: SimConfig, map: RegisterMap) -> Result<Self, SimError> {
        config.validate()?;
        let params = ThermalParams::from(&config);
        let point_offsets = map
            .points()
            .iter()
            .map(|p| unit_hash(config.seed, &p.point_id, 1) - 0.5)
            .collect();
        let nodes: Vec<SimNode> = (0..config.nodes)
            .map(|i| {
                let hostname = layout::host_name(i);
                let (rack, slot_index) = config.rack_of_host(i);
                SimNode {
                    disk_used_pct: 20.0 + 30.0 * unit_hash(config.seed, &hostname, 2),
                    leak_factor: 1.0 + unit_hash(config.seed, &hostname, 3),
                    hostname,
                    rack,
                    slot_index,
                    total_cores: config.cores_per_node,
                    scheduled_cores: 0,
                    cpu_load: 0.0,
                    mem_used_pct: 5.0,
                    image_version: config.golden_image.clone(),
                    kernel_version: config.kernel_version.clone(),
                    ip: format!(
                        "10.{}.{}.{}",
                        16 + rack,
                        slot_index / 256,
                        slot_index % 256 + 10
                    ),
                    mac: format!(
                        "02:00:00:{:02x}:{:02x}:{:02x}",
                        rack,
                        i >> 8 & 0xff,
                        i & 0xff
                    ),
                    jobs: Vec::new(),
                    responding: true,
                    in_service: true,
                    failed_components: Vec::new(),
                    leaked_pct: 0.0,
                    silent_since: 0.0,
                    evicted: BTreeSet::new(),
                    last_report: None,
                }
            })
            .collect();
        let host_index = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.hostname.clone(), i))
            .collect();
        let zones = config.zones;
        let mut sim = Self {
            params,
            point_offsets,
            pod: PodState::at_ambient(
                zones,
                layout::FEEDS.len(),
                config.ambient_c,
                config.base_humidity_pct,
            ),
            nodes,
            host_index,
            pending: VecDeque::new(),
            zone_ramp: vec![0.0; zones],
            water_zones: BTreeSet::new(),
            feed_extra: vec![0.0; layout::FEEDS.len()],
            leaking_jobs: BTreeSet::new(),
            zone_kw: vec![0.0; zones],
            rack_kw: vec![0.0; config.racks],
            map,
            config,
        };
        sim.update_nodes(0.0, 0.0);
        sim.pod = sim.pod.step(&sim.forcing(), &sim.params, 1e-9);
        sim.pod.sim_clock = 0.0;
        Ok(sim)
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn map(&self) -> &RegisterMap {
        &self.map
    }

    pub fn state(&self) -> &PodState {
        &self.pod
    }

    pub fn nodes(&self) -> &[SimNode] {
        &self.nodes
    }

    pub fn node(&self, host: &str) -> Option<&SimNode> {
        self.host_index.get(host).map(|&i| &self.nodes[i])
    }

    pub fn clock(&self) -> f64 {
        self.pod.sim_clock
    }

    /// Whole UTC seconds of the simulation clock.
    pub fn timestamp(&self) -> u64 {
        self.config.epoch + self.pod.sim_clock.floor() as u64
    }

    pub fn load_script(&mut self, script: &FaultScript) {
        self.pending.extend(script.entries().iter().cloned());
        self.pending
            .make_contiguous()
            .sort_by(|a, b| a.at.total_cmp(&b.at));
    }

    /// Applies a fault immediately.
    pub fn inject_fault(&mut self, fault: &Fault) -> Result<(), SimError> {
        match fault {
            Fault::WaterEvent { zone } => {
                let z = self.zone_index(zone)?;
                self.water_zones.insert(z);
                self.pod.water_alarm = true;
            }
            Fault::PowerSpike { feed, kw } => {
                let f = layout::FEEDS
                    .iter()
                    .position(|x| x == feed)
                    .ok_or_else(|| SimError::UnknownFeed(feed.clone()))?;
                self.feed_extra[f] += kw;
                self.pod.feed_kw[f] += kw;
            }
            Fault::FireBit => self.pod.fire_alarm = true,
            Fault::TempRamp { zone, rate } => {
                let z = self.zone_index(zone)?;
                self.zone_ramp[z] += rate;
            }
            Fault::MemoryLeak { job_id } => {
                if !self.config.jobs.iter().any(|j| &j.job_id == job_id) {
                    return Err(SimError::UnknownJob(job_id.clone()));
                }
                self.leaking_jobs.insert(job_id.clone());
            }
            Fault::ImageDrift { host } => {
                let i = self.host(host)?;
                self.nodes[i].image_version = format!("{}-drift", self.config.golden_image);
            }
            Fault::ComponentFailure { host, component } => {
                let i = self.host(host)?;
                let n = &mut self.nodes[i];
                if !n.failed_components.contains(component) {
                    n.failed_components.push(component.clone());
                }
            }
        }
        Ok(())
    }

    fn zone_index(&self, zone: &str) -> Result<usize, SimError> {
        (0..self.config.zones)
            .find(|&z| layout::zone_name(z) == zone)
            .ok_or_else(|| SimError::UnknownZone(zone.to_owned()))
    }

    fn host(&self, host: &str) -> Result<usize, SimError> {
        self.host_index
            .get(host)
            .copied()
            .ok_or_else(|| SimError::UnknownHost(host.to_owned()))
    }

    fn forcing(&self) -> Forcing {
        Forcing {
            ambient_c: self.config.ambient_c,
            zone_it_kw: self.zone_kw.clone(),
            zone_ramp: self.zone_ramp.clone(),
            zone_humidity_target: (0..self.config.zones)
                .map(|z| {
                    if self.water_zones.contains(&z) {
                        self.config.leak_humidity_pct
                    } else {
                        self.config.base_humidity_pct
                    }
                })
                .collect(),
            feed_extra_kw: self.feed_extra.clone(),
        }
    }

    /// Advances the simulation by `dt` seconds, firing scripted faults that
    /// fall due within the step first.
    pub fn step(&mut self, dt: f64) -> Result<&PodState, SimError> {
        assert!(dt > 0.0, "step needs a positive dt");
        let end = self.pod.sim_clock + dt;
        while self.pending.front().is_some_and(|e| e.at <= end) {
            let entry = self.pending.pop_front().expect("front exists");
            self.inject_fault(&entry.fault)?;
        }
        self.update_nodes(end, dt);
        self.pod = self.pod.step(&self.forcing(), &self.params, dt);
        Ok(&self.pod)
    }

    fn update_nodes(&mut self, t: f64, dt: f64) {
        let seed = self.config.seed;
        let tick = t.to_bits();
        self.zone_kw.iter_mut().for_each(|k| *k = 0.0);
        self.rack_kw.iter_mut().for_each(|k| *k = 0.0);
        for n in &mut self.nodes {
            n.jobs = if n.in_service {
                self.config
                    .jobs
                    .iter()
                    .filter(|j| j.active_at(t) && !n.evicted.contains(&j.job_id))
                    .filter(|j| j.hosts.iter().any(|h| h == &n.hostname))
                    .map(|j| JobSlot {
                        job_id: j.job_id.clone(),
                        user: j.user.clone(),
                        cores: j.cores_per_node,
                    })
                    .collect()
            } else {
                Vec::new()
            };
            n.scheduled_cores = n.jobs.iter().map(|j| j.cores).sum();
            let load: f64 = n
                .jobs
                .iter()
                .map(|slot| {
                    let spec = self.config.jobs.iter().find(|j| j.job_id == slot.job_id);
                    f64::from(slot.cores) * spec.map_or(1.0, |s| s.load_per_core)
                })
                .sum();
            n.cpu_load = if n.scheduled_cores > 0 {
                load + 0.3 * unit_hash(seed, &n.hostname, tick)
            } else {
                0.0
            };
            let leaking = n.jobs.iter().any(|j| self.leaking_jobs.contains(&j.job_id));
            if leaking {
                n.leaked_pct += self.config.leak_rate_pct_per_s * n.leak_factor * dt;
            }
            let base = 5.0 + 80.0 * f64::from(n.scheduled_cores) / f64::from(n.total_cores.max(1));
            n.mem_used_pct = (base + n.leaked_pct).min(100.0);
            if n.responding && n.mem_used_pct >= 100.0 {
                n.responding = false;
                n.silent_since = t;
            }
            let kw = n.power_kw();
            self.rack_kw[n.rack] += kw;
            let zone = layout::zone_of_rack(n.rack, self.config.racks, self.config.zones);
            self.zone_kw[zone] += kw;
        }
    }

    /// Sum of per-node power draw.
    pub fn node_power_kw(&self) -> f64 {
        self.nodes.iter().map(SimNode::power_kw).sum()
    }

    /// One record per node, stamped with the simulation clock. Nodes that
    /// stopped responding repeat their last report, flagged stale once they
    /// have been silent for more than `stale_after_cycles` periods.
    pub fn emit_telemetry(&mut self) -> Vec<NodeRecord> {
        let now = self.timestamp();
        let clock = self.clock();
        let stale_after = f64::from(self.config.stale_after_cycles) * self.config.period_s as f64;
        self.nodes
            .iter_mut()
            .map(|n| {
                if n.responding || n.last_report.is_none() {
                    let rec = NodeRecord {
                        hostname: n.hostname.clone(),
                        timestamp: now,
                        image_version: n.image_version.clone(),
                        kernel_version: n.kernel_version.clone(),
                        cpu_load: n.cpu_load,
                        mem_used_pct: n.mem_used_pct,
                        disk_used_pct: n.disk_used_pct,
                        total_cores: n.total_cores,
                        scheduled_cores: n.scheduled_cores,
                        jobs: n.jobs.clone(),
                        ip: n.ip.clone(),
                        mac: n.mac.clone(),
                        stale: false,
                        failed_components: n.failed_components.clone(),
                    };
                    n.last_report = Some(rec.clone());
                    rec
                } else {
                    let mut rec = n.last_report.clone().expect("checked above");
                    rec.timestamp = now;
                    rec.stale = clock - n.silent_since > stale_after;
                    rec
                }
            })
            .collect()
    }

    /// Record the node would report right now, ignoring responsiveness.
    pub fn current_record(&self, host: &str) -> Option<NodeRecord> {
        let n = self.node(host)?;
        Some(NodeRecord {
            hostname: n.hostname.clone(),
            timestamp: self.timestamp(),
            image_version: n.image_version.clone(),
            kernel_version: n.kernel_version.clone(),
            cpu_load: n.cpu_load,
            mem_used_pct: n.mem_used_pct,
            disk_used_pct: n.disk_used_pct,
            total_cores: n.total_cores,
            scheduled_cores: n.scheduled_cores,
            jobs: n.jobs.clone(),
            ip: n.ip.clone(),
            mac: n.mac.clone(),
            stale: !n.responding,
            failed_components: n.failed_components.clone(),
        })
    }

    /// Engineering value of one point in the current state.
    pub fn point_value(&self, point_id: &str, offset: f64) -> f64 {
        let Some(role) = PointRole::of(point_id) else {
            return 0.0;
        };
        let pod = &self.pod;
        let zone = |z: usize| pod.zones.get(z);
        let rack_zone = |r: usize| zone(self.config.zone_of_rack(r));
        let bit = |b: bool| if b { 1.0 } else { 0.0 };
        match role {
            PointRole::Status(layout::BIT_MECHANICAL_COOLING) => bit(pod.mechanical_cooling),
            PointRole::Status(layout::BIT_ECONOMIZER) => bit(pod.economizer_mode),
            PointRole::Status(layout::BIT_WATER_ALARM) => bit(pod.water_alarm),
            PointRole::Status(layout::BIT_FIRE_ALARM) => bit(pod.fire_alarm),
            PointRole::Status(_) => 0.0,
            PointRole::FeedPower(f) => pod.feed_kw.get(f).copied().unwrap_or(0.0),
            PointRole::CoolingPower => pod.cooling_kw,
            PointRole::OutsideTemp => pod.outside_temp_c,
            PointRole::ZoneSupplyTemp(z) => zone(z).map_or(0.0, |z| z.temp_c),
            PointRole::ZoneReturnTemp(z) => zone(z).map_or(0.0, |s| {
                s.temp_c + 0.04 * self.zone_kw.get(z).copied().unwrap_or(0.0)
            }),
            PointRole::ZoneHumidity(z) => zone(z).map_or(0.0, |z| z.humidity_pct),
            PointRole::ZonePressure(z) => zone(z).map_or(0.0, |z| z.diff_pressure_pa),
            PointRole::ZoneAirflow(z) => zone(z).map_or(0.0, |z| z.airflow_m3h),
            PointRole::RackPower(r) => self.rack_kw.get(r).copied().unwrap_or(0.0),
            PointRole::RackHumidity(r) => {
                rack_zone(r).map_or(0.0, |z| (z.humidity_pct + 2.0 * offset).clamp(0.0, 100.0))
            }
            PointRole::RackInlet(r, u) => {
                rack_zone(r).map_or(0.0, |z| z.temp_c + offset + 0.05 * f64::from(u))
            }
            PointRole::RackOutlet(r, u) => rack_zone(r).map_or(0.0, |z| {
                z.temp_c
                    + offset
                    + 0.05 * f64::from(u)
                    + 0.4 * self.rack_kw.get(r).copied().unwrap_or(0.0)
            }),
        }
    }

    /// Engineering values for every mapped point, in map order.
    pub fn point_values(&self) -> Vec<f64> {
        self.map
            .points()
            .iter()
            .zip(&self.point_offsets)
            .map(|(p, off)| self.point_value(&p.point_id, *off))
            .collect()
    }

    /// Encoded register contents for the current state.
    pub fn register_image(&self) -> RegisterImage {
        RegisterImage::encode(&self.map, &self.point_values())
    }

    // Node-control operations used by the operator server's simulator adapter.

    /// Power-cycles a node: jobs are killed, leaked memory released.
    pub fn reboot(&mut self, host: &str) -> Result<(), SimError> {
        let i = self.host(host)?;
        let t = self.clock();
        let n = &mut self.nodes[i];
        n.evicted.extend(n.jobs.iter().map(|j| j.job_id.clone()));
        n.leaked_pct = 0.0;
        n.responding = true;
        n.last_report = None;
        self.update_nodes(t, 0.0);
        Ok(())
    }

    /// Reinstalls the common image, which also reboots the node.
    pub fn reimage(&mut self, host: &str) -> Result<(), SimError> {
        let i = self.host(host)?;
        self.nodes[i].image_version = self.config.golden_image.clone();
        self.nodes[i].failed_components.clear();
        self.reboot(host)
    }

    pub fn remove_from_scheduler(&mut self, host: &str) -> Result<(), SimError> {
        let i = self.host(host)?;
        let t = self.clock();
        let n = &mut self.nodes[i];
        n.evicted.extend(n.jobs.iter().map(|j| j.job_id.clone()));
        n.in_service = false;
        self.update_nodes(t, 0.0);
        Ok(())
    }

    pub fn return_to_service(&mut self, host: &str) -> Result<(), SimError> {
        let i = self.host(host)?;
        self.nodes[i].in_service = true;
        Ok(())
    }
}
