//! Canned scenarios used by the examples, tests and `podwatch simulate`.

use super::layout::{self, host_name, rack_name, zone_name, PointRole};
use super::{Fault, FaultScript, JobSpec, ScriptEntry, SimConfig};
use crate::baseline::{
    Baseline, BaselineEntry, CueClass, InventoryHost, Kind, NodeSettings, Severity,
};
use crate::modbus::RegisterMap;

fn hosts(range: std::ops::Range<usize>) -> Vec<String> {
    range.map(host_name).collect()
}

fn script(entries: Vec<(f64, Fault)>) -> FaultScript {
    FaultScript::new(
        entries
            .into_iter()
            .map(|(at, fault)| ScriptEntry { at, fault })
            .collect(),
    )
    .expect("canned scripts are ordered")
}

pub const LEAK_JOB: &str = "job-4242";
pub const LEAK_USER: &str = "alice";

/// Full-size pod where `alice` runs a 128-node job that starts leaking memory
/// after one minute. Two other users share some of those nodes; a fourth job
/// runs elsewhere.
pub fn memory_leak() -> (SimConfig, FaultScript) {
    let cfg = SimConfig {
        jobs: vec![
            JobSpec::new(LEAK_JOB, LEAK_USER, hosts(0..128), 16),
            JobSpec::new("job-5001", "bob", hosts(96..160), 8),
            JobSpec::new("job-5002", "carol", hosts(0..20), 8),
            JobSpec::new("job-6000", "dave", hosts(300..400), 32),
        ],
        ..SimConfig::default()
    };
    let s = script(vec![(
        60.0,
        Fault::MemoryLeak {
            job_id: LEAK_JOB.into(),
        },
    )]);
    (cfg, s)
}

/// Small pod with a water leak in the first zone at t = 30 s.
pub fn water_event() -> (SimConfig, FaultScript) {
    let mut cfg = SimConfig::small(16, 120);
    cfg.jobs = vec![
        JobSpec::new("job-100", "alice", hosts(0..6), 16),
        JobSpec::new("job-101", "bob", hosts(4..10), 8),
    ];
    let s = script(vec![(30.0, Fault::WaterEvent { zone: zone_name(0) })]);
    (cfg, s)
}

/// Small pod over 100 cycles with water, power and fire faults, plus a node
/// drifting off the golden image and a failed DIMM.
pub fn mixed_faults() -> (SimConfig, FaultScript) {
    let mut cfg = SimConfig::small(32, 240);
    cfg.jobs = vec![
        JobSpec::new("job-200", "alice", hosts(0..12), 16),
        JobSpec::new("job-201", "bob", hosts(8..24), 8).starting_at(150.0, Some(900.0)),
        JobSpec::new("job-202", "carol", hosts(24..32), 32).starting_at(300.0, None),
    ];
    let s = script(vec![
        (200.0, Fault::WaterEvent { zone: zone_name(1) }),
        (
            450.0,
            Fault::PowerSpike {
                feed: "feedA".into(),
                kw: 160.0,
            },
        ),
        (700.0, Fault::ImageDrift { host: host_name(3) }),
        (
            820.0,
            Fault::ComponentFailure {
                host: host_name(20),
                component: "dimm3".into(),
            },
        ),
        (1000.0, Fault::FireBit),
        (
            1100.0,
            Fault::TempRamp {
                zone: zone_name(0),
                rate: 0.02,
            },
        ),
    ]);
    (cfg, s)
}

/// One simulated week at ten-minute cycles. Every job is submitted on the
/// Friday, at staggered hours.
pub fn friday_week() -> SimConfig {
    let mut cfg = SimConfig::small(16, 120);
    cfg.period_s = 600;
    const DAY: f64 = 86_400.0;
    let users = ["alice", "bob", "carol"];
    cfg.jobs = (0..6)
        .map(|i| {
            let start = 4.0 * DAY + 3600.0 * (2 + 3 * i) as f64;
            JobSpec::new(
                &format!("job-{}", 700 + i),
                users[i % 3],
                hosts(2 * i..2 * i + 3),
                8,
            )
            .starting_at(start, Some(3600.0 * (2 + i % 3) as f64))
        })
        .collect();
    cfg
}

pub const NAMES: [&str; 5] = [
    "default",
    "water_event",
    "mixed_faults",
    "memory_leak",
    "friday_week",
];

/// Scenario by name; `default` is the full-size pod with no jobs or faults.
pub fn by_name(name: &str) -> Option<(SimConfig, FaultScript)> {
    Some(match name {
        "default" => (SimConfig::default(), FaultScript::default()),
        "water_event" => water_event(),
        "mixed_faults" => mixed_faults(),
        "memory_leak" => memory_leak(),
        "friday_week" => (friday_week(), FaultScript::default()),
        _ => return None,
    })
}

/// Baseline for a simulated pod: a check for every mapped point, every
/// configured host in the inventory, and the golden image as the expected
/// node image. Power limits scale with the node count.
pub fn default_baseline(config: &SimConfig, map: &RegisterMap) -> Baseline {
    use CueClass::*;
    use Kind::*;
    use Severity::*;
    let nodes = config.nodes as f64;
    let entries = map
        .points()
        .iter()
        .filter_map(|p| {
            let (kind, limit, severity, cue) = match PointRole::of(&p.point_id)? {
                PointRole::Status(layout::BIT_MECHANICAL_COOLING) => {
                    (Binary, 0.0, Info, MechanicalCooling)
                }
                PointRole::Status(layout::BIT_ECONOMIZER) => (Binary, 0.0, Info, Economizer),
                PointRole::Status(layout::BIT_WATER_ALARM) => (Binary, 0.0, Critical, Water),
                PointRole::Status(layout::BIT_FIRE_ALARM) => (Binary, 0.0, Critical, Fire),
                PointRole::Status(_) => return None,
                PointRole::FeedPower(_) => (Max, (0.2 * nodes).max(10.0), Critical, Power),
                PointRole::CoolingPower => (Max, (0.1 * nodes).max(5.0), Warning, Power),
                PointRole::OutsideTemp => (Max, 40.0, Info, Temperature),
                PointRole::ZoneSupplyTemp(_) => (Max, 30.0, Warning, Temperature),
                PointRole::ZoneReturnTemp(_) => (Max, 40.0, Warning, Temperature),
                PointRole::ZoneHumidity(_) | PointRole::RackHumidity(_) => {
                    (Max, 80.0, Warning, Water)
                }
                PointRole::ZonePressure(_) => (Min, 5.0, Warning, Economizer),
                PointRole::ZoneAirflow(_) => (Min, 500.0, Warning, Economizer),
                PointRole::RackPower(_) => (Max, 16.0, Warning, Power),
                PointRole::RackInlet(..) => (Max, 32.0, Warning, Temperature),
                PointRole::RackOutlet(..) => (Max, 45.0, Warning, Temperature),
            };
            Some(BaselineEntry::new(
                &p.point_id,
                kind,
                limit,
                severity,
                cue,
                &p.zone,
            ))
        })
        .collect();
    let hosts = (0..config.nodes)
        .map(|i| {
            let (rack, slot) = config.rack_of_host(i);
            InventoryHost {
                hostname: host_name(i),
                rack: rack_name(rack),
                slot: slot as u32,
            }
        })
        .collect();
    let settings = NodeSettings {
        expected_image: Some(config.golden_image.clone()),
        stale_cycles: config.stale_after_cycles,
        ..NodeSettings::default()
    };
    Baseline::new(entries, hosts, settings).expect("generated baseline is valid")
}
