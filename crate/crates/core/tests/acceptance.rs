//! Primary acceptance criteria, one PASS/FAIL line each.
//!
//! Runs as a plain binary so the report is printed on every `cargo test`.
//! `cargo test --test acceptance -- <filter>` runs the criteria whose name
//! contains the filter.

mod common;

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use podwatch::assoc::{AssocArray, Collision, KeyRange, Triple};
use podwatch::baseline::{classify, detect_deviations, Baseline, Color, CueClass, NodeSettings};
use podwatch::history::{self, Bucketing, ReplayWindow};
use podwatch::ingest::{reading_triples, Table, TripleStore};
use podwatch::modbus::codec::{
    decode_response, encode_coils_response, encode_exception, encode_registers_response,
    encode_request, ExceptionCode, ModbusRequest, ResponseData,
};
use podwatch::modbus::{ModbusClient, ModbusError};
use podwatch::pipeline::{self, Collector, Pipeline, PollSettings, SimCollector};
use podwatch::podsim::{scenario, ModbusServer, RegisterImage, SharedImage, SimHost, Simulator};
use podwatch::records::{JobSlot, NodeRecord, SensorReading};
use podwatch::server::protocol::{ClientMessage, Outcome, Selector, ServerMessage};
use podwatch::server::{Client, ServerConfig, SimAdapter, StateServer, Tier, TokenTable, Verb};
use rand::seq::SliceRandom;
use rand::Rng;

use common::*;

const CYCLE_BUDGET: Duration = Duration::from_millis(11_900);
const FULL_MAP_POINTS: usize = 5325;
const FULL_POD_NODES: usize = 900;
const DEVIATION_PAIRS: usize = 1000;
const ASSOC_INSTANCES: usize = 500;
const ASSOC_MAX_DIM: usize = 32;
const REPLAY_CYCLES: u64 = 100;
const AUDITED_ACTIONS: usize = 50;
const LEAK_HOSTS: usize = 128;
const HISTORY_TRIPLES: usize = 10_000_000;
const HISTORY_POINTS: usize = 1000;
const HISTORY_PERIOD_S: u64 = 15;
const RANGE_QUERY_BUDGET: Duration = Duration::from_secs(1);
const RANGE_QUERIES: usize = 20;

type Check = fn() -> Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let criteria: [(&str, Check); 9] = [
        ("pipeline_cycle_budget", pipeline_cycle_budget),
        ("deviation_oracle", deviation_oracle),
        ("assoc_oracles", assoc_oracles),
        ("classification_table", classification_table),
        ("modbus_wire", modbus_wire),
        ("replay_fidelity", replay_fidelity),
        ("audit_completeness", audit_completeness),
        ("pull_memory_leak", pull_memory_leak),
        ("desk_scale_history", desk_scale_history),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    let mut ran = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let started = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(format!("panic: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS  {name:<24} {detail} [{secs:.2}s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<24} {why} [{secs:.2}s]");
            }
        }
    }
    println!("\n{} of {ran} primary criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn pipeline_cycle_budget() -> Result<String, String> {
    let sim = Simulator::new(pipeline::bench_sim_config(FULL_MAP_POINTS, FULL_POD_NODES))
        .map_err(|e| e.to_string())?;
    let baseline = Arc::new(scenario::default_baseline(sim.config(), sim.map()));
    let period = sim.config().period_s;
    let host = SimHost::start(sim, "127.0.0.1:0", "127.0.0.1:0").map_err(|e| e.to_string())?;
    let mut collector = SimCollector::new(host, period, PollSettings::default());
    let mut pipeline = Pipeline::new(baseline, Arc::new(TripleStore::in_memory()), period)
        .map_err(|e| e.to_string())?;
    let mut worst = None::<pipeline::StageTimings>;
    for _ in 0..3 {
        let t = Instant::now();
        let collected = collector.collect().map_err(|e| e.to_string())?;
        let poll = t.elapsed();
        ensure!(
            collected.readings.len() == FULL_MAP_POINTS,
            "{} readings",
            collected.readings.len()
        );
        ensure!(
            collected.nodes.len() == FULL_POD_NODES,
            "{} node records",
            collected.nodes.len()
        );
        let out = pipeline
            .process(collected, poll)
            .map_err(|e| e.to_string())?;
        ensure!(
            out.frame.stats.nodes_total as usize == FULL_POD_NODES,
            "frame lists {} nodes",
            out.frame.stats.nodes_total
        );
        if worst.is_none_or(|w| out.timings.total() > w.total()) {
            worst = Some(out.timings);
        }
    }
    let w = worst.expect("three cycles ran");
    ensure!(
        w.total() <= CYCLE_BUDGET,
        "slowest cycle {:?} over {:?}",
        w.total(),
        CYCLE_BUDGET
    );
    Ok(format!(
        "slowest of 3 cycles {:.3}s <= {:.1}s (poll {:.3} correlate {:.3} ingest {:.3} frame {:.3})",
        w.total().as_secs_f64(),
        CYCLE_BUDGET.as_secs_f64(),
        w.poll.as_secs_f64(),
        w.correlate.as_secs_f64(),
        w.ingest.as_secs_f64(),
        w.frame.as_secs_f64()
    ))
}

fn deviation_oracle() -> Result<String, String> {
    let mut rng = rng(0xD1);
    let mut alerts_seen = 0;
    for case in 0..DEVIATION_PAIRS {
        let n = rng.gen_range(1..=40);
        let ids = key_pool("pt", n);
        let mut entries = Vec::new();
        for p in &ids {
            if rng.gen_bool(0.8) {
                entries.push(random_entry(&mut rng, p));
            }
        }
        let ts = 1_700_000_000 + case as u64 * 15;
        let mut values = BTreeMap::new();
        let mut triples = Vec::new();
        for p in &ids {
            if rng.gen_bool(0.15) {
                continue;
            }
            let limit = entries
                .iter()
                .find(|e| &e.point_id == p)
                .map_or(0.0, |e| e.limit);
            let v = random_observation(&mut rng, limit);
            if v != 0.0 {
                values.insert(p.clone(), v);
            }
            triples.push(Triple::new(format!("{ts:010}|ecopod|{p}"), "value", v));
        }
        let frame =
            AssocArray::from_triples(triples, Collision::Last).map_err(|e| e.to_string())?;
        let baseline = Baseline::new(entries.clone(), vec![], NodeSettings::default())
            .map_err(|e| e.to_string())?;
        let got: Vec<_> = detect_deviations(&frame, &baseline)
            .into_iter()
            .map(|a| (a.point_id, a.kind, a.observed, a.limit))
            .collect();
        let want = scalar_deviations(&values, &entries);
        ensure!(
            got == want,
            "case {case}: engine {got:?} != oracle {want:?}"
        );
        alerts_seen += want.len();
    }
    Ok(format!(
        "{DEVIATION_PAIRS} pairs equal to the scalar loop ({alerts_seen} alerts)"
    ))
}

fn assoc_oracles() -> Result<String, String> {
    let mut rng = rng(0xA5);
    for case in 0..ASSOC_INSTANCES {
        let (m, k, n) = (
            rng.gen_range(1..=ASSOC_MAX_DIM),
            rng.gen_range(1..=ASSOC_MAX_DIM),
            rng.gen_range(1..=ASSOC_MAX_DIM),
        );
        let (rows, inner, cols) = (key_pool("r", m), key_pool("k", k), key_pool("c", n));
        let density = rng.gen_range(0.05..0.6);
        let ta = random_triples(&mut rng, &rows, &inner, density);
        // B's rows overlap A's columns only partly.
        let b_rows: Vec<String> = inner
            .iter()
            .filter(|_| rng.gen_bool(0.8))
            .cloned()
            .chain(key_pool("x", 3))
            .collect();
        let tb = random_triples(&mut rng, &b_rows, &cols, density);
        let a = AssocArray::from_triples(ta.clone(), Collision::Sum).map_err(|e| e.to_string())?;
        let b = AssocArray::from_triples(tb.clone(), Collision::Sum).map_err(|e| e.to_string())?;
        let (ca, cb) = (cells_of(&ta), cells_of(&tb));

        let ab = a.multiply(&b);
        ensure!(
            cells(&ab) == dense_multiply(&ca, &cb),
            "case {case}: multiply differs from dense product"
        );
        ensure!(
            cells(&a.transpose()) == dense_transpose(&ca),
            "case {case}: transpose differs"
        );
        let (pr, pc) = (random_pick(&mut rng, &rows), random_pick(&mut rng, &inner));
        let sub = a
            .subsref(&pr.range(), &pc.range())
            .map_err(|e| e.to_string())?;
        ensure!(
            cells(&sub) == scan_subsref(&ca, &pr, &pc),
            "case {case}: subsref({pr:?}, {pc:?}) differs from linear scan"
        );
        ensure!(
            ab.transpose() == b.transpose().multiply(&a.transpose()),
            "case {case}: (AB)' != B'A'"
        );
        let ident = AssocArray::identity(inner.iter().cloned());
        ensure!(a.multiply(&ident) == a, "case {case}: A x I != A");
    }
    Ok(format!(
        "{ASSOC_INSTANCES} instances up to {ASSOC_MAX_DIM}x{ASSOC_MAX_DIM}: multiply, transpose, subsref and both identities hold"
    ))
}

fn sweep_record(scheduled: u32, total: u32, triggers: u8) -> NodeRecord {
    let jobs = if scheduled > 0 {
        vec![JobSlot {
            job_id: "job-1".into(),
            user: "alice".into(),
            cores: scheduled,
        }]
    } else {
        vec![]
    };
    NodeRecord {
        hostname: "node0001".into(),
        timestamp: 1_700_000_000,
        image_version: if triggers & 1 != 0 {
            "stale-image"
        } else {
            "golden"
        }
        .into(),
        kernel_version: "6.1".into(),
        cpu_load: f64::from(scheduled) / 4.0,
        mem_used_pct: if triggers & 2 != 0 { 99.0 } else { 40.0 },
        disk_used_pct: 30.0,
        total_cores: total,
        scheduled_cores: scheduled,
        jobs,
        ip: "10.0.0.1".into(),
        mac: "02:00:00:00:00:01".into(),
        stale: triggers & 4 != 0,
        failed_components: if triggers & 8 != 0 {
            vec!["disk0".into()]
        } else {
            vec![]
        },
    }
}

fn classification_table() -> Result<String, String> {
    const TOTAL: u32 = 32;
    let settings = NodeSettings {
        expected_image: Some("golden".into()),
        mem_threshold_pct: 95.0,
        stale_cycles: 3,
    };
    let baseline = Baseline::new(vec![], vec![], settings).map_err(|e| e.to_string())?;
    let mut cases = 0;
    let mut healthy_blue = 0;
    for scheduled in 0..=TOTAL {
        for triggers in 0u8..16 {
            let status = classify(&sweep_record(scheduled, TOTAL, triggers), &baseline);
            let want = rule_color(scheduled, TOTAL, triggers.count_ones() as usize);
            ensure!(
                status.color == want,
                "{scheduled}/{TOTAL} cores, triggers {triggers:04b}: {:?}, table says {want:?}",
                status.color
            );
            ensure!(
                status.reasons.len() == triggers.count_ones() as usize,
                "{scheduled}/{TOTAL} cores, triggers {triggers:04b}: reasons {:?}",
                status.reasons
            );
            if triggers == 0 && status.color == Color::Blue {
                healthy_blue += 1;
            }
            cases += 1;
        }
    }
    let half = classify(&sweep_record(TOTAL / 2, TOTAL, 0), &baseline).color;
    ensure!(half == Color::Blue, "exactly half scheduled is {half:?}");
    Ok(format!(
        "{cases} cases match the rule table; {healthy_blue} healthy Blue counts of {} (exactly half = Blue)",
        TOTAL + 1
    ))
}

fn modbus_wire() -> Result<String, String> {
    // Request/response/exception frames as laid out in the Modbus TCP
    // application protocol: MBAP header, then function code and data.
    let req = ModbusRequest::read_holding_registers(0x0001, 0x11, 0x006B, 0x0003);
    let golden_req = [
        0x00, 0x01, 0x00, 0x00, 0x00, 0x06, 0x11, 0x03, 0x00, 0x6B, 0x00, 0x03,
    ];
    ensure!(
        encode_request(&req).map_err(|e| e.to_string())? == golden_req,
        "holding-register request bytes"
    );
    let golden_resp = [
        0x00, 0x01, 0x00, 0x00, 0x00, 0x09, 0x11, 0x03, 0x06, 0x02, 0x2B, 0x00, 0x00, 0x00, 0x64,
    ];
    ensure!(
        encode_registers_response(0x0001, 0x11, &[0x022B, 0x0000, 0x0064]) == golden_resp,
        "holding-register response bytes"
    );
    ensure!(
        decode_response(&golden_resp, &req).map_err(|e| e.to_string())?
            == ResponseData::Registers(vec![555, 0, 100]),
        "holding-register response decode"
    );
    let coils = ModbusRequest::read_coils(0x0002, 0x11, 0x0013, 0x0013);
    ensure!(
        encode_request(&coils).map_err(|e| e.to_string())?
            == [0x00, 0x02, 0x00, 0x00, 0x00, 0x06, 0x11, 0x01, 0x00, 0x13, 0x00, 0x13],
        "coil request bytes"
    );
    let coil_bits: Vec<bool> = [1, 0, 1, 1, 0, 0, 1, 1, 1, 1, 0, 1, 0, 1, 1, 0, 1, 0, 1]
        .iter()
        .map(|b| *b == 1)
        .collect();
    let golden_coils = [
        0x00, 0x02, 0x00, 0x00, 0x00, 0x06, 0x11, 0x01, 0x03, 0xCD, 0x6B, 0x05,
    ];
    ensure!(
        encode_coils_response(0x0002, 0x11, &coil_bits) == golden_coils,
        "coil response bytes"
    );
    ensure!(
        decode_response(&golden_coils, &coils).map_err(|e| e.to_string())?
            == ResponseData::Coils(coil_bits),
        "coil response decode"
    );
    let golden_exc = [0x00, 0x01, 0x00, 0x00, 0x00, 0x03, 0x11, 0x83, 0x02];
    ensure!(
        encode_exception(0x0001, 0x11, 0x03, ExceptionCode::IllegalDataAddress) == golden_exc,
        "exception bytes"
    );
    ensure!(
        matches!(
            decode_response(&golden_exc, &req),
            Err(ModbusError::Exception(ExceptionCode::IllegalDataAddress))
        ),
        "exception decode"
    );

    // Every 16-bit value through the simulator's server and back, twice with
    // different address assignments.
    let mut checked = 0usize;
    for shift in [0u16, 0x5A5A] {
        let image = RegisterImage::from_raw((0..=u16::MAX).map(|a| (a, a ^ shift)));
        let mut server = ModbusServer::bind("127.0.0.1:0", SharedImage::new(image))
            .map_err(|e| e.to_string())?;
        let mut client = ModbusClient::connect(server.local_addr(), 1, Duration::from_secs(5))
            .map_err(|e| e.to_string())?;
        let mut seen = vec![false; 0x1_0000];
        let mut start: u32 = 0;
        while start <= u32::from(u16::MAX) {
            let qty = (0x1_0000 - start).min(125) as u16;
            let values = client
                .read_holding_registers(start as u16, qty)
                .map_err(|e| e.to_string())?;
            for (i, v) in values.into_iter().enumerate() {
                let addr = start as u16 + i as u16;
                ensure!(
                    v == addr ^ shift,
                    "address {addr}: read {v}, wrote {}",
                    addr ^ shift
                );
                seen[usize::from(v)] = true;
            }
            start += u32::from(qty);
        }
        ensure!(seen.iter().all(|s| *s), "not every value came back");
        checked += seen.len();
        server.shutdown();
    }
    Ok(format!(
        "5 golden frames match; {checked} register reads over TCP recovered every value 0..65535"
    ))
}

fn replay_fidelity() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (cfg, script) = scenario::mixed_faults();
    let mut sim = Simulator::new(cfg).map_err(|e| e.to_string())?;
    sim.load_script(&script);
    let baseline = Arc::new(scenario::default_baseline(sim.config(), sim.map()));
    let period = sim.config().period_s;
    let host = SimHost::start(sim, "127.0.0.1:0", "127.0.0.1:0").map_err(|e| e.to_string())?;
    let mut collector = SimCollector::new(host, period, PollSettings::default());
    let mut live = Vec::new();
    let mut cues = std::collections::BTreeSet::new();
    {
        let store = Arc::new(TripleStore::open(dir.path()).map_err(|e| e.to_string())?);
        let mut pipeline =
            Pipeline::new(baseline.clone(), store.clone(), period).map_err(|e| e.to_string())?;
        for _ in 0..REPLAY_CYCLES {
            let out = pipeline
                .run_cycle(&mut collector)
                .map_err(|e| e.to_string())?;
            cues.extend(out.frame.active_alerts.iter().map(|a| a.cue_class));
            live.push((out.timestamp, out.bytes));
        }
        store.flush().map_err(|e| e.to_string())?;
    }
    for cue in [CueClass::Water, CueClass::Power, CueClass::Fire] {
        ensure!(cues.contains(&cue), "run never raised a {cue} alert");
    }
    let store = TripleStore::open(dir.path()).map_err(|e| e.to_string())?;
    let (first, last) = (live[0].0, live[live.len() - 1].0);
    let window = ReplayWindow {
        at: first,
        before: 0,
        after: last - first,
    };
    let replayed = history::replay(&store, &baseline, &window).map_err(|e| e.to_string())?;
    ensure!(
        replayed.len() == live.len(),
        "{} replayed frames for {} live",
        replayed.len(),
        live.len()
    );
    for (i, ((ts, bytes), r)) in live.iter().zip(&replayed).enumerate() {
        ensure!(bytes == r, "cycle {} (t={ts}) replays differently", i + 1);
    }
    // A window in the middle returns exactly the cycles inside it.
    let mid = ReplayWindow {
        at: live[49].0,
        before: 10 * period,
        after: 10 * period,
    };
    let part = history::replay(&store, &baseline, &mid).map_err(|e| e.to_string())?;
    ensure!(
        part.len() == 21
            && part[..]
                == live[39..60]
                    .iter()
                    .map(|(_, b)| b.clone())
                    .collect::<Vec<_>>()[..],
        "cycles 40-60 window returned {} frames",
        part.len()
    );
    Ok(format!(
        "{REPLAY_CYCLES} cycles with water, power and fire alerts replay byte-identical from a reopened store"
    ))
}

fn recv_until<T>(
    client: &mut Client,
    mut pick: impl FnMut(ServerMessage) -> Option<T>,
) -> Result<T, String> {
    loop {
        match client.recv().map_err(|e| e.to_string())? {
            Some(m) => {
                if let Some(t) = pick(m) {
                    return Ok(t);
                }
            }
            None => return Err("server closed the connection".into()),
        }
    }
}

fn audit_completeness() -> Result<String, String> {
    let (cfg, script) = scenario::mixed_faults();
    let mut sim = Simulator::new(cfg).map_err(|e| e.to_string())?;
    sim.load_script(&script);
    let baseline = Arc::new(scenario::default_baseline(sim.config(), sim.map()));
    let period = sim.config().period_s;
    let hosts: Vec<String> = baseline
        .hosts()
        .iter()
        .map(|h| h.hostname.clone())
        .collect();
    let host = SimHost::start(sim, "127.0.0.1:0", "127.0.0.1:0").map_err(|e| e.to_string())?;
    let adapter = Box::new(SimAdapter::new(host.simulator()));
    let mut collector = SimCollector::new(host, period, PollSettings::default());
    let mut tokens = TokenTable::new();
    tokens.insert("tv", "victor", Tier::Viewer);
    tokens.insert("to", "olga", Tier::Operator);
    tokens.insert("ta", "ada", Tier::Admin);
    let store = Arc::new(TripleStore::in_memory());
    let server = StateServer::start(
        &ServerConfig::default(),
        tokens,
        baseline.clone(),
        adapter,
        None,
    )
    .map_err(|e| e.to_string())?;
    let mut pipeline = Pipeline::new(baseline, store, period)
        .map_err(|e| e.to_string())?
        .with_publisher(server.authority());
    pipeline
        .run_cycle(&mut collector)
        .map_err(|e| e.to_string())?;

    let mut clients = Vec::new();
    for (who, token) in [("victor", "tv"), ("olga", "to"), ("ada", "ta")] {
        let (c, _, tier) =
            Client::login(server.local_addr(), who, token).map_err(|e| e.to_string())?;
        clients.push((c, tier));
    }
    let mut rng = rng(0x50);
    let mut expected = Vec::new();
    for i in 0..AUDITED_ACTIONS {
        if i % 10 == 0 {
            pipeline
                .run_cycle(&mut collector)
                .map_err(|e| e.to_string())?;
        }
        let who = rng.gen_range(0..clients.len());
        let verb = *Verb::ALL.choose(&mut rng).unwrap();
        let target = hosts.choose(&mut rng).unwrap().clone();
        let comment = (verb == Verb::Comment).then(|| format!("note {i}"));
        let (client, tier) = &mut clients[who];
        let request_id = i as u64 + 1;
        client
            .send(&ClientMessage::action(
                request_id,
                verb,
                &target,
                comment.as_deref(),
            ))
            .map_err(|e| e.to_string())?;
        let outcome = recv_until(client, |m| match m {
            ServerMessage::ActionResult {
                request_id: r,
                outcome,
                ..
            } if r == request_id => Some(outcome),
            _ => None,
        })?;
        let allowed = permitted(*tier, verb);
        ensure!(
            allowed != matches!(outcome, Outcome::Denied(_)),
            "{tier:?} {verb:?}: outcome {outcome:?}"
        );
        expected.push((*tier, verb, target, allowed));
    }
    let entries = server
        .authority()
        .audit_entries()
        .map_err(|e| e.to_string())?;
    ensure!(
        entries.len() == AUDITED_ACTIONS,
        "{} audit entries",
        entries.len()
    );
    let mut viewer = 0;
    for (e, (tier, verb, target, allowed)) in entries.iter().zip(&expected) {
        ensure!(
            e.tier == *tier && e.verb == *verb && &e.target == target,
            "entry {} out of order",
            e.action_id
        );
        let rec = e.node_snapshot.record.as_ref();
        ensure!(
            rec.is_some_and(|r| &r.hostname == target) && e.node_snapshot.status.is_some(),
            "entry {} has no snapshot of {target}",
            e.action_id
        );
        if *tier == Tier::Viewer {
            viewer += 1;
            ensure!(
                matches!(e.outcome, Outcome::Denied(_)),
                "viewer action {} not denied",
                e.action_id
            );
        }
        ensure!(
            *allowed != matches!(e.outcome, Outcome::Denied(_)),
            "entry {} outcome",
            e.action_id
        );
    }
    Ok(format!(
        "{AUDITED_ACTIONS} actions -> {} entries with snapshots; all {viewer} viewer actions denied",
        entries.len()
    ))
}

fn pull_memory_leak() -> Result<String, String> {
    let (cfg, script) = scenario::memory_leak();
    let leak_hosts: Vec<String> = cfg
        .jobs
        .iter()
        .find(|j| j.job_id == scenario::LEAK_JOB)
        .map(|j| j.hosts.clone())
        .unwrap_or_default();
    ensure!(
        leak_hosts.len() == LEAK_HOSTS,
        "scenario job spans {} hosts",
        leak_hosts.len()
    );
    // Co-scheduled jobs from the job table: other jobs sharing those hosts.
    let mut want_co: Vec<(String, String, u32)> = cfg
        .jobs
        .iter()
        .filter(|j| j.user != scenario::LEAK_USER)
        .filter_map(|j| {
            let shared = j.hosts.iter().filter(|h| leak_hosts.contains(h)).count() as u32;
            (shared > 0).then(|| (j.job_id.clone(), j.user.clone(), shared))
        })
        .collect();
    want_co.sort();

    let mut sim = Simulator::new(cfg).map_err(|e| e.to_string())?;
    sim.load_script(&script);
    let baseline = Arc::new(scenario::default_baseline(sim.config(), sim.map()));
    let period = sim.config().period_s;
    let host = SimHost::start(sim, "127.0.0.1:0", "127.0.0.1:0").map_err(|e| e.to_string())?;
    let adapter = Box::new(SimAdapter::new(host.simulator()));
    let mut collector = SimCollector::new(host, period, PollSettings::default());
    let mut tokens = TokenTable::new();
    tokens.insert("tv", "victor", Tier::Viewer);
    let server = StateServer::start(
        &ServerConfig::default(),
        tokens,
        baseline.clone(),
        adapter,
        None,
    )
    .map_err(|e| e.to_string())?;
    let mut pipeline = Pipeline::new(baseline, Arc::new(TripleStore::in_memory()), period)
        .map_err(|e| e.to_string())?
        .with_publisher(server.authority());
    for _ in 0..12 {
        pipeline
            .run_cycle(&mut collector)
            .map_err(|e| e.to_string())?;
    }
    let (mut client, _, _) =
        Client::login(server.local_addr(), "victor", "tv").map_err(|e| e.to_string())?;
    client
        .send(&ClientMessage::pull(
            1,
            Selector::User(scenario::LEAK_USER.into()),
        ))
        .map_err(|e| e.to_string())?;
    let (entities, co) = recv_until(&mut client, |m| match m {
        ServerMessage::PullResult {
            request_id: 1,
            entities,
            co_scheduled,
            ..
        } => Some((entities, co_scheduled)),
        _ => None,
    })?;
    let mut want_hosts = leak_hosts.clone();
    want_hosts.sort();
    ensure!(
        entities == want_hosts,
        "pull returned {} hosts, expected the job's {LEAK_HOSTS}",
        entities.len()
    );
    let got_co: Vec<_> = co
        .into_iter()
        .map(|j| (j.job_id, j.user, j.hosts))
        .collect();
    ensure!(
        got_co == want_co,
        "co-scheduled {got_co:?}, expected {want_co:?}"
    );
    Ok(format!(
        "User({}) -> {} hosts, co-scheduled {:?}",
        scenario::LEAK_USER,
        entities.len(),
        got_co
            .iter()
            .map(|(j, u, n)| format!("{j}/{u}x{n}"))
            .collect::<Vec<_>>()
    ))
}

fn desk_scale_history() -> Result<String, String> {
    let store = TripleStore::in_memory();
    let t0: u64 = 1_700_000_000;
    let per_cycle = HISTORY_POINTS * 2;
    let cycles = HISTORY_TRIPLES / per_cycle;
    let started = Instant::now();
    let mut ingested = 0;
    for c in 0..cycles as u64 {
        let ts = t0 + c * HISTORY_PERIOD_S;
        let triples: Vec<Triple> = (0..HISTORY_POINTS)
            .flat_map(|p| {
                reading_triples(&SensorReading {
                    source: "ecopod".into(),
                    point_id: format!("p{p:04}"),
                    timestamp: ts,
                    value: ((p as u64 * 7 + c) % 400) as f64 / 10.0 + 0.1,
                    unit: if p % 3 == 0 { "kW" } else { "°C" }.into(),
                })
            })
            .collect();
        ingested += store
            .ingest_batch(&triples)
            .map_err(|e| e.to_string())?
            .count;
    }
    let ingest_s = started.elapsed().as_secs_f64();
    ensure!(ingested == HISTORY_TRIPLES, "ingested {ingested} triples");

    let mut rng = rng(0x99);
    let span = cycles as u64 * HISTORY_PERIOD_S;
    let mut slowest = Duration::ZERO;
    for _ in 0..RANGE_QUERIES {
        let from = t0 + rng.gen_range(0..span - 3600);
        let to = from + 3600;
        let rows = KeyRange::interval(format!("{from:010}|"), format!("{to:010}|~")).unwrap();
        let q = Instant::now();
        let raw = store
            .query_range(Table::Traw, &rows, &KeyRange::All)
            .map_err(|e| e.to_string())?;
        slowest = slowest.max(q.elapsed());
        let q = Instant::now();
        let edges = store
            .query_range(Table::Tedge, &rows, &KeyRange::All)
            .map_err(|e| e.to_string())?;
        slowest = slowest.max(q.elapsed());
        let in_window = (0..cycles as u64)
            .filter(|c| (from..=to).contains(&(t0 + c * HISTORY_PERIOD_S)))
            .count();
        ensure!(
            raw.nnz() == in_window * HISTORY_POINTS && edges.nnz() == in_window * HISTORY_POINTS,
            "hour from {from}: {} values, {} edges, expected {} each",
            raw.nnz(),
            edges.nnz(),
            in_window * HISTORY_POINTS
        );
    }
    ensure!(
        slowest <= RANGE_QUERY_BUDGET,
        "slowest one-hour query {slowest:?}"
    );

    // Scripted week: every job is submitted on a Friday.
    let cfg = scenario::friday_week();
    let jobs = cfg.jobs.len() as u64;
    let sim = Simulator::new(cfg).map_err(|e| e.to_string())?;
    let baseline = Arc::new(scenario::default_baseline(sim.config(), sim.map()));
    let period = sim.config().period_s;
    let host = SimHost::start(sim, "127.0.0.1:0", "127.0.0.1:0").map_err(|e| e.to_string())?;
    let mut collector = SimCollector::new(host, period, PollSettings::default());
    let week = Arc::new(TripleStore::in_memory());
    let mut pipeline =
        Pipeline::new(baseline.clone(), week.clone(), period).map_err(|e| e.to_string())?;
    let mut stamps = Vec::new();
    for _ in 0..(7 * 86_400 / period) {
        stamps.push(
            pipeline
                .run_cycle(&mut collector)
                .map_err(|e| e.to_string())?
                .timestamp,
        );
    }
    let report = history::usage_report(
        &week,
        &baseline,
        stamps[0],
        *stamps.last().unwrap(),
        Bucketing::DayOfWeek,
    )
    .map_err(|e| e.to_string())?;
    let fri = report
        .rows
        .iter()
        .find(|r| r.bucket == "Fri")
        .map_or(0, |r| r.jobs_submitted);
    ensure!(
        fri == jobs && report.total_jobs() == jobs,
        "Fri has {fri} of {} submissions, {jobs} scripted",
        report.total_jobs()
    );
    Ok(format!(
        "{HISTORY_TRIPLES} triples ingested in {ingest_s:.1}s; slowest of {} one-hour queries {:.3}s <= {:.0}s; Fri holds {fri}/{jobs} submissions",
        2 * RANGE_QUERIES,
        slowest.as_secs_f64(),
        RANGE_QUERY_BUDGET.as_secs_f64()
    ))
}
