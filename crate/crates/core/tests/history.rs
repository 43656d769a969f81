use std::sync::Arc;

use podwatch::assoc::Triple;
use podwatch::baseline::{failed_reason, Baseline, REASON_IMAGE};
use podwatch::history::{self, Bucketing, HistoryError, ReplayWindow, WEEKDAYS};
use podwatch::ingest::{cycle_triples, reading_triples, TripleStore};
use podwatch::pipeline::{Pipeline, PollSettings, SimCollector};
use podwatch::podsim::{scenario, SimConfig, SimHost, Simulator};
use podwatch::records::SensorReading;

struct Run {
    store: Arc<TripleStore>,
    baseline: Arc<Baseline>,
    stamps: Vec<u64>,
    frames: Vec<Vec<u8>>,
}

fn run(sim: Simulator, cycles: u64) -> Run {
    let baseline = Arc::new(scenario::default_baseline(sim.config(), sim.map()));
    let period = sim.config().period_s;
    let host = SimHost::start(sim, "127.0.0.1:0", "127.0.0.1:0").unwrap();
    let mut collector = SimCollector::new(host, period, PollSettings::default());
    let store = Arc::new(TripleStore::in_memory());
    let mut pipeline = Pipeline::new(baseline.clone(), store.clone(), period).unwrap();
    let mut stamps = Vec::new();
    let mut frames = Vec::new();
    for _ in 0..cycles {
        let out = pipeline.run_cycle(&mut collector).unwrap();
        stamps.push(out.timestamp);
        frames.push(out.bytes);
    }
    Run {
        store,
        baseline,
        stamps,
        frames,
    }
}

fn scripted(make: fn() -> (SimConfig, podwatch::podsim::FaultScript), cycles: u64) -> Run {
    let (cfg, script) = make();
    let mut sim = Simulator::new(cfg).unwrap();
    sim.load_script(&script);
    run(sim, cycles)
}

fn friday_week() -> (SimConfig, Run) {
    let cfg = scenario::friday_week();
    let cycles = 7 * 86_400 / cfg.period_s;
    let r = run(Simulator::new(cfg.clone()).unwrap(), cycles);
    (cfg, r)
}

#[test]
fn usage_totals_do_not_depend_on_bucketing() {
    let (cfg, r) = friday_week();
    let (from, to) = (r.stamps[0], *r.stamps.last().unwrap());
    let reports: Vec<_> = [
        Bucketing::DayOfWeek,
        Bucketing::HourOfDay,
        Bucketing::User,
        Bucketing::Rack,
    ]
    .into_iter()
    .map(|b| history::usage_report(&r.store, &r.baseline, from, to, b).unwrap())
    .collect();
    for rep in &reports {
        assert_eq!(
            rep.total_jobs(),
            cfg.jobs.len() as u64,
            "{:?}",
            rep.bucketing
        );
        assert!(
            (rep.total_core_hours() - reports[0].total_core_hours()).abs() < 1e-9,
            "{:?}",
            rep.bucketing
        );
    }
    // Core-hours against the job table, allowing one cycle of slack at each
    // end of every job.
    let period_h = cfg.period_s as f64 / 3600.0;
    let (mut want, mut slack) = (0.0, 0.0);
    for j in &cfg.jobs {
        let cores = f64::from(j.cores_per_node) * j.hosts.len() as f64;
        want += cores * j.duration.unwrap() / 3600.0;
        slack += 2.0 * cores * period_h;
    }
    let got = reports[0].total_core_hours();
    assert!(
        (got - want).abs() <= slack,
        "core-hours {got} vs {want} ± {slack}"
    );

    let dow = &reports[0];
    assert_eq!(
        dow.rows
            .iter()
            .map(|r| r.bucket.as_str())
            .collect::<Vec<_>>(),
        WEEKDAYS
    );
    for row in &dow.rows {
        let expect = if row.bucket == "Fri" {
            cfg.jobs.len() as u64
        } else {
            0
        };
        assert_eq!(row.jobs_submitted, expect, "{}", row.bucket);
    }
}

#[test]
fn usage_by_hour_and_user_follow_the_job_table() {
    let (cfg, r) = friday_week();
    let (from, to) = (r.stamps[0], *r.stamps.last().unwrap());
    let by_hour =
        history::usage_report(&r.store, &r.baseline, from, to, Bucketing::HourOfDay).unwrap();
    assert_eq!(by_hour.rows.len(), 24);
    for row in &by_hour.rows {
        let h: u64 = row.bucket.parse().unwrap();
        let want = cfg
            .jobs
            .iter()
            .filter(|j| (cfg.epoch + j.start as u64) % 86_400 / 3600 == h)
            .count() as u64;
        assert_eq!(row.jobs_submitted, want, "hour {h}");
    }
    let by_user = history::usage_report(&r.store, &r.baseline, from, to, Bucketing::User).unwrap();
    for row in &by_user.rows {
        let want = cfg.jobs.iter().filter(|j| j.user == row.bucket).count() as u64;
        assert_eq!(row.jobs_submitted, want, "user {}", row.bucket);
    }

    let mut tsv = Vec::new();
    by_user.write_tsv(&mut tsv).unwrap();
    let text = String::from_utf8(tsv).unwrap();
    assert!(
        text.starts_with("bucket\tjobsSubmitted\tcoreHours\tpeakKW\n"),
        "{text}"
    );
    let json = serde_json::to_value(&by_user).unwrap();
    assert!(json["rows"][0].get("peakKW").is_some(), "{json}");
}

#[test]
fn reports_are_deterministic() {
    let a = scripted(scenario::mixed_faults, 40);
    let b = scripted(scenario::mixed_faults, 40);
    assert_eq!(a.frames, b.frames);
    let (mut da, mut db) = (Vec::new(), Vec::new());
    a.store.dump(&mut da).unwrap();
    b.store.dump(&mut db).unwrap();
    assert!(da == db, "store dumps differ");
    let (from, to) = (a.stamps[0], *a.stamps.last().unwrap());
    assert_eq!(
        history::usage_report(&a.store, &a.baseline, from, to, Bucketing::Rack).unwrap(),
        history::usage_report(&a.store, &a.baseline, from, to, Bucketing::Rack).unwrap()
    );
    assert_eq!(
        history::hotspot_report(&a.store, &a.baseline, from, to).unwrap(),
        history::hotspot_report(&b.store, &b.baseline, from, to).unwrap()
    );
}

#[test]
fn hotspot_finds_the_hot_rack() {
    const RACKS: usize = 6;
    const HOT: usize = 3;
    const EXCESS: f64 = 5.0;
    let store = TripleStore::in_memory();
    let t0 = 1_700_000_000;
    for c in 0..10u64 {
        let ts = t0 + 15 * c;
        let mut triples: Vec<Triple> = Vec::new();
        for rack in 1..=RACKS {
            for (probe, base) in [("inlet_c", 22.0), ("outlet_c", 34.0)] {
                let hot = if rack == HOT { EXCESS } else { 0.0 };
                triples.extend(reading_triples(&SensorReading {
                    source: "ecopod".into(),
                    point_id: format!("rack{rack:02}.{probe}"),
                    timestamp: ts,
                    value: base + hot + (c % 2) as f64,
                    unit: "°C".into(),
                }));
            }
        }
        // Not a rack point: ignored.
        triples.extend(reading_triples(&SensorReading {
            source: "ecopod".into(),
            point_id: "zone01.supply_c".into(),
            timestamp: ts,
            value: 90.0,
            unit: "°C".into(),
        }));
        triples.extend(cycle_triples(ts, c + 1, 15));
        store.ingest_batch(&triples).unwrap();
    }
    let baseline = Baseline::default();
    let rows = history::hotspot_report(&store, &baseline, t0, t0 + 150).unwrap();
    assert_eq!(rows.len(), RACKS);
    assert_eq!(rows[0].rack, format!("rack{HOT:02}"));
    let n = RACKS as f64;
    assert!(
        (rows[0].mean_temp_delta - EXCESS * (1.0 - 1.0 / n)).abs() < 1e-9,
        "{rows:?}"
    );
    assert!((rows[0].peak_temp - (34.0 + EXCESS + 1.0)).abs() < 1e-9);
    for r in &rows[1..] {
        assert!((r.mean_temp_delta + EXCESS / n).abs() < 1e-9, "{r:?}");
    }
    assert!(matches!(
        history::hotspot_report(&store, &baseline, 0, 10),
        Err(HistoryError::NoData { .. })
    ));
}

#[test]
fn failure_inventory_counts_scripted_faults() {
    let r = scripted(scenario::mixed_faults, 100);
    let (from, to) = (r.stamps[0], *r.stamps.last().unwrap());
    let rows = history::failure_inventory(&r.store, &r.baseline, from, to).unwrap();
    let find = |c: &str| rows.iter().find(|f| f.component == c);
    let image = find(REASON_IMAGE).expect("image drift recorded");
    assert!(
        image.hostnames.contains(&"node0004".to_string()),
        "{image:?}"
    );
    let dimm = find(&failed_reason("dimm3")).expect("dimm failure recorded");
    assert_eq!(dimm.hostnames, ["node0021"]);
    assert_eq!(dimm.failure_count, 1);
    assert!(rows
        .windows(2)
        .all(|w| w[0].failure_count >= w[1].failure_count));
}

#[test]
fn replay_window_bounds() {
    let r = scripted(scenario::water_event, 12);
    let at = r.stamps[5];
    let frames = history::replay(
        &r.store,
        &r.baseline,
        &ReplayWindow {
            at,
            before: 0,
            after: 0,
        },
    )
    .unwrap();
    assert_eq!(frames, [r.frames[5].clone()]);
    let all = history::replay(
        &r.store,
        &r.baseline,
        &ReplayWindow {
            at,
            before: u64::MAX,
            after: u64::MAX,
        },
    )
    .unwrap();
    assert_eq!(all, r.frames);
    assert!(matches!(
        history::replay(
            &r.store,
            &r.baseline,
            &ReplayWindow {
                at: 5,
                before: 1,
                after: 1
            }
        ),
        Err(HistoryError::WindowOutOfRange { .. })
    ));
    let rebuilt = history::rebuild_frame(&r.store, &r.baseline, at).unwrap();
    assert_eq!(podwatch::vizgen::serialize_frame(&rebuilt), r.frames[5]);
}
