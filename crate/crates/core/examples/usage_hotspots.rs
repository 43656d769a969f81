//! A simulated week of jobs, then the usage, hotspot and failure reports.

use std::sync::Arc;

use podwatch::history::{self, Bucketing};
use podwatch::ingest::TripleStore;
use podwatch::pipeline::{Pipeline, PollSettings, SimCollector};
use podwatch::podsim::{scenario, SimHost, Simulator};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = scenario::friday_week();
    let cycles = 7 * 86_400 / cfg.period_s;
    let sim = Simulator::new(cfg)?;
    let baseline = Arc::new(scenario::default_baseline(sim.config(), sim.map()));
    let period = sim.config().period_s;
    let host = SimHost::start(sim, "127.0.0.1:0", "127.0.0.1:0")?;
    let mut collector = SimCollector::new(host, period, PollSettings::default());
    let store = Arc::new(TripleStore::in_memory());
    let mut pipeline = Pipeline::new(baseline.clone(), store.clone(), period)?;
    let mut span = (u64::MAX, 0);
    for _ in 0..cycles {
        let ts = pipeline.run_cycle(&mut collector)?.timestamp;
        span = (span.0.min(ts), span.1.max(ts));
    }
    let (from, to) = span;
    let out = std::io::stdout();

    for bucketing in [Bucketing::DayOfWeek, Bucketing::User] {
        println!("usage by {bucketing:?}:");
        history::usage_report(&store, &baseline, from, to, bucketing)?.write_tsv(out.lock())?;
        println!();
    }
    println!("hotspots:");
    let rows = history::hotspot_report(&store, &baseline, from, to)?;
    history::write_hotspots_tsv(&rows[..rows.len().min(5)], out.lock())?;
    println!("\nfailures:");
    history::write_failures_tsv(
        &history::failure_inventory(&store, &baseline, from, to)?,
        out.lock(),
    )?;
    Ok(())
}
