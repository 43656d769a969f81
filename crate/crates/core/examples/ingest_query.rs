//! Ingests a few simulated cycles and queries the triple tables.

use std::sync::Arc;

use podwatch::assoc::KeyRange;
use podwatch::ingest::{Table, TripleStore};
use podwatch::pipeline::{Pipeline, PollSettings, SimCollector};
use podwatch::podsim::{scenario, SimConfig, SimHost, Simulator};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sim = Simulator::new(SimConfig::small(16, 40))?;
    let baseline = Arc::new(scenario::default_baseline(sim.config(), sim.map()));
    let period = sim.config().period_s;
    let host = SimHost::start(sim, "127.0.0.1:0", "127.0.0.1:0")?;
    let mut collector = SimCollector::new(host, period, PollSettings::default());
    let store = Arc::new(TripleStore::in_memory());
    let mut pipeline = Pipeline::new(baseline, store.clone(), period)?;
    for _ in 0..5 {
        let out = pipeline.run_cycle(&mut collector)?;
        println!(
            "cycle {} at {}: {} triples",
            out.frame_id, out.timestamp, out.triples
        );
    }

    let cycles = store.cycle_timestamps(0, u64::MAX)?;
    println!("stored cycles: {cycles:?}");

    // Every record whose unit is kW, through the transposed edge table.
    let kw = store.query_range(Table::TedgeT, &KeyRange::single("unit|kW"), &KeyRange::All)?;
    println!(
        "{} record keys carry unit|kW",
        kw.row("unit|kW").map_or(0, |r| r.len())
    );

    let latest = store.latest_frame("ecopod")?;
    println!("latest ecopod frame has {} values", latest.nnz());

    let decoded = store.decode_at(*cycles.last().unwrap())?;
    println!(
        "decoded last cycle: {} readings, {} node records",
        decoded.readings.len(),
        decoded.nodes.len()
    );
    Ok(())
}
