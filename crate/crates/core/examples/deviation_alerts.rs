//! Runs the water-event scenario and prints alert transitions as they happen.

use std::sync::Arc;

use podwatch::baseline::Transition;
use podwatch::ingest::TripleStore;
use podwatch::pipeline::{Pipeline, PollSettings, SimCollector};
use podwatch::podsim::{scenario, SimHost, Simulator};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (cfg, script) = scenario::water_event();
    let mut sim = Simulator::new(cfg)?;
    sim.load_script(&script);
    let baseline = Arc::new(scenario::default_baseline(sim.config(), sim.map()));
    println!(
        "baseline: {} entries, {} hosts",
        baseline.entries().len(),
        baseline.hosts().len()
    );
    let period = sim.config().period_s;
    let host = SimHost::start(sim, "127.0.0.1:0", "127.0.0.1:0")?;
    let mut collector = SimCollector::new(host, period, PollSettings::default());
    let mut pipeline = Pipeline::new(baseline, Arc::new(TripleStore::in_memory()), period)?;

    for _ in 0..12 {
        let out = pipeline.run_cycle(&mut collector)?;
        for t in &out.transitions {
            match t {
                Transition::Raised(a) => println!(
                    "t={} RAISED  {} {:?} observed {} limit {} ({:?}, {})",
                    out.timestamp, a.point_id, a.kind, a.observed, a.limit, a.severity, a.zone
                ),
                Transition::Cleared {
                    point_id, observed, ..
                } => {
                    println!("t={} cleared {point_id} at {observed}", out.timestamp)
                }
            }
        }
        let cues: Vec<String> = out
            .frame
            .pod_cues
            .iter()
            .filter(|c| c.active)
            .map(|c| format!("{}:{:?}", c.zone, c.cue_class))
            .collect();
        println!(
            "frame {}: {} active alerts, cues {cues:?}",
            out.frame_id,
            out.frame.active_alerts.len()
        );
    }
    Ok(())
}
