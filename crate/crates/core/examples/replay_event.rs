//! Records the mixed-faults scenario to an on-disk store, reopens it and
//! replays the frames around the water leak.

use std::sync::Arc;

use podwatch::history::{self, ReplayWindow};
use podwatch::ingest::TripleStore;
use podwatch::pipeline::{Pipeline, PollSettings, SimCollector};
use podwatch::podsim::{scenario, SimHost, Simulator};
use podwatch::vizgen::deserialize_frame;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("podwatch-replay-{}", std::process::id()));
    let (cfg, script) = scenario::mixed_faults();
    let mut sim = Simulator::new(cfg)?;
    sim.load_script(&script);
    let baseline = Arc::new(scenario::default_baseline(sim.config(), sim.map()));
    let period = sim.config().period_s;
    let mut leak_at = None;
    {
        let store = Arc::new(TripleStore::open(&dir)?);
        let host = SimHost::start(sim, "127.0.0.1:0", "127.0.0.1:0")?;
        let mut collector = SimCollector::new(host, period, PollSettings::default());
        let mut pipeline = Pipeline::new(baseline.clone(), store.clone(), period)?;
        for _ in 0..30 {
            let out = pipeline.run_cycle(&mut collector)?;
            if leak_at.is_none()
                && out
                    .frame
                    .active_alerts
                    .iter()
                    .any(|a| a.point_id.contains("water"))
            {
                leak_at = Some(out.timestamp);
            }
        }
        store.flush()?;
    }
    let at = leak_at.ok_or("no water alert in 30 cycles")?;
    println!("water alert first seen at {at}; store in {}", dir.display());

    let store = TripleStore::open(&dir)?;
    let window = ReplayWindow {
        at,
        before: 2 * period,
        after: 2 * period,
    };
    for bytes in history::replay(&store, &baseline, &window)? {
        let f = deserialize_frame(&bytes)?;
        let alerts: Vec<&str> = f
            .active_alerts
            .iter()
            .map(|a| a.point_id.as_str())
            .collect();
        println!("frame {} t={} alerts {alerts:?}", f.frame_id, f.timestamp);
    }
    drop(store);
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
