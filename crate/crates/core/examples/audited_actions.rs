//! Operators act on nodes through the state server; every request, allowed
//! or not, lands in the audit log.

use std::sync::Arc;
use std::time::Duration;

use podwatch::ingest::TripleStore;
use podwatch::pipeline::{Pipeline, PollSettings, SimCollector};
use podwatch::podsim::{scenario, SimHost, Simulator};
use podwatch::server::protocol::{ClientMessage, ServerMessage};
use podwatch::server::{Client, ServerConfig, SimAdapter, StateServer, Tier, TokenTable, Verb};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (cfg, script) = scenario::mixed_faults();
    let mut sim = Simulator::new(cfg)?;
    sim.load_script(&script);
    let baseline = Arc::new(scenario::default_baseline(sim.config(), sim.map()));
    let period = sim.config().period_s;
    let host = SimHost::start(sim, "127.0.0.1:0", "127.0.0.1:0")?;
    let adapter = Box::new(SimAdapter::new(host.simulator()));
    let mut collector = SimCollector::new(host, period, PollSettings::default());
    let mut tokens = TokenTable::new();
    tokens.insert("tok-v", "victor", Tier::Viewer);
    tokens.insert("tok-o", "olga", Tier::Operator);
    tokens.insert("tok-a", "ada", Tier::Admin);
    let server = StateServer::start(
        &ServerConfig::default(),
        tokens,
        baseline.clone(),
        adapter,
        None,
    )?;
    let mut pipeline = Pipeline::new(baseline, Arc::new(TripleStore::in_memory()), period)?
        .with_publisher(server.authority());
    pipeline.run_cycle(&mut collector)?;

    let plan = [
        ("olga", "tok-o", Verb::RemoveFromScheduler, "node0003", None),
        ("olga", "tok-o", Verb::Reimage, "node0003", None),
        ("ada", "tok-a", Verb::Reimage, "node0003", None),
        ("victor", "tok-v", Verb::Reboot, "node0007", None),
        (
            "olga",
            "tok-o",
            Verb::Comment,
            "node0003",
            Some("reimaged after drift"),
        ),
        ("olga", "tok-o", Verb::ReturnToService, "node0003", None),
    ];
    for (i, (who, token, verb, target, comment)) in plan.into_iter().enumerate() {
        let (mut client, _, _) = Client::login(server.local_addr(), who, token)?;
        client.set_timeout(Some(Duration::from_secs(10)))?;
        let request_id = i as u64 + 1;
        client.send(&ClientMessage::action(request_id, verb, target, comment))?;
        while let Some(msg) = client.recv()? {
            if let ServerMessage::ActionResult { outcome, .. } = msg {
                println!("{who:<6} {:<20} {target}: {outcome:?}", verb.as_str());
                break;
            }
        }
        pipeline.run_cycle(&mut collector)?;
    }

    println!("\naudit log:");
    for e in server.authority().audit_entries()? {
        println!("{}", serde_json::to_string(&e)?);
    }
    Ok(())
}
