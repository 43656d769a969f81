//! A leaking job turns its nodes red; pulling by user shows the job's hosts
//! and the other jobs sharing them.

use std::sync::Arc;
use std::time::Duration;

use podwatch::baseline::Color;
use podwatch::ingest::TripleStore;
use podwatch::pipeline::{Pipeline, PollSettings, SimCollector};
use podwatch::podsim::{scenario, SimHost, Simulator};
use podwatch::server::protocol::{ClientMessage, Selector, ServerMessage};
use podwatch::server::{Client, ServerConfig, SimAdapter, StateServer, Tier, TokenTable};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (cfg, script) = scenario::memory_leak();
    let mut sim = Simulator::new(cfg)?;
    sim.load_script(&script);
    let baseline = Arc::new(scenario::default_baseline(sim.config(), sim.map()));
    let period = sim.config().period_s;
    let host = SimHost::start(sim, "127.0.0.1:0", "127.0.0.1:0")?;
    let adapter = Box::new(SimAdapter::new(host.simulator()));
    let mut collector = SimCollector::new(host, period, PollSettings::default());
    let mut tokens = TokenTable::new();
    tokens.insert("demo-token", "victor", Tier::Viewer);
    let server = StateServer::start(
        &ServerConfig::default(),
        tokens,
        baseline.clone(),
        adapter,
        None,
    )?;
    let mut pipeline = Pipeline::new(baseline, Arc::new(TripleStore::in_memory()), period)?
        .with_publisher(server.authority());

    for _ in 0..40 {
        let out = pipeline.run_cycle(&mut collector)?;
        if out.frame_id % 5 == 0 {
            println!(
                "frame {:>3}: {} red nodes",
                out.frame_id, out.frame.stats.nodes_red
            );
        }
    }

    let (mut client, session, _) = Client::login(server.local_addr(), "victor", "demo-token")?;
    client.set_timeout(Some(Duration::from_secs(10)))?;
    println!("session {session}");
    client.send(&ClientMessage::pull(
        1,
        Selector::User(scenario::LEAK_USER.into()),
    ))?;
    client.send(&ClientMessage::pull(2, Selector::Status(Color::Red)))?;
    let mut answered = 0;
    while answered < 2 {
        let Some(msg) = client.recv()? else { break };
        if let ServerMessage::PullResult {
            request_id,
            entities,
            co_scheduled,
            ..
        } = msg
        {
            answered += 1;
            println!(
                "pull {request_id}: {} hosts, first {:?}",
                entities.len(),
                entities.first()
            );
            for job in co_scheduled {
                println!(
                    "  co-scheduled {} ({}) on {} hosts",
                    job.job_id, job.user, job.hosts
                );
            }
        }
    }
    Ok(())
}
