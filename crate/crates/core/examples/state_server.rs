//! Deploys a pipeline with its state server from a config string, then
//! watches the frame stream as a viewer.

use std::io::Write;
use std::thread;
use std::time::Duration;

use podwatch::pipeline::{deploy, PipelineConfig};
use podwatch::server::protocol::{ClientMessage, Selector, ServerMessage};
use podwatch::server::Client;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("podwatch-serve-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let mut tokens = std::fs::File::create(dir.join("tokens.tsv"))?;
    writeln!(tokens, "viewer-token\tvictor\tviewer")?;
    let config = PipelineConfig::parse(
        "scenario = water_event\nserver_endpoint = 127.0.0.1:0\ntokens = tokens.tsv\ncycles = 8\n",
        &dir,
        &[],
    )?;
    let mut deployment = deploy(&config)?;
    let addr = deployment
        .server
        .as_ref()
        .ok_or("no server configured")?
        .local_addr();
    println!("state server on {addr}");

    let (mut client, session, tier) = Client::login(addr, "victor", "viewer-token")?;
    client.set_timeout(Some(Duration::from_secs(5)))?;
    println!("session {session} as {tier:?}");
    // A pull round trip guarantees the session is registered before frames flow.
    client.send(&ClientMessage::pull(1, Selector::LoadAbove(0.9)))?;
    while !matches!(
        client.recv()?,
        Some(ServerMessage::PullResult { .. }) | None
    ) {}
    let watcher = thread::spawn(move || {
        let mut frames = 0;
        while frames < 8 {
            match client.recv() {
                Ok(Some(ServerMessage::Frame { frame, .. })) => {
                    frames += 1;
                    println!(
                        "frame {} t={} nodes {} red {} alerts {}",
                        frame.frame_id,
                        frame.timestamp,
                        frame.stats.nodes_total,
                        frame.stats.nodes_red,
                        frame.active_alerts.len()
                    );
                }
                Ok(Some(ServerMessage::AlertEvent {
                    state, point_id, ..
                })) => println!("  alert {state}: {point_id}"),
                Ok(Some(_)) => {}
                Ok(None) | Err(_) => break,
            }
        }
    });
    deployment.run(&config, |_| {})?;
    watcher.join().map_err(|_| "watcher panicked")?;
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
