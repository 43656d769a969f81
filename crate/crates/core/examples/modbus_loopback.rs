//! Polls a simulated pod's register map over Modbus/TCP on loopback.

use std::time::Duration;

use podwatch::modbus::{Batching, ModbusClient};
use podwatch::podsim::{SimConfig, SimHost, Simulator};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sim = Simulator::new(SimConfig::small(16, 60))?;
    let host = SimHost::start(sim, "127.0.0.1:0", "127.0.0.1:0")?;
    let ts = host.advance(15.0)?;
    println!("modbus server on {}", host.modbus_addr());

    let mut client = ModbusClient::connect(host.modbus_addr(), 1, Duration::from_secs(2))?;
    let raw = client.read_holding_registers(0, 8)?;
    println!("registers 0..8: {raw:?}");

    for batching in [
        Batching::Coalesced { max_registers: 125 },
        Batching::PerPoint,
    ] {
        let readings = client.poll_map(host.map(), batching, "ecopod", ts)?;
        println!("{batching:?}: {} readings", readings.len());
    }
    let readings = client.poll_map(host.map(), Batching::default(), "ecopod", ts)?;
    for r in readings.iter().take(10) {
        println!("  {:<28} {:>9.2} {}", r.point_id, r.value, r.unit);
    }
    Ok(())
}
