//! A simulator together with its network endpoints.

use std::sync::{Arc, Mutex, MutexGuard};

use super::{ModbusServer, SharedImage, SharedTelemetry, SimError, Simulator, TelemetryServer};
use crate::modbus::RegisterMap;

/// Owns the simulator behind a mutex (operator actions mutate it from the
/// server thread) and republishes the register image and node telemetry
/// after every step, so pollers always read a complete snapshot.
pub struct SimHost {
    sim: Arc<Mutex<Simulator>>,
    image: SharedImage,
    telemetry: SharedTelemetry,
    modbus: ModbusServer,
    telemetry_server: TelemetryServer,
    map: RegisterMap,
}

impl SimHost {
    /// Binds both endpoints (use port 0 for ephemeral ports).
    pub fn start(
        sim: Simulator,
        modbus_addr: &str,
        telemetry_addr: &str,
    ) -> Result<Self, SimError> {
        let image = SharedImage::default();
        let telemetry = SharedTelemetry::default();
        let map = sim.map().clone();
        let modbus = ModbusServer::bind(modbus_addr, image.clone())?;
        let telemetry_server = TelemetryServer::bind(telemetry_addr, telemetry.clone())?;
        let host = Self {
            sim: Arc::new(Mutex::new(sim)),
            image,
            telemetry,
            modbus,
            telemetry_server,
            map,
        };
        host.publish();
        Ok(host)
    }

    pub fn simulator(&self) -> Arc<Mutex<Simulator>> {
        self.sim.clone()
    }

    pub fn lock(&self) -> MutexGuard<'_, Simulator> {
        self.sim.lock().expect("simulator lock poisoned")
    }

    pub fn map(&self) -> &RegisterMap {
        &self.map
    }

    pub fn modbus(&self) -> &ModbusServer {
        &self.modbus
    }

    pub fn modbus_addr(&self) -> std::net::SocketAddr {
        self.modbus.local_addr()
    }

    pub fn telemetry_addr(&self) -> std::net::SocketAddr {
        self.telemetry_server.local_addr()
    }

    /// Steps the simulation and publishes the new state. Returns the
    /// simulation timestamp after the step.
    pub fn advance(&self, dt: f64) -> Result<u64, SimError> {
        let mut sim = self.lock();
        sim.step(dt)?;
        let ts = sim.timestamp();
        let records = sim.emit_telemetry();
        self.image.publish(sim.register_image());
        self.telemetry.publish(records);
        Ok(ts)
    }

    /// Republishes the current state without stepping.
    pub fn publish(&self) {
        let mut sim = self.lock();
        let records = sim.emit_telemetry();
        self.image.publish(sim.register_image());
        self.telemetry.publish(records);
    }
}
