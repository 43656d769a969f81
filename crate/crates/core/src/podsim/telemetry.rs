//! Line-oriented telemetry endpoint standing in for the per-node collectors.
//!
//! A client sends `POLL\n` and receives one line holding a JSON array of
//! node records, taken from the most recently published snapshot.

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use tracing::warn;

use super::SimError;
use crate::records::NodeRecord;

#[derive(Clone, Default)]
pub struct SharedTelemetry(Arc<RwLock<Arc<Vec<NodeRecord>>>>);

impl SharedTelemetry {
    pub fn publish(&self, records: Vec<NodeRecord>) {
        *self.0.write().expect("telemetry lock poisoned") = Arc::new(records);
    }

    pub fn snapshot(&self) -> Arc<Vec<NodeRecord>> {
        self.0.read().expect("telemetry lock poisoned").clone()
    }
}

pub struct TelemetryServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl TelemetryServer {
    pub fn bind(addr: &str, shared: SharedTelemetry) -> Result<Self, SimError> {
        let listener =
            TcpListener::bind(addr).map_err(|e| SimError::BindFailed(format!("{addr}: {e}")))?;
        let local = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let accept = {
            let stop = stop.clone();
            thread::Builder::new()
                .name("telemetry-accept".into())
                .spawn(move || {
                    for conn in listener.incoming() {
                        if stop.load(Ordering::SeqCst) {
                            break;
                        }
                        match conn {
                            Ok(stream) => {
                                let shared = shared.clone();
                                thread::spawn(move || serve_conn(stream, shared));
                            }
                            Err(e) => warn!("telemetry accept failed: {e}"),
                        }
                    }
                })?
        };
        Ok(Self {
            addr: local,
            stop,
            accept: Some(accept),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(&mut self) {
        if let Some(h) = self.accept.take() {
            self.stop.store(true, Ordering::SeqCst);
            let _ = TcpStream::connect(self.addr);
            let _ = h.join();
        }
    }
}

impl Drop for TelemetryServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn serve_conn(stream: TcpStream, shared: SharedTelemetry) {
    let Ok(mut writer) = stream.try_clone() else {
        return;
    };
    let reader = BufReader::new(stream);
    for line in reader.lines() {
        let Ok(line) = line else { break };
        if line.trim() != "POLL" {
            let _ = writeln!(writer, "{{\"error\":\"unknown command\"}}");
            continue;
        }
        let snapshot = shared.snapshot();
        let Ok(mut body) = serde_json::to_vec(snapshot.as_slice()) else {
            break;
        };
        body.push(b'\n');
        if writer.write_all(&body).is_err() {
            break;
        }
    }
}

/// Client side of the telemetry endpoint.
pub struct TelemetryClient {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl TelemetryClient {
    pub fn connect<A: ToSocketAddrs>(addr: A, timeout: Duration) -> Result<Self, SimError> {
        let addr = addr
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| SimError::InvalidConfig("no telemetry address".into()))?;
        let stream = TcpStream::connect_timeout(&addr, timeout)?;
        stream.set_read_timeout(Some(timeout))?;
        let writer = stream.try_clone()?;
        Ok(Self {
            reader: BufReader::new(stream),
            writer,
        })
    }

    pub fn poll(&mut self) -> Result<Vec<NodeRecord>, SimError> {
        self.writer.write_all(b"POLL\n")?;
        let mut line = String::new();
        if self.reader.read_line(&mut line)? == 0 {
            return Err(SimError::Io(std::io::ErrorKind::UnexpectedEof.into()));
        }
        serde_json::from_str(&line)
            .map_err(|e| SimError::InvalidConfig(format!("bad telemetry payload: {e}")))
    }
}
