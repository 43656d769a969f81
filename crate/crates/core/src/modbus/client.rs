use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::time::Duration;

use tracing::debug;

use super::codec::{self, ModbusRequest, ResponseData, MAX_ADU_LEN, MAX_REGISTERS, MBAP_LEN};
use super::map::RegisterMap;
use super::ModbusError;
use crate::records::SensorReading;

/// How a register map is turned into read requests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Batching {
    /// Consecutive addresses are read together, up to `max_registers` each.
    Coalesced { max_registers: u16 },
    /// One request per distinct address.
    PerPoint,
}

impl Default for Batching {
    fn default() -> Self {
        Batching::Coalesced {
            max_registers: MAX_REGISTERS,
        }
    }
}

/// Reads one complete ADU: the MBAP header, then as many bytes as it announces.
pub fn read_adu<R: Read>(stream: &mut R) -> std::io::Result<Vec<u8>> {
    let mut buf = vec![0u8; MBAP_LEN];
    stream.read_exact(&mut buf)?;
    let length = usize::from(u16::from_be_bytes([buf[4], buf[5]]));
    if length < 1 || 6 + length > MAX_ADU_LEN {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("bad MBAP length {length}"),
        ));
    }
    buf.resize(6 + length, 0);
    stream.read_exact(&mut buf[MBAP_LEN..])?;
    Ok(buf)
}

/// Blocking Modbus TCP client for one endpoint.
pub struct ModbusClient {
    stream: TcpStream,
    unit_id: u8,
    next_tx: u16,
}

impl ModbusClient {
    pub fn connect<A: ToSocketAddrs>(
        addr: A,
        unit_id: u8,
        timeout: Duration,
    ) -> Result<Self, ModbusError> {
        let addrs: Vec<SocketAddr> = addr
            .to_socket_addrs()
            .map_err(|e| ModbusError::ConnectionFailed(e.to_string()))?
            .collect();
        let mut last = String::from("no address");
        for a in addrs {
            match TcpStream::connect_timeout(&a, timeout) {
                Ok(stream) => {
                    stream.set_nodelay(true)?;
                    stream.set_read_timeout(Some(timeout))?;
                    stream.set_write_timeout(Some(timeout))?;
                    return Ok(Self {
                        stream,
                        unit_id,
                        next_tx: 1,
                    });
                }
                Err(e) => last = format!("{a}: {e}"),
            }
        }
        Err(ModbusError::ConnectionFailed(last))
    }

    fn transact(&mut self, mut req: ModbusRequest) -> Result<ResponseData, ModbusError> {
        req.transaction_id = self.next_tx;
        self.next_tx = self.next_tx.wrapping_add(1);
        req.unit_id = self.unit_id;
        let frame = codec::encode_request(&req)?;
        self.stream.write_all(&frame)?;
        let resp = read_adu(&mut self.stream)?;
        codec::decode_response(&resp, &req)
    }

    pub fn read_holding_registers(
        &mut self,
        start: u16,
        qty: u16,
    ) -> Result<Vec<u16>, ModbusError> {
        match self.transact(ModbusRequest::read_holding_registers(0, 0, start, qty))? {
            ResponseData::Registers(r) => Ok(r),
            ResponseData::Coils(_) => Err(ModbusError::UnexpectedFunction(0x01)),
        }
    }

    pub fn read_coils(&mut self, start: u16, qty: u16) -> Result<Vec<bool>, ModbusError> {
        match self.transact(ModbusRequest::read_coils(0, 0, start, qty))? {
            ResponseData::Coils(c) => Ok(c),
            ResponseData::Registers(_) => Err(ModbusError::UnexpectedFunction(0x03)),
        }
    }

    /// Polls every point in `map`, stamping all readings with `timestamp`.
    ///
    /// A batch answered with an exception is retried address by address so
    /// the failure can be pinned to exact points. If any point could not be
    /// read the surviving readings come back inside
    /// [`ModbusError::PartialPoll`].
    pub fn poll_map(
        &mut self,
        map: &RegisterMap,
        batching: Batching,
        source: &str,
        timestamp: u64,
    ) -> Result<Vec<SensorReading>, ModbusError> {
        let batches = match batching {
            Batching::Coalesced { max_registers } => {
                map.plan_batches(max_registers.min(MAX_REGISTERS))
            }
            Batching::PerPoint => map.plan_batches(1),
        };
        let mut raw = vec![None::<u16>; 0x1_0000];
        let mut failed_addrs = Vec::new();
        for (start, len) in batches {
            match self.read_holding_registers(start, len) {
                Ok(values) => {
                    for (i, v) in values.into_iter().enumerate() {
                        raw[usize::from(start) + i] = Some(v);
                    }
                }
                Err(ModbusError::Exception(code)) => {
                    debug!(start, len, ?code, "batch failed, isolating addresses");
                    for addr in start..start + len {
                        match self.read_holding_registers(addr, 1) {
                            Ok(v) => raw[usize::from(addr)] = Some(v[0]),
                            Err(ModbusError::Exception(_)) => failed_addrs.push(addr),
                            Err(e) => return Err(e),
                        }
                    }
                }
                Err(e) => return Err(e),
            }
        }
        let mut readings = Vec::with_capacity(map.len());
        let mut failed = Vec::new();
        for p in map.points() {
            match raw[usize::from(p.address)] {
                Some(v) => readings.push(SensorReading {
                    source: source.to_owned(),
                    point_id: p.point_id.clone(),
                    timestamp,
                    value: p.decode(v),
                    unit: p.unit.clone(),
                }),
                None => failed.push(p.point_id.clone()),
            }
        }
        if failed.is_empty() {
            Ok(readings)
        } else {
            Err(ModbusError::PartialPoll { failed, readings })
        }
    }
}
