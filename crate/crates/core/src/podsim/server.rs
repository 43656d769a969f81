//! Modbus TCP endpoint serving the simulator's register image.

use std::io::Write;
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::ops::RangeInclusive;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};
use std::thread::{self, JoinHandle};

use tracing::{debug, warn};

use super::SimError;
use crate::modbus::{self, ExceptionCode, FunctionCode, RegisterMap};

/// Immutable snapshot of every holding register. Unmapped addresses are
/// `None` and answer with `IllegalDataAddress`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegisterImage {
    registers: Vec<Option<u16>>,
}

impl Default for RegisterImage {
    fn default() -> Self {
        Self {
            registers: vec![None; 0x1_0000],
        }
    }
}

impl RegisterImage {
    /// Encodes `values` (one per map point, in map order).
    pub fn encode(map: &RegisterMap, values: &[f64]) -> Self {
        let mut image = Self::default();
        for (p, v) in map.points().iter().zip(values) {
            let slot = &mut image.registers[usize::from(p.address)];
            *slot = Some(slot.unwrap_or(0) | p.encode(*v));
        }
        image
    }

    pub fn from_raw<I: IntoIterator<Item = (u16, u16)>>(values: I) -> Self {
        let mut image = Self::default();
        for (a, v) in values {
            image.registers[usize::from(a)] = Some(v);
        }
        image
    }

    pub fn get(&self, address: u16) -> Option<u16> {
        self.registers[usize::from(address)]
    }

    fn read_registers(&self, start: u16, qty: u16) -> Option<Vec<u16>> {
        (0..qty).map(|i| self.get(start.checked_add(i)?)).collect()
    }

    /// Coil `n` is bit `n % 16` of register `n / 16`.
    fn read_coils(&self, start: u16, qty: u16) -> Option<Vec<bool>> {
        (0..u32::from(qty))
            .map(|i| {
                let n = u32::from(start) + i;
                let reg = self.registers.get((n / 16) as usize).copied().flatten()?;
                Some(reg & (1 << (n % 16)) != 0)
            })
            .collect()
    }
}

/// Published snapshot shared between the simulation owner and the server.
#[derive(Clone, Default)]
pub struct SharedImage(Arc<RwLock<Arc<RegisterImage>>>);

impl SharedImage {
    pub fn new(image: RegisterImage) -> Self {
        Self(Arc::new(RwLock::new(Arc::new(image))))
    }

    pub fn publish(&self, image: RegisterImage) {
        *self.0.write().expect("image lock poisoned") = Arc::new(image);
    }

    pub fn snapshot(&self) -> Arc<RegisterImage> {
        self.0.read().expect("image lock poisoned").clone()
    }
}

#[derive(Default)]
struct Faults {
    unreachable: RwLock<Vec<RangeInclusive<u16>>>,
}

/// Answers a raw request ADU against an image.
pub fn answer(
    frame: &[u8],
    image: &RegisterImage,
    unreachable: &[RangeInclusive<u16>],
) -> Option<Vec<u8>> {
    let req = modbus::decode_request(frame).ok()?;
    let exception =
        |code| modbus::encode_exception(req.transaction_id, req.unit_id, req.function, code);
    let Some(function) = FunctionCode::from_byte(req.function) else {
        return Some(exception(ExceptionCode::IllegalFunction));
    };
    if req.quantity == 0 || req.quantity > function.max_quantity() {
        return Some(exception(ExceptionCode::IllegalDataValue));
    }
    let touches_fault = |lo: u16, hi: u16| {
        unreachable
            .iter()
            .any(|r| lo <= *r.end() && *r.start() <= hi)
    };
    Some(match function {
        FunctionCode::ReadHoldingRegisters => {
            let end = u32::from(req.start_address) + u32::from(req.quantity) - 1;
            if end > 0xFFFF {
                return Some(exception(ExceptionCode::IllegalDataAddress));
            }
            if touches_fault(req.start_address, end as u16) {
                return Some(exception(ExceptionCode::GatewayTargetFailedToRespond));
            }
            match image.read_registers(req.start_address, req.quantity) {
                Some(regs) => {
                    modbus::encode_registers_response(req.transaction_id, req.unit_id, &regs)
                }
                None => exception(ExceptionCode::IllegalDataAddress),
            }
        }
        FunctionCode::ReadCoils => match image.read_coils(req.start_address, req.quantity) {
            Some(coils) => modbus::encode_coils_response(req.transaction_id, req.unit_id, &coils),
            None => exception(ExceptionCode::IllegalDataAddress),
        },
    })
}

/// Running Modbus endpoint. Dropping it stops the listener.
pub struct ModbusServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    faults: Arc<Faults>,
    accept: Option<JoinHandle<()>>,
}

impl ModbusServer {
    pub fn bind(addr: &str, image: SharedImage) -> Result<Self, SimError> {
        let listener =
            TcpListener::bind(addr).map_err(|e| SimError::BindFailed(format!("{addr}: {e}")))?;
        let local = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let faults = Arc::new(Faults::default());
        let accept = {
            let stop = stop.clone();
            let faults = faults.clone();
            thread::Builder::new()
                .name("modbus-accept".into())
                .spawn(move || {
                    for conn in listener.incoming() {
                        if stop.load(Ordering::SeqCst) {
                            break;
                        }
                        match conn {
                            Ok(stream) => {
                                let image = image.clone();
                                let faults = faults.clone();
                                let stop = stop.clone();
                                thread::spawn(move || serve_conn(stream, image, faults, stop));
                            }
                            Err(e) => warn!("modbus accept failed: {e}"),
                        }
                    }
                })?
        };
        Ok(Self {
            addr: local,
            stop,
            faults,
            accept: Some(accept),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Makes every request touching one of `ranges` fail with a gateway
    /// exception, as if the device behind those registers were offline.
    pub fn set_unreachable(&self, ranges: Vec<RangeInclusive<u16>>) {
        *self
            .faults
            .unreachable
            .write()
            .expect("fault lock poisoned") = ranges;
    }

    pub fn shutdown(&mut self) {
        if let Some(handle) = self.accept.take() {
            self.stop.store(true, Ordering::SeqCst);
            let _ = TcpStream::connect(self.addr);
            let _ = handle.join();
        }
    }
}

impl Drop for ModbusServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn serve_conn(
    mut stream: TcpStream,
    image: SharedImage,
    faults: Arc<Faults>,
    stop: Arc<AtomicBool>,
) {
    let _ = stream.set_nodelay(true);
    loop {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        let frame = match modbus::read_adu(&mut stream) {
            Ok(f) => f,
            Err(e) => {
                debug!("modbus connection closed: {e}");
                break;
            }
        };
        let snapshot = image.snapshot();
        let unreachable = faults
            .unreachable
            .read()
            .expect("fault lock poisoned")
            .clone();
        match answer(&frame, &snapshot, &unreachable) {
            Some(resp) => {
                if stream.write_all(&resp).is_err() {
                    break;
                }
            }
            None => break,
        }
    }
    let _ = stream.shutdown(Shutdown::Both);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modbus::{ModbusRequest, RegisterPoint};

    #[test]
    fn encodes_bits_into_shared_register() {
        let map = RegisterMap::new(vec![
            RegisterPoint::bit("a", 0, 0, "z"),
            RegisterPoint::bit("b", 0, 3, "z"),
            RegisterPoint::scaled("t", 1, 0.1, "°C", "z"),
        ])
        .unwrap();
        let image = RegisterImage::encode(&map, &[1.0, 1.0, 23.1]);
        assert_eq!(image.get(0), Some(0b1001));
        assert_eq!(image.get(1), Some(231));
        assert_eq!(image.get(2), None);
    }

    #[test]
    fn unmapped_address_is_exception_02() {
        let image = RegisterImage::from_raw([(0, 5), (1, 6)]);
        let req = ModbusRequest::read_holding_registers(4, 1, 1, 2);
        let resp = answer(&modbus::encode_request(&req).unwrap(), &image, &[]).unwrap();
        assert_eq!(resp, [0x00, 0x04, 0x00, 0x00, 0x00, 0x03, 0x01, 0x83, 0x02]);
    }

    #[test]
    fn coils_view_status_bits() {
        let image = RegisterImage::from_raw([(0, 0b1010)]);
        let req = ModbusRequest::read_coils(1, 1, 0, 4);
        let resp = answer(&modbus::encode_request(&req).unwrap(), &image, &[]).unwrap();
        assert_eq!(
            modbus::decode_response(&resp, &req).unwrap(),
            modbus::ResponseData::Coils(vec![false, true, false, true])
        );
    }

    #[test]
    fn unsupported_function_is_exception_01() {
        let image = RegisterImage::default();
        // write single register (0x06)
        let frame = [0, 1, 0, 0, 0, 6, 1, 0x06, 0, 0, 0, 1];
        let resp = answer(&frame, &image, &[]).unwrap();
        assert_eq!(&resp[7..], [0x86, 0x01]);
    }
}
