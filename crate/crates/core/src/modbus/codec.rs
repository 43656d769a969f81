//! Modbus TCP framing: MBAP header followed by the PDU.
//!
//! ```text
//! | tx id (2) | protocol = 0 (2) | length (2) | unit (1) | function (1) | data ... |
//! ```
//!
//! `length` counts the unit byte plus the PDU. Every multi-byte field is
//! big-endian. Only the two read functions the poller needs are supported.

use super::ModbusError;

pub const MBAP_LEN: usize = 7;
pub const MAX_REGISTERS: u16 = 125;
pub const MAX_COILS: u16 = 2000;
/// Largest ADU the server or client will accept (MBAP + 253-byte PDU).
pub const MAX_ADU_LEN: usize = MBAP_LEN + 253;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FunctionCode {
    ReadCoils = 0x01,
    ReadHoldingRegisters = 0x03,
}

impl FunctionCode {
    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0x01 => Some(Self::ReadCoils),
            0x03 => Some(Self::ReadHoldingRegisters),
            _ => None,
        }
    }

    pub fn max_quantity(self) -> u16 {
        match self {
            Self::ReadCoils => MAX_COILS,
            Self::ReadHoldingRegisters => MAX_REGISTERS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExceptionCode {
    IllegalFunction,
    IllegalDataAddress,
    IllegalDataValue,
    ServerDeviceFailure,
    Acknowledge,
    ServerDeviceBusy,
    MemoryParityError,
    GatewayPathUnavailable,
    GatewayTargetFailedToRespond,
    Unknown(u8),
}

impl ExceptionCode {
    pub fn from_byte(b: u8) -> Self {
        match b {
            0x01 => Self::IllegalFunction,
            0x02 => Self::IllegalDataAddress,
            0x03 => Self::IllegalDataValue,
            0x04 => Self::ServerDeviceFailure,
            0x05 => Self::Acknowledge,
            0x06 => Self::ServerDeviceBusy,
            0x08 => Self::MemoryParityError,
            0x0A => Self::GatewayPathUnavailable,
            0x0B => Self::GatewayTargetFailedToRespond,
            other => Self::Unknown(other),
        }
    }

    pub fn to_byte(self) -> u8 {
        match self {
            Self::IllegalFunction => 0x01,
            Self::IllegalDataAddress => 0x02,
            Self::IllegalDataValue => 0x03,
            Self::ServerDeviceFailure => 0x04,
            Self::Acknowledge => 0x05,
            Self::ServerDeviceBusy => 0x06,
            Self::MemoryParityError => 0x08,
            Self::GatewayPathUnavailable => 0x0A,
            Self::GatewayTargetFailedToRespond => 0x0B,
            Self::Unknown(b) => b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModbusRequest {
    pub transaction_id: u16,
    pub unit_id: u8,
    pub function: FunctionCode,
    pub start_address: u16,
    pub quantity: u16,
}

impl ModbusRequest {
    pub fn read_holding_registers(transaction_id: u16, unit_id: u8, start: u16, qty: u16) -> Self {
        Self {
            transaction_id,
            unit_id,
            function: FunctionCode::ReadHoldingRegisters,
            start_address: start,
            quantity: qty,
        }
    }

    pub fn read_coils(transaction_id: u16, unit_id: u8, start: u16, qty: u16) -> Self {
        Self {
            transaction_id,
            unit_id,
            function: FunctionCode::ReadCoils,
            start_address: start,
            quantity: qty,
        }
    }

    pub fn validate(&self) -> Result<(), ModbusError> {
        let max = self.function.max_quantity();
        if self.quantity == 0 || self.quantity > max {
            return Err(ModbusError::QuantityOutOfRange {
                quantity: self.quantity,
                max,
            });
        }
        // The addressed span must stay inside the 16-bit address space.
        if u32::from(self.start_address) + u32::from(self.quantity) > 0x1_0000 {
            return Err(ModbusError::QuantityOutOfRange {
                quantity: self.quantity,
                max: (0x1_0000 - u32::from(self.start_address)) as u16,
            });
        }
        Ok(())
    }
}

/// Decoded response payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResponseData {
    Registers(Vec<u16>),
    Coils(Vec<bool>),
}

pub fn encode_request(req: &ModbusRequest) -> Result<[u8; 12], ModbusError> {
    req.validate()?;
    let mut out = [0u8; 12];
    out[0..2].copy_from_slice(&req.transaction_id.to_be_bytes());
    // protocol id stays 0
    out[4..6].copy_from_slice(&6u16.to_be_bytes());
    out[6] = req.unit_id;
    out[7] = req.function as u8;
    out[8..10].copy_from_slice(&req.start_address.to_be_bytes());
    out[10..12].copy_from_slice(&req.quantity.to_be_bytes());
    Ok(out)
}

/// Parses a request ADU on the server side.
///
/// Returns the MBAP fields even when the function is unsupported so the
/// server can answer with an exception frame.
pub fn decode_request(frame: &[u8]) -> Result<RawRequest, ModbusError> {
    let (tx, unit, pdu) = split_adu(frame)?;
    if pdu.len() != 5 {
        return Err(ModbusError::TruncatedFrame);
    }
    Ok(RawRequest {
        transaction_id: tx,
        unit_id: unit,
        function: pdu[0],
        start_address: u16::from_be_bytes([pdu[1], pdu[2]]),
        quantity: u16::from_be_bytes([pdu[3], pdu[4]]),
    })
}

/// A request as it arrived on the wire, before function-code validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawRequest {
    pub transaction_id: u16,
    pub unit_id: u8,
    pub function: u8,
    pub start_address: u16,
    pub quantity: u16,
}

fn split_adu(frame: &[u8]) -> Result<(u16, u8, &[u8]), ModbusError> {
    if frame.len() < MBAP_LEN + 1 {
        return Err(ModbusError::TruncatedFrame);
    }
    let tx = u16::from_be_bytes([frame[0], frame[1]]);
    let protocol = u16::from_be_bytes([frame[2], frame[3]]);
    if protocol != 0 {
        return Err(ModbusError::ProtocolId(protocol));
    }
    let length = usize::from(u16::from_be_bytes([frame[4], frame[5]]));
    if length < 2 || frame.len() < 6 + length {
        return Err(ModbusError::TruncatedFrame);
    }
    Ok((tx, frame[6], &frame[MBAP_LEN..6 + length]))
}

fn adu(transaction_id: u16, unit_id: u8, pdu: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(MBAP_LEN + pdu.len());
    out.extend_from_slice(&transaction_id.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&((pdu.len() + 1) as u16).to_be_bytes());
    out.push(unit_id);
    out.extend_from_slice(pdu);
    out
}

pub fn encode_registers_response(transaction_id: u16, unit_id: u8, registers: &[u16]) -> Vec<u8> {
    let mut pdu = Vec::with_capacity(2 + registers.len() * 2);
    pdu.push(FunctionCode::ReadHoldingRegisters as u8);
    pdu.push((registers.len() * 2) as u8);
    for r in registers {
        pdu.extend_from_slice(&r.to_be_bytes());
    }
    adu(transaction_id, unit_id, &pdu)
}

/// Coils are packed LSB-first, eight to a byte, the final byte zero-padded.
pub fn encode_coils_response(transaction_id: u16, unit_id: u8, coils: &[bool]) -> Vec<u8> {
    let nbytes = coils.len().div_ceil(8);
    let mut pdu = vec![0u8; 2 + nbytes];
    pdu[0] = FunctionCode::ReadCoils as u8;
    pdu[1] = nbytes as u8;
    for (i, on) in coils.iter().enumerate() {
        if *on {
            pdu[2 + i / 8] |= 1 << (i % 8);
        }
    }
    adu(transaction_id, unit_id, &pdu)
}

pub fn encode_exception(
    transaction_id: u16,
    unit_id: u8,
    function: u8,
    code: ExceptionCode,
) -> Vec<u8> {
    adu(transaction_id, unit_id, &[function | 0x80, code.to_byte()])
}

pub fn decode_response(
    frame: &[u8],
    expected: &ModbusRequest,
) -> Result<ResponseData, ModbusError> {
    let (tx, _unit, pdu) = split_adu(frame)?;
    if tx != expected.transaction_id {
        return Err(ModbusError::TransactionMismatch {
            expected: expected.transaction_id,
            got: tx,
        });
    }
    let function = pdu[0];
    if function & 0x80 != 0 {
        let code = pdu.get(1).copied().ok_or(ModbusError::TruncatedFrame)?;
        return Err(ModbusError::Exception(ExceptionCode::from_byte(code)));
    }
    if function != expected.function as u8 {
        return Err(ModbusError::UnexpectedFunction(function));
    }
    let byte_count = usize::from(*pdu.get(1).ok_or(ModbusError::TruncatedFrame)?);
    let body = pdu
        .get(2..2 + byte_count)
        .ok_or(ModbusError::TruncatedFrame)?;
    let qty = usize::from(expected.quantity);
    match expected.function {
        FunctionCode::ReadHoldingRegisters => {
            if byte_count != qty * 2 {
                return Err(ModbusError::ByteCount {
                    expected: qty * 2,
                    got: byte_count,
                });
            }
            Ok(ResponseData::Registers(
                body.chunks_exact(2)
                    .map(|p| u16::from_be_bytes([p[0], p[1]]))
                    .collect(),
            ))
        }
        FunctionCode::ReadCoils => {
            if byte_count != qty.div_ceil(8) {
                return Err(ModbusError::ByteCount {
                    expected: qty.div_ceil(8),
                    got: byte_count,
                });
            }
            Ok(ResponseData::Coils(
                (0..qty)
                    .map(|i| body[i / 8] & (1 << (i % 8)) != 0)
                    .collect(),
            ))
        }
    }
}
