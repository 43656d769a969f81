//! Modbus TCP client codec used to poll the pod's registers.

mod client;
pub mod codec;
mod map;

use thiserror::Error;

pub use client::{read_adu, Batching, ModbusClient};
pub use codec::{
    decode_request, decode_response, encode_coils_response, encode_exception,
    encode_registers_response, encode_request, ExceptionCode, FunctionCode, ModbusRequest,
    RawRequest, ResponseData,
};
pub use map::{decode_point, Encoding, RegisterMap, RegisterPoint};

use crate::records::SensorReading;

/// Default port; 502 is privileged.
pub const DEFAULT_PORT: u16 = 1502;

#[derive(Debug, Error)]
pub enum ModbusError {
    #[error("quantity {quantity} outside 1..={max}")]
    QuantityOutOfRange { quantity: u16, max: u16 },
    #[error("transaction id mismatch: sent {expected}, got {got}")]
    TransactionMismatch { expected: u16, got: u16 },
    #[error("exception response: {0:?}")]
    Exception(ExceptionCode),
    #[error("truncated frame")]
    TruncatedFrame,
    #[error("non-zero protocol id {0}")]
    ProtocolId(u16),
    #[error("unexpected function code {0:#04x}")]
    UnexpectedFunction(u8),
    #[error("byte count {got}, expected {expected}")]
    ByteCount { expected: usize, got: usize },
    #[error("connection failed: {0}")]
    ConnectionFailed(String),
    #[error("partial poll: {} point(s) unreadable", failed.len())]
    PartialPoll {
        failed: Vec<String>,
        readings: Vec<SensorReading>,
    },
    #[error("invalid register map: {0}")]
    InvalidMap(String),
    #[error("register map line {line}: {reason}")]
    MapParse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
