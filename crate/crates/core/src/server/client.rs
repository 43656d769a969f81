//! Blocking protocol client used by the examples, tests and benchmarks.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use super::protocol::{ClientMessage, ServerMessage};
use super::{ServerError, Tier};

pub struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Client {
    pub fn connect<A: ToSocketAddrs>(addr: A) -> Result<Self, ServerError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Self {
            reader: BufReader::new(stream.try_clone()?),
            writer: stream,
        })
    }

    pub fn set_timeout(&self, timeout: Option<Duration>) -> Result<(), ServerError> {
        self.writer.set_read_timeout(timeout)?;
        Ok(())
    }

    /// Connects and authenticates; returns the client, its session id and tier.
    pub fn login<A: ToSocketAddrs>(
        addr: A,
        principal: &str,
        credential: &str,
    ) -> Result<(Self, u64, Tier), ServerError> {
        let mut c = Self::connect(addr)?;
        c.send(&ClientMessage::hello(principal, credential))?;
        match c.recv()? {
            Some(ServerMessage::AuthResult {
                ok: true,
                tier: Some(tier),
                session_id: Some(id),
                ..
            }) => Ok((c, id, tier)),
            Some(ServerMessage::AuthResult { reason, .. }) => Err(ServerError::AuthFailed(
                reason.unwrap_or_else(|| "rejected".into()),
            )),
            Some(other) => Err(ServerError::Protocol(format!(
                "expected AuthResult, got {other:?}"
            ))),
            None => Err(ServerError::Closed),
        }
    }

    pub fn send(&mut self, msg: &ClientMessage) -> Result<(), ServerError> {
        let mut line = serde_json::to_vec(msg).expect("client messages serialize");
        line.push(b'\n');
        self.send_raw(&line)
    }

    pub fn send_raw(&mut self, line: &[u8]) -> Result<(), ServerError> {
        self.writer.write_all(line)?;
        Ok(())
    }

    /// Next raw line including its newline; `None` once the server closed.
    pub fn recv_line(&mut self) -> Result<Option<Vec<u8>>, ServerError> {
        let mut line = Vec::new();
        match self.reader.read_until(b'\n', &mut line)? {
            0 => Ok(None),
            _ => Ok(Some(line)),
        }
    }

    pub fn recv(&mut self) -> Result<Option<ServerMessage>, ServerError> {
        match self.recv_line()? {
            None => Ok(None),
            Some(line) => ServerMessage::decode(&line)
                .map(Some)
                .map_err(|e| ServerError::Protocol(e.to_string())),
        }
    }
}
