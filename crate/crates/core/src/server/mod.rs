//! Authoritative state server.
//!
//! One owner thread holds the latest frame, the node records behind it, the
//! audit log and the node-control adapter. Client connections speak
//! newline-delimited JSON over TCP (see [`protocol`]); each has a reader
//! thread that talks to the owner by message passing and a writer thread
//! draining a bounded queue. A client whose queue fills is disconnected.

mod audit;
mod authority;
pub mod client;
mod control;
mod net;
pub mod protocol;

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use audit::{AuditEntry, AuditLog, NodeSnapshot};
pub use authority::{pull_query, AuthorityHandle, DeliveryReport, PullAnswer};
pub use client::Client;
pub use control::{ControlError, NodeControl, ShellAdapter, SimAdapter};
pub use net::{ServerConfig, StateServer};
pub use protocol::{
    ClientMessage, CoScheduledJob, Outcome, Selector, ServerMessage, PROTOCOL_VERSION,
};

fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("bind failed: {0}")]
    Bind(String),
    #[error("authentication failed: {0}")]
    AuthFailed(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("token file line {line}: {reason}")]
    TokenFile { line: usize, reason: String },
    #[error("server has shut down")]
    Closed,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tier {
    Viewer,
    Operator,
    Admin,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Viewer, Tier::Operator, Tier::Admin];

    /// Viewers only observe and pull; operators may do everything but
    /// reimage; admins may do everything.
    pub fn permits(self, verb: Verb) -> bool {
        match self {
            Tier::Viewer => false,
            Tier::Operator => verb != Verb::Reimage,
            Tier::Admin => true,
        }
    }
}

impl FromStr for Tier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "viewer" => Ok(Tier::Viewer),
            "operator" => Ok(Tier::Operator),
            "admin" => Ok(Tier::Admin),
            _ => Err(format!("unknown tier {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Verb {
    Reboot,
    Reimage,
    RemoveFromScheduler,
    ReturnToService,
    Comment,
}

impl Verb {
    pub const ALL: [Verb; 5] = [
        Verb::Reboot,
        Verb::Reimage,
        Verb::RemoveFromScheduler,
        Verb::ReturnToService,
        Verb::Comment,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Verb::Reboot => "Reboot",
            Verb::Reimage => "Reimage",
            Verb::RemoveFromScheduler => "RemoveFromScheduler",
            Verb::ReturnToService => "ReturnToService",
            Verb::Comment => "Comment",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Session {
    pub session_id: u64,
    pub principal: String,
    pub tier: Tier,
    pub connected_at: u64,
}

/// Static credentials: `token<TAB>principal<TAB>tier` per line.
#[derive(Debug, Clone, Default)]
pub struct TokenTable {
    by_token: BTreeMap<String, (String, Tier)>,
}

impl TokenTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, token: &str, principal: &str, tier: Tier) {
        self.by_token
            .insert(token.to_owned(), (principal.to_owned(), tier));
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self, ServerError> {
        let mut table = Self::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: String| ServerError::TokenFile {
                line: i + 1,
                reason,
            };
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(bad(format!("expected 3 fields, got {}", f.len())));
            }
            table.insert(f[0], f[1], f[2].parse().map_err(bad)?);
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self, ServerError> {
        let f = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(f))
    }

    /// The credential must be a known token issued to `principal`.
    pub fn authenticate(&self, principal: &str, credential: &str) -> Option<Tier> {
        match self.by_token.get(credential) {
            Some((p, tier)) if p == principal => Some(*tier),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tier_matrix_is_monotone() {
        for verb in Verb::ALL {
            for pair in Tier::ALL.windows(2) {
                assert!(!pair[0].permits(verb) || pair[1].permits(verb), "{verb:?}");
            }
        }
        assert!(!Tier::Operator.permits(Verb::Reimage));
        assert!(Tier::Operator.permits(Verb::Comment));
        assert!(Verb::ALL.iter().all(|v| !Tier::Viewer.permits(*v)));
    }

    #[test]
    fn token_file() {
        let t = TokenTable::read(
            "# token\tprincipal\ttier\nabc\talice\tadmin\nxyz\tbob\tViewer\n".as_bytes(),
        )
        .unwrap();
        assert_eq!(t.authenticate("alice", "abc"), Some(Tier::Admin));
        assert_eq!(t.authenticate("bob", "abc"), None);
        assert_eq!(t.authenticate("bob", "nope"), None);
        assert!(TokenTable::read("abc\talice\n".as_bytes()).is_err());
    }
}
