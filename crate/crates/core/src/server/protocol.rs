//! Wire protocol: one JSON object per line, each with a `type` tag and a
//! `v` version field.
//!
//! Client to server:
//!
//! | type | fields |
//! |---|---|
//! | `Hello` | `principal`, `credential` |
//! | `Action` | `requestId`, `verb`, `target`, optional `comment` |
//! | `Pull` | `requestId`, `selector` = `{"kind": "User"\|"Job"\|"LoadAbove"\|"Status", "value": ...}` |
//! | `Replay` | `requestId`, `at`, `before`, `after` |
//!
//! Server to client:
//!
//! | type | fields |
//! |---|---|
//! | `AuthResult` | `ok`, and `tier` + `sessionId` or `reason` |
//! | `Frame` | `replay`, `frame` (a full frame object) |
//! | `ActionResult` | `requestId`, `actionId`, `outcome` = `{"status": "Executed"\|"Denied"\|"Failed", "reason"?}` |
//! | `PullResult` | `requestId`, `entities`, `coScheduled` = `[{jobId, user, hosts}]` |
//! | `AlertEvent` | `state` (`raised`\|`cleared`), `pointId`, `observed`, `timestamp`, `alert` when raised |
//! | `ReplayResult` | `requestId`, `frames` (sent after the replayed frames) |
//! | `Error` | `reason`; after a malformed or out-of-order message the server also closes the connection |
//!
//! Server messages are written in canonical form (sorted keys, rounded
//! floats), so a session transcript is reproducible byte for byte.

use serde::{Deserialize, Serialize};

use crate::baseline::{Alert, Color, Transition};
use crate::vizgen::{canonical_json, VizFrame};

use super::{Tier, Verb};

pub const PROTOCOL_VERSION: u32 = 1;

fn version() -> u32 {
    PROTOCOL_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value")]
pub enum Selector {
    User(String),
    Job(String),
    LoadAbove(f64),
    Status(Color),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all_fields = "camelCase")]
pub enum ClientMessage {
    Hello {
        #[serde(default = "version")]
        v: u32,
        principal: String,
        credential: String,
    },
    Action {
        #[serde(default = "version")]
        v: u32,
        request_id: u64,
        verb: Verb,
        target: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        comment: Option<String>,
    },
    Pull {
        #[serde(default = "version")]
        v: u32,
        request_id: u64,
        selector: Selector,
    },
    Replay {
        #[serde(default = "version")]
        v: u32,
        request_id: u64,
        at: u64,
        before: u64,
        after: u64,
    },
}

impl ClientMessage {
    pub fn hello(principal: &str, credential: &str) -> Self {
        Self::Hello {
            v: PROTOCOL_VERSION,
            principal: principal.into(),
            credential: credential.into(),
        }
    }

    pub fn action(request_id: u64, verb: Verb, target: &str, comment: Option<&str>) -> Self {
        Self::Action {
            v: PROTOCOL_VERSION,
            request_id,
            verb,
            target: target.into(),
            comment: comment.map(Into::into),
        }
    }

    pub fn pull(request_id: u64, selector: Selector) -> Self {
        Self::Pull {
            v: PROTOCOL_VERSION,
            request_id,
            selector,
        }
    }

    pub fn replay(request_id: u64, at: u64, before: u64, after: u64) -> Self {
        Self::Replay {
            v: PROTOCOL_VERSION,
            request_id,
            at,
            before,
            after,
        }
    }

    pub fn version(&self) -> u32 {
        match self {
            Self::Hello { v, .. }
            | Self::Action { v, .. }
            | Self::Pull { v, .. }
            | Self::Replay { v, .. } => *v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason")]
pub enum Outcome {
    Executed,
    Denied(String),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CoScheduledJob {
    pub job_id: String,
    pub user: String,
    /// How many of the matched hosts the job runs on.
    pub hosts: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all_fields = "camelCase")]
pub enum ServerMessage {
    AuthResult {
        v: u32,
        ok: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tier: Option<Tier>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        session_id: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
    },
    Frame {
        v: u32,
        replay: bool,
        frame: VizFrame,
    },
    ActionResult {
        v: u32,
        request_id: u64,
        action_id: u64,
        outcome: Outcome,
    },
    PullResult {
        v: u32,
        request_id: u64,
        entities: Vec<String>,
        co_scheduled: Vec<CoScheduledJob>,
    },
    AlertEvent {
        v: u32,
        state: String,
        point_id: String,
        observed: f64,
        timestamp: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alert: Option<Alert>,
    },
    ReplayResult {
        v: u32,
        request_id: u64,
        frames: u32,
    },
    Error {
        v: u32,
        reason: String,
    },
}

impl ServerMessage {
    pub fn error(reason: impl Into<String>) -> Self {
        Self::Error {
            v: PROTOCOL_VERSION,
            reason: reason.into(),
        }
    }

    pub fn alert_event(t: &Transition) -> Self {
        match t {
            Transition::Raised(a) => Self::AlertEvent {
                v: PROTOCOL_VERSION,
                state: "raised".into(),
                point_id: a.point_id.clone(),
                observed: a.observed,
                timestamp: a.timestamp,
                alert: Some(a.clone()),
            },
            Transition::Cleared {
                point_id,
                observed,
                timestamp,
            } => Self::AlertEvent {
                v: PROTOCOL_VERSION,
                state: "cleared".into(),
                point_id: point_id.clone(),
                observed: *observed,
                timestamp: *timestamp,
                alert: None,
            },
        }
    }

    /// Canonical line, newline included.
    pub fn encode(&self) -> Vec<u8> {
        canonical_json(self)
    }

    pub fn decode(line: &[u8]) -> Result<Self, serde_json::Error> {
        serde_json::from_slice(line)
    }
}

/// Wraps already-serialized frame bytes without re-encoding them, so clients
/// receive exactly the bytes the frame generator produced.
pub fn frame_message(frame_bytes: &[u8], replay: bool) -> Vec<u8> {
    let body = frame_bytes.strip_suffix(b"\n").unwrap_or(frame_bytes);
    let mut out = Vec::with_capacity(body.len() + 48);
    out.extend_from_slice(b"{\"frame\":");
    out.extend_from_slice(body);
    out.extend_from_slice(
        format!(",\"replay\":{replay},\"type\":\"Frame\",\"v\":{PROTOCOL_VERSION}}}\n").as_bytes(),
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vizgen::{serialize_frame, FrameStats};

    #[test]
    fn client_messages_round_trip() {
        let msgs = [
            ClientMessage::hello("alice", "t0k"),
            ClientMessage::action(
                3,
                Verb::Comment,
                "node0001",
                Some("memory leak, user notified"),
            ),
            ClientMessage::pull(4, Selector::Status(Color::Red)),
            ClientMessage::pull(5, Selector::LoadAbove(2.5)),
            ClientMessage::replay(6, 1000, 300, 300),
        ];
        for m in msgs {
            let text = serde_json::to_string(&m).unwrap();
            assert!(text.contains("\"v\":1"), "{text}");
            assert_eq!(serde_json::from_str::<ClientMessage>(&text).unwrap(), m);
        }
        let raw =
            r#"{"type":"Pull","v":1,"requestId":9,"selector":{"kind":"User","value":"alice"}}"#;
        assert_eq!(
            serde_json::from_str::<ClientMessage>(raw).unwrap(),
            ClientMessage::pull(9, Selector::User("alice".into()))
        );
        assert!(serde_json::from_str::<ClientMessage>(r#"{"type":"Nope","v":1}"#).is_err());
    }

    #[test]
    fn frame_message_embeds_frame_bytes() {
        let frame = VizFrame {
            v: 1,
            frame_id: 7,
            timestamp: 99,
            pod_cues: vec![],
            entities: vec![],
            active_alerts: vec![],
            stats: FrameStats {
                nodes_total: 0,
                nodes_red: 0,
                jobs_running: 0,
                total_kw: 1.5,
                pue: 1.25,
            },
        };
        let bytes = serialize_frame(&frame);
        let msg = frame_message(&bytes, true);
        let decoded = ServerMessage::decode(&msg).unwrap();
        assert_eq!(
            decoded,
            ServerMessage::Frame {
                v: 1,
                replay: true,
                frame: frame.clone()
            }
        );
        assert_eq!(decoded.encode(), msg);
        let outcome = serde_json::to_string(&Outcome::Denied("Viewer".into())).unwrap();
        assert_eq!(outcome, r#"{"status":"Denied","reason":"Viewer"}"#);
    }
}
