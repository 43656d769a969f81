//! The single owner of server state. Everything that mutates it arrives as a
//! [`Command`] on one channel, so actions and frame publication are totally
//! ordered.

use std::collections::{BTreeMap, BTreeSet};
use std::net::{Shutdown, TcpStream};
use std::sync::mpsc::{self, Receiver, Sender, SyncSender, TrySendError};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use serde::Serialize;
use tracing::{debug, info, warn};

use super::protocol::{frame_message, CoScheduledJob, Outcome, Selector, ServerMessage};
use super::{
    AuditEntry, AuditLog, ControlError, NodeControl, NodeSnapshot, ServerError, Session, Verb,
};
use crate::baseline::{classify, missing_status, Baseline, Transition};
use crate::records::NodeRecord;
use crate::vizgen::VizFrame;

pub(super) type Outbox = SyncSender<Arc<Vec<u8>>>;

/// Which sessions a broadcast reached and which were cut off.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DeliveryReport {
    pub delivered: Vec<u64>,
    pub dropped: Vec<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PullAnswer {
    pub entities: Vec<String>,
    pub co_scheduled: Vec<CoScheduledJob>,
}

pub(super) enum Command {
    Register {
        session: Session,
        outbox: Outbox,
        conn: Option<TcpStream>,
    },
    Unregister(u64),
    Publish {
        frame: VizFrame,
        bytes: Arc<Vec<u8>>,
        records: Vec<NodeRecord>,
        reply: Sender<DeliveryReport>,
    },
    Alerts(Vec<Transition>),
    Action {
        session: Session,
        verb: Verb,
        target: String,
        comment: Option<String>,
        reply: Sender<(u64, Outcome)>,
    },
    Pull {
        selector: Selector,
        reply: Sender<PullAnswer>,
    },
    Audit(Sender<Vec<AuditEntry>>),
    Stop,
}

/// Nodes matching the selector in the latest frame's records, plus the other
/// jobs running on those nodes. Status selectors match against the frame's
/// entities, which include hosts missing from telemetry.
pub fn pull_query<'a>(
    frame: Option<&VizFrame>,
    records: impl IntoIterator<Item = &'a NodeRecord>,
    selector: &Selector,
) -> PullAnswer {
    let records: Vec<&NodeRecord> = records.into_iter().collect();
    let entities: BTreeSet<String> = match selector {
        Selector::User(u) => records
            .iter()
            .filter(|r| r.jobs.iter().any(|j| &j.user == u))
            .map(|r| r.hostname.clone())
            .collect(),
        Selector::Job(id) => records
            .iter()
            .filter(|r| r.jobs.iter().any(|j| &j.job_id == id))
            .map(|r| r.hostname.clone())
            .collect(),
        Selector::LoadAbove(x) => records
            .iter()
            .filter(|r| r.cpu_load > *x)
            .map(|r| r.hostname.clone())
            .collect(),
        Selector::Status(c) => frame
            .map(|f| {
                f.entities
                    .iter()
                    .filter(|e| e.color == *c)
                    .map(|e| e.entity_id.clone())
                    .collect()
            })
            .unwrap_or_default(),
    };
    let mut co: BTreeMap<(&str, &str), u32> = BTreeMap::new();
    for r in records.iter().filter(|r| entities.contains(&r.hostname)) {
        for j in &r.jobs {
            let matched = match selector {
                Selector::User(u) => &j.user == u,
                Selector::Job(id) => &j.job_id == id,
                _ => false,
            };
            if !matched {
                *co.entry((&j.job_id, &j.user)).or_default() += 1;
            }
        }
    }
    PullAnswer {
        entities: entities.into_iter().collect(),
        co_scheduled: co
            .into_iter()
            .map(|((job_id, user), hosts)| CoScheduledJob {
                job_id: job_id.into(),
                user: user.into(),
                hosts,
            })
            .collect(),
    }
}

struct Slot {
    outbox: Outbox,
    conn: Option<TcpStream>,
}

struct Owner {
    baseline: Arc<Baseline>,
    adapter: Box<dyn NodeControl>,
    audit: AuditLog,
    clients: BTreeMap<u64, Slot>,
    frame: Option<(VizFrame, Arc<Vec<u8>>)>,
    records: BTreeMap<String, NodeRecord>,
    next_action: u64,
}

impl Owner {
    /// Simulation time of the latest frame, wall-clock time before the first.
    fn now(&self) -> u64 {
        match &self.frame {
            Some((f, _)) => f.timestamp,
            None => super::unix_now(),
        }
    }

    fn send(&mut self, msg: Arc<Vec<u8>>) -> DeliveryReport {
        let mut report = DeliveryReport::default();
        for (&id, slot) in &self.clients {
            match slot.outbox.try_send(msg.clone()) {
                Ok(()) => report.delivered.push(id),
                Err(TrySendError::Full(_)) => {
                    warn!(session = id, "client queue full, disconnecting");
                    report.dropped.push(id);
                }
                Err(TrySendError::Disconnected(_)) => report.dropped.push(id),
            }
        }
        for id in &report.dropped {
            if let Some(slot) = self.clients.remove(id) {
                if let Some(c) = slot.conn {
                    let _ = c.shutdown(Shutdown::Both);
                }
            }
        }
        report
    }

    fn action(
        &mut self,
        session: &Session,
        verb: Verb,
        target: &str,
        comment: Option<String>,
    ) -> (u64, Outcome) {
        self.next_action += 1;
        let action_id = self.next_action;
        let timestamp = self.now();
        let record = self
            .adapter
            .snapshot(target)
            .or_else(|| self.records.get(target).cloned());
        let known = record.is_some() || self.baseline.hosts().iter().any(|h| h.hostname == target);
        let status = match &record {
            Some(r) => Some(classify(r, &self.baseline)),
            None if known => Some(missing_status(target)),
            None => None,
        };
        let outcome = if !session.tier.permits(verb) {
            Outcome::Denied(format!("{:?} may not {}", session.tier, verb.as_str()))
        } else if !known {
            Outcome::Failed(ControlError::UnknownTarget(target.into()).to_string())
        } else if verb == Verb::Comment {
            Outcome::Executed
        } else {
            match self.adapter.execute(verb, target) {
                Ok(()) => Outcome::Executed,
                Err(e) => Outcome::Failed(e.to_string()),
            }
        };
        info!(action_id, actor = %session.principal, verb = verb.as_str(), target, ?outcome, "action");
        self.audit.append(AuditEntry {
            action_id,
            actor: session.principal.clone(),
            tier: session.tier,
            verb,
            target: target.into(),
            comment,
            node_snapshot: NodeSnapshot { record, status },
            outcome: outcome.clone(),
            timestamp,
        });
        (action_id, outcome)
    }

    fn run(mut self, commands: Receiver<Command>) {
        for cmd in commands {
            match cmd {
                Command::Register {
                    session,
                    outbox,
                    conn,
                } => {
                    debug!(session = session.session_id, principal = %session.principal, "registered");
                    if let Some((_, bytes)) = &self.frame {
                        let _ = outbox.try_send(Arc::new(frame_message(bytes, false)));
                    }
                    self.clients
                        .insert(session.session_id, Slot { outbox, conn });
                }
                Command::Unregister(id) => {
                    self.clients.remove(&id);
                }
                Command::Publish {
                    frame,
                    bytes,
                    records,
                    reply,
                } => {
                    self.records = records
                        .into_iter()
                        .map(|r| (r.hostname.clone(), r))
                        .collect();
                    let msg = Arc::new(frame_message(&bytes, false));
                    self.frame = Some((frame, bytes));
                    let _ = reply.send(self.send(msg));
                }
                Command::Alerts(transitions) => {
                    for t in &transitions {
                        self.send(Arc::new(ServerMessage::alert_event(t).encode()));
                    }
                }
                Command::Action {
                    session,
                    verb,
                    target,
                    comment,
                    reply,
                } => {
                    let _ = reply.send(self.action(&session, verb, &target, comment));
                }
                Command::Pull { selector, reply } => {
                    let frame = self.frame.as_ref().map(|(f, _)| f);
                    let _ = reply.send(pull_query(frame, self.records.values(), &selector));
                }
                Command::Audit(reply) => {
                    let _ = reply.send(self.audit.entries().to_vec());
                }
                Command::Stop => break,
            }
        }
        for slot in self.clients.values() {
            if let Some(c) = &slot.conn {
                let _ = c.shutdown(Shutdown::Both);
            }
        }
    }
}

/// Cloneable handle to the owner thread; the pipeline publishes through it
/// and in-process callers can act and pull without a socket.
#[derive(Clone)]
pub struct AuthorityHandle {
    tx: Sender<Command>,
}

impl AuthorityHandle {
    pub(super) fn spawn(
        baseline: Arc<Baseline>,
        adapter: Box<dyn NodeControl>,
        audit: AuditLog,
    ) -> (Self, JoinHandle<()>) {
        let (tx, rx) = mpsc::channel();
        let owner = Owner {
            baseline,
            adapter,
            audit,
            clients: BTreeMap::new(),
            frame: None,
            records: BTreeMap::new(),
            next_action: 0,
        };
        let join = thread::Builder::new()
            .name("authority".into())
            .spawn(move || owner.run(rx))
            .expect("spawn authority thread");
        (Self { tx }, join)
    }

    pub(super) fn command(&self, cmd: Command) -> Result<(), ServerError> {
        self.tx.send(cmd).map_err(|_| ServerError::Closed)
    }

    fn ask<T>(&self, build: impl FnOnce(Sender<T>) -> Command) -> Result<T, ServerError> {
        let (tx, rx) = mpsc::channel();
        self.command(build(tx))?;
        rx.recv().map_err(|_| ServerError::Closed)
    }

    /// Broadcasts a frame to every connected session. `records` are the node
    /// records the frame was built from; pull queries run against them.
    pub fn publish(
        &self,
        frame: &VizFrame,
        bytes: Vec<u8>,
        records: &[NodeRecord],
    ) -> Result<DeliveryReport, ServerError> {
        self.ask(|reply| Command::Publish {
            frame: frame.clone(),
            bytes: Arc::new(bytes),
            records: records.to_vec(),
            reply,
        })
    }

    pub fn publish_alerts(&self, transitions: &[Transition]) -> Result<(), ServerError> {
        if transitions.is_empty() {
            return Ok(());
        }
        self.command(Command::Alerts(transitions.to_vec()))
    }

    /// Returns the action id and its outcome. Every call is audited.
    pub fn handle_action(
        &self,
        session: &Session,
        verb: Verb,
        target: &str,
        comment: Option<&str>,
    ) -> Result<(u64, Outcome), ServerError> {
        self.ask(|reply| Command::Action {
            session: session.clone(),
            verb,
            target: target.into(),
            comment: comment.map(Into::into),
            reply,
        })
    }

    pub fn pull(&self, selector: Selector) -> Result<PullAnswer, ServerError> {
        self.ask(|reply| Command::Pull { selector, reply })
    }

    pub fn audit_entries(&self) -> Result<Vec<AuditEntry>, ServerError> {
        self.ask(Command::Audit)
    }

    pub(super) fn stop(&self) {
        let _ = self.tx.send(Command::Stop);
    }
}
