use std::path::PathBuf;
use std::process::Command;
use std::sync::{Arc, Mutex};

use thiserror::Error;

use super::Verb;
use crate::podsim::{SimError, Simulator};
use crate::records::NodeRecord;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ControlError {
    #[error("unknown target {0}")]
    UnknownTarget(String),
    #[error("adapter failure: {0}")]
    Adapter(String),
}

/// Carries operator actions out on real or simulated nodes.
pub trait NodeControl: Send {
    fn execute(&mut self, verb: Verb, host: &str) -> Result<(), ControlError>;

    /// Live state of the host, if the adapter can observe it.
    fn snapshot(&mut self, _host: &str) -> Option<NodeRecord> {
        None
    }
}

/// Applies actions to the simulator.
pub struct SimAdapter {
    sim: Arc<Mutex<Simulator>>,
}

impl SimAdapter {
    pub fn new(sim: Arc<Mutex<Simulator>>) -> Self {
        Self { sim }
    }
}

impl NodeControl for SimAdapter {
    fn execute(&mut self, verb: Verb, host: &str) -> Result<(), ControlError> {
        let mut sim = self
            .sim
            .lock()
            .map_err(|_| ControlError::Adapter("simulator lock poisoned".into()))?;
        let result = match verb {
            Verb::Reboot => sim.reboot(host),
            Verb::Reimage => sim.reimage(host),
            Verb::RemoveFromScheduler => sim.remove_from_scheduler(host),
            Verb::ReturnToService => sim.return_to_service(host),
            Verb::Comment => Ok(()),
        };
        result.map_err(|e| match e {
            SimError::UnknownHost(h) => ControlError::UnknownTarget(h),
            other => ControlError::Adapter(other.to_string()),
        })
    }

    fn snapshot(&mut self, host: &str) -> Option<NodeRecord> {
        self.sim.lock().ok()?.current_record(host)
    }
}

/// Runs `<program> <verb> <host>` for each action. Without a program it
/// refuses every action.
#[derive(Debug, Default)]
pub struct ShellAdapter {
    program: Option<PathBuf>,
}

impl ShellAdapter {
    pub fn disabled() -> Self {
        Self::default()
    }

    pub fn new(program: PathBuf) -> Self {
        Self {
            program: Some(program),
        }
    }
}

impl NodeControl for ShellAdapter {
    fn execute(&mut self, verb: Verb, host: &str) -> Result<(), ControlError> {
        if verb == Verb::Comment {
            return Ok(());
        }
        let Some(program) = &self.program else {
            return Err(ControlError::Adapter("shell adapter disabled".into()));
        };
        let status = Command::new(program)
            .arg(verb.as_str())
            .arg(host)
            .status()
            .map_err(|e| ControlError::Adapter(format!("{}: {e}", program.display())))?;
        if status.success() {
            Ok(())
        } else {
            Err(ControlError::Adapter(format!(
                "{} exited with {status}",
                program.display()
            )))
        }
    }
}
