use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tracing::error;

use super::{Outcome, Tier, Verb};
use crate::baseline::NodeStatus;
use crate::records::NodeRecord;

/// Target state at the moment the action was issued. Both halves are absent
/// for an unknown target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NodeSnapshot {
    pub record: Option<NodeRecord>,
    pub status: Option<NodeStatus>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AuditEntry {
    pub action_id: u64,
    pub actor: String,
    pub tier: Tier,
    pub verb: Verb,
    pub target: String,
    pub comment: Option<String>,
    pub node_snapshot: NodeSnapshot,
    pub outcome: Outcome,
    pub timestamp: u64,
}

/// Append-only audit trail. Entries are kept in memory and, when a path is
/// given, appended to it as JSON lines and flushed one by one.
#[derive(Debug, Default)]
pub struct AuditLog {
    path: Option<PathBuf>,
    file: Option<File>,
    entries: Vec<AuditEntry>,
}

impl AuditLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            path: Some(path.to_owned()),
            file: Some(file),
            entries: Vec::new(),
        })
    }

    pub fn append(&mut self, entry: AuditEntry) {
        if let Some(f) = &mut self.file {
            let mut line = serde_json::to_vec(&entry).expect("audit entries serialize");
            line.push(b'\n');
            if let Err(e) = f.write_all(&line).and_then(|_| f.flush()) {
                error!(path = ?self.path, "audit append failed: {e}");
            }
        }
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[AuditEntry] {
        &self.entries
    }

    pub fn read(path: &Path) -> std::io::Result<Vec<AuditEntry>> {
        let f = File::open(path)?;
        let mut out = Vec::new();
        for line in BufReader::new(f).lines() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            out.push(
                serde_json::from_str(&line)
                    .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?,
            );
        }
        Ok(out)
    }
}
