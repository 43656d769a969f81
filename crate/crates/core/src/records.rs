//! Collected data points: environmental sensor readings and node snapshots.

use serde::{Deserialize, Serialize};

/// One environmental data point from a poll cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorReading {
    pub source: String,
    pub point_id: String,
    /// UTC seconds.
    pub timestamp: u64,
    pub value: f64,
    pub unit: String,
}

/// A job's footprint on one node.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct JobSlot {
    pub job_id: String,
    pub user: String,
    pub cores: u32,
}

/// One node's IT and scheduler state as reported by its collector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub hostname: String,
    pub timestamp: u64,
    pub image_version: String,
    pub kernel_version: String,
    pub cpu_load: f64,
    pub mem_used_pct: f64,
    pub disk_used_pct: f64,
    pub total_cores: u32,
    pub scheduled_cores: u32,
    pub jobs: Vec<JobSlot>,
    pub ip: String,
    pub mac: String,
    /// Set when the node has stopped answering its collector.
    pub stale: bool,
    /// Components the node reports as failed (e.g. `disk0`).
    #[serde(default)]
    pub failed_components: Vec<String>,
}

impl NodeRecord {
    /// Scheduler bookkeeping is consistent and percentages are in range.
    pub fn is_consistent(&self) -> bool {
        let job_cores: u32 = self.jobs.iter().map(|j| j.cores).sum();
        job_cores == self.scheduled_cores
            && self.scheduled_cores <= self.total_cores
            && (0.0..=100.0).contains(&self.mem_used_pct)
            && (0.0..=100.0).contains(&self.disk_used_pct)
            && self.cpu_load.is_finite()
            && self.cpu_load >= 0.0
    }
}
